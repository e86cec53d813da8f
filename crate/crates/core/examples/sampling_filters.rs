//! Shows temperature, top-k and nucleus filtering on a small distribution.

use cc_autocomplete::generate::{apply_filters, apply_temperature, filter_top_k, filter_top_p};

fn show(label: &str, d: &[f64]) {
    let cells: Vec<String> = d.iter().map(|p| format!("{p:.4}")).collect();
    println!("{label:<22} [{}]", cells.join(", "));
}

fn main() {
    let d = [0.5, 0.3, 0.2];
    show("input", &d);
    show("T = 0.5", &apply_temperature(&d, 0.5));
    show("T = 2.0", &apply_temperature(&d, 2.0));
    show("top_k = 2", &filter_top_k(&d, 2));
    show("top_p = 0.7", &filter_top_p(&d, 0.7));
    show("T=0.7, k=2, p=0.9", &apply_filters(&d, 0.7, Some(2), Some(0.9)));
}
