#!/usr/bin/env python3
"""Synthetic, de-identified-looking triage complaints for demos and tests.

Nothing here comes from a real patient record.
"""
import random
import re
from pathlib import Path

HERE = Path(__file__).parent
rng = random.Random(11)

SIDE = ["L", "R", "left", "right", "bilateral"]
SITE = ["knee", "ankle", "great toe", "foot", "wrist", "elbow", "hand", "1st MTP", "midfoot", "heel"]
SYMPTOM = ["pain", "swelling", "redness", "pain and swelling", "pain, redness and swelling", "warmth and tenderness"]
ONSET = ["since yesterday", "x 2 days", "x 3 days", "for 1 week", "since <<TIME>>", "starting <<DATE>>",
         "since this morning", "after dinner last night", "x several days"]
OPENERS = ["Pt reports", "Pt c/o", "Reports", "Pt states", "Complains of", "Pt presents with", "Pt has"]
EXTRAS = [
    "Unable to bear weight on the {side} foot.",
    "Took ibuprofen at home without relief.",
    "Denies fever, chills or recent trauma.",
    "Reports having chills, fever, and nausea overnight.",
    "Sent by PCP for evaluation of possible gout flare.",
    "Seen at <<HOSPITAL>> for the same complaint last month.",
    "States pain is 8/10 and worse with walking.",
    "Pt states the joint is hot to touch and very tender.",
    "Approx 2 episodes of vomiting today.",
    "Dr. advised colchicine but pt ran out of medication.",
    "Pain woke pt from sleep at <<TIME>>.",
    "No relief with ice and elevation at home.",
]
HISTORY = ["PMH gout, HTN, DM.", "PMHx gout, CKD.", "Hx of gout.", "PSHx R knee replacement.",
           "SHx EtOH use.", "FHx gout.", "hx HTN and HLD.", "PMH: CHF, gout on allopurinol."]


def complaint():
    side = rng.choice(SIDE)
    parts = [f"{rng.choice(OPENERS)} {side} {rng.choice(SITE)} {rng.choice(SYMPTOM)} {rng.choice(ONSET)}."]
    for extra in rng.sample(EXTRAS, rng.randint(0, 3)):
        parts.append(extra.format(side=rng.choice(["left", "right"])))
    if rng.random() < 0.2:
        parts.append(rng.choice(["Denies trauma.", "24 weeks OB.", "Denies nausea."]))
    text = " ".join(parts)
    if rng.random() < 0.45:
        text += " " + rng.choice(HISTORY)
    return text


def flag():
    return rng.choice(["Y", "N", "U", ""])


def main():
    rows = [complaint() for _ in range(600)]
    with open(HERE / "demo_cc.tsv", "w") as f:
        f.write("Chief Complaint\tPredict\tConsensus\n")
        for r in rows:
            f.write(f"{r}\t{flag()}\t{flag()}\n")
    words = set()
    for r in rows + EXTRAS + HISTORY:
        for w in r.split():
            w = w.strip(",.;:!?\"'()[]{}-*")
            if w:
                words.add(w)
    for extra in ("<unk>", "reports", "fever", "chills", "nausea", "have"):
        words.add(extra)
    dim = 16
    with open(HERE / "demo_embeddings.tsv", "w") as f:
        f.write(f"#dim {dim}\n")
        for w in sorted(words):
            # case variants of one word share most of their direction
            base = random.Random(w.lower())
            tweak = random.Random(w)
            vec = [base.gauss(0, 1) + 0.1 * tweak.gauss(0, 1) for _ in range(dim)]
            f.write(w + "\t" + " ".join(f"{x:.5f}" for x in vec) + "\n")


if __name__ == "__main__":
    main()
