//! Word vocabulary with reserved special tokens.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

pub type TokenId = u32;

pub const SOS: &str = "<sos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";
pub const PAD: &str = "<pad>";

pub const SOS_ID: TokenId = 0;
pub const EOS_ID: TokenId = 1;
pub const UNK_ID: TokenId = 2;
pub const PAD_ID: TokenId = 3;

pub const RESERVED: [&str; 4] = [SOS, EOS, UNK, PAD];

/// Default padded sequence length.
pub const DEFAULT_MAX_LEN: usize = 74;

#[derive(Debug, thiserror::Error)]
pub enum VocabError {
    #[error("sentence of {words} words needs {needed} slots but max_len is {max_len}")]
    SentenceTooLong { words: usize, needed: usize, max_len: usize },
    #[error("vocabulary file is malformed: {0}")]
    Malformed(String),
    #[error("token id {0} is outside the vocabulary")]
    UnknownId(TokenId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Builds a vocabulary from the reserved tokens followed by `words` in order.
    /// Duplicates and reserved names inside `words` are skipped.
    pub fn from_words<I, S>(words: I) -> Vocabulary
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in RESERVED {
            vocab.push(t.to_string());
        }
        for w in words {
            vocab.push(w.into());
        }
        vocab
    }

    fn push(&mut self, token: String) {
        if self.index.contains_key(&token) {
            return;
        }
        self.index.insert(token.clone(), self.tokens.len() as TokenId);
        self.tokens.push(token);
    }

    /// Counts case-sensitive word types and keeps those seen at least `min_count`
    /// times, ordered by descending frequency then byte order.
    pub fn build<'a, I>(sentences: I, min_count: usize) -> Vocabulary
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for sentence in sentences {
            for w in sentence {
                *counts.entry(w.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count.max(1))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Vocabulary::from_words(kept.into_iter().map(|(w, _)| w.to_string()))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn ids<S: AsRef<str>>(&self, words: &[S]) -> Vec<TokenId> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }

    /// `[<sos>, words..., <eos>]` right-padded with `<pad>` to `max_len`.
    pub fn encode<S: AsRef<str>>(&self, words: &[S], max_len: usize) -> Result<Vec<TokenId>, VocabError> {
        let needed = words.len() + 2;
        if needed > max_len {
            return Err(VocabError::SentenceTooLong {
                words: words.len(),
                needed,
                max_len,
            });
        }
        let mut out = Vec::with_capacity(max_len);
        out.push(SOS_ID);
        out.extend(words.iter().map(|w| self.id(w.as_ref())));
        out.push(EOS_ID);
        out.resize(max_len, PAD_ID);
        Ok(out)
    }

    /// Inverse of [`encode`](Self::encode): drops `<sos>`, `<eos>` and `<pad>`.
    pub fn decode(&self, ids: &[TokenId]) -> Result<Vec<String>, VocabError> {
        ids.iter()
            .filter(|&&id| !matches!(id, SOS_ID | EOS_ID | PAD_ID))
            .map(|&id| {
                self.token(id)
                    .map(str::to_string)
                    .ok_or(VocabError::UnknownId(id))
            })
            .collect()
    }

    /// Hex SHA-256 over the newline-joined token list.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.tokens {
            hasher.update(t.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.tokens {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), VocabError> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Reads `vocab.txt` (line number = id). The reserved tokens must lead.
    pub fn load(path: &Path) -> Result<Vocabulary, VocabError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let tokens = file.lines().collect::<Result<Vec<_>, _>>()?;
        Vocabulary::from_token_list(tokens)
    }

    pub fn from_token_list(tokens: Vec<String>) -> Result<Vocabulary, VocabError> {
        if tokens.len() < RESERVED.len() || tokens[..4] != RESERVED {
            return Err(VocabError::Malformed(
                "first four tokens must be <sos>, <eos>, <unk>, <pad>".into(),
            ));
        }
        let vocab = Vocabulary::from_words(tokens.iter().skip(4).cloned());
        if vocab.len() != tokens.len() {
            return Err(VocabError::Malformed("duplicate tokens".into()));
        }
        Ok(vocab)
    }
}
