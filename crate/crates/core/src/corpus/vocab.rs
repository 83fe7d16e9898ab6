use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::CorpusError;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;

pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Word <-> id map shared by the keyword encoder and the decoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordVocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl WordVocabulary {
    /// Reserved ids only.
    pub fn empty() -> Self {
        let words: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let index = words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
        WordVocabulary { words, index }
    }

    /// Builds from token counts: descending frequency, ties alphabetical,
    /// dropping tokens seen fewer than `min_count` times.
    pub fn from_counts<'a>(tokens: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        let mut entries: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(w, c)| c >= min_count && !RESERVED.contains(&w))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut v = Self::empty();
        for (w, _) in entries {
            v.push(w);
        }
        v
    }

    /// Builds from an ordered word list (ids start after the reserved ones).
    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Result<Self, CorpusError> {
        let mut v = Self::empty();
        for w in words {
            let w = w.as_ref();
            if v.index.contains_key(w) {
                return Err(CorpusError::Vocabulary(format!("duplicate word {w:?}")));
            }
            v.push(w);
        }
        Ok(v)
    }

    fn push(&mut self, w: &str) {
        self.index.insert(w.to_string(), self.words.len());
        self.words.push(w.to_string());
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= RESERVED.len()
    }

    /// Id of `word`, or `UNK`.
    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, id: usize) -> &str {
        self.words.get(id).map(String::as_str).unwrap_or(RESERVED[UNK])
    }

    /// Non-reserved words in id order.
    pub fn words(&self) -> &[String] {
        &self.words[RESERVED.len()..]
    }

    /// One token per line; line `n` is id `n + 4`.
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = String::new();
        for w in self.words() {
            out.push_str(w);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| CorpusError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        let words: Vec<&str> = text.lines().collect();
        Self::from_words(&words)
    }
}

impl Default for WordVocabulary {
    fn default() -> Self {
        Self::empty()
    }
}
