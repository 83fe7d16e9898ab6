//! Averaged perceptron part-of-speech tagger.
//!
//! Greedy left-to-right decoding over sparse indicator features: the word,
//! its suffixes up to three characters, the neighbouring words and the two
//! previously predicted tags. Weights are averaged over every training
//! instance, which keeps the final model stable.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, TaggedSentence};

/// Anything that assigns one fine-grained tag per token.
pub trait PosTagger: Sync {
    fn tag_tokens(&self, tokens: &[String]) -> Vec<String>;
}

const START: &str = "<s>";
const END: &str = "</s>";

fn features(tokens: &[String], i: usize, prev: &str, prev2: &str) -> Vec<String> {
    let w = tokens[i].as_str();
    let chars: Vec<char> = w.chars().collect();
    let mut f = Vec::with_capacity(12);
    f.push("bias".to_string());
    f.push(format!("w={w}"));
    for k in 1..=3 {
        if chars.len() >= k {
            let s: String = chars[chars.len() - k..].iter().collect();
            f.push(format!("s{k}={s}"));
        }
    }
    if let Some(c) = chars.first() {
        f.push(format!("p1={c}"));
    }
    f.push(format!("pw={}", if i > 0 { tokens[i - 1].as_str() } else { START }));
    f.push(format!("nw={}", tokens.get(i + 1).map_or(END, String::as_str)));
    f.push(format!("pt={prev}"));
    f.push(format!("pt2={prev2}|{prev}"));
    f.push(format!("pt+w={prev}|{w}"));
    f
}

#[derive(Debug, Clone, Default)]
struct Slot {
    weight: f64,
    total: f64,
    stamp: u64,
}

/// Trained tagger. Classes are ordered by training frequency, most frequent
/// first, and score ties resolve to the earlier class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptronTagger {
    classes: Vec<String>,
    weights: BTreeMap<String, Vec<f64>>,
}

impl PerceptronTagger {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    fn predict(&self, feats: &[String]) -> usize {
        let mut scores = vec![0.0; self.classes.len()];
        for f in feats {
            if let Some(w) = self.weights.get(f) {
                for (s, x) in scores.iter_mut().zip(w) {
                    *s += x;
                }
            }
        }
        argmax(&scores)
    }

    /// Tags a sentence; errors on empty input.
    pub fn tag(&self, tokens: &[String]) -> Result<TaggedSentence, CorpusError> {
        if tokens.is_empty() {
            return Err(CorpusError::EmptyInput("cannot tag an empty sentence".into()));
        }
        let tags = self.tag_tokens(tokens);
        Ok(TaggedSentence {
            tokens: tokens.to_vec(),
            tags,
        })
    }

    pub fn accuracy(&self, corpus: &[TaggedSentence]) -> f64 {
        let mut right = 0usize;
        let mut total = 0usize;
        for s in corpus {
            let guess = self.tag_tokens(&s.tokens);
            right += guess.iter().zip(&s.tags).filter(|(a, b)| a == b).count();
            total += s.tags.len();
        }
        if total == 0 {
            0.0
        } else {
            right as f64 / total as f64
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let json = serde_json::to_string(self).map_err(|e| CorpusError::Format(e.to_string()))?;
        fs::write(path, json).map_err(|e| CorpusError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        let t: PerceptronTagger =
            serde_json::from_str(&text).map_err(|e| CorpusError::Format(format!("{}: {e}", path.display())))?;
        if t.classes.is_empty() || t.weights.values().any(|w| w.len() != t.classes.len()) {
            return Err(CorpusError::Format(format!("{}: inconsistent tagger weights", path.display())));
        }
        Ok(t)
    }
}

impl PosTagger for PerceptronTagger {
    fn tag_tokens(&self, tokens: &[String]) -> Vec<String> {
        let mut prev = START.to_string();
        let mut prev2 = START.to_string();
        let mut out = Vec::with_capacity(tokens.len());
        for i in 0..tokens.len() {
            let c = self.predict(&features(tokens, i, &prev, &prev2));
            let tag = self.classes[c].clone();
            prev2 = std::mem::replace(&mut prev, tag.clone());
            out.push(tag);
        }
        out
    }
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Trains a tagger. Sentence order is shuffled each epoch with `seed`, so the
/// result is a pure function of `(corpus, epochs, seed)`.
pub fn train_perceptron_tagger(
    corpus: &[TaggedSentence],
    epochs: usize,
    seed: u64,
) -> Result<PerceptronTagger, CorpusError> {
    if corpus.iter().all(|s| s.tokens.is_empty()) {
        return Err(CorpusError::EmptyInput("tagger training corpus is empty".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in corpus {
        if s.tokens.len() != s.tags.len() {
            return Err(CorpusError::Validation(format!(
                "sentence has {} tokens but {} tags",
                s.tokens.len(),
                s.tags.len()
            )));
        }
        for t in &s.tags {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut classes: Vec<(&str, usize)> = counts.into_iter().collect();
    classes.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let classes: Vec<String> = classes.into_iter().map(|(c, _)| c.to_string()).collect();
    let class_id: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let n_classes = classes.len();

    let mut slots: HashMap<String, Vec<Slot>> = HashMap::new();
    let mut instances: u64 = 0;
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &si in &order {
            let s = &corpus[si];
            let mut prev = START.to_string();
            let mut prev2 = START.to_string();
            for i in 0..s.tokens.len() {
                let feats = features(&s.tokens, i, &prev, &prev2);
                let mut scores = vec![0.0; n_classes];
                for f in &feats {
                    if let Some(w) = slots.get(f) {
                        for (sc, slot) in scores.iter_mut().zip(w) {
                            *sc += slot.weight;
                        }
                    }
                }
                let guess = argmax(&scores);
                let truth = class_id[s.tags[i].as_str()];
                instances += 1;
                if guess != truth {
                    for f in &feats {
                        let w = slots.entry(f.clone()).or_insert_with(|| vec![Slot::default(); n_classes]);
                        for (c, delta) in [(truth, 1.0), (guess, -1.0)] {
                            let slot = &mut w[c];
                            slot.total += (instances - slot.stamp) as f64 * slot.weight;
                            slot.stamp = instances;
                            slot.weight += delta;
                        }
                    }
                }
                prev2 = std::mem::replace(&mut prev, s.tags[i].clone());
            }
        }
    }

    let weights = slots
        .into_iter()
        .filter_map(|(f, w)| {
            let avg: Vec<f64> = w
                .into_iter()
                .map(|slot| {
                    let total = slot.total + (instances - slot.stamp) as f64 * slot.weight;
                    // round to keep the JSON model compact and stable
                    ((total / instances as f64) * 1e6).round() / 1e6
                })
                .collect();
            avg.iter().any(|&x| x != 0.0).then_some((f, avg))
        })
        .collect();
    Ok(PerceptronTagger { classes, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(pairs: &[(&str, &str)]) -> TaggedSentence {
        TaggedSentence {
            tokens: pairs.iter().map(|p| p.0.to_string()).collect(),
            tags: pairs.iter().map(|p| p.1.to_string()).collect(),
        }
    }

    fn tiny_corpus() -> Vec<TaggedSentence> {
        vec![
            sent(&[("the", "DT"), ("dog", "NN"), ("barked", "VBD"), (".", ".")]),
            sent(&[("the", "DT"), ("cat", "NN"), ("slept", "VBD"), (".", ".")]),
            sent(&[("the", "DT"), ("dogs", "NNS"), ("will", "MD"), ("bark", "VB"), (".", ".")]),
        ]
    }

    #[test]
    fn zero_epochs_predicts_most_frequent_tag() {
        let t = train_perceptron_tagger(&tiny_corpus(), 0, 1).unwrap();
        assert!(t.weights.is_empty());
        // DT and "." both appear 3 times; "." sorts first.
        let tags = t.tag_tokens(&["anything".to_string(), "else".to_string()]);
        assert_eq!(tags, vec![".", "."]);
    }

    #[test]
    fn learns_tiny_corpus_and_is_deterministic() {
        let a = train_perceptron_tagger(&tiny_corpus(), 10, 7).unwrap();
        let b = train_perceptron_tagger(&tiny_corpus(), 10, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.accuracy(&tiny_corpus()), 1.0);
        let toks: Vec<String> = ["the", "dog", "barked"].iter().map(|s| s.to_string()).collect();
        assert_eq!(a.tag_tokens(&toks), a.tag_tokens(&toks));
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(train_perceptron_tagger(&[], 3, 0).is_err());
        let t = train_perceptron_tagger(&tiny_corpus(), 1, 0).unwrap();
        assert!(t.tag(&[]).is_err());
        let one = t.tag(&["yes".to_string()]).unwrap();
        assert_eq!(one.tags.len(), 1);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tagger.json");
        let t = train_perceptron_tagger(&tiny_corpus(), 5, 3).unwrap();
        t.save(&p).unwrap();
        assert_eq!(PerceptronTagger::load(&p).unwrap(), t);
    }
}
