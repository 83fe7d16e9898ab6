use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Penn Treebank tag set with its coarse universal mapping.
const PENN_TO_UNIVERSAL: [(&str, &str); 45] = [
    ("CC", "CONJ"),
    ("CD", "NUM"),
    ("DT", "DET"),
    ("EX", "DET"),
    ("FW", "X"),
    ("IN", "ADP"),
    ("JJ", "ADJ"),
    ("JJR", "ADJ"),
    ("JJS", "ADJ"),
    ("LS", "X"),
    ("MD", "VERB"),
    ("NN", "NOUN"),
    ("NNS", "NOUN"),
    ("NNP", "NOUN"),
    ("NNPS", "NOUN"),
    ("PDT", "DET"),
    ("POS", "PRT"),
    ("PRP", "PRON"),
    ("PRP$", "PRON"),
    ("RB", "ADV"),
    ("RBR", "ADV"),
    ("RBS", "ADV"),
    ("RP", "PRT"),
    ("SYM", "X"),
    ("TO", "PRT"),
    ("UH", "X"),
    ("VB", "VERB"),
    ("VBD", "VERB"),
    ("VBG", "VERB"),
    ("VBN", "VERB"),
    ("VBP", "VERB"),
    ("VBZ", "VERB"),
    ("WDT", "DET"),
    ("WP", "PRON"),
    ("WP$", "PRON"),
    ("WRB", "ADV"),
    ("#", "PUNCT"),
    ("$", "PUNCT"),
    (".", "PUNCT"),
    (",", "PUNCT"),
    (":", "PUNCT"),
    ("-LRB-", "PUNCT"),
    ("-RRB-", "PUNCT"),
    ("``", "PUNCT"),
    ("''", "PUNCT"),
];

const UNIVERSAL: [&str; 12] = [
    "NOUN", "VERB", "ADJ", "ADV", "PRON", "DET", "ADP", "NUM", "CONJ", "PRT", "PUNCT", "X",
];

/// Universal categories whose words become keywords.
pub const CONTENT_UNIVERSAL: [&str; 4] = ["NOUN", "VERB", "ADJ", "ADV"];

/// Fine-grained and universal tags in one id space: fine tags first, then
/// universal tags. Every fine tag maps to exactly one universal tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagVocabulary {
    fine: Vec<String>,
    universal: Vec<String>,
    fine_to_universal: Vec<usize>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TagVocabulary {
    /// The 45 Penn tags plus 12 universal tags (57 in total).
    pub fn penn() -> Self {
        let mapping: Vec<(String, String)> = PENN_TO_UNIVERSAL
            .iter()
            .map(|(f, u)| (f.to_string(), u.to_string()))
            .collect();
        let universal: Vec<String> = UNIVERSAL.iter().map(|s| s.to_string()).collect();
        Self::new(mapping, universal).expect("built-in tag table is consistent")
    }

    /// Builds a vocabulary from `(fine, universal)` pairs and the universal tag list.
    pub fn new(fine_to_universal: Vec<(String, String)>, universal: Vec<String>) -> Result<Self, CorpusError> {
        let mut vocab = TagVocabulary {
            fine: Vec::new(),
            universal: Vec::new(),
            fine_to_universal: Vec::new(),
            index: HashMap::new(),
        };
        let mut targets = Vec::new();
        for (f, u) in fine_to_universal {
            if vocab.index.contains_key(&f) {
                return Err(CorpusError::Vocabulary(format!("duplicate tag {f}")));
            }
            vocab.index.insert(f.clone(), vocab.fine.len());
            vocab.fine.push(f);
            targets.push(u);
        }
        for u in universal {
            if vocab.index.contains_key(&u) {
                return Err(CorpusError::Vocabulary(format!("duplicate tag {u}")));
            }
            vocab.index.insert(u.clone(), vocab.fine.len() + vocab.universal.len());
            vocab.universal.push(u);
        }
        for (f, u) in vocab.fine.iter().zip(&targets) {
            match vocab.universal.iter().position(|x| x == u) {
                Some(p) => vocab.fine_to_universal.push(vocab.fine.len() + p),
                None => {
                    return Err(CorpusError::Vocabulary(format!(
                        "fine tag {f} maps to unknown universal tag {u}"
                    )))
                }
            }
        }
        if vocab.len() < 2 {
            return Err(CorpusError::Vocabulary("tag vocabulary needs at least two tags".into()));
        }
        Ok(vocab)
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .fine
            .iter()
            .chain(&self.universal)
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    /// Restores the lookup table after deserialization.
    pub fn reindexed(mut self) -> Self {
        self.rebuild_index();
        self
    }

    pub fn len(&self) -> usize {
        self.fine.len() + self.universal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fine_tags(&self) -> &[String] {
        &self.fine
    }

    pub fn universal_tags(&self) -> &[String] {
        &self.universal
    }

    pub fn id(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn fine_id(&self, tag: &str) -> Option<usize> {
        self.id(tag).filter(|&i| i < self.fine.len())
    }

    pub fn universal_id(&self, tag: &str) -> Option<usize> {
        self.id(tag).filter(|&i| i >= self.fine.len())
    }

    pub fn tag(&self, id: usize) -> Option<&str> {
        if id < self.fine.len() {
            Some(&self.fine[id])
        } else {
            self.universal.get(id - self.fine.len()).map(String::as_str)
        }
    }

    /// Universal id for any tag id; universal ids map to themselves.
    pub fn to_universal(&self, id: usize) -> Option<usize> {
        if id < self.fine.len() {
            Some(self.fine_to_universal[id])
        } else if id < self.len() {
            Some(id)
        } else {
            None
        }
    }

    pub fn universal_of(&self, tag: &str) -> Option<&str> {
        self.id(tag)
            .and_then(|i| self.to_universal(i))
            .and_then(|u| self.tag(u))
    }

    /// Whether a tag belongs to the noun/verb/adjective/adverb classes.
    pub fn is_content(&self, tag: &str) -> bool {
        self.universal_of(tag)
            .is_some_and(|u| CONTENT_UNIVERSAL.contains(&u))
    }

    pub fn is_content_id(&self, id: usize) -> bool {
        self.tag(id).is_some_and(|t| self.is_content(t))
    }
}

impl Default for TagVocabulary {
    fn default() -> Self {
        Self::penn()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penn_union_has_57_tags() {
        let v = TagVocabulary::penn();
        assert_eq!(v.fine_tags().len(), 45);
        assert_eq!(v.universal_tags().len(), 12);
        assert_eq!(v.len(), 57);
    }

    #[test]
    fn mapping_is_total() {
        let v = TagVocabulary::penn();
        for t in v.fine_tags() {
            assert!(v.universal_of(t).is_some(), "{t}");
        }
        assert_eq!(v.universal_of("NNS"), Some("NOUN"));
        assert_eq!(v.universal_of("VBD"), Some("VERB"));
        assert_eq!(v.universal_of("NOUN"), Some("NOUN"));
        assert!(v.is_content("RB"));
        assert!(!v.is_content("DT"));
    }

    #[test]
    fn rejects_duplicates_and_dangling_mappings() {
        let dup = TagVocabulary::new(
            vec![("NN".into(), "NOUN".into()), ("NN".into(), "NOUN".into())],
            vec!["NOUN".into()],
        );
        assert!(dup.is_err());
        let dangling = TagVocabulary::new(vec![("NN".into(), "NOUN".into())], vec!["VERB".into()]);
        assert!(dangling.is_err());
        let small = TagVocabulary::new(vec![("NN".into(), "NOUN".into())], vec!["NOUN".into()]).unwrap();
        assert_eq!(small.len(), 2);
    }

    #[test]
    fn serde_round_trip_restores_index() {
        let v = TagVocabulary::penn();
        let s = serde_json::to_string(&v).unwrap();
        let back: TagVocabulary = serde_json::from_str::<TagVocabulary>(&s).unwrap().reindexed();
        assert_eq!(back.id("VBZ"), v.id("VBZ"));
        assert_eq!(back, v);
    }
}
