//! A small probabilistic grammar with an unambiguous tag lexicon, used for
//! desk-scale end-to-end runs and as a tagging oracle.
//!
//! ```text
//! S       -> NP_subj VP "."
//! NP_subj -> "the" (JJ)? (NN | NNS)          animate nouns
//! VP      -> V_intr (RB)?
//!          | V_tran NP_obj
//!          | V_prep IN NP_obj                 the preposition is fixed per verb
//! V       -> VBD | VBZ | "will" VB            VBZ only after a singular subject
//! NP_obj  -> "the" (JJ)? (NN | NNS)           inanimate nouns
//! ```
//!
//! At most one adjective per sentence. Subject and object nouns come from
//! disjoint sets, so the words of a sentence are fully determined by its
//! lemmas and its tag sequence.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    extract_record, CorpusError, DatasetRecord, PosTagger, TagVocabulary, TaggedSentence, TrainingExample, Vocabularies,
};

/// (singular, plural)
const ANIMATE: [(&str, &str); 10] = [
    ("dog", "dogs"),
    ("cat", "cats"),
    ("boy", "boys"),
    ("girl", "girls"),
    ("man", "men"),
    ("woman", "women"),
    ("child", "children"),
    ("teacher", "teachers"),
    ("farmer", "farmers"),
    ("bird", "birds"),
];

const INANIMATE: [(&str, &str); 8] = [
    ("ball", "balls"),
    ("book", "books"),
    ("apple", "apples"),
    ("box", "boxes"),
    ("car", "cars"),
    ("door", "doors"),
    ("letter", "letters"),
    ("house", "houses"),
];

/// (base, past, third person singular)
const INTRANSITIVE: [(&str, &str, &str); 5] = [
    ("sleep", "slept", "sleeps"),
    ("run", "ran", "runs"),
    ("smile", "smiled", "smiles"),
    ("laugh", "laughed", "laughs"),
    ("jump", "jumped", "jumps"),
];

const TRANSITIVE: [(&str, &str, &str); 6] = [
    ("find", "found", "finds"),
    ("eat", "ate", "eats"),
    ("open", "opened", "opens"),
    ("carry", "carried", "carries"),
    ("push", "pushed", "pushes"),
    ("like", "liked", "likes"),
];

/// (base, past, third person singular, preposition, preposition tag)
const PREPOSITIONAL: [(&str, &str, &str, &str, &str); 4] = [
    ("look", "looked", "looks", "at", "IN"),
    ("wait", "waited", "waits", "for", "IN"),
    ("talk", "talked", "talks", "about", "IN"),
    ("listen", "listened", "listens", "to", "TO"),
];

const ADJECTIVES: [&str; 8] = ["big", "small", "old", "young", "happy", "tall", "red", "green"];
const ADVERBS: [&str; 5] = ["quickly", "slowly", "quietly", "happily", "loudly"];

/// Sampler for the toy grammar.
#[derive(Debug, Clone)]
pub struct ToyGrammar {
    pub p_plural: f64,
    pub p_adjective: f64,
    pub p_adverb: f64,
}

impl Default for ToyGrammar {
    fn default() -> Self {
        ToyGrammar {
            p_plural: 0.3,
            p_adjective: 0.4,
            p_adverb: 0.5,
        }
    }
}

#[derive(Clone, Copy)]
enum Form {
    Past,
    Present,
    Future,
}

impl ToyGrammar {
    pub fn sample(&self, rng: &mut impl Rng) -> TaggedSentence {
        let mut out = TaggedSentence {
            tokens: Vec::new(),
            tags: Vec::new(),
        };
        let mut push = |w: &str, t: &str| {
            out.tokens.push(w.to_string());
            out.tags.push(t.to_string());
        };
        let kind = rng.gen_range(0..3);
        let has_adj = rng.gen_bool(self.p_adjective);
        // the adjective goes on the subject unless there is an object and a coin says otherwise
        let adj_on_subject = kind == 0 || rng.gen_bool(0.5);
        let adj = *ADJECTIVES.choose(rng).unwrap();

        let subj_plural = rng.gen_bool(self.p_plural);
        let subj = ANIMATE.choose(rng).unwrap();
        push("the", "DT");
        if has_adj && adj_on_subject {
            push(adj, "JJ");
        }
        if subj_plural {
            push(subj.1, "NNS");
        } else {
            push(subj.0, "NN");
        }

        let form = match rng.gen_range(0..if subj_plural { 2 } else { 3 }) {
            0 => Form::Past,
            1 => Form::Future,
            _ => Form::Present,
        };
        let verb = |push: &mut dyn FnMut(&str, &str), base: &str, past: &str, third: &str| match form {
            Form::Past => push(past, "VBD"),
            Form::Present => push(third, "VBZ"),
            Form::Future => {
                push("will", "MD");
                push(base, "VB");
            }
        };
        let object = |push: &mut dyn FnMut(&str, &str), rng: &mut dyn rand::RngCore| {
            let obj = INANIMATE.choose(rng).unwrap();
            push("the", "DT");
            if has_adj && !adj_on_subject {
                push(adj, "JJ");
            }
            if rng.gen_bool(self.p_plural) {
                push(obj.1, "NNS");
            } else {
                push(obj.0, "NN");
            }
        };
        match kind {
            0 => {
                let v = INTRANSITIVE.choose(rng).unwrap();
                verb(&mut push, v.0, v.1, v.2);
                if rng.gen_bool(self.p_adverb) {
                    push(ADVERBS.choose(rng).unwrap(), "RB");
                }
            }
            1 => {
                let v = TRANSITIVE.choose(rng).unwrap();
                verb(&mut push, v.0, v.1, v.2);
                object(&mut push, rng);
            }
            _ => {
                let v = PREPOSITIONAL.choose(rng).unwrap();
                verb(&mut push, v.0, v.1, v.2);
                push(v.3, v.4);
                object(&mut push, rng);
            }
        }
        push(".", ".");
        out
    }

    /// `n` distinct sentences, deterministic in `seed`.
    pub fn corpus(&self, n: usize, seed: u64) -> Vec<TaggedSentence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let s = self.sample(&mut rng);
            if seen.insert(s.tokens.clone()) {
                out.push(s);
            }
        }
        out
    }
}

/// Every word of the grammar with its one tag.
pub fn lexicon() -> HashMap<&'static str, &'static str> {
    let mut lex = HashMap::new();
    lex.insert("the", "DT");
    lex.insert("will", "MD");
    lex.insert(".", ".");
    for (s, p) in ANIMATE.iter().chain(&INANIMATE) {
        lex.insert(*s, "NN");
        lex.insert(*p, "NNS");
    }
    for (b, p, t) in INTRANSITIVE.iter().chain(&TRANSITIVE) {
        lex.insert(*b, "VB");
        lex.insert(*p, "VBD");
        lex.insert(*t, "VBZ");
    }
    for (b, p, t, prep, tag) in PREPOSITIONAL {
        lex.insert(b, "VB");
        lex.insert(p, "VBD");
        lex.insert(t, "VBZ");
        lex.insert(prep, tag);
    }
    for a in ADJECTIVES {
        lex.insert(a, "JJ");
    }
    for a in ADVERBS {
        lex.insert(a, "RB");
    }
    lex
}

/// Tags by dictionary lookup. Words outside the lexicon get `FW`.
#[derive(Debug, Clone)]
pub struct LexiconTagger {
    lexicon: HashMap<&'static str, &'static str>,
}

impl LexiconTagger {
    pub fn new() -> Self {
        LexiconTagger { lexicon: lexicon() }
    }
}

impl Default for LexiconTagger {
    fn default() -> Self {
        Self::new()
    }
}

impl PosTagger for LexiconTagger {
    fn tag_tokens(&self, tokens: &[String]) -> Vec<String> {
        tokens
            .iter()
            .map(|w| self.lexicon.get(w.as_str()).copied().unwrap_or("FW").to_string())
            .collect()
    }
}

/// Train and held-out sets drawn from one toy corpus, encoded with a word
/// vocabulary built on the training part.
#[derive(Debug, Clone)]
pub struct ToySplit {
    pub vocab: Vocabularies,
    pub train_records: Vec<DatasetRecord>,
    pub heldout_records: Vec<DatasetRecord>,
    pub train: Vec<TrainingExample>,
    pub heldout: Vec<TrainingExample>,
}

/// `n_train + n_heldout` distinct sentences; the first `n_train` train.
pub fn toy_split(n_train: usize, n_heldout: usize, seed: u64) -> Result<ToySplit, CorpusError> {
    let tagger = LexiconTagger::new();
    let tags = TagVocabulary::penn();
    let sentences = ToyGrammar::default().corpus(n_train + n_heldout, seed);
    let records = sentences
        .iter()
        .map(|s| extract_record(s, &tagger, &tags))
        .collect::<Result<Vec<_>, _>>()?;
    let (train_records, heldout_records) = records.split_at(n_train);
    let vocab = Vocabularies::build(train_records, tags, 1);
    Ok(ToySplit {
        train: vocab.encode_all(train_records)?,
        heldout: vocab.encode_all(heldout_records)?,
        train_records: train_records.to_vec(),
        heldout_records: heldout_records.to_vec(),
        vocab,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{lemmatize, TagVocabulary};

    #[test]
    fn lexicon_is_unambiguous() {
        let mut count = 0;
        for (s, p) in ANIMATE.iter().chain(&INANIMATE) {
            count += 2;
            assert_ne!(s, p);
        }
        for v in INTRANSITIVE.iter().chain(&TRANSITIVE) {
            count += 3;
            assert!(v.0 != v.1 && v.1 != v.2);
        }
        count += PREPOSITIONAL.len() * 3 + 4 + ADJECTIVES.len() + ADVERBS.len() + 3;
        assert_eq!(lexicon().len(), count);
    }

    #[test]
    fn sentences_follow_the_lexicon() {
        let tagger = LexiconTagger::new();
        for s in ToyGrammar::default().corpus(300, 5) {
            assert_eq!(tagger.tag_tokens(&s.tokens), s.tags);
            assert!(s.len() <= 9, "{:?}", s.tokens);
            assert_eq!(s.tags.iter().filter(|t| *t == "JJ").count() <= 1, true);
        }
    }

    #[test]
    fn lemmas_are_base_forms_in_the_lexicon() {
        let tags = TagVocabulary::penn();
        let lex = lexicon();
        for (w, t) in &lex {
            if tags.is_content(t) {
                let lemma = lemmatize(w, tags.universal_of(t).unwrap());
                let base = lex.get(lemma.as_str()).copied();
                assert!(
                    matches!(base, Some("NN" | "VB" | "JJ" | "RB" | "MD")),
                    "{w} -> {lemma} ({base:?})"
                );
                assert_eq!(tags.universal_of(base.unwrap()), tags.universal_of(t));
            }
        }
    }

    #[test]
    fn corpus_is_deterministic_and_distinct() {
        let g = ToyGrammar::default();
        let a = g.corpus(200, 9);
        assert_eq!(a, g.corpus(200, 9));
        let unique: BTreeSet<_> = a.iter().map(|s| s.tokens.clone()).collect();
        assert_eq!(unique.len(), 200);
    }
}
