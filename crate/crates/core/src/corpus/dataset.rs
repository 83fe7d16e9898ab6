use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lemma::lemmatize;
use super::tagger::PosTagger;
use super::{CorpusError, TagVocabulary, WordVocabulary};

/// Tokens with one fine-grained tag each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

impl TaggedSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Parses `word_TAG word_TAG ...`; the tag follows the last underscore.
    pub fn parse_pretagged(line: &str) -> Result<Self, CorpusError> {
        let mut tokens = Vec::new();
        let mut tags = Vec::new();
        for item in line.split_whitespace() {
            let (w, t) = item
                .rsplit_once('_')
                .filter(|(w, t)| !w.is_empty() && !t.is_empty())
                .ok_or_else(|| CorpusError::Format(format!("token {item:?} is not word_TAG")))?;
            tokens.push(w.to_lowercase());
            tags.push(t.to_string());
        }
        Ok(TaggedSentence { tokens, tags })
    }

    pub fn to_pretagged(&self) -> String {
        self.tokens
            .iter()
            .zip(&self.tags)
            .map(|(w, t)| format!("{w}_{t}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Reads a tagged corpus, one `word_TAG` sentence per line. Blank lines are skipped.
pub fn load_pretagged(path: &Path) -> Result<Vec<TaggedSentence>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(TaggedSentence::parse_pretagged(&line).map_err(|e| CorpusError::Line {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Lowercases and splits on whitespace, separating punctuation and the
/// common English clitics (`'s`, `n't`, ...).
pub fn tokenize(text: &str) -> Vec<String> {
    const LEADING: &[char] = &['"', '(', '`', '\''];
    const TRAILING: &[char] = &['.', ',', '!', '?', ';', ':', ')', '"', '\''];
    const CLITICS: [&str; 7] = ["n't", "'s", "'re", "'ll", "'ve", "'m", "'d"];
    let mut out = Vec::new();
    for raw in text.to_lowercase().split_whitespace() {
        let mut word = raw;
        while let Some(c) = word.chars().next().filter(|c| LEADING.contains(c) && word.len() > 1) {
            out.push(c.to_string());
            word = &word[c.len_utf8()..];
        }
        let mut tail = Vec::new();
        while let Some(c) = word.chars().last().filter(|c| TRAILING.contains(c) && word.len() > 1) {
            tail.push(c.to_string());
            word = &word[..word.len() - c.len_utf8()];
        }
        if let Some(cl) = CLITICS.iter().find(|cl| word.len() > cl.len() && word.ends_with(*cl)) {
            out.push(word[..word.len() - cl.len()].to_string());
            out.push(cl.to_string());
        } else if !word.is_empty() {
            out.push(word.to_string());
        }
        out.extend(tail.into_iter().rev());
    }
    out
}

/// One line of a dataset file. Field order is the on-disk order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub keywords: Vec<String>,
    pub keyword_tags: Vec<String>,
    pub template: Vec<String>,
    pub reference: Vec<String>,
}

impl DatasetRecord {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.keywords.is_empty() {
            return Err(CorpusError::Validation("example has no keywords".into()));
        }
        if self.template.is_empty() {
            return Err(CorpusError::Validation("example has an empty template".into()));
        }
        if self.reference.len() != self.template.len() {
            return Err(CorpusError::Validation(format!(
                "reference has {} tokens but template has {} tags",
                self.reference.len(),
                self.template.len()
            )));
        }
        let unique: BTreeSet<&String> = self.keyword_tags.iter().collect();
        if unique.len() != self.keyword_tags.len() {
            return Err(CorpusError::Validation("keyword_tags contains duplicates".into()));
        }
        if self.keyword_tags.is_empty() {
            return Err(CorpusError::Validation("example has no keyword tags".into()));
        }
        Ok(())
    }
}

/// Word and tag vocabularies used together to turn records into ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabularies {
    pub words: WordVocabulary,
    pub tags: TagVocabulary,
}

/// Model-ready example: every field is an id sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TrainingExample {
    pub keywords: Vec<usize>,
    pub keyword_tags: Vec<usize>,
    pub template: Vec<usize>,
    pub reference: Vec<usize>,
}

impl Vocabularies {
    /// Word vocabulary over the keywords and references of `records`.
    pub fn build(records: &[DatasetRecord], tags: TagVocabulary, min_count: usize) -> Self {
        let words = WordVocabulary::from_counts(
            records
                .iter()
                .flat_map(|r| r.reference.iter().chain(&r.keywords))
                .map(String::as_str),
            min_count,
        );
        Vocabularies { words, tags }
    }

    pub fn encode(&self, r: &DatasetRecord) -> Result<TrainingExample, CorpusError> {
        r.validate()?;
        let tag_ids = |tags: &[String]| -> Result<Vec<usize>, CorpusError> {
            tags.iter()
                .map(|t| self.tags.id(t).ok_or_else(|| CorpusError::UnknownTag(t.clone())))
                .collect()
        };
        Ok(TrainingExample {
            keywords: r.keywords.iter().map(|w| self.words.id(w)).collect(),
            keyword_tags: tag_ids(&r.keyword_tags)?,
            template: tag_ids(&r.template)?,
            reference: r.reference.iter().map(|w| self.words.id(w)).collect(),
        })
    }

    pub fn encode_all(&self, records: &[DatasetRecord]) -> Result<Vec<TrainingExample>, CorpusError> {
        records.iter().map(|r| self.encode(r)).collect()
    }

    pub fn decode_words(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.words.word(i).to_string()).collect()
    }

    pub fn decode_tags(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.tags.tag(i).unwrap_or("?").to_string())
            .collect()
    }
}

/// Universal tag a keyword receives when tagged on its own, as a one-token sentence.
pub fn keyword_universal_tag(keyword: &str, tagger: &dyn PosTagger, tags: &TagVocabulary) -> Option<String> {
    let fine = tagger.tag_tokens(&[keyword.to_string()]).pop()?;
    tags.universal_of(&fine).map(str::to_string)
}

/// Unique universal tags of `keywords`, each tagged independently, in
/// order of first appearance.
pub fn keyword_tags_for(keywords: &[String], tagger: &dyn PosTagger, tags: &TagVocabulary) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for k in keywords {
        if let Some(u) = keyword_universal_tag(k, tagger, tags) {
            if !out.contains(&u) {
                out.push(u);
            }
        }
    }
    out
}

/// Builds a dataset record from a tagged sentence: lemmatized content words
/// become keywords, the tag sequence becomes the template and the tokens the
/// reference. A sentence without content words yields `NoContentWords`.
pub fn extract_record(
    s: &TaggedSentence,
    tagger: &dyn PosTagger,
    tags: &TagVocabulary,
) -> Result<DatasetRecord, CorpusError> {
    if s.tokens.len() != s.tags.len() {
        return Err(CorpusError::Validation(format!(
            "sentence has {} tokens but {} tags",
            s.tokens.len(),
            s.tags.len()
        )));
    }
    let mut keywords = Vec::new();
    for (w, t) in s.tokens.iter().zip(&s.tags) {
        let u = tags
            .universal_of(t)
            .ok_or_else(|| CorpusError::UnknownTag(t.clone()))?;
        if tags.is_content(t) {
            keywords.push(lemmatize(w, u));
        }
    }
    if keywords.is_empty() {
        return Err(CorpusError::NoContentWords);
    }
    let keyword_tags = keyword_tags_for(&keywords, tagger, tags);
    if keyword_tags.is_empty() {
        return Err(CorpusError::NoContentWords);
    }
    Ok(DatasetRecord {
        keywords,
        keyword_tags,
        template: s.tags.clone(),
        reference: s.tokens.clone(),
    })
}

pub fn extract_example(
    s: &TaggedSentence,
    tagger: &dyn PosTagger,
    vocab: &Vocabularies,
) -> Result<TrainingExample, CorpusError> {
    let record = extract_record(s, tagger, &vocab.tags)?;
    vocab.encode(&record)
}

/// Reads a JSON-lines dataset. Blank lines are skipped; any other malformed
/// line is reported with its 1-based line number.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_dataset(BufReader::new(file))
}

pub fn read_dataset(reader: impl BufRead) -> Result<Vec<DatasetRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Format(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Line {
            line: i + 1,
            message: e.to_string(),
        })?;
        record.validate().map_err(|e| CorpusError::Line {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn save_dataset(path: &Path, records: &[DatasetRecord]) -> Result<(), CorpusError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(&mut w, records)?;
    w.flush().map_err(|e| CorpusError::io(path, e))
}

pub fn write_dataset(w: &mut impl Write, records: &[DatasetRecord]) -> Result<(), CorpusError> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| CorpusError::Format(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| CorpusError::Format(e.to_string()))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusStats {
    pub count: usize,
    pub avg_keywords: f64,
    pub avg_sentence_length: f64,
    /// True when the dataset is empty and the averages are placeholders.
    pub undefined: bool,
}

pub fn corpus_stats(records: &[DatasetRecord]) -> CorpusStats {
    if records.is_empty() {
        return CorpusStats {
            count: 0,
            avg_keywords: 0.0,
            avg_sentence_length: 0.0,
            undefined: true,
        };
    }
    let n = records.len() as f64;
    let kw: usize = records.iter().map(|r| r.keywords.len()).sum();
    let len: usize = records.iter().map(|r| r.reference.len()).sum();
    CorpusStats {
        count: records.len(),
        avg_keywords: kw as f64 / n,
        avg_sentence_length: len as f64 / n,
        undefined: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(k: &[&str], kt: &[&str], t: &[&str], r: &[&str]) -> DatasetRecord {
        let v = |x: &[&str]| x.iter().map(|s| s.to_string()).collect();
        DatasetRecord {
            keywords: v(k),
            keyword_tags: v(kt),
            template: v(t),
            reference: v(r),
        }
    }

    #[test]
    fn tokenizer_splits_punctuation_and_clitics() {
        assert_eq!(tokenize("Who is Bob's friend?"), vec!["who", "is", "bob", "'s", "friend", "?"]);
        assert_eq!(tokenize("  the boy started crying. "), vec!["the", "boy", "started", "crying", "."]);
        assert_eq!(tokenize("it isn't \"fine\""), vec!["it", "is", "n't", "\"", "fine", "\""]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn pretagged_parsing() {
        let s = TaggedSentence::parse_pretagged("The_DT dog_NN barked_VBD ._.").unwrap();
        assert_eq!(s.tokens, vec!["the", "dog", "barked", "."]);
        assert_eq!(s.tags, vec!["DT", "NN", "VBD", "."]);
        assert_eq!(s.to_pretagged(), "the_DT dog_NN barked_VBD ._.");
        assert!(TaggedSentence::parse_pretagged("dog").is_err());
        assert!(TaggedSentence::parse_pretagged("dog_").is_err());
    }

    #[test]
    fn reading_reports_line_numbers() {
        let good = r#"{"keywords":["dog"],"keyword_tags":["NOUN"],"template":["DT","NN"],"reference":["the","dog"]}"#;
        let text = format!("{good}\n\n{{oops\n");
        let err = read_dataset(text.as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::Line { line: 3, .. }), "{err}");
        let mismatch = r#"{"keywords":["dog"],"keyword_tags":["NOUN"],"template":["DT"],"reference":["the","dog"]}"#;
        let err = read_dataset(mismatch.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("template"), "{err}");
        assert!(read_dataset("".as_bytes()).unwrap().is_empty());
        let one = read_dataset(good.as_bytes()).unwrap();
        assert_eq!(one, vec![rec(&["dog"], &["NOUN"], &["DT", "NN"], &["the", "dog"])]);
    }

    #[test]
    fn written_field_order_is_fixed() {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &[rec(&["dog"], &["NOUN"], &["NN"], &["dog"])]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"keywords\":[\"dog\"],\"keyword_tags\":[\"NOUN\"],\"template\":[\"NN\"],\"reference\":[\"dog\"]}\n"
        );
    }

    #[test]
    fn stats() {
        let s = corpus_stats(&[]);
        assert_eq!(s.count, 0);
        assert!(s.undefined);
        assert_eq!(s.avg_keywords, 0.0);
        let s = corpus_stats(&[
            rec(&["a", "b"], &["NOUN"], &["NN", "NN"], &["a", "b"]),
            rec(&["a", "b", "c", "d"], &["NOUN"], &["NN"; 4], &["a", "b", "c", "d"]),
        ]);
        assert_eq!(s.avg_keywords, 3.0);
        assert_eq!(s.avg_sentence_length, 3.0);
    }

    #[test]
    fn encoding_rejects_unknown_tags() {
        let v = Vocabularies::build(&[], TagVocabulary::penn(), 1);
        let err = v.encode(&rec(&["dog"], &["NOUN"], &["BOGUS"], &["dog"])).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownTag(_)));
        let ex = v.encode(&rec(&["dog"], &["NOUN"], &["NN"], &["dog"])).unwrap();
        assert_eq!(ex.keywords, vec![crate::corpus::UNK]);
    }
}
