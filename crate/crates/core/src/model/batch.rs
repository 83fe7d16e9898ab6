use crate::corpus::{TrainingExample, PAD};

use super::{canonical_order, ModelError, Result};

/// Padded, masked block of examples. All matrices are row-major with one
/// row per example. Keywords and keyword tags are stored in canonical
/// (ascending id) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub n_max: usize,
    pub u_max: usize,
    pub m_max: usize,
    pub keywords: Vec<usize>,
    pub keyword_mask: Vec<bool>,
    pub keyword_tags: Vec<usize>,
    pub keyword_tag_mask: Vec<bool>,
    pub template: Vec<usize>,
    pub reference: Vec<usize>,
    pub target_mask: Vec<bool>,
    pub lengths: Vec<usize>,
}

fn pad_rows(rows: &[Vec<usize>], width: usize) -> (Vec<usize>, Vec<bool>) {
    let mut ids = Vec::with_capacity(rows.len() * width);
    let mut mask = Vec::with_capacity(rows.len() * width);
    for r in rows {
        ids.extend(r.iter().copied());
        mask.extend(std::iter::repeat(true).take(r.len()));
        ids.extend(std::iter::repeat(PAD).take(width - r.len()));
        mask.extend(std::iter::repeat(false).take(width - r.len()));
    }
    (ids, mask)
}

impl Batch {
    pub fn from_examples(examples: &[&TrainingExample]) -> Result<Self> {
        Self::with_min_widths(examples, 0, 0, 0)
    }

    /// Like [`Batch::from_examples`] but padded to at least the given widths.
    pub fn with_min_widths(examples: &[&TrainingExample], min_n: usize, min_u: usize, min_m: usize) -> Result<Self> {
        if examples.is_empty() {
            return Err(ModelError::Invalid("empty batch".into()));
        }
        for ex in examples {
            if ex.keywords.is_empty() || ex.keyword_tags.is_empty() {
                return Err(ModelError::Invalid("example without keywords or keyword tags".into()));
            }
            if ex.template.is_empty() || ex.template.len() != ex.reference.len() {
                return Err(ModelError::Invalid(format!(
                    "template length {} and reference length {} must be equal and positive",
                    ex.template.len(),
                    ex.reference.len()
                )));
            }
            if ex.keywords.contains(&PAD) {
                return Err(ModelError::Invalid("keyword id is PAD".into()));
            }
        }
        let kws: Vec<Vec<usize>> = examples.iter().map(|e| canonical_order(&e.keywords).0).collect();
        let kts: Vec<Vec<usize>> = examples.iter().map(|e| canonical_order(&e.keyword_tags).0).collect();
        let tts: Vec<Vec<usize>> = examples.iter().map(|e| e.template.clone()).collect();
        let ys: Vec<Vec<usize>> = examples.iter().map(|e| e.reference.clone()).collect();
        let n_max = kws.iter().map(Vec::len).max().unwrap().max(min_n);
        let u_max = kts.iter().map(Vec::len).max().unwrap().max(min_u);
        let m_max = tts.iter().map(Vec::len).max().unwrap().max(min_m);
        let (keywords, keyword_mask) = pad_rows(&kws, n_max);
        let (keyword_tags, keyword_tag_mask) = pad_rows(&kts, u_max);
        let (template, _) = pad_rows(&tts, m_max);
        let (reference, target_mask) = pad_rows(&ys, m_max);
        Ok(Batch {
            size: examples.len(),
            n_max,
            u_max,
            m_max,
            keywords,
            keyword_mask,
            keyword_tags,
            keyword_tag_mask,
            template,
            reference,
            target_mask,
            lengths: examples.iter().map(|e| e.reference.len()).collect(),
        })
    }

    /// Number of real target tokens (template positions).
    pub fn num_tokens(&self) -> usize {
        self.lengths.iter().sum()
    }
}
