//! Corpus metrics over tokenized sentences. All scores are percentages.

use std::collections::HashMap;

use rust_stemmers::{Algorithm, Stemmer};

use super::{EvalError, Result};

pub const BLEU_MAX_ORDER: usize = 4;
pub const ROUGE_BETA: f64 = 1.2;
pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_BETA: f64 = 3.0;
pub const METEOR_GAMMA: f64 = 0.5;

fn check_pair<A, B>(candidates: &[A], references: &[B]) -> Result<()> {
    if candidates.is_empty() {
        return Err(EvalError::Empty);
    }
    if candidates.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            left: candidates.len(),
            right: references.len(),
        });
    }
    Ok(())
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Summed clipped matches and candidate n-gram totals per order, plus lengths.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BleuStats {
    pub matches: [usize; BLEU_MAX_ORDER],
    pub totals: [usize; BLEU_MAX_ORDER],
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl BleuStats {
    pub fn precision(&self, n: usize) -> Option<f64> {
        let total = self.totals[n - 1];
        (total > 0).then(|| self.matches[n - 1] as f64 / total as f64)
    }

    pub fn brevity_penalty(&self) -> f64 {
        let (c, r) = (self.candidate_len as f64, self.reference_len as f64);
        if c == 0.0 {
            0.0
        } else if c > r {
            1.0
        } else {
            (1.0 - r / c).exp()
        }
    }

    /// Orders with no candidate n-grams anywhere in the corpus are left out of
    /// the geometric mean; any remaining order without a match gives 0.
    pub fn score(&self) -> f64 {
        let mut log_sum = 0.0;
        let mut orders = 0;
        for n in 1..=BLEU_MAX_ORDER {
            match self.precision(n) {
                None => {}
                Some(p) if p == 0.0 => return 0.0,
                Some(p) => {
                    log_sum += p.ln();
                    orders += 1;
                }
            }
        }
        if orders == 0 {
            return 0.0;
        }
        100.0 * self.brevity_penalty() * (log_sum / orders as f64).exp()
    }
}

pub fn bleu_stats<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<S>]) -> Result<BleuStats> {
    check_pair(candidates, references)?;
    let mut st = BleuStats::default();
    for (c, r) in candidates.iter().zip(references) {
        st.candidate_len += c.len();
        st.reference_len += r.len();
        for n in 1..=BLEU_MAX_ORDER {
            let rc = ngram_counts(r, n);
            for (g, k) in ngram_counts(c, n) {
                st.matches[n - 1] += k.min(rc.get(&g).copied().unwrap_or(0));
                st.totals[n - 1] += k;
            }
        }
    }
    Ok(st)
}

/// Corpus BLEU-4 with one reference per candidate and no smoothing.
pub fn bleu<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<S>]) -> Result<f64> {
    Ok(bleu_stats(candidates, references)?.score())
}

pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x.as_ref() == y.as_ref() {
                diag + 1
            } else {
                up.max(row[j])
            };
            diag = up;
        }
    }
    row[b.len()]
}

/// Sentence ROUGE-L F-measure in [0, 1]; two empty sentences score 1.
pub fn rouge_l_sentence<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> f64 {
    if candidate.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let l = lcs_len(candidate, reference);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / candidate.len() as f64;
    let r = l as f64 / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * r * p / (r + b2 * p)
}

/// Mean sentence ROUGE-L F with `β = 1.2`.
pub fn rouge_l<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<S>]) -> Result<f64> {
    check_pair(candidates, references)?;
    let sum: f64 = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| rouge_l_sentence(c, r))
        .sum();
    Ok(100.0 * sum / candidates.len() as f64)
}

/// Alignment statistics for one sentence pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MeteorStats {
    pub matches: usize,
    pub chunks: usize,
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl std::ops::AddAssign for MeteorStats {
    fn add_assign(&mut self, o: Self) {
        self.matches += o.matches;
        self.chunks += o.chunks;
        self.candidate_len += o.candidate_len;
        self.reference_len += o.reference_len;
    }
}

impl MeteorStats {
    pub fn score(&self) -> f64 {
        if self.matches == 0 {
            return 0.0;
        }
        let m = self.matches as f64;
        let p = m / self.candidate_len as f64;
        let r = m / self.reference_len as f64;
        let fmean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
        let penalty = METEOR_GAMMA * (self.chunks as f64 / m).powf(METEOR_BETA);
        100.0 * fmean * (1.0 - penalty)
    }
}

/// Word stems used by the second matching stage.
pub struct StemMatcher(Stemmer);

impl Default for StemMatcher {
    fn default() -> Self {
        StemMatcher(Stemmer::create(Algorithm::English))
    }
}

impl StemMatcher {
    pub fn stem(&self, w: &str) -> String {
        self.0.stem(w).into_owned()
    }

    /// Greedy left-to-right alignment: exact matches first, then stem
    /// matches among the tokens still free. Each candidate token takes the
    /// leftmost available reference token.
    pub fn align<S: AsRef<str>>(&self, candidate: &[S], reference: &[S]) -> Vec<(usize, usize)> {
        let mut ref_used = vec![false; reference.len()];
        let mut cand_ref: Vec<Option<usize>> = vec![None; candidate.len()];
        for (i, c) in candidate.iter().enumerate() {
            if let Some(j) = (0..reference.len()).find(|&j| !ref_used[j] && reference[j].as_ref() == c.as_ref()) {
                ref_used[j] = true;
                cand_ref[i] = Some(j);
            }
        }
        let ref_stems: Vec<String> = reference.iter().map(|w| self.stem(w.as_ref())).collect();
        for (i, c) in candidate.iter().enumerate() {
            if cand_ref[i].is_some() {
                continue;
            }
            let s = self.stem(c.as_ref());
            if let Some(j) = (0..reference.len()).find(|&j| !ref_used[j] && ref_stems[j] == s) {
                ref_used[j] = true;
                cand_ref[i] = Some(j);
            }
        }
        cand_ref
            .into_iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| (i, j)))
            .collect()
    }

    pub fn sentence_stats<S: AsRef<str>>(&self, candidate: &[S], reference: &[S]) -> MeteorStats {
        let pairs = self.align(candidate, reference);
        let mut chunks = 0;
        let mut prev: Option<(usize, usize)> = None;
        for &(i, j) in &pairs {
            match prev {
                Some((pi, pj)) if pi + 1 == i && pj + 1 == j => {}
                _ => chunks += 1,
            }
            prev = Some((i, j));
        }
        MeteorStats {
            matches: pairs.len(),
            chunks,
            candidate_len: candidate.len(),
            reference_len: reference.len(),
        }
    }
}

pub fn meteor_stats<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<S>]) -> Result<MeteorStats> {
    check_pair(candidates, references)?;
    let sm = StemMatcher::default();
    let mut total = MeteorStats::default();
    for (c, r) in candidates.iter().zip(references) {
        total += sm.sentence_stats(c, r);
    }
    Ok(total)
}

/// METEOR restricted to exact and stem matches, scored from corpus-summed
/// alignment statistics.
pub fn meteor_lite<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<S>]) -> Result<f64> {
    Ok(meteor_stats(candidates, references)?.score())
}

fn posmatch_fractions<S: AsRef<str>>(predicted_tags: &[Vec<S>], templates: &[Vec<S>]) -> Result<Vec<f64>> {
    check_pair(predicted_tags, templates)?;
    predicted_tags
        .iter()
        .zip(templates)
        .enumerate()
        .map(|(i, (p, t))| {
            posmatch_sentence(p, t).ok_or_else(|| {
                EvalError::Validation(format!(
                    "example {i}: prediction has {} tokens but the template has {}",
                    p.len(),
                    t.len()
                ))
            })
        })
        .collect()
}

/// Mean per-position agreement between re-tagged predictions and templates.
pub fn posmatch<S: AsRef<str>>(predicted_tags: &[Vec<S>], templates: &[Vec<S>]) -> Result<f64> {
    let f = posmatch_fractions(predicted_tags, templates)?;
    Ok(100.0 * f.iter().sum::<f64>() / f.len() as f64)
}

/// Share of examples whose whole tag sequence equals the template.
pub fn posmatch_binary<S: AsRef<str>>(predicted_tags: &[Vec<S>], templates: &[Vec<S>]) -> Result<f64> {
    let f = posmatch_fractions(predicted_tags, templates)?;
    Ok(100.0 * f.iter().filter(|&&x| x == 1.0).count() as f64 / f.len() as f64)
}

/// Per-example POSMatch fraction, exposed for audit records.
pub fn posmatch_sentence<S: AsRef<str>>(predicted_tags: &[S], template: &[S]) -> Option<f64> {
    if predicted_tags.len() != template.len() {
        return None;
    }
    if template.is_empty() {
        return Some(1.0);
    }
    let same = predicted_tags
        .iter()
        .zip(template)
        .filter(|(a, b)| a.as_ref() == b.as_ref())
        .count();
    Some(same as f64 / template.len() as f64)
}
