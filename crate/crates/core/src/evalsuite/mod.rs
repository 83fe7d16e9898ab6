//! Evaluation: BLEU, ROUGE-L, METEOR-lite and POSMatch over generated
//! sentences, the Exact/Similar template scenarios and keyword reversal.

mod metrics;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{PosTagger, TrainingExample, Vocabularies, MAX_SENTENCE_LEN};
use crate::model::{DecodeMode, DecodeTrace, GenerationInput, Generator, ModelError};
use crate::numerics::Real;

pub use metrics::{
    bleu, bleu_stats, lcs_len, meteor_lite, meteor_stats, posmatch, posmatch_binary, posmatch_sentence, rouge_l,
    rouge_l_sentence, BleuStats, MeteorStats, StemMatcher, BLEU_MAX_ORDER, METEOR_ALPHA, METEOR_BETA, METEOR_GAMMA,
    ROUGE_BETA,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to evaluate: the corpus is empty")]
    Empty,
    #[error("list lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Where the template of each example comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalScenario {
    /// The reference sentence's own tag sequence.
    Exact,
    /// The tag sequence of another sentence of the set (see [`similar_templates`]).
    Similar,
}

impl std::fmt::Display for EvalScenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalScenario::Exact => write!(f, "exact"),
            EvalScenario::Similar => write!(f, "similar"),
        }
    }
}

impl std::str::FromStr for EvalScenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(EvalScenario::Exact),
            "similar" => Ok(EvalScenario::Similar),
            other => Err(format!("unknown scenario {other:?} (expected exact or similar)")),
        }
    }
}

fn edit_distance(a: &[usize], b: &[usize]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let next = (diag + usize::from(x != y)).min(row[j] + 1).min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

/// Exemplar index for every example: the nearest other example by tag-sequence
/// edit distance whose template differs from its own, lowest index on ties.
/// Falls back to the example itself when every template is identical.
pub fn exemplar_indices(data: &[TrainingExample]) -> Vec<usize> {
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let mut best: Option<(usize, usize)> = None;
            for (j, other) in data.iter().enumerate() {
                if j == i || other.template == data[i].template {
                    continue;
                }
                let d = edit_distance(&data[i].template, &other.template);
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, j));
                }
            }
            best.map_or(i, |(_, j)| j)
        })
        .collect()
}

pub fn similar_templates(data: &[TrainingExample]) -> Vec<Vec<usize>> {
    exemplar_indices(data)
        .into_iter()
        .map(|j| data[j].template.clone())
        .collect()
}

/// Templates for a scenario, one per example.
pub fn scenario_templates(data: &[TrainingExample], scenario: EvalScenario) -> Vec<Vec<usize>> {
    match scenario {
        EvalScenario::Exact => data.iter().map(|e| e.template.clone()).collect(),
        EvalScenario::Similar => similar_templates(data),
    }
}

/// One audited example.
#[derive(Debug, Clone, Serialize)]
pub struct ExampleRecord {
    pub index: usize,
    pub keywords: Vec<String>,
    pub template: Vec<String>,
    pub reference: Vec<String>,
    pub prediction: Vec<String>,
    /// Tags of the prediction under the evaluation tagger.
    pub retagged: Vec<String>,
    pub log_prob: f64,
    pub rouge_l: f64,
    pub posmatch: Option<f64>,
    #[serde(skip)]
    pub trace: DecodeTrace,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub scenario: EvalScenario,
    pub decode_mode: String,
    pub bleu: f64,
    pub meteor_lite: f64,
    pub rouge_l: f64,
    /// Absent for models that ignore the template.
    pub posmatch: Option<f64>,
    pub posmatch_binary: Option<f64>,
    pub n_examples: usize,
    #[serde(skip)]
    pub records: Vec<ExampleRecord>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One JSON object per example.
    pub fn write_audit(&self, path: &Path) -> Result<()> {
        let io = |e| EvalError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        for r in &self.records {
            writeln!(f, "{}", serde_json::to_string(r).expect("record serializes")).map_err(io)?;
        }
        f.flush().map_err(io)
    }
}

/// Vocabularies and the tagger used to re-tag predictions.
#[derive(Clone, Copy)]
pub struct EvalContext<'a> {
    pub vocab: &'a Vocabularies,
    pub tagger: &'a dyn PosTagger,
}

/// Generates for every example with the scenario's template and scores the
/// output. Generation runs in parallel; metrics are reduced in example order.
pub fn evaluate<R: Real>(
    model: &Generator<R>,
    data: &[TrainingExample],
    ctx: EvalContext,
    scenario: EvalScenario,
    mode: DecodeMode,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(EvalError::Empty);
    }
    let templates = scenario_templates(data, scenario);
    let no_template = model.config.no_template;
    let outputs: Vec<_> = data
        .par_iter()
        .zip(&templates)
        .map(|(ex, tt)| {
            let input = GenerationInput {
                keywords: ex.keywords.clone(),
                keyword_tags: ex.keyword_tags.clone(),
                template: tt.clone(),
            };
            model.generate(&input, mode, MAX_SENTENCE_LEN)
        })
        .collect::<std::result::Result<_, _>>()?;

    let vocab = ctx.vocab;
    let predictions: Vec<Vec<String>> = outputs.iter().map(|g| vocab.decode_words(&g.tokens)).collect();
    let references: Vec<Vec<String>> = data.iter().map(|e| vocab.decode_words(&e.reference)).collect();
    let tag_strings: Vec<Vec<String>> = templates.iter().map(|t| vocab.decode_tags(t)).collect();
    let retagged: Vec<Vec<String>> = predictions.iter().map(|p| ctx.tagger.tag_tokens(p)).collect();
    let b = bleu(&predictions, &references)?;
    let m = meteor_lite(&predictions, &references)?;
    let r = rouge_l(&predictions, &references)?;
    let p = if no_template {
        None
    } else {
        Some((posmatch(&retagged, &tag_strings)?, posmatch_binary(&retagged, &tag_strings)?))
    };

    let records = outputs
        .into_iter()
        .enumerate()
        .map(|(i, g)| ExampleRecord {
            index: i,
            keywords: vocab.decode_words(&data[i].keywords),
            template: tag_strings[i].clone(),
            rouge_l: 100.0 * rouge_l_sentence(&predictions[i], &references[i]),
            posmatch: (!no_template)
                .then(|| posmatch_sentence(&retagged[i], &tag_strings[i]).map(|x| 100.0 * x))
                .flatten(),
            reference: references[i].clone(),
            prediction: predictions[i].clone(),
            retagged: retagged[i].clone(),
            log_prob: g.log_prob,
            trace: g.trace,
        })
        .collect();
    Ok(EvalReport {
        scenario,
        decode_mode: mode.to_string(),
        bleu: b,
        meteor_lite: m,
        rouge_l: r,
        posmatch: p.map(|x| x.0),
        posmatch_binary: p.map(|x| x.1),
        n_examples: data.len(),
        records,
    })
}

/// `reversed - original` for each metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricDeltas {
    pub bleu: f64,
    pub meteor_lite: f64,
    pub rouge_l: f64,
    pub posmatch: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReversalReport {
    pub original: EvalReport,
    pub reversed: EvalReport,
    pub deltas: MetricDeltas,
}

/// Copies of the examples with the keyword list (and keyword tag list) reversed.
pub fn reverse_keywords(data: &[TrainingExample]) -> Vec<TrainingExample> {
    data.iter()
        .map(|e| {
            let mut e = e.clone();
            e.keywords.reverse();
            e.keyword_tags.reverse();
            e
        })
        .collect()
}

/// Evaluates on the data and on its keyword-reversed copy.
pub fn reversal_robustness<R: Real>(
    model: &Generator<R>,
    data: &[TrainingExample],
    ctx: EvalContext,
    scenario: EvalScenario,
    mode: DecodeMode,
) -> Result<ReversalReport> {
    let original = evaluate(model, data, ctx, scenario, mode)?;
    let reversed = evaluate(model, &reverse_keywords(data), ctx, scenario, mode)?;
    let deltas = MetricDeltas {
        bleu: reversed.bleu - original.bleu,
        meteor_lite: reversed.meteor_lite - original.meteor_lite,
        rouge_l: reversed.rouge_l - original.rouge_l,
        posmatch: original.posmatch.zip(reversed.posmatch).map(|(a, b)| b - a),
    };
    Ok(ReversalReport {
        original,
        reversed,
        deltas,
    })
}

/// Mean gate value over template positions, split by whether the position's
/// tag is a content tag (noun, verb, adjective or adverb).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LambdaSummary {
    pub content_mean: f64,
    pub content_count: usize,
    pub function_mean: f64,
    pub function_count: usize,
}

pub fn lambda_summary<'a>(traces: impl IntoIterator<Item = &'a DecodeTrace>, vocab: &Vocabularies) -> LambdaSummary {
    let (mut cs, mut cn, mut fs, mut fn_) = (0.0, 0, 0.0, 0);
    for tr in traces {
        for s in &tr.steps {
            let Some(tag) = s.template_tag else { continue };
            if vocab.tags.is_content_id(tag) {
                cs += s.lambda;
                cn += 1;
            } else {
                fs += s.lambda;
                fn_ += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    LambdaSummary {
        content_mean: mean(cs, cn),
        content_count: cn,
        function_mean: mean(fs, fn_),
        function_count: fn_,
    }
}
