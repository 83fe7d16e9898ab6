use std::cmp::Ordering;

use serde::Serialize;

use crate::corpus::{BOS, EOS, PAD};
use crate::numerics::{Real, Tensor, TapeMark, Var};

use super::network::{Dropout, KeywordContext, Net};
use super::{canonical_order, Batch, DecodeMode, GenerationInput, Generator, ModelError, Result};

/// One generated position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub token: usize,
    /// Template tag at this position; absent without a template.
    pub template_tag: Option<usize>,
    pub lambda: f64,
    /// Attention over the keywords, in input order.
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DecodeTrace {
    pub steps: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub tokens: Vec<usize>,
    pub trace: DecodeTrace,
    /// Sum of the per-step log-probabilities of the chosen tokens.
    pub log_prob: f64,
}

/// Values produced by a single decoder step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutputs<R> {
    pub lambda: R,
    /// In input keyword order.
    pub alpha: Vec<R>,
    pub c: Vec<R>,
    pub m: Vec<R>,
    pub logits: Vec<R>,
    pub state: Vec<R>,
}

/// Log-softmax in 64-bit arithmetic.
pub fn log_softmax<R: Real>(logits: &[R]) -> Vec<f64> {
    let max = logits.iter().map(|x| x.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in logits {
        sum += (x.as_f64() - max).exp();
    }
    let lse = max + sum.ln();
    logits.iter().map(|x| x.as_f64() - lse).collect()
}

fn allowed(token: usize) -> bool {
    token != PAD && token != BOS
}

fn check_finite<R: Real>(values: &[R], what: &str) -> Result<()> {
    if values.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite(what.into()))
    }
}

struct RowOut<R> {
    logp: Vec<f64>,
    state: Vec<R>,
    lambda: f64,
    alpha: Vec<f64>,
}

/// Encoded inputs for one example plus a tape mark to decode from.
struct Session<'c, R: Real> {
    net: Net<'c, R>,
    kc: KeywordContext,
    order: Vec<usize>,
    h_tt: Vec<Var>,
    lambda: Option<Var>,
    init: Var,
    mark: TapeMark,
    template: Vec<usize>,
    steps: usize,
}

impl<'c, R: Real> Session<'c, R> {
    fn new(g: &'c Generator<R>, input: &GenerationInput, max_len: usize) -> Result<Self> {
        if input.keywords.is_empty() {
            return Err(ModelError::Invalid("no keywords".into()));
        }
        let cfg = &g.config;
        for &k in &input.keywords {
            if k == PAD || k >= cfg.vocab_size {
                return Err(ModelError::Invalid(format!("keyword id {k} is not a valid word")));
            }
        }
        let mut net = Net::bind(cfg, &g.params, false)?;
        let (kw, order) = canonical_order(&input.keywords);
        let n = kw.len();
        let kc = net.keyword_context(&kw, &vec![true; n], n, &mut None)?;
        let (h_tt, lambda, h_last, steps) = if cfg.no_template {
            if max_len == 0 {
                return Err(ModelError::Invalid("maximum length must be positive".into()));
            }
            let v = net.template_vector(1)?;
            (vec![v], None, v, max_len)
        } else {
            let m = input.template.len();
            let u = input.keyword_tags.len();
            if m == 0 || u == 0 {
                return Err(ModelError::Invalid("empty template or keyword tags".into()));
            }
            for &t in input.template.iter().chain(&input.keyword_tags) {
                if t >= cfg.tag_vocab_size {
                    return Err(ModelError::Invalid(format!("tag id {t} out of range")));
                }
            }
            let (kt, _) = canonical_order(&input.keyword_tags);
            let rows = net.template_rows(&input.template, &[m], m)?;
            let (lam, _) = net.lambdas(&input.template, &kt, &vec![true; u], m, u)?;
            let last = rows[m - 1];
            (rows, Some(lam), last, m)
        };
        let init = net.initial_state(&kc, h_last)?;
        check_finite(net.tape.value(init), "initial decoder state")?;
        let mark = net.mark();
        Ok(Session {
            net,
            kc,
            order,
            h_tt,
            lambda,
            init,
            mark,
            template: input.template.clone(),
            steps,
        })
    }

    fn no_template(&self) -> bool {
        self.lambda.is_none()
    }

    /// Runs step `t` for `prev.len()` hypotheses. `states` is `None` at the first step.
    fn run(&mut self, t: usize, prev: &[usize], states: Option<&[Vec<R>]>) -> Result<Vec<RowOut<R>>> {
        let nh = prev.len();
        let dh = self.net.cfg.decoder_dim;
        self.net.tape.rewind(self.mark);
        let state = match states {
            None => self.net.tape.repeat_rows(self.init, nh),
            Some(s) => {
                let flat: Vec<R> = s.iter().flatten().copied().collect();
                self.net.tape.constant(nh, dh, flat)?
            }
        };
        let kc = self.net.replicate(&self.kc, nh)?;
        let h_tt = self.net.tape.repeat_rows(self.h_tt[if self.no_template() { 0 } else { t }], nh);
        let lam = match self.lambda {
            Some(l) => self.net.tape.gather_rows(l, &vec![t; nh])?,
            None => self.net.tape.constant(nh, 1, vec![R::one(); nh])?,
        };
        let out = self.net.step(prev, state, &kc, h_tt, lam, &mut None)?;
        let tape = &self.net.tape;
        check_finite(tape.value(out.state), "decoder state")?;
        check_finite(tape.value(out.logits), "logits")?;
        let n = self.kc.n;
        Ok((0..nh)
            .map(|i| {
                let a = tape.row(out.alpha, i);
                let mut alpha = vec![0.0; n];
                for (j, &src) in self.order.iter().enumerate() {
                    alpha[src] = a[j].as_f64();
                }
                RowOut {
                    logp: log_softmax(tape.row(out.logits, i)),
                    state: tape.row(out.state, i).to_vec(),
                    lambda: tape.value(lam)[i].as_f64(),
                    alpha,
                }
            })
            .collect())
    }

    fn trace_step(&self, t: usize, token: usize, row: &RowOut<R>) -> TraceStep {
        TraceStep {
            token,
            template_tag: if self.no_template() { None } else { Some(self.template[t]) },
            lambda: row.lambda,
            alpha: row.alpha.clone(),
        }
    }
}

#[derive(Clone)]
struct Hyp<R> {
    tokens: Vec<usize>,
    score: f64,
    state: Vec<R>,
    trace: Vec<TraceStep>,
}

impl<R: Real> Generator<R> {
    /// Mean teacher-forced loss of a batch (no gradients).
    pub fn forward_loss(&self, batch: &Batch, drop: Option<&mut Dropout>) -> Result<R> {
        let mut net = Net::bind(&self.config, &self.params, false)?;
        let mut drop = drop;
        let loss = net.batch_loss(batch, &mut drop)?;
        Ok(net.tape.scalar(loss))
    }

    /// Loss of a batch; its gradients are added to the parameters.
    pub fn loss_and_grad(&mut self, batch: &Batch, drop: Option<&mut Dropout>) -> Result<R> {
        let mut net = Net::bind(&self.config, &self.params, true)?;
        let mut drop = drop;
        let loss = net.batch_loss(batch, &mut drop)?;
        net.tape.backward(loss)?;
        net.collect_grads(&mut self.params)?;
        Ok(net.tape.scalar(loss))
    }

    /// Keyword encodings, one row per keyword in input order.
    pub fn encode_keywords(&self, keywords: &[usize]) -> Result<Tensor<R>> {
        if keywords.is_empty() {
            return Err(ModelError::Invalid("no keywords".into()));
        }
        let mut net = Net::bind(&self.config, &self.params, false)?;
        let h = net.keyword_rows(keywords, &mut None)?;
        Ok(Tensor::new(vec![keywords.len(), self.config.keyword_dim], net.tape.value(h).to_vec())?)
    }

    /// Template encodings, `M x keyword_dim`.
    pub fn encode_template(&self, template: &[usize]) -> Result<Tensor<R>> {
        if template.is_empty() {
            return Err(ModelError::Invalid("empty template".into()));
        }
        let mut net = Net::bind(&self.config, &self.params, false)?;
        let m = template.len();
        let rows = net.template_rows(template, &[m], m)?;
        let all = net.tape.concat_rows(&rows)?;
        Ok(Tensor::new(vec![m, self.config.keyword_dim], net.tape.value(all).to_vec())?)
    }

    /// Gate value for one template tag against the keyword tags, and the
    /// index of the best-matching keyword tag.
    pub fn match_lambda(&self, tag: usize, keyword_tags: &[usize]) -> Result<(R, usize)> {
        if keyword_tags.is_empty() {
            return Err(ModelError::Invalid("no keyword tags".into()));
        }
        let mut net = Net::bind(&self.config, &self.params, false)?;
        let u = keyword_tags.len();
        let (lam, argmax) = net.lambdas(&[tag], keyword_tags, &vec![true; u], 1, u)?;
        Ok((net.tape.scalar(lam), argmax[0]))
    }

    fn single_context(&self, net: &mut Net<'_, R>, keywords: &[usize]) -> Result<(KeywordContext, Vec<usize>)> {
        if keywords.is_empty() {
            return Err(ModelError::Invalid("no keywords".into()));
        }
        let (kw, order) = canonical_order(keywords);
        let n = kw.len();
        Ok((net.keyword_context(&kw, &vec![true; n], n, &mut None)?, order))
    }

    /// Attention weights (input order) and keyword context for a decoder state.
    pub fn attend(&self, state: &[R], keywords: &[usize], h_tt: &[R]) -> Result<(Vec<R>, Vec<R>)> {
        let mut net = Net::bind(&self.config, &self.params, false)?;
        let (kc, order) = self.single_context(&mut net, keywords)?;
        let s = net.tape.constant(1, self.config.decoder_dim, state.to_vec())?;
        let h = net.tape.constant(1, self.config.keyword_dim, h_tt.to_vec())?;
        let (alpha, c) = net.attend(s, &kc, h)?;
        let a = net.tape.value(alpha);
        let mut out = vec![R::zero(); order.len()];
        for (j, &src) in order.iter().enumerate() {
            out[src] = a[j];
        }
        Ok((out, net.tape.value(c).to_vec()))
    }

    /// One decoder step with an explicit gate value.
    pub fn decode_step(
        &self,
        y_prev: usize,
        state: &[R],
        keywords: &[usize],
        h_tt: &[R],
        lambda: R,
        drop: Option<&mut Dropout>,
    ) -> Result<StepOutputs<R>> {
        if y_prev >= self.config.vocab_size {
            return Err(ModelError::Invalid(format!("word id {y_prev} out of range")));
        }
        check_finite(state, "decoder state")?;
        let mut net = Net::bind(&self.config, &self.params, false)?;
        let (kc, order) = self.single_context(&mut net, keywords)?;
        let s = net.tape.constant(1, self.config.decoder_dim, state.to_vec())?;
        let h = net.tape.constant(1, self.config.keyword_dim, h_tt.to_vec())?;
        let lam = net.tape.constant(1, 1, vec![lambda])?;
        let mut drop = drop;
        let out = net.step(&[y_prev], s, &kc, h, lam, &mut drop)?;
        let t = &net.tape;
        check_finite(t.value(out.state), "decoder state")?;
        let a = t.value(out.alpha);
        let mut alpha = vec![R::zero(); order.len()];
        for (j, &src) in order.iter().enumerate() {
            alpha[src] = a[j];
        }
        Ok(StepOutputs {
            lambda,
            alpha,
            c: t.value(out.c).to_vec(),
            m: t.value(out.m).to_vec(),
            logits: t.value(out.logits).to_vec(),
            state: t.value(out.state).to_vec(),
        })
    }

    /// Decodes one example. `max_len` only matters without a template.
    pub fn generate(&self, input: &GenerationInput, mode: DecodeMode, max_len: usize) -> Result<Generation> {
        match mode {
            DecodeMode::Greedy => self.generate_greedy(input, max_len),
            DecodeMode::Beam(w) => self.generate_beam(input, w, max_len),
        }
    }

    /// Picks the highest-scoring allowed token at every step.
    pub fn generate_greedy(&self, input: &GenerationInput, max_len: usize) -> Result<Generation> {
        let mut session = Session::new(self, input, max_len)?;
        let mut tokens = Vec::new();
        let mut trace = Vec::new();
        let mut score = 0.0;
        let mut prev = BOS;
        let mut state: Option<Vec<R>> = None;
        for t in 0..session.steps {
            let states = state.take().map(|s| vec![s]);
            let mut rows = session.run(t, &[prev], states.as_deref())?;
            let row = rows.pop().unwrap();
            let mut best: Option<(usize, f64)> = None;
            for (tok, &lp) in row.logp.iter().enumerate() {
                if !allowed(tok) {
                    continue;
                }
                let s = score + lp;
                if best.map_or(true, |(_, b)| s > b) {
                    best = Some((tok, s));
                }
            }
            let (tok, s) = best.ok_or_else(|| ModelError::Invalid("no selectable token".into()))?;
            score = s;
            if session.no_template() && tok == EOS {
                break;
            }
            trace.push(session.trace_step(t, tok, &row));
            tokens.push(tok);
            prev = tok;
            state = Some(row.state);
        }
        Ok(Generation {
            tokens,
            trace: DecodeTrace { steps: trace },
            log_prob: score,
        })
    }

    /// Length-synchronized beam search. Candidates are ranked by cumulative
    /// log-probability, ties by hypothesis rank and then token id.
    pub fn generate_beam(&self, input: &GenerationInput, width: usize, max_len: usize) -> Result<Generation> {
        if width == 0 {
            return Err(ModelError::Invalid("beam width must be at least 1".into()));
        }
        let mut session = Session::new(self, input, max_len)?;
        let mut live = vec![Hyp::<R> {
            tokens: Vec::new(),
            score: 0.0,
            state: Vec::new(),
            trace: Vec::new(),
        }];
        let mut finished: Vec<Hyp<R>> = Vec::new();
        for t in 0..session.steps {
            let prev: Vec<usize> = live.iter().map(|h| h.tokens.last().copied().unwrap_or(BOS)).collect();
            let states: Vec<Vec<R>> = live.iter().map(|h| h.state.clone()).collect();
            let rows = session.run(t, &prev, if t == 0 { None } else { Some(&states) })?;
            let mut cands: Vec<(f64, usize, usize)> = Vec::new();
            for (hi, (h, row)) in live.iter().zip(&rows).enumerate() {
                for (tok, &lp) in row.logp.iter().enumerate() {
                    if allowed(tok) {
                        cands.push((h.score + lp, hi, tok));
                    }
                }
            }
            cands.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(Ordering::Equal)
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            let mut next = Vec::with_capacity(width);
            for (score, hi, tok) in cands {
                if next.len() == width {
                    break;
                }
                let parent = &live[hi];
                if session.no_template() && tok == EOS {
                    finished.push(Hyp {
                        score,
                        ..parent.clone()
                    });
                    continue;
                }
                let mut h = parent.clone();
                h.tokens.push(tok);
                h.score = score;
                h.state = rows[hi].state.clone();
                h.trace.push(session.trace_step(t, tok, &rows[hi]));
                next.push(h);
            }
            live = next;
            if live.is_empty() {
                break;
            }
        }
        let best = finished
            .into_iter()
            .chain(live)
            .fold(None::<Hyp<R>>, |best, h| match best {
                Some(b) if b.score >= h.score => Some(b),
                _ => Some(h),
            })
            .ok_or_else(|| ModelError::Invalid("beam search produced no hypothesis".into()))?;
        Ok(Generation {
            tokens: best.tokens,
            trace: DecodeTrace { steps: best.trace },
            log_prob: best.score,
        })
    }

    /// Log-probability of a given output under the model, accumulated the
    /// same way as during search.
    pub fn sequence_log_prob(&self, input: &GenerationInput, tokens: &[usize]) -> Result<f64> {
        let mut session = Session::new(self, input, tokens.len().max(1))?;
        if !session.no_template() && tokens.len() != session.steps {
            return Err(ModelError::Invalid("output length must equal the template length".into()));
        }
        let mut score = 0.0;
        let mut prev = BOS;
        let mut state: Option<Vec<R>> = None;
        for (t, &tok) in tokens.iter().enumerate() {
            let states = state.take().map(|s| vec![s]);
            let row = session.run(t, &[prev], states.as_deref())?.pop().unwrap();
            let lp = *row
                .logp
                .get(tok)
                .ok_or_else(|| ModelError::Invalid(format!("word id {tok} out of range")))?;
            score += lp;
            prev = tok;
            state = Some(row.state);
        }
        Ok(score)
    }
}
