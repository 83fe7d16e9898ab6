//! The generator's computation expressed on a [`Tape`]. Every function works
//! on a batch of `b` examples; single-example calls use `b = 1`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{BOS, EOS, PAD};
use crate::numerics::{ParamStore, Real, Tape, TapeMark, Var};

use super::params::GRU_PARTS;
use super::{Batch, ModelConfig, ModelError, Result};

/// Inverted dropout: kept activations are scaled by `1 / (1 - p)`.
pub struct Dropout<'r> {
    pub p: f64,
    pub rng: &'r mut ChaCha8Rng,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    pub weight: Var,
    pub bias: Var,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Gru {
    w: [Var; 3],
    u: [Var; 3],
    b: [Var; 3],
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TemplateEncoder {
    tag_embedding: Var,
    fwd: Gru,
    bwd: Gru,
    reduce: Linear,
    w_s: Var,
    b_s: Var,
}

#[derive(Debug, Clone, Copy)]
struct Weights {
    word_embedding: Var,
    keyword_mlp: [Linear; 2],
    template: Option<TemplateEncoder>,
    att_state: Var,
    att_keyword: Var,
    att_template: Var,
    att_bias: Var,
    att_v: Var,
    init: Linear,
    decoder: Gru,
    mixer: Linear,
    readout: Linear,
    output: Linear,
    template_vector: Option<Var>,
}

/// Keyword encodings for a batch: `hk` and its attention projection are
/// `(b * n) x d`, with `mask` marking real keywords.
#[derive(Debug, Clone)]
pub(crate) struct KeywordContext {
    pub hk: Var,
    pub proj: Var,
    pub mask: Vec<bool>,
    pub n: usize,
}

/// Tape variables produced by one decoder step.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepVars {
    pub alpha: Var,
    pub c: Var,
    pub m: Var,
    pub state: Var,
    pub logits: Var,
}

/// A tape with the model parameters bound as leaves.
pub(crate) struct Net<'c, R: Real> {
    pub tape: Tape<R>,
    pub cfg: &'c ModelConfig,
    w: Weights,
    bound: Vec<(String, Var)>,
}

impl<'c, R: Real> Net<'c, R> {
    /// Binds every parameter. With `track` the leaves record gradients.
    pub fn bind(cfg: &'c ModelConfig, params: &ParamStore<R>, track: bool) -> Result<Self> {
        let mut tape = Tape::new();
        let mut bound = Vec::with_capacity(params.len());
        let mut get = |name: &str| -> Result<Var> {
            let t = params
                .get(name)
                .ok_or_else(|| ModelError::Invalid(format!("missing parameter {name}")))?;
            let (r, c) = t.dims2();
            let v = tape.leaf(r, c, t.data().to_vec(), track)?;
            bound.push((name.to_string(), v));
            Ok(v)
        };
        let lin = |get: &mut dyn FnMut(&str) -> Result<Var>, name: &str| -> Result<Linear> {
            Ok(Linear {
                weight: get(&format!("{name}.weight"))?,
                bias: get(&format!("{name}.bias"))?,
            })
        };
        let gru = |get: &mut dyn FnMut(&str) -> Result<Var>, name: &str| -> Result<Gru> {
            let mut v = Vec::with_capacity(9);
            for part in GRU_PARTS {
                v.push(get(&format!("{name}.{part}"))?);
            }
            Ok(Gru {
                w: [v[0], v[1], v[2]],
                u: [v[3], v[4], v[5]],
                b: [v[6], v[7], v[8]],
            })
        };
        let word_embedding = get("word_embedding")?;
        let keyword_mlp = [lin(&mut get, "keyword_mlp.0")?, lin(&mut get, "keyword_mlp.1")?];
        let template = if cfg.no_template {
            None
        } else {
            Some(TemplateEncoder {
                tag_embedding: get("tag_embedding")?,
                fwd: gru(&mut get, "template_gru.fwd")?,
                bwd: gru(&mut get, "template_gru.bwd")?,
                reduce: lin(&mut get, "template_reduce")?,
                w_s: get("matcher.w_s")?,
                b_s: get("matcher.b")?,
            })
        };
        let w = Weights {
            word_embedding,
            keyword_mlp,
            template,
            att_state: get("attention.w_state")?,
            att_keyword: get("attention.w_keyword")?,
            att_template: get("attention.w_template")?,
            att_bias: get("attention.bias")?,
            att_v: get("attention.v")?,
            init: lin(&mut get, "decoder_init")?,
            decoder: gru(&mut get, "decoder_gru")?,
            mixer: lin(&mut get, "mixer")?,
            readout: lin(&mut get, "readout")?,
            output: lin(&mut get, "output")?,
            template_vector: if cfg.no_template {
                Some(get("no_template.template_vector")?)
            } else {
                None
            },
        };
        Ok(Net { tape, cfg, w, bound })
    }

    /// Adds the gradients of the last backward pass into `params`. The PAD
    /// embedding row receives none.
    pub fn collect_grads(&self, params: &mut ParamStore<R>) -> Result<()> {
        for (name, var) in &self.bound {
            let Some(g) = self.tape.grad(*var) else { continue };
            let t = params
                .get_mut(name)
                .ok_or_else(|| ModelError::Invalid(format!("missing parameter {name}")))?;
            t.accumulate_grad(g)?;
            if name == "word_embedding" {
                let dw = self.cfg.word_dim;
                if let Some(gm) = t.grad_mut() {
                    gm[PAD * dw..(PAD + 1) * dw].fill(R::zero());
                }
            }
        }
        Ok(())
    }

    pub fn mark(&self) -> TapeMark {
        self.tape.mark()
    }

    fn dropout(&mut self, x: Var, drop: &mut Option<&mut Dropout>) -> Result<Var> {
        let Some(d) = drop.as_mut() else { return Ok(x) };
        if d.p <= 0.0 {
            return Ok(x);
        }
        let (r, c) = self.tape.dims(x);
        let keep = R::lit(1.0 / (1.0 - d.p));
        let mask = (0..r * c)
            .map(|_| if d.rng.gen::<f64>() < d.p { R::zero() } else { keep })
            .collect();
        Ok(self.tape.mul_const(x, mask)?)
    }

    fn linear(&mut self, x: Var, l: Linear) -> Result<Var> {
        Ok(self.tape.linear(x, l.weight, l.bias)?)
    }

    fn gru(&mut self, g: Gru, x: Var, h: Var) -> Result<Var> {
        let t = &mut self.tape;
        let gate = |t: &mut Tape<R>, k: usize| -> Result<Var> {
            let a = t.matmul(x, g.w[k])?;
            let b = t.matmul(h, g.u[k])?;
            let s = t.add(a, b)?;
            let s = t.add_row(s, g.b[k])?;
            Ok(t.sigmoid(s))
        };
        let z = gate(t, 0)?;
        let r = gate(t, 1)?;
        let xn = t.matmul(x, g.w[2])?;
        let xn = t.add_row(xn, g.b[2])?;
        let hn = t.matmul(h, g.u[2])?;
        let rhn = t.mul(r, hn)?;
        let n = t.add(xn, rhn)?;
        let n = t.tanh(n);
        let keep = t.one_minus(z);
        let a = t.mul(keep, n)?;
        let b = t.mul(z, h)?;
        Ok(t.add(a, b)?)
    }

    fn zeros(&mut self, rows: usize, cols: usize) -> Result<Var> {
        Ok(self.tape.constant(rows, cols, vec![R::zero(); rows * cols])?)
    }

    /// Keyword MLP applied to each row independently: `ids.len() x keyword_dim`.
    pub fn keyword_rows(&mut self, ids: &[usize], drop: &mut Option<&mut Dropout>) -> Result<Var> {
        let e = self.tape.gather_rows(self.w.word_embedding, ids)?;
        let [l0, l1] = self.w.keyword_mlp;
        let h = self.linear(e, l0)?;
        let h = self.tape.tanh(h);
        let h = self.dropout(h, drop)?;
        let h = self.linear(h, l1)?;
        let h = self.tape.tanh(h);
        self.dropout(h, drop)
    }

    pub fn keyword_context(
        &mut self,
        ids: &[usize],
        mask: &[bool],
        n: usize,
        drop: &mut Option<&mut Dropout>,
    ) -> Result<KeywordContext> {
        let hk = self.keyword_rows(ids, drop)?;
        let proj = self.tape.matmul(hk, self.w.att_keyword)?;
        Ok(KeywordContext {
            hk,
            proj,
            mask: mask.to_vec(),
            n,
        })
    }

    /// Copies of the first group of `kc`, `count` times (beam hypotheses
    /// share one keyword set).
    pub fn replicate(&mut self, kc: &KeywordContext, count: usize) -> Result<KeywordContext> {
        let idx: Vec<usize> = (0..count).flat_map(|_| 0..kc.n).collect();
        Ok(KeywordContext {
            hk: self.tape.gather_rows(kc.hk, &idx)?,
            proj: self.tape.gather_rows(kc.proj, &idx)?,
            mask: idx.iter().map(|&i| kc.mask[i]).collect(),
            n: kc.n,
        })
    }

    fn template_encoder(&self) -> Result<TemplateEncoder> {
        self.w
            .template
            .ok_or_else(|| ModelError::Invalid("model was built without a template encoder".into()))
    }

    /// BiGRU over tag embeddings. `tt` is `b x m` row-major, `lens[i]` the
    /// real length of row `i`. Returns one `b x keyword_dim` matrix per position.
    pub fn template_rows(&mut self, tt: &[usize], lens: &[usize], m: usize) -> Result<Vec<Var>> {
        let enc = self.template_encoder()?;
        let b = lens.len();
        let ht = self.cfg.template_hidden;
        let mut inputs = Vec::with_capacity(m);
        for t in 0..m {
            let ids: Vec<usize> = (0..b).map(|i| tt[i * m + t]).collect();
            inputs.push(self.tape.gather_rows(enc.tag_embedding, &ids)?);
        }
        let run = |net: &mut Self, g: Gru, order: Vec<usize>| -> Result<Vec<Var>> {
            let mut out = vec![None; m];
            let mut h = net.zeros(b, ht)?;
            for t in order {
                let next = net.gru(g, inputs[t], h)?;
                let live: Vec<bool> = lens.iter().map(|&l| t < l).collect();
                h = if live.iter().all(|&x| x) {
                    next
                } else {
                    net.tape.select_rows(&live, next, h)?
                };
                out[t] = Some(h);
            }
            Ok(out.into_iter().map(Option::unwrap).collect())
        };
        let fwd = run(self, enc.fwd, (0..m).collect())?;
        let bwd = run(self, enc.bwd, (0..m).rev().collect())?;
        let mut rows = Vec::with_capacity(m);
        for t in 0..m {
            let cat = self.tape.concat_cols(&[fwd[t], bwd[t]])?;
            let r = self.linear(cat, enc.reduce)?;
            rows.push(self.tape.tanh(r));
        }
        Ok(rows)
    }

    /// Gate values for every template position: `(b * m) x 1`, rows ordered
    /// example-major, plus the selected keyword-tag row for each.
    pub fn lambdas(&mut self, tt: &[usize], kt: &[usize], kt_mask: &[bool], m: usize, u: usize) -> Result<(Var, Vec<usize>)> {
        let enc = self.template_encoder()?;
        let a = self.tape.gather_rows(enc.tag_embedding, tt)?;
        let a = self.tape.row_normalize(a)?;
        let b = self.tape.gather_rows(enc.tag_embedding, kt)?;
        let b = self.tape.row_normalize(b)?;
        let s = self.tape.group_max_dot(a, b, m, u, kt_mask)?;
        let argmax = self.tape.argmax_of(s).map(<[usize]>::to_vec).unwrap_or_default();
        let z = self.tape.mul(s, enc.w_s)?;
        let z = self.tape.add(z, enc.b_s)?;
        Ok((self.tape.sigmoid(z), argmax))
    }

    /// Learned stand-in for the template encoding, `b` copies.
    pub fn template_vector(&mut self, b: usize) -> Result<Var> {
        let v = self
            .w
            .template_vector
            .ok_or_else(|| ModelError::Invalid("model has no template vector".into()))?;
        Ok(self.tape.repeat_rows(v, b))
    }

    pub fn initial_state(&mut self, kc: &KeywordContext, h_last: Var) -> Result<Var> {
        let mean = self.tape.group_mean(kc.hk, kc.n, &kc.mask)?;
        let cat = self.tape.concat_cols(&[mean, h_last])?;
        let s = self.linear(cat, self.w.init)?;
        Ok(self.tape.tanh(s))
    }

    pub fn attend(&mut self, state: Var, kc: &KeywordContext, h_tt: Var) -> Result<(Var, Var)> {
        let b = self.tape.dims(state).0;
        let qs = self.tape.matmul(state, self.w.att_state)?;
        let qt = self.tape.matmul(h_tt, self.w.att_template)?;
        let q = self.tape.add(qs, qt)?;
        let q = self.tape.add_row(q, self.w.att_bias)?;
        let q = self.tape.repeat_rows(q, kc.n);
        let e = self.tape.add(kc.proj, q)?;
        let e = self.tape.tanh(e);
        let e = self.tape.matmul(e, self.w.att_v)?;
        let e = self.tape.reshape(e, b, kc.n)?;
        let alpha = self.tape.softmax_rows(e, Some(&kc.mask))?;
        let c = self.tape.group_weighted_sum(alpha, kc.hk)?;
        Ok((alpha, c))
    }

    /// One decoder step. `lambda` is `b x 1`.
    pub fn step(
        &mut self,
        y_prev: &[usize],
        state: Var,
        kc: &KeywordContext,
        h_tt: Var,
        lambda: Var,
        drop: &mut Option<&mut Dropout>,
    ) -> Result<StepVars> {
        let emb = self.tape.gather_rows(self.w.word_embedding, y_prev)?;
        let (alpha, c) = self.attend(state, kc, h_tt)?;
        let lc = self.tape.scale_rows(c, lambda)?;
        let rest = self.tape.one_minus(lambda);
        let lh = self.tape.scale_rows(h_tt, rest)?;
        let mix_in = self.tape.concat_cols(&[lc, lh])?;
        let m = self.linear(mix_in, self.w.mixer)?;
        let m = self.tape.tanh(m);
        let x = self.tape.concat_cols(&[emb, m])?;
        let s = self.gru(self.w.decoder, x, state)?;
        let r_in = self.tape.concat_cols(&[emb, s, m])?;
        let o = self.linear(r_in, self.w.readout)?;
        let o = self.tape.tanh(o);
        let o = self.dropout(o, drop)?;
        let logits = self.linear(o, self.w.output)?;
        Ok(StepVars {
            alpha,
            c,
            m,
            state: s,
            logits,
        })
    }

    /// Mean teacher-forced cross-entropy over the real target positions.
    pub fn batch_loss(&mut self, batch: &Batch, drop: &mut Option<&mut Dropout>) -> Result<Var> {
        let b = batch.size;
        let m = batch.m_max;
        let kc = self.keyword_context(&batch.keywords, &batch.keyword_mask, batch.n_max, drop)?;
        let no_template = self.cfg.no_template;
        let (h_tt, lambdas, h_last) = if no_template {
            let v = self.template_vector(b)?;
            let ones = self.tape.constant(b, 1, vec![R::one(); b])?;
            (vec![v; m + 1], vec![ones; m + 1], v)
        } else {
            let rows = self.template_rows(&batch.template, &batch.lengths, m)?;
            let (lam, _) = self.lambdas(&batch.template, &batch.keyword_tags, &batch.keyword_tag_mask, m, batch.u_max)?;
            let mut lams = Vec::with_capacity(m);
            for t in 0..m {
                let idx: Vec<usize> = (0..b).map(|i| i * m + t).collect();
                lams.push(self.tape.gather_rows(lam, &idx)?);
            }
            let all = self.tape.concat_rows(&rows)?;
            let idx: Vec<usize> = batch.lengths.iter().enumerate().map(|(i, &l)| (l - 1) * b + i).collect();
            let last = self.tape.gather_rows(all, &idx)?;
            (rows, lams, last)
        };
        let steps = if no_template { m + 1 } else { m };
        let mut state = self.initial_state(&kc, h_last)?;
        let mut total: Option<Var> = None;
        let mut count = 0usize;
        for t in 0..steps {
            let y_prev: Vec<usize> = (0..b)
                .map(|i| match t {
                    0 => BOS,
                    _ if t - 1 < batch.lengths[i] => batch.reference[i * m + t - 1],
                    _ => PAD,
                })
                .collect();
            let mut targets = Vec::with_capacity(b);
            let mut mask = Vec::with_capacity(b);
            for i in 0..b {
                let len = batch.lengths[i];
                if t < len {
                    targets.push(batch.reference[i * m + t]);
                    mask.push(true);
                } else if no_template && t == len {
                    targets.push(EOS);
                    mask.push(true);
                } else {
                    targets.push(PAD);
                    mask.push(false);
                }
            }
            let out = self.step(&y_prev, state, &kc, h_tt[t], lambdas[t], drop)?;
            state = out.state;
            let live = mask.iter().filter(|&&x| x).count();
            if live == 0 {
                continue;
            }
            count += live;
            let ce = self.tape.cross_entropy_rows(out.logits, &targets, &mask)?;
            total = Some(match total {
                None => ce,
                Some(acc) => self.tape.add(acc, ce)?,
            });
        }
        let total = total.ok_or_else(|| ModelError::Invalid("batch has no target tokens".into()))?;
        let loss = self.tape.scale(total, R::lit(1.0 / count as f64));
        if !self.tape.scalar(loss).is_finite() {
            return Err(ModelError::NonFinite("training loss".into()));
        }
        Ok(loss)
    }
}
