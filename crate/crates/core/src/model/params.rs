use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::PAD;
use crate::numerics::{ParamStore, Real, Tensor};

use super::{ModelConfig, ModelError, Result};

pub(crate) const GRU_PARTS: [&str; 9] = ["w_z", "w_r", "w_n", "u_z", "u_r", "u_n", "b_z", "b_r", "b_n"];

fn gru_shapes(prefix: &str, input: usize, hidden: usize, out: &mut Vec<(String, Vec<usize>)>) {
    for part in GRU_PARTS {
        let shape = match part.as_bytes()[0] {
            b'w' => vec![input, hidden],
            b'u' => vec![hidden, hidden],
            _ => vec![1, hidden],
        };
        out.push((format!("{prefix}.{part}"), shape));
    }
}

/// Every parameter with its shape, in creation order.
pub fn param_shapes(c: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (v, t, dw, dk, ht, dh, a) = (
        c.vocab_size,
        c.tag_vocab_size,
        c.word_dim,
        c.keyword_dim,
        c.template_hidden,
        c.decoder_dim,
        c.attention_dim,
    );
    let mut s: Vec<(String, Vec<usize>)> = Vec::new();
    let lin = |s: &mut Vec<(String, Vec<usize>)>, name: &str, i: usize, o: usize| {
        s.push((format!("{name}.weight"), vec![i, o]));
        s.push((format!("{name}.bias"), vec![1, o]));
    };
    s.push(("word_embedding".into(), vec![v, dw]));
    lin(&mut s, "keyword_mlp.0", dw, dk);
    lin(&mut s, "keyword_mlp.1", dk, dk);
    if !c.no_template {
        s.push(("tag_embedding".into(), vec![t, t]));
        gru_shapes("template_gru.fwd", t, ht, &mut s);
        gru_shapes("template_gru.bwd", t, ht, &mut s);
        lin(&mut s, "template_reduce", 2 * ht, dk);
        s.push(("matcher.w_s".into(), vec![1, 1]));
        s.push(("matcher.b".into(), vec![1, 1]));
    }
    s.push(("attention.w_state".into(), vec![dh, a]));
    s.push(("attention.w_keyword".into(), vec![dk, a]));
    s.push(("attention.w_template".into(), vec![dk, a]));
    s.push(("attention.bias".into(), vec![1, a]));
    s.push(("attention.v".into(), vec![a, 1]));
    lin(&mut s, "decoder_init", 2 * dk, dh);
    gru_shapes("decoder_gru", dw + dk, dh, &mut s);
    lin(&mut s, "mixer", 2 * dk, dk);
    lin(&mut s, "readout", dw + dh + dk, dh);
    lin(&mut s, "output", dh, v);
    if c.no_template {
        s.push(("no_template.template_vector".into(), vec![1, dk]));
    }
    s
}

/// Fresh parameters: uniform in `±init_scale`, identity tag embedding,
/// matcher weight 5 and bias -2.5, zero PAD embedding.
pub fn init_params<R: Real>(c: &ModelConfig, seed: u64) -> Result<ParamStore<R>> {
    c.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (name, shape) in param_shapes(c) {
        let t = match name.as_str() {
            "tag_embedding" => Tensor::identity(shape[0]),
            "matcher.w_s" => Tensor::from_fn(shape, |_| R::lit(5.0)),
            "matcher.b" => Tensor::from_fn(shape, |_| R::lit(-2.5)),
            _ => {
                let mut t = Tensor::uniform(shape, c.init_scale, &mut rng);
                if name == "word_embedding" {
                    let dw = c.word_dim;
                    t.data_mut()[PAD * dw..(PAD + 1) * dw].fill(R::zero());
                }
                t
            }
        };
        store.insert(name, t);
    }
    Ok(store)
}

/// A configured model with its parameters.
#[derive(Debug, Clone)]
pub struct Generator<R> {
    pub config: ModelConfig,
    pub params: ParamStore<R>,
}

impl<R: Real> Generator<R> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(Generator { config, params })
    }

    /// Wraps existing parameters after checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamStore<R>) -> Result<Self> {
        config.validate()?;
        let expected = param_shapes(&config);
        if expected.len() != params.len() {
            return Err(ModelError::Invalid(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in &expected {
            match params.get(name) {
                None => return Err(ModelError::Invalid(format!("missing parameter {name}"))),
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(ModelError::Invalid(format!(
                        "parameter {name} has shape {:?}, expected {:?}",
                        t.shape(),
                        shape
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(Generator { config, params })
    }

    pub fn cast<S: Real>(&self) -> Generator<S> {
        Generator {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }
}
