use std::collections::BTreeMap;

use super::{NumericsError, ParamStore, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with per-parameter moment buffers keyed by name.
#[derive(Debug, Clone)]
pub struct Adam<R> {
    pub config: AdamConfig,
    step: u64,
    m: BTreeMap<String, Vec<R>>,
    v: BTreeMap<String, Vec<R>>,
}

impl<R: Real> Adam<R> {
    pub fn new(config: AdamConfig, params: &ParamStore<R>) -> Self {
        let zeros = |t: &crate::numerics::Tensor<R>| vec![R::zero(); t.numel()];
        Adam {
            config,
            step: 0,
            m: params.iter().map(|(k, t)| (k.to_string(), zeros(t))).collect(),
            v: params.iter().map(|(k, t)| (k.to_string(), zeros(t))).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every registered parameter, then zeroes the grads.
    pub fn step(&mut self, params: &mut ParamStore<R>) -> Result<()> {
        for name in self.m.keys() {
            let t = params
                .get(name)
                .ok_or_else(|| NumericsError::State(format!("parameter {name} is not registered")))?;
            if t.grad().is_none() {
                return Err(NumericsError::State(format!("parameter {name} has no gradient")));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1 = R::lit(c.beta1);
        let b2 = R::lit(c.beta2);
        let bc1 = R::one() - R::lit(c.beta1.powi(t));
        let bc2 = R::one() - R::lit(c.beta2.powi(t));
        let lr = R::lit(c.lr);
        let eps = R::lit(c.eps);
        for (name, tensor) in params.iter_mut() {
            let (Some(m), Some(v)) = (self.m.get_mut(name), self.v.get_mut(name)) else {
                continue;
            };
            let grad = tensor.grad().map(<[R]>::to_vec).unwrap_or_default();
            for (i, p) in tensor.data_mut().iter_mut().enumerate() {
                let g = grad[i];
                m[i] = b1 * m[i] + (R::one() - b1) * g;
                v[i] = b2 * v[i] + (R::one() - b2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
            tensor.zero_grad();
        }
        Ok(())
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<R: Real>(params: &mut ParamStore<R>, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for (_, t) in params.iter() {
        if let Some(g) = t.grad() {
            for &x in g {
                sq += x.as_f64() * x.as_f64();
            }
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm.is_finite() {
        let k = R::lit(max_norm / norm);
        for (_, t) in params.iter_mut() {
            if let Some(g) = t.grad_mut() {
                g.iter_mut().for_each(|x| *x *= k);
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Tape, Tensor};

    fn scalar_store(p: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("p", Tensor::new(vec![1], vec![p]).unwrap());
        s
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut store = scalar_store(1.5);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        store.get_mut("p").unwrap().accumulate_grad(&[0.0]).unwrap();
        adam.step(&mut store).unwrap();
        assert_eq!(store.get("p").unwrap().data(), &[1.5]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_matches_hand_evaluation() {
        // m = 0.1, v = 0.001; bias correction gives mhat = vhat = 1.
        let mut store = scalar_store(1.0);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        store.get_mut("p").unwrap().accumulate_grad(&[1.0]).unwrap();
        adam.step(&mut store).unwrap();
        let expected = 1.0 - 0.001 * 1.0 / (1.0 + 1e-8);
        assert!((store.get("p").unwrap().data()[0] - expected).abs() < 1e-15);
        assert_eq!(store.get("p").unwrap().grad().unwrap(), &[0.0]);
    }

    #[test]
    fn missing_gradient_names_the_parameter() {
        let mut store = scalar_store(1.0);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        let err = adam.step(&mut store).unwrap_err();
        assert!(err.to_string().contains('p'));
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut store = scalar_store(0.0);
        let mut adam = Adam::new(
            AdamConfig {
                lr: 0.1,
                ..AdamConfig::default()
            },
            &store,
        );
        for _ in 0..200 {
            let mut tape = Tape::new();
            let p = tape.tensor(store.get("p").unwrap());
            let d = tape.add_scalar(p, -3.0);
            let sq = tape.mul(d, d).unwrap();
            let loss = tape.sum(sq);
            tape.backward(loss).unwrap();
            let g = tape.grad(p).unwrap().to_vec();
            store.get_mut("p").unwrap().accumulate_grad(&g).unwrap();
            adam.step(&mut store).unwrap();
        }
        let p = store.get("p").unwrap().data()[0];
        assert!((p - 3.0).abs() < 0.05, "p = {p}");
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let mut store = ParamStore::<f64>::new();
        store.insert("a", Tensor::zeros(vec![2]));
        store.get_mut("a").unwrap().accumulate_grad(&[3.0, 4.0]).unwrap();
        let before = clip_grad_norm(&mut store, 1.0);
        assert!((before - 5.0).abs() < 1e-12);
        let g = store.get("a").unwrap().grad().unwrap();
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
    }
}
