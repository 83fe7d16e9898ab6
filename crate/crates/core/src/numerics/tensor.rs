use std::collections::BTreeMap;

use rand::Rng;

use super::{NumericsError, Real, Result};

/// A dense row-major array with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<R> {
    shape: Vec<usize>,
    data: Vec<R>,
    grad: Option<Vec<R>>,
    requires_grad: bool,
}

impl<R: Real> Tensor<R> {
    pub fn new(shape: Vec<usize>, data: Vec<R>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(NumericsError::Dimension {
                op: "tensor",
                left: shape,
                right: vec![data.len()],
            });
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(NumericsError::Dimension {
                op: "tensor",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![R::zero(); numel],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> R) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: (0..numel).map(&mut f).collect(),
            grad: None,
            requires_grad: false,
        }
    }

    pub fn uniform(shape: Vec<usize>, bound: f64, rng: &mut impl Rng) -> Self {
        Self::from_fn(shape, |_| R::lit(rng.gen_range(-bound..bound)))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(vec![n, n], |i| {
            if i / n == i % n {
                R::one()
            } else {
                R::zero()
            }
        })
    }

    pub fn with_requires_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Shape viewed as a matrix: vectors are a single row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            other => (other[..other.len() - 1].iter().product(), other[other.len() - 1]),
        }
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[R]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [R]> {
        self.grad.as_deref_mut()
    }

    /// Adds `g` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[R]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(NumericsError::Dimension {
                op: "accumulate_grad",
                left: self.shape.clone(),
                right: vec![g.len()],
            });
        }
        let grad = self
            .grad
            .get_or_insert_with(|| vec![R::zero(); self.data.len()]);
        for (acc, &x) in grad.iter_mut().zip(g) {
            *acc += x;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|x| *x = R::zero());
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn cast<S: Real>(&self) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| S::lit(x.as_f64())).collect(),
            grad: self
                .grad
                .as_ref()
                .map(|g| g.iter().map(|x| S::lit(x.as_f64())).collect()),
            requires_grad: self.requires_grad,
        }
    }
}

/// Named parameter tensors, iterated in name order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<R> {
    tensors: BTreeMap<String, Tensor<R>>,
}

impl<R: Real> ParamStore<R> {
    pub fn new() -> Self {
        ParamStore {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<R>) {
        self.tensors
            .insert(name.into(), tensor.with_requires_grad(true));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<R>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<R>> {
        self.tensors.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<R>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<R>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn zero_grads(&mut self) {
        self.tensors.values_mut().for_each(Tensor::zero_grad);
    }

    pub fn cast<S: Real>(&self) -> ParamStore<S> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Bitwise comparison of parameter values (gradients ignored).
    pub fn same_values(&self, other: &ParamStore<R>) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|((ka, a), (kb, b))| {
                ka == kb
                    && a.shape == b.shape
                    && a.data
                        .iter()
                        .zip(&b.data)
                        .all(|(x, y)| x.to_bits_u64() == y.to_bits_u64())
            })
    }
}

trait Bits {
    fn to_bits_u64(&self) -> u64;
}

impl<R: Real> Bits for R {
    fn to_bits_u64(&self) -> u64 {
        self.as_f64().to_bits()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 6]).is_ok());
        let err = Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, NumericsError::Dimension { .. }));
        assert!(Tensor::<f64>::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn grad_accumulates_with_matching_shape() {
        let mut t = Tensor::<f64>::zeros(vec![2]);
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        assert_eq!(t.grad().unwrap(), &[2.0, 4.0]);
        assert!(t.accumulate_grad(&[1.0]).is_err());
        t.zero_grad();
        assert_eq!(t.grad().unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn identity_is_square_one_hot() {
        let t = Tensor::<f32>::identity(3);
        assert_eq!(t.data(), &[1., 0., 0., 0., 1., 0., 0., 0., 1.]);
    }
}
