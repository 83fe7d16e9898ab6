use super::{NumericsError, Real, Result, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Opaque position on the tape, used to discard everything recorded after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapeMark(usize);

#[derive(Debug, Clone)]
enum Op<R> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, R),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    AddRow(Var, Var),
    ScaleRows(Var, Var),
    RepeatRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    SoftmaxRows(Var),
    GroupWeightedSum(Var, Var),
    GroupMean { h: Var, mask: Vec<bool>, counts: Vec<usize> },
    RowNormalize { x: Var, norms: Vec<R> },
    GroupMaxDot { a: Var, b: Var, argmax: Vec<usize> },
    CrossEntropyRows { logits: Var, targets: Vec<usize>, mask: Vec<bool>, probs: Vec<R> },
    Sum(Var),
    MulConst(Var, Vec<R>),
    SelectRows { mask: Vec<bool>, on: Var, off: Var },
}

#[derive(Debug, Clone)]
struct Node<R> {
    rows: usize,
    cols: usize,
    value: Vec<R>,
    op: Op<R>,
    requires_grad: bool,
}

/// Reverse-mode computation tape.
///
/// Nodes are appended in execution order, so inputs always precede their
/// consumers; [`Tape::backward`] walks the nodes once in reverse. All
/// reductions run left to right so identical inputs give bitwise identical
/// results.
#[derive(Debug, Clone, Default)]
pub struct Tape<R> {
    nodes: Vec<Node<R>>,
    grads: Vec<Option<Vec<R>>>,
    consumed: bool,
}

fn dim_err(op: &'static str, a: (usize, usize), b: (usize, usize)) -> NumericsError {
    NumericsError::Dimension {
        op,
        left: vec![a.0, a.1],
        right: vec![b.0, b.1],
    }
}

fn sigmoid<R: Real>(x: R) -> R {
    if x >= R::zero() {
        R::one() / (R::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (R::one() + e)
    }
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn mark(&self) -> TapeMark {
        TapeMark(self.nodes.len())
    }

    /// Drops every node recorded after `mark` along with all gradients.
    pub fn rewind(&mut self, mark: TapeMark) {
        self.nodes.truncate(mark.0);
        self.grads.clear();
        self.consumed = false;
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<R>, op: Op<R>, requires_grad: bool) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<R> {
        &self.nodes[v.0]
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &[R] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> R {
        self.nodes[v.0].value[0]
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn row(&self, v: Var, r: usize) -> &[R] {
        let n = &self.nodes[v.0];
        &n.value[r * n.cols..(r + 1) * n.cols]
    }

    /// Gradient of the last backward pass. `None` for nodes that do not
    /// require gradients; zeros for grad-requiring leaves the loss ignores.
    pub fn grad(&self, v: Var) -> Option<&[R]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn leaf(&mut self, rows: usize, cols: usize, value: Vec<R>, requires_grad: bool) -> Result<Var> {
        if rows * cols != value.len() || rows == 0 || cols == 0 {
            return Err(NumericsError::Dimension {
                op: "leaf",
                left: vec![rows, cols],
                right: vec![value.len()],
            });
        }
        Ok(self.push(rows, cols, value, Op::Leaf, requires_grad))
    }

    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<R>) -> Result<Var> {
        self.leaf(rows, cols, value, false)
    }

    pub fn scalar_const(&mut self, x: R) -> Var {
        self.push(1, 1, vec![x], Op::Leaf, false)
    }

    /// Records a tensor as a leaf; gradients are tracked if the tensor asks for them.
    pub fn tensor(&mut self, t: &Tensor<R>) -> Var {
        let (r, c) = t.dims2();
        self.push(r, c, t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(dim_err("matmul", (m, k), (k2, n)));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![R::zero(); m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == R::zero() {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &y) in orow.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(m, n, out, Op::MatMul(a, b), rg))
    }

    fn broadcast(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(R, R) -> R) -> Result<(usize, usize, Vec<R>)> {
        let da = self.dims(a);
        let db = self.dims(b);
        let av = self.value(a);
        let bv = self.value(b);
        if da == db {
            Ok((da.0, da.1, av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect()))
        } else if db == (1, 1) {
            let y = bv[0];
            Ok((da.0, da.1, av.iter().map(|&x| f(x, y)).collect()))
        } else if da == (1, 1) {
            let x = av[0];
            Ok((db.0, db.1, bv.iter().map(|&y| f(x, y)).collect()))
        } else {
            Err(dim_err(op, da, db))
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c, v) = self.broadcast("add", a, b, |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c, v) = self.broadcast("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c, v) = self.broadcast("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, v, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: R) -> Var {
        let (r, c) = self.dims(a);
        let v = self.value(a).iter().map(|&x| x * s).collect();
        let rg = self.rg(a);
        self.push(r, c, v, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: R) -> Var {
        let (r, c) = self.dims(a);
        let v = self.value(a).iter().map(|&x| x + s).collect();
        let rg = self.rg(a);
        self.push(r, c, v, Op::AddScalar(a), rg)
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -R::one());
        self.add_scalar(neg, R::one())
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let v = self.value(a).iter().map(|x| x.tanh()).collect();
        let rg = self.rg(a);
        self.push(r, c, v, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let v = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        let rg = self.rg(a);
        self.push(r, c, v, Op::Sigmoid(a), rg)
    }

    /// Elementwise product with a constant array (dropout masks).
    pub fn mul_const(&mut self, a: Var, k: Vec<R>) -> Result<Var> {
        let (r, c) = self.dims(a);
        if k.len() != r * c {
            return Err(dim_err("mul_const", (r, c), (1, k.len())));
        }
        let v = self.value(a).iter().zip(&k).map(|(&x, &y)| x * y).collect();
        let rg = self.rg(a);
        Ok(self.push(r, c, v, Op::MulConst(a, k), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(NumericsError::State("concat of nothing".into()))?;
        let rows = self.dims(first).0;
        let mut cols = 0;
        for &p in parts {
            let d = self.dims(p);
            if d.0 != rows {
                return Err(dim_err("concat_cols", self.dims(first), d));
            }
            cols += d.1;
        }
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.row(p, r));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(rows, cols, out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(NumericsError::State("concat of nothing".into()))?;
        let cols = self.dims(first).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let d = self.dims(p);
            if d.1 != cols {
                return Err(dim_err("concat_rows", self.dims(first), d));
            }
            rows += d.0;
            out.extend_from_slice(self.value(p));
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(rows, cols, out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Adds a `1 x c` row vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.dims(x);
        let db = self.dims(bias);
        if db != (1, c) {
            return Err(dim_err("add_row", (r, c), db));
        }
        let bv = self.value(bias);
        let v = self
            .value(x)
            .chunks(c)
            .flat_map(|row| row.iter().zip(bv).map(|(&a, &b)| a + b))
            .collect();
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(r, c, v, Op::AddRow(x, bias), rg))
    }

    /// `x W + b`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let xw = self.matmul(x, weight)?;
        self.add_row(xw, bias)
    }

    /// Multiplies row `i` of `x` by `s[i]`, where `s` is `r x 1`.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (r, c) = self.dims(x);
        let ds = self.dims(s);
        if ds != (r, 1) {
            return Err(dim_err("scale_rows", (r, c), ds));
        }
        let sv = self.value(s);
        let v = self
            .value(x)
            .chunks(c)
            .zip(sv)
            .flat_map(|(row, &k)| row.iter().map(move |&a| a * k))
            .collect();
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(r, c, v, Op::ScaleRows(x, s), rg))
    }

    /// Repeats each row `n` times consecutively: `r x c -> (r*n) x c`.
    pub fn repeat_rows(&mut self, x: Var, n: usize) -> Var {
        let (r, c) = self.dims(x);
        let mut out = Vec::with_capacity(r * n * c);
        for i in 0..r {
            let row = self.row(x, i);
            for _ in 0..n {
                out.extend_from_slice(row);
            }
        }
        let rg = self.rg(x);
        self.push(r * n, c, out, Op::RepeatRows(x, n), rg)
    }

    /// Row lookup; also serves as the embedding layer.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = self.dims(table);
        if idx.is_empty() {
            return Err(NumericsError::State("gather of zero rows".into()));
        }
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= r {
                return Err(NumericsError::Index {
                    op: "gather_rows",
                    index: i,
                    size: r,
                });
            }
            out.extend_from_slice(self.row(table, i));
        }
        let rg = self.rg(table);
        Ok(self.push(idx.len(), c, out, Op::GatherRows(table, idx.to_vec()), rg))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let d = self.dims(x);
        if d.0 * d.1 != rows * cols {
            return Err(dim_err("reshape", d, (rows, cols)));
        }
        let v = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(rows, cols, v, Op::Reshape(x), rg))
    }

    /// Row-wise softmax. Masked positions (`mask[i] == false`) are exactly zero.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (r, c) = self.dims(x);
        if let Some(m) = mask {
            if m.len() != r * c {
                return Err(dim_err("softmax", (r, c), (1, m.len())));
            }
        }
        let xv = self.value(x);
        let mut out = vec![R::zero(); r * c];
        for i in 0..r {
            let keep = |j: usize| mask.map_or(true, |m| m[i * c + j]);
            let row = &xv[i * c..(i + 1) * c];
            let mut max: Option<R> = None;
            for (j, &v) in row.iter().enumerate() {
                if keep(j) {
                    max = Some(max.map_or(v, |m: R| m.max(v)));
                }
            }
            let max = max.ok_or(NumericsError::InvalidMask { op: "softmax" })?;
            let mut total = R::zero();
            for (j, &v) in row.iter().enumerate() {
                if keep(j) {
                    let e = (v - max).exp();
                    out[i * c + j] = e;
                    total += e;
                }
            }
            for o in &mut out[i * c..(i + 1) * c] {
                *o /= total;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(r, c, out, Op::SoftmaxRows(x), rg))
    }

    /// `alpha: g x n`, `h: (g*n) x d`; row `k` of the output is
    /// `sum_j alpha[k, j] * h[k*n + j]`, summed in ascending `j`.
    pub fn group_weighted_sum(&mut self, alpha: Var, h: Var) -> Result<Var> {
        let (g, n) = self.dims(alpha);
        let (hr, d) = self.dims(h);
        if hr != g * n {
            return Err(dim_err("group_weighted_sum", (g, n), (hr, d)));
        }
        let av = self.value(alpha);
        let hv = self.value(h);
        let mut out = vec![R::zero(); g * d];
        for k in 0..g {
            let orow = &mut out[k * d..(k + 1) * d];
            for j in 0..n {
                let w = av[k * n + j];
                let hrow = &hv[(k * n + j) * d..(k * n + j + 1) * d];
                for (o, &x) in orow.iter_mut().zip(hrow) {
                    *o += w * x;
                }
            }
        }
        let rg = self.rg(alpha) || self.rg(h);
        Ok(self.push(g, d, out, Op::GroupWeightedSum(alpha, h), rg))
    }

    /// Mean of the unmasked rows of each consecutive group of `n` rows.
    pub fn group_mean(&mut self, h: Var, n: usize, mask: &[bool]) -> Result<Var> {
        let (hr, d) = self.dims(h);
        if n == 0 || hr % n != 0 || mask.len() != hr {
            return Err(dim_err("group_mean", (hr, d), (n, mask.len())));
        }
        let g = hr / n;
        let hv = self.value(h);
        let mut out = vec![R::zero(); g * d];
        let mut counts = Vec::with_capacity(g);
        for k in 0..g {
            let orow = &mut out[k * d..(k + 1) * d];
            let mut count = 0;
            for j in 0..n {
                if mask[k * n + j] {
                    count += 1;
                    for (o, &x) in orow.iter_mut().zip(&hv[(k * n + j) * d..(k * n + j + 1) * d]) {
                        *o += x;
                    }
                }
            }
            if count == 0 {
                return Err(NumericsError::InvalidMask { op: "group_mean" });
            }
            let inv = R::lit(count as f64);
            orow.iter_mut().for_each(|o| *o /= inv);
            counts.push(count);
        }
        let rg = self.rg(h);
        Ok(self.push(
            g,
            d,
            out,
            Op::GroupMean {
                h,
                mask: mask.to_vec(),
                counts,
            },
            rg,
        ))
    }

    /// Scales each row to unit L2 norm. A zero row is an error rather than NaN.
    pub fn row_normalize(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims(x);
        let xv = self.value(x);
        let mut norms = Vec::with_capacity(r);
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            let row = &xv[i * c..(i + 1) * c];
            let mut sq = R::zero();
            for &v in row {
                sq += v * v;
            }
            let n = sq.sqrt();
            if !(n > R::zero()) || !n.is_finite() {
                return Err(NumericsError::Degenerate {
                    op: "row_normalize",
                    detail: format!("row {i} has norm {n}"),
                });
            }
            norms.push(n);
            out.extend(row.iter().map(|&v| v / n));
        }
        let rg = self.rg(x);
        Ok(self.push(r, c, out, Op::RowNormalize { x, norms }, rg))
    }

    /// For row `i` of `a` (group `i / m`), the maximum dot product with the
    /// unmasked rows of that group's block of `u` rows in `b`. Ties go to the
    /// lowest index; the gradient flows through the selected pair only.
    pub fn group_max_dot(&mut self, a: Var, b: Var, m: usize, u: usize, b_mask: &[bool]) -> Result<Var> {
        let (ar, d) = self.dims(a);
        let (br, d2) = self.dims(b);
        if d != d2 || m == 0 || u == 0 || ar % m != 0 || br != (ar / m) * u || b_mask.len() != br {
            return Err(dim_err("group_max_dot", (ar, d), (br, d2)));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = Vec::with_capacity(ar);
        let mut argmax = Vec::with_capacity(ar);
        for i in 0..ar {
            let g = i / m;
            let arow = &av[i * d..(i + 1) * d];
            let mut best: Option<(usize, R)> = None;
            for j in g * u..(g + 1) * u {
                if !b_mask[j] {
                    continue;
                }
                let mut dot = R::zero();
                for (&x, &y) in arow.iter().zip(&bv[j * d..(j + 1) * d]) {
                    dot += x * y;
                }
                if best.map_or(true, |(_, s)| dot > s) {
                    best = Some((j, dot));
                }
            }
            let (j, s) = best.ok_or(NumericsError::InvalidMask { op: "group_max_dot" })?;
            out.push(s);
            argmax.push(j);
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(ar, 1, out, Op::GroupMaxDot { a, b, argmax }, rg))
    }

    /// Index of the row selected by the last `group_max_dot` that produced `v`.
    pub fn argmax_of(&self, v: Var) -> Option<&[usize]> {
        match &self.node(v).op {
            Op::GroupMaxDot { argmax, .. } => Some(argmax),
            _ => None,
        }
    }

    /// Cosine similarity of two vectors of equal shape, as a `1 x 1` node.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let da = self.dims(a);
        let db = self.dims(b);
        if da != db {
            return Err(dim_err("cosine", da, db));
        }
        let n = da.0 * da.1;
        let a1 = self.reshape(a, 1, n)?;
        let b1 = self.reshape(b, 1, n)?;
        let an = self.row_normalize(a1)?;
        let bn = self.row_normalize(b1)?;
        let p = self.mul(an, bn)?;
        Ok(self.sum(p))
    }

    /// Sum over the unmasked rows of `-log softmax(logits[r])[targets[r]]`.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let (r, v) = self.dims(logits);
        if targets.len() != r || mask.len() != r {
            return Err(dim_err("cross_entropy", (r, v), (targets.len(), mask.len())));
        }
        let lv = self.value(logits);
        let mut probs = vec![R::zero(); r * v];
        let mut total = R::zero();
        for i in 0..r {
            if !mask[i] {
                continue;
            }
            let t = targets[i];
            if t >= v {
                return Err(NumericsError::Index {
                    op: "cross_entropy",
                    index: t,
                    size: v,
                });
            }
            let row = &lv[i * v..(i + 1) * v];
            let max = row.iter().copied().fold(R::neg_infinity(), R::max);
            let mut z = R::zero();
            for (p, &x) in probs[i * v..(i + 1) * v].iter_mut().zip(row) {
                *p = (x - max).exp();
                z += *p;
            }
            for p in &mut probs[i * v..(i + 1) * v] {
                *p /= z;
            }
            total += -(row[t] - max - z.ln());
        }
        let rg = self.rg(logits);
        Ok(self.push(
            1,
            1,
            vec![total],
            Op::CrossEntropyRows {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
            },
            rg,
        ))
    }

    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let (r, c) = self.dims(logits);
        let flat = self.reshape(logits, 1, r * c)?;
        self.cross_entropy_rows(flat, &[target], &[true])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let mut total = R::zero();
        for &v in self.value(x) {
            total += v;
        }
        let rg = self.rg(x);
        self.push(1, 1, vec![total], Op::Sum(x), rg)
    }

    /// Row `i` is taken from `on` where `mask[i]`, else from `off`.
    pub fn select_rows(&mut self, mask: &[bool], on: Var, off: Var) -> Result<Var> {
        let d = self.dims(on);
        if d != self.dims(off) || mask.len() != d.0 {
            return Err(dim_err("select_rows", d, self.dims(off)));
        }
        let mut out = Vec::with_capacity(d.0 * d.1);
        for (i, &m) in mask.iter().enumerate() {
            out.extend_from_slice(if m { self.row(on, i) } else { self.row(off, i) });
        }
        let rg = self.rg(on) || self.rg(off);
        Ok(self.push(
            d.0,
            d.1,
            out,
            Op::SelectRows {
                mask: mask.to_vec(),
                on,
                off,
            },
            rg,
        ))
    }

    /// Backpropagates from a scalar loss. The tape can be consumed only once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(NumericsError::State("backward called twice on the same tape".into()));
        }
        if self.dims(loss) != (1, 1) {
            let d = self.dims(loss);
            return Err(NumericsError::Dimension {
                op: "backward",
                left: vec![d.0, d.1],
                right: vec![1, 1],
            });
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<R>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![R::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) && grads[i].is_none() {
                grads[i] = Some(vec![R::zero(); node.value.len()]);
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[R], grads: &mut [Option<Vec<R>>]) {
        let node = &self.nodes[i];
        let cols = node.cols;
        let rows = node.rows;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                let av = self.value(*a);
                let bv = self.value(*b);
                if self.rg(*a) {
                    let ga = acc(grads, *a, m * k);
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let mut s = R::zero();
                            for (&x, &y) in grow.iter().zip(&bv[p * n..(p + 1) * n]) {
                                s += x * y;
                            }
                            ga[r * k + p] += s;
                        }
                    }
                }
                if self.rg(*b) {
                    let gb = acc(grads, *b, k * n);
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let x = av[r * k + p];
                            if x == R::zero() {
                                continue;
                            }
                            for (o, &y) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += x * y;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -R::one() } else { R::one() };
                self.broadcast_back(*a, g, R::one(), grads);
                self.broadcast_back(*b, g, sign, grads);
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                for (x, y) in [(a, b), (b, a)] {
                    if !self.rg(x) {
                        continue;
                    }
                    let yv = self.value(y);
                    let local: Vec<R> = if yv.len() == g.len() {
                        g.iter().zip(yv).map(|(&p, &q)| p * q).collect()
                    } else {
                        g.iter().map(|&p| p * yv[0]).collect()
                    };
                    self.broadcast_back(x, &local, R::one(), grads);
                }
            }
            Op::Scale(a, s) => {
                if self.rg(*a) {
                    let ga = acc(grads, *a, g.len());
                    for (o, &x) in ga.iter_mut().zip(g) {
                        *o += x * *s;
                    }
                }
            }
            Op::AddScalar(a) | Op::Reshape(a) => add_into(grads, *a, g),
            Op::Tanh(a) => {
                let y = &node.value;
                let local: Vec<R> = g.iter().zip(y).map(|(&p, &t)| p * (R::one() - t * t)).collect();
                add_into(grads, *a, &local);
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let local: Vec<R> = g.iter().zip(y).map(|(&p, &s)| p * s * (R::one() - s)).collect();
                add_into(grads, *a, &local);
            }
            Op::MulConst(a, k) => {
                let local: Vec<R> = g.iter().zip(k).map(|(&p, &q)| p * q).collect();
                add_into(grads, *a, &local);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pc = self.dims(p).1;
                    if self.rg(p) {
                        let gp = acc(grads, p, rows * pc);
                        for r in 0..rows {
                            for (o, &x) in gp[r * pc..(r + 1) * pc]
                                .iter_mut()
                                .zip(&g[r * cols + offset..r * cols + offset + pc])
                            {
                                *o += x;
                            }
                        }
                    }
                    offset += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.rg(p) {
                        add_into(grads, p, &g[offset..offset + n]);
                    }
                    offset += n;
                }
            }
            Op::AddRow(x, bias) => {
                add_into(grads, *x, g);
                if self.rg(*bias) {
                    let gb = acc(grads, *bias, cols);
                    for row in g.chunks(cols) {
                        for (o, &v) in gb.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                }
            }
            Op::ScaleRows(x, s) => {
                let xv = self.value(*x);
                let sv = self.value(*s);
                if self.rg(*x) {
                    let gx = acc(grads, *x, rows * cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            gx[r * cols + c] += g[r * cols + c] * sv[r];
                        }
                    }
                }
                if self.rg(*s) {
                    let gs = acc(grads, *s, rows);
                    for r in 0..rows {
                        let mut t = R::zero();
                        for c in 0..cols {
                            t += g[r * cols + c] * xv[r * cols + c];
                        }
                        gs[r] += t;
                    }
                }
            }
            Op::RepeatRows(x, n) => {
                if self.rg(*x) {
                    let xr = self.dims(*x).0;
                    let gx = acc(grads, *x, xr * cols);
                    for r in 0..rows {
                        let src = r / n;
                        for c in 0..cols {
                            gx[src * cols + c] += g[r * cols + c];
                        }
                    }
                }
            }
            Op::GatherRows(table, idx) => {
                if self.rg(*table) {
                    let tr = self.dims(*table).0;
                    let gt = acc(grads, *table, tr * cols);
                    for (r, &src) in idx.iter().enumerate() {
                        for c in 0..cols {
                            gt[src * cols + c] += g[r * cols + c];
                        }
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                let y = &node.value;
                let mut local = vec![R::zero(); rows * cols];
                for r in 0..rows {
                    let yr = &y[r * cols..(r + 1) * cols];
                    let gr = &g[r * cols..(r + 1) * cols];
                    let mut dot = R::zero();
                    for (&p, &q) in yr.iter().zip(gr) {
                        dot += p * q;
                    }
                    for c in 0..cols {
                        local[r * cols + c] = yr[c] * (gr[c] - dot);
                    }
                }
                add_into(grads, *x, &local);
            }
            Op::GroupWeightedSum(alpha, h) => {
                let (gcount, n) = self.dims(*alpha);
                let d = cols;
                let av = self.value(*alpha);
                let hv = self.value(*h);
                if self.rg(*alpha) {
                    let ga = acc(grads, *alpha, gcount * n);
                    for k in 0..gcount {
                        for j in 0..n {
                            let mut s = R::zero();
                            for (&x, &y) in g[k * d..(k + 1) * d].iter().zip(&hv[(k * n + j) * d..(k * n + j + 1) * d]) {
                                s += x * y;
                            }
                            ga[k * n + j] += s;
                        }
                    }
                }
                if self.rg(*h) {
                    let gh = acc(grads, *h, gcount * n * d);
                    for k in 0..gcount {
                        for j in 0..n {
                            let w = av[k * n + j];
                            for (o, &x) in gh[(k * n + j) * d..(k * n + j + 1) * d].iter_mut().zip(&g[k * d..(k + 1) * d]) {
                                *o += w * x;
                            }
                        }
                    }
                }
            }
            Op::GroupMean { h, mask, counts } => {
                if self.rg(*h) {
                    let hr = self.dims(*h).0;
                    let n = hr / rows;
                    let gh = acc(grads, *h, hr * cols);
                    for k in 0..rows {
                        let inv = R::lit(counts[k] as f64);
                        for j in 0..n {
                            if mask[k * n + j] {
                                for c in 0..cols {
                                    gh[(k * n + j) * cols + c] += g[k * cols + c] / inv;
                                }
                            }
                        }
                    }
                }
            }
            Op::RowNormalize { x, norms } => {
                let y = &node.value;
                let mut local = vec![R::zero(); rows * cols];
                for r in 0..rows {
                    let yr = &y[r * cols..(r + 1) * cols];
                    let gr = &g[r * cols..(r + 1) * cols];
                    let mut dot = R::zero();
                    for (&p, &q) in yr.iter().zip(gr) {
                        dot += p * q;
                    }
                    for c in 0..cols {
                        local[r * cols + c] = (gr[c] - yr[c] * dot) / norms[r];
                    }
                }
                add_into(grads, *x, &local);
            }
            Op::GroupMaxDot { a, b, argmax } => {
                let (ar, d) = self.dims(*a);
                let br = self.dims(*b).0;
                let av = self.value(*a);
                let bv = self.value(*b);
                if self.rg(*a) {
                    let ga = acc(grads, *a, ar * d);
                    for (i, &j) in argmax.iter().enumerate() {
                        for c in 0..d {
                            ga[i * d + c] += g[i] * bv[j * d + c];
                        }
                    }
                }
                if self.rg(*b) {
                    let gb = acc(grads, *b, br * d);
                    for (i, &j) in argmax.iter().enumerate() {
                        for c in 0..d {
                            gb[j * d + c] += g[i] * av[i * d + c];
                        }
                    }
                }
            }
            Op::CrossEntropyRows {
                logits,
                targets,
                mask,
                probs,
            } => {
                let (r, v) = self.dims(*logits);
                let gl = acc(grads, *logits, r * v);
                for i in 0..r {
                    if !mask[i] {
                        continue;
                    }
                    for c in 0..v {
                        let onehot = if c == targets[i] { R::one() } else { R::zero() };
                        gl[i * v + c] += g[0] * (probs[i * v + c] - onehot);
                    }
                }
            }
            Op::Sum(x) => {
                if self.rg(*x) {
                    let n = self.value(*x).len();
                    let gx = acc(grads, *x, n);
                    gx.iter_mut().for_each(|o| *o += g[0]);
                }
            }
            Op::SelectRows { mask, on, off } => {
                for (src, want) in [(*on, true), (*off, false)] {
                    if !self.rg(src) {
                        continue;
                    }
                    let gs = acc(grads, src, rows * cols);
                    for (r, &m) in mask.iter().enumerate() {
                        if m == want {
                            for c in 0..cols {
                                gs[r * cols + c] += g[r * cols + c];
                            }
                        }
                    }
                }
            }
        }
    }

    fn broadcast_back(&self, x: Var, g: &[R], sign: R, grads: &mut [Option<Vec<R>>]) {
        if !self.rg(x) {
            return;
        }
        let n = self.value(x).len();
        let gx = acc(grads, x, n);
        if n == g.len() {
            for (o, &v) in gx.iter_mut().zip(g) {
                *o += sign * v;
            }
        } else {
            let mut t = R::zero();
            for &v in g {
                t += v;
            }
            gx[0] += sign * t;
        }
    }
}

fn acc<R: Real>(grads: &mut [Option<Vec<R>>], v: Var, n: usize) -> &mut Vec<R> {
    grads[v.0].get_or_insert_with(|| vec![R::zero(); n])
}

fn add_into<R: Real>(grads: &mut [Option<Vec<R>>], v: Var, g: &[R]) {
    let gv = acc(grads, v, g.len());
    for (o, &x) in gv.iter_mut().zip(g) {
        *o += x;
    }
}
