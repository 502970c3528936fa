use super::tensor::{matmul_nt_into, matmul_tn_into};
use super::{AutodiffError, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    RepeatRows(Var, usize),
    Reshape(Var),
    LogSumExpRows(Var),
    Clamp(Var, f64, f64),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a computation over [`Tensor`]s for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node list is always
/// topologically sorted. Binary elementwise ops broadcast along any axis of
/// length 1 (scalars, `1×c` rows and `m×1` columns).
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`; zeros when the loss does
    /// not depend on it.
    pub fn get(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, var: Var) -> Tensor {
        match self.grads[var.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> Option<(usize, usize)> {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    Some((dim(a.0, b.0)?, dim(a.1, b.1)?))
}

#[inline]
fn bidx(t: &Tensor, i: usize, j: usize) -> usize {
    let r = if t.rows() == 1 { 0 } else { i };
    let c = if t.cols() == 1 { 0 } else { j };
    r * t.cols() + c
}

fn binary_map(a: &Tensor, b: &Tensor, shape: (usize, usize), f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let (ad, bd) = (a.data(), b.data());
    if b.rows() == 1 && a.shape() == shape {
        let mut out = a.clone();
        let c = shape.1;
        for row in out.data_mut().chunks_mut(c) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = f(*v, bd[if b.cols() == 1 { 0 } else { j }]);
            }
        }
        return out;
    }
    Tensor::from_fn(shape.0, shape.1, |i, j| f(ad[bidx(a, i, j)], bd[bidx(b, i, j)]))
}

/// Sums `g` (output-shaped) down to `target` shape following broadcast rules.
fn reduce_to(g: Tensor, target: (usize, usize)) -> Tensor {
    if g.shape() == target {
        return g;
    }
    let mut out = Tensor::zeros(target.0, target.1);
    let cols = target.1;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let r = if target.0 == 1 { 0 } else { i };
            let c = if target.1 == 1 { 0 } else { j };
            out.data_mut()[r * cols + c] += g.get(i, j);
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a differentiable leaf (a parameter or an input we want
    /// gradients for).
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> (usize, usize) {
        self.nodes[var.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let shape = broadcast_shape(sa, sb).ok_or(AutodiffError::ShapeMismatch {
            op: name,
            lhs: sa,
            rhs: sb,
        })?;
        let value = binary_map(self.value(a), self.value(b), shape, f);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// `c · a` for a fixed constant `c`.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    /// `a + c` for a fixed constant `c`.
    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Shift(a), |x| x + c)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, AutodiffError> {
        if let Some(&bad) = self.value(a).data().iter().find(|&&v| !(v > 0.0)) {
            return Err(AutodiffError::NonPositiveLog(bad));
        }
        Ok(self.unary(a, Op::Log(a), f64::ln))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// Clamps every entry into `[lo, hi]`; the gradient is zero where clamped.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    /// Sum of all entries, as a `1×1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    /// Mean of all entries, as a `1×1` node.
    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        let rg = self.rg(a);
        self.push(value, Op::Mean(a), rg)
    }

    /// Per-row sum: `m×n → m×1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::from_fn(t.rows(), 1, |i, _| t.row_slice(i).iter().sum());
        let rg = self.rg(a);
        self.push(value, Op::SumCols(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let rows = self.shape(parts[0]).0;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.shape(parts[0]),
                    rhs: self.shape(p),
                });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let value = Tensor::new(rows, cols, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Columns `[start, end)`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        let shape = self.shape(a);
        if start >= end || end > shape.1 {
            return Err(AutodiffError::BadSlice {
                op: "slice_cols",
                start,
                end,
                shape,
            });
        }
        let value = self.value(a).slice_cols(start, end);
        let rg = self.rg(a);
        Ok(self.push(value, Op::SliceCols(a, start), rg))
    }

    /// Rows `[start, end)`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        let shape = self.shape(a);
        if start >= end || end > shape.0 {
            return Err(AutodiffError::BadSlice {
                op: "slice_rows",
                start,
                end,
                shape,
            });
        }
        let t = self.value(a);
        let value = Tensor::new(
            end - start,
            shape.1,
            t.data()[start * shape.1..end * shape.1].to_vec(),
        )?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::SliceRows(a, start), rg))
    }

    /// Repeats each row `k` times consecutively: row `i` of the input becomes
    /// rows `i·k .. i·k + k` of the output.
    pub fn repeat_rows(&mut self, a: Var, k: usize) -> Var {
        let t = self.value(a);
        let mut data = Vec::with_capacity(t.len() * k);
        for i in 0..t.rows() {
            for _ in 0..k {
                data.extend_from_slice(t.row_slice(i));
            }
        }
        let value = Tensor::new(t.rows() * k, t.cols(), data).expect("repeat_rows shape");
        let rg = self.rg(a);
        self.push(value, Op::RepeatRows(a, k), rg)
    }

    /// Reinterprets the row-major data with a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, AutodiffError> {
        let t = self.value(a);
        if rows * cols != t.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "reshape",
                lhs: t.shape(),
                rhs: (rows, cols),
            });
        }
        let value = Tensor::new(rows, cols, t.data().to_vec())?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Row-wise log-sum-exp: `m×n → m×1`, shifted by each row's maximum.
    pub fn logsumexp_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::from_fn(t.rows(), 1, |i, _| logsumexp(t.row_slice(i)));
        let rg = self.rg(a);
        self.push(value, Op::LogSumExpRows(a), rg)
    }

    /// Reverse pass from a `1×1` node. Every node is visited once, last to
    /// first; gradients from multiple consumers add up.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(AutodiffError::NonScalarLoss(shape));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..n).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let g = match (&node.op, grads[idx].as_ref()) {
                (Op::Leaf, _) | (_, None) => continue,
                (_, Some(_)) => grads[idx].take().expect("checked"),
            };
            self.propagate(idx, g, &mut grads);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn propagate(&self, idx: usize, g: Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let mut acc = |v: Var, contrib: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    matmul_nt_into(&g, bv, &mut ga);
                    acc(*a, ga);
                }
                if self.rg(*b) {
                    let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                    matmul_tn_into(av, &g, &mut gb);
                    acc(*b, gb);
                }
            }
            Op::Add(a, b) => {
                if self.rg(*b) {
                    acc(*b, reduce_to(g.clone(), self.shape(*b)));
                }
                acc(*a, reduce_to(g, self.shape(*a)));
            }
            Op::Sub(a, b) => {
                if self.rg(*b) {
                    acc(*b, reduce_to(g.map(|x| -x), self.shape(*b)));
                }
                acc(*a, reduce_to(g, self.shape(*a)));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let shape = out.shape();
                if self.rg(*a) {
                    let prod = binary_map(&g, bv, shape, |x, y| x * y);
                    acc(*a, reduce_to(prod, av.shape()));
                }
                if self.rg(*b) {
                    let prod = binary_map(&g, av, shape, |x, y| x * y);
                    acc(*b, reduce_to(prod, bv.shape()));
                }
            }
            Op::Scale(a, c) => acc(*a, g.map(|x| x * c)),
            Op::Shift(a) => acc(*a, g),
            Op::Tanh(a) => acc(*a, g.zip_map(out, |x, y| x * (1.0 - y * y))),
            Op::Relu(a) => acc(
                *a,
                g.zip_map(self.value(*a), |x, v| if v > 0.0 { x } else { 0.0 }),
            ),
            Op::Sigmoid(a) => acc(*a, g.zip_map(out, |x, y| x * y * (1.0 - y))),
            Op::Log(a) => acc(*a, g.zip_map(self.value(*a), |x, v| x / v)),
            Op::Exp(a) => acc(*a, g.zip_map(out, |x, y| x * y)),
            Op::Square(a) => acc(*a, g.zip_map(self.value(*a), |x, v| 2.0 * x * v)),
            Op::Clamp(a, lo, hi) => acc(
                *a,
                g.zip_map(self.value(*a), |x, v| {
                    if v < *lo || v > *hi {
                        0.0
                    } else {
                        x
                    }
                }),
            ),
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                acc(*a, Tensor::filled(r, c, g.item()));
            }
            Op::Mean(a) => {
                let (r, c) = self.shape(*a);
                acc(*a, Tensor::filled(r, c, g.item() / (r * c) as f64));
            }
            Op::SumCols(a) => {
                let (r, c) = self.shape(*a);
                acc(*a, Tensor::from_fn(r, c, |i, _| g.get(i, 0)));
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let w = self.shape(*p).1;
                    if self.rg(*p) {
                        acc(*p, g.slice_cols(start, start + w));
                    }
                    start += w;
                }
            }
            Op::SliceCols(a, start) => {
                let (r, c) = self.shape(*a);
                let w = out.cols();
                let mut ga = Tensor::zeros(r, c);
                for i in 0..r {
                    ga.row_slice_mut(i)[*start..start + w].copy_from_slice(g.row_slice(i));
                }
                acc(*a, ga);
            }
            Op::SliceRows(a, start) => {
                let (r, c) = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                ga.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                acc(*a, ga);
            }
            Op::RepeatRows(a, k) => {
                let (r, c) = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for i in 0..r {
                    let dst = ga.row_slice_mut(i);
                    for rep in 0..*k {
                        for (d, s) in dst.iter_mut().zip(g.row_slice(i * k + rep)) {
                            *d += s;
                        }
                    }
                }
                acc(*a, ga);
            }
            Op::Reshape(a) => {
                let (r, c) = self.shape(*a);
                acc(*a, Tensor::new(r, c, g.into_data()).expect("reshape back"));
            }
            Op::LogSumExpRows(a) => {
                let av = self.value(*a);
                let ga = Tensor::from_fn(av.rows(), av.cols(), |i, j| {
                    g.get(i, 0) * (av.get(i, j) - out.get(i, 0)).exp()
                });
                acc(*a, ga);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln Σ exp(v)` computed as `m + ln Σ exp(v − m)` with `m = max v`.
pub fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn elementary_values() {
        let mut t = Tape::new();
        let z = t.constant(Tensor::scalar(0.0));
        let th = t.tanh(z);
        let sg = t.sigmoid(z);
        assert_eq!(t.value(th).item(), 0.0);
        assert_eq!(t.value(sg).item(), 0.5);

        let v = t.constant(Tensor::row(&[1f64.ln(), 3f64.ln()]));
        let l = t.logsumexp_rows(v);
        assert!(approx(t.value(l).item(), 4f64.ln(), 1e-15));
    }

    #[test]
    fn linear_map_gradient_rows_equal_input() {
        let mut t = Tape::new();
        let w = t.param(Tensor::from_fn(3, 2, |i, j| (i + j) as f64));
        let x = t.constant(Tensor::column(&[1.0, 2.0]));
        let y = t.matmul(w, x).unwrap();
        let loss = t.sum(y);
        let g = t.backward(loss).unwrap().get(w);
        for i in 0..3 {
            assert_eq!(g.row_slice(i), &[1.0, 2.0]);
        }
    }

    #[test]
    fn stationary_point_gives_zero_gradient() {
        let mut t = Tape::new();
        let w = t.param(Tensor::scalar(0.0));
        let th = t.tanh(w);
        let loss = t.square(th);
        assert_eq!(t.backward(loss).unwrap().get(w).item(), 0.0);
    }

    #[test]
    fn fan_out_accumulates() {
        for x in [-3.0, 0.0, 0.7, 12.5] {
            let mut t = Tape::new();
            let v = t.param(Tensor::scalar(x));
            let y = t.add(v, v).unwrap();
            assert_eq!(t.backward(y).unwrap().get(v).item(), 2.0);
        }
    }

    #[test]
    fn shape_errors_are_descriptive() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(2, 3));
        let b = t.constant(Tensor::zeros(2, 2));
        let err = t.matmul(a, b).unwrap_err();
        assert!(err.to_string().contains("matmul"));
        assert!(t.add(a, b).is_err());
        let c = t.constant(Tensor::row(&[1.0, 0.0]));
        assert!(matches!(t.log(c), Err(AutodiffError::NonPositiveLog(_))));
        assert!(matches!(t.backward(a), Err(AutodiffError::NonScalarLoss((2, 3)))));
    }

    #[test]
    fn row_broadcast_reduces_gradient() {
        let mut t = Tape::new();
        let m = t.constant(Tensor::filled(4, 2, 1.0));
        let b = t.param(Tensor::row(&[0.5, -0.5]));
        let y = t.add(m, b).unwrap();
        let loss = t.sum(y);
        assert_eq!(t.backward(loss).unwrap().get(b).data(), &[4.0, 4.0]);
    }

    #[test]
    fn logsumexp_translation_exact() {
        let v = [0.3, -1.2, 4.5, 2.0];
        for c in [-700.0, -3.0, 0.0, 10.0, 800.0] {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let lhs = logsumexp(&shifted);
            let rhs = logsumexp(&v) + c;
            assert!((lhs - rhs).abs() <= 4.0 * f64::EPSILON * rhs.abs().max(1.0));
        }
    }
}
