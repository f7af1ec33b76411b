//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Graph`] evaluates eagerly: every operation computes its value when it
//! is recorded, so a graph doubles as a plain forward evaluator. Calling
//! [`Graph::backward`] on a scalar node propagates adjoints to every node
//! that depends on a leaf created with [`Graph::leaf`].

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::tensor::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A differentiable operation supplied from outside this module.
///
/// `backward` receives the input values, the output value and the adjoint
/// of the output, and returns one adjoint per input (same shapes).
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &str;
    fn backward(&self, inputs: &[&Mat], output: &Mat, grad: &Mat) -> Vec<Mat>;
}

enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    AddCol(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Recip(Var),
    SoftmaxRows(Var),
    LayerNormRows { x: Var, inv_std: Vec<f64> },
    Gather { src: Var, index: Vec<Option<usize>> },
    Reshape(Var),
    ConcatRows(Vec<Var>),
    GroupSum { x: Var, group: usize },
    SumAll(Var),
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp> },
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable input.
    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives an adjoint.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).add(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).sub(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Sub(a, b), ng)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Mul(a, b), ng)
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(row), (1, c), "add_row shape");
        let rv = self.value(row).as_slice().to_vec();
        let mut value = self.value(a).clone();
        for i in 0..r {
            for (x, b) in value.row_mut(i).iter_mut().zip(&rv) {
                *x += b;
            }
        }
        let ng = self.ng(a) || self.ng(row);
        self.push(value, Op::AddRow(a, row), ng)
    }

    /// Scales row `i` of `a` by `col[i]` (`col` is `rows x 1`).
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (r, _) = self.shape(a);
        assert_eq!(self.shape(col), (r, 1), "mul_col shape");
        let cv = self.value(col).as_slice().to_vec();
        let mut value = self.value(a).clone();
        for (i, s) in cv.iter().enumerate() {
            value.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
        let ng = self.ng(a) || self.ng(col);
        self.push(value, Op::MulCol(a, col), ng)
    }

    /// Adds `col[i]` to every entry of row `i`.
    pub fn add_col(&mut self, a: Var, col: Var) -> Var {
        let (r, _) = self.shape(a);
        assert_eq!(self.shape(col), (r, 1), "add_col shape");
        let cv = self.value(col).as_slice().to_vec();
        let mut value = self.value(a).clone();
        for (i, s) in cv.iter().enumerate() {
            value.row_mut(i).iter_mut().for_each(|x| *x += s);
        }
        let ng = self.ng(a) || self.ng(col);
        self.push(value, Op::AddCol(a, col), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let ng = self.ng(a);
        self.push(value, Op::Scale(a, s), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let ng = self.ng(a);
        self.push(value, Op::Relu(a), ng)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| 1.0 / x);
        let ng = self.ng(a);
        self.push(value, Op::Recip(a), ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for i in 0..value.rows() {
            let row = value.row_mut(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            row.iter_mut().for_each(|x| *x /= total);
        }
        let ng = self.ng(a);
        self.push(value, Op::SoftmaxRows(a), ng)
    }

    /// Standardizes each row to zero mean and unit variance (no affine).
    pub fn layer_norm_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        let c = value.cols() as f64;
        let mut inv_std = Vec::with_capacity(value.rows());
        for i in 0..value.rows() {
            let row = value.row_mut(i);
            let mean = row.iter().sum::<f64>() / c;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.iter_mut().for_each(|x| *x = (*x - mean) * is);
            inv_std.push(is);
        }
        let ng = self.ng(a);
        self.push(value, Op::LayerNormRows { x: a, inv_std }, ng)
    }

    /// Builds a `rows x cols` matrix whose flat entry `p` is `src[index[p]]`,
    /// or zero where the index is `None`.
    pub fn gather(&mut self, src: Var, rows: usize, cols: usize, index: Vec<Option<usize>>) -> Var {
        assert_eq!(index.len(), rows * cols, "gather index length");
        let s = self.value(src).as_slice();
        let data = index
            .iter()
            .map(|ix| ix.map_or(0.0, |k| s[k]))
            .collect::<Vec<_>>();
        let value = Mat::from_vec(rows, cols, data).expect("gather shape");
        let ng = self.ng(src);
        self.push(value, Op::Gather { src, index }, ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let index = (0..c)
            .flat_map(|j| (0..r).map(move |i| Some(i * c + j)))
            .collect();
        self.gather(a, c, r, index)
    }

    /// Columns `start..end`.
    pub fn col_range(&mut self, a: Var, start: usize, end: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(start <= end && end <= c);
        let w = end - start;
        let index = (0..r)
            .flat_map(|i| (0..w).map(move |j| Some(i * c + start + j)))
            .collect();
        self.gather(a, r, w, index)
    }

    /// Embeds an `n`-vector as the diagonal of an `n x n` matrix.
    pub fn diag(&mut self, v: Var) -> Var {
        let n = self.value(v).len();
        let index = (0..n * n)
            .map(|p| if p / n == p % n { Some(p / n) } else { None })
            .collect();
        self.gather(v, n, n, index)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let value = self.value(a).clone().reshaped(rows, cols);
        let ng = self.ng(a);
        self.push(value, Op::Reshape(a), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let cols = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), cols, "concat_rows width");
            rows += v.rows();
            data.extend_from_slice(v.as_slice());
        }
        let value = Mat::from_vec(rows, cols, data).expect("concat shape");
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(value, Op::ConcatRows(parts.to_vec()), ng)
    }

    /// Sums consecutive groups of `group` columns: `out[r, g] = sum_l a[r, g*group + l]`.
    pub fn group_sum(&mut self, a: Var, group: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(group > 0 && c % group == 0, "group_sum width");
        let src = self.value(a);
        let value = Mat::from_fn(r, c / group, |i, g| {
            src.row(i)[g * group..(g + 1) * group].iter().sum()
        });
        let ng = self.ng(a);
        self.push(value, Op::GroupSum { x: a, group }, ng)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Mat::filled(1, 1, self.value(a).sum());
        let ng = self.ng(a);
        self.push(value, Op::SumAll(a), ng)
    }

    /// Mean of squared entries of `a - b`.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let n = self.value(a).len() as f64;
        let d = self.sub(a, b);
        let sq = self.mul(d, d);
        let s = self.sum_all(sq);
        self.scale(s, 1.0 / n)
    }

    pub fn custom(&mut self, inputs: &[Var], value: Mat, op: Box<dyn CustomOp>) -> Var {
        let ng = inputs.iter().any(|&v| self.ng(v));
        self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            ng,
        )
    }

    /// Hash of the sign pattern of every ReLU input in the graph. Two
    /// evaluations with equal signatures lie on the same linear piece.
    pub fn relu_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            if let Op::Relu(a) = node.op {
                for &x in self.nodes[a.0].value.as_slice() {
                    (x > 0.0).hash(&mut h);
                }
            }
        }
        h.finish()
    }

    /// Adjoints of the scalar `output` with respect to every node. Entries
    /// are `None` for nodes the output does not depend on through a leaf.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.shape(output), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Mat::filled(1, 1, 1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, node: &Node, g: &Mat, grads: &mut [Option<Mat>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, d: Mat| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&d),
                slot => *slot = Some(d),
            }
        };
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    acc(*a, g.matmul(&val(*b).transpose()));
                }
                if self.ng(*b) {
                    acc(*b, val(*a).transpose().matmul(g));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(val(*b), |x, y| x * y));
                acc(*b, g.zip_map(val(*a), |x, y| x * y));
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                let mut s = Mat::zeros(1, g.cols());
                for i in 0..g.rows() {
                    for (o, x) in s.as_mut_slice().iter_mut().zip(g.row(i)) {
                        *o += x;
                    }
                }
                acc(*row, s);
            }
            Op::MulCol(a, col) => {
                let cv = val(*col);
                let av = val(*a);
                let mut da = g.clone();
                for i in 0..da.rows() {
                    let s = cv.as_slice()[i];
                    da.row_mut(i).iter_mut().for_each(|x| *x *= s);
                }
                acc(*a, da);
                let dc = Mat::from_fn(g.rows(), 1, |i, _| {
                    g.row(i).iter().zip(av.row(i)).map(|(x, y)| x * y).sum()
                });
                acc(*col, dc);
            }
            Op::AddCol(a, col) => {
                acc(*a, g.clone());
                acc(*col, Mat::from_fn(g.rows(), 1, |i, _| g.row(i).iter().sum()));
            }
            Op::Scale(a, s) => acc(*a, g.scale(*s)),
            Op::Relu(a) => acc(*a, g.zip_map(val(*a), |d, x| if x > 0.0 { d } else { 0.0 })),
            Op::Recip(a) => acc(*a, g.zip_map(&node.value, |d, y| -d * y * y)),
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut d = Mat::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let dot: f64 = g.row(i).iter().zip(y.row(i)).map(|(p, q)| p * q).sum();
                    for ((o, gy), yy) in d.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
                        *o = yy * (gy - dot);
                    }
                }
                acc(*a, d);
            }
            Op::LayerNormRows { x, inv_std } => {
                let y = &node.value;
                let c = y.cols() as f64;
                let mut d = Mat::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let gm = g.row(i).iter().sum::<f64>() / c;
                    let gym = g.row(i).iter().zip(y.row(i)).map(|(p, q)| p * q).sum::<f64>() / c;
                    for ((o, gy), yy) in d.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
                        *o = inv_std[i] * (gy - gm - yy * gym);
                    }
                }
                acc(*x, d);
            }
            Op::Gather { src, index } => {
                let (r, c) = self.shape(*src);
                let mut d = Mat::zeros(r, c);
                let ds = d.as_mut_slice();
                for (p, ix) in index.iter().enumerate() {
                    if let Some(k) = ix {
                        ds[*k] += g.as_slice()[p];
                    }
                }
                acc(*src, d);
            }
            Op::Reshape(a) => {
                let (r, c) = self.shape(*a);
                acc(*a, g.clone().reshaped(r, c));
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    let slice = g.as_slice()[offset * c..(offset + r) * c].to_vec();
                    offset += r;
                    acc(p, Mat::from_vec(r, c, slice).expect("concat split"));
                }
            }
            Op::GroupSum { x, group } => {
                let (r, c) = self.shape(*x);
                acc(*x, Mat::from_fn(r, c, |i, j| g[(i, j / group)]));
            }
            Op::SumAll(a) => {
                let (r, c) = self.shape(*a);
                acc(*a, Mat::filled(r, c, g.as_slice()[0]));
            }
            Op::Custom { inputs, op } => {
                let ins: Vec<&Mat> = inputs.iter().map(|&v| val(v)).collect();
                let ds = op.backward(&ins, &node.value, g);
                assert_eq!(ds.len(), inputs.len(), "custom op {} adjoint count", op.name());
                for (&v, d) in inputs.iter().zip(ds) {
                    acc(v, d);
                }
            }
        }
    }
}

pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    /// Adjoint of `v`, or `None` when the output does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads[v.0].as_ref()
    }

    /// Adjoint of `v`, zero-filled to `shape` when absent.
    pub fn get_or_zero(&self, v: Var, shape: (usize, usize)) -> Mat {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Mat::zeros(shape.0, shape.1))
    }
}
