//! The predefined measurement dictionary.
//!
//! An encoder emits `n x d x k` coefficients per segment; contracting them
//! with the `d x k` segment gives the latent matrix `V` (`n x d`), and slot
//! `(i, j)` of the measurement vector is descriptor `i` applied to `V[i, j]`.
//! Pairwise interaction entries follow the `n·d` block.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{CustomOp, Graph, Var};
use crate::error::{KnfError, Result};
use crate::tensor::Mat;

/// Largest `|v|` accepted by the exponential slot.
pub const EXP_INPUT_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementFn {
    /// `v^p`, `p` in `1..=4`.
    Poly(u32),
    Exp,
    Sin,
}

impl MeasurementFn {
    #[inline]
    pub fn eval(self, v: f64) -> f64 {
        match self {
            MeasurementFn::Poly(p) => v.powi(p as i32),
            MeasurementFn::Exp => v.exp(),
            MeasurementFn::Sin => v.sin(),
        }
    }

    #[inline]
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            MeasurementFn::Poly(1) => 1.0,
            MeasurementFn::Poly(p) => p as f64 * v.powi(p as i32 - 1),
            MeasurementFn::Exp => v.exp(),
            MeasurementFn::Sin => v.cos(),
        }
    }
}

impl fmt::Display for MeasurementFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasurementFn::Poly(p) => write!(f, "poly{p}"),
            MeasurementFn::Exp => write!(f, "exp"),
            MeasurementFn::Sin => write!(f, "sin"),
        }
    }
}

impl FromStr for MeasurementFn {
    type Err = KnfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exp" => Ok(MeasurementFn::Exp),
            "sin" => Ok(MeasurementFn::Sin),
            other => {
                let p = other
                    .strip_prefix("poly")
                    .and_then(|p| p.parse::<u32>().ok())
                    .filter(|p| (1..=4).contains(p))
                    .ok_or_else(|| KnfError::arg(format!("unknown measurement function {other:?}")))?;
                Ok(MeasurementFn::Poly(p))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementSpec {
    functions: Vec<MeasurementFn>,
    /// Feature `j` uses the first `feature_counts[j]` descriptors.
    feature_counts: Vec<usize>,
    pairs: Vec<(usize, usize)>,
    segment_len: usize,
}

impl MeasurementSpec {
    /// Every feature gets the full descriptor list.
    pub fn new(functions: Vec<MeasurementFn>, features: usize, segment_len: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let n = functions.len();
        MeasurementSpec::with_feature_counts(functions, vec![n; features], segment_len, pairs)
    }

    /// Feature `j` uses only the first `counts[j]` descriptors, which
    /// expresses asymmetric dictionaries such as `{x1, x2, x1²}`.
    pub fn with_feature_counts(
        functions: Vec<MeasurementFn>,
        counts: Vec<usize>,
        segment_len: usize,
        pairs: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let d = counts.len();
        if functions.is_empty() {
            return Err(KnfError::arg("measurement dictionary is empty"));
        }
        if d == 0 || segment_len == 0 {
            return Err(KnfError::arg("feature count and segment length must be positive"));
        }
        for f in &functions {
            if let MeasurementFn::Poly(p) = f {
                if !(1..=4).contains(p) {
                    return Err(KnfError::arg(format!("polynomial order {p} outside 1..=4")));
                }
            }
        }
        if counts.iter().any(|&c| c == 0 || c > functions.len()) {
            return Err(KnfError::arg("per-feature counts must lie in 1..=n"));
        }
        if !pairs.is_empty() && d < 2 {
            return Err(KnfError::arg("interaction pairs need at least two features"));
        }
        let mut norm = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            if a == b || a >= d || b >= d {
                return Err(KnfError::arg(format!("invalid interaction pair ({a}, {b}) for {d} features")));
            }
            let p = (a.min(b), a.max(b));
            if norm.contains(&p) {
                return Err(KnfError::arg(format!("duplicate interaction pair {p:?}")));
            }
            norm.push(p);
        }
        Ok(MeasurementSpec {
            functions,
            feature_counts: counts,
            pairs: norm,
            segment_len,
        })
    }

    pub fn all_pairs(d: usize) -> Vec<(usize, usize)> {
        (0..d).flat_map(|a| (a + 1..d).map(move |b| (a, b))).collect()
    }

    /// Polynomials `1..=poly_order`, `exp_count` exponentials and
    /// `sin_count` sines per feature.
    pub fn from_counts(d: usize, k: usize, poly_order: u32, exp_count: usize, sin_count: usize, interactions: bool) -> Result<Self> {
        let mut f: Vec<MeasurementFn> = (1..=poly_order).map(MeasurementFn::Poly).collect();
        f.extend(std::iter::repeat_n(MeasurementFn::Exp, exp_count));
        f.extend(std::iter::repeat_n(MeasurementFn::Sin, sin_count));
        let pairs = if interactions && d >= 2 { Self::all_pairs(d) } else { Vec::new() };
        MeasurementSpec::new(f, d, k, pairs)
    }

    pub fn functions(&self) -> &[MeasurementFn] {
        &self.functions
    }

    pub fn feature_counts(&self) -> &[usize] {
        &self.feature_counts
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Descriptors per feature (`n`).
    pub fn n(&self) -> usize {
        self.functions.len()
    }

    pub fn features(&self) -> usize {
        self.feature_counts.len()
    }

    pub fn segment_len(&self) -> usize {
        self.segment_len
    }

    /// Width of the encoder's coefficient output, `n·d·k`.
    pub fn coefficient_count(&self) -> usize {
        self.n() * self.features() * self.segment_len
    }

    fn active(&self, i: usize, j: usize) -> bool {
        i < self.feature_counts[j]
    }

    /// `(i, j)` slots in measurement-vector order (row-major, `i` outer).
    pub fn slots(&self) -> Vec<(usize, usize)> {
        let d = self.features();
        (0..self.n())
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .filter(|&(i, j)| self.active(i, j))
            .collect()
    }

    /// Measurement dimension `m`.
    pub fn dim(&self) -> usize {
        self.feature_counts.iter().sum::<usize>() + self.pairs.len()
    }

    /// Flat index of descriptor `i` on feature `j` (0-based).
    pub fn measurement_index(&self, feature: usize, descriptor: usize) -> Result<usize> {
        if feature >= self.features() || descriptor >= self.n() || !self.active(descriptor, feature) {
            return Err(KnfError::arg(format!(
                "no measurement slot for descriptor {descriptor} on feature {feature}"
            )));
        }
        let d = self.features();
        let before = (0..descriptor * d + feature)
            .filter(|&p| self.active(p / d, p % d))
            .count();
        Ok(before)
    }

    /// Human-readable label of measurement coordinate `index`.
    pub fn label(&self, index: usize) -> String {
        let slots = self.slots();
        if let Some(&(i, j)) = slots.get(index) {
            format!("{}(x{})", self.functions[i], j + 1)
        } else if let Some(&(a, b)) = self.pairs.get(index - slots.len()) {
            format!("x{}*x{}", a + 1, b + 1)
        } else {
            format!("#{index}")
        }
    }
}

/// The predefined dictionary: polynomials up to order four, one exponential
/// and `k` sines per feature, plus every feature pair when `d >= 2`.
pub fn default_dictionary(d: usize, k: usize) -> Result<MeasurementSpec> {
    MeasurementSpec::from_counts(d, k, 4, 1, k, true)
}

/// `V` (`n x d`) for one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix(pub Mat);

/// `G(V)` flattened, followed by interaction entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector(pub Vec<f64>);

/// `V[i, j] = sum_l coeffs[i, j, l] * segment[j, l]`, with `coeffs` flat in
/// `(i, j, l)` row-major order and `segment` shaped `d x k`.
pub fn latent_matrix(spec: &MeasurementSpec, coeffs: &[f64], segment: &Mat) -> Result<LatentMatrix> {
    let (n, d, k) = (spec.n(), spec.features(), spec.segment_len());
    if coeffs.len() != n * d * k {
        return Err(KnfError::dim(format!("{} coefficients, expected {}", coeffs.len(), n * d * k)));
    }
    if segment.shape() != (d, k) {
        return Err(KnfError::dim(format!("segment is {:?}, expected ({d}, {k})", segment.shape())));
    }
    let v = Mat::from_fn(n, d, |i, j| {
        let c = &coeffs[(i * d + j) * k..(i * d + j + 1) * k];
        c.iter().zip(segment.row(j)).map(|(a, x)| a * x).sum()
    });
    Ok(LatentMatrix(v))
}

/// `G(V)` for one latent matrix.
pub fn apply_measurements(spec: &MeasurementSpec, v: &LatentMatrix) -> Result<MeasurementVector> {
    let (n, d) = (spec.n(), spec.features());
    if v.0.shape() != (n, d) {
        return Err(KnfError::dim(format!("latent matrix is {:?}, expected ({n}, {d})", v.0.shape())));
    }
    let out = evaluate_rows(spec, &v.0.clone().reshaped(1, n * d))?;
    Ok(MeasurementVector(out.into_vec()))
}

fn evaluate_rows(spec: &MeasurementSpec, v: &Mat) -> Result<Mat> {
    let d = spec.features();
    let slots = spec.slots();
    let m = spec.dim();
    let mut out = Mat::zeros(v.rows(), m);
    for r in 0..v.rows() {
        let row = v.row(r);
        let o = out.row_mut(r);
        for (p, &(i, j)) in slots.iter().enumerate() {
            let x = row[i * d + j];
            let f = spec.functions[i];
            if f == MeasurementFn::Exp && x.abs() > EXP_INPUT_LIMIT {
                return Err(KnfError::numeric(format!(
                    "exp measurement input {x} exceeds ±{EXP_INPUT_LIMIT} at segment {r}, slot {p} (descriptor {i}, feature {j})"
                )));
            }
            o[p] = f.eval(x);
        }
        for (q, &(a, b)) in spec.pairs.iter().enumerate() {
            let rows = pair_rows(spec, a, b);
            let s: f64 = (0..rows).map(|i| row[i * d + a] * row[i * d + b]).sum();
            o[slots.len() + q] = s / rows as f64;
        }
    }
    Ok(out)
}

fn pair_rows(spec: &MeasurementSpec, a: usize, b: usize) -> usize {
    spec.feature_counts[a].min(spec.feature_counts[b])
}

struct MeasureOp {
    spec: MeasurementSpec,
}

impl CustomOp for MeasureOp {
    fn name(&self) -> &str {
        "measurements"
    }

    fn backward(&self, inputs: &[&Mat], _output: &Mat, grad: &Mat) -> Vec<Mat> {
        let v = inputs[0];
        let spec = &self.spec;
        let d = spec.features();
        let slots = spec.slots();
        let mut dv = Mat::zeros(v.rows(), v.cols());
        for r in 0..v.rows() {
            let row = v.row(r);
            let g = grad.row(r);
            let o = dv.row_mut(r);
            for (p, &(i, j)) in slots.iter().enumerate() {
                o[i * d + j] += g[p] * spec.functions[i].derivative(row[i * d + j]);
            }
            for (q, &(a, b)) in spec.pairs.iter().enumerate() {
                let rows = pair_rows(spec, a, b);
                let gq = g[slots.len() + q] / rows as f64;
                for i in 0..rows {
                    o[i * d + a] += gq * row[i * d + b];
                    o[i * d + b] += gq * row[i * d + a];
                }
            }
        }
        vec![dv]
    }
}

/// Latent rows for a batch: `coeffs` is `rows x n·d·k`, `segments` is
/// `rows x d·k` (each row a flattened `d x k` segment). Returns `rows x n·d`.
pub fn latent_rows(graph: &mut Graph, spec: &MeasurementSpec, coeffs: Var, segments: Var) -> Result<Var> {
    let (n, d, k) = (spec.n(), spec.features(), spec.segment_len());
    let (r, c) = graph.shape(coeffs);
    if c != n * d * k || graph.shape(segments) != (r, d * k) {
        return Err(KnfError::dim(format!(
            "coefficients {:?} and segments {:?} do not match n={n}, d={d}, k={k}",
            graph.shape(coeffs),
            graph.shape(segments)
        )));
    }
    let dk = d * k;
    let index = (0..r)
        .flat_map(|row| (0..n * dk).map(move |col| Some(row * dk + col % dk)))
        .collect();
    let tiled = graph.gather(segments, r, n * dk, index);
    let prod = graph.mul(coeffs, tiled);
    Ok(graph.group_sum(prod, k))
}

/// Measurement rows (`rows x m`) from latent rows (`rows x n·d`).
pub fn measure_rows(graph: &mut Graph, spec: &MeasurementSpec, latent: Var) -> Result<Var> {
    let (_, c) = graph.shape(latent);
    if c != spec.n() * spec.features() {
        return Err(KnfError::dim(format!("latent width {c}, expected {}", spec.n() * spec.features())));
    }
    let value = evaluate_rows(spec, graph.value(latent))?;
    Ok(graph.custom(&[latent], value, Box::new(MeasureOp { spec: spec.clone() })))
}
