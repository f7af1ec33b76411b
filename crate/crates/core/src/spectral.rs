//! Eigen-analysis of learned operators.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{KnfError, Result};
use crate::model::{self, KnfConfig, KnfParams};
use crate::tensor::Mat;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Sorted by descending modulus; conjugate pairs are adjacent with the
    /// positive imaginary part first.
    pub eigenvalues: Vec<Complex64>,
    /// Unit-norm right eigenvectors, one per eigenvalue.
    pub eigenvectors: Vec<Vec<Complex64>>,
    /// `‖Kv − λv‖` per pair.
    pub residuals: Vec<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Index of the conjugate partner of eigenvalue `j`, if it is complex.
    pub fn conjugate_of(&self, j: usize) -> Option<usize> {
        let l = self.eigenvalues[j];
        if l.im == 0.0 {
            return None;
        }
        let cands = [j.wrapping_sub(1), j + 1];
        cands
            .into_iter()
            .filter(|&c| c < self.len())
            .min_by(|&a, &b| {
                let da = (self.eigenvalues[a] - l.conj()).norm();
                let db = (self.eigenvalues[b] - l.conj()).norm();
                da.total_cmp(&db)
            })
            .filter(|&c| (self.eigenvalues[c] - l.conj()).norm() <= 1e-9 * (1.0 + l.norm()))
    }
}

/// Reduction to upper Hessenberg form by Householder reflections,
/// accumulating the transformation in `v`.
fn orthes(h: &mut [Vec<f64>], v: &mut [Vec<f64>]) {
    let n = h.len();
    if n == 0 {
        return;
    }
    let high = n - 1;
    let mut ort = vec![0.0; n];
    for m in 1..high {
        let scale: f64 = (m..=high).map(|i| h[i][m - 1].abs()).sum();
        if scale != 0.0 {
            let mut hh = 0.0;
            for i in (m..=high).rev() {
                ort[i] = h[i][m - 1] / scale;
                hh += ort[i] * ort[i];
            }
            let mut g = hh.sqrt();
            if ort[m] > 0.0 {
                g = -g;
            }
            hh -= ort[m] * g;
            ort[m] -= g;
            for j in m..n {
                let f: f64 = (m..=high).rev().map(|i| ort[i] * h[i][j]).sum::<f64>() / hh;
                for i in m..=high {
                    h[i][j] -= f * ort[i];
                }
            }
            for row in h.iter_mut().take(high + 1) {
                let f: f64 = (m..=high).rev().map(|j| ort[j] * row[j]).sum::<f64>() / hh;
                for j in m..=high {
                    row[j] -= f * ort[j];
                }
            }
            ort[m] *= scale;
            h[m][m - 1] = scale * g;
        }
    }
    for (i, row) in v.iter_mut().enumerate() {
        row.iter_mut().enumerate().for_each(|(j, x)| *x = if i == j { 1.0 } else { 0.0 });
    }
    for m in (1..high).rev() {
        if h[m][m - 1] != 0.0 {
            for i in m + 1..=high {
                ort[i] = h[i][m - 1];
            }
            for j in m..=high {
                let g: f64 = (m..=high).map(|i| ort[i] * v[i][j]).sum();
                let g = (g / ort[m]) / h[m][m - 1];
                for i in m..=high {
                    v[i][j] += g * ort[i];
                }
            }
        }
    }
}

fn cdiv(xr: f64, xi: f64, yr: f64, yi: f64) -> (f64, f64) {
    let c = Complex64::new(xr, xi) / Complex64::new(yr, yi);
    (c.re, c.im)
}

/// Francis double-shift QR on the Hessenberg matrix `h`, then
/// back-substitution for the eigenvectors. Returns `(re, im)` arrays; `v`
/// ends up holding real eigenvectors, or `(re, im)` column pairs.
fn hqr2(h: &mut [Vec<f64>], v: &mut [Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let nn = h.len();
    let mut d = vec![0.0; nn];
    let mut e = vec![0.0; nn];
    if nn == 0 {
        return Ok((d, e));
    }
    let low: isize = 0;
    let high: isize = nn as isize - 1;
    let eps = f64::EPSILON;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut t, mut w, mut x, mut y);

    let mut norm = 0.0;
    for (i, row) in h.iter().enumerate() {
        for val in row.iter().skip(i.saturating_sub(1)) {
            norm += val.abs();
        }
    }

    macro_rules! at {
        ($m:expr, $i:expr, $j:expr) => {
            $m[($i) as usize][($j) as usize]
        };
    }

    let mut n: isize = nn as isize - 1;
    let mut iter = 0usize;
    let mut total_iter = 0usize;
    let max_iter = 100 * nn.max(1);
    while n >= low {
        let mut l = n;
        while l > low {
            s = at!(h, l - 1, l - 1).abs() + at!(h, l, l).abs();
            if s == 0.0 {
                s = norm;
            }
            if at!(h, l, l - 1).abs() <= eps * s {
                break;
            }
            l -= 1;
        }
        if l == n {
            at!(h, n, n) += exshift;
            d[n as usize] = at!(h, n, n);
            e[n as usize] = 0.0;
            n -= 1;
            iter = 0;
        } else if l == n - 1 {
            w = at!(h, n, n - 1) * at!(h, n - 1, n);
            p = (at!(h, n - 1, n - 1) - at!(h, n, n)) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            at!(h, n, n) += exshift;
            at!(h, n - 1, n - 1) += exshift;
            x = at!(h, n, n);
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                d[(n - 1) as usize] = x + z;
                d[n as usize] = d[(n - 1) as usize];
                if z != 0.0 {
                    d[n as usize] = x - w / z;
                }
                e[(n - 1) as usize] = 0.0;
                e[n as usize] = 0.0;
                x = at!(h, n, n - 1);
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;
                for j in (n - 1)..nn as isize {
                    z = at!(h, n - 1, j);
                    at!(h, n - 1, j) = q * z + p * at!(h, n, j);
                    at!(h, n, j) = q * at!(h, n, j) - p * z;
                }
                for i in 0..=n {
                    z = at!(h, i, n - 1);
                    at!(h, i, n - 1) = q * z + p * at!(h, i, n);
                    at!(h, i, n) = q * at!(h, i, n) - p * z;
                }
                for i in low..=high {
                    z = at!(v, i, n - 1);
                    at!(v, i, n - 1) = q * z + p * at!(v, i, n);
                    at!(v, i, n) = q * at!(v, i, n) - p * z;
                }
            } else {
                d[(n - 1) as usize] = x + p;
                d[n as usize] = x + p;
                e[(n - 1) as usize] = z;
                e[n as usize] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            x = at!(h, n, n);
            y = 0.0;
            w = 0.0;
            if l < n {
                y = at!(h, n - 1, n - 1);
                w = at!(h, n, n - 1) * at!(h, n - 1, n);
            }
            if iter == 10 {
                exshift += x;
                for i in low..=n {
                    at!(h, i, i) -= x;
                }
                s = at!(h, n, n - 1).abs() + at!(h, n - 1, n - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=n {
                        at!(h, i, i) -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            total_iter += 1;
            if total_iter > max_iter {
                return Err(KnfError::numeric(format!(
                    "eigenvalue iteration did not converge after {max_iter} sweeps"
                )));
            }
            let mut m = n - 2;
            while m >= l {
                z = at!(h, m, m);
                r = x - z;
                s = y - z;
                p = (r * s - w) / at!(h, m + 1, m) + at!(h, m, m + 1);
                q = at!(h, m + 1, m + 1) - z - r - s;
                r = at!(h, m + 2, m + 1);
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if at!(h, m, m - 1).abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (at!(h, m - 1, m - 1).abs() + z.abs() + at!(h, m + 1, m + 1).abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=n {
                at!(h, i, i - 2) = 0.0;
                if i > m + 2 {
                    at!(h, i, i - 3) = 0.0;
                }
            }
            for k in m..n {
                let notlast = k != n - 1;
                if k != m {
                    p = at!(h, k, k - 1);
                    q = at!(h, k + 1, k - 1);
                    r = if notlast { at!(h, k + 2, k - 1) } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        at!(h, k, k - 1) = -s * x;
                    } else if l != m {
                        at!(h, k, k - 1) = -at!(h, k, k - 1);
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..nn as isize {
                        p = at!(h, k, j) + q * at!(h, k + 1, j);
                        if notlast {
                            p += r * at!(h, k + 2, j);
                            at!(h, k + 2, j) -= p * z;
                        }
                        at!(h, k, j) -= p * x;
                        at!(h, k + 1, j) -= p * y;
                    }
                    for i in 0..=n.min(k + 3) {
                        p = x * at!(h, i, k) + y * at!(h, i, k + 1);
                        if notlast {
                            p += z * at!(h, i, k + 2);
                            at!(h, i, k + 2) -= p * r;
                        }
                        at!(h, i, k) -= p;
                        at!(h, i, k + 1) -= p * q;
                    }
                    for i in low..=high {
                        p = x * at!(v, i, k) + y * at!(v, i, k + 1);
                        if notlast {
                            p += z * at!(v, i, k + 2);
                            at!(v, i, k + 2) -= p * r;
                        }
                        at!(v, i, k) -= p;
                        at!(v, i, k + 1) -= p * q;
                    }
                }
            }
        }
    }

    if norm == 0.0 {
        return Ok((d, e));
    }
    for n in (0..nn as isize).rev() {
        p = d[n as usize];
        q = e[n as usize];
        if q == 0.0 {
            let mut l = n;
            at!(h, n, n) = 1.0;
            for i in (0..n).rev() {
                w = at!(h, i, i) - p;
                r = 0.0;
                for j in l..=n {
                    r += at!(h, i, j) * at!(h, j, n);
                }
                if e[i as usize] < 0.0 {
                    z = w;
                    s = r;
                } else {
                    l = i;
                    if e[i as usize] == 0.0 {
                        at!(h, i, n) = if w != 0.0 { -r / w } else { -r / (eps * norm) };
                    } else {
                        x = at!(h, i, i + 1);
                        y = at!(h, i + 1, i);
                        q = (d[i as usize] - p) * (d[i as usize] - p) + e[i as usize] * e[i as usize];
                        t = (x * s - z * r) / q;
                        at!(h, i, n) = t;
                        at!(h, i + 1, n) = if x.abs() > z.abs() { (-r - w * t) / x } else { (-s - y * t) / z };
                    }
                    t = at!(h, i, n).abs();
                    if (eps * t) * t > 1.0 {
                        for j in i..=n {
                            at!(h, j, n) /= t;
                        }
                    }
                }
            }
        } else if q < 0.0 {
            let mut l = n - 1;
            if at!(h, n, n - 1).abs() > at!(h, n - 1, n).abs() {
                at!(h, n - 1, n - 1) = q / at!(h, n, n - 1);
                at!(h, n - 1, n) = -(at!(h, n, n) - p) / at!(h, n, n - 1);
            } else {
                let (cr, ci) = cdiv(0.0, -at!(h, n - 1, n), at!(h, n - 1, n - 1) - p, q);
                at!(h, n - 1, n - 1) = cr;
                at!(h, n - 1, n) = ci;
            }
            at!(h, n, n - 1) = 0.0;
            at!(h, n, n) = 1.0;
            for i in (0..n - 1).rev() {
                let mut ra = 0.0;
                let mut sa = 0.0;
                for j in l..=n {
                    ra += at!(h, i, j) * at!(h, j, n - 1);
                    sa += at!(h, i, j) * at!(h, j, n);
                }
                w = at!(h, i, i) - p;
                if e[i as usize] < 0.0 {
                    z = w;
                    r = ra;
                    s = sa;
                } else {
                    l = i;
                    if e[i as usize] == 0.0 {
                        let (cr, ci) = cdiv(-ra, -sa, w, q);
                        at!(h, i, n - 1) = cr;
                        at!(h, i, n) = ci;
                    } else {
                        x = at!(h, i, i + 1);
                        y = at!(h, i + 1, i);
                        let di = d[i as usize] - p;
                        let mut vr = di * di + e[i as usize] * e[i as usize] - q * q;
                        let vi = di * 2.0 * q;
                        if vr == 0.0 && vi == 0.0 {
                            vr = eps * norm * (w.abs() + q.abs() + x.abs() + y.abs() + z.abs());
                        }
                        let (cr, ci) = cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi);
                        at!(h, i, n - 1) = cr;
                        at!(h, i, n) = ci;
                        if x.abs() > z.abs() + q.abs() {
                            at!(h, i + 1, n - 1) = (-ra - w * at!(h, i, n - 1) + q * at!(h, i, n)) / x;
                            at!(h, i + 1, n) = (-sa - w * at!(h, i, n) - q * at!(h, i, n - 1)) / x;
                        } else {
                            let (cr, ci) = cdiv(-r - y * at!(h, i, n - 1), -s - y * at!(h, i, n), z, q);
                            at!(h, i + 1, n - 1) = cr;
                            at!(h, i + 1, n) = ci;
                        }
                    }
                    t = at!(h, i, n - 1).abs().max(at!(h, i, n).abs());
                    if (eps * t) * t > 1.0 {
                        for j in i..=n {
                            at!(h, j, n - 1) /= t;
                            at!(h, j, n) /= t;
                        }
                    }
                }
            }
        }
    }
    for j in (low..nn as isize).rev() {
        for i in low..=high {
            let mut acc = 0.0;
            for k in low..=j.min(high) {
                acc += at!(v, i, k) * at!(h, k, j);
            }
            at!(v, i, j) = acc;
        }
    }
    Ok((d, e))
}

fn residual(k: &Mat, lambda: Complex64, v: &[Complex64]) -> f64 {
    let n = k.rows();
    (0..n)
        .map(|i| {
            let kv: Complex64 = (0..n).map(|j| v[j] * k[(i, j)]).sum();
            (kv - lambda * v[i]).norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

fn unit(mut v: Vec<Complex64>) -> Vec<Complex64> {
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        // Rotate so the largest entry is real and positive.
        let big = v
            .iter()
            .copied()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap_or(Complex64::new(1.0, 0.0));
        let phase = big.conj() / big.norm();
        v.iter_mut().for_each(|c| *c = *c * phase / norm);
    }
    v
}

/// Eigenvalues and right eigenvectors of a real square matrix.
pub fn eigendecompose(k: &Mat) -> Result<Spectrum> {
    let n = k.rows();
    if k.cols() != n {
        return Err(KnfError::dim(format!("eigendecomposition needs a square matrix, got {:?}", k.shape())));
    }
    if !k.is_finite() {
        return Err(KnfError::numeric("matrix has non-finite entries"));
    }
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| k.row(i).to_vec()).collect();
    let mut v = vec![vec![0.0; n]; n];
    orthes(&mut h, &mut v);
    let (re, im) = hqr2(&mut h, &mut v)?;

    let mut pairs: Vec<(Complex64, Vec<Complex64>)> = Vec::with_capacity(n);
    let mut j = 0;
    while j < n {
        if im[j] == 0.0 {
            let vec = (0..n).map(|i| Complex64::new(v[i][j], 0.0)).collect();
            pairs.push((Complex64::new(re[j], 0.0), unit(vec)));
            j += 1;
        } else {
            let u: Vec<Complex64> = (0..n).map(|i| Complex64::new(v[i][j], v[i][j + 1])).collect();
            let l = Complex64::new(re[j], im[j]);
            let (l1, l2) = if residual(k, l, &u) <= residual(k, l.conj(), &u) { (l, l.conj()) } else { (l.conj(), l) };
            let uc: Vec<Complex64> = u.iter().map(|c| c.conj()).collect();
            pairs.push((l1, unit(u)));
            pairs.push((l2, unit(uc)));
            j += 2;
        }
    }
    pairs.sort_by(|a, b| b.0.norm().total_cmp(&a.0.norm()).then(b.0.im.total_cmp(&a.0.im)));
    let residuals = pairs.iter().map(|(l, v)| residual(k, *l, v)).collect();
    let (eigenvalues, eigenvectors) = pairs.into_iter().unzip();
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
        residuals,
    })
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(k: &Mat) -> Result<f64> {
    Ok(eigendecompose(k)?.eigenvalues.first().map_or(0.0, |l| l.norm()))
}

pub const RANK_TOLERANCE: f64 = 1e-10;

/// Solves `Σ_j c_j v_j = g` and returns the components `c_j v_j`.
pub fn eigencomponents(spectrum: &Spectrum, g: &[f64]) -> Result<Vec<Vec<Complex64>>> {
    let n = spectrum.len();
    if g.len() != n {
        return Err(KnfError::dim(format!("vector of length {} for a spectrum of size {n}", g.len())));
    }
    // Augmented system [V | g], V holding eigenvectors as columns.
    let mut a: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            let mut row: Vec<Complex64> = (0..n).map(|j| spectrum.eigenvectors[j][i]).collect();
            row.push(Complex64::new(g[i], 0.0));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].norm().total_cmp(&a[y][col].norm()))
            .expect("nonempty");
        if a[piv][col].norm() < RANK_TOLERANCE {
            return Err(KnfError::numeric(format!(
                "eigenbasis is rank-deficient (pivot {:.3e} in column {col}); the operator may be defective",
                a[piv][col].norm()
            )));
        }
        a.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != Complex64::new(0.0, 0.0) {
                for c in col..=n {
                    let sub = f * a[col][c];
                    a[r][c] -= sub;
                }
            }
        }
    }
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    for r in (0..n).rev() {
        let mut acc = a[r][n];
        for j in r + 1..n {
            acc -= a[r][j] * c[j];
        }
        c[r] = acc / a[r][r];
    }
    Ok((0..n)
        .map(|j| spectrum.eigenvectors[j].iter().map(|v| c[j] * v).collect())
        .collect())
}

/// Component `j` advanced `steps - 1` times: row `i` is `λ_j^i c_j v_j`.
pub fn component_trajectory(spectrum: &Spectrum, component: &[Complex64], j: usize, steps: usize) -> Vec<Vec<Complex64>> {
    let l = spectrum.eigenvalues[j];
    let mut out = Vec::with_capacity(steps);
    let mut cur = component.to_vec();
    for _ in 0..steps {
        out.push(cur.clone());
        cur.iter_mut().for_each(|c| *c *= l);
    }
    out
}

/// Which operator of the first forecasting call to analyse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorChoice {
    Global,
    /// `K^g + K^l` for the given lookback.
    Lookback,
}

/// The chosen operator (`m x m`) for a lookback window.
pub fn analysis_operator(cfg: &KnfConfig, params: &KnfParams, lookback: &Mat, which: OperatorChoice) -> Result<Mat> {
    let res = model::forecast_horizon(cfg, params, lookback, cfg.call_len())?;
    let ops = &res.operators[0];
    Ok(match which {
        OperatorChoice::Global => ops.global.clone(),
        OperatorChoice::Lookback => ops.lookback_operator(),
    })
}

/// A per-eigenfunction decoded trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenTrace {
    pub index: usize,
    pub eigenvalue: Complex64,
    /// Index of the conjugate merged into this trace.
    pub merged_with: Option<usize>,
    /// Real measurement trajectory, `q/k x m`.
    pub measurements: Mat,
    /// Decoded trace, `d x q`.
    pub trace: Mat,
}

/// Lookback reconstruction using only eigencomponent `index` of
/// `K^g + K^l`, propagated from the first segment's measurement.
pub fn eigenfunction_reconstruction(
    cfg: &KnfConfig,
    params: &KnfParams,
    lookback: &Mat,
    index: usize,
    merge_conjugates: bool,
) -> Result<EigenTrace> {
    let k = analysis_operator(cfg, params, lookback, OperatorChoice::Lookback)?;
    let spectrum = eigendecompose(&k)?;
    if index >= spectrum.len() {
        return Err(KnfError::arg(format!("component {index} out of range 0..{}", spectrum.len())));
    }
    let meas = model::lookback_measurements(cfg, params, lookback)?;
    let comps = eigencomponents(&spectrum, meas.row(0))?;
    let s = cfg.segments();
    let mut traj = component_trajectory(&spectrum, &comps[index], index, s);
    let merged_with = if merge_conjugates { spectrum.conjugate_of(index) } else { None };
    if let Some(c) = merged_with {
        let other = component_trajectory(&spectrum, &comps[c], c, s);
        for (a, b) in traj.iter_mut().zip(other) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
    let m = cfg.measurement_dim();
    let measurements = Mat::from_fn(s, m, |i, j| traj[i][j].re);
    let trace = model::decode_measurements(cfg, params, lookback, &measurements)?;
    Ok(EigenTrace {
        index,
        eigenvalue: spectrum.eigenvalues[index],
        merged_with,
        measurements,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenMatch {
    pub truth: Complex64,
    pub learned: Complex64,
    pub learned_index: usize,
    pub distance: f64,
    pub pass: bool,
}

/// Nearest learned eigenvalue for every true one; learned values may be
/// matched more than once.
pub fn match_eigenvalues(learned: &[Complex64], truth: &[Complex64], tol: f64) -> Result<Vec<EigenMatch>> {
    if learned.is_empty() || truth.is_empty() {
        return Err(KnfError::arg("eigenvalue matching needs nonempty lists"));
    }
    Ok(truth
        .iter()
        .map(|&t| {
            let (idx, best) = learned
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - t).norm().total_cmp(&(b.1 - t).norm()))
                .expect("nonempty");
            let distance = (best - t).norm();
            EigenMatch {
                truth: t,
                learned: *best,
                learned_index: idx,
                distance,
                pass: distance <= tol,
            }
        })
        .collect())
}

/// `index,re,im,modulus,residual`
pub fn write_spectrum_csv(spectrum: &Spectrum, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "index,re,im,modulus,residual")?;
    for (i, (l, r)) in spectrum.eigenvalues.iter().zip(&spectrum.residuals).enumerate() {
        writeln!(f, "{i},{},{},{},{r}", l.re, l.im, l.norm())?;
    }
    f.flush()?;
    Ok(())
}
