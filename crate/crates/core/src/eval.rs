//! Forecast scores, the persistence baseline and non-stationarity
//! diagnostics.

use std::io::Write;
use std::path::Path;

use log::warn;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{KnfError, Result};
use crate::tensor::Mat;

/// Symmetric MAPE in percent, `0/0` counted as zero.
pub fn smape(forecast: &[f64], target: &[f64]) -> Result<f64> {
    if forecast.len() != target.len() || forecast.is_empty() {
        return Err(KnfError::arg(format!(
            "smape needs equal nonempty lengths, got {} and {}",
            forecast.len(),
            target.len()
        )));
    }
    let total: f64 = forecast
        .iter()
        .zip(target)
        .map(|(f, y)| {
            let den = f.abs() + y.abs();
            if den == 0.0 {
                0.0
            } else {
                200.0 * (y - f).abs() / den
            }
        })
        .sum();
    Ok(total / forecast.len() as f64)
}

/// `sqrt(Σ_s w_s Σ_t e² / Σ_s w_s n_s)`.
pub fn weighted_rmse(forecasts: &[Vec<f64>], targets: &[Vec<f64>], weights: &[f64]) -> Result<f64> {
    if forecasts.len() != targets.len() || forecasts.len() != weights.len() {
        return Err(KnfError::arg("forecasts, targets and weights differ in count"));
    }
    if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
        return Err(KnfError::arg("weights must be nonnegative"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for ((f, y), w) in forecasts.iter().zip(targets).zip(weights) {
        if f.len() != y.len() {
            return Err(KnfError::arg("forecast and target lengths differ"));
        }
        num += w * f.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        den += w * f.len() as f64;
    }
    if den == 0.0 {
        return Err(KnfError::arg("weights are all zero"));
    }
    Ok((num / den).sqrt())
}

pub fn rmse(forecast: &[f64], target: &[f64]) -> Result<f64> {
    weighted_rmse(&[forecast.to_vec()], &[target.to_vec()], &[1.0])
}

/// Repeats the last lookback column `h` times (`d x q` in, `d x h` out).
pub fn persistence_forecast(lookback: &Mat, h: usize) -> Result<Mat> {
    if lookback.cols() == 0 {
        return Err(KnfError::arg("persistence needs a nonempty lookback"));
    }
    let last = lookback.cols() - 1;
    Ok(Mat::from_fn(lookback.rows(), h, |j, _| lookback[(j, last)]))
}

/// `1 - H(p) / log(B)` over the `B` positive-frequency bins of the
/// mean-removed slice.
pub fn forecastability(slice: &[f64]) -> Result<f64> {
    let n = slice.len();
    if n < 4 {
        return Err(KnfError::arg(format!("forecastability needs at least 4 steps, got {n}")));
    }
    let mean = slice.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = slice.iter().map(|x| Complex::new(x - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let power: Vec<f64> = buf[1..=n / 2].iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = power.iter().sum();
    let scale = slice.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1.0);
    if total <= (1e-24 * scale * scale) * n as f64 {
        return Ok(1.0);
    }
    let bins = power.len();
    if bins < 2 {
        return Ok(1.0);
    }
    let entropy: f64 = power
        .iter()
        .map(|p| p / total)
        .filter(|p| *p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    Ok((1.0 - entropy / (bins as f64).ln()).clamp(0.0, 1.0))
}

/// OLS slope over `t = 0..T-1` divided by the mean absolute value.
pub fn trend(slice: &[f64]) -> Result<f64> {
    let n = slice.len();
    if n < 2 {
        return Err(KnfError::arg("trend needs at least 2 steps"));
    }
    let mag = slice.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
    if mag == 0.0 {
        return Ok(0.0);
    }
    let tm = (n - 1) as f64 / 2.0;
    let ym = slice.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, y) in slice.iter().enumerate() {
        let dt = t as f64 - tm;
        sxy += dt * (y - ym);
        sxx += dt * dt;
    }
    Ok(sxy / sxx / mag)
}

/// Sample autocorrelation at `lag`.
pub fn autocorrelation(slice: &[f64], lag: usize) -> Option<f64> {
    let n = slice.len();
    if lag >= n {
        return None;
    }
    let mean = slice.iter().sum::<f64>() / n as f64;
    let var: f64 = slice.iter().map(|x| (x - mean) * (x - mean)).sum();
    let scale = slice.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1.0);
    if var <= 1e-24 * scale * scale * n as f64 {
        return None;
    }
    let cov: f64 = (0..n - lag).map(|t| (slice[t] - mean) * (slice[t + lag] - mean)).sum();
    Some(cov / var)
}

/// Whether the lag autocorrelation exceeds the 95% band `1.96 / sqrt(T)`.
pub fn seasonality_acf(slice: &[f64], lag: usize) -> Result<bool> {
    if lag == 0 || slice.len() <= 3 * lag {
        return Err(KnfError::arg(format!(
            "seasonality test needs lag >= 1 and more than {} steps, got lag {lag} and {} steps",
            3 * lag,
            slice.len()
        )));
    }
    match autocorrelation(slice, lag) {
        Some(r) => Ok(r > 1.96 / (slice.len() as f64).sqrt()),
        None => {
            warn!("autocorrelation undefined for a constant slice; reporting no seasonality");
            Ok(false)
        }
    }
}

/// Natural seasonal period of common frequency tags.
pub fn natural_lag(frequency: &str) -> Option<usize> {
    match frequency.to_ascii_lowercase().as_str() {
        "hourly" => Some(24),
        "daily" => Some(7),
        "weekly" => Some(52),
        "monthly" => Some(12),
        "quarterly" => Some(4),
        _ => frequency
            .strip_prefix("period=")
            .and_then(|p| p.parse::<f64>().ok())
            .map(|p| p.round() as usize)
            .filter(|p| *p >= 1),
    }
}

pub const DIAGNOSTIC_SLICE: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub forecastability: f64,
    pub trend: f64,
    /// Fraction of slices with significant seasonality at the lag, if a
    /// lag was testable.
    pub seasonality: Option<f64>,
    pub slices: usize,
}

/// Diagnostics averaged over consecutive non-overlapping slices of length
/// `slice_len`.
pub fn slice_diagnostics(series: &[f64], slice_len: usize, lag: Option<usize>) -> Result<Diagnostics> {
    if slice_len < 4 {
        return Err(KnfError::arg("slices need at least 4 steps"));
    }
    let slices: Vec<&[f64]> = series.chunks_exact(slice_len).collect();
    if slices.is_empty() {
        return Err(KnfError::arg(format!(
            "series of {} steps is shorter than one slice of {slice_len}",
            series.len()
        )));
    }
    let n = slices.len() as f64;
    let mut f = 0.0;
    let mut t = 0.0;
    for s in &slices {
        f += forecastability(s)?;
        t += trend(s)?;
    }
    let seasonality = match lag {
        Some(l) if l >= 1 && slice_len > 3 * l => {
            let mut hits = 0usize;
            for s in &slices {
                if seasonality_acf(s, l)? {
                    hits += 1;
                }
            }
            Some(hits as f64 / n)
        }
        _ => None,
    };
    Ok(Diagnostics {
        forecastability: f / n,
        trend: t / n,
        seasonality,
        slices: slices.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Smape,
    Rmse,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Smape => "smape",
            Metric::Rmse => "rmse",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = KnfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smape" => Ok(Metric::Smape),
            "rmse" => Ok(Metric::Rmse),
            _ => Err(KnfError::arg(format!("unknown metric {s:?}"))),
        }
    }
}

/// One series' forecast and the observed continuation, both `d x h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSeries {
    pub id: String,
    pub weight: f64,
    pub forecast: Mat,
    pub target: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub metric: Metric,
    /// sMAPE: weighted mean of per-series values. RMSE: weighted pooled RMSE.
    pub overall: f64,
    /// `(label, value)` for steps `1-5`, `6-10`, ...
    pub buckets: Vec<(String, f64)>,
    pub per_series: Vec<(String, f64)>,
}

fn flat_cols(m: &Mat, start: usize, end: usize) -> Vec<f64> {
    m.col_range(start, end).into_vec()
}

fn aggregate(metric: Metric, items: &[ScoredSeries], start: usize, end: usize) -> Result<f64> {
    let f: Vec<Vec<f64>> = items.iter().map(|s| flat_cols(&s.forecast, start, end)).collect();
    let y: Vec<Vec<f64>> = items.iter().map(|s| flat_cols(&s.target, start, end)).collect();
    let w: Vec<f64> = items.iter().map(|s| s.weight).collect();
    match metric {
        Metric::Rmse => weighted_rmse(&f, &y, &w),
        Metric::Smape => {
            let total: f64 = w.iter().sum();
            if total == 0.0 {
                return Err(KnfError::arg("weights are all zero"));
            }
            let mut acc = 0.0;
            for ((a, b), wi) in f.iter().zip(&y).zip(&w) {
                acc += wi * smape(a, b)?;
            }
            Ok(acc / total)
        }
    }
}

/// Scores forecasts overall, per horizon bucket of `bucket` steps and per series.
pub fn score(metric: Metric, items: &[ScoredSeries], bucket: usize) -> Result<ScoreReport> {
    if items.is_empty() {
        return Err(KnfError::arg("nothing to score"));
    }
    let h = items[0].forecast.cols();
    for s in items {
        if s.forecast.shape() != s.target.shape() || s.forecast.cols() != h {
            return Err(KnfError::dim(format!("series {} has mismatched forecast/target shapes", s.id)));
        }
    }
    let overall = aggregate(metric, items, 0, h)?;
    let bucket = bucket.max(1);
    let mut buckets = Vec::new();
    let mut start = 0;
    while start < h {
        let end = (start + bucket).min(h);
        buckets.push((format!("{}-{}", start + 1, end), aggregate(metric, items, start, end)?));
        start = end;
    }
    let per_series = items
        .iter()
        .map(|s| {
            let one = ScoredSeries { weight: 1.0, ..s.clone() };
            Ok((s.id.clone(), aggregate(metric, std::slice::from_ref(&one), 0, h)?))
        })
        .collect::<Result<_>>()?;
    Ok(ScoreReport {
        metric,
        overall,
        buckets,
        per_series,
    })
}

/// `series_id,metric,bucket,value` with `all` rows for the aggregate.
pub fn write_report_csv(reports: &[ScoreReport], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "series_id,metric,bucket,value")?;
    for r in reports {
        let name = r.metric.name();
        writeln!(f, "all,{name},all,{}", r.overall)?;
        for (b, v) in &r.buckets {
            writeln!(f, "all,{name},{b},{v}")?;
        }
        for (id, v) in &r.per_series {
            writeln!(f, "{id},{name},all,{v}")?;
        }
    }
    f.flush()?;
    Ok(())
}
