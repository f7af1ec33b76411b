//! Series ingestion, windowing, instance normalization, splitting and
//! synthetic generators.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{KnfError, Result};
use crate::tensor::Mat;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub id: String,
    /// `T x d`, one row per time step.
    pub values: Mat,
    pub weight: f64,
    pub frequency: String,
    pub feature_names: Vec<String>,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, values: Mat) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(KnfError::arg("a series needs at least one step and one feature"));
        }
        if !values.is_finite() {
            return Err(KnfError::numeric("series contains non-finite values"));
        }
        let feature_names = (1..=values.cols()).map(|j| format!("x{j}")).collect();
        Ok(TimeSeries {
            id: id.into(),
            values,
            weight: 1.0,
            frequency: String::new(),
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn features(&self) -> usize {
        self.values.cols()
    }

    /// Steps `start..end` as a `d x (end - start)` block.
    pub fn block(&self, start: usize, end: usize) -> Mat {
        Mat::from_fn(self.features(), end - start, |j, t| self.values[(start + t, j)])
    }

    /// Steps `start..end` as a new series with the same metadata.
    pub fn slice(&self, start: usize, end: usize) -> TimeSeries {
        let d = self.features();
        let values = Mat::from_fn(end - start, d, |t, j| self.values[(start + t, j)]);
        TimeSeries {
            values,
            ..self.clone()
        }
    }

    /// Values of feature `j` over time.
    pub fn channel(&self, j: usize) -> Vec<f64> {
        self.values.col(j)
    }
}

/// Reads a CSV with a header row of feature names and one row per step.
pub fn load_csv(path: &Path) -> Result<TimeSeries> {
    let parse_err = |line: u64, message: String| KnfError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => KnfError::Io(io),
            other => parse_err(1, format!("{other:?}")),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(parse_err(1, "missing header row".into()));
    }
    let d = header.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            match e.kind() {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                    parse_err(line, format!("row has {len} fields, expected {expected_len}"))
                }
                _ => parse_err(line, e.to_string()),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("cannot parse {field:?} as a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value {field:?}")));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err(2, "no data rows".into()));
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut series = TimeSeries::new(id, Mat::from_vec(rows, d, data)?)?;
    series.feature_names = header;
    Ok(series)
}

pub fn write_csv(series: &TimeSeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(&series.feature_names).map_err(csv_io)?;
    for t in 0..series.len() {
        w.write_record(series.values.row(t).iter().map(|v| format!("{v}")))
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> KnfError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => KnfError::Io(io),
        other => KnfError::arg(format!("csv: {other:?}")),
    }
}

/// One `path,weight` entry per line; `#` starts a comment. Relative paths
/// resolve against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<(PathBuf, f64)>> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| KnfError::Parse {
            path: path.to_path_buf(),
            line: n as u64 + 1,
            message,
        };
        let (p, w) = match line.rsplit_once(',') {
            Some((p, w)) => {
                let w: f64 = w
                    .trim()
                    .parse()
                    .map_err(|_| err(format!("bad weight {:?}", w.trim())))?;
                (p.trim(), w)
            }
            None => (line, 1.0),
        };
        if !(w >= 0.0 && w.is_finite()) {
            return Err(err(format!("weight {w} must be a nonnegative number")));
        }
        let p = Path::new(p);
        out.push((if p.is_absolute() { p.to_path_buf() } else { base.join(p) }, w));
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[(PathBuf, f64)]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "# path,weight")?;
    for (p, w) in entries {
        writeln!(f, "{},{w}", p.display())?;
    }
    Ok(())
}

/// Loads every series listed in a manifest, attaching its weight.
pub fn load_manifest(path: &Path) -> Result<Vec<TimeSeries>> {
    read_manifest(path)?
        .into_iter()
        .map(|(p, w)| {
            let mut s = load_csv(&p)?;
            s.weight = w;
            Ok(s)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// `d x q`
    pub lookback: Mat,
    /// `d x h`, the steps right after the lookback.
    pub target: Mat,
    pub source: String,
    pub start: usize,
    pub weight: f64,
}

/// Windows starting at `0, stride, 2·stride, ...` that fit entirely.
pub fn sliding_windows(series: &TimeSeries, q: usize, h: usize, stride: usize) -> Vec<WindowSample> {
    let stride = stride.max(1);
    let t = series.len();
    if t < q + h {
        return Vec::new();
    }
    (0..=t - q - h)
        .step_by(stride)
        .map(|start| WindowSample {
            lookback: series.block(start, start + q),
            target: series.block(start + q, start + q + h),
            source: series.id.clone(),
            start,
            weight: series.weight,
        })
        .collect()
}

pub const REVIN_EPS: f64 = 1e-5;

/// Per-feature statistics of one lookback plus the learnable affine map.
#[derive(Debug, Clone, PartialEq)]
pub struct RevinState {
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub std: Vec<f64>,
    pub eps: f64,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl RevinState {
    /// Statistics of a `d x q` block with an identity affine map.
    pub fn from_block(block: &Mat) -> Self {
        let (mean, std) = row_stats(block);
        let d = block.rows();
        RevinState {
            mean,
            std,
            eps: REVIN_EPS,
            scale: vec![1.0; d],
            shift: vec![0.0; d],
        }
    }

    pub fn with_affine(mut self, scale: Vec<f64>, shift: Vec<f64>) -> Self {
        self.scale = scale;
        self.shift = shift;
        self
    }

    pub fn normalize(&self, block: &Mat) -> Mat {
        Mat::from_fn(block.rows(), block.cols(), |j, t| {
            (block[(j, t)] - self.mean[j]) / (self.std[j] + self.eps) * self.scale[j] + self.shift[j]
        })
    }

    pub fn denormalize(&self, block: &Mat) -> Mat {
        Mat::from_fn(block.rows(), block.cols(), |j, t| {
            (block[(j, t)] - self.shift[j]) / self.scale[j] * (self.std[j] + self.eps) + self.mean[j]
        })
    }
}

/// Per-row mean and population standard deviation.
pub fn row_stats(block: &Mat) -> (Vec<f64>, Vec<f64>) {
    let n = block.cols() as f64;
    let mut means = Vec::with_capacity(block.rows());
    let mut stds = Vec::with_capacity(block.rows());
    for j in 0..block.rows() {
        let row = block.row(j);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        means.push(mean);
        stds.push(var.sqrt());
    }
    (means, stds)
}

#[derive(Debug, Clone, Default)]
pub struct Split {
    pub train: Vec<TimeSeries>,
    pub val: Vec<TimeSeries>,
    pub test: Vec<TimeSeries>,
}

/// Temporal split of every series: the earliest `fractions[0]` of steps go
/// to train, the next `fractions[1]` to validation, the remainder to test.
/// Parts shorter than `min_len` are dropped with a warning.
pub fn split(series: &[TimeSeries], fractions: [f64; 3], min_len: usize) -> Result<Split> {
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 || fractions.iter().any(|f| *f < 0.0) {
        return Err(KnfError::arg(format!("split fractions {fractions:?} must be nonnegative and sum to 1")));
    }
    let mut out = Split::default();
    for s in series {
        let t = s.len();
        let n_train = (fractions[0] * t as f64 + 1e-9).floor() as usize;
        let n_val = (fractions[1] * t as f64 + 1e-9).floor() as usize;
        let bounds = [(0, n_train), (n_train, (n_train + n_val).min(t)), ((n_train + n_val).min(t), t)];
        let names = ["train", "validation", "test"];
        let dests = [&mut out.train, &mut out.val, &mut out.test];
        for (((a, b), dest), (name, frac)) in bounds.into_iter().zip(dests).zip(names.iter().zip(fractions)) {
            if frac == 0.0 {
                continue;
            }
            if b - a < min_len.max(1) {
                warn!("series {}: {name} part has {} steps, fewer than {min_len}; skipped", s.id, b - a);
                continue;
            }
            dest.push(s.slice(a, b));
        }
    }
    Ok(out)
}

/// `dx1/dt = mu·x1`, `dx2/dt = lambda·(x2 - x1²)`, sampled in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorParams {
    pub mu: f64,
    pub lambda: f64,
    pub dt: f64,
    pub steps: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub init_low: [f64; 2],
    pub init_high: [f64; 2],
}

impl Default for OscillatorParams {
    fn default() -> Self {
        OscillatorParams {
            mu: -0.1,
            lambda: -1.0,
            dt: 0.1,
            steps: 200,
            train_count: 36,
            test_count: 12,
            init_low: [-1.0, -1.0],
            init_high: [1.0, 1.0],
        }
    }
}

impl OscillatorParams {
    fn coupling(&self) -> Result<f64> {
        let denom = self.lambda - 2.0 * self.mu;
        if denom.abs() < 1e-12 {
            return Err(KnfError::arg("oscillator needs mu != lambda / 2"));
        }
        Ok(self.lambda / denom)
    }

    /// State at time `t` from the initial condition.
    pub fn state(&self, x0: [f64; 2], t: f64) -> Result<[f64; 2]> {
        let c = self.coupling()?;
        let x1 = x0[0] * (self.mu * t).exp();
        let sq = x0[0] * x0[0];
        let x2 = (x0[1] - c * sq) * (self.lambda * t).exp() + c * sq * (2.0 * self.mu * t).exp();
        Ok([x1, x2])
    }

    pub fn trajectory(&self, x0: [f64; 2]) -> Result<Mat> {
        let mut m = Mat::zeros(self.steps, 2);
        for i in 0..self.steps {
            let [a, b] = self.state(x0, i as f64 * self.dt)?;
            m[(i, 0)] = a;
            m[(i, 1)] = b;
        }
        Ok(m)
    }

    /// Discrete-time eigenvalues of the invariant subspace `{x1, x1², x2}`.
    pub fn discrete_eigenvalues(&self) -> [f64; 3] {
        [
            (self.mu * self.dt).exp(),
            (2.0 * self.mu * self.dt).exp(),
            (self.lambda * self.dt).exp(),
        ]
    }
}

/// `train_count` training series followed by `test_count` held-out ones,
/// initial conditions drawn uniformly from the box.
pub fn oscillator_generate(params: &OscillatorParams, seed: u64) -> Result<Vec<TimeSeries>> {
    params.coupling()?;
    if params.dt <= 0.0 || params.steps == 0 {
        return Err(KnfError::arg("oscillator needs dt > 0 and at least one step"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = params.train_count + params.test_count;
    (0..total)
        .map(|i| {
            let x0 = [
                rng.random_range(params.init_low[0]..=params.init_high[0]),
                rng.random_range(params.init_low[1]..=params.init_high[1]),
            ];
            let id = if i < params.train_count {
                format!("osc_train_{i:03}")
            } else {
                format!("osc_test_{:03}", i - params.train_count)
            };
            let mut s = TimeSeries::new(id, params.trajectory(x0)?)?;
            s.frequency = format!("dt={}", params.dt);
            Ok(s)
        })
        .collect()
}

/// Positive univariate series with a level, a drifting trend, a seasonal
/// cycle whose amplitude wanders over time, and Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalCorpusParams {
    pub count: usize,
    pub length: usize,
    pub periods: Vec<usize>,
    pub noise: f64,
}

impl Default for SeasonalCorpusParams {
    fn default() -> Self {
        SeasonalCorpusParams {
            count: 50,
            length: 400,
            periods: vec![8, 12, 16],
            noise: 0.02,
        }
    }
}

pub fn seasonal_corpus(params: &SeasonalCorpusParams, seed: u64) -> Result<Vec<TimeSeries>> {
    if params.periods.is_empty() || params.length == 0 {
        return Err(KnfError::arg("corpus needs periods and a positive length"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    (0..params.count)
        .map(|i| {
            let level = rng.random_range(2.0..6.0);
            let slope = rng.random_range(-0.5..1.0) / params.length as f64;
            let period = params.periods[rng.random_range(0..params.periods.len())] as f64;
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let amp0 = rng.random_range(0.15..0.35);
            let amp_rate = rng.random_range(0.5..2.0);
            let amp_phase = rng.random_range(0.0..std::f64::consts::TAU);
            let values = Mat::from_fn(params.length, 1, |t, _| {
                let t = t as f64;
                let amp = amp0 * (1.0 + 0.5 * (amp_rate * std::f64::consts::TAU * t / params.length as f64 + amp_phase).sin());
                let trend = 1.0 + slope * t;
                let season = amp * (std::f64::consts::TAU * t / period + phase).sin();
                level * (trend + season + params.noise * noise.sample(&mut rng))
            });
            let mut s = TimeSeries::new(format!("seasonal_{i:03}"), values)?;
            s.frequency = format!("period={period}");
            Ok(s)
        })
        .collect()
}
