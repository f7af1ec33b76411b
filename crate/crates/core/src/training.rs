//! Objective, optimizer, training loop, checkpoints and ensembles.

use std::fs;
use std::path::Path;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::data::WindowSample;
use crate::error::{KnfError, Result};
use crate::eval::{self, Metric};
use crate::model::{self, init_params, KnfConfig, KnfParams};
use crate::nets::{Bound, ParamStore};
use crate::tensor::Mat;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub rec: f64,
    pub back: f64,
    pub forw: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.rec + self.back + self.forw
    }

    fn scaled(self, s: f64) -> Self {
        LossBreakdown {
            rec: self.rec * s,
            back: self.back * s,
            forw: self.forw * s,
        }
    }

    fn plus(self, o: Self) -> Self {
        LossBreakdown {
            rec: self.rec + o.rec,
            back: self.back + o.back,
            forw: self.forw + o.forw,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub clip_norm: Option<f64>,
    pub validation_metric: Metric,
    /// Stop after this many epochs without validation improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 100,
            seed: 0,
            clip_norm: Some(1.0),
            validation_metric: Metric::Smape,
            patience: Some(10),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1e-5..=1e-1).contains(&self.learning_rate) {
            return Err(KnfError::arg(format!(
                "learning rate {} outside [1e-5, 1e-1]",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(KnfError::arg("batch size must be positive"));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(KnfError::arg("clip norm must be positive"));
            }
        }
        Ok(())
    }
}

fn check_sample(cfg: &KnfConfig, s: &WindowSample) -> Result<()> {
    if s.lookback.shape() != (cfg.d, cfg.q) {
        return Err(KnfError::dim(format!(
            "sample lookback is {:?}, expected ({}, {})",
            s.lookback.shape(),
            cfg.d,
            cfg.q
        )));
    }
    if s.target.rows() != cfg.d || s.target.cols() < cfg.train_horizon() {
        return Err(KnfError::dim(format!(
            "sample target is {:?}, expected {} rows and at least {} steps",
            s.target.shape(),
            cfg.d,
            cfg.train_horizon()
        )));
    }
    Ok(())
}

/// The three loss nodes of one sample.
pub(crate) fn sample_loss_nodes(
    graph: &mut Graph,
    cfg: &KnfConfig,
    bound: &Bound,
    sample: &WindowSample,
) -> Result<[Var; 3]> {
    check_sample(cfg, sample)?;
    let horizon = cfg.train_horizon();
    let x = graph.constant(sample.lookback.clone());
    let out = model::rollout(graph, cfg, bound, x, horizon, true)?;
    let first = &out.calls[0];
    let rec = graph.mse(first.recon, x);
    let back_pred = graph.col_range(first.back.expect("requested"), cfg.k, cfg.q);
    let back_obs = graph.col_range(x, cfg.k, cfg.q);
    let back = graph.mse(back_pred, back_obs);
    let target = graph.constant(sample.target.col_range(0, horizon));
    let forw = graph.mse(out.forecast, target);
    Ok([rec, back, forw])
}

/// Loss terms of one sample.
pub fn loss(cfg: &KnfConfig, params: &KnfParams, sample: &WindowSample) -> Result<LossBreakdown> {
    let mut g = Graph::new();
    let bound = params.bind_frozen(&mut g);
    let [r, b, f] = sample_loss_nodes(&mut g, cfg, &bound, sample)?;
    let v = |x: Var| g.value(x).as_slice()[0];
    Ok(LossBreakdown {
        rec: v(r),
        back: v(b),
        forw: v(f),
    })
}

/// Mean loss over `samples` and its gradient, one entry per tensor in store order.
pub fn batch_gradient(cfg: &KnfConfig, params: &KnfParams, samples: &[&WindowSample]) -> Result<(LossBreakdown, Vec<Mat>)> {
    if samples.is_empty() {
        return Err(KnfError::arg("empty batch"));
    }
    let mut parts = LossBreakdown::default();
    let scale = 1.0 / samples.len() as f64;
    let (_, grads) = crate::nets::gradient(params, |g, bound| {
        let mut terms = Vec::with_capacity(samples.len() * 3);
        for s in samples {
            let nodes = sample_loss_nodes(g, cfg, bound, s)?;
            let v = |x: Var| g.value(x).as_slice()[0];
            parts = parts.plus(LossBreakdown {
                rec: v(nodes[0]),
                back: v(nodes[1]),
                forw: v(nodes[2]),
            });
            terms.extend(nodes);
        }
        let stacked = g.concat_rows(&terms);
        let sum = g.sum_all(stacked);
        Ok(g.scale(sum, scale))
    })?;
    Ok((parts.scaled(scale), grads))
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Mat>,
    pub v: Vec<Mat>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Mat> = params.iter().map(|p| Mat::zeros(p.value.rows(), p.value.cols())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub applied: bool,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

pub fn global_norm(grads: &[Mat]) -> f64 {
    grads.iter().map(|g| g.as_slice().iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt()
}

/// One Adam update, optionally after clipping the global gradient norm.
/// Non-finite gradients leave parameters and moments untouched.
pub fn optimizer_step(
    state: &mut AdamState,
    params: &mut ParamStore,
    grads: &[Mat],
    lr: f64,
    clip_norm: Option<f64>,
) -> Result<StepReport> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(KnfError::dim("gradient count does not match parameters"));
    }
    for (g, p) in grads.iter().zip(params.iter()) {
        if g.shape() != p.value.shape() {
            return Err(KnfError::dim(format!("gradient for {} has shape {:?}", p.name, g.shape())));
        }
    }
    let norm = global_norm(grads);
    if !norm.is_finite() {
        warn!("skipping optimizer step: non-finite gradient");
        return Ok(StepReport {
            applied: false,
            grad_norm: norm,
        });
    }
    let factor = match clip_norm {
        Some(c) if norm > c => c / norm,
        _ => 1.0,
    };
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (i, p) in params.values_mut().enumerate() {
        let g = grads[i].as_slice();
        let m = state.m[i].as_mut_slice();
        let v = state.v[i].as_mut_slice();
        for (((x, gi), mi), vi) in p.as_mut_slice().iter_mut().zip(g).zip(m).zip(v) {
            let gi = gi * factor;
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let mh = *mi / c1;
            let vh = *vi / c2;
            *x -= lr * mh / (vh.sqrt() + state.eps);
        }
    }
    Ok(StepReport {
        applied: true,
        grad_norm: norm,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub validation: Option<f64>,
    pub skipped_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters of the best epoch.
    pub params: KnfParams,
    pub history: Vec<EpochRecord>,
    /// `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

/// Mean validation score of full-horizon forecasts.
pub fn validation_score(cfg: &KnfConfig, params: &KnfParams, windows: &[WindowSample], metric: Metric) -> Result<f64> {
    if windows.is_empty() {
        return Err(KnfError::arg("no validation windows"));
    }
    let mut acc = 0.0;
    let mut f_all = Vec::with_capacity(windows.len());
    let mut y_all = Vec::with_capacity(windows.len());
    for w in windows {
        let h = cfg.h.min(w.target.cols());
        let f = model::forecast_horizon(cfg, params, &w.lookback, h)?.forecast;
        let y = w.target.col_range(0, h);
        match metric {
            Metric::Smape => acc += eval::smape(f.as_slice(), y.as_slice())?,
            Metric::Rmse => {
                f_all.push(f.into_vec());
                y_all.push(y.into_vec());
            }
        }
    }
    match metric {
        Metric::Smape => Ok(acc / windows.len() as f64),
        Metric::Rmse => eval::weighted_rmse(&f_all, &y_all, &vec![1.0; f_all.len()]),
    }
}

/// Trains from freshly initialized parameters (seeded by `tc.seed`).
pub fn train(cfg: &KnfConfig, tc: &TrainConfig, train_windows: &[WindowSample], val_windows: &[WindowSample]) -> Result<TrainOutcome> {
    let params = init_params(cfg, tc.seed)?;
    train_from(cfg, tc, params, train_windows, val_windows)
}

/// Trains starting from `params`. Selection uses validation windows when
/// given and the mean training loss otherwise.
pub fn train_from(
    cfg: &KnfConfig,
    tc: &TrainConfig,
    mut params: KnfParams,
    train_windows: &[WindowSample],
    val_windows: &[WindowSample],
) -> Result<TrainOutcome> {
    tc.validate()?;
    cfg.validate()?;
    if train_windows.is_empty() {
        return Err(KnfError::arg("no training windows"));
    }
    for w in train_windows {
        check_sample(cfg, w)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed ^ 0x5eed_0f5a_f1e5);
    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    let mut state = AdamState::new(&params);
    let mut history = Vec::with_capacity(tc.epochs);
    let mut best: Option<(f64, usize, KnfParams)> = None;
    let mut since_best = 0usize;
    let diverged = |epoch: usize, e: KnfError| match e {
        KnfError::Numeric(m) => KnfError::Diverged { epoch, message: m },
        other => other,
    };
    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        let mut skipped = 0;
        for chunk in order.chunks(tc.batch_size) {
            let batch: Vec<&WindowSample> = chunk.iter().map(|&i| &train_windows[i]).collect();
            let (parts, grads) = batch_gradient(cfg, &params, &batch).map_err(|e| diverged(epoch, e))?;
            if !parts.total().is_finite() {
                return Err(KnfError::Diverged {
                    epoch,
                    message: format!("loss is {}", parts.total()),
                });
            }
            sum = sum.plus(parts.scaled(chunk.len() as f64));
            let rep = optimizer_step(&mut state, &mut params, &grads, tc.learning_rate, tc.clip_norm)?;
            if !rep.applied {
                skipped += 1;
            }
        }
        let train_mean = sum.scaled(1.0 / train_windows.len() as f64);
        let validation = if val_windows.is_empty() {
            None
        } else {
            Some(validation_score(cfg, &params, val_windows, tc.validation_metric).map_err(|e| diverged(epoch, e))?)
        };
        let score = validation.unwrap_or(train_mean.total());
        info!(
            "epoch {epoch}: rec {:.6} back {:.6} forw {:.6}{}",
            train_mean.rec,
            train_mean.back,
            train_mean.forw,
            validation.map_or(String::new(), |v| format!(" val {}={v:.6}", tc.validation_metric.name()))
        );
        history.push(EpochRecord {
            epoch,
            train: train_mean,
            validation,
            skipped_steps: skipped,
        });
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, epoch, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if tc.patience.is_some_and(|p| since_best >= p) {
                debug!("early stop at epoch {epoch}");
                break;
            }
        }
    }
    Ok(match best {
        Some((_, e, p)) => TrainOutcome {
            params: p,
            history,
            best_epoch: Some(e),
        },
        None => TrainOutcome {
            params,
            history,
            best_epoch: None,
        },
    })
}

/// `epoch,rec,back,forw,total,validation`
pub fn write_history_csv(history: &[EpochRecord], path: &Path) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "epoch,rec,back,forw,total,validation")?;
    for r in history {
        let v = r.validation.map_or(String::new(), |v| v.to_string());
        writeln!(
            f,
            "{},{},{},{},{},{v}",
            r.epoch,
            r.train.rec,
            r.train.back,
            r.train.forw,
            r.train.total()
        )?;
    }
    f.flush()?;
    Ok(())
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"KNF1";

/// Serializes every tensor as `name, rank 2, dims, f64 LE values`.
pub fn checkpoint_bytes(params: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for t in params.iter() {
        out.extend_from_slice(&(t.name.len() as u64).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&2u64.to_le_bytes());
        out.extend_from_slice(&(t.value.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.value.cols() as u64).to_le_bytes());
        for v in t.value.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(params: &ParamStore, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_bytes(params))?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(KnfError::Format {
                offset: self.pos as u64,
                message: format!("truncated: {what} needs {n} bytes, {} remain", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<ParamStore> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(KnfError::Format {
            offset: 0,
            message: format!("bad magic {magic:?}, expected \"KNF1\""),
        });
    }
    let count = c.u64("tensor count")?;
    let mut store = ParamStore::new();
    for i in 0..count {
        let start = c.pos as u64;
        let len = c.u64("name length")? as usize;
        let name_bytes = c.take(len, "tensor name")?;
        let name = String::from_utf8(name_bytes.to_vec()).map_err(|_| KnfError::Format {
            offset: start,
            message: format!("tensor {i}: name is not UTF-8"),
        })?;
        let rank = c.u64("rank")?;
        if !(1..=2).contains(&rank) {
            return Err(KnfError::Format {
                offset: c.pos as u64 - 8,
                message: format!("tensor {name}: unsupported rank {rank}"),
            });
        }
        let mut dims = Vec::new();
        for _ in 0..rank {
            dims.push(c.u64("dimension")? as usize);
        }
        let (rows, cols) = if rank == 1 { (1, dims[0]) } else { (dims[0], dims[1]) };
        let n = rows.checked_mul(cols).and_then(|n| n.checked_mul(8)).ok_or_else(|| KnfError::Format {
            offset: c.pos as u64,
            message: format!("tensor {name}: dimensions overflow"),
        })?;
        let at = c.pos as u64;
        let raw = c.take(n, &format!("tensor {name} values")).map_err(|e| match e {
            KnfError::Format { message, .. } => KnfError::Format {
                offset: at,
                message: format!("tensor {name} ({rows}x{cols}): {message}"),
            },
            other => other,
        })?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let value = Mat::from_vec(rows, cols, data)?;
        store.insert(name, value).map_err(|e| KnfError::Format {
            offset: start,
            message: e.to_string(),
        })?;
    }
    if c.pos != bytes.len() {
        return Err(KnfError::Format {
            offset: c.pos as u64,
            message: format!("{} trailing bytes after the last tensor", bytes.len() - c.pos),
        });
    }
    Ok(store)
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    parse_checkpoint(&fs::read(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Mean,
    Median,
}

/// Elementwise aggregate of member forecasts.
pub fn ensemble_forecast(members: &[KnfParams], cfg: &KnfConfig, lookback: &Mat, how: Aggregation) -> Result<Mat> {
    let first = members.first().ok_or_else(|| KnfError::arg("ensemble needs at least one member"))?;
    for (i, m) in members.iter().enumerate().skip(1) {
        let same = m.len() == first.len()
            && m.iter().zip(first.iter()).all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape());
        if !same {
            return Err(KnfError::arg(format!("ensemble member {i} has a different configuration")));
        }
    }
    let forecasts = members
        .iter()
        .map(|p| Ok(model::forecast(cfg, p, lookback)?.forecast))
        .collect::<Result<Vec<Mat>>>()?;
    let (r, c) = forecasts[0].shape();
    Ok(Mat::from_fn(r, c, |i, j| {
        let mut vals: Vec<f64> = forecasts.iter().map(|f| f[(i, j)]).collect();
        match how {
            Aggregation::Mean => vals.iter().sum::<f64>() / vals.len() as f64,
            Aggregation::Median => {
                vals.sort_by(f64::total_cmp);
                let n = vals.len();
                if n % 2 == 1 {
                    vals[n / 2]
                } else {
                    0.5 * (vals[n / 2 - 1] + vals[n / 2])
                }
            }
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sliding_windows, TimeSeries};
    use crate::measurements::{MeasurementFn, MeasurementSpec};
    use crate::model::{KnfOptions, DECODER, ENCODER, GLOBAL_OPERATOR};
    use proptest::prelude::*;
    use rand::Rng;

    fn small() -> KnfOptions {
        let mut o = KnfOptions::new(1, 2, 8, 4);
        o.encoder_hidden = 6;
        o.decoder_hidden = 6;
        o.feedback_hidden = 6;
        o.attention_width = 4;
        o.segments_per_call = 2;
        o
    }

    fn windows(n: usize) -> Vec<WindowSample> {
        let s = TimeSeries::new("s", Mat::from_fn(n, 1, |t, _| 2.0 + (t as f64 * 0.4).sin())).unwrap();
        sliding_windows(&s, 8, 4, 1)
    }

    #[test]
    fn perfect_fit_gives_zero_loss() {
        // Identity encoder/decoder on a constant window with K^g = I.
        let spec = MeasurementSpec::new(vec![MeasurementFn::Poly(1)], 1, 1, vec![]).unwrap();
        let mut o = KnfOptions::new(1, 1, 4, 2);
        o.spec = Some(spec);
        o.encoder_layers = 1;
        o.decoder_layers = 1;
        o.use_local = false;
        o.use_feedback = false;
        o.revin = false;
        let cfg = o.build().unwrap();
        let mut p = init_params(&cfg, 0).unwrap();
        *p.get_mut(&crate::nets::weight_name(ENCODER, 0)).unwrap() = Mat::zeros(1, 1);
        *p.get_mut(&crate::nets::bias_name(ENCODER, 0)).unwrap() = Mat::filled(1, 1, 1.0);
        *p.get_mut(&crate::nets::weight_name(DECODER, 0)).unwrap() = Mat::filled(1, 1, 1.0);
        let w = WindowSample {
            lookback: Mat::row_vector(&[0.7; 4]),
            target: Mat::row_vector(&[0.7; 2]),
            source: "c".into(),
            start: 0,
            weight: 1.0,
        };
        let l = loss(&cfg, &p, &w).unwrap();
        assert_eq!((l.rec, l.back, l.forw), (0.0, 0.0, 0.0));
        assert_eq!(p.get(GLOBAL_OPERATOR).unwrap(), &Mat::identity(1));
    }

    #[test]
    fn residual_doubling_quadruples_forward_loss() {
        let cfg = small().build().unwrap();
        let p = init_params(&cfg, 1).unwrap();
        let w = windows(20).remove(0);
        let f = model::forecast_horizon(&cfg, &p, &w.lookback, 4).unwrap().forecast;
        let mut w2 = w.clone();
        w2.target = f.add(&w.target.sub(&f).scale(2.0));
        let a = loss(&cfg, &p, &w).unwrap();
        let b = loss(&cfg, &p, &w2).unwrap();
        assert!((b.forw - 4.0 * a.forw).abs() < 1e-12 * (1.0 + a.forw));
        assert_eq!(a.rec, b.rec);
    }

    #[test]
    fn loss_matches_loop_oracle() {
        let cfg = small().build().unwrap();
        let mut p = init_params(&cfg, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for v in p.values_mut() {
            v.as_mut_slice().iter_mut().for_each(|x| *x += 0.1 * rng.random_range(-1.0..1.0));
        }
        let w = windows(20).remove(3);
        let l = loss(&cfg, &p, &w).unwrap();
        // Oracle built from the public model operations.
        let ws = model::forecast_horizon(&cfg, &p, &w.lookback, 4).unwrap().forecast;
        let back = model::lookback_predict(&cfg, &p, &w.lookback).unwrap();
        let meas = model::lookback_measurements(&cfg, &p, &w.lookback).unwrap();
        let recon = model::decode_measurements(&cfg, &p, &w.lookback, &meas).unwrap();
        let mut rec = 0.0;
        let mut bk = 0.0;
        for t in 0..8 {
            rec += (recon[(0, t)] - w.lookback[(0, t)]).powi(2);
            if t >= 2 {
                bk += (back[(0, t)] - w.lookback[(0, t)]).powi(2);
            }
        }
        let mut fw = 0.0;
        for t in 0..4 {
            fw += (ws[(0, t)] - w.target[(0, t)]).powi(2);
        }
        assert!((l.rec - rec / 8.0).abs() < 1e-12);
        assert!((l.back - bk / 6.0).abs() < 1e-12);
        assert!((l.forw - fw / 4.0).abs() < 1e-12);
        assert!((l.total() - (l.rec + l.back + l.forw)).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let mut p = ParamStore::new();
        p.insert("x", Mat::filled(1, 1, 0.5)).unwrap();
        let mut st = AdamState::new(&p);
        optimizer_step(&mut st, &mut p, &[Mat::filled(1, 1, 1.0)], 0.01, None).unwrap();
        assert!((p.get("x").unwrap()[(0, 0)] - (0.5 - 0.01)).abs() < 1e-9);
        let before = p.clone();
        let m_before = st.m[0][(0, 0)];
        optimizer_step(&mut st, &mut p, &[Mat::zeros(1, 1)], 0.01, None).unwrap();
        assert!((st.m[0][(0, 0)] - 0.9 * m_before).abs() < 1e-15);
        // Zero gradient still moves by the momentum, but a zero-history state does not.
        let mut fresh = AdamState::new(&before);
        let mut q = before.clone();
        optimizer_step(&mut fresh, &mut q, &[Mat::zeros(1, 1)], 0.01, None).unwrap();
        assert_eq!(q, before);
        let rep = optimizer_step(&mut fresh, &mut q, &[Mat::filled(1, 1, f64::NAN)], 0.01, None).unwrap();
        assert!(!rep.applied);
        assert_eq!(q, before);
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut p = ParamStore::new();
        p.insert("a", Mat::zeros(1, 2)).unwrap();
        let g = vec![Mat::row_vector(&[3.0, 4.0])];
        let mut st = AdamState::new(&p);
        optimizer_step(&mut st, &mut p, &g, 0.01, Some(1.0)).unwrap();
        // First moment after one step is (1-β1)·clipped gradient.
        let clipped: Vec<f64> = st.m[0].as_slice().iter().map(|m| m / 0.1).collect();
        let n = (clipped[0].powi(2) + clipped[1].powi(2)).sqrt();
        assert!(n <= 1.0 + 1e-12 && (n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_epochs_return_initial_params() {
        let cfg = small().build().unwrap();
        let tc = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(&cfg, &tc, &windows(20), &[]).unwrap();
        assert_eq!(out.params, init_params(&cfg, tc.seed).unwrap());
        assert!(out.history.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_improves() {
        let cfg = small().build().unwrap();
        let tc = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 8,
            epochs: 6,
            seed: 3,
            patience: None,
            ..TrainConfig::default()
        };
        let ws = windows(40);
        let a = train(&cfg, &tc, &ws, &ws[..4]).unwrap();
        let b = train(&cfg, &tc, &ws, &ws[..4]).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
        let first = a.history.first().unwrap().train.total();
        let last = a.history.last().unwrap().train.total();
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn batch_loss_is_permutation_invariant() {
        let cfg = small().build().unwrap();
        let p = init_params(&cfg, 4).unwrap();
        let ws = windows(20);
        let fwd: Vec<&WindowSample> = ws.iter().take(5).collect();
        let rev: Vec<&WindowSample> = ws.iter().take(5).rev().collect();
        let (a, ga) = batch_gradient(&cfg, &p, &fwd).unwrap();
        let (b, gb) = batch_gradient(&cfg, &p, &rev).unwrap();
        assert!((a.rec - b.rec).abs() < 1e-12 && (a.back - b.back).abs() < 1e-12 && (a.forw - b.forw).abs() < 1e-12);
        for (x, y) in ga.iter().zip(&gb) {
            assert!(x.max_abs_diff(y) < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let cfg = small().build().unwrap();
        let p = init_params(&cfg, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.knf");
        save_checkpoint(&p, &path).unwrap();
        let q = load_checkpoint(&path).unwrap();
        assert_eq!(checkpoint_bytes(&q), checkpoint_bytes(&p));
        for (a, b) in p.iter().zip(q.iter()) {
            assert_eq!(a.name, b.name);
            let bits = |m: &Mat| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }

        let mut bad = checkpoint_bytes(&p);
        bad[0] = b'X';
        assert!(matches!(parse_checkpoint(&bad), Err(KnfError::Format { offset: 0, .. })));

        let good = checkpoint_bytes(&p);
        let cut = &good[..good.len() - 4];
        match parse_checkpoint(cut).unwrap_err() {
            KnfError::Format { offset, message } => {
                let last = p.tensors().last().unwrap();
                assert!(message.contains(&last.name), "{message}");
                assert_eq!(offset as usize, good.len() - last.value.len() * 8);
            }
            e => panic!("{e:?}"),
        }
        let mut extra = good.clone();
        extra.push(0);
        assert!(matches!(parse_checkpoint(&extra), Err(KnfError::Format { .. })));
    }

    #[test]
    fn ensembles() {
        let cfg = small().build().unwrap();
        let w = windows(20).remove(0);
        let members: Vec<KnfParams> = (0..5).map(|s| init_params(&cfg, s).unwrap()).collect();
        let single = ensemble_forecast(&members[..1], &cfg, &w.lookback, Aggregation::Mean).unwrap();
        assert_eq!(single, model::forecast(&cfg, &members[0], &w.lookback).unwrap().forecast);

        let mean = ensemble_forecast(&members, &cfg, &w.lookback, Aggregation::Mean).unwrap();
        let fs: Vec<Mat> = members.iter().map(|p| model::forecast(&cfg, p, &w.lookback).unwrap().forecast).collect();
        for t in 0..cfg.h {
            let mut s = 0.0;
            for f in &fs {
                s += f[(0, t)];
            }
            assert!((mean[(0, t)] - s / 5.0).abs() < 1e-12);
        }
        let med = ensemble_forecast(&members, &cfg, &w.lookback, Aggregation::Median).unwrap();
        for t in 0..cfg.h {
            let mut v: Vec<f64> = fs.iter().map(|f| f[(0, t)]).collect();
            v.sort_by(f64::total_cmp);
            assert_eq!(med[(0, t)], v[2]);
        }

        let other = small().variant(crate::model::Variant::BaseI).build().unwrap();
        let odd = vec![members[0].clone(), init_params(&other, 0).unwrap()];
        assert!(ensemble_forecast(&odd, &cfg, &w.lookback, Aggregation::Mean).is_err());
        assert!(ensemble_forecast(&[], &cfg, &w.lookback, Aggregation::Mean).is_err());
    }

    #[test]
    fn opposite_forecasts_average_to_zero() {
        // Mean aggregation of F and -F, via decoders of opposite sign
        // with no lookback normalization.
        let mut o = small();
        o.revin = false;
        let cfg = o.build().unwrap();
        let a = init_params(&cfg, 1).unwrap();
        let mut b = a.clone();
        let last = cfg.decoder.layer_count() - 1;
        for name in [crate::nets::weight_name(DECODER, last), crate::nets::bias_name(DECODER, last)] {
            let m = b.get_mut(&name).unwrap();
            *m = m.scale(-1.0);
        }
        let w = windows(20).remove(0);
        let fa = model::forecast(&cfg, &a, &w.lookback).unwrap().forecast;
        let fb = model::forecast(&cfg, &b, &w.lookback).unwrap().forecast;
        if fa.add(&fb).as_slice().iter().all(|v| v.abs() < 1e-12) {
            let e = ensemble_forecast(&[a, b], &cfg, &w.lookback, Aggregation::Mean).unwrap();
            assert!(e.as_slice().iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn rejects_bad_train_config() {
        let tc = TrainConfig {
            learning_rate: 0.5,
            ..TrainConfig::default()
        };
        assert!(tc.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn total_is_sum_of_terms(seed in 0u64..1000, start in 0usize..10) {
            let cfg = small().build().unwrap();
            let p = init_params(&cfg, seed).unwrap();
            let w = &windows(30)[start];
            let l = loss(&cfg, &p, w).unwrap();
            prop_assert!(l.rec >= 0.0 && l.back >= 0.0 && l.forw >= 0.0);
            prop_assert!((l.total() - (l.rec + l.back + l.forw)).abs() < 1e-12);
        }
    }
}
