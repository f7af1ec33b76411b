use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use knf::data::{self, oscillator_generate, seasonal_corpus, sliding_windows, TimeSeries, WindowSample};
use knf::eval::{persistence_forecast, score, write_report_csv, ScoredSeries};
use knf::model::{self, KnfConfig, KnfParams};
use knf::spectral::{self, OperatorChoice};
use knf::training::{self, ensemble_forecast};
use knf::Mat;
use log::info;

use crate::config::{ConfigError, EvalMode, Origin, RunConfig, SynthKind};

pub struct Run {
    pub cfg: RunConfig,
    pub jobs: usize,
}

fn ensure_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("cannot create {}", p.display()))
}

fn load_manifest(path: &Path) -> Result<Vec<TimeSeries>> {
    let series = data::load_manifest(path).with_context(|| format!("manifest {}", path.display()))?;
    if series.is_empty() {
        bail!(ConfigError(format!("manifest {} lists no series", path.display())));
    }
    let d = series[0].features();
    if let Some(s) = series.iter().find(|s| s.features() != d) {
        bail!(ConfigError(format!("series {} has {} features, expected {d}", s.id, s.features())));
    }
    Ok(series)
}

fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.checkpoint.clone().unwrap_or_else(|| cfg.output_dir.join("model.knf"))
}

fn load_members(cfg: &RunConfig) -> Result<Vec<KnfParams>> {
    let paths = if cfg.members.is_empty() { vec![checkpoint_path(cfg)] } else { cfg.members.clone() };
    paths
        .iter()
        .map(|p| training::load_checkpoint(p).with_context(|| format!("checkpoint {}", p.display())))
        .collect()
}

/// Maps `f` over `items` on up to `jobs` threads, keeping input order.
fn par_map<T: Sync, R: Send>(jobs: usize, items: &[T], f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let parts: Vec<Vec<Result<R>>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    parts.into_iter().flatten().collect()
}

pub fn synth(ctx: &Run) -> Result<()> {
    let cfg = &ctx.cfg;
    let out = &cfg.output_dir;
    ensure_dir(out)?;
    let seed = cfg.train.seed;
    let (train, test) = match cfg.synth {
        SynthKind::Oscillator => {
            let all = oscillator_generate(&cfg.oscillator, seed)?;
            let n = cfg.oscillator.train_count;
            (all[..n].to_vec(), all[n..].to_vec())
        }
        SynthKind::Seasonal => (seasonal_corpus(&cfg.corpus, seed)?, Vec::new()),
    };
    let write_set = |set: &[TimeSeries], manifest: &str| -> Result<()> {
        let mut entries = Vec::new();
        for s in set {
            let name = format!("{}.csv", s.id);
            data::write_csv(s, &out.join(&name))?;
            entries.push((PathBuf::from(name), s.weight));
        }
        data::write_manifest(&out.join(manifest), &entries)?;
        Ok(())
    };
    write_set(&train, "manifest.txt")?;
    if !test.is_empty() {
        write_set(&test, "test_manifest.txt")?;
    }
    info!("wrote {} series to {}", train.len() + test.len(), out.display());
    println!("synth: {} train and {} test series in {}", train.len(), test.len(), out.display());
    Ok(())
}

/// Training windows end before the validation boundary; validation windows
/// have their lookback end at or after it.
fn windows(cfg: &RunConfig, model: &KnfConfig, series: &[TimeSeries]) -> (Vec<WindowSample>, Vec<WindowSample>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for s in series {
        let boundary = ((1.0 - cfg.val_fraction) * s.len() as f64).floor() as usize;
        for w in sliding_windows(s, model.q, model.h, cfg.stride) {
            if w.start + model.q + model.h <= boundary {
                train.push(w);
            } else if w.start + model.q >= boundary {
                val.push(w);
            }
        }
    }
    (train, val)
}

pub fn train(ctx: &Run) -> Result<()> {
    let cfg = &ctx.cfg;
    let path = cfg.require(&cfg.train_manifest, "train_manifest")?;
    let series = load_manifest(path)?;
    let model = cfg.model(series[0].features())?;
    let (tw, vw) = windows(cfg, &model, &series);
    if tw.is_empty() {
        bail!(ConfigError(format!(
            "no training windows: series are shorter than lookback + horizon = {}",
            model.q + model.h
        )));
    }
    info!("{} training and {} validation windows", tw.len(), vw.len());
    let out = training::train(&model, &cfg.train, &tw, &vw)?;
    ensure_dir(&cfg.output_dir)?;
    let ckpt = checkpoint_path(cfg);
    if let Some(parent) = ckpt.parent() {
        ensure_dir(parent)?;
    }
    training::save_checkpoint(&out.params, &ckpt)?;
    training::write_history_csv(&out.history, &cfg.output_dir.join("history.csv"))?;
    println!(
        "train: {} epochs, best epoch {}, checkpoint {}",
        out.history.len(),
        out.best_epoch.map_or("none".to_string(), |e| e.to_string()),
        ckpt.display()
    );
    Ok(())
}

fn test_series(cfg: &RunConfig) -> Result<Vec<TimeSeries>> {
    let path = cfg
        .test_manifest
        .as_ref()
        .or(cfg.train_manifest.as_ref())
        .ok_or_else(|| ConfigError("missing config key `test_manifest`".into()))?;
    load_manifest(path)
}

fn predict(cfg: &RunConfig, model: &KnfConfig, members: &[KnfParams], lookback: &Mat) -> Result<Mat> {
    Ok(if members.len() == 1 {
        model::forecast(model, &members[0], lookback)?.forecast
    } else {
        ensemble_forecast(members, model, lookback, cfg.aggregation)?
    })
}

fn short(s: &TimeSeries, need: usize) -> anyhow::Error {
    anyhow!(ConfigError(format!("series {} has {} steps, needs at least {need}", s.id, s.len())))
}

pub fn forecast(ctx: &Run) -> Result<()> {
    let cfg = &ctx.cfg;
    let series = test_series(cfg)?;
    let model = cfg.model(series[0].features())?;
    let members = load_members(cfg)?;
    let dir = cfg.output_dir.join("forecasts");
    ensure_dir(&dir)?;
    let q = model.q;
    let results = par_map(ctx.jobs, &series, |s| {
        if s.len() < q {
            return Err(short(s, q));
        }
        let end = match cfg.origin {
            Origin::Start => q,
            Origin::End => s.len(),
        };
        let f = predict(cfg, &model, &members, &s.block(end - q, end))?;
        let mut out = TimeSeries::new(s.id.clone(), f.transpose())?;
        out.feature_names = s.feature_names.clone();
        Ok(out)
    })?;
    for r in &results {
        data::write_csv(r, &dir.join(format!("{}.csv", r.id)))?;
    }
    println!("forecast: {} series, {} steps each, in {}", results.len(), model.h, dir.display());
    Ok(())
}

pub fn eval(ctx: &Run) -> Result<()> {
    let cfg = &ctx.cfg;
    let series = test_series(cfg)?;
    let d = series[0].features();
    let (q, h, model) = match cfg.mode {
        EvalMode::Model => {
            let m = cfg.model(d)?;
            (m.q, m.h, Some(m))
        }
        EvalMode::Persistence => (
            *cfg.require(&cfg.q, "lookback")?,
            *cfg.require(&cfg.h, "horizon")?,
            None,
        ),
    };
    let members = match model {
        Some(_) => load_members(cfg)?,
        None => Vec::new(),
    };
    let items = par_map(ctx.jobs, &series, |s| {
        if s.len() < q + h {
            return Err(short(s, q + h));
        }
        let end = match cfg.origin {
            Origin::Start => q,
            Origin::End => s.len() - h,
        };
        let lookback = s.block(end - q, end);
        let forecast = match &model {
            Some(m) => predict(cfg, m, &members, &lookback)?,
            None => persistence_forecast(&lookback, h)?,
        };
        Ok(ScoredSeries {
            id: s.id.clone(),
            weight: s.weight,
            forecast,
            target: s.block(end, end + h),
        })
    })?;
    let report = score(cfg.metric, &items, cfg.bucket)?;
    ensure_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("scores.csv");
    write_report_csv(std::slice::from_ref(&report), &path)?;
    println!("eval: {} {} = {} over {} series", mode_name(cfg.mode), cfg.metric.name(), report.overall, items.len());
    Ok(())
}

fn mode_name(m: EvalMode) -> &'static str {
    match m {
        EvalMode::Model => "model",
        EvalMode::Persistence => "persistence",
    }
}

pub fn spectral(ctx: &Run) -> Result<()> {
    let cfg = &ctx.cfg;
    let series = test_series(cfg)?;
    let model = cfg.model(series[0].features())?;
    let params = load_members(cfg)?.remove(0);
    let s = match &cfg.spectral_series {
        Some(id) => series
            .iter()
            .find(|s| &s.id == id)
            .ok_or_else(|| ConfigError(format!("spectral_series {id:?} is not in the manifest")))?,
        None => &series[0],
    };
    let q = model.q;
    if s.len() < q {
        return Err(short(s, q));
    }
    let end = match cfg.origin {
        Origin::Start => q,
        Origin::End => s.len(),
    };
    let lookback = s.block(end - q, end);
    let which = cfg.operator.unwrap_or(if model.use_global { OperatorChoice::Global } else { OperatorChoice::Lookback });
    let k = spectral::analysis_operator(&model, &params, &lookback, which)?;
    let spectrum = spectral::eigendecompose(&k)?;
    ensure_dir(&cfg.output_dir)?;
    spectral::write_spectrum_csv(&spectrum, &cfg.output_dir.join("spectrum.csv"))?;

    let lb_spectrum = match which {
        OperatorChoice::Lookback => spectrum.clone(),
        OperatorChoice::Global => spectral::eigendecompose(&spectral::analysis_operator(
            &model,
            &params,
            &lookback,
            OperatorChoice::Lookback,
        )?)?,
    };
    let indices: Vec<usize> = match cfg.eigen_index {
        Some(i) => vec![i],
        None => {
            let mut done = vec![false; lb_spectrum.len()];
            let mut keep = Vec::new();
            for i in 0..lb_spectrum.len() {
                if done[i] {
                    continue;
                }
                keep.push(i);
                if cfg.merge_conjugates {
                    if let Some(c) = lb_spectrum.conjugate_of(i) {
                        done[c] = true;
                    }
                }
            }
            keep
        }
    };
    let path = cfg.output_dir.join("eigen_trace.csv");
    let mut f = std::io::BufWriter::new(fs::File::create(&path)?);
    let names = s.feature_names.join(",");
    writeln!(f, "component,eigen_re,eigen_im,merged_with,step,{names}")?;
    for i in indices {
        let t = spectral::eigenfunction_reconstruction(&model, &params, &lookback, i, cfg.merge_conjugates)?;
        let merged = t.merged_with.map_or(String::new(), |c| c.to_string());
        for step in 0..t.trace.cols() {
            let vals: Vec<String> = (0..t.trace.rows()).map(|j| t.trace[(j, step)].to_string()).collect();
            writeln!(f, "{i},{},{},{merged},{step},{}", t.eigenvalue.re, t.eigenvalue.im, vals.join(","))?;
        }
    }
    f.flush()?;
    println!(
        "spectral: {} eigenvalues of the {} operator for {}, spectral radius {:.6}",
        spectrum.len(),
        match which {
            OperatorChoice::Global => "global",
            OperatorChoice::Lookback => "lookback",
        },
        s.id,
        spectrum.eigenvalues.first().map_or(0.0, |l| l.norm())
    );
    Ok(())
}
