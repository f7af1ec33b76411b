//! Flat `key = value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use knf::data::{OscillatorParams, SeasonalCorpusParams};
use knf::eval::Metric;
use knf::measurements::MeasurementSpec;
use knf::model::{DictionaryMode, FeedbackRefresh, KnfConfig, KnfOptions, Variant};
use knf::spectral::OperatorChoice;
use knf::training::{Aggregation, TrainConfig};

/// A configuration problem. Always maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Oscillator,
    Seasonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    /// Lookback is the first `q` steps.
    Start,
    /// Forecast: lookback is the last `q` steps. Eval: the last `h` steps are held out.
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Model,
    Persistence,
}

/// Every key the CLI understands, in documentation order.
pub const KEYS: &[&str] = &[
    "train_manifest",
    "test_manifest",
    "output_dir",
    "checkpoint",
    "members",
    "synth",
    "osc_mu",
    "osc_lambda",
    "osc_dt",
    "osc_steps",
    "osc_train_count",
    "osc_test_count",
    "osc_init_low",
    "osc_init_high",
    "corpus_count",
    "corpus_length",
    "corpus_periods",
    "corpus_noise",
    "segment_len",
    "lookback",
    "horizon",
    "variant",
    "dictionary",
    "poly_order",
    "exp_count",
    "sin_count",
    "interactions",
    "encoder_hidden",
    "encoder_layers",
    "decoder_hidden",
    "decoder_layers",
    "attention_width",
    "attention_layers",
    "feedback_hidden",
    "feedback_layers",
    "segments_per_call",
    "revin",
    "global_operator",
    "local_operator",
    "feedback",
    "feedback_refresh",
    "train_full_horizon",
    "learning_rate",
    "batch_size",
    "epochs",
    "seed",
    "clip_norm",
    "validation_metric",
    "patience",
    "stride",
    "val_fraction",
    "origin",
    "mode",
    "metric",
    "bucket",
    "aggregation",
    "spectral_series",
    "operator",
    "eigen_index",
    "merge_conjugates",
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Directory that relative paths resolve against.
    pub base: PathBuf,
    pub train_manifest: Option<PathBuf>,
    pub test_manifest: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub members: Vec<PathBuf>,

    pub synth: SynthKind,
    pub oscillator: OscillatorParams,
    pub corpus: SeasonalCorpusParams,

    pub k: Option<usize>,
    pub q: Option<usize>,
    pub h: Option<usize>,
    pub variant: Option<Variant>,
    pub dictionary: Option<DictionaryMode>,
    pub poly_order: u32,
    pub exp_count: usize,
    pub sin_count: Option<usize>,
    pub interactions: bool,
    pub encoder_hidden: Option<usize>,
    pub encoder_layers: Option<usize>,
    pub decoder_hidden: Option<usize>,
    pub decoder_layers: Option<usize>,
    pub attention_width: Option<usize>,
    pub attention_layers: Option<usize>,
    pub feedback_hidden: Option<usize>,
    pub feedback_layers: Option<usize>,
    pub segments_per_call: Option<usize>,
    pub revin: Option<bool>,
    pub use_global: Option<bool>,
    pub use_local: Option<bool>,
    pub use_feedback: Option<bool>,
    pub feedback_refresh: Option<FeedbackRefresh>,
    pub train_full_horizon: Option<bool>,

    pub train: TrainConfig,
    pub stride: usize,
    pub val_fraction: f64,

    pub origin: Origin,
    pub mode: EvalMode,
    pub metric: Metric,
    pub bucket: usize,
    pub aggregation: Aggregation,

    pub spectral_series: Option<String>,
    pub operator: Option<OperatorChoice>,
    pub eigen_index: Option<usize>,
    pub merge_conjugates: bool,
}

impl RunConfig {
    pub fn new(base: PathBuf) -> Self {
        RunConfig {
            output_dir: base.join("out"),
            base,
            train_manifest: None,
            test_manifest: None,
            checkpoint: None,
            members: Vec::new(),
            synth: SynthKind::Oscillator,
            oscillator: OscillatorParams::default(),
            corpus: SeasonalCorpusParams::default(),
            k: None,
            q: None,
            h: None,
            variant: None,
            dictionary: None,
            poly_order: 4,
            exp_count: 1,
            sin_count: None,
            interactions: true,
            encoder_hidden: None,
            encoder_layers: None,
            decoder_hidden: None,
            decoder_layers: None,
            attention_width: None,
            attention_layers: None,
            feedback_hidden: None,
            feedback_layers: None,
            segments_per_call: None,
            revin: None,
            use_global: None,
            use_local: None,
            use_feedback: None,
            feedback_refresh: None,
            train_full_horizon: None,
            train: TrainConfig::default(),
            stride: 1,
            val_fraction: 0.0,
            origin: Origin::End,
            mode: EvalMode::Model,
            metric: Metric::Smape,
            bucket: 5,
            aggregation: Aggregation::Mean,
            spectral_series: None,
            operator: None,
            eigen_index: None,
            merge_conjugates: true,
        }
    }

    /// Reads `path`; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cfg = RunConfig::new(base);
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("{origin}:{}: expected `key = value`, got {line:?}", n + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| bad(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| bad(format!("override {kv:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    fn path(&self, v: &str) -> PathBuf {
        let p = Path::new(v);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(bad(format!("unknown config key `{key}`")));
        }
        match key {
            "train_manifest" => self.train_manifest = Some(self.path(v)),
            "test_manifest" => self.test_manifest = Some(self.path(v)),
            "output_dir" => self.output_dir = self.path(v),
            "checkpoint" => self.checkpoint = Some(self.path(v)),
            "members" => {
                self.members = list(v)
                    .iter()
                    .map(|p| self.path(p))
                    .collect()
            }
            "synth" => {
                self.synth = match v {
                    "oscillator" => SynthKind::Oscillator,
                    "seasonal" => SynthKind::Seasonal,
                    _ => return Err(choice(key, v, "oscillator, seasonal")),
                }
            }
            "osc_mu" => self.oscillator.mu = num(key, v)?,
            "osc_lambda" => self.oscillator.lambda = num(key, v)?,
            "osc_dt" => self.oscillator.dt = num(key, v)?,
            "osc_steps" => self.oscillator.steps = num(key, v)?,
            "osc_train_count" => self.oscillator.train_count = num(key, v)?,
            "osc_test_count" => self.oscillator.test_count = num(key, v)?,
            "osc_init_low" => self.oscillator.init_low = pair(key, v)?,
            "osc_init_high" => self.oscillator.init_high = pair(key, v)?,
            "corpus_count" => self.corpus.count = num(key, v)?,
            "corpus_length" => self.corpus.length = num(key, v)?,
            "corpus_periods" => {
                self.corpus.periods = list(v).iter().map(|p| num(key, p)).collect::<Result<_, _>>()?
            }
            "corpus_noise" => self.corpus.noise = num(key, v)?,
            "segment_len" => self.k = Some(num(key, v)?),
            "lookback" => self.q = Some(num(key, v)?),
            "horizon" => self.h = Some(num(key, v)?),
            "variant" => self.variant = Some(v.parse().map_err(|_| choice(key, v, "base-g, base-i, revin, revin-global, full"))?),
            "dictionary" => {
                self.dictionary = Some(match v {
                    "predefined" => DictionaryMode::Predefined,
                    "learned" => DictionaryMode::Learned,
                    _ => return Err(choice(key, v, "predefined, learned")),
                })
            }
            "poly_order" => self.poly_order = num(key, v)?,
            "exp_count" => self.exp_count = num(key, v)?,
            "sin_count" => self.sin_count = Some(num(key, v)?),
            "interactions" => self.interactions = flag(key, v)?,
            "encoder_hidden" => self.encoder_hidden = Some(num(key, v)?),
            "encoder_layers" => self.encoder_layers = Some(num(key, v)?),
            "decoder_hidden" => self.decoder_hidden = Some(num(key, v)?),
            "decoder_layers" => self.decoder_layers = Some(num(key, v)?),
            "attention_width" => self.attention_width = Some(num(key, v)?),
            "attention_layers" => self.attention_layers = Some(num(key, v)?),
            "feedback_hidden" => self.feedback_hidden = Some(num(key, v)?),
            "feedback_layers" => self.feedback_layers = Some(num(key, v)?),
            "segments_per_call" => {
                let s: usize = num(key, v)?;
                if !(1..=10).contains(&s) {
                    return Err(bad(format!("segments_per_call must lie in 1..=10, got {s}")));
                }
                self.segments_per_call = Some(s)
            }
            "revin" => self.revin = Some(flag(key, v)?),
            "global_operator" => self.use_global = Some(flag(key, v)?),
            "local_operator" => self.use_local = Some(flag(key, v)?),
            "feedback" => self.use_feedback = Some(flag(key, v)?),
            "feedback_refresh" => {
                self.feedback_refresh = Some(match v {
                    "per_call" => FeedbackRefresh::PerCall,
                    "per_window" => FeedbackRefresh::PerWindow,
                    _ => return Err(choice(key, v, "per_call, per_window")),
                })
            }
            "train_full_horizon" => self.train_full_horizon = Some(flag(key, v)?),
            "learning_rate" => self.train.learning_rate = num(key, v)?,
            "batch_size" => self.train.batch_size = num(key, v)?,
            "epochs" => self.train.epochs = num(key, v)?,
            "seed" => self.train.seed = num(key, v)?,
            "clip_norm" => self.train.clip_norm = optional(key, v)?,
            "validation_metric" => self.train.validation_metric = v.parse().map_err(|_| choice(key, v, "smape, rmse"))?,
            "patience" => self.train.patience = optional(key, v)?,
            "stride" => self.stride = num(key, v)?,
            "val_fraction" => {
                let f: f64 = num(key, v)?;
                if !(0.0..1.0).contains(&f) {
                    return Err(bad(format!("val_fraction must lie in [0, 1), got {f}")));
                }
                self.val_fraction = f
            }
            "origin" => {
                self.origin = match v {
                    "start" => Origin::Start,
                    "end" => Origin::End,
                    _ => return Err(choice(key, v, "start, end")),
                }
            }
            "mode" => {
                self.mode = match v {
                    "model" => EvalMode::Model,
                    "persistence" => EvalMode::Persistence,
                    _ => return Err(choice(key, v, "model, persistence")),
                }
            }
            "metric" => self.metric = v.parse().map_err(|_| choice(key, v, "smape, rmse"))?,
            "bucket" => self.bucket = num(key, v)?,
            "aggregation" => {
                self.aggregation = match v {
                    "mean" => Aggregation::Mean,
                    "median" => Aggregation::Median,
                    _ => return Err(choice(key, v, "mean, median")),
                }
            }
            "spectral_series" => self.spectral_series = Some(v.to_string()),
            "operator" => {
                self.operator = Some(match v {
                    "global" => OperatorChoice::Global,
                    "lookback" => OperatorChoice::Lookback,
                    _ => return Err(choice(key, v, "global, lookback")),
                })
            }
            "eigen_index" => self.eigen_index = optional(key, v)?,
            "merge_conjugates" => self.merge_conjugates = flag(key, v)?,
            _ => unreachable!("key list and match arms agree"),
        }
        Ok(())
    }

    pub fn require<'a, T>(&self, value: &'a Option<T>, key: &str) -> Result<&'a T, ConfigError> {
        value.as_ref().ok_or_else(|| bad(format!("missing config key `{key}`")))
    }

    /// Model configuration for `d` features.
    pub fn model(&self, d: usize) -> Result<KnfConfig, ConfigError> {
        let k = *self.require(&self.k, "segment_len")?;
        let q = *self.require(&self.q, "lookback")?;
        let h = *self.require(&self.h, "horizon")?;
        let mut o = KnfOptions::new(d, k, q, h);
        if let Some(v) = self.variant {
            o = o.variant(v);
        }
        let sin = self.sin_count.unwrap_or(k);
        let spec = MeasurementSpec::from_counts(d, k, self.poly_order, self.exp_count, sin, self.interactions && d > 1)
            .map_err(|e| bad(e.to_string()))?;
        o.spec = Some(spec);
        macro_rules! take {
            ($($field:ident <- $src:ident),* $(,)?) => {
                $(if let Some(v) = self.$src { o.$field = v; })*
            };
        }
        take!(
            dictionary_mode <- dictionary,
            encoder_hidden <- encoder_hidden,
            encoder_layers <- encoder_layers,
            decoder_hidden <- decoder_hidden,
            decoder_layers <- decoder_layers,
            attention_width <- attention_width,
            attention_layers <- attention_layers,
            feedback_hidden <- feedback_hidden,
            feedback_layers <- feedback_layers,
            segments_per_call <- segments_per_call,
            revin <- revin,
            use_global <- use_global,
            use_local <- use_local,
            use_feedback <- use_feedback,
            feedback_refresh <- feedback_refresh,
            train_full_horizon <- train_full_horizon,
        );
        o.build().map_err(|e| bad(e.to_string()))
    }
}

fn list(v: &str) -> Vec<&str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn choice(key: &str, v: &str, allowed: &str) -> ConfigError {
    bad(format!("`{key}` must be one of {allowed}, got {v:?}"))
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| bad(format!("`{key}` has invalid value {v:?}")))
}

fn optional<T: FromStr>(key: &str, v: &str) -> Result<Option<T>, ConfigError> {
    if v.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn flag(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(bad(format!("`{key}` must be a boolean, got {v:?}"))),
    }
}

fn pair(key: &str, v: &str) -> Result<[f64; 2], ConfigError> {
    match list(v).as_slice() {
        [a, b] => Ok([num(key, a)?, num(key, b)?]),
        _ => Err(bad(format!("`{key}` needs two comma-separated numbers, got {v:?}"))),
    }
}
