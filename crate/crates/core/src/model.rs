//! The forecaster: encoder, decoder, global/local/feedback operators and
//! the autoregressive rollout.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::data::REVIN_EPS;
use crate::error::{KnfError, Result};
use crate::measurements::{
    default_dictionary, latent_rows, measure_rows, LatentMatrix, MeasurementSpec, MeasurementVector,
};
use crate::nets::{
    attention_apply, init_attention, init_mlp, mlp_apply, zero_output_layer, AttentionStackSpec, Bound,
    MlpSpec, ParamStore,
};
use crate::tensor::Mat;

pub const ENCODER: &str = "encoder";
pub const DECODER: &str = "decoder";
pub const ATTENTION: &str = "attention";
pub const FEEDBACK: &str = "feedback";
pub const GLOBAL_OPERATOR: &str = "global_operator";
pub const REVIN_SCALE: &str = "revin.scale";
pub const REVIN_SHIFT: &str = "revin.shift";

/// All trainable tensors of a model.
pub type KnfParams = ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictionaryMode {
    /// Measurement functions from the dictionary, inputs from the encoder.
    Predefined,
    /// The encoder outputs the measurement vector directly.
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackRefresh {
    /// Recompute the adjustment at every autoregressive call.
    PerCall,
    /// Compute it once from the original lookback and reuse it.
    PerWindow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnfConfig {
    pub d: usize,
    pub k: usize,
    pub q: usize,
    pub h: usize,
    pub spec: MeasurementSpec,
    pub encoder: MlpSpec,
    pub decoder: MlpSpec,
    pub attention: AttentionStackSpec,
    pub feedback: MlpSpec,
    pub segments_per_call: usize,
    pub revin: bool,
    pub dictionary_mode: DictionaryMode,
    pub use_global: bool,
    pub use_local: bool,
    pub use_feedback: bool,
    pub feedback_refresh: FeedbackRefresh,
    /// Train the forward loss on the whole horizon instead of one call.
    pub train_full_horizon: bool,
}

impl KnfConfig {
    /// Segments per lookback, `q / k`.
    pub fn segments(&self) -> usize {
        self.q / self.k
    }

    pub fn measurement_dim(&self) -> usize {
        self.spec.dim()
    }

    /// Steps emitted per autoregressive call.
    pub fn call_len(&self) -> usize {
        self.segments_per_call * self.k
    }

    /// Steps covered by the forward loss.
    pub fn train_horizon(&self) -> usize {
        if self.train_full_horizon {
            self.h
        } else {
            self.h.min(self.call_len())
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (d, k, q, m) = (self.d, self.k, self.q, self.spec.dim());
        if d == 0 || k == 0 || q == 0 || self.h == 0 || self.segments_per_call == 0 {
            return Err(KnfError::arg("d, k, q, h and segments_per_call must be positive"));
        }
        if q % k != 0 {
            return Err(KnfError::arg(format!("lookback {q} is not a multiple of segment length {k}")));
        }
        if self.segments() < 2 {
            return Err(KnfError::arg("the lookback needs at least two segments"));
        }
        if self.spec.features() != d || self.spec.segment_len() != k {
            return Err(KnfError::arg("measurement spec does not match d and k"));
        }
        if !self.use_global && !self.use_local {
            return Err(KnfError::arg("enable the global operator, the local operator, or both"));
        }
        let enc_out = match self.dictionary_mode {
            DictionaryMode::Predefined => self.spec.coefficient_count(),
            DictionaryMode::Learned => m,
        };
        let checks = [
            ("encoder", &self.encoder, d * k, enc_out),
            ("decoder", &self.decoder, m, d * k),
            ("feedback", &self.feedback, d * q, m),
        ];
        for (name, spec, i, o) in checks {
            if spec.input_width() != i || spec.output_width() != o {
                return Err(KnfError::arg(format!(
                    "{name} maps {} -> {}, expected {i} -> {o}",
                    spec.input_width(),
                    spec.output_width()
                )));
            }
        }
        if self.attention.token_dim != self.segments() {
            return Err(KnfError::arg(format!(
                "attention token width {} differs from segment count {}",
                self.attention.token_dim,
                self.segments()
            )));
        }
        Ok(())
    }
}

/// Builder for [`KnfConfig`] with sensible defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct KnfOptions {
    pub d: usize,
    pub k: usize,
    pub q: usize,
    pub h: usize,
    /// Defaults to [`default_dictionary`].
    pub spec: Option<MeasurementSpec>,
    pub encoder_hidden: usize,
    pub encoder_layers: usize,
    pub decoder_hidden: usize,
    pub decoder_layers: usize,
    pub attention_width: usize,
    pub attention_layers: usize,
    pub feedback_hidden: usize,
    pub feedback_layers: usize,
    pub segments_per_call: usize,
    pub revin: bool,
    pub dictionary_mode: DictionaryMode,
    pub use_global: bool,
    pub use_local: bool,
    pub use_feedback: bool,
    pub feedback_refresh: FeedbackRefresh,
    pub train_full_horizon: bool,
}

impl KnfOptions {
    pub fn new(d: usize, k: usize, q: usize, h: usize) -> Self {
        KnfOptions {
            d,
            k,
            q,
            h,
            spec: None,
            encoder_hidden: 32,
            encoder_layers: 2,
            decoder_hidden: 32,
            decoder_layers: 2,
            attention_width: 16,
            attention_layers: 1,
            feedback_hidden: 32,
            feedback_layers: 2,
            segments_per_call: 1,
            revin: true,
            dictionary_mode: DictionaryMode::Predefined,
            use_global: true,
            use_local: true,
            use_feedback: true,
            feedback_refresh: FeedbackRefresh::PerCall,
            train_full_horizon: false,
        }
    }

    pub fn variant(mut self, v: Variant) -> Self {
        let (mode, revin, global, feedback) = match v {
            Variant::BaseG => (DictionaryMode::Learned, false, false, false),
            Variant::BaseI => (DictionaryMode::Predefined, false, false, false),
            Variant::Revin => (DictionaryMode::Predefined, true, false, false),
            Variant::RevinGlobal => (DictionaryMode::Predefined, true, true, false),
            Variant::Full => (DictionaryMode::Predefined, true, true, true),
        };
        self.dictionary_mode = mode;
        self.revin = revin;
        self.use_global = global;
        self.use_local = true;
        self.use_feedback = feedback;
        self
    }

    pub fn build(&self) -> Result<KnfConfig> {
        if self.k == 0 || !self.q.is_multiple_of(self.k) {
            return Err(KnfError::arg(format!(
                "lookback {} is not a multiple of segment length {}",
                self.q, self.k
            )));
        }
        let spec = match &self.spec {
            Some(s) => s.clone(),
            None => default_dictionary(self.d, self.k)?,
        };
        let (d, k, q) = (self.d, self.k, self.q);
        let m = spec.dim();
        let enc_out = match self.dictionary_mode {
            DictionaryMode::Predefined => spec.coefficient_count(),
            DictionaryMode::Learned => m,
        };
        let cfg = KnfConfig {
            d,
            k,
            q,
            h: self.h,
            encoder: MlpSpec::relu(d * k, self.encoder_hidden, self.encoder_layers, enc_out)?,
            decoder: MlpSpec::relu(m, self.decoder_hidden, self.decoder_layers, d * k)?,
            attention: AttentionStackSpec::new((q / k).max(1), self.attention_width, self.attention_layers)?,
            feedback: MlpSpec::relu(d * q, self.feedback_hidden, self.feedback_layers, m)?,
            spec,
            segments_per_call: self.segments_per_call,
            revin: self.revin,
            dictionary_mode: self.dictionary_mode,
            use_global: self.use_global,
            use_local: self.use_local,
            use_feedback: self.use_feedback,
            feedback_refresh: self.feedback_refresh,
            train_full_horizon: self.train_full_horizon,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Ablation ladder, smallest to full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Local operator only, learned measurements.
    BaseG,
    /// Local operator only, predefined measurements.
    BaseI,
    Revin,
    RevinGlobal,
    Full,
}

impl std::str::FromStr for Variant {
    type Err = KnfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base-g" => Ok(Variant::BaseG),
            "base-i" => Ok(Variant::BaseI),
            "revin" => Ok(Variant::Revin),
            "revin-global" => Ok(Variant::RevinGlobal),
            "full" => Ok(Variant::Full),
            _ => Err(KnfError::arg(format!("unknown variant {s:?}"))),
        }
    }
}

/// Fresh parameters for every component the configuration enables.
pub fn init_params(cfg: &KnfConfig, seed: u64) -> Result<KnfParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let m = cfg.measurement_dim();
    init_mlp(&mut store, ENCODER, &cfg.encoder, &mut rng)?;
    init_mlp(&mut store, DECODER, &cfg.decoder, &mut rng)?;
    if cfg.use_global {
        let kg = if cfg.use_local { Mat::zeros(m, m) } else { Mat::identity(m) };
        store.insert(GLOBAL_OPERATOR, kg)?;
    }
    if cfg.use_local {
        init_attention(&mut store, ATTENTION, &cfg.attention, &mut rng)?;
    }
    if cfg.use_feedback {
        init_mlp(&mut store, FEEDBACK, &cfg.feedback, &mut rng)?;
        zero_output_layer(&mut store, FEEDBACK, &cfg.feedback)?;
    }
    if cfg.revin {
        store.insert(REVIN_SCALE, Mat::filled(cfg.d, 1, 1.0))?;
        store.insert(REVIN_SHIFT, Mat::zeros(cfg.d, 1))?;
    }
    Ok(store)
}

/// Number of trainable scalars the configuration uses.
pub fn param_count(cfg: &KnfConfig) -> Result<usize> {
    Ok(init_params(cfg, 0)?.scalar_count())
}

/// The operators used by one autoregressive call.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSet {
    pub global: Mat,
    pub local: Mat,
    /// Diagonal of the feedback adjustment.
    pub adjustment: Vec<f64>,
}

impl OperatorSet {
    /// `K^g + K^l`, the operator used on the lookback.
    pub fn lookback_operator(&self) -> Mat {
        self.global.add(&self.local)
    }

    /// `K^g + K^l + diag(K^c)`, the operator used for the forecast.
    pub fn total(&self) -> Mat {
        let mut k = self.lookback_operator();
        for (i, a) in self.adjustment.iter().enumerate() {
            k[(i, i)] += a;
        }
        k
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    /// `d x h`
    pub forecast: Mat,
    /// One entry per autoregressive call.
    pub operators: Vec<OperatorSet>,
    /// RMSE of the lookback rollout against the lookback, per call.
    pub lookback_errors: Vec<f64>,
    /// Lookback measurements (`q/k x m`) of the first call.
    pub measurements: Mat,
}

/// Per-window instance normalization on the tape. Statistics are constants.
pub(crate) struct Revin {
    mean: Var,
    neg_mean: Var,
    inv_std: Var,
    std: Var,
    scale: Var,
    shift: Var,
}

impl Revin {
    fn new(graph: &mut Graph, bound: &Bound, x: Var) -> Result<Revin> {
        let (mean, std) = crate::data::row_stats(graph.value(x));
        let sd: Vec<f64> = std.iter().map(|s| s + REVIN_EPS).collect();
        let inv: Vec<f64> = sd.iter().map(|s| 1.0 / s).collect();
        let neg: Vec<f64> = mean.iter().map(|m| -m).collect();
        Ok(Revin {
            mean: graph.constant(Mat::column(&mean)),
            neg_mean: graph.constant(Mat::column(&neg)),
            inv_std: graph.constant(Mat::column(&inv)),
            std: graph.constant(Mat::column(&sd)),
            scale: bound.get(REVIN_SCALE)?,
            shift: bound.get(REVIN_SHIFT)?,
        })
    }

    fn normalize(&self, graph: &mut Graph, x: Var) -> Var {
        let c = graph.add_col(x, self.neg_mean);
        let c = graph.mul_col(c, self.inv_std);
        let c = graph.mul_col(c, self.scale);
        graph.add_col(c, self.shift)
    }

    fn denormalize(&self, graph: &mut Graph, y: Var) -> Var {
        let neg_shift = graph.scale(self.shift, -1.0);
        let c = graph.add_col(y, neg_shift);
        let inv_scale = graph.recip(self.scale);
        let c = graph.mul_col(c, inv_scale);
        let c = graph.mul_col(c, self.std);
        graph.add_col(c, self.mean)
    }
}

/// `d x (r·k)` block to `r x d·k` segment rows.
fn block_to_rows(graph: &mut Graph, block: Var, d: usize, k: usize) -> Var {
    let (_, cols) = graph.shape(block);
    let r = cols / k;
    let dk = d * k;
    let index = (0..r)
        .flat_map(|t| (0..dk).map(move |c| Some((c / k) * cols + t * k + c % k)))
        .collect();
    graph.gather(block, r, dk, index)
}

/// Inverse of [`block_to_rows`].
fn rows_to_block(graph: &mut Graph, rows: Var, d: usize, k: usize) -> Var {
    let (r, _) = graph.shape(rows);
    let dk = d * k;
    let cols = r * k;
    let index = (0..d)
        .flat_map(|j| (0..cols).map(move |c| Some((c / k) * dk + j * k + c % k)))
        .collect();
    graph.gather(rows, d, cols, index)
}

fn hcat(graph: &mut Graph, a: Var, b: Var) -> Var {
    let at = graph.transpose(a);
    let bt = graph.transpose(b);
    let c = graph.concat_rows(&[at, bt]);
    graph.transpose(c)
}

/// Measurement rows (`r x m`) from segment rows (`r x d·k`).
pub(crate) fn encode_rows(graph: &mut Graph, cfg: &KnfConfig, bound: &Bound, rows: Var) -> Result<Var> {
    let out = mlp_apply(graph, bound, ENCODER, &cfg.encoder, rows)?;
    match cfg.dictionary_mode {
        DictionaryMode::Learned => Ok(out),
        DictionaryMode::Predefined => {
            let latent = latent_rows(graph, &cfg.spec, out, rows)?;
            measure_rows(graph, &cfg.spec, latent)
        }
    }
}

fn decode_rows(graph: &mut Graph, cfg: &KnfConfig, bound: &Bound, g: Var) -> Result<Var> {
    mlp_apply(graph, bound, DECODER, &cfg.decoder, g)
}

/// Propagates column `x0` by `k` for `steps` steps, returning the iterates
/// as rows (`steps x m`), optionally preceded by `x0` itself.
fn propagate(graph: &mut Graph, k: Var, x0: Var, steps: usize, include_start: bool) -> Var {
    let mut rows = Vec::with_capacity(steps + 1);
    if include_start {
        rows.push(graph.transpose(x0));
    }
    let mut x = x0;
    for _ in 0..steps {
        x = graph.matmul(k, x);
        rows.push(graph.transpose(x));
    }
    graph.concat_rows(&rows)
}

/// Tape nodes of one autoregressive call.
pub(crate) struct CallNodes {
    /// Reconstruction of every lookback segment, raw space, `d x q`.
    pub recon: Var,
    /// Lookback rollout from the first segment, raw space, `d x q`.
    pub back: Option<Var>,
    /// Emitted steps, raw space, `d x segments_per_call·k`.
    pub prediction: Var,
    pub measurements: Var,
    pub global: Option<Var>,
    pub local: Option<Var>,
    pub adjustment: Option<Var>,
}

fn call(
    graph: &mut Graph,
    cfg: &KnfConfig,
    bound: &Bound,
    lookback: Var,
    need_back: bool,
    cached_adjustment: Option<Var>,
    index: usize,
) -> Result<CallNodes> {
    let (d, k, s) = (cfg.d, cfg.k, cfg.segments());
    let revin = if cfg.revin { Some(Revin::new(graph, bound, lookback)?) } else { None };
    let x = match &revin {
        Some(r) => r.normalize(graph, lookback),
        None => lookback,
    };
    let denorm = |graph: &mut Graph, y: Var| match &revin {
        Some(r) => r.denormalize(graph, y),
        None => y,
    };
    let seg = block_to_rows(graph, x, d, k);
    let g = encode_rows(graph, cfg, bound, seg)?;
    let recon_rows = decode_rows(graph, cfg, bound, g)?;
    let recon_norm = rows_to_block(graph, recon_rows, d, k);
    let recon = denorm(graph, recon_norm);

    let global = if cfg.use_global { Some(bound.get(GLOBAL_OPERATOR)?) } else { None };
    let local = if cfg.use_local {
        let tokens = graph.transpose(g);
        Some(attention_apply(graph, bound, ATTENTION, &cfg.attention, tokens)?)
    } else {
        None
    };
    let kb = match (global, local) {
        (Some(a), Some(b)) => graph.add(a, b),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => unreachable!("validated"),
    };
    let gt = graph.transpose(g);

    let mut back = None;
    let mut back_norm = None;
    if need_back || (cfg.use_feedback && cached_adjustment.is_none()) {
        let g0 = graph.col_range(gt, 0, 1);
        let traj = propagate(graph, kb, g0, s - 1, true);
        if !graph.value(traj).is_finite() {
            let radius = crate::spectral::spectral_radius(graph.value(kb)).unwrap_or(f64::NAN);
            return Err(KnfError::numeric(format!(
                "call {index}: lookback operator powers overflowed (spectral radius {radius:.6})"
            )));
        }
        let rows = decode_rows(graph, cfg, bound, traj)?;
        let bn = rows_to_block(graph, rows, d, k);
        back_norm = Some(bn);
        back = Some(denorm(graph, bn));
    }

    let adjustment = if cfg.use_feedback {
        match cached_adjustment {
            Some(a) => Some(a),
            None => {
                let err = graph.sub(back_norm.expect("computed above"), x);
                let flat = graph.reshape(err, 1, d * cfg.q);
                Some(mlp_apply(graph, bound, FEEDBACK, &cfg.feedback, flat)?)
            }
        }
    } else {
        None
    };
    let kf = match adjustment {
        Some(a) => {
            let dg = graph.diag(a);
            graph.add(kb, dg)
        }
        None => kb,
    };
    let g_last = graph.col_range(gt, s - 1, s);
    let traj = propagate(graph, kf, g_last, cfg.segments_per_call, false);
    let rows = decode_rows(graph, cfg, bound, traj)?;
    let pred_norm = rows_to_block(graph, rows, d, k);
    let prediction = denorm(graph, pred_norm);
    if !graph.value(prediction).is_finite() {
        return Err(KnfError::numeric(format!("call {index}: non-finite forecast values")));
    }
    Ok(CallNodes {
        recon,
        back,
        prediction,
        measurements: g,
        global,
        local,
        adjustment,
    })
}

/// Tape nodes of a full rollout.
pub(crate) struct RolloutNodes {
    pub calls: Vec<CallNodes>,
    /// Raw space, `d x horizon`.
    pub forecast: Var,
}

/// Autoregressive rollout covering `horizon` steps. `need_back` requests
/// the lookback rollout of every call.
pub(crate) fn rollout(
    graph: &mut Graph,
    cfg: &KnfConfig,
    bound: &Bound,
    lookback: Var,
    horizon: usize,
    need_back: bool,
) -> Result<RolloutNodes> {
    if graph.shape(lookback) != (cfg.d, cfg.q) {
        return Err(KnfError::dim(format!(
            "lookback is {:?}, expected ({}, {})",
            graph.shape(lookback),
            cfg.d,
            cfg.q
        )));
    }
    let n_calls = horizon.div_ceil(cfg.call_len()).max(1);
    let mut calls: Vec<CallNodes> = Vec::with_capacity(n_calls);
    let mut current = lookback;
    let mut emitted: Option<Var> = None;
    for c in 0..n_calls {
        let cached = match cfg.feedback_refresh {
            FeedbackRefresh::PerWindow => calls.first().and_then(|f| f.adjustment),
            FeedbackRefresh::PerCall => None,
        };
        let out = call(graph, cfg, bound, current, need_back, cached, c)?;
        emitted = Some(match emitted {
            Some(e) => hcat(graph, e, out.prediction),
            None => out.prediction,
        });
        if c + 1 < n_calls {
            let joined = hcat(graph, current, out.prediction);
            let w = graph.shape(joined).1;
            current = graph.col_range(joined, w - cfg.q, w);
        }
        calls.push(out);
    }
    let all = emitted.expect("at least one call");
    let forecast = graph.col_range(all, 0, horizon);
    Ok(RolloutNodes { calls, forecast })
}

fn check_block(block: &Mat, rows: usize, cols: usize, what: &str) -> Result<()> {
    if block.shape() != (rows, cols) {
        return Err(KnfError::dim(format!("{what} is {:?}, expected ({rows}, {cols})", block.shape())));
    }
    if !block.is_finite() {
        return Err(KnfError::numeric(format!("{what} has non-finite values")));
    }
    Ok(())
}

/// Encoder output for one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    /// `None` in learned mode, which has no latent matrix.
    pub latent: Option<LatentMatrix>,
    pub measurement: MeasurementVector,
}

/// Lifts one `d x k` segment (already in model space) into measurements.
pub fn encode(cfg: &KnfConfig, params: &KnfParams, segment: &Mat) -> Result<Encoding> {
    check_block(segment, cfg.d, cfg.k, "segment")?;
    let mut g = Graph::new();
    let bound = params.bind_frozen(&mut g);
    let x = g.constant(segment.clone());
    let row = block_to_rows(&mut g, x, cfg.d, cfg.k);
    let out = mlp_apply(&mut g, &bound, ENCODER, &cfg.encoder, row)?;
    match cfg.dictionary_mode {
        DictionaryMode::Learned => Ok(Encoding {
            latent: None,
            measurement: MeasurementVector(g.value(out).as_slice().to_vec()),
        }),
        DictionaryMode::Predefined => {
            let latent = latent_rows(&mut g, &cfg.spec, out, row)?;
            let meas = measure_rows(&mut g, &cfg.spec, latent)?;
            let v = g.value(latent).clone().reshaped(cfg.spec.n(), cfg.d);
            Ok(Encoding {
                latent: Some(LatentMatrix(v)),
                measurement: MeasurementVector(g.value(meas).as_slice().to_vec()),
            })
        }
    }
}

/// Decodes one measurement vector into a `d x k` segment.
pub fn reconstruct(cfg: &KnfConfig, params: &KnfParams, measurement: &MeasurementVector) -> Result<Mat> {
    let m = cfg.measurement_dim();
    if measurement.0.len() != m {
        return Err(KnfError::dim(format!("measurement has length {}, expected {m}", measurement.0.len())));
    }
    let mut g = Graph::new();
    let bound = params.bind_frozen(&mut g);
    let x = g.constant(Mat::row_vector(&measurement.0));
    let rows = decode_rows(&mut g, cfg, &bound, x)?;
    let block = rows_to_block(&mut g, rows, cfg.d, cfg.k);
    Ok(g.value(block).clone())
}

fn measurement_rows(cfg: &KnfConfig, ms: &[MeasurementVector]) -> Result<Mat> {
    let (s, m) = (cfg.segments(), cfg.measurement_dim());
    if ms.len() != s {
        return Err(KnfError::dim(format!("{} measurement vectors, expected {s}", ms.len())));
    }
    if let Some(bad) = ms.iter().find(|v| v.0.len() != m) {
        return Err(KnfError::dim(format!("measurement has length {}, expected {m}", bad.0.len())));
    }
    Ok(Mat::from_fn(s, m, |t, j| ms[t].0[j]))
}

/// Attention over measurement-coordinate trajectories, `m x m`.
pub fn local_operator(cfg: &KnfConfig, params: &KnfParams, lookback_measurements: &[MeasurementVector]) -> Result<Mat> {
    let rows = measurement_rows(cfg, lookback_measurements)?;
    crate::nets::attention_weights(&cfg.attention, params, ATTENTION, &rows.transpose())
}

/// Lookback rollout from the first segment with `K^g + K^l`; the first
/// slot holds the reconstruction of the first segment. Raw space.
pub fn lookback_predict(cfg: &KnfConfig, params: &KnfParams, window: &Mat) -> Result<Mat> {
    check_block(window, cfg.d, cfg.q, "lookback")?;
    let mut g = Graph::new();
    let bound = params.bind_frozen(&mut g);
    let x = g.constant(window.clone());
    let out = call(&mut g, cfg, &bound, x, true, None, 0)?;
    Ok(g.value(out.back.expect("requested")).clone())
}

/// Diagonal adjustment from the lookback error `predicted - observed`.
pub fn feedback_operator(cfg: &KnfConfig, params: &KnfParams, predicted: &Mat, observed: &Mat) -> Result<Vec<f64>> {
    check_block(predicted, cfg.d, cfg.q, "predicted lookback")?;
    check_block(observed, cfg.d, cfg.q, "observed lookback")?;
    let err = predicted.sub(observed);
    crate::nets::mlp_forward(&cfg.feedback, params, FEEDBACK, err.as_slice())
}

/// `h`-step forecast from a `d x q` lookback, with the operators of every call.
pub fn forecast(cfg: &KnfConfig, params: &KnfParams, lookback: &Mat) -> Result<ForecastResult> {
    forecast_horizon(cfg, params, lookback, cfg.h)
}

/// [`forecast`] with an explicit horizon.
pub fn forecast_horizon(cfg: &KnfConfig, params: &KnfParams, lookback: &Mat, horizon: usize) -> Result<ForecastResult> {
    if horizon == 0 {
        return Err(KnfError::arg("horizon must be positive"));
    }
    check_block(lookback, cfg.d, cfg.q, "lookback")?;
    let mut g = Graph::new();
    let bound = params.bind_frozen(&mut g);
    let x = g.constant(lookback.clone());
    let out = rollout(&mut g, cfg, &bound, x, horizon, true)?;
    let m = cfg.measurement_dim();
    let get = |v: Option<Var>| v.map(|v| g.value(v).clone());
    let mut operators = Vec::new();
    let mut lookback_errors = Vec::new();
    let mut current = lookback.clone();
    let mut produced = Mat::zeros(cfg.d, 0);
    for c in &out.calls {
        operators.push(OperatorSet {
            global: get(c.global).unwrap_or_else(|| Mat::zeros(m, m)),
            local: get(c.local).unwrap_or_else(|| Mat::zeros(m, m)),
            adjustment: get(c.adjustment).map_or_else(|| vec![0.0; m], |a| a.into_vec()),
        });
        if let Some(b) = c.back {
            let diff = g.value(b).sub(&current);
            lookback_errors.push((diff.as_slice().iter().map(|e| e * e).sum::<f64>() / diff.len() as f64).sqrt());
        }
        produced = produced.hcat(g.value(c.prediction));
        let joined = current.hcat(g.value(c.prediction));
        current = joined.col_range(joined.cols() - cfg.q, joined.cols());
    }
    Ok(ForecastResult {
        forecast: g.value(out.forecast).clone(),
        operators,
        lookback_errors,
        measurements: g.value(out.calls[0].measurements).clone(),
    })
}

/// Lookback measurements (`q/k x m`) and per-feature normalization used by
/// the first call, for spectral analysis.
pub fn lookback_measurements(cfg: &KnfConfig, params: &KnfParams, lookback: &Mat) -> Result<Mat> {
    check_block(lookback, cfg.d, cfg.q, "lookback")?;
    let mut g = Graph::new();
    let bound = params.bind_frozen(&mut g);
    let x = g.constant(lookback.clone());
    let x = if cfg.revin { Revin::new(&mut g, &bound, x)?.normalize(&mut g, x) } else { x };
    let seg = block_to_rows(&mut g, x, cfg.d, cfg.k);
    let meas = encode_rows(&mut g, cfg, &bound, seg)?;
    Ok(g.value(meas).clone())
}

/// Decodes measurement rows (`r x m`) into a `d x r·k` block in raw space,
/// undoing the normalization of `lookback`.
pub fn decode_measurements(cfg: &KnfConfig, params: &KnfParams, lookback: &Mat, rows: &Mat) -> Result<Mat> {
    check_block(lookback, cfg.d, cfg.q, "lookback")?;
    if rows.cols() != cfg.measurement_dim() {
        return Err(KnfError::dim(format!("measurement rows have width {}", rows.cols())));
    }
    let mut g = Graph::new();
    let bound = params.bind_frozen(&mut g);
    let x = g.constant(lookback.clone());
    let revin = if cfg.revin { Some(Revin::new(&mut g, &bound, x)?) } else { None };
    let r = g.constant(rows.clone());
    let dec = decode_rows(&mut g, cfg, &bound, r)?;
    let block = rows_to_block(&mut g, dec, cfg.d, cfg.k);
    let out = match revin {
        Some(rv) => rv.denormalize(&mut g, block),
        None => block,
    };
    Ok(g.value(out).clone())
}
