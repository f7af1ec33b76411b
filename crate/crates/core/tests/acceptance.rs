//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::time::Instant;

use knf::autodiff::Graph;
use knf::data::{
    oscillator_generate, row_stats, seasonal_corpus, sliding_windows, OscillatorParams, RevinState, SeasonalCorpusParams,
    TimeSeries, WindowSample,
};
use knf::eval::{persistence_forecast, smape, weighted_rmse, Metric};
use knf::measurements::{
    apply_measurements, latent_matrix, latent_rows, measure_rows, MeasurementFn, MeasurementSpec, MeasurementVector,
};
use knf::model::{
    encode, forecast, forecast_horizon, init_params, local_operator, param_count, reconstruct, KnfConfig, KnfOptions,
    KnfParams, Variant, GLOBAL_OPERATOR,
};
use knf::spectral::{eigencomponents, eigendecompose, match_eigenvalues};
use knf::training::{batch_gradient, checkpoint_bytes, loss, load_checkpoint, save_checkpoint, train, TrainConfig};
use knf::Mat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: u32, name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, name, pass, detail }
}

fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Mat {
    Mat::from_fn(r, c, |_, _| scale * rng.random_range(-1.0..1.0))
}

fn perturb(params: &mut KnfParams, rng: &mut ChaCha8Rng, scale: f64) {
    for v in params.values_mut() {
        for x in v.as_mut_slice() {
            *x += scale * rng.random_range(-1.0..1.0);
        }
    }
}

// Oscillator: global operator only, one step per segment.

const OSC_Q: usize = 8;
const OSC_ROLLOUT: usize = 20;
const OSC_RMSE_MAX: f64 = 0.05;
const EIG_TOL: f64 = 0.05;

struct OscRun {
    label: &'static str,
    rmse: f64,
    eigenvalues: Vec<Complex64>,
    seconds: f64,
}

fn oscillator_run(label: &'static str, spec: MeasurementSpec, data: &[TimeSeries], train_count: usize) -> OscRun {
    let mut o = KnfOptions::new(2, 1, OSC_Q, OSC_ROLLOUT);
    o.spec = Some(spec);
    o.revin = false;
    o.use_local = false;
    o.use_feedback = false;
    o.segments_per_call = 10;
    let cfg = o.build().unwrap();
    let (train_set, test_set) = data.split_at(train_count);
    let windows: Vec<WindowSample> = train_set
        .iter()
        .flat_map(|s| sliding_windows(s, OSC_Q, OSC_ROLLOUT, 4))
        .collect();
    let tc = TrainConfig {
        learning_rate: 3e-3,
        batch_size: 32,
        epochs: 300,
        seed: 0,
        clip_norm: Some(1.0),
        validation_metric: Metric::Rmse,
        patience: None,
    };
    let t = Instant::now();
    let out = train(&cfg, &tc, &windows, &[]).unwrap();
    let seconds = t.elapsed().as_secs_f64();
    let mut f_all = Vec::new();
    let mut y_all = Vec::new();
    for s in test_set {
        let f = forecast_horizon(&cfg, &out.params, &s.block(0, OSC_Q), OSC_ROLLOUT).unwrap().forecast;
        f_all.push(f.into_vec());
        y_all.push(s.block(OSC_Q, OSC_Q + OSC_ROLLOUT).into_vec());
    }
    let rmse = weighted_rmse(&f_all, &y_all, &vec![1.0; f_all.len()]).unwrap();
    let eigenvalues = eigendecompose(out.params.get(GLOBAL_OPERATOR).unwrap()).unwrap().eigenvalues;
    OscRun {
        label,
        rmse,
        eigenvalues,
        seconds,
    }
}

fn criteria_oscillator() -> Vec<Outcome> {
    use MeasurementFn::Poly;
    let params = OscillatorParams::default();
    let data = oscillator_generate(&params, 0).unwrap();
    let dicts = [
        ("D1", MeasurementSpec::with_feature_counts(vec![Poly(1), Poly(2)], vec![2, 1], 1, vec![]).unwrap()),
        ("D2", MeasurementSpec::new(vec![Poly(1), Poly(2)], 2, 1, vec![]).unwrap()),
        ("D3", MeasurementSpec::new(vec![Poly(1), Poly(2), Poly(3)], 2, 1, vec![]).unwrap()),
        ("D4", MeasurementSpec::new(vec![Poly(1), Poly(2), Poly(3), Poly(4)], 2, 1, vec![]).unwrap()),
    ];
    let runs: Vec<OscRun> = dicts
        .into_iter()
        .map(|(l, s)| oscillator_run(l, s, &data, params.train_count))
        .collect();
    for r in &runs {
        println!("  oscillator {}: rollout RMSE {:.5} ({:.1}s)", r.label, r.rmse, r.seconds);
    }
    let c1 = runs.iter().all(|r| r.rmse <= OSC_RMSE_MAX);
    let detail = runs
        .iter()
        .map(|r| format!("{}={:.4}", r.label, r.rmse))
        .collect::<Vec<_>>()
        .join(" ");

    let truth: Vec<Complex64> = params.discrete_eigenvalues().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut c2 = true;
    let mut c2_detail = String::new();
    for r in &runs {
        let matches = match_eigenvalues(&r.eigenvalues, &truth, EIG_TOL).unwrap();
        let ok = matches.iter().all(|m| m.pass);
        let dists = matches
            .iter()
            .map(|m| format!("{:.4}", m.distance))
            .collect::<Vec<_>>()
            .join(",");
        println!("  oscillator {}: eigenvalue distances [{dists}] {}", r.label, if ok { "ok" } else { "miss" });
        // The primary model is D2; the others are reported for reference.
        if r.label == "D2" {
            c2 = ok;
            c2_detail = format!("D2 distances [{dists}] tol {EIG_TOL}");
        }
    }
    vec![
        outcome(1, "oscillator 20-step rollout RMSE <= 0.05 (D1..D4)", c1, detail),
        outcome(2, "learned K^g eigenvalues match {0.990050, 0.980199, 0.904837} within 0.05", c2, c2_detail),
    ]
}

// Seasonal corpus: 50 series, temporal 80/10/10 split, each series
// standardized with its training-part statistics; scores are computed
// after mapping forecasts back to original units.

const TRAIN_END: usize = 320;
const VAL_END: usize = 360;
const CQ: usize = 32;
const CK: usize = 8;
const CH: usize = 16;

struct Corpus {
    raw: Vec<TimeSeries>,
    scaled: Vec<TimeSeries>,
    stats: Vec<(f64, f64)>,
}

fn corpus() -> Corpus {
    let raw = seasonal_corpus(&SeasonalCorpusParams::default(), 0).unwrap();
    let mut scaled = raw.clone();
    let mut stats = Vec::new();
    for s in &mut scaled {
        let (mu, sd) = row_stats(&s.block(0, TRAIN_END));
        stats.push((mu[0], sd[0]));
        s.values = s.values.map(|v| (v - mu[0]) / sd[0]);
    }
    Corpus { raw, scaled, stats }
}

fn window_at(s: &TimeSeries, end: usize) -> WindowSample {
    WindowSample {
        lookback: s.block(end - CQ, end),
        target: s.block(end, end + CH),
        source: s.id.clone(),
        start: end - CQ,
        weight: 1.0,
    }
}

impl Corpus {
    fn train_windows(&self) -> Vec<WindowSample> {
        self.scaled
            .iter()
            .flat_map(|s| sliding_windows(&s.slice(0, TRAIN_END), CQ, CH, 4))
            .collect()
    }

    fn windows_at(&self, end: usize) -> Vec<WindowSample> {
        self.scaled.iter().map(|s| window_at(s, end)).collect()
    }

    /// Mean sMAPE in original units of forecasts made at `end`.
    fn smape_at(&self, end: usize, mut predict: impl FnMut(&Mat) -> Mat) -> f64 {
        let mut acc = 0.0;
        for (i, s) in self.scaled.iter().enumerate() {
            let (mu, sd) = self.stats[i];
            let f = predict(&s.block(end - CQ, end)).map(|v| v * sd + mu);
            let y = self.raw[i].block(end, end + CH);
            acc += smape(f.as_slice(), y.as_slice()).unwrap();
        }
        acc / self.scaled.len() as f64
    }
}

fn corpus_tc(epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        batch_size: 32,
        epochs,
        seed: 0,
        clip_norm: Some(1.0),
        validation_metric: Metric::Rmse,
        patience: None,
    }
}

fn fit(c: &Corpus, cfg: &KnfConfig, epochs: usize) -> KnfParams {
    train(cfg, &corpus_tc(epochs), &c.train_windows(), &c.windows_at(TRAIN_END))
        .unwrap()
        .params
}

fn criterion_persistence(c: &Corpus) -> Outcome {
    let mut o = KnfOptions::new(1, CK, CQ, CH).variant(Variant::Full);
    o.segments_per_call = 2;
    let cfg = o.build().unwrap();
    let params = fit(c, &cfg, 40);
    let knf = c.smape_at(VAL_END, |lb| forecast(&cfg, &params, lb).unwrap().forecast);
    let naive = c.smape_at(VAL_END, |lb| persistence_forecast(lb, CH).unwrap());
    let ratio = knf / naive;
    outcome(
        3,
        "KNF test sMAPE at least 10% below persistence (50-series corpus)",
        ratio <= 0.9,
        format!("knf {knf:.4} persistence {naive:.4} ratio {ratio:.4}"),
    )
}

fn base_options(v: Variant, hidden: usize) -> KnfOptions {
    let mut o = KnfOptions::new(1, CK, CQ, CH).variant(v);
    o.segments_per_call = 2;
    o.encoder_hidden = hidden;
    o.decoder_hidden = hidden;
    o
}

fn criterion_ablation(c: &Corpus) -> Outcome {
    let base_i = base_options(Variant::BaseI, 32).build().unwrap();
    let target = param_count(&base_i).unwrap();
    // Widen base-G until its parameter count is closest to base-I's.
    let (hidden, count) = (1..=512)
        .map(|h| (h, param_count(&base_options(Variant::BaseG, h).build().unwrap()).unwrap()))
        .min_by_key(|&(_, n)| n.abs_diff(target))
        .unwrap();
    let base_g = base_options(Variant::BaseG, hidden).build().unwrap();
    let gap = count.abs_diff(target) as f64 / target as f64;
    let epochs = 40;
    let pi = fit(c, &base_i, epochs);
    let pg = fit(c, &base_g, epochs);
    let si = c.smape_at(TRAIN_END, |lb| forecast(&base_i, &pi, lb).unwrap().forecast);
    let sg = c.smape_at(TRAIN_END, |lb| forecast(&base_g, &pg, lb).unwrap().forecast);
    let ratio = si / sg;
    outcome(
        4,
        "base-I validation sMAPE at least 5% below base-G (matched parameters)",
        ratio <= 0.95 && gap <= 0.05,
        format!(
            "base-I {si:.4} ({target} params) base-G {sg:.4} ({count} params, hidden {hidden}) ratio {ratio:.4}"
        ),
    )
}

// Gradient check against central differences.

fn criterion_gradient() -> Outcome {
    let t = Instant::now();
    let mut o = KnfOptions::new(2, 4, 16, 8);
    o.encoder_hidden = 8;
    o.decoder_hidden = 8;
    o.feedback_hidden = 8;
    o.attention_width = 8;
    o.segments_per_call = 1;
    let cfg = o.build().unwrap();
    let m = cfg.measurement_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut params = init_params(&cfg, 5).unwrap();
    perturb(&mut params, &mut rng, 0.2);
    // Smooth input keeps the latent values moderate.
    let series = Mat::from_fn(2, 24, |j, t| (0.3 * t as f64 + j as f64).sin() + 0.1 * rng.random_range(-1.0..1.0));
    let sample = WindowSample {
        lookback: series.col_range(0, 16),
        target: series.col_range(16, 24),
        source: "g".into(),
        start: 0,
        weight: 1.0,
    };
    let (_, grads) = batch_gradient(&cfg, &params, &[&sample]).unwrap();
    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    // One coordinate per tensor first, then uniform draws up to 100.
    let mut coords: Vec<(usize, usize)> = (0..names.len())
        .map(|i| (i, rng.random_range(0..grads[i].len())))
        .collect();
    while coords.len() < 100 {
        let i = rng.random_range(0..names.len());
        coords.push((i, rng.random_range(0..grads[i].len())));
    }
    let eps = 1e-6;
    let mut worst = (0.0f64, String::new());
    for &(ti, ci) in &coords {
        let mut plus = params.clone();
        plus.get_mut(&names[ti]).unwrap().as_mut_slice()[ci] += eps;
        let mut minus = params.clone();
        minus.get_mut(&names[ti]).unwrap().as_mut_slice()[ci] -= eps;
        let lp = loss(&cfg, &plus, &sample).unwrap().total();
        let lm = loss(&cfg, &minus, &sample).unwrap().total();
        let numeric = (lp - lm) / (2.0 * eps);
        let analytic = grads[ti].as_slice()[ci];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        if rel > worst.0 {
            worst = (rel, format!("{}[{ci}]", names[ti]));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        5,
        "gradients match central differences within 1e-4 (100 coordinates, m <= 30)",
        worst.0 <= 1e-4 && m <= 30 && secs <= 120.0,
        format!(
            "m={m}, {} tensors, worst relative error {:.2e} at {}, {secs:.1}s",
            names.len(),
            worst.0,
            worst.1
        ),
    )
}

// Loop oracles for the lifting and the operator powers.

fn random_spec(rng: &mut ChaCha8Rng) -> MeasurementSpec {
    let pool = [
        MeasurementFn::Poly(1),
        MeasurementFn::Poly(2),
        MeasurementFn::Poly(3),
        MeasurementFn::Poly(4),
        MeasurementFn::Exp,
        MeasurementFn::Sin,
    ];
    let n = rng.random_range(1..=5);
    let functions: Vec<MeasurementFn> = (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect();
    let d = rng.random_range(1..=4);
    let k = rng.random_range(1..=5);
    let counts = (0..d).map(|_| rng.random_range(1..=n)).collect();
    let pairs = MeasurementSpec::all_pairs(d)
        .into_iter()
        .filter(|_| rng.random_bool(0.5))
        .collect();
    MeasurementSpec::with_feature_counts(functions, counts, k, pairs).unwrap()
}

fn oracle_latent(spec: &MeasurementSpec, c: &[f64], x: &Mat) -> Mat {
    let (n, d, k) = (spec.n(), spec.features(), spec.segment_len());
    let mut v = Mat::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            let mut s = 0.0;
            for l in 0..k {
                s += c[(i * d + j) * k + l] * x[(j, l)];
            }
            v[(i, j)] = s;
        }
    }
    v
}

fn oracle_measure(spec: &MeasurementSpec, v: &Mat) -> Vec<f64> {
    let counts = spec.feature_counts();
    let mut out = Vec::new();
    for (i, f) in spec.functions().iter().enumerate() {
        for j in 0..spec.features() {
            if i < counts[j] {
                let x = v[(i, j)];
                out.push(match f {
                    MeasurementFn::Poly(p) => {
                        let mut r = 1.0;
                        for _ in 0..*p {
                            r *= x;
                        }
                        r
                    }
                    MeasurementFn::Exp => x.exp(),
                    MeasurementFn::Sin => x.sin(),
                });
            }
        }
    }
    for &(a, b) in spec.pairs() {
        let rows = counts[a].min(counts[b]);
        let mut s = 0.0;
        for i in 0..rows {
            s += v[(i, a)] * v[(i, b)];
        }
        out.push(s / rows as f64);
    }
    out
}

fn criterion_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_lift = 0.0f64;
    for _ in 0..1000 {
        let spec = random_spec(&mut rng);
        let (d, k) = (spec.features(), spec.segment_len());
        let c: Vec<f64> = (0..spec.coefficient_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = random_mat(&mut rng, d, k, 1.0);
        let v_ref = oracle_latent(&spec, &c, &x);
        let g_ref = oracle_measure(&spec, &v_ref);

        let v = latent_matrix(&spec, &c, &x).unwrap();
        let g = apply_measurements(&spec, &v).unwrap();
        worst_lift = worst_lift.max(v.0.max_abs_diff(&v_ref));
        worst_lift = worst_lift.max(Mat::row_vector(&g.0).max_abs_diff(&Mat::row_vector(&g_ref)));

        let mut graph = Graph::new();
        let cv = graph.constant(Mat::row_vector(&c));
        let xv = graph.constant(Mat::row_vector(x.as_slice()));
        let lat = latent_rows(&mut graph, &spec, cv, xv).unwrap();
        let meas = measure_rows(&mut graph, &spec, lat).unwrap();
        worst_lift = worst_lift.max(graph.value(lat).max_abs_diff(&Mat::row_vector(v_ref.as_slice())));
        worst_lift = worst_lift.max(graph.value(meas).max_abs_diff(&Mat::row_vector(&g_ref)));
    }

    // Rollout against explicit matrix powers.
    let mut o = KnfOptions::new(2, 2, 18, 16);
    o.encoder_hidden = 8;
    o.decoder_hidden = 8;
    o.attention_width = 8;
    o.segments_per_call = 8;
    o.revin = false;
    o.use_feedback = false;
    let cfg = o.build().unwrap();
    let m = cfg.measurement_dim();
    let mut params = init_params(&cfg, 7).unwrap();
    *params.get_mut(GLOBAL_OPERATOR).unwrap() = random_mat(&mut rng, m, m, 0.1);
    let mut worst_power = 0.0f64;
    for _ in 0..10 {
        let window = random_mat(&mut rng, 2, 18, 1.0);
        let res = forecast(&cfg, &params, &window).unwrap();
        let k = res.operators[0].total();
        let g_last = encode(&cfg, &params, &window.col_range(16, 18)).unwrap().measurement.0;
        let mut p = Mat::identity(m);
        for i in 1..=8 {
            p = k.matmul(&p);
            let seg = reconstruct(&cfg, &params, &MeasurementVector(p.matvec(&g_last))).unwrap();
            worst_power = worst_power.max(res.forecast.col_range(2 * (i - 1), 2 * i).max_abs_diff(&seg));
        }
    }
    outcome(
        6,
        "lifting matches loop oracles within 1e-12 (1000 cases); powers <= 8 within 1e-10",
        worst_lift <= 1e-12 && worst_power <= 1e-10,
        format!("lifting max error {worst_lift:.2e}, power rollout max error {worst_power:.2e}"),
    )
}

fn criterion_metrics() -> Outcome {
    let s = smape(&[1.0, 3.0], &[1.0, 1.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_revin = 0.0f64;
    let mut worst_rmse = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(1..=4);
        let q = rng.random_range(2..=40);
        let block = random_mat(&mut rng, d, q, 5.0);
        let scale = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
        let shift = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let st = RevinState::from_block(&block).with_affine(scale, shift);
        worst_revin = worst_revin.max(st.denormalize(&st.normalize(&block)).max_abs_diff(&block));

        let n = rng.random_range(1..=6);
        let f: Vec<Vec<f64>> = (0..n).map(|i| (0..3 + i).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let y: Vec<Vec<f64>> = f.iter().map(|v| v.iter().map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let mut se = 0.0;
        let mut cnt = 0.0;
        for (a, b) in f.iter().zip(&y) {
            for (x, z) in a.iter().zip(b) {
                se += (x - z) * (x - z);
                cnt += 1.0;
            }
        }
        let pooled = (se / cnt).sqrt();
        worst_rmse = worst_rmse.max((weighted_rmse(&f, &y, &vec![1.0; n]).unwrap() - pooled).abs());
    }
    outcome(
        7,
        "sMAPE unit value 50, ReVIN round trip 1e-10, unit-weight RMSE equals pooled 1e-12",
        s == 50.0 && worst_revin <= 1e-10 && worst_rmse <= 1e-12,
        format!("smape {s}, revin max error {worst_revin:.2e}, rmse max error {worst_rmse:.2e}"),
    )
}

fn criterion_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut o = KnfOptions::new(2, 2, 8, 10);
    o.encoder_hidden = 8;
    o.decoder_hidden = 8;
    o.feedback_hidden = 8;
    o.attention_width = 8;
    o.segments_per_call = 2;
    let cfg = o.build().unwrap();
    let m = cfg.measurement_dim();

    let mut row_err = 0.0f64;
    let mut feedback_err = 0.0f64;
    let mut comp_err = 0.0f64;
    let mut bit_exact = true;
    let dir = tempfile::tempdir().unwrap();
    for case in 0..20 {
        let mut params = init_params(&cfg, case).unwrap();
        let ms: Vec<MeasurementVector> = (0..cfg.segments())
            .map(|_| MeasurementVector((0..m).map(|_| rng.random_range(-3.0..3.0)).collect()))
            .collect();
        let kl = local_operator(&cfg, &params, &ms).unwrap();
        for i in 0..m {
            row_err = row_err.max((kl.row(i).iter().sum::<f64>() - 1.0).abs());
        }

        let window = random_mat(&mut rng, 2, 8, 1.0);
        let mut off = cfg.clone();
        off.use_feedback = false;
        let a = forecast(&cfg, &params, &window).unwrap().forecast;
        let b = forecast(&off, &params, &window).unwrap().forecast;
        feedback_err = feedback_err.max(a.max_abs_diff(&b));

        let k = random_mat(&mut rng, m, m, 0.5);
        let g: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spectrum = eigendecompose(&k).unwrap();
        let comps = eigencomponents(&spectrum, &g).unwrap();
        for (i, gi) in g.iter().enumerate() {
            let s: Complex64 = comps.iter().map(|c| c[i]).sum();
            comp_err = comp_err.max((s - Complex64::new(*gi, 0.0)).norm());
        }

        perturb(&mut params, &mut rng, 0.3);
        let path = dir.path().join(format!("c{case}.knf"));
        save_checkpoint(&params, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        bit_exact &= checkpoint_bytes(&back) == checkpoint_bytes(&params)
            && back.iter().zip(params.iter()).all(|(x, y)| {
                x.name == y.name
                    && x.value.shape() == y.value.shape()
                    && x.value.as_slice().iter().zip(y.value.as_slice()).all(|(u, v)| u.to_bits() == v.to_bits())
            });
    }
    outcome(
        8,
        "local rows sum to 1 (1e-9), zero feedback inert (1e-12), components sum (1e-8), checkpoint bit-exact",
        row_err <= 1e-9 && feedback_err <= 1e-12 && comp_err <= 1e-8 && bit_exact,
        format!(
            "row error {row_err:.2e}, feedback error {feedback_err:.2e}, component error {comp_err:.2e}, bit-exact {bit_exact}"
        ),
    )
}

#[test]
fn acceptance() {
    let start = Instant::now();
    let mut results = criteria_oscillator();
    let c = corpus();
    results.push(criterion_persistence(&c));
    results.push(criterion_ablation(&c));
    results.push(criterion_gradient());
    results.push(criterion_oracles());
    results.push(criterion_metrics());
    results.push(criterion_invariants());
    results.sort_by_key(|r| r.id);
    println!();
    for r in &results {
        println!(
            "{} criterion {}: {} -- {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.id,
            r.name,
            r.detail
        );
    }
    println!("acceptance wall time {:.1}s", start.elapsed().as_secs_f64());
    let failed: Vec<u32> = results.iter().filter(|r| !r.pass).map(|r| r.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
