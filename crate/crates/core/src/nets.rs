//! Neural building blocks: parameter storage, MLPs and a single-head
//! self-attention encoder, all expressed on the [`Graph`] tape.

use std::collections::HashMap;

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{KnfError, Result};
use crate::tensor::Mat;

/// A named trainable tensor. Every tensor is stored as a matrix; vectors
/// are `1 x n` (biases) or `n x 1` (per-feature scales).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub value: Mat,
}

impl ParamTensor {
    pub fn shape(&self) -> [usize; 2] {
        [self.value.rows(), self.value.cols()]
    }
}

/// Ordered set of uniquely named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: Vec<ParamTensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Mat) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(KnfError::arg(format!("duplicate parameter name {name}")));
        }
        if !value.is_finite() {
            return Err(KnfError::numeric(format!("parameter {name} has non-finite values")));
        }
        self.index.insert(name.clone(), self.tensors.len());
        self.tensors.push(ParamTensor { name, value });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamTensor> {
        self.tensors.iter()
    }

    pub fn tensors(&self) -> &[ParamTensor] {
        &self.tensors
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.position(name).map(|i| &self.tensors[i].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Mat> {
        let i = self.position(name)?;
        Some(&mut self.tensors[i].value)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Mat> {
        self.tensors.iter_mut().map(|t| &mut t.value)
    }

    /// Total scalar count.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    /// Copy holding only tensors whose name satisfies `keep`.
    pub fn filtered(&self, keep: impl Fn(&str) -> bool) -> ParamStore {
        let mut out = ParamStore::new();
        for t in self.tensors.iter().filter(|t| keep(&t.name)) {
            out.insert(t.name.clone(), t.value.clone()).expect("names already unique");
        }
        out
    }

    /// Puts every tensor on `graph` as a leaf.
    pub fn bind(&self, graph: &mut Graph) -> Bound<'_> {
        let vars = self.tensors.iter().map(|t| graph.leaf(t.value.clone())).collect();
        Bound { store: self, vars }
    }

    /// Like [`bind`](Self::bind) but the leaves receive no adjoints.
    pub fn bind_frozen(&self, graph: &mut Graph) -> Bound<'_> {
        let vars = self.tensors.iter().map(|t| graph.constant(t.value.clone())).collect();
        Bound { store: self, vars }
    }
}

/// Parameter store bound to graph variables.
pub struct Bound<'a> {
    store: &'a ParamStore,
    vars: Vec<Var>,
}

impl Bound<'_> {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.store
            .position(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| KnfError::dim(format!("missing parameter {name}")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.store.position(name).is_some()
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(KnfError::arg("an MLP needs at least input and output widths"));
        }
        if widths.contains(&0) {
            return Err(KnfError::arg("MLP widths must be positive"));
        }
        Ok(MlpSpec { widths, activation })
    }

    /// `input -> hidden x (layers - 1) -> output`, ReLU between layers.
    pub fn relu(input: usize, hidden: usize, layers: usize, output: usize) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend(std::iter::repeat_n(hidden, layers.saturating_sub(1)));
        widths.push(output);
        MlpSpec::new(widths, Activation::Relu)
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated")
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

pub fn weight_name(prefix: &str, layer: usize) -> String {
    format!("{prefix}.{layer}.weight")
}

pub fn bias_name(prefix: &str, layer: usize) -> String {
    format!("{prefix}.{layer}.bias")
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Mat {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Mat::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..=bound))
}

pub fn init_mlp(store: &mut ParamStore, prefix: &str, spec: &MlpSpec, rng: &mut impl Rng) -> Result<()> {
    for (l, w) in spec.widths.windows(2).enumerate() {
        store.insert(weight_name(prefix, l), xavier_uniform(rng, w[0], w[1]))?;
        store.insert(bias_name(prefix, l), Mat::zeros(1, w[1]))?;
    }
    Ok(())
}

/// Zeroes the weights and bias of the final layer.
pub fn zero_output_layer(store: &mut ParamStore, prefix: &str, spec: &MlpSpec) -> Result<()> {
    let last = spec.layer_count() - 1;
    for name in [weight_name(prefix, last), bias_name(prefix, last)] {
        let m = store
            .get_mut(&name)
            .ok_or_else(|| KnfError::dim(format!("missing parameter {name}")))?;
        m.as_mut_slice().iter_mut().for_each(|x| *x = 0.0);
    }
    Ok(())
}

fn check_mlp_params(bound: &Bound, graph: &Graph, prefix: &str, spec: &MlpSpec) -> Result<()> {
    for (l, w) in spec.widths.windows(2).enumerate() {
        let wn = weight_name(prefix, l);
        let bn = bias_name(prefix, l);
        let ws = graph.shape(bound.get(&wn)?);
        let bs = graph.shape(bound.get(&bn)?);
        if ws != (w[0], w[1]) || bs != (1, w[1]) {
            return Err(KnfError::dim(format!(
                "{prefix} layer {l}: expected weight {}x{} and bias 1x{}, got {ws:?} and {bs:?}",
                w[0], w[1], w[1]
            )));
        }
    }
    Ok(())
}

/// Applies the MLP to every row of `input` (`rows x widths[0]`).
pub fn mlp_apply(graph: &mut Graph, bound: &Bound, prefix: &str, spec: &MlpSpec, input: Var) -> Result<Var> {
    check_mlp_params(bound, graph, prefix, spec)?;
    let (_, c) = graph.shape(input);
    if c != spec.input_width() {
        return Err(KnfError::dim(format!(
            "{prefix}: input width {c}, expected {}",
            spec.input_width()
        )));
    }
    let mut h = input;
    let last = spec.layer_count() - 1;
    for l in 0..=last {
        let w = bound.get(&weight_name(prefix, l))?;
        let b = bound.get(&bias_name(prefix, l))?;
        h = graph.matmul(h, w);
        h = graph.add_row(h, b);
        if l < last && spec.activation == Activation::Relu {
            h = graph.relu(h);
        }
    }
    Ok(h)
}

/// Plain evaluation of the MLP named `prefix` on one input vector.
pub fn mlp_forward(spec: &MlpSpec, params: &ParamStore, prefix: &str, input: &[f64]) -> Result<Vec<f64>> {
    if input.iter().any(|x| !x.is_finite()) {
        return Err(KnfError::numeric(format!("{prefix}: non-finite input")));
    }
    let mut g = Graph::new();
    let bound = params.bind_frozen(&mut g);
    let x = g.constant(Mat::row_vector(input));
    let y = mlp_apply(&mut g, &bound, prefix, spec, x)?;
    Ok(g.value(y).as_slice().to_vec())
}

/// Single-head self-attention encoder. Tokens are projected from
/// `token_dim` to `width`; every layer but the last is a post-norm block
/// (attention + residual + layer norm, ReLU feed-forward + residual + layer
/// norm). Only the query/key projections of the last layer are needed,
/// since its attention matrix is the output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionStackSpec {
    pub token_dim: usize,
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
}

impl AttentionStackSpec {
    pub fn new(token_dim: usize, width: usize, layers: usize) -> Result<Self> {
        if token_dim == 0 || width == 0 || layers == 0 {
            return Err(KnfError::arg("attention dims and layer count must be positive"));
        }
        Ok(AttentionStackSpec {
            token_dim,
            width,
            layers,
            heads: 1,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.heads != 1 {
            return Err(KnfError::arg(format!(
                "attention stack is single-head, got {} heads",
                self.heads
            )));
        }
        Ok(())
    }

    fn projections(&self, layer: usize) -> &'static [&'static str] {
        if layer + 1 == self.layers {
            &["query", "key"]
        } else {
            &["query", "key", "value", "output", "ffn_in", "ffn_out"]
        }
    }
}

fn linear(graph: &mut Graph, bound: &Bound, name: &str, x: Var) -> Result<Var> {
    let w = bound.get(&format!("{name}.weight"))?;
    let b = bound.get(&format!("{name}.bias"))?;
    let h = graph.matmul(x, w);
    Ok(graph.add_row(h, b))
}

pub fn init_attention(store: &mut ParamStore, prefix: &str, spec: &AttentionStackSpec, rng: &mut impl Rng) -> Result<()> {
    spec.validate()?;
    let d = spec.width;
    store.insert(format!("{prefix}.input.weight"), xavier_uniform(rng, spec.token_dim, d))?;
    store.insert(format!("{prefix}.input.bias"), Mat::zeros(1, d))?;
    for l in 0..spec.layers {
        for p in spec.projections(l) {
            store.insert(format!("{prefix}.{l}.{p}.weight"), xavier_uniform(rng, d, d))?;
            store.insert(format!("{prefix}.{l}.{p}.bias"), Mat::zeros(1, d))?;
        }
    }
    Ok(())
}

pub fn attention_param_count(spec: &AttentionStackSpec) -> usize {
    let d = spec.width;
    let per = d * d + d;
    spec.token_dim * d + d + (0..spec.layers).map(|l| spec.projections(l).len() * per).sum::<usize>()
}

/// Returns the last layer's attention matrix (`tokens x tokens`, rows sum to 1).
pub fn attention_apply(
    graph: &mut Graph,
    bound: &Bound,
    prefix: &str,
    spec: &AttentionStackSpec,
    tokens: Var,
) -> Result<Var> {
    spec.validate()?;
    let (t, c) = graph.shape(tokens);
    if t == 0 {
        return Err(KnfError::arg("attention over an empty token sequence"));
    }
    if c != spec.token_dim {
        return Err(KnfError::dim(format!(
            "tokens have width {c}, attention expects {}",
            spec.token_dim
        )));
    }
    let inv_sqrt = 1.0 / (spec.width as f64).sqrt();
    let mut x = linear(graph, bound, &format!("{prefix}.input"), tokens)?;
    for l in 0..spec.layers {
        let q = linear(graph, bound, &format!("{prefix}.{l}.query"), x)?;
        let k = linear(graph, bound, &format!("{prefix}.{l}.key"), x)?;
        let kt = graph.transpose(k);
        let scores = graph.matmul(q, kt);
        let scores = graph.scale(scores, inv_sqrt);
        let attn = graph.softmax_rows(scores);
        if l + 1 == spec.layers {
            return Ok(attn);
        }
        let v = linear(graph, bound, &format!("{prefix}.{l}.value"), x)?;
        let mixed = graph.matmul(attn, v);
        let out = linear(graph, bound, &format!("{prefix}.{l}.output"), mixed)?;
        let res = graph.add(x, out);
        x = graph.layer_norm_rows(res);
        let f = linear(graph, bound, &format!("{prefix}.{l}.ffn_in"), x)?;
        let f = graph.relu(f);
        let f = linear(graph, bound, &format!("{prefix}.{l}.ffn_out"), f)?;
        let res = graph.add(x, f);
        x = graph.layer_norm_rows(res);
    }
    unreachable!("layers >= 1 is validated")
}

/// Plain evaluation of [`attention_apply`].
pub fn attention_weights(spec: &AttentionStackSpec, params: &ParamStore, prefix: &str, tokens: &Mat) -> Result<Mat> {
    if tokens.rows() == 0 {
        return Err(KnfError::arg("attention over an empty token sequence"));
    }
    let mut g = Graph::new();
    let bound = params.bind_frozen(&mut g);
    let x = g.constant(tokens.clone());
    let a = attention_apply(&mut g, &bound, prefix, spec, x)?;
    Ok(g.value(a).clone())
}

/// Value of the scalar built by `loss` and its gradient with respect to
/// every tensor in `params`, in store order.
pub fn gradient<F>(params: &ParamStore, loss: F) -> Result<(f64, Vec<Mat>)>
where
    F: FnOnce(&mut Graph, &Bound) -> Result<Var>,
{
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let out = loss(&mut g, &bound)?;
    if g.shape(out) != (1, 1) {
        return Err(KnfError::dim("loss must be a scalar"));
    }
    let value = g.value(out).as_slice()[0];
    if !value.is_finite() {
        return Err(KnfError::numeric(format!("loss is {value}")));
    }
    let grads = g.backward(out);
    let per_param = params
        .iter()
        .zip(bound.vars())
        .map(|(t, &v)| grads.get_or_zero(v, t.value.shape()))
        .collect();
    Ok((value, per_param))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store_2x2_identity() -> (MlpSpec, ParamStore) {
        let spec = MlpSpec::new(vec![2, 2, 2], Activation::Relu).unwrap();
        let mut p = ParamStore::new();
        for l in 0..2 {
            p.insert(weight_name("f", l), Mat::identity(2)).unwrap();
            p.insert(bias_name("f", l), Mat::zeros(1, 2)).unwrap();
        }
        (spec, p)
    }

    #[test]
    fn identity_mlp_applies_relu_on_hidden_only() {
        let (spec, p) = store_2x2_identity();
        assert_eq!(mlp_forward(&spec, &p, "f", &[1.0, -2.0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn zero_mlp_is_zero_map() {
        let spec = MlpSpec::relu(3, 5, 3, 2).unwrap();
        let mut p = ParamStore::new();
        init_mlp(&mut p, "z", &spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        p.values_mut().for_each(|m| m.as_mut_slice().fill(0.0));
        assert_eq!(mlp_forward(&spec, &p, "z", &[0.3, -7.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_affine_layer_by_hand() {
        let spec = MlpSpec::new(vec![2, 1], Activation::Relu).unwrap();
        let mut p = ParamStore::new();
        p.insert(weight_name("a", 0), Mat::from_vec(2, 1, vec![1.0, 2.0]).unwrap()).unwrap();
        p.insert(bias_name("a", 0), Mat::filled(1, 1, 0.5)).unwrap();
        assert_eq!(mlp_forward(&spec, &p, "a", &[3.0, 4.0]).unwrap(), vec![11.5]);
    }

    #[test]
    fn mlp_errors() {
        let (spec, p) = store_2x2_identity();
        assert!(matches!(mlp_forward(&spec, &p, "f", &[1.0]), Err(KnfError::Dimension(_))));
        assert!(matches!(
            mlp_forward(&spec, &p, "f", &[f64::NAN, 0.0]),
            Err(KnfError::Numeric(_))
        ));
        let wrong = MlpSpec::new(vec![2, 3, 2], Activation::Relu).unwrap();
        assert!(matches!(mlp_forward(&wrong, &p, "f", &[1.0, 1.0]), Err(KnfError::Dimension(_))));
        assert!(MlpSpec::new(vec![3], Activation::Relu).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParamStore::new();
        p.insert("x", Mat::zeros(1, 1)).unwrap();
        assert!(p.insert("x", Mat::zeros(1, 1)).is_err());
    }

    #[test]
    fn xavier_bounds() {
        let w = xavier_uniform(&mut ChaCha8Rng::seed_from_u64(9), 10, 14);
        let b = (6.0f64 / 24.0).sqrt();
        assert!(w.as_slice().iter().all(|x| x.abs() <= b));
    }

    fn attention_store(spec: &AttentionStackSpec, seed: u64) -> ParamStore {
        let mut p = ParamStore::new();
        init_attention(&mut p, "att", spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        p
    }

    #[test]
    fn identical_tokens_attend_uniformly() {
        let spec = AttentionStackSpec::new(3, 8, 2).unwrap();
        let p = attention_store(&spec, 4);
        let tokens = Mat::from_fn(5, 3, |_, j| j as f64 * 0.7 - 0.3);
        let a = attention_weights(&spec, &p, "att", &tokens).unwrap();
        assert_eq!(a.shape(), (5, 5));
        for x in a.as_slice() {
            assert!((x - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn single_token_gives_unit_matrix() {
        let spec = AttentionStackSpec::new(2, 4, 3).unwrap();
        let p = attention_store(&spec, 5);
        let a = attention_weights(&spec, &p, "att", &Mat::from_vec(1, 2, vec![0.4, -1.0]).unwrap()).unwrap();
        assert_eq!(a.as_slice(), &[1.0]);
    }

    #[test]
    fn empty_tokens_rejected() {
        let spec = AttentionStackSpec::new(2, 4, 1).unwrap();
        let p = attention_store(&spec, 5);
        assert!(matches!(
            attention_weights(&spec, &p, "att", &Mat::zeros(0, 2)),
            Err(KnfError::Argument(_))
        ));
    }

    #[test]
    fn multi_head_rejected() {
        let mut spec = AttentionStackSpec::new(2, 4, 1).unwrap();
        spec.heads = 2;
        let mut p = ParamStore::new();
        assert!(init_attention(&mut p, "att", &spec, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn two_token_attention_matches_scalar_softmax() {
        let spec = AttentionStackSpec::new(2, 3, 1).unwrap();
        let p = attention_store(&spec, 11);
        let tokens = Mat::from_rows(&[vec![0.9, -0.4], vec![-0.2, 0.6]]).unwrap();
        let a = attention_weights(&spec, &p, "att", &tokens).unwrap();

        // Oracle: explicit loops over the same projections.
        let get = |n: &str| p.get(&format!("att.{n}")).unwrap();
        let proj = |w: &Mat, b: &Mat, x: &[f64]| -> Vec<f64> {
            (0..w.cols())
                .map(|j| b[(0, j)] + (0..x.len()).map(|i| x[i] * w[(i, j)]).sum::<f64>())
                .collect()
        };
        let emb: Vec<Vec<f64>> = (0..2)
            .map(|t| proj(get("input.weight"), get("input.bias"), tokens.row(t)))
            .collect();
        let q: Vec<Vec<f64>> = emb.iter().map(|e| proj(get("0.query.weight"), get("0.query.bias"), e)).collect();
        let k: Vec<Vec<f64>> = emb.iter().map(|e| proj(get("0.key.weight"), get("0.key.bias"), e)).collect();
        for i in 0..2 {
            let s: Vec<f64> = (0..2)
                .map(|j| q[i].iter().zip(&k[j]).map(|(x, y)| x * y).sum::<f64>() / 3f64.sqrt())
                .collect();
            let gap = s[0] - s[1];
            let sigma = 1.0 / (1.0 + (-gap).exp());
            assert!((a[(i, 0)] - sigma).abs() < 1e-12);
            assert!((a[(i, 1)] - (1.0 - sigma)).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_constant_and_quadratic() {
        let mut p = ParamStore::new();
        p.insert("a", Mat::from_vec(1, 3, vec![1.0, -2.0, 0.5]).unwrap()).unwrap();
        p.insert("b", Mat::from_vec(2, 1, vec![3.0, 4.0]).unwrap()).unwrap();
        let (v, g) = gradient(&p, |g, _| Ok(g.constant(Mat::filled(1, 1, 7.0)))).unwrap();
        assert_eq!(v, 7.0);
        assert!(g.iter().all(|m| m.as_slice().iter().all(|&x| x == 0.0)));

        let (_, g) = gradient(&p, |g, b| {
            let mut total = None;
            for &v in b.vars() {
                let sq = g.mul(v, v);
                let s = g.sum_all(sq);
                total = Some(match total {
                    None => s,
                    Some(t) => g.add(t, s),
                });
            }
            Ok(total.unwrap())
        })
        .unwrap();
        assert_eq!(g[0].as_slice(), &[2.0, -4.0, 1.0]);
        assert_eq!(g[1].as_slice(), &[6.0, 8.0]);
    }

    #[test]
    fn gradient_rejects_non_finite_loss() {
        let mut p = ParamStore::new();
        p.insert("a", Mat::filled(1, 1, 0.0)).unwrap();
        let r = gradient(&p, |g, b| {
            let x = b.get("a")?;
            let r = g.recip(x);
            Ok(g.sum_all(r))
        });
        assert!(matches!(r, Err(KnfError::Numeric(_))));
    }

    proptest! {
        #[test]
        fn attention_rows_are_stochastic(seed in 0u64..1000, t in 1usize..7, layers in 1usize..4) {
            let spec = AttentionStackSpec::new(3, 6, layers).unwrap();
            let p = attention_store(&spec, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let tokens = Mat::from_fn(t, 3, |_, _| rng.random_range(-2.0..2.0));
            let a = attention_weights(&spec, &p, "att", &tokens).unwrap();
            for i in 0..t {
                let s: f64 = a.row(i).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
                prop_assert!(a.row(i).iter().all(|&x| (0.0..=1.0).contains(&x)));
            }
        }

        #[test]
        fn bias_free_relu_mlp_is_positively_homogeneous(seed in 0u64..1000, alpha in 0.01f64..10.0) {
            let spec = MlpSpec::relu(4, 6, 3, 3).unwrap();
            let mut p = ParamStore::new();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            init_mlp(&mut p, "h", &spec, &mut rng).unwrap();
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ax: Vec<f64> = x.iter().map(|v| v * alpha).collect();
            let fx = mlp_forward(&spec, &p, "h", &x).unwrap();
            let fax = mlp_forward(&spec, &p, "h", &ax).unwrap();
            for (a, b) in fx.iter().zip(&fax) {
                prop_assert!((a * alpha - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
        }
    }
}
