//! Learnable features and MLP scorer, the regularized BCE objective, exact
//! gradients and full-batch Adam training.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{s, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use sha2::{Digest, Sha256};

use crate::data::EdgeSplit;
use crate::encoder::{Encoder, EncoderConfig, FinalRepresentations};
use crate::error::{Error, Result};
use crate::graph::{normalize, NormalizedGraph, SignedEdge};
use crate::lowrank::{preprocess, preprocess_cached, target_rank, LowRankStore};
use crate::metrics::{self, EvalReport, DEFAULT_THRESHOLD};
use crate::par;

/// Score clamp applied before taking logarithms.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ablation {
    /// Both encoders.
    Full,
    /// Original-graph encoder only.
    NoRmp,
    /// Low-rank encoder only.
    NoSpmp,
}

impl Ablation {
    pub fn encoders(self) -> (bool, bool) {
        match self {
            Ablation::Full => (true, true),
            Ablation::NoRmp => (true, false),
            Ablation::NoSpmp => (false, true),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::Full => "full",
            Ablation::NoRmp => "no-rmp",
            Ablation::NoSpmp => "no-spmp",
        })
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "no-rmp" => Ok(Ablation::NoRmp),
            "no-spmp" => Ok(Ablation::NoSpmp),
            _ => Err(Error::InvalidConfig(format!("unknown ablation `{s}`"))),
        }
    }
}

/// Validation metric used to pick the epoch snapshot and sweep winner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SelectMetric {
    Auc,
    MacroF1,
}

impl SelectMetric {
    pub fn pick(self, report: &EvalReport) -> f64 {
        match self {
            SelectMetric::Auc => report.auc,
            SelectMetric::MacroF1 => report.macro_f1,
        }
    }
}

impl fmt::Display for SelectMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectMetric::Auc => "auc",
            SelectMetric::MacroF1 => "macro_f1",
        })
    }
}

impl FromStr for SelectMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auc" => Ok(SelectMetric::Auc),
            "macro_f1" | "macro-f1" => Ok(SelectMetric::MacroF1),
            _ => Err(Error::InvalidConfig(format!("unknown metric `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    /// Width of each node's final representation `Z`.
    pub final_dim: usize,
    pub layers: usize,
    pub injection_ratio: f64,
    pub rank_ratio: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub mlp_hidden: usize,
    pub ablation: Ablation,
    pub metric: SelectMetric,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            final_dim: 32,
            layers: 2,
            injection_ratio: 0.15,
            rank_ratio: 0.1,
            learning_rate: 5e-4,
            weight_decay: 1e-5,
            epochs: 200,
            seed: 0,
            mlp_hidden: 32,
            ablation: Ablation::Full,
            metric: SelectMetric::Auc,
        }
    }
}

pub const RANK_RATIO_GRID: [f64; 6] = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5];
pub const INJECTION_RATIO_GRID: [f64; 6] = [0.01, 0.02, 0.15, 0.45, 0.75, 1.0];
pub const LAYER_GRID: [usize; 6] = [0, 1, 2, 3, 4, 5];

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let blocks = 2 * self.active_encoders();
        if self.final_dim == 0 || !self.final_dim.is_multiple_of(blocks) {
            return bad(format!(
                "final_dim {} must be a positive multiple of {blocks}",
                self.final_dim
            ));
        }
        if !(self.injection_ratio > 0.0 && self.injection_ratio <= 1.0) {
            return bad(format!(
                "injection ratio must lie in (0, 1], got {}",
                self.injection_ratio
            ));
        }
        if !(self.rank_ratio > 0.0 && self.rank_ratio < 1.0) {
            return Err(Error::InvalidRatio(self.rank_ratio));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        if self.mlp_hidden == 0 {
            return bad("mlp_hidden must be at least 1".into());
        }
        Ok(())
    }

    pub fn active_encoders(&self) -> usize {
        let (a, b) = self.ablation.encoders();
        a as usize + b as usize
    }

    /// Per-encoder embedding width `d` such that `Z` is `final_dim` wide.
    pub fn embedding_dim(&self) -> usize {
        self.final_dim / (2 * self.active_encoders())
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        let (spmp, rmp) = self.ablation.encoders();
        EncoderConfig::new(self.layers, self.injection_ratio).with_encoders(spmp, rmp)
    }

    /// Flat `key = value` lines; the inverse of [`HyperParams::set`].
    pub fn to_config_string(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("final_dim", self.final_dim.to_string()),
            ("layers", self.layers.to_string()),
            ("injection_ratio", self.injection_ratio.to_string()),
            ("rank_ratio", self.rank_ratio.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("mlp_hidden", self.mlp_hidden.to_string()),
            ("ablation", self.ablation.to_string()),
            ("metric", self.metric.to_string()),
        ]
    }

    /// Sets a field from its config-file key. Returns `Ok(false)` for
    /// unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value `{v}` for `{key}`")))
        }
        match key {
            "final_dim" => self.final_dim = num(key, value)?,
            "layers" => self.layers = num(key, value)?,
            "injection_ratio" => self.injection_ratio = num(key, value)?,
            "rank_ratio" => self.rank_ratio = num(key, value)?,
            "learning_rate" | "lr" => self.learning_rate = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "mlp_hidden" => self.mlp_hidden = num(key, value)?,
            "ablation" => self.ablation = value.parse()?,
            "metric" => self.metric = value.parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn digest(&self) -> u64 {
        let out = Sha256::digest(self.to_config_string().as_bytes());
        u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
    }
}

/// Learnable parameters. Gradients and Adam moments reuse this shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub x_u: Array2<f64>,
    pub x_v: Array2<f64>,
    /// `(2·|Z|) × h`: the rows for `Z_U(u)` come first, then those for `Z_V(v)`.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `h × 1`.
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl ModelParams {
    pub fn zeros_like(other: &ModelParams) -> Self {
        Self {
            x_u: Array2::zeros(other.x_u.raw_dim()),
            x_v: Array2::zeros(other.x_v.raw_dim()),
            w1: Array2::zeros(other.w1.raw_dim()),
            b1: Array1::zeros(other.b1.raw_dim()),
            w2: Array2::zeros(other.w2.raw_dim()),
            b2: Array1::zeros(other.b2.raw_dim()),
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.x_u.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.b1.len()
    }

    /// Width of one node's representation `Z`.
    pub fn repr_width(&self) -> usize {
        self.w1.nrows() / 2
    }

    /// Tensors in checkpoint order: x_u, x_v, w1, b1, w2, b2.
    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            self.x_u.as_slice().expect("standard layout"),
            self.x_v.as_slice().expect("standard layout"),
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.x_u.as_slice_mut().expect("standard layout"),
            self.x_v.as_slice_mut().expect("standard layout"),
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// All parameters flattened in checkpoint order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter().copied())
            .collect()
    }

    /// Inverse of [`ModelParams::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
    }
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// Uniform `±√(6/(fan_in+fan_out))` initialization per matrix, zero biases.
/// `repr_width` is the width of one node's `Z`; the first MLP layer takes
/// two of them.
pub fn init_params(
    n_u: usize,
    n_v: usize,
    d: usize,
    repr_width: usize,
    h: usize,
    seed: u64,
) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelParams {
        x_u: glorot(n_u, d, &mut rng),
        x_v: glorot(n_v, d, &mut rng),
        w1: glorot(2 * repr_width, h, &mut rng),
        b1: Array1::zeros(h),
        w2: glorot(h, 1, &mut rng),
        b2: Array1::zeros(1),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-edge activations of the MLP.
#[derive(Clone, Debug)]
pub struct MlpCache {
    /// `m × h` rectified hidden layer.
    pub hidden: Array2<f64>,
    pub scores: Vec<f64>,
}

fn check_pairs(z: &FinalRepresentations, pairs: &[(usize, usize)]) -> Result<()> {
    for &(u, v) in pairs {
        if u >= z.z_u.nrows() {
            return Err(Error::IndexOutOfRange {
                what: "U",
                index: u,
                len: z.z_u.nrows(),
            });
        }
        if v >= z.z_v.nrows() {
            return Err(Error::IndexOutOfRange {
                what: "V",
                index: v,
                len: z.z_v.nrows(),
            });
        }
    }
    Ok(())
}

/// Runs the MLP on `concat(Z_U(u), Z_V(v))` for each pair. The first layer
/// is split as `Z_U W1_top + Z_V W1_bottom` and evaluated once per node.
pub fn mlp_forward(
    z: &FinalRepresentations,
    pairs: &[(usize, usize)],
    p: &ModelParams,
) -> Result<MlpCache> {
    let width = z.z_u.ncols();
    if p.w1.nrows() != 2 * width || z.z_v.ncols() != width {
        return Err(Error::ShapeMismatch {
            context: "MLP input width",
            expected: (2 * width, p.hidden()),
            actual: p.w1.dim(),
        });
    }
    check_pairs(z, pairs)?;
    let h = p.hidden();
    let a_u = z.z_u.dot(&p.w1.slice(s![..width, ..]));
    let a_v = z.z_v.dot(&p.w1.slice(s![width.., ..]));
    let w2 = p.w2.column(0);
    let b2 = p.b2[0];
    let mut hidden = vec![0.0; pairs.len() * h];
    par::for_each_row(&mut hidden, h, |e, row| {
        let (u, v) = pairs[e];
        let (au, av) = (a_u.row(u), a_v.row(v));
        for j in 0..h {
            row[j] = (au[j] + av[j] + p.b1[j]).max(0.0);
        }
    });
    let hidden = Array2::from_shape_vec((pairs.len(), h), hidden).expect("shape");
    let scores = hidden
        .outer_iter()
        .map(|row| sigmoid(row.dot(&w2) + b2))
        .collect();
    Ok(MlpCache { hidden, scores })
}

/// `ŷ = σ(w2ᵀ ReLU(W1ᵀ concat(z_u, z_v) + b1) + b2)` for each pair.
pub fn score_edges(
    z: &FinalRepresentations,
    pairs: &[(usize, usize)],
    p: &ModelParams,
) -> Result<Vec<f64>> {
    Ok(mlp_forward(z, pairs, p)?.scores)
}

/// Mean binary cross-entropy with scores clamped to `[1e-12, 1-1e-12]`.
pub fn bce_loss(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            context: "bce scores vs labels",
            expected: (labels.len(), 1),
            actual: (scores.len(), 1),
        });
    }
    let sum: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let s = s.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(y * s.ln() + (1.0 - y) * (1.0 - s).ln())
        })
        .sum();
    Ok(sum / scores.len() as f64)
}

/// `bce + λ · Σθ²` over every parameter tensor.
pub fn total_loss(bce: f64, params: &ModelParams, weight_decay: f64) -> f64 {
    bce + weight_decay * params.sum_of_squares()
}

/// Everything a backward pass needs from the forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub z: FinalRepresentations,
    pub mlp: MlpCache,
    pub bce: f64,
    pub loss: f64,
}

fn edge_pairs(edges: &[SignedEdge]) -> Vec<(usize, usize)> {
    edges.iter().map(|e| (e.u, e.v)).collect()
}

fn edge_labels(edges: &[SignedEdge]) -> Vec<f64> {
    edges.iter().map(|e| e.sign.label()).collect()
}

pub fn forward(
    enc: &Encoder<'_>,
    params: &ModelParams,
    batch: &[SignedEdge],
    weight_decay: f64,
) -> Result<ForwardCache> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let z = enc.encode(&params.x_u.view(), &params.x_v.view())?;
    let mlp = mlp_forward(&z, &edge_pairs(batch), params)?;
    let bce = bce_loss(&mlp.scores, &edge_labels(batch))?;
    let loss = total_loss(bce, params, weight_decay);
    Ok(ForwardCache { z, mlp, bce, loss })
}

/// Exact gradient of the regularized objective with respect to every
/// parameter.
pub fn backward(
    enc: &Encoder<'_>,
    params: &ModelParams,
    cache: &ForwardCache,
    batch: &[SignedEdge],
    weight_decay: f64,
) -> Result<ModelParams> {
    let n = batch.len() as f64;
    let h = params.hidden();
    let width = params.repr_width();
    let w2 = params.w2.column(0);
    let mut grads = ModelParams::zeros_like(params);

    // δ at the first layer's pre-activation, accumulated per endpoint node.
    let mut delta_u = Array2::<f64>::zeros((cache.z.z_u.nrows(), h));
    let mut delta_v = Array2::<f64>::zeros((cache.z.z_v.nrows(), h));
    let mut grad_w2 = Array1::<f64>::zeros(h);
    let mut grad_b2 = 0.0;
    let mut grad_b1 = Array1::<f64>::zeros(h);
    for (e, edge) in batch.iter().enumerate() {
        let d_logit = (cache.mlp.scores[e] - edge.sign.label()) / n;
        let hid = cache.mlp.hidden.row(e);
        grad_w2.scaled_add(d_logit, &hid);
        grad_b2 += d_logit;
        let mut du = delta_u.row_mut(edge.u);
        for j in 0..h {
            if hid[j] > 0.0 {
                let g = d_logit * w2[j];
                du[j] += g;
                grad_b1[j] += g;
            }
        }
        let mut dv = delta_v.row_mut(edge.v);
        for j in 0..h {
            if hid[j] > 0.0 {
                dv[j] += d_logit * w2[j];
            }
        }
    }

    let w1_top = params.w1.slice(s![..width, ..]);
    let w1_bot = params.w1.slice(s![width.., ..]);
    grads
        .w1
        .slice_mut(s![..width, ..])
        .assign(&cache.z.z_u.t().dot(&delta_u));
    grads
        .w1
        .slice_mut(s![width.., ..])
        .assign(&cache.z.z_v.t().dot(&delta_v));
    grads.b1 = grad_b1;
    grads.w2.column_mut(0).assign(&grad_w2);
    grads.b2[0] = grad_b2;

    let grad_z_u = delta_u.dot(&w1_top.t());
    let grad_z_v = delta_v.dot(&w1_bot.t());
    let (gx_u, gx_v) = enc.vjp(&grad_z_u.view(), &grad_z_v.view())?;
    grads.x_u = gx_u;
    grads.x_v = gx_v;

    if weight_decay != 0.0 {
        let two_lambda = 2.0 * weight_decay;
        for (g, p) in grads.tensors_mut().into_iter().zip(params.tensors()) {
            for (gi, pi) in g.iter_mut().zip(p) {
                *gi += two_lambda * pi;
            }
        }
    }
    Ok(grads)
}

/// Adam moments with bias correction.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            m: ModelParams::zeros_like(params),
            v: ModelParams::zeros_like(params),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update. Regularization is expected inside `grads` already; no
/// decoupled decay is applied here.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    let params_t = params.tensors_mut();
    let grads_t = grads.tensors();
    let m_t = state.m.tensors_mut();
    let v_t = state.v.tensors_mut();
    for (((p, g), m), v) in params_t.into_iter().zip(grads_t).zip(m_t).zip(v_t) {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Normalized training graph plus optional low-rank factors, computed once
/// and shared by every epoch (and by sweep cells with matching rank/seed).
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    pub graph: NormalizedGraph,
    pub store: Option<LowRankStore>,
    pub rank: usize,
    pub preprocess_seconds: f64,
}

impl PreparedGraph {
    /// Normalizes `split.train` and, when the low-rank encoder is enabled,
    /// factorizes it at `k = target_rank(r)`. Factors are read from or written
    /// to `cache_dir` when given.
    pub fn new(
        split: &EdgeSplit,
        n_u: usize,
        n_v: usize,
        hp: &HyperParams,
        cache_dir: Option<&Path>,
    ) -> Result<Self> {
        let rank = target_rank(n_u, n_v, hp.rank_ratio)?;
        Self::with_rank(split, n_u, n_v, hp.ablation.encoders().1, rank, cache_dir)
    }

    /// Same as [`PreparedGraph::new`] with an explicit rank.
    pub fn with_rank(
        split: &EdgeSplit,
        n_u: usize,
        n_v: usize,
        use_rmp: bool,
        rank: usize,
        cache_dir: Option<&Path>,
    ) -> Result<Self> {
        let start = Instant::now();
        let g = crate::data::training_graph(split, n_u, n_v)?;
        let graph = normalize(&g);
        let store = if use_rmp {
            Some(match cache_dir {
                Some(dir) => {
                    let digest = crate::data::edges_digest(n_u, n_v, &split.train);
                    preprocess_cached(&graph, digest, rank, split.seed, dir)?
                }
                None => preprocess(&graph, rank, split.seed)?,
            })
        } else {
            None
        };
        Ok(Self {
            graph,
            store,
            rank,
            preprocess_seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn encoder<'a>(&'a self, cfg: &'a EncoderConfig) -> Result<Encoder<'a>> {
        Encoder::new(&self.graph, self.store.as_ref(), cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
    pub val_macro_f1: f64,
    pub seconds: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_auc,val_macro_f1,seconds";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.8},{:.6},{:.6},{:.6}",
            self.epoch, self.train_loss, self.val_auc, self.val_macro_f1, self.seconds
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub params: ModelParams,
    /// 1-based epoch of the retained snapshot.
    pub best_epoch: usize,
    pub best_val: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub model: TrainedModel,
    pub log: Vec<EpochLog>,
}

/// Scores `edges` and evaluates them; `None` when the split is empty or
/// holds a single class.
pub fn evaluate_edges(
    enc: &Encoder<'_>,
    params: &ModelParams,
    edges: &[SignedEdge],
) -> Result<Option<EvalReport>> {
    if edges.is_empty() {
        return Ok(None);
    }
    let z = enc.encode(&params.x_u.view(), &params.x_v.view())?;
    evaluate_with(&z, params, edges)
}

fn evaluate_with(
    z: &FinalRepresentations,
    params: &ModelParams,
    edges: &[SignedEdge],
) -> Result<Option<EvalReport>> {
    if edges.is_empty() {
        return Ok(None);
    }
    let scores = score_edges(z, &edge_pairs(edges), params)?;
    match metrics::evaluate(&scores, &edge_labels(edges), DEFAULT_THRESHOLD) {
        Ok(r) => Ok(Some(r)),
        Err(Error::DegenerateLabels) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Takes one full-batch optimizer step and returns the loss before it.
pub fn train_step(
    enc: &Encoder<'_>,
    params: &mut ModelParams,
    adam: &mut AdamState,
    train: &[SignedEdge],
    hp: &HyperParams,
) -> Result<f64> {
    let cache = forward(enc, params, train, hp.weight_decay)?;
    if !cache.loss.is_finite() {
        return Err(Error::NumericFailure(format!(
            "training loss is {}",
            cache.loss
        )));
    }
    let grads = backward(enc, params, &cache, train, hp.weight_decay)?;
    if !grads.is_finite() {
        return Err(Error::NumericFailure(
            "gradient contains non-finite entries".into(),
        ));
    }
    adam_step(params, &grads, adam, hp.learning_rate);
    Ok(cache.loss)
}

/// Full-batch training on prepared factors. After each epoch the validation
/// split is scored; the snapshot with the best validation metric is kept
/// (earliest on ties, last epoch if validation is never defined).
pub fn fit_prepared(
    prepared: &PreparedGraph,
    split: &EdgeSplit,
    hp: &HyperParams,
) -> Result<FitResult> {
    hp.validate()?;
    if split.train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let cfg = hp.encoder_config();
    let enc = prepared.encoder(&cfg)?;
    let (n_u, n_v) = (prepared.graph.n_u, prepared.graph.n_v);
    let d = hp.embedding_dim();
    let mut params = init_params(n_u, n_v, d, enc.output_width(d), hp.mlp_hidden, hp.seed);
    let mut adam = AdamState::new(&params);

    let mut log = Vec::with_capacity(hp.epochs);
    let mut best: Option<TrainedModel> = None;
    for epoch in 1..=hp.epochs {
        let start = Instant::now();
        let loss = train_step(&enc, &mut params, &mut adam, &split.train, hp)?;
        let val = evaluate_edges(&enc, &params, &split.val)?;
        let seconds = start.elapsed().as_secs_f64();
        let (val_auc, val_macro_f1) = val
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |r| (r.auc, r.macro_f1));
        log.push(EpochLog {
            epoch,
            train_loss: loss,
            val_auc,
            val_macro_f1,
            seconds,
        });

        let key = val.as_ref().map(|r| hp.metric.pick(r));
        let improves = match (&best, key) {
            (None, _) => true,
            (Some(b), Some(k)) => b.best_val.is_nan() || k > b.best_val,
            (Some(b), None) => b.best_val.is_nan(),
        };
        if improves {
            best = Some(TrainedModel {
                params: params.clone(),
                best_epoch: epoch,
                best_val: key.unwrap_or(f64::NAN),
            });
        }
    }
    let model = best.unwrap_or(TrainedModel {
        params,
        best_epoch: 0,
        best_val: f64::NAN,
    });
    Ok(FitResult { model, log })
}

/// Prepares the training graph (including the one-time SVD) and trains.
pub fn fit(
    split: &EdgeSplit,
    n_u: usize,
    n_v: usize,
    hp: &HyperParams,
) -> Result<(PreparedGraph, FitResult)> {
    hp.validate()?;
    if split.train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let prepared = PreparedGraph::new(split, n_u, n_v, hp, None)?;
    let result = fit_prepared(&prepared, split, hp)?;
    Ok((prepared, result))
}

const CKPT_MAGIC: &[u8; 8] = b"SLCKPT\0\0";
const CKPT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub n_u: usize,
    pub n_v: usize,
    pub d: usize,
    pub h: usize,
    pub hp_digest: u64,
}

/// Layout: magic, version (u32), then `n_u, n_v, d, h, hp_digest` as u64,
/// then little-endian row-major `f64` tensors x_u, x_v, w1, b1, w2, b2.
/// The first MLP layer's input width is recovered from the payload size.
pub fn write_checkpoint(path: &Path, params: &ModelParams, hp: &HyperParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&CKPT_VERSION.to_le_bytes())?;
    for x in [
        params.x_u.nrows() as u64,
        params.x_v.nrows() as u64,
        params.embedding_dim() as u64,
        params.hidden() as u64,
        hp.digest(),
    ] {
        w.write_all(&x.to_le_bytes())?;
    }
    for t in params.tensors() {
        for x in t {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, ModelParams)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(Error::Format(format!(
            "{}: not a checkpoint",
            path.display()
        )));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != CKPT_VERSION {
        return Err(Error::Format("unsupported checkpoint version".into()));
    }
    let mut fields = [0u64; 5];
    for f in &mut fields {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        *f = u64::from_le_bytes(b);
    }
    let header = CheckpointHeader {
        n_u: fields[0] as usize,
        n_v: fields[1] as usize,
        d: fields[2] as usize,
        h: fields[3] as usize,
        hp_digest: fields[4],
    };
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() % 8 != 0 || header.h == 0 {
        return Err(Error::Format("truncated checkpoint".into()));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let fixed = (header.n_u + header.n_v) * header.d + 2 * header.h + 1;
    let rest = values
        .len()
        .checked_sub(fixed)
        .filter(|rest| rest % header.h == 0)
        .ok_or_else(|| Error::Format("checkpoint payload size does not match header".into()))?;
    let in_width = rest / header.h;
    let mut params = ModelParams {
        x_u: Array2::zeros((header.n_u, header.d)),
        x_v: Array2::zeros((header.n_v, header.d)),
        w1: Array2::zeros((in_width, header.h)),
        b1: Array1::zeros(header.h),
        w2: Array2::zeros((header.h, 1)),
        b2: Array1::zeros(1),
    };
    params.set_flat(&values);
    Ok((header, params))
}

/// Scores arbitrary pairs with a trained model.
pub fn predict(
    enc: &Encoder<'_>,
    params: &ModelParams,
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>> {
    let z = enc.encode(&params.x_u.view(), &params.x_v.view())?;
    score_edges(&z, pairs, params)
}

/// Concatenated MLP input for one pair; handy for inspection.
pub fn pair_features(z: &FinalRepresentations, u: usize, v: usize) -> Array1<f64> {
    ndarray::concatenate![Axis(0), z.z_u.row(u), z.z_v.row(v)]
}
