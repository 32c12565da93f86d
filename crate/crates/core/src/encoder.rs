//! Signed personalized message passing on the original graph (SPMP) and on
//! its low-rank reconstruction (RMP), with layer-wise aggregation and the
//! exact adjoint of the whole linear encoder.
//!
//! Both encoders run the same recurrence. Layer `l` of V reads layer `l-1`
//! of U and vice versa:
//!
//! ```text
//! P_V ← (1-c)(A⁺ P_U + A⁻ M_U) + c X_V      M_V ← (1-c)(A⁻ P_U + A⁺ M_U)
//! P_U ← (1-c)(B⁺ P_V + B⁻ M_V) + c X_U      M_U ← (1-c)(B⁻ P_V + B⁺ M_V)
//! ```
//!
//! where `A^s` is the normalized transposed U→V operator and `B^s` the V→U
//! one. Positive-to-positive and negative-to-negative routing over positive
//! edges, cross routing over negative edges.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::graph::NormalizedGraph;
use crate::lowrank::{rmp_apply, rmp_apply_adjoint, LowRankStore, MatrixId};
use crate::par;

/// The four signed operators a propagation pass multiplies by.
pub trait SignedOperators: Sync {
    fn n_u(&self) -> usize;
    fn n_v(&self) -> usize;
    /// `op(id) · x`.
    fn apply(&self, id: MatrixId, x: &ArrayView2<f64>) -> Result<Array2<f64>>;
    /// `op(id)ᵀ · g`.
    fn apply_adjoint(&self, id: MatrixId, g: &ArrayView2<f64>) -> Result<Array2<f64>>;
}

impl SignedOperators for NormalizedGraph {
    fn n_u(&self) -> usize {
        self.n_u
    }

    fn n_v(&self) -> usize {
        self.n_v
    }

    fn apply(&self, id: MatrixId, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        id.matrix(self).matmul(x)
    }

    fn apply_adjoint(&self, id: MatrixId, g: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let m = match id {
            MatrixId::RtPos => &self.r_pos,
            MatrixId::RtNeg => &self.r_neg,
            MatrixId::QtPos => &self.q_pos,
            MatrixId::QtNeg => &self.q_neg,
        };
        m.matmul(g)
    }
}

impl SignedOperators for LowRankStore {
    fn n_u(&self) -> usize {
        self.get(MatrixId::RtPos).map(|f| f.cols()).unwrap_or(0)
    }

    fn n_v(&self) -> usize {
        self.get(MatrixId::RtPos).map(|f| f.rows()).unwrap_or(0)
    }

    fn apply(&self, id: MatrixId, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        rmp_apply(self.get(id)?, x)
    }

    fn apply_adjoint(&self, id: MatrixId, g: &ArrayView2<f64>) -> Result<Array2<f64>> {
        rmp_apply_adjoint(self.get(id)?, g)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub injection_ratio: f64,
    /// One weight per layer `0..=layers`.
    pub layer_weights: Vec<f64>,
    pub use_spmp: bool,
    pub use_rmp: bool,
}

impl EncoderConfig {
    /// Both encoders on, uniform layer weights `1/(L+1)`.
    pub fn new(layers: usize, injection_ratio: f64) -> Self {
        Self {
            layers,
            injection_ratio,
            layer_weights: uniform_weights(layers),
            use_spmp: true,
            use_rmp: true,
        }
    }

    pub fn with_encoders(mut self, use_spmp: bool, use_rmp: bool) -> Self {
        self.use_spmp = use_spmp;
        self.use_rmp = use_rmp;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_weights.len() != self.layers + 1 {
            return Err(Error::InvalidConfig(format!(
                "expected {} layer weights, got {}",
                self.layers + 1,
                self.layer_weights.len()
            )));
        }
        if self
            .layer_weights
            .iter()
            .any(|&w| !(w.is_finite() && w >= 0.0))
        {
            return Err(Error::InvalidConfig(
                "layer weights must be finite and non-negative".into(),
            ));
        }
        // c = 0 is accepted here for pure-averaging experiments.
        if !(0.0..=1.0).contains(&self.injection_ratio) {
            return Err(Error::InvalidConfig(format!(
                "injection ratio must lie in [0, 1], got {}",
                self.injection_ratio
            )));
        }
        if !self.use_spmp && !self.use_rmp {
            return Err(Error::InvalidConfig(
                "at least one encoder must be enabled".into(),
            ));
        }
        Ok(())
    }

    /// Number of encoders contributing to the final representation.
    pub fn active_encoders(&self) -> usize {
        self.use_spmp as usize + self.use_rmp as usize
    }
}

pub fn uniform_weights(layers: usize) -> Vec<f64> {
    vec![1.0 / (layers + 1) as f64; layers + 1]
}

/// `concat(P, M)` for each node part.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenEmbeddings {
    pub h_u: Array2<f64>,
    pub h_v: Array2<f64>,
}

/// Positive and negative embeddings of both parts at one layer.
#[derive(Clone, Debug)]
struct LayerState {
    p_u: Array2<f64>,
    m_u: Array2<f64>,
    p_v: Array2<f64>,
    m_v: Array2<f64>,
}

fn check_shape(context: &'static str, x: &ArrayView2<f64>, rows: usize, cols: usize) -> Result<()> {
    if x.dim() != (rows, cols) {
        return Err(Error::ShapeMismatch {
            context,
            expected: (rows, cols),
            actual: x.dim(),
        });
    }
    Ok(())
}

/// `(1-c)(first · a + second · b)`.
fn signed_pair<O: SignedOperators + ?Sized>(
    ops: &O,
    first: MatrixId,
    a: &ArrayView2<f64>,
    second: MatrixId,
    b: &ArrayView2<f64>,
    keep: f64,
) -> Result<Array2<f64>> {
    let mut out = ops.apply(first, a)?;
    out += &ops.apply(second, b)?;
    out *= keep;
    Ok(out)
}

fn signed_pair_adjoint<O: SignedOperators + ?Sized>(
    ops: &O,
    first: MatrixId,
    a: &ArrayView2<f64>,
    second: MatrixId,
    b: &ArrayView2<f64>,
    keep: f64,
) -> Result<Array2<f64>> {
    let mut out = ops.apply_adjoint(first, a)?;
    out += &ops.apply_adjoint(second, b)?;
    out *= keep;
    Ok(out)
}

/// One U→V step on arbitrary operators.
pub fn step_u_to_v<O: SignedOperators + ?Sized>(
    ops: &O,
    p_u: &ArrayView2<f64>,
    m_u: &ArrayView2<f64>,
    x_v: &ArrayView2<f64>,
    c: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let d = x_v.ncols();
    check_shape("U->V positive input", p_u, ops.n_u(), d)?;
    check_shape("U->V negative input", m_u, ops.n_u(), d)?;
    check_shape("V features", x_v, ops.n_v(), d)?;
    let keep = 1.0 - c;
    let (p_v, m_v) = par::join(
        || signed_pair(ops, MatrixId::RtPos, p_u, MatrixId::RtNeg, m_u, keep),
        || signed_pair(ops, MatrixId::RtNeg, p_u, MatrixId::RtPos, m_u, keep),
    );
    let mut p_v = p_v?;
    p_v.scaled_add(c, x_v);
    Ok((p_v, m_v?))
}

/// One V→U step on arbitrary operators.
pub fn step_v_to_u<O: SignedOperators + ?Sized>(
    ops: &O,
    p_v: &ArrayView2<f64>,
    m_v: &ArrayView2<f64>,
    x_u: &ArrayView2<f64>,
    c: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let d = x_u.ncols();
    check_shape("V->U positive input", p_v, ops.n_v(), d)?;
    check_shape("V->U negative input", m_v, ops.n_v(), d)?;
    check_shape("U features", x_u, ops.n_u(), d)?;
    let keep = 1.0 - c;
    let (p_u, m_u) = par::join(
        || signed_pair(ops, MatrixId::QtPos, p_v, MatrixId::QtNeg, m_v, keep),
        || signed_pair(ops, MatrixId::QtNeg, p_v, MatrixId::QtPos, m_v, keep),
    );
    let mut p_u = p_u?;
    p_u.scaled_add(c, x_u);
    Ok((p_u, m_u?))
}

pub fn spmp_step_u_to_v(
    ng: &NormalizedGraph,
    p_u: &ArrayView2<f64>,
    m_u: &ArrayView2<f64>,
    x_v: &ArrayView2<f64>,
    c: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    step_u_to_v(ng, p_u, m_u, x_v, c)
}

pub fn spmp_step_v_to_u(
    ng: &NormalizedGraph,
    p_v: &ArrayView2<f64>,
    m_v: &ArrayView2<f64>,
    x_u: &ArrayView2<f64>,
    c: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    step_v_to_u(ng, p_v, m_v, x_u, c)
}

/// Runs `cfg.layers` simultaneous updates and returns the aggregated,
/// concatenated embeddings. Only the running aggregate and the current
/// layer are held in memory.
pub fn propagate<O: SignedOperators + ?Sized>(
    ops: &O,
    x_u: &ArrayView2<f64>,
    x_v: &ArrayView2<f64>,
    cfg: &EncoderConfig,
) -> Result<HiddenEmbeddings> {
    cfg.validate()?;
    let d = x_u.ncols();
    check_shape("U features", x_u, ops.n_u(), d)?;
    check_shape("V features", x_v, ops.n_v(), d)?;
    let c = cfg.injection_ratio;
    let w0 = cfg.layer_weights[0];

    let mut state = LayerState {
        p_u: x_u.to_owned(),
        m_u: x_u.to_owned(),
        p_v: x_v.to_owned(),
        m_v: x_v.to_owned(),
    };
    let mut agg = LayerState {
        p_u: x_u.to_owned() * w0,
        m_u: x_u.to_owned() * w0,
        p_v: x_v.to_owned() * w0,
        m_v: x_v.to_owned() * w0,
    };
    for &w in &cfg.layer_weights[1..] {
        let (to_v, to_u) = par::join(
            || step_u_to_v(ops, &state.p_u.view(), &state.m_u.view(), x_v, c),
            || step_v_to_u(ops, &state.p_v.view(), &state.m_v.view(), x_u, c),
        );
        let (p_v, m_v) = to_v?;
        let (p_u, m_u) = to_u?;
        state = LayerState { p_u, m_u, p_v, m_v };
        agg.p_u.scaled_add(w, &state.p_u);
        agg.m_u.scaled_add(w, &state.m_u);
        agg.p_v.scaled_add(w, &state.p_v);
        agg.m_v.scaled_add(w, &state.m_v);
    }
    Ok(HiddenEmbeddings {
        h_u: concatenate![Axis(1), agg.p_u, agg.m_u],
        h_v: concatenate![Axis(1), agg.p_v, agg.m_v],
    })
}

/// Adjoint of [`propagate`] for fixed operators: maps gradients of the
/// hidden embeddings (`|U|×2d`, `|V|×2d`) to gradients of `X_U`, `X_V`.
///
/// The encoder is linear in `X`, so no forward state is needed. The
/// backward sweep carries the adjoint of each layer's state, applying the
/// transposed operators and adding `α_l · G` as it passes layer `l`.
pub fn propagate_vjp<O: SignedOperators + ?Sized>(
    ops: &O,
    grad_h_u: &ArrayView2<f64>,
    grad_h_v: &ArrayView2<f64>,
    cfg: &EncoderConfig,
) -> Result<(Array2<f64>, Array2<f64>)> {
    cfg.validate()?;
    let two_d = grad_h_u.ncols();
    if !two_d.is_multiple_of(2) {
        return Err(Error::ShapeMismatch {
            context: "hidden gradient width must be even",
            expected: (ops.n_u(), two_d + 1),
            actual: grad_h_u.dim(),
        });
    }
    let d = two_d / 2;
    check_shape("U hidden gradient", grad_h_u, ops.n_u(), two_d)?;
    check_shape("V hidden gradient", grad_h_v, ops.n_v(), two_d)?;
    let c = cfg.injection_ratio;
    let keep = 1.0 - c;
    let g = LayerState {
        p_u: grad_h_u.slice(s![.., ..d]).to_owned(),
        m_u: grad_h_u.slice(s![.., d..]).to_owned(),
        p_v: grad_h_v.slice(s![.., ..d]).to_owned(),
        m_v: grad_h_v.slice(s![.., d..]).to_owned(),
    };
    let layers = cfg.layers;
    let wl = cfg.layer_weights[layers];
    let mut lam = LayerState {
        p_u: &g.p_u * wl,
        m_u: &g.m_u * wl,
        p_v: &g.p_v * wl,
        m_v: &g.m_v * wl,
    };
    let mut grad_x_u = Array2::zeros((ops.n_u(), d));
    let mut grad_x_v = Array2::zeros((ops.n_v(), d));
    for l in (1..=layers).rev() {
        grad_x_u.scaled_add(c, &lam.p_u);
        grad_x_v.scaled_add(c, &lam.p_v);
        let ((p_u, m_u), (p_v, m_v)) = par::join(
            || {
                par::join(
                    || {
                        signed_pair_adjoint(
                            ops,
                            MatrixId::RtPos,
                            &lam.p_v.view(),
                            MatrixId::RtNeg,
                            &lam.m_v.view(),
                            keep,
                        )
                    },
                    || {
                        signed_pair_adjoint(
                            ops,
                            MatrixId::RtNeg,
                            &lam.p_v.view(),
                            MatrixId::RtPos,
                            &lam.m_v.view(),
                            keep,
                        )
                    },
                )
            },
            || {
                par::join(
                    || {
                        signed_pair_adjoint(
                            ops,
                            MatrixId::QtPos,
                            &lam.p_u.view(),
                            MatrixId::QtNeg,
                            &lam.m_u.view(),
                            keep,
                        )
                    },
                    || {
                        signed_pair_adjoint(
                            ops,
                            MatrixId::QtNeg,
                            &lam.p_u.view(),
                            MatrixId::QtPos,
                            &lam.m_u.view(),
                            keep,
                        )
                    },
                )
            },
        );
        let w = cfg.layer_weights[l - 1];
        let mut next = LayerState {
            p_u: p_u?,
            m_u: m_u?,
            p_v: p_v?,
            m_v: m_v?,
        };
        next.p_u.scaled_add(w, &g.p_u);
        next.m_u.scaled_add(w, &g.m_u);
        next.p_v.scaled_add(w, &g.p_v);
        next.m_v.scaled_add(w, &g.m_v);
        lam = next;
    }
    // P⁽⁰⁾ = M⁽⁰⁾ = X
    grad_x_u += &lam.p_u;
    grad_x_u += &lam.m_u;
    grad_x_v += &lam.p_v;
    grad_x_v += &lam.m_v;
    Ok((grad_x_u, grad_x_v))
}

pub fn spmp_encode(
    ng: &NormalizedGraph,
    x_u: &ArrayView2<f64>,
    x_v: &ArrayView2<f64>,
    cfg: &EncoderConfig,
) -> Result<HiddenEmbeddings> {
    propagate(ng, x_u, x_v, cfg)
}

pub fn rmp_encode(
    store: &LowRankStore,
    x_u: &ArrayView2<f64>,
    x_v: &ArrayView2<f64>,
    cfg: &EncoderConfig,
) -> Result<HiddenEmbeddings> {
    for id in MatrixId::ALL {
        store.get(id)?;
    }
    propagate(store, x_u, x_v, cfg)
}

/// Final node representations `Z = concat(H, Ĥ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FinalRepresentations {
    pub z_u: Array2<f64>,
    pub z_v: Array2<f64>,
}

/// Concatenates the enabled encoders' outputs, SPMP block first. A single
/// enabled encoder passes through unchanged.
pub fn combine_final(
    h_spmp: Option<HiddenEmbeddings>,
    h_rmp: Option<HiddenEmbeddings>,
) -> Result<FinalRepresentations> {
    match (h_spmp, h_rmp) {
        (Some(a), Some(b)) => {
            if a.h_u.dim() != b.h_u.dim() || a.h_v.dim() != b.h_v.dim() {
                return Err(Error::ShapeMismatch {
                    context: "combine_final",
                    expected: a.h_u.dim(),
                    actual: b.h_u.dim(),
                });
            }
            Ok(FinalRepresentations {
                z_u: concatenate![Axis(1), a.h_u, b.h_u],
                z_v: concatenate![Axis(1), a.h_v, b.h_v],
            })
        }
        (Some(h), None) | (None, Some(h)) => Ok(FinalRepresentations {
            z_u: h.h_u,
            z_v: h.h_v,
        }),
        (None, None) => Err(Error::InvalidConfig("no encoder output to combine".into())),
    }
}

/// The composite linear map `X ↦ Z` with its adjoint.
#[derive(Clone, Copy, Debug)]
pub struct Encoder<'a> {
    pub graph: &'a NormalizedGraph,
    pub store: Option<&'a LowRankStore>,
    pub cfg: &'a EncoderConfig,
}

impl<'a> Encoder<'a> {
    pub fn new(
        graph: &'a NormalizedGraph,
        store: Option<&'a LowRankStore>,
        cfg: &'a EncoderConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if cfg.use_rmp && store.is_none() {
            return Err(Error::MissingFactors(MatrixId::RtPos));
        }
        Ok(Self { graph, store, cfg })
    }

    fn store(&self) -> Result<&'a LowRankStore> {
        self.store.ok_or(Error::MissingFactors(MatrixId::RtPos))
    }

    /// Width of `Z` for input feature width `d`.
    pub fn output_width(&self, d: usize) -> usize {
        2 * d * self.cfg.active_encoders()
    }

    pub fn encode(
        &self,
        x_u: &ArrayView2<f64>,
        x_v: &ArrayView2<f64>,
    ) -> Result<FinalRepresentations> {
        let (h_spmp, h_rmp) = par::join(
            || {
                self.cfg
                    .use_spmp
                    .then(|| spmp_encode(self.graph, x_u, x_v, self.cfg))
                    .transpose()
            },
            || {
                if self.cfg.use_rmp {
                    rmp_encode(self.store()?, x_u, x_v, self.cfg).map(Some)
                } else {
                    Ok(None)
                }
            },
        );
        combine_final(h_spmp?, h_rmp?)
    }

    pub fn vjp(
        &self,
        grad_z_u: &ArrayView2<f64>,
        grad_z_v: &ArrayView2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let width = grad_z_u.ncols();
        let blocks = self.cfg.active_encoders();
        if !width.is_multiple_of(2 * blocks) || grad_z_v.ncols() != width {
            return Err(Error::ShapeMismatch {
                context: "encoder gradient width",
                expected: (self.graph.n_u, width - width % (2 * blocks)),
                actual: grad_z_u.dim(),
            });
        }
        let h = width / blocks;
        let (spmp_part, rmp_part) = if self.cfg.use_spmp && self.cfg.use_rmp {
            ((0, h), Some((h, 2 * h)))
        } else {
            ((0, h), None)
        };
        let mut grads = Vec::with_capacity(2);
        if self.cfg.use_spmp {
            let (a, b) = spmp_part;
            grads.push(propagate_vjp(
                self.graph,
                &grad_z_u.slice(s![.., a..b]),
                &grad_z_v.slice(s![.., a..b]),
                self.cfg,
            )?);
        }
        if self.cfg.use_rmp {
            let (a, b) = rmp_part.unwrap_or(spmp_part);
            grads.push(propagate_vjp(
                self.store()?,
                &grad_z_u.slice(s![.., a..b]),
                &grad_z_v.slice(s![.., a..b]),
                self.cfg,
            )?);
        }
        let mut it = grads.into_iter();
        let (mut gu, mut gv) = it.next().expect("at least one encoder");
        for (u, v) in it {
            gu += &u;
            gv += &v;
        }
        Ok((gu, gv))
    }
}

/// Gradient of `Z` mapped back to `(grad X_U, grad X_V)`.
pub fn encoder_vjp(
    ng: &NormalizedGraph,
    store: Option<&LowRankStore>,
    cfg: &EncoderConfig,
    grad_z_u: &ArrayView2<f64>,
    grad_z_v: &ArrayView2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    Encoder::new(ng, store, cfg)?.vjp(grad_z_u, grad_z_v)
}
