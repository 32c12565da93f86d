//! Dense brute-force oracles for checking the sparse production kernels.
//!
//! Nothing here depends on `signlink-core`; graphs come in as plain edge
//! triples and every operator is materialized densely. Sizes are capped so
//! test runtimes stay small.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};

/// Largest dimension accepted by [`dense_exact_svd`].
pub const SVD_MAX_DIM: usize = 200;
/// Largest input accepted by [`pairwise_auc`].
pub const AUC_MAX_LEN: usize = 1000;

/// Dense signed biadjacency with its row-normalized transposes.
#[derive(Clone, Debug)]
pub struct DenseGraph {
    pub n_u: usize,
    pub n_v: usize,
    /// |U|×|V| 0/1 per sign.
    pub r_pos: Array2<f64>,
    pub r_neg: Array2<f64>,
    /// (D_U⁻¹ R^s)ᵀ, |V|×|U|.
    pub rt_pos: Array2<f64>,
    pub rt_neg: Array2<f64>,
    /// (D_V⁻¹ Rᵀ^s)ᵀ, |U|×|V|.
    pub qt_pos: Array2<f64>,
    pub qt_neg: Array2<f64>,
}

impl DenseGraph {
    /// `edges` are `(u, v, sign)` with sign `+1` or `-1`.
    pub fn from_edges(n_u: usize, n_v: usize, edges: &[(usize, usize, i8)]) -> Self {
        let mut r_pos = Array2::zeros((n_u, n_v));
        let mut r_neg = Array2::zeros((n_u, n_v));
        for &(u, v, s) in edges {
            if s > 0 {
                r_pos[[u, v]] = 1.0;
            } else {
                r_neg[[u, v]] = 1.0;
            }
        }
        let total = &r_pos + &r_neg;
        let deg_u: Vec<f64> = total.rows().into_iter().map(|r| r.sum()).collect();
        let deg_v: Vec<f64> = total.columns().into_iter().map(|c| c.sum()).collect();
        let normalize = |a: &Array2<f64>, deg: &[f64]| {
            let mut out = a.clone();
            for (mut row, &d) in out.rows_mut().into_iter().zip(deg) {
                if d == 0.0 {
                    row.fill(0.0);
                } else {
                    row /= d;
                }
            }
            out
        };
        let q_pos = r_pos.t().to_owned();
        let q_neg = r_neg.t().to_owned();
        Self {
            n_u,
            n_v,
            rt_pos: normalize(&r_pos, &deg_u).t().to_owned(),
            rt_neg: normalize(&r_neg, &deg_u).t().to_owned(),
            qt_pos: normalize(&q_pos, &deg_v).t().to_owned(),
            qt_neg: normalize(&q_neg, &deg_v).t().to_owned(),
            r_pos,
            r_neg,
        }
    }

    pub fn operators(&self) -> DenseOperators {
        DenseOperators {
            rt_pos: self.rt_pos.clone(),
            rt_neg: self.rt_neg.clone(),
            qt_pos: self.qt_pos.clone(),
            qt_neg: self.qt_neg.clone(),
        }
    }
}

/// Four explicit dense operators: `rt_*` map U-features to V, `qt_*` map
/// V-features to U.
#[derive(Clone, Debug)]
pub struct DenseOperators {
    pub rt_pos: Array2<f64>,
    pub rt_neg: Array2<f64>,
    pub qt_pos: Array2<f64>,
    pub qt_neg: Array2<f64>,
}

impl DenseOperators {
    /// Replaces each operator by its best rank-`k` approximation computed
    /// with [`dense_exact_svd`].
    pub fn truncated(&self, k: usize) -> Self {
        let t = |a: &Array2<f64>| dense_exact_svd(&a.view()).expect("small").reconstruct(k);
        Self {
            rt_pos: t(&self.rt_pos),
            rt_neg: t(&self.rt_neg),
            qt_pos: t(&self.qt_pos),
            qt_neg: t(&self.qt_neg),
        }
    }
}

/// Hidden embeddings `(concat(P_U, M_U), concat(P_V, M_V))`.
pub type DenseHidden = (Array2<f64>, Array2<f64>);

/// The signed personalized recurrence with dense products. Every layer is
/// kept and aggregated at the end.
pub fn dense_propagate(
    ops: &DenseOperators,
    x_u: &ArrayView2<f64>,
    x_v: &ArrayView2<f64>,
    layers: usize,
    c: f64,
    weights: &[f64],
) -> DenseHidden {
    assert_eq!(weights.len(), layers + 1);
    let mut p_u = vec![x_u.to_owned()];
    let mut m_u = vec![x_u.to_owned()];
    let mut p_v = vec![x_v.to_owned()];
    let mut m_v = vec![x_v.to_owned()];
    for l in 1..=layers {
        let (pu, mu, pv, mv) = (&p_u[l - 1], &m_u[l - 1], &p_v[l - 1], &m_v[l - 1]);
        let new_pv = (ops.rt_pos.dot(pu) + ops.rt_neg.dot(mu)) * (1.0 - c) + &(x_v.to_owned() * c);
        let new_mv = (ops.rt_neg.dot(pu) + ops.rt_pos.dot(mu)) * (1.0 - c);
        let new_pu = (ops.qt_pos.dot(pv) + ops.qt_neg.dot(mv)) * (1.0 - c) + &(x_u.to_owned() * c);
        let new_mu = (ops.qt_neg.dot(pv) + ops.qt_pos.dot(mv)) * (1.0 - c);
        p_u.push(new_pu);
        m_u.push(new_mu);
        p_v.push(new_pv);
        m_v.push(new_mv);
    }
    let agg = |xs: &[Array2<f64>]| {
        xs.iter()
            .zip(weights)
            .fold(Array2::zeros(xs[0].raw_dim()), |acc, (x, &w)| acc + x * w)
    };
    (
        concatenate![Axis(1), agg(&p_u), agg(&m_u)],
        concatenate![Axis(1), agg(&p_v), agg(&m_v)],
    )
}

pub fn uniform_weights(layers: usize) -> Vec<f64> {
    vec![1.0 / (layers + 1) as f64; layers + 1]
}

/// Dense transcription of the original-graph encoder.
pub fn dense_spmp(
    g: &DenseGraph,
    x_u: &ArrayView2<f64>,
    x_v: &ArrayView2<f64>,
    layers: usize,
    c: f64,
    weights: &[f64],
) -> DenseHidden {
    dense_propagate(&g.operators(), x_u, x_v, layers, c, weights)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TooLarge {
    pub rows: usize,
    pub cols: usize,
}

/// Thin SVD `A = U diag(σ) Vᵀ` with `σ` sorted non-increasing.
#[derive(Clone, Debug)]
pub struct DenseSvd {
    pub u: Array2<f64>,
    pub sigma: Array1<f64>,
    pub v: Array2<f64>,
}

impl DenseSvd {
    /// Best rank-`k` approximation.
    pub fn reconstruct(&self, k: usize) -> Array2<f64> {
        let k = k.min(self.sigma.len());
        let mut out = Array2::zeros((self.u.nrows(), self.v.nrows()));
        for j in 0..k {
            let uj = self.u.column(j);
            let vj = self.v.column(j);
            for r in 0..out.nrows() {
                for c in 0..out.ncols() {
                    out[[r, c]] += self.sigma[j] * uj[r] * vj[c];
                }
            }
        }
        out
    }

    /// `‖A − A_k‖_F` from the discarded singular values.
    pub fn tail_error(&self, k: usize) -> f64 {
        self.sigma.iter().skip(k).map(|s| s * s).sum::<f64>().sqrt()
    }
}

/// One-sided Jacobi (Hestenes) SVD. Exact to rounding for the sizes used
/// in tests.
pub fn dense_exact_svd(a: &ArrayView2<f64>) -> Result<DenseSvd, TooLarge> {
    let (rows, cols) = a.dim();
    if rows > SVD_MAX_DIM || cols > SVD_MAX_DIM {
        return Err(TooLarge { rows, cols });
    }
    if rows < cols {
        let t = dense_exact_svd(&a.t())?;
        return Ok(DenseSvd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    let n = cols;
    let mut w = a.to_owned();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha: f64 = w.column(p).iter().map(|x| x * x).sum();
                let beta: f64 = w.column(q).iter().map(|x| x * x).sum();
                let gamma: f64 = w
                    .column(p)
                    .iter()
                    .zip(w.column(q))
                    .map(|(x, y)| x * y)
                    .sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for r in 0..rows {
                    let (x, y) = (w[[r, p]], w[[r, q]]);
                    w[[r, p]] = cs * x - sn * y;
                    w[[r, q]] = sn * x + cs * y;
                }
                for r in 0..n {
                    let (x, y) = (v[[r, p]], v[[r, q]]);
                    v[[r, p]] = cs * x - sn * y;
                    v[[r, q]] = sn * x + cs * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n)
        .map(|j| w.column(j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let scale = norms.iter().cloned().fold(0.0, f64::max);
    let mut u = Array2::<f64>::zeros((rows, n));
    let mut vs = Array2::<f64>::zeros((n, n));
    let mut sigma = Array1::<f64>::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        sigma[dst] = norms[src];
        vs.column_mut(dst).assign(&v.column(src));
        if norms[src] > 1e-14 * scale.max(1e-300) {
            u.column_mut(dst).assign(&(&w.column(src) / norms[src]));
        }
    }
    complete_orthonormal(&mut u, &sigma, scale);
    Ok(DenseSvd { u, sigma, v: vs })
}

/// Fills columns belonging to zero singular values with an orthonormal
/// completion (classical Gram-Schmidt against the standard basis).
fn complete_orthonormal(u: &mut Array2<f64>, sigma: &Array1<f64>, scale: f64) {
    let rows = u.nrows();
    let mut basis = 0;
    for j in 0..u.ncols() {
        if sigma[j] > 1e-14 * scale.max(1e-300) {
            continue;
        }
        while basis < rows {
            let mut cand = Array1::<f64>::zeros(rows);
            cand[basis] = 1.0;
            basis += 1;
            for _ in 0..2 {
                for k in 0..u.ncols() {
                    if k == j {
                        continue;
                    }
                    let col = u.column(k);
                    let dot = col.dot(&cand);
                    cand.scaled_add(-dot, &col);
                }
            }
            let norm = cand.dot(&cand).sqrt();
            if norm > 1e-8 {
                u.column_mut(j).assign(&(cand / norm));
                break;
            }
        }
    }
}

/// Central-difference gradient of `f` at `theta0`. With `coords`, only
/// those coordinates are probed (others are left at zero).
pub fn finite_diff_grad<F>(
    mut f: F,
    theta0: &[f64],
    step: f64,
    coords: Option<&[usize]>,
) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..theta0.len()).collect();
            &all
        }
    };
    let mut grad = vec![0.0; theta0.len()];
    let mut theta = theta0.to_vec();
    for &i in coords {
        theta[i] = theta0[i] + step;
        let plus = f(&theta);
        theta[i] = theta0[i] - step;
        let minus = f(&theta);
        theta[i] = theta0[i];
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// `|a − b| / max(1, |a|, |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// AUC by enumerating every (positive, negative) pair; ties count 1/2.
/// `None` when a class is missing or the input exceeds [`AUC_MAX_LEN`].
pub fn pairwise_auc(scores: &[f64], labels: &[f64]) -> Option<f64> {
    if scores.len() != labels.len() || scores.len() > AUC_MAX_LEN {
        return None;
    }
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y > 0.5)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y <= 0.5)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut credit = 0.0;
    for &p in &pos {
        for &n in &neg {
            credit += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(credit / (pos.len() * neg.len()) as f64)
}
