//! Rank-k truncated SVD of the normalized operators and the refined
//! message-passing product `U(Σ(Vᵀx))`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::NormalizedGraph;
use crate::par;
use crate::sparse::CsrMatrix;

pub const DEFAULT_OVERSAMPLE: usize = 10;
pub const DEFAULT_POWER_ITERS: usize = 2;

/// Identifies one of the four normalized transposed operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MatrixId {
    RtPos,
    RtNeg,
    QtPos,
    QtNeg,
}

impl MatrixId {
    pub const ALL: [MatrixId; 4] = [
        MatrixId::RtPos,
        MatrixId::RtNeg,
        MatrixId::QtPos,
        MatrixId::QtNeg,
    ];

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn matrix(self, ng: &NormalizedGraph) -> &CsrMatrix {
        match self {
            MatrixId::RtPos => &ng.rt_pos,
            MatrixId::RtNeg => &ng.rt_neg,
            MatrixId::QtPos => &ng.qt_pos,
            MatrixId::QtNeg => &ng.qt_neg,
        }
    }
}

/// Truncated SVD `A ≈ U diag(σ) Vᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdFactors {
    /// rows × k, orthonormal columns.
    pub u_mat: Array2<f64>,
    /// Non-increasing, non-negative.
    pub sigma: Array1<f64>,
    /// cols × k, orthonormal columns.
    pub v_mat: Array2<f64>,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn rows(&self) -> usize {
        self.u_mat.nrows()
    }

    pub fn cols(&self) -> usize {
        self.v_mat.nrows()
    }

    /// Dense `U diag(σ) Vᵀ`. Only for small matrices and tests.
    pub fn reconstruct(&self) -> Array2<f64> {
        let us = &self.u_mat * &self.sigma.view().insert_axis(Axis(0));
        us.dot(&self.v_mat.t())
    }
}

/// `k = max(1, floor(min(n_u, n_v) · r))`, clamped to `min(n_u, n_v)`.
pub fn target_rank(n_u: usize, n_v: usize, r: f64) -> Result<usize> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidRatio(r));
    }
    let n = n_u.min(n_v);
    if n == 0 {
        return Err(Error::InvalidConfig("graph has an empty node part".into()));
    }
    Ok(((n as f64 * r).floor() as usize).clamp(1, n))
}

fn to_na(a: &ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Orthonormal basis for the column space of `y` (Householder QR).
fn orthonormalize(y: &Array2<f64>) -> Array2<f64> {
    from_na(&to_na(&y.view()).qr().q())
}

fn identity_columns(rows: usize, k: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, k), |(i, j)| if i == j { 1.0 } else { 0.0 })
}

/// Randomized range finder with power iterations followed by an exact SVD
/// of the small projected matrix. Deterministic for a given `seed`.
pub fn randomized_svd(
    a: &CsrMatrix,
    k: usize,
    oversample: usize,
    power_iters: usize,
    seed: u64,
) -> Result<SvdFactors> {
    let (rows, cols) = a.shape();
    let max_rank = rows.min(cols);
    if k > max_rank {
        return Err(Error::RankTooLarge { k, max: max_rank });
    }
    if k == 0 || a.nnz() == 0 {
        return Ok(SvdFactors {
            u_mat: identity_columns(rows, k),
            sigma: Array1::zeros(k),
            v_mat: identity_columns(cols, k),
        });
    }
    let width = (k + oversample).min(max_rank);
    let at = a.transpose();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = Array2::from_shape_simple_fn((cols, width), || StandardNormal.sample(&mut rng));
    let mut q = orthonormalize(&a.matmul(&omega.view())?);
    for _ in 0..power_iters {
        let z = orthonormalize(&at.matmul(&q.view())?);
        q = orthonormalize(&a.matmul(&z.view())?);
    }

    // C = Aᵀ Q = (Qᵀ A)ᵀ, cols × width. Its SVD C = Uc Σ Wᵀ gives
    // Qᵀ A = W Σ Ucᵀ, hence A ≈ (Q W) Σ Ucᵀ.
    let c = at.matmul(&q.view())?;
    let svd = to_na(&c.view()).svd(true, true);
    let uc = svd.u.expect("requested U");
    let wt = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    order.truncate(k);

    let sigma = Array1::from_iter(order.iter().map(|&i| svd.singular_values[i].max(0.0)));
    let v_mat = Array2::from_shape_fn((cols, k), |(r, j)| uc[(r, order[j])]);
    let w = Array2::from_shape_fn((width, k), |(r, j)| wt[(order[j], r)]);
    let u_mat = q.dot(&w);
    Ok(SvdFactors {
        u_mat,
        sigma,
        v_mat,
    })
}

fn check_rows(f_rows: usize, x: &ArrayView2<f64>) -> Result<()> {
    if x.nrows() != f_rows {
        return Err(Error::ShapeMismatch {
            context: "refined message passing",
            expected: (f_rows, x.ncols()),
            actual: x.dim(),
        });
    }
    Ok(())
}

/// `U(Σ(Vᵀx))`, evaluated right to left so the dense rows×cols operator is
/// never formed.
pub fn rmp_apply(f: &SvdFactors, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
    check_rows(f.cols(), x)?;
    let mut t = f.v_mat.t().dot(x);
    t *= &f.sigma.view().insert_axis(Axis(1));
    Ok(f.u_mat.dot(&t))
}

/// Adjoint of [`rmp_apply`]: `V(Σ(Uᵀg))`.
pub fn rmp_apply_adjoint(f: &SvdFactors, g: &ArrayView2<f64>) -> Result<Array2<f64>> {
    check_rows(f.rows(), g)?;
    let mut t = f.u_mat.t().dot(g);
    t *= &f.sigma.view().insert_axis(Axis(1));
    Ok(f.v_mat.dot(&t))
}

/// Factors for all four operators at a shared rank.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankStore {
    rank: usize,
    factors: BTreeMap<MatrixId, SvdFactors>,
}

impl LowRankStore {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn get(&self, id: MatrixId) -> Result<&SvdFactors> {
        self.factors.get(&id).ok_or(Error::MissingFactors(id))
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Assembles a store from explicit factors; all must share one rank.
    pub fn from_factors(factors: BTreeMap<MatrixId, SvdFactors>) -> Result<Self> {
        let mut ranks = factors.values().map(SvdFactors::rank);
        let rank = ranks.next().unwrap_or(0);
        if ranks.any(|r| r != rank) {
            return Err(Error::InvalidConfig("factors disagree on rank".into()));
        }
        Ok(Self { rank, factors })
    }
}

fn factor_seed(seed: u64, id: MatrixId) -> u64 {
    seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(id.code() as u64 + 1))
}

/// Factorizes the four operators of `ng` at rank `k`.
pub fn preprocess(ng: &NormalizedGraph, k: usize, seed: u64) -> Result<LowRankStore> {
    let results = par::map_indexed(MatrixId::ALL.len(), |i| {
        let id = MatrixId::ALL[i];
        randomized_svd(
            id.matrix(ng),
            k,
            DEFAULT_OVERSAMPLE,
            DEFAULT_POWER_ITERS,
            factor_seed(seed, id),
        )
        .map(|f| (id, f))
    });
    let factors = results.into_iter().collect::<Result<BTreeMap<_, _>>>()?;
    LowRankStore::from_factors(factors)
}

const CACHE_MAGIC: &[u8; 8] = b"SLRKSVD\0";
const CACHE_VERSION: u32 = 1;

/// File name for a cached store keyed by graph digest, rank and seed.
pub fn cache_path(dir: &Path, graph_digest: u64, k: usize, seed: u64) -> PathBuf {
    dir.join(format!("svd_{graph_digest:016x}_k{k}_s{seed}.bin"))
}

fn write_u64(w: &mut impl Write, x: u64) -> std::io::Result<()> {
    w.write_all(&x.to_le_bytes())
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn write_f64s<'a>(w: &mut impl Write, xs: impl Iterator<Item = &'a f64>) -> std::io::Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> std::io::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

/// Layout: magic, version (u32), factor count (u32), then per factor
/// `{id: u8, rows, cols, k: u64}` followed by row-major little-endian
/// `f64` data for U, Σ and V.
pub fn write_store(path: &Path, store: &LowRankStore) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(&(store.factors.len() as u32).to_le_bytes())?;
    for (id, f) in &store.factors {
        w.write_all(&[id.code()])?;
        write_u64(&mut w, f.rows() as u64)?;
        write_u64(&mut w, f.cols() as u64)?;
        write_u64(&mut w, f.rank() as u64)?;
        write_f64s(&mut w, f.u_mat.iter())?;
        write_f64s(&mut w, f.sigma.iter())?;
        write_f64s(&mut w, f.v_mat.iter())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_store(path: &Path) -> Result<LowRankStore> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Format(format!(
            "{}: not an SVD cache file",
            path.display()
        )));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != CACHE_VERSION {
        return Err(Error::Format(format!(
            "unsupported SVD cache version {version}"
        )));
    }
    r.read_exact(&mut b4)?;
    let count = u32::from_le_bytes(b4);
    let mut factors = BTreeMap::new();
    for _ in 0..count {
        let mut code = [0u8; 1];
        r.read_exact(&mut code)?;
        let id = MatrixId::from_code(code[0])
            .ok_or_else(|| Error::Format(format!("unknown matrix id {}", code[0])))?;
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let k = read_u64(&mut r)? as usize;
        let u_mat = Array2::from_shape_vec((rows, k), read_f64s(&mut r, rows * k)?)
            .map_err(|e| Error::Format(e.to_string()))?;
        let sigma = Array1::from(read_f64s(&mut r, k)?);
        let v_mat = Array2::from_shape_vec((cols, k), read_f64s(&mut r, cols * k)?)
            .map_err(|e| Error::Format(e.to_string()))?;
        factors.insert(
            id,
            SvdFactors {
                u_mat,
                sigma,
                v_mat,
            },
        );
    }
    LowRankStore::from_factors(factors)
}

/// Loads the store from `dir` when a matching cache file exists, otherwise
/// computes and writes it.
pub fn preprocess_cached(
    ng: &NormalizedGraph,
    graph_digest: u64,
    k: usize,
    seed: u64,
    dir: &Path,
) -> Result<LowRankStore> {
    let path = cache_path(dir, graph_digest, k, seed);
    if path.exists() {
        let store = read_store(&path)?;
        if store.rank() == k && store.len() == MatrixId::ALL.len() {
            return Ok(store);
        }
    }
    let store = preprocess(ng, k, seed)?;
    std::fs::create_dir_all(dir)?;
    write_store(&path, &store)?;
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn target_rank_examples() {
        assert_eq!(target_rank(182, 304, 0.1).unwrap(), 18);
        assert_eq!(target_rank(10, 10, 0.05).unwrap(), 1);
        assert_eq!(target_rank(6040, 3706, 0.5).unwrap(), 1853);
        assert!(matches!(
            target_rank(5, 5, 1.0),
            Err(Error::InvalidRatio(_))
        ));
        assert!(matches!(
            target_rank(5, 5, 0.0),
            Err(Error::InvalidRatio(_))
        ));
    }

    #[test]
    fn rank_too_large() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0)]).unwrap();
        assert!(matches!(
            randomized_svd(&a, 3, 10, 2, 0),
            Err(Error::RankTooLarge { k: 3, max: 2 })
        ));
    }

    #[test]
    fn rank_one_exact() {
        let x = [1.0, -2.0, 0.5, 3.0];
        let y = [2.0, 1.0, -1.0];
        let mut t = Vec::new();
        for (i, a) in x.iter().enumerate() {
            for (j, b) in y.iter().enumerate() {
                t.push((i, j, a * b));
            }
        }
        let a = CsrMatrix::from_triplets(4, 3, &t).unwrap();
        let f = randomized_svd(&a, 1, 10, 2, 7).unwrap();
        let err = (&f.reconstruct() - &a.to_dense())
            .mapv(|v| v * v)
            .sum()
            .sqrt();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn diagonal_spectrum() {
        let a = CsrMatrix::from_triplets(5, 5, &[(0, 0, 3.0), (1, 1, 2.0), (2, 2, 1.0)]).unwrap();
        let f = randomized_svd(&a, 2, 10, 2, 1).unwrap();
        assert!((f.sigma[0] - 3.0).abs() < 1e-10);
        assert!((f.sigma[1] - 2.0).abs() < 1e-10);
        let err = (&f.reconstruct() - &a.to_dense())
            .mapv(|v| v * v)
            .sum()
            .sqrt();
        assert!((err - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_matrix_has_zero_spectrum() {
        let a = CsrMatrix::zeros(4, 3);
        let f = randomized_svd(&a, 2, 10, 2, 0).unwrap();
        assert!(f.sigma.iter().all(|&s| s == 0.0));
        assert_eq!(f.u_mat.t().dot(&f.u_mat), Array2::eye(2));
    }

    #[test]
    fn rmp_apply_zero_input_and_shape_check() {
        let a = CsrMatrix::from_triplets(3, 2, &[(0, 0, 1.0), (2, 1, 2.0)]).unwrap();
        let f = randomized_svd(&a, 2, 0, 0, 3).unwrap();
        let out = rmp_apply(&f, &Array2::zeros((2, 4)).view()).unwrap();
        assert_eq!(out, Array2::zeros((3, 4)));
        assert!(rmp_apply(&f, &Array2::zeros((3, 1)).view()).is_err());
        let x = array![[1.0], [1.0]];
        let y = rmp_apply(&f, &x.view()).unwrap();
        assert!((y[[2, 0]] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cache_round_trip() {
        let a = CsrMatrix::from_triplets(3, 4, &[(0, 0, 0.5), (1, 3, 0.25), (2, 1, 1.0)]).unwrap();
        let f = randomized_svd(&a, 2, 10, 2, 3).unwrap();
        let store =
            LowRankStore::from_factors(MatrixId::ALL.iter().map(|&id| (id, f.clone())).collect())
                .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = cache_path(dir.path(), 0xabc, 2, 3);
        write_store(&path, &store).unwrap();
        assert_eq!(read_store(&path).unwrap(), store);
    }
}
