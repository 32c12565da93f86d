//! Signed biadjacency matrices and their row-semi-normalized transposes.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    /// Binary label used by the classifier: positive is 1.
    pub fn label(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => 0.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Positive => 1,
            Sign::Negative => -1,
        }
    }
}

/// An edge between node `u` of part U and node `v` of part V.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SignedEdge {
    pub u: usize,
    pub v: usize,
    pub sign: Sign,
}

impl SignedEdge {
    pub fn new(u: usize, v: usize, sign: Sign) -> Self {
        Self { u, v, sign }
    }
}

/// Per-sign 0/1 biadjacency matrices. `q_pos`/`q_neg` are the V→U views
/// and are always exact transposes of `r_pos`/`r_neg`.
#[derive(Clone, Debug)]
pub struct SignedBiadjacency {
    pub n_u: usize,
    pub n_v: usize,
    pub r_pos: CsrMatrix,
    pub r_neg: CsrMatrix,
    pub q_pos: CsrMatrix,
    pub q_neg: CsrMatrix,
}

pub fn build_graph(edges: &[SignedEdge], n_u: usize, n_v: usize) -> Result<SignedBiadjacency> {
    let mut seen = HashSet::with_capacity(edges.len());
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for e in edges {
        if e.u >= n_u {
            return Err(Error::IndexOutOfRange {
                what: "U",
                index: e.u,
                len: n_u,
            });
        }
        if e.v >= n_v {
            return Err(Error::IndexOutOfRange {
                what: "V",
                index: e.v,
                len: n_v,
            });
        }
        if !seen.insert((e.u, e.v)) {
            return Err(Error::DuplicateEdge { u: e.u, v: e.v });
        }
        match e.sign {
            Sign::Positive => pos.push((e.u, e.v, 1.0)),
            Sign::Negative => neg.push((e.u, e.v, 1.0)),
        }
    }
    let r_pos = CsrMatrix::from_triplets(n_u, n_v, &pos)?;
    let r_neg = CsrMatrix::from_triplets(n_u, n_v, &neg)?;
    let q_pos = r_pos.transpose();
    let q_neg = r_neg.transpose();
    Ok(SignedBiadjacency {
        n_u,
        n_v,
        r_pos,
        r_neg,
        q_pos,
        q_neg,
    })
}

impl SignedBiadjacency {
    pub fn num_edges(&self) -> usize {
        self.r_pos.nnz() + self.r_neg.nnz()
    }

    pub fn degrees_u(&self) -> Vec<usize> {
        row_degrees(&self.r_pos, &self.r_neg)
    }

    pub fn degrees_v(&self) -> Vec<usize> {
        row_degrees(&self.q_pos, &self.q_neg)
    }
}

fn row_degrees(a: &CsrMatrix, b: &CsrMatrix) -> Vec<usize> {
    (0..a.rows())
        .map(|r| a.row(r).0.len() + b.row(r).0.len())
        .collect()
}

fn inverse(degrees: &[usize]) -> Vec<f64> {
    degrees
        .iter()
        .map(|&d| if d == 0 { 0.0 } else { 1.0 / d as f64 })
        .collect()
}

/// Normalized operators used by message passing.
///
/// `rt_*` is `(D_U⁻¹ R^s)ᵀ` with shape |V|×|U| and `qt_*` is `(D_V⁻¹ Q^s)ᵀ`
/// with shape |U|×|V|. The untransposed forms are kept as well since the
/// adjoint pass multiplies by them.
#[derive(Clone, Debug)]
pub struct NormalizedGraph {
    pub n_u: usize,
    pub n_v: usize,
    pub rt_pos: CsrMatrix,
    pub rt_neg: CsrMatrix,
    pub qt_pos: CsrMatrix,
    pub qt_neg: CsrMatrix,
    pub r_pos: CsrMatrix,
    pub r_neg: CsrMatrix,
    pub q_pos: CsrMatrix,
    pub q_neg: CsrMatrix,
    pub degrees_u: Vec<usize>,
    pub degrees_v: Vec<usize>,
}

/// Divides every row by the node's total degree over both signs.
/// Isolated nodes get all-zero rows.
pub fn normalize(g: &SignedBiadjacency) -> NormalizedGraph {
    let degrees_u = g.degrees_u();
    let degrees_v = g.degrees_v();
    let inv_u = inverse(&degrees_u);
    let inv_v = inverse(&degrees_v);
    let r_pos = g.r_pos.scale_rows(&inv_u);
    let r_neg = g.r_neg.scale_rows(&inv_u);
    let q_pos = g.q_pos.scale_rows(&inv_v);
    let q_neg = g.q_neg.scale_rows(&inv_v);
    NormalizedGraph {
        n_u: g.n_u,
        n_v: g.n_v,
        rt_pos: r_pos.transpose(),
        rt_neg: r_neg.transpose(),
        qt_pos: q_pos.transpose(),
        qt_neg: q_neg.transpose(),
        r_pos,
        r_neg,
        q_pos,
        q_neg,
        degrees_u,
        degrees_v,
    }
}
