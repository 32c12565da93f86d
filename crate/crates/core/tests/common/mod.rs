#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use signlink_core::graph::{build_graph, normalize, NormalizedGraph, Sign, SignedEdge};
use signlink_reference::DenseGraph;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random signed bipartite graph; each cell holds an edge with probability `density`.
pub fn random_edges(rng: &mut ChaCha8Rng, n_u: usize, n_v: usize, density: f64) -> Vec<SignedEdge> {
    let mut edges = Vec::new();
    for u in 0..n_u {
        for v in 0..n_v {
            if rng.random_bool(density) {
                let sign = if rng.random_bool(0.6) {
                    Sign::Positive
                } else {
                    Sign::Negative
                };
                edges.push(SignedEdge::new(u, v, sign));
            }
        }
    }
    edges
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

pub fn triples(edges: &[SignedEdge]) -> Vec<(usize, usize, i8)> {
    edges.iter().map(|e| (e.u, e.v, e.sign.as_i8())).collect()
}

pub struct Case {
    pub n_u: usize,
    pub n_v: usize,
    pub edges: Vec<SignedEdge>,
    pub ng: NormalizedGraph,
    pub dense: DenseGraph,
}

pub fn case(n_u: usize, n_v: usize, edges: Vec<SignedEdge>) -> Case {
    let ng = normalize(&build_graph(&edges, n_u, n_v).unwrap());
    let dense = DenseGraph::from_edges(n_u, n_v, &triples(&edges));
    Case {
        n_u,
        n_v,
        edges,
        ng,
        dense,
    }
}

pub fn random_case(rng: &mut ChaCha8Rng, max_nodes: usize) -> Case {
    let n_u = rng.random_range(1..=max_nodes / 2);
    let n_v = rng.random_range(1..=max_nodes - n_u);
    let density = rng.random_range(0.1..0.7);
    let edges = random_edges(rng, n_u, n_v, density);
    case(n_u, n_v, edges)
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
