//! Randomized invariants for metrics, splits, ingestion and normalization.

mod common;

use std::collections::HashSet;
use std::io::Cursor;
use std::path::Path;

use proptest::prelude::*;
use signlink_core::data::{
    load_edge_list, read_edge_list, split, synth_graph, write_edge_list, SplitFractions,
};
use signlink_core::graph::{build_graph, normalize, Sign, SignedEdge};
use signlink_core::metrics::{auc_roc, f1_suite};
use signlink_core::sparse::CsrMatrix;
use signlink_core::Error;
use signlink_reference::pairwise_auc;

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..200).prop_flat_map(|n| {
        (
            // coarse grid so ties are common
            prop::collection::vec((0u32..20).prop_map(|k| k as f64 / 19.0), n),
            prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1.0 } else { 0.0 }), n),
        )
    })
}

fn signed_edges() -> impl Strategy<Value = (usize, usize, Vec<SignedEdge>)> {
    (1usize..12, 1usize..12).prop_flat_map(|(n_u, n_v)| {
        prop::collection::btree_map((0..n_u, 0..n_v), prop::bool::ANY, 0..=(n_u * n_v)).prop_map(
            move |m| {
                let edges = m
                    .into_iter()
                    .map(|((u, v), pos)| {
                        SignedEdge::new(u, v, if pos { Sign::Positive } else { Sign::Negative })
                    })
                    .collect();
                (n_u, n_v, edges)
            },
        )
    })
}

proptest! {
    #[test]
    fn auc_agrees_with_pair_enumeration((s, y) in scored_labels()) {
        match pairwise_auc(&s, &y) {
            Some(expected) => prop_assert!((auc_roc(&s, &y).unwrap() - expected).abs() <= 1e-12),
            None => prop_assert!(matches!(auc_roc(&s, &y), Err(Error::DegenerateLabels))),
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transform((s, y) in scored_labels(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        prop_assume!(pairwise_auc(&s, &y).is_some());
        let t: Vec<f64> = s.iter().map(|x| (a * x + b).exp()).collect();
        prop_assert!((auc_roc(&s, &y).unwrap() - auc_roc(&t, &y).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn auc_label_swap_symmetry((s, y) in scored_labels()) {
        prop_assume!(pairwise_auc(&s, &y).is_some());
        let swapped: Vec<f64> = y.iter().map(|l| 1.0 - l).collect();
        prop_assert!((auc_roc(&s, &y).unwrap() + auc_roc(&s, &swapped).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn f1_scores_are_bounded((s, y) in scored_labels()) {
        let (binary, macro_f1, micro) = f1_suite(&s, &y, 0.5).unwrap();
        for v in [binary, macro_f1, micro] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        // micro-F1 equals accuracy for single-label binary prediction
        let acc = s.iter().zip(&y).filter(|(p, l)| ((**p >= 0.5) as u8 as f64) == **l).count() as f64 / s.len() as f64;
        prop_assert!((micro - acc).abs() <= 1e-12);
    }

    #[test]
    fn split_partitions_edges(m in 0usize..300, seed in any::<u64>()) {
        let ds = synth_graph(30, 30, m, 0.8, seed).unwrap();
        let sp = split(&ds, SplitFractions::default(), seed).unwrap();
        prop_assert_eq!(sp.train.len(), (0.85 * m as f64).floor() as usize);
        prop_assert_eq!(sp.val.len(), (0.05 * m as f64).floor() as usize);
        prop_assert_eq!(sp.train.len() + sp.val.len() + sp.test.len(), m);
        let pairs = |e: &[SignedEdge]| e.iter().map(|x| (x.u, x.v)).collect::<HashSet<_>>();
        let (tr, va, te) = (pairs(&sp.train), pairs(&sp.val), pairs(&sp.test));
        prop_assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
        let mut all: Vec<_> = sp.train.iter().chain(&sp.val).chain(&sp.test).copied().collect();
        let mut orig = ds.edges.clone();
        all.sort_by_key(|e| (e.u, e.v));
        orig.sort_by_key(|e| (e.u, e.v));
        prop_assert_eq!(all, orig);
        prop_assert_eq!(split(&ds, SplitFractions::default(), seed).unwrap(), sp);
    }

    #[test]
    fn training_graph_excludes_held_out_edges(m in 10usize..200, seed in any::<u64>()) {
        let ds = synth_graph(20, 20, m, 0.7, seed).unwrap();
        let sp = split(&ds, SplitFractions::default(), seed).unwrap();
        let g = build_graph(&sp.train, 20, 20).unwrap();
        prop_assert_eq!(g.num_edges(), sp.train.len());
        for e in sp.val.iter().chain(&sp.test) {
            prop_assert_eq!(g.r_pos.get(e.u, e.v), 0.0);
            prop_assert_eq!(g.r_neg.get(e.u, e.v), 0.0);
        }
    }

    #[test]
    fn normalized_rows_are_stochastic((n_u, n_v, edges) in signed_edges()) {
        let g = build_graph(&edges, n_u, n_v).unwrap();
        let ng = normalize(&g);
        let deg_u = g.degrees_u();
        let rt_sum = ng.rt_pos.to_dense() + ng.rt_neg.to_dense();
        for (u, col) in rt_sum.columns().into_iter().enumerate() {
            let mass: f64 = col.sum();
            let expected = if deg_u[u] > 0 { 1.0 } else { 0.0 };
            prop_assert!((mass - expected).abs() <= 1e-12);
        }
        let deg_v = g.degrees_v();
        let qt_sum = ng.qt_pos.to_dense() + ng.qt_neg.to_dense();
        for (v, col) in qt_sum.columns().into_iter().enumerate() {
            let expected = if deg_v[v] > 0 { 1.0 } else { 0.0 };
            prop_assert!((col.sum() - expected).abs() <= 1e-12);
        }
        let (p, n) = (ng.rt_pos.to_dense(), ng.rt_neg.to_dense());
        prop_assert!(p.iter().zip(n.iter()).all(|(a, b)| *a == 0.0 || *b == 0.0));
        prop_assert!(p.iter().chain(n.iter()).all(|&x| x >= 0.0));
    }

    #[test]
    fn transpose_round_trip((n_u, n_v, edges) in signed_edges()) {
        let t: Vec<_> = edges.iter().map(|e| (e.u, e.v, (e.u * 31 + e.v) as f64 + 0.5)).collect();
        let a = CsrMatrix::from_triplets(n_u, n_v, &t).unwrap();
        prop_assert_eq!(a.transpose().transpose(), a.clone());
        prop_assert_eq!(a.transpose().to_dense(), a.to_dense().t().to_owned());
    }

    #[test]
    fn ingestion_round_trip(m in 0usize..100, seed in any::<u64>()) {
        let ds = synth_graph(15, 12, m, 0.6, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("edges.tsv");
        write_edge_list(&ds, &path).unwrap();
        let back = load_edge_list(&path).unwrap();
        let raw = |d: &signlink_core::data::RawDataset| {
            let mut v: Vec<_> = d.raw_edges().map(|(a, b, s)| (a.to_string(), b.to_string(), s)).collect();
            v.sort_by(|x, y| (&x.0, &x.1).cmp(&(&y.0, &y.1)));
            v
        };
        prop_assert_eq!(raw(&back), raw(&ds));
        prop_assert_eq!(back.stats().n_edges, m);
    }
}

#[test]
fn synthetic_sign_fraction_within_three_sigma() {
    let (m, p) = (20_000usize, 0.8);
    let ds = synth_graph(400, 400, m, p, 11).unwrap();
    let pos = ds.edges.iter().filter(|e| e.sign == Sign::Positive).count() as f64;
    let sigma = (m as f64 * p * (1.0 - p)).sqrt();
    assert!((pos - m as f64 * p).abs() <= 3.0 * sigma);
    assert_eq!((ds.n_u(), ds.n_v()), (400, 400));
    assert!(matches!(
        synth_graph(2, 2, 5, 0.5, 0),
        Err(Error::TooManyEdges { .. })
    ));
}

#[test]
fn malformed_lines_are_reported_with_position() {
    let p = Path::new("bad.tsv");
    let e = read_edge_list(Cursor::new("a\tb\t1\nc\td\t2\n"), "bad", p).unwrap_err();
    assert!(matches!(e, Error::InvalidSign { line: 2, .. }));
    let e = read_edge_list(Cursor::new("# header\na\tb\n"), "bad", p).unwrap_err();
    assert!(matches!(e, Error::Parse { line: 2, .. }));
    let e = read_edge_list(Cursor::new("a b 1\na b -1\n"), "bad", p).unwrap_err();
    assert!(matches!(e, Error::DuplicatePair { line: 2, .. }));
    let ok = read_edge_list(Cursor::new(""), "empty", p).unwrap();
    assert_eq!(ok.stats().n_edges, 0);
}
