//! Training behaviour, checkpointing and end-to-end determinism.

mod common;

use common::*;
use signlink_core::data::{split, synth_graph, SplitFractions};
use signlink_core::encoder::{Encoder, EncoderConfig};
use signlink_core::graph::{Sign, SignedEdge};
use signlink_core::model::{
    adam_step, backward, fit, forward, init_params, read_checkpoint, train_step, write_checkpoint,
    AdamState, HyperParams, ModelParams,
};
use signlink_core::pipeline::{run_seed, train_seeds};
use signlink_core::Error;

fn small_hp() -> HyperParams {
    HyperParams {
        final_dim: 8,
        epochs: 10,
        learning_rate: 1e-2,
        mlp_hidden: 8,
        ..HyperParams::default()
    }
}

#[test]
fn training_loss_decreases_on_toy_graph() {
    let mut r = rng(30);
    let c = case(8, 8, random_edges(&mut r, 8, 8, 0.5));
    let cfg = EncoderConfig::new(2, 0.15).with_encoders(true, false);
    let enc = Encoder::new(&c.ng, None, &cfg).unwrap();
    let hp = small_hp();
    let mut params = init_params(8, 8, 4, enc.output_width(4), 8, 0);
    let mut adam = AdamState::new(&params);
    let losses: Vec<f64> = (0..10)
        .map(|_| train_step(&enc, &mut params, &mut adam, &c.edges, &hp).unwrap())
        .collect();
    assert!(losses[9] < losses[0], "{losses:?}");
}

#[test]
fn regularization_pulls_toward_zero() {
    let mut r = rng(31);
    let c = case(4, 4, random_edges(&mut r, 4, 4, 0.6));
    let cfg = EncoderConfig::new(1, 0.15).with_encoders(true, false);
    let enc = Encoder::new(&c.ng, None, &cfg).unwrap();
    let base = init_params(4, 4, 2, enc.output_width(2), 4, 1);
    let wd = 0.5;

    // data term removed: what remains is the pull of the penalty alone
    let mut p = base.clone();
    let mut norms = vec![p.sum_of_squares()];
    for _ in 0..50 {
        let cache = forward(&enc, &p, &c.edges, wd).unwrap();
        let with = backward(&enc, &p, &cache, &c.edges, wd).unwrap();
        let without = backward(&enc, &p, &cache, &c.edges, 0.0).unwrap();
        let mut next = p.clone();
        for ((t, a), b) in next
            .tensors_mut()
            .into_iter()
            .zip(with.tensors())
            .zip(without.tensors())
        {
            for ((ti, ai), bi) in t.iter_mut().zip(a).zip(b) {
                *ti -= 0.1 * (ai - bi);
            }
        }
        p = next;
        norms.push(p.sum_of_squares());
    }
    assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");

    // with data present, a stronger penalty still ends at a smaller norm
    let run = |wd: f64| {
        let mut p = base.clone();
        let mut adam = AdamState::new(&p);
        for _ in 0..200 {
            let cache = forward(&enc, &p, &c.edges, wd).unwrap();
            let g = backward(&enc, &p, &cache, &c.edges, wd).unwrap();
            adam_step(&mut p, &g, &mut adam, 1e-2);
        }
        p.sum_of_squares()
    };
    assert!(run(1e-1) < run(0.0));
}

#[test]
fn fit_is_bitwise_deterministic() {
    let ds = synth_graph(30, 25, 200, 0.7, 4).unwrap();
    let sp = split(&ds, SplitFractions::default(), 3).unwrap();
    let hp = HyperParams {
        epochs: 5,
        ..small_hp()
    };
    let (_, a) = fit(&sp, ds.n_u(), ds.n_v(), &hp).unwrap();
    let (_, b) = fit(&sp, ds.n_u(), ds.n_v(), &hp).unwrap();
    let bits = |p: &ModelParams| p.to_flat().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.model.params), bits(&b.model.params));
    assert_eq!(a.log.len(), 5);
    assert_eq!(a.model.best_epoch, b.model.best_epoch);
}

#[test]
fn fit_rejects_empty_training_split() {
    let ds = synth_graph(3, 3, 1, 1.0, 0).unwrap();
    let sp = split(&ds, SplitFractions::default(), 0).unwrap();
    assert!(sp.train.is_empty());
    assert!(matches!(
        fit(&sp, 3, 3, &small_hp()),
        Err(Error::EmptySplit("train"))
    ));
}

#[test]
fn four_edge_graph_trains_one_epoch() {
    let mut ds = synth_graph(2, 2, 4, 1.0, 0).unwrap();
    ds.edges[1].sign = Sign::Negative;
    let sp = split(&ds, SplitFractions::default(), 0).unwrap();
    let hp = HyperParams {
        epochs: 1,
        ..HyperParams::default()
    };
    let (_, res) = fit(&sp, 2, 2, &hp).unwrap();
    assert_eq!(res.log.len(), 1);
    assert!(res.log[0].train_loss.is_finite());
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.bin");
    let hp = HyperParams::default();
    let params = init_params(7, 5, 8, 32, 32, 9);
    write_checkpoint(&path, &params, &hp).unwrap();
    let (header, back) = read_checkpoint(&path).unwrap();
    assert_eq!((header.n_u, header.n_v, header.d, header.h), (7, 5, 8, 32));
    assert_eq!(header.hp_digest, hp.digest());
    assert_eq!(back.to_flat(), params.to_flat());
}

#[test]
fn seed_runs_report_test_metrics() {
    let ds = synth_graph(40, 30, 400, 0.7, 1).unwrap();
    let hp = HyperParams {
        epochs: 3,
        ..small_hp()
    };
    let out = run_seed(&ds, &hp, 2, None).unwrap();
    let test = out.test.expect("both classes in test split");
    assert!((0.0..=1.0).contains(&test.auc));
    let all = train_seeds(&ds, &hp, &[0, 1], None, false).unwrap();
    assert_eq!(all.len(), 2);
    assert!(all.iter().all(|r| r.is_ok()));
}

#[test]
fn cached_factors_reproduce_fresh_run() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth_graph(20, 20, 150, 0.7, 2).unwrap();
    let hp = HyperParams {
        epochs: 2,
        ..small_hp()
    };
    let fresh = run_seed(&ds, &hp, 0, None).unwrap();
    let first = run_seed(&ds, &hp, 0, Some(dir.path())).unwrap();
    let cached = run_seed(&ds, &hp, 0, Some(dir.path())).unwrap();
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    for o in [&first, &cached] {
        assert_eq!(
            o.fit.model.params.to_flat(),
            fresh.fit.model.params.to_flat()
        );
    }
}

#[test]
fn negative_edge_only_graph_still_trains() {
    let edges = vec![
        SignedEdge::new(0, 0, Sign::Negative),
        SignedEdge::new(1, 1, Sign::Negative),
    ];
    let c = case(2, 2, edges);
    let cfg = EncoderConfig::new(2, 0.15).with_encoders(true, false);
    let enc = Encoder::new(&c.ng, None, &cfg).unwrap();
    let mut p = init_params(2, 2, 2, enc.output_width(2), 4, 0);
    let mut adam = AdamState::new(&p);
    let l0 = train_step(&enc, &mut p, &mut adam, &c.edges, &small_hp()).unwrap();
    let mut last = l0;
    for _ in 0..20 {
        last = train_step(&enc, &mut p, &mut adam, &c.edges, &small_hp()).unwrap();
    }
    assert!(last < l0);
}
