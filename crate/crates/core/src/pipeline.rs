//! End-to-end drivers: multi-seed training, grid sweeps and the scaling
//! benchmark.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use crate::data::{split, synth_graph, EdgeSplit, RawDataset, SplitFractions};
use crate::error::{Error, Result};
use crate::lowrank::target_rank;
use crate::metrics::{mean_std, EvalReport};
use crate::model::{
    evaluate_edges, fit_prepared, init_params, train_step, AdamState, FitResult, HyperParams,
    PreparedGraph, SelectMetric, INJECTION_RATIO_GRID, LAYER_GRID, RANK_RATIO_GRID,
};
use crate::par;

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// One seed of the protocol: split, train on the training graph, evaluate
/// the retained snapshot on validation and test.
#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub rank: usize,
    pub fit: FitResult,
    pub val: Option<EvalReport>,
    pub test: Option<EvalReport>,
    pub preprocess_seconds: f64,
    pub train_seconds: f64,
}

fn seeded(hp: &HyperParams, seed: u64) -> HyperParams {
    HyperParams { seed, ..hp.clone() }
}

/// Trains on an existing split and prepared graph.
pub fn run_prepared(
    prepared: &PreparedGraph,
    sp: &EdgeSplit,
    hp: &HyperParams,
) -> Result<SeedOutcome> {
    let start = Instant::now();
    let fit = fit_prepared(prepared, sp, hp)?;
    let train_seconds = start.elapsed().as_secs_f64();
    let cfg = hp.encoder_config();
    let enc = prepared.encoder(&cfg)?;
    let val = evaluate_edges(&enc, &fit.model.params, &sp.val)?;
    let test = evaluate_edges(&enc, &fit.model.params, &sp.test)?;
    Ok(SeedOutcome {
        seed: hp.seed,
        rank: prepared.rank,
        fit,
        val,
        test,
        preprocess_seconds: prepared.preprocess_seconds,
        train_seconds,
    })
}

/// Splits `ds` with `seed` and runs one seed of the protocol. The same seed
/// drives the split, the SVD test matrix and parameter initialization.
pub fn run_seed(
    ds: &RawDataset,
    hp: &HyperParams,
    seed: u64,
    cache_dir: Option<&Path>,
) -> Result<SeedOutcome> {
    let hp = seeded(hp, seed);
    hp.validate()?;
    let sp = split(ds, SplitFractions::default(), seed)?;
    if sp.train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let prepared = PreparedGraph::new(&sp, ds.n_u(), ds.n_v(), &hp, cache_dir)?;
    run_prepared(&prepared, &sp, &hp)
}

/// Mean and standard deviation of each test metric across seeds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub auc: (f64, f64),
    pub binary_f1: (f64, f64),
    pub macro_f1: (f64, f64),
    pub micro_f1: (f64, f64),
}

impl Summary {
    pub const CSV_HEADER: &'static str =
        "n,auc_mean,auc_std,binary_f1_mean,binary_f1_std,macro_f1_mean,macro_f1_std,micro_f1_mean,micro_f1_std";

    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a EvalReport>) -> Self {
        let reports: Vec<&EvalReport> = reports.into_iter().collect();
        let col =
            |f: fn(&EvalReport) -> f64| mean_std(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
        Self {
            n: reports.len(),
            auc: col(|r| r.auc),
            binary_f1: col(|r| r.binary_f1),
            macro_f1: col(|r| r.macro_f1),
            micro_f1: col(|r| r.micro_f1),
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.n,
            self.auc.0,
            self.auc.1,
            self.binary_f1.0,
            self.binary_f1.1,
            self.macro_f1.0,
            self.macro_f1.1,
            self.micro_f1.0,
            self.micro_f1.1
        )
    }
}

/// Runs every seed. Without `keep_going` the first failure aborts.
pub fn train_seeds(
    ds: &RawDataset,
    hp: &HyperParams,
    seeds: &[u64],
    cache_dir: Option<&Path>,
    keep_going: bool,
) -> Result<Vec<Result<SeedOutcome>>> {
    let mut out = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        match run_seed(ds, hp, seed, cache_dir) {
            Err(e) if !keep_going => return Err(e),
            r => out.push(r),
        }
    }
    Ok(out)
}

/// Hyperparameter grid over rank ratio, injection ratio and depth.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub rank_ratios: Vec<f64>,
    pub injection_ratios: Vec<f64>,
    pub layers: Vec<usize>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            rank_ratios: RANK_RATIO_GRID.to_vec(),
            injection_ratios: INJECTION_RATIO_GRID.to_vec(),
            layers: LAYER_GRID.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCell {
    pub rank_ratio: f64,
    pub injection_ratio: f64,
    pub layers: usize,
}

impl SweepGrid {
    pub fn cells(&self) -> Vec<GridCell> {
        let mut out = Vec::new();
        for &rank_ratio in &self.rank_ratios {
            for &injection_ratio in &self.injection_ratios {
                for &layers in &self.layers {
                    out.push(GridCell {
                        rank_ratio,
                        injection_ratio,
                        layers,
                    });
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.rank_ratios.len() * self.injection_ratios.len() * self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl GridCell {
    pub fn apply(&self, hp: &HyperParams) -> HyperParams {
        HyperParams {
            rank_ratio: self.rank_ratio,
            injection_ratio: self.injection_ratio,
            layers: self.layers,
            ..hp.clone()
        }
    }
}

/// One (cell, seed) run of a sweep.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub cell: usize,
    pub seed: u64,
    pub rank: usize,
    pub best_epoch: usize,
    pub val: Option<EvalReport>,
    pub test: Option<EvalReport>,
    pub error: Option<String>,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "rank_ratio,injection_ratio,layers,seed,k,best_epoch,val_auc,val_macro_f1,status";

    /// Grid CSV line. Test metrics are deliberately omitted.
    pub fn csv_row(&self, cell: &GridCell) -> String {
        let (auc, f1) = self
            .val
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |r| (r.auc, r.macro_f1));
        format!(
            "{},{},{},{},{},{},{:.6},{:.6},{}",
            cell.rank_ratio,
            cell.injection_ratio,
            cell.layers,
            self.seed,
            self.rank,
            self.best_epoch,
            auc,
            f1,
            self.error.as_deref().map_or("ok".to_string(), |e| format!(
                "error: {}",
                e.replace(',', ";")
            ))
        )
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub cells: Vec<GridCell>,
    pub rows: Vec<SweepRow>,
    /// Mean validation score per cell (NaN when every seed failed).
    pub cell_scores: Vec<f64>,
    pub best_cell: usize,
    /// Test metrics of the selected cell only.
    pub best_test: Summary,
    pub best_val: Summary,
}

/// Grid search. Splits and SVD factors are computed once per (seed, rank)
/// and shared by every cell that needs them; cells then run in parallel.
/// The winner maximizes the mean validation metric across seeds.
pub fn sweep(
    ds: &RawDataset,
    base: &HyperParams,
    grid: &SweepGrid,
    seeds: &[u64],
    cache_dir: Option<&Path>,
    metric: SelectMetric,
) -> Result<SweepResult> {
    if grid.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "sweep grid and seed list must be non-empty".into(),
        ));
    }
    let cells = grid.cells();
    let base = HyperParams {
        metric,
        ..base.clone()
    };
    let mut rows: Vec<SweepRow> = Vec::with_capacity(cells.len() * seeds.len());

    for &seed in seeds {
        let sp = split(ds, SplitFractions::default(), seed)?;
        // Factors depend on the split and the rank only.
        let mut by_rank: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut cell_rank = vec![0usize; cells.len()];
        let mut cell_err: Vec<Option<String>> = vec![None; cells.len()];
        for (i, cell) in cells.iter().enumerate() {
            match target_rank(ds.n_u(), ds.n_v(), cell.rank_ratio) {
                Ok(k) => {
                    cell_rank[i] = k;
                    by_rank.entry(k).or_default().push(i);
                }
                Err(e) => cell_err[i] = Some(e.to_string()),
            }
        }
        let mut seed_rows: Vec<Option<SweepRow>> = vec![None; cells.len()];
        for (&k, members) in &by_rank {
            let prepared = PreparedGraph::with_rank(
                &sp,
                ds.n_u(),
                ds.n_v(),
                base.ablation.encoders().1,
                k,
                cache_dir,
            );
            let prepared = match prepared {
                Ok(p) => p,
                Err(e) => {
                    for &i in members {
                        cell_err[i] = Some(e.to_string());
                    }
                    continue;
                }
            };
            let outcomes = par::map_indexed(members.len(), |j| {
                let hp = HyperParams {
                    seed,
                    ..cells[members[j]].apply(&base)
                };
                run_prepared(&prepared, &sp, &hp)
            });
            for (&i, outcome) in members.iter().zip(outcomes) {
                seed_rows[i] = Some(match outcome {
                    Ok(o) => SweepRow {
                        cell: i,
                        seed,
                        rank: k,
                        best_epoch: o.fit.model.best_epoch,
                        val: o.val,
                        test: o.test,
                        error: None,
                    },
                    Err(e) => SweepRow {
                        cell: i,
                        seed,
                        rank: k,
                        best_epoch: 0,
                        val: None,
                        test: None,
                        error: Some(e.to_string()),
                    },
                });
            }
        }
        for (i, row) in seed_rows.into_iter().enumerate() {
            rows.push(row.unwrap_or_else(|| SweepRow {
                cell: i,
                seed,
                rank: cell_rank[i],
                best_epoch: 0,
                val: None,
                test: None,
                error: cell_err[i].clone().or_else(|| Some("not run".into())),
            }));
        }
    }

    let cell_scores: Vec<f64> = (0..cells.len())
        .map(|i| {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.cell == i)
                .filter_map(|r| r.val.as_ref().map(|v| metric.pick(v)))
                .collect();
            if vals.len() < seeds.len() {
                f64::NAN
            } else {
                mean_std(&vals).0
            }
        })
        .collect();
    let best_cell = cell_scores
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_nan())
        .fold(None, |best: Option<(usize, f64)>, (i, &s)| match best {
            Some((_, b)) if b >= s => best,
            _ => Some((i, s)),
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidConfig("no sweep cell completed on every seed".into()))?;
    let best_rows: Vec<&SweepRow> = rows.iter().filter(|r| r.cell == best_cell).collect();
    let best_test = Summary::from_reports(best_rows.iter().filter_map(|r| r.test.as_ref()));
    let best_val = Summary::from_reports(best_rows.iter().filter_map(|r| r.val.as_ref()));
    Ok(SweepResult {
        cells,
        rows,
        cell_scores,
        best_cell,
        best_test,
        best_val,
    })
}

/// Settings for the synthetic scaling benchmark.
#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    /// Edges per node in each part; node counts grow with `m`.
    pub avg_degree: usize,
    pub pos_fraction: f64,
    pub rank: usize,
    pub layers: usize,
    pub final_dim: usize,
    /// Timed epochs per size (after one warm-up epoch); the median is kept.
    pub epochs: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![10_000, 20_000, 40_000, 80_000],
            avg_degree: 10,
            pos_fraction: 0.8,
            rank: 32,
            layers: 3,
            final_dim: 32,
            epochs: 15,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub m: usize,
    pub n_u: usize,
    pub n_v: usize,
    pub preprocess_seconds: f64,
    /// Median full-batch forward + backward + update time.
    pub epoch_seconds: f64,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "m,n_u,n_v,preprocess_seconds,epoch_seconds";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6}",
            self.m, self.n_u, self.n_v, self.preprocess_seconds, self.epoch_seconds
        )
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Times preprocessing and training epochs on synthetic graphs of growing
/// size. Preprocessing is reported separately from the epoch time.
pub fn bench_scaling(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig("bench sizes must be ascending".into()));
    }
    if cfg.epochs == 0 || cfg.avg_degree == 0 {
        return Err(Error::InvalidConfig(
            "bench needs at least one epoch and a positive degree".into(),
        ));
    }
    let hp = HyperParams {
        layers: cfg.layers,
        final_dim: cfg.final_dim,
        seed: cfg.seed,
        ..HyperParams::default()
    };
    hp.validate()?;
    let mut rows = Vec::with_capacity(cfg.sizes.len());
    for &m in &cfg.sizes {
        let n = (m / cfg.avg_degree).max(cfg.rank).max(1);
        let ds = synth_graph(n, n, m, cfg.pos_fraction, cfg.seed)?;
        let sp = split(
            &ds,
            SplitFractions {
                train: 1.0,
                val: 0.0,
                test: 0.0,
            },
            cfg.seed,
        )?;
        let prepared = PreparedGraph::with_rank(&sp, n, n, true, cfg.rank.min(n), None)?;
        let enc_cfg = hp.encoder_config();
        let enc = prepared.encoder(&enc_cfg)?;
        let d = hp.embedding_dim();
        let mut params = init_params(n, n, d, enc.output_width(d), hp.mlp_hidden, cfg.seed);
        let mut adam = AdamState::new(&params);
        train_step(&enc, &mut params, &mut adam, &sp.train, &hp)?;
        let mut times = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            let start = Instant::now();
            train_step(&enc, &mut params, &mut adam, &sp.train, &hp)?;
            times.push(start.elapsed().as_secs_f64());
        }
        rows.push(BenchRow {
            m,
            n_u: n,
            n_v: n,
            preprocess_seconds: prepared.preprocess_seconds,
            epoch_seconds: median(times),
        });
    }
    Ok(rows)
}
