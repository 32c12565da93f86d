use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use signlink_core::data::{load_edge_list, DatasetStats, RawDataset};
use signlink_core::metrics::EvalReport;
use signlink_core::model::{write_checkpoint, Ablation, EpochLog, HyperParams, SelectMetric};
use signlink_core::pipeline::{
    bench_scaling, sweep, train_seeds, BenchConfig, BenchRow, SeedOutcome, Summary, SweepGrid,
    SweepRow, DEFAULT_SEEDS,
};
use signlink_core::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "signlink",
    version,
    about = "Link-sign prediction on signed bipartite graphs"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SIGNLINK_THREADS")]
    threads: Option<usize>,
    /// Run everything on a single thread.
    #[arg(long, global = true, env = "SIGNLINK_DETERMINISTIC")]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print node, edge and sign counts of an edge list.
    Stats {
        #[arg(long, env = "SIGNLINK_DATASET")]
        dataset: PathBuf,
        /// Also write stats.csv here.
        #[arg(long, env = "SIGNLINK_OUTDIR")]
        outdir: Option<PathBuf>,
    },
    /// Train and test one configuration over several seeds.
    Train(TrainArgs),
    /// Grid search; test metrics are reported for the selected cell only.
    Sweep(SweepArgs),
    /// Time preprocessing and training epochs on synthetic graphs.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, env = "SIGNLINK_DATASET")]
    dataset: PathBuf,
    #[arg(long, env = "SIGNLINK_OUTDIR")]
    outdir: PathBuf,
    /// Split/initialization seed; repeat for several runs (default 0..4).
    #[arg(long = "seed", env = "SIGNLINK_SEEDS", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Flat `key = value` file; flags and env vars take precedence.
    #[arg(long, env = "SIGNLINK_CONFIG")]
    config: Option<PathBuf>,
    /// Directory for cached SVD factors.
    #[arg(long, env = "SIGNLINK_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    #[command(flatten)]
    hp: HpArgs,
}

#[derive(Args, Debug, Default)]
struct HpArgs {
    #[arg(long, env = "SIGNLINK_LAYERS")]
    layers: Option<usize>,
    #[arg(long, env = "SIGNLINK_INJECTION_RATIO")]
    injection_ratio: Option<f64>,
    #[arg(long, env = "SIGNLINK_RANK_RATIO")]
    rank_ratio: Option<f64>,
    #[arg(long, env = "SIGNLINK_FINAL_DIM")]
    final_dim: Option<usize>,
    #[arg(long, env = "SIGNLINK_EPOCHS")]
    epochs: Option<usize>,
    #[arg(long, env = "SIGNLINK_LR")]
    lr: Option<f64>,
    #[arg(long, env = "SIGNLINK_WEIGHT_DECAY")]
    weight_decay: Option<f64>,
    #[arg(long, env = "SIGNLINK_MLP_HIDDEN")]
    mlp_hidden: Option<usize>,
    /// full, no-rmp or no-spmp.
    #[arg(long, env = "SIGNLINK_ABLATION")]
    ablation: Option<Ablation>,
    /// Validation metric used to pick the epoch snapshot and sweep cell.
    #[arg(long, env = "SIGNLINK_METRIC")]
    metric: Option<SelectMetric>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Continue with the remaining seeds after a failure.
    #[arg(long, env = "SIGNLINK_KEEP_GOING")]
    keep_going: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', env = "SIGNLINK_GRID_RANK_RATIOS")]
    grid_rank_ratios: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', env = "SIGNLINK_GRID_INJECTION_RATIOS")]
    grid_injection_ratios: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', env = "SIGNLINK_GRID_LAYERS")]
    grid_layers: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, env = "SIGNLINK_OUTDIR")]
    outdir: PathBuf,
    /// Edge counts, ascending.
    #[arg(long, value_delimiter = ',', default_value = "10000,20000,40000,80000")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    avg_degree: usize,
    #[arg(long, default_value_t = 32)]
    rank: usize,
    #[arg(long, default_value_t = 3)]
    layers: usize,
    #[arg(long, default_value_t = 32)]
    final_dim: usize,
    /// Timed epochs per size.
    #[arg(long, default_value_t = 15)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::NumericFailure(_)) => EXIT_NUMERIC,
        Some(err) if err.is_data_error() => EXIT_DATA,
        Some(_) => EXIT_USAGE,
        None => EXIT_USAGE,
    }
}

fn run(cli: Cli) -> Result<()> {
    let threads = if cli.deterministic {
        Some(1)
    } else {
        cli.threads
    };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Stats { dataset, outdir } => cmd_stats(&dataset, outdir.as_deref()),
        Command::Train(args) => cmd_train(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn load(path: &Path) -> Result<RawDataset> {
    load_edge_list(path).with_context(|| format!("loading {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path)
        .map_err(Error::from)
        .with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn cmd_stats(dataset: &Path, outdir: Option<&Path>) -> Result<()> {
    let st = load(dataset)?.stats();
    println!("{st}");
    println!("{}", DatasetStats::CSV_HEADER);
    println!("{}", st.csv_row());
    if let Some(dir) = outdir {
        fs::create_dir_all(dir).map_err(Error::from)?;
        let mut w = create(&dir.join("stats.csv"))?;
        writeln!(w, "{}", DatasetStats::CSV_HEADER)?;
        writeln!(w, "{}", st.csv_row())?;
        w.flush()?;
    }
    Ok(())
}

/// Defaults, then the config file, then flags (or their env vars).
fn resolve_hp(args: &RunArgs) -> Result<HyperParams> {
    let mut hp = HyperParams::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(Error::from)
            .with_context(|| format!("reading {}", path.display()))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected `key = value`", path.display(), i + 1);
            };
            if !hp.set(key.trim(), value.trim())? {
                bail!("{}:{}: unknown key `{}`", path.display(), i + 1, key.trim());
            }
        }
    }
    let h = &args.hp;
    macro_rules! apply {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = h.$flag.clone() {
                hp.$field = v;
            }
        )*};
    }
    apply!(layers => layers, injection_ratio => injection_ratio, rank_ratio => rank_ratio,
        final_dim => final_dim, epochs => epochs, lr => learning_rate, weight_decay => weight_decay,
        mlp_hidden => mlp_hidden, ablation => ablation, metric => metric);
    hp.validate()?;
    Ok(hp)
}

fn seeds(args: &RunArgs) -> Vec<u64> {
    if args.seeds.is_empty() {
        DEFAULT_SEEDS.to_vec()
    } else {
        args.seeds.clone()
    }
}

/// Writes the resolved configuration before any work starts.
fn write_config(
    dir: &Path,
    command: &str,
    args: &RunArgs,
    hp: &HyperParams,
    extra: &[(&str, String)],
) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(Error::from)
        .with_context(|| format!("creating {}", dir.display()))?;
    let mut w = create(&dir.join("config.txt"))?;
    writeln!(w, "command = {command}")?;
    writeln!(w, "dataset = {}", args.dataset.display())?;
    let seeds: Vec<String> = seeds(args).iter().map(u64::to_string).collect();
    writeln!(w, "seeds = {}", seeds.join(","))?;
    for (k, v) in hp.entries() {
        if k != "seed" {
            writeln!(w, "{k} = {v}")?;
        }
    }
    for (k, v) in extra {
        writeln!(w, "{k} = {v}")?;
    }
    w.flush()?;
    Ok(())
}

const REPORT_HEADER: &str =
    "seed,k,best_epoch,auc,binary_f1,macro_f1,micro_f1,n_pos,n_neg,threshold";

fn report_row(seed: u64, k: usize, best_epoch: usize, r: &EvalReport) -> String {
    format!("{seed},{k},{best_epoch},{}", r.csv_row())
}

fn write_seed_outputs(dir: &Path, o: &SeedOutcome, hp: &HyperParams) -> Result<()> {
    let mut w = create(&dir.join(format!("log_seed{}.csv", o.seed)))?;
    writeln!(w, "{}", EpochLog::CSV_HEADER)?;
    for row in &o.fit.log {
        writeln!(w, "{}", row.csv_row())?;
    }
    w.flush()?;
    let hp = HyperParams {
        seed: o.seed,
        ..hp.clone()
    };
    write_checkpoint(
        &dir.join(format!("checkpoint_seed{}.bin", o.seed)),
        &o.fit.model.params,
        &hp,
    )?;
    Ok(())
}

fn print_summary(label: &str, s: &Summary) {
    println!(
        "{label} over {} seed(s): AUC {:.4} ± {:.4}, Macro-F1 {:.4} ± {:.4}, Binary-F1 {:.4} ± {:.4}, Micro-F1 {:.4} ± {:.4}",
        s.n, s.auc.0, s.auc.1, s.macro_f1.0, s.macro_f1.1, s.binary_f1.0, s.binary_f1.1, s.micro_f1.0, s.micro_f1.1
    );
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let run = &args.run;
    let hp = resolve_hp(run)?;
    write_config(
        &run.outdir,
        "train",
        run,
        &hp,
        &[("keep_going", args.keep_going.to_string())],
    )?;
    let ds = load(&run.dataset)?;
    let seeds = seeds(run);
    let outcomes = train_seeds(&ds, &hp, &seeds, run.cache_dir.as_deref(), args.keep_going)?;

    let mut report = create(&run.outdir.join("report.csv"))?;
    writeln!(report, "{REPORT_HEADER}")?;
    let mut tests = Vec::new();
    let mut first_err = None;
    for (seed, outcome) in seeds.iter().zip(outcomes) {
        match outcome {
            Ok(o) => {
                write_seed_outputs(&run.outdir, &o, &hp)?;
                match &o.test {
                    Some(t) => {
                        writeln!(
                            report,
                            "{}",
                            report_row(o.seed, o.rank, o.fit.model.best_epoch, t)
                        )?;
                        eprintln!(
                            "seed {}: test AUC {:.4}, Macro-F1 {:.4} (best epoch {})",
                            o.seed, t.auc, t.macro_f1, o.fit.model.best_epoch
                        );
                        tests.push(t.clone());
                    }
                    None => eprintln!(
                        "seed {}: test split is empty or single-class; no metrics",
                        o.seed
                    ),
                }
            }
            Err(e) => {
                eprintln!("seed {seed}: failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    let summary = Summary::from_reports(&tests);
    writeln!(report)?;
    writeln!(report, "{}", Summary::CSV_HEADER)?;
    writeln!(report, "{}", summary.csv_row())?;
    report.flush()?;
    print_summary("test", &summary);
    match first_err {
        Some(e) if tests.is_empty() => Err(e.into()),
        _ => Ok(()),
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let run = &args.run;
    let hp = resolve_hp(run)?;
    let defaults = SweepGrid::default();
    let grid = SweepGrid {
        rank_ratios: args
            .grid_rank_ratios
            .clone()
            .unwrap_or(defaults.rank_ratios),
        injection_ratios: args
            .grid_injection_ratios
            .clone()
            .unwrap_or(defaults.injection_ratios),
        layers: args.grid_layers.clone().unwrap_or(defaults.layers),
    };
    let list = |v: &[String]| v.join(",");
    let extra = [
        (
            "grid_rank_ratios",
            list(
                &grid
                    .rank_ratios
                    .iter()
                    .map(f64::to_string)
                    .collect::<Vec<_>>(),
            ),
        ),
        (
            "grid_injection_ratios",
            list(
                &grid
                    .injection_ratios
                    .iter()
                    .map(f64::to_string)
                    .collect::<Vec<_>>(),
            ),
        ),
        (
            "grid_layers",
            list(&grid.layers.iter().map(usize::to_string).collect::<Vec<_>>()),
        ),
    ];
    write_config(&run.outdir, "sweep", run, &hp, &extra)?;
    let ds = load(&run.dataset)?;
    let seeds = seeds(run);
    let res = sweep(&ds, &hp, &grid, &seeds, run.cache_dir.as_deref(), hp.metric)?;

    let mut w = create(&run.outdir.join("grid.csv"))?;
    writeln!(w, "{}", SweepRow::CSV_HEADER)?;
    for row in &res.rows {
        writeln!(w, "{}", row.csv_row(&res.cells[row.cell]))?;
    }
    w.flush()?;
    let failed = res.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!(
            "{failed} of {} grid runs failed; see grid.csv",
            res.rows.len()
        );
    }

    let best = res.cells[res.best_cell];
    let best_hp = best.apply(&hp);
    let mut w = create(&run.outdir.join("best_config.txt"))?;
    write!(w, "{}", best_hp.to_config_string())?;
    writeln!(
        w,
        "mean_val_{} = {:.6}",
        hp.metric, res.cell_scores[res.best_cell]
    )?;
    w.flush()?;

    let mut report = create(&run.outdir.join("report.csv"))?;
    writeln!(report, "{REPORT_HEADER}")?;
    for row in res.rows.iter().filter(|r| r.cell == res.best_cell) {
        if let Some(t) = &row.test {
            writeln!(
                report,
                "{}",
                report_row(row.seed, row.rank, row.best_epoch, t)
            )?;
        }
    }
    writeln!(report)?;
    writeln!(report, "{}", Summary::CSV_HEADER)?;
    writeln!(report, "{}", res.best_test.csv_row())?;
    report.flush()?;
    println!(
        "selected rank_ratio={} injection_ratio={} layers={} (mean val {} {:.4})",
        best.rank_ratio,
        best.injection_ratio,
        best.layers,
        hp.metric,
        res.cell_scores[res.best_cell]
    );
    print_summary("test", &res.best_test);
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        sizes: args.sizes,
        avg_degree: args.avg_degree,
        rank: args.rank,
        layers: args.layers,
        final_dim: args.final_dim,
        epochs: args.epochs,
        seed: args.seed,
        ..BenchConfig::default()
    };
    fs::create_dir_all(&args.outdir).map_err(Error::from)?;
    let mut w = create(&args.outdir.join("config.txt"))?;
    writeln!(w, "command = bench\n{cfg:#?}")?;
    w.flush()?;
    let rows = bench_scaling(&cfg)?;
    let mut w = create(&args.outdir.join("bench.csv"))?;
    writeln!(w, "{}", BenchRow::CSV_HEADER)?;
    println!("{}", BenchRow::CSV_HEADER);
    for row in &rows {
        writeln!(w, "{}", row.csv_row())?;
        println!("{}", row.csv_row());
    }
    w.flush()?;
    for pair in rows.windows(2) {
        println!(
            "m {} -> {}: epoch time ratio {:.2}",
            pair[0].m,
            pair[1].m,
            pair[1].epoch_seconds / pair[0].epoch_seconds
        );
    }
    Ok(())
}
