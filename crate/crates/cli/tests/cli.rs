use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn signlink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_signlink"))
        .args(args)
        .env_clear()
        .output()
        .expect("spawn signlink")
}

fn toy(dir: &Path) -> String {
    let path = dir.join("toy.tsv");
    fs::write(&path, "a\tx\t1\na\ty\t-1\nb\tx\t1\nb\ty\t1\n").unwrap();
    path.to_str().unwrap().to_string()
}

fn synthetic(dir: &Path) -> String {
    // deterministic pseudo-random signed edges, about 70% positive
    let mut text = String::new();
    let mut state = 12345u64;
    for u in 0..30 {
        for v in 0..20 {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            if state >> 61 < 2 {
                let sign = if (state >> 40) % 10 < 7 { 1 } else { -1 };
                text.push_str(&format!("u{u}\tv{v}\t{sign}\n"));
            }
        }
    }
    let path = dir.join("synth.tsv");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn stats_on_empty_file_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.tsv");
    fs::write(&path, "").unwrap();
    let out = signlink(&["stats", "--dataset", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("empty,0,0,0,0,0,0.0,0.0"));
}

#[test]
fn train_one_epoch_on_four_edges() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let outdir = dir.path().join("out");
    let out = signlink(&[
        "train",
        "--dataset",
        &data,
        "--epochs",
        "1",
        "--seed",
        "0",
        "--outdir",
        outdir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let log = fs::read_to_string(outdir.join("log_seed0.csv")).unwrap();
    assert_eq!(log.lines().count(), 2);
    assert!(outdir.join("config.txt").is_file());
    assert!(outdir.join("checkpoint_seed0.bin").is_file());
    assert!(outdir.join("report.csv").is_file());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# tuned\nlayers = 4\nepochs = 3\ninjection_ratio = 0.45\n",
    )
    .unwrap();
    let outdir = dir.path().join("out");
    let out = signlink(&[
        "train",
        "--dataset",
        &data,
        "--config",
        cfg.to_str().unwrap(),
        "--epochs",
        "2",
        "--seed",
        "1",
        "--outdir",
        outdir.to_str().unwrap(),
        "--ablation",
        "no-rmp",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let resolved = fs::read_to_string(outdir.join("config.txt")).unwrap();
    for line in [
        "layers = 4",
        "epochs = 2",
        "injection_ratio = 0.45",
        "ablation = no-rmp",
        "seeds = 1",
    ] {
        assert!(
            resolved.lines().any(|l| l == line),
            "missing `{line}` in\n{resolved}"
        );
    }
    assert_eq!(
        fs::read_to_string(outdir.join("log_seed1.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
}

#[test]
fn env_vars_set_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let outdir = dir.path().join("out");
    let out = Command::new(env!("CARGO_BIN_EXE_signlink"))
        .args(["train", "--dataset", &data, "--seed", "0"])
        .env_clear()
        .env("SIGNLINK_EPOCHS", "1")
        .env("SIGNLINK_OUTDIR", &outdir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(fs::read_to_string(outdir.join("config.txt"))
        .unwrap()
        .contains("epochs = 1"));
}

#[test]
fn sweep_writes_one_row_per_cell_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path());
    let outdir = dir.path().join("sweep");
    let out = signlink(&[
        "sweep",
        "--dataset",
        &data,
        "--epochs",
        "2",
        "--seed",
        "0",
        "--seed",
        "1",
        "--grid-rank-ratios",
        "0.1,0.3",
        "--grid-injection-ratios",
        "0.15,1.0",
        "--grid-layers",
        "1,2",
        "--outdir",
        outdir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let grid = fs::read_to_string(outdir.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 8 * 2);
    assert!(!grid.lines().next().unwrap().contains("test"));
    assert!(outdir.join("best_config.txt").is_file());
}

#[test]
fn deterministic_runs_write_identical_results() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path());
    let run = |name: &str| {
        let outdir = dir.path().join(name);
        let out = signlink(&[
            "--deterministic",
            "train",
            "--dataset",
            &data,
            "--epochs",
            "3",
            "--seed",
            "2",
            "--outdir",
            outdir.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        outdir
    };
    let (a, b) = (run("a"), run("b"));
    for file in ["config.txt", "report.csv", "checkpoint_seed2.bin"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // usage
    assert_eq!(signlink(&["train", "--bogus"]).status.code(), Some(1));
    let data = toy(dir.path());
    let out = dir.path().join("o");
    let bad_ratio = signlink(&[
        "train",
        "--dataset",
        &data,
        "--rank-ratio",
        "1.5",
        "--outdir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(bad_ratio.status.code(), Some(1));
    // data
    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "a\tb\t1\nc\td\tmaybe\n").unwrap();
    let st = signlink(&["stats", "--dataset", bad.to_str().unwrap()]);
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("line 2"));
    let missing = signlink(&[
        "stats",
        "--dataset",
        dir.path().join("nope.tsv").to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(2));
    // numeric: an absurd learning rate drives the loss to NaN
    let data = synthetic(dir.path());
    let blowup = signlink(&[
        "train",
        "--dataset",
        &data,
        "--epochs",
        "50",
        "--lr",
        "1e300",
        "--seed",
        "0",
        "--outdir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        blowup.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&blowup.stderr)
    );
}

#[test]
fn bench_single_size_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = signlink(&[
        "bench",
        "--sizes",
        "500",
        "--rank",
        "4",
        "--epochs",
        "1",
        "--outdir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        fs::read_to_string(dir.path().join("bench.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );
}
