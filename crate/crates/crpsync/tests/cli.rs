//! End-to-end tests of the `crpsync` binary: every subcommand, the exit
//! code contract, idempotent caches, and the config/env override order.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn crpsync_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crpsync"))
        .current_dir(dir)
        .env_remove("CRPSYNC_CACHE_DIR")
        .args(args)
        .output()
        .expect("binary must spawn")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process must exit, not be killed")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Tempdir with `n_tickers` market CSVs under `data/`.
fn market_workspace(n_tickers: usize, n_days: usize, seed: u64) -> (TempDir, Vec<String>) {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    std::fs::create_dir(&data).unwrap();
    let tickers = common::market_csvs(&data, n_tickers, n_days, seed);
    (root, tickers)
}

fn files_sorted(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap_or_else(|e| panic!("read {}: {e}", dir.display()))
        .map(|entry| entry.unwrap().path())
        .collect();
    files.sort();
    files
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    files_sorted(dir)
        .into_iter()
        .map(|p| {
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect()
}

#[test]
fn ingest_caches_series_and_pairs_idempotently() {
    let (root, tickers) = market_workspace(3, 120, 1);
    let dir = root.path();
    assert_ok(&crpsync_in(dir, &["ingest", "--data-dir", "data"]));

    for t in &tickers {
        assert!(dir.join(format!("cache/series/{t}.crps")).exists());
    }
    let pairs = files_sorted(&dir.join("cache/pairs"));
    let names: Vec<String> = pairs
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["S01-S02.crpa", "S01-S03.crpa", "S02-S03.crpa"]);

    let before_series = snapshot(&dir.join("cache/series"));
    let before_pairs = snapshot(&dir.join("cache/pairs"));
    assert_ok(&crpsync_in(dir, &["ingest", "--data-dir", "data"]));
    assert_eq!(snapshot(&dir.join("cache/series")), before_series);
    assert_eq!(snapshot(&dir.join("cache/pairs")), before_pairs);

    let out = crpsync_in(dir, &["params", "--ticker", "S01"]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(stdout.contains("channel price"), "params output:\n{stdout}");
    assert!(stdout.contains("tau = "), "params output:\n{stdout}");
    assert!(stdout.contains("k = "), "params output:\n{stdout}");
}

#[test]
fn ingest_twelve_tickers_yields_sixty_six_pairs() {
    let (root, _) = market_workspace(12, 60, 2);
    assert_ok(&crpsync_in(root.path(), &["ingest", "--data-dir", "data"]));
    assert_eq!(files_sorted(&root.path().join("cache/pairs")).len(), 66);
}

#[test]
fn ingest_missing_ticker_exits_2_and_names_the_file() {
    let (root, _) = market_workspace(1, 40, 3);
    let out = crpsync_in(
        root.path(),
        &["ingest", "--data-dir", "data", "--tickers", "S01,S02"],
    );
    assert_eq!(exit_code(&out), 2);
    assert!(
        stderr_of(&out).contains("S02.csv"),
        "stderr must name the missing file:\n{}",
        stderr_of(&out)
    );
}

#[test]
fn build_rerun_is_byte_identical() {
    let (root, _) = market_workspace(3, 150, 4);
    let dir = root.path();
    assert_ok(&crpsync_in(dir, &["ingest", "--data-dir", "data"]));

    let build = ["build", "--w", "10", "--epsilon", "0.45", "--k", "1", "--tau", "1"];
    assert_ok(&crpsync_in(dir, &build));
    let dataset_dir = dir.join("cache/datasets/w10_eps0.45_k1_tau1");
    let before = snapshot(&dataset_dir);
    assert_eq!(before.len(), 3);

    assert_ok(&crpsync_in(dir, &build));
    assert_eq!(snapshot(&dataset_dir), before);
}

#[test]
fn build_rejects_window_beyond_series_length() {
    let (root, _) = market_workspace(2, 30, 5);
    let dir = root.path();
    assert_ok(&crpsync_in(dir, &["ingest", "--data-dir", "data"]));
    let out = crpsync_in(
        dir,
        &["build", "--w", "40", "--epsilon", "0.45", "--k", "1", "--tau", "1"],
    );
    assert_eq!(exit_code(&out), 2, "stderr:\n{}", stderr_of(&out));
}

#[test]
fn train_is_seed_deterministic_and_eval_writes_reports() {
    let (root, _) = market_workspace(3, 150, 6);
    let dir = root.path();
    assert_ok(&crpsync_in(dir, &["ingest", "--data-dir", "data"]));
    assert_ok(&crpsync_in(
        dir,
        &["build", "--w", "10", "--epsilon", "0.5", "--k", "1", "--tau", "1"],
    ));

    let dataset = "cache/datasets/w10_eps0.5_k1_tau1";
    for out_name in ["a.crpm", "b.crpm"] {
        assert_ok(&crpsync_in(
            dir,
            &[
                "train", "--dataset", dataset, "--epochs", "3", "--seed", "7", "--out", out_name,
            ],
        ));
    }
    let a = std::fs::read(dir.join("a.crpm")).unwrap();
    let b = std::fs::read(dir.join("b.crpm")).unwrap();
    assert_eq!(a, b, "same seed must give identical checkpoints");

    let out = crpsync_in(
        dir,
        &[
            "eval", "--model", "a.crpm", "--dataset", dataset, "--report", "report.csv",
        ],
    );
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(stdout.contains("F1") || stdout.contains("f1"), "eval output:\n{stdout}");

    let report = std::fs::read_to_string(dir.join("report.csv")).unwrap();
    assert!(report.contains("w,epsilon"), "report header missing:\n{report}");
    assert!(report.contains("10,0.5"), "grid cell missing:\n{report}");
    assert!(dir.join("report.full.csv").exists(), "full-precision sidecar missing");
}

#[test]
fn render_full_raw_toy_pair_matches_expected_pgm() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path();
    let data = dir.join("data");
    std::fs::create_dir(&data).unwrap();
    for (ticker, values) in [("A", &common::TOY_A), ("B", &common::TOY_B)] {
        let mut csv = String::from("date,adj_close,volume\n");
        for (date, v) in common::calendar(values.len()).iter().zip(values.iter()) {
            csv.push_str(&format!("{date},{v},1000\n"));
        }
        std::fs::write(data.join(format!("{ticker}.csv")), csv).unwrap();
    }
    assert_ok(&crpsync_in(
        dir,
        &["ingest", "--data-dir", "data", "--channels", "price"],
    ));
    assert_ok(&crpsync_in(
        dir,
        &[
            "render-crp", "--pair", "A-B", "--full", "--raw", "--epsilon", "0.5", "--k", "1",
            "--tau", "1", "--out", "toy.pgm",
        ],
    ));

    let na = common::naive_embed(&[common::TOY_A.to_vec()], 1, 1);
    let nb = common::naive_embed(&[common::TOY_B.to_vec()], 1, 1);
    let grid = common::naive_crp(&na, &nb, 0.5);
    let mut expected = b"P5\n10 10\n255\n".to_vec();
    for row in &grid {
        expected.extend(row.iter().map(|&bit| if bit { 0u8 } else { 255 }));
    }
    assert_eq!(std::fs::read(dir.join("toy.pgm")).unwrap(), expected);
}

#[test]
fn render_full_plot_has_published_scale_dimensions() {
    let (root, _) = market_workspace(2, 1741, 7);
    let dir = root.path();
    // price,volume keep all 1741 observations (the return channel would
    // drop the first), so the k = 2 embedding has exactly 1740 states.
    assert_ok(&crpsync_in(
        dir,
        &["ingest", "--data-dir", "data", "--channels", "price,volume"],
    ));
    assert_ok(&crpsync_in(
        dir,
        &[
            "render-crp", "--pair", "S01-S02", "--full", "--epsilon", "0.45", "--k", "2",
            "--tau", "1", "--out", "full.pgm",
        ],
    ));
    let bytes = std::fs::read(dir.join("full.pgm")).unwrap();
    let header = b"P5\n1740 1740\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len(), header.len() + 1740 * 1740);
}

#[test]
fn render_unknown_or_malformed_pair_exits_2() {
    let (root, _) = market_workspace(2, 40, 8);
    let dir = root.path();
    assert_ok(&crpsync_in(dir, &["ingest", "--data-dir", "data"]));

    let missing = crpsync_in(
        dir,
        &["render-crp", "--pair", "S01-ZZZ", "--full", "--out", "x.pgm"],
    );
    assert_eq!(exit_code(&missing), 2, "stderr:\n{}", stderr_of(&missing));

    let malformed = crpsync_in(
        dir,
        &["render-crp", "--pair", "S01S02", "--full", "--out", "x.pgm"],
    );
    assert_eq!(exit_code(&malformed), 2, "stderr:\n{}", stderr_of(&malformed));
}

#[test]
fn config_file_applies_and_env_overrides_cache_dir() {
    let (root, _) = market_workspace(2, 60, 9);
    let dir = root.path();
    std::fs::write(
        dir.join("crpsync.conf"),
        "# experiment layout\ndata_dir = data\ncache_dir = warehouse\n",
    )
    .unwrap();

    assert_ok(&crpsync_in(dir, &["--config", "crpsync.conf", "ingest"]));
    assert!(dir.join("warehouse/pairs/S01-S02.crpa").exists());

    let out = Command::new(env!("CARGO_BIN_EXE_crpsync"))
        .current_dir(dir)
        .env("CRPSYNC_CACHE_DIR", "elsewhere")
        .args(["--config", "crpsync.conf", "ingest"])
        .output()
        .unwrap();
    assert_ok(&out);
    assert!(
        dir.join("elsewhere/pairs/S01-S02.crpa").exists(),
        "CRPSYNC_CACHE_DIR must override the config file"
    );
}
