//! End-to-end tests of the `bloomgate` binary: determinism, exit codes,
//! CSV outputs, and the no-partial-output guarantee.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bloomgate::bloom::BloomFilter;
use bloomgate::vectors::io::write_fvecs;
use bloomgate::vectors::FeatureVector;

fn bloomgate_bin() -> &'static str {
    env!("CARGO_BIN_EXE_bloomgate")
}

fn run(args: &[&str]) -> Output {
    Command::new(bloomgate_bin())
        .args(args)
        .output()
        .expect("spawn bloomgate")
}

fn run_ok(args: &[&str]) -> String {
    let output = run(args);
    assert!(
        output.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn path_str(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Synthesize a dataset and return (dir, base path, queries path).
fn synth_dataset(dir: &Path, clusters: usize, per_cluster: usize, dim: usize) -> (PathBuf, PathBuf) {
    run_ok(&[
        "synth",
        "--clusters",
        &clusters.to_string(),
        "--per-cluster",
        &per_cluster.to_string(),
        "--dim",
        &dim.to_string(),
        "--spread",
        "0.05",
        "--seed",
        "7",
        "--out",
        path_str(dir),
    ]);
    (dir.join("base.fvecs"), dir.join("queries.fvecs"))
}

#[test]
fn train_is_deterministic_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let (base, _) = synth_dataset(&dir.path().join("data"), 4, 30, 16);
    let cb1 = dir.path().join("cb1.bin");
    let cb2 = dir.path().join("cb2.bin");
    for out in [&cb1, &cb2] {
        let stdout = run_ok(&[
            "train",
            "--input",
            path_str(&base),
            "--k",
            "16",
            "--iters",
            "40",
            "--seed",
            "42",
            "--out",
            path_str(out),
        ]);
        assert!(stdout.contains("config: command=train"));
        assert!(stdout.contains("seed=42"));
    }
    assert_eq!(
        std::fs::read(&cb1).unwrap(),
        std::fs::read(&cb2).unwrap(),
        "same flags must produce byte-identical codebooks"
    );
}

#[test]
fn train_rejects_k_larger_than_input() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("tiny.fvecs");
    let vectors: Vec<FeatureVector> = (0..3)
        .map(|i| FeatureVector::new(vec![i as f32, 1.0]).unwrap())
        .collect();
    write_fvecs(&base, &vectors).unwrap();
    let out = dir.path().join("cb.bin");
    let output = run(&[
        "train",
        "--input",
        path_str(&base),
        "--k",
        "8",
        "--out",
        path_str(&out),
    ]);
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("error:"));
    assert!(!out.exists(), "failed train must not leave a codebook behind");
}

#[test]
fn build_reports_shards_and_rebuilds_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (base, _) = synth_dataset(&dir.path().join("data"), 10, 100, 16);
    let cb = dir.path().join("cb.bin");
    run_ok(&[
        "train", "--input", path_str(&base), "--k", "32", "--iters", "20", "--seed", "5",
        "--out", path_str(&cb),
    ]);

    let idx1 = dir.path().join("idx1");
    let idx2 = dir.path().join("idx2");
    for out in [&idx1, &idx2] {
        let stdout = run_ok(&[
            "build",
            "--base",
            path_str(&base),
            "--codebook",
            path_str(&cb),
            "--mode",
            "min",
            "--n",
            "4",
            "--shards",
            "10",
            "--bloom-factor",
            "10",
            "--policy",
            "round-robin",
            "--out",
            path_str(out),
        ]);
        assert!(stdout.contains("shards=10"));
    }

    // Byte-identical rebuild, file by file.
    let mut names: Vec<_> = std::fs::read_dir(&idx1)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.iter().any(|n| n == "manifest.txt"));
    for name in names {
        assert_eq!(
            std::fs::read(idx1.join(&name)).unwrap(),
            std::fs::read(idx2.join(&name)).unwrap(),
            "{name:?} differs between identical builds"
        );
    }

    // c=10 on 1,000 records over 10 shards: every gate sized m=1000.
    for i in 0..10 {
        let gate = BloomFilter::load(idx1.join(format!("gate_{i:04}.bloom"))).unwrap();
        assert_eq!(gate.params().m_bits(), 1_000);
    }

    let manifest = std::fs::read_to_string(idx1.join("manifest.txt")).unwrap();
    assert!(manifest.contains("shards=10"));
    assert!(manifest.contains("binarizer=min4"));
}

#[test]
fn build_single_shard_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (base, _) = synth_dataset(&dir.path().join("data"), 3, 20, 8);
    let cb = dir.path().join("cb.bin");
    run_ok(&[
        "train", "--input", path_str(&base), "--k", "8", "--iters", "10", "--seed", "1",
        "--out", path_str(&cb),
    ]);
    let idx = dir.path().join("idx");
    run_ok(&[
        "build", "--base", path_str(&base), "--codebook", path_str(&cb),
        "--shards", "1", "--out", path_str(&idx),
    ]);
    let manifest = std::fs::read_to_string(idx.join("manifest.txt")).unwrap();
    assert!(manifest.contains("shards=1"));
}

fn self_query_setup(dir: &Path) -> (PathBuf, PathBuf) {
    let (base, _) = synth_dataset(&dir.join("data"), 4, 25, 12);
    let cb = dir.join("cb.bin");
    run_ok(&[
        "train", "--input", path_str(&base), "--k", "16", "--iters", "20", "--seed", "3",
        "--out", path_str(&cb),
    ]);
    let idx = dir.join("idx");
    run_ok(&[
        "build", "--base", path_str(&base), "--codebook", path_str(&cb),
        "--mode", "min", "--n", "4", "--shards", "1", "--bloom-factor", "10",
        "--out", path_str(&idx),
    ]);
    (base, idx)
}

#[test]
fn query_self_match_ranks_first_with_distance_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (base, idx) = self_query_setup(dir.path());

    // Single self-query: the first base vector.
    let first = bloomgate::vectors::io::read_fvecs(&base).unwrap()[0].clone();
    let single = dir.path().join("one.fvecs");
    write_fvecs(&single, &[first]).unwrap();

    let report = dir.path().join("hits.csv");
    run_ok(&[
        "query", "--index", path_str(&idx), "--queries", path_str(&single),
        "--thr", "0", "--top", "3", "--gates", "on", "--report", path_str(&report),
    ]);
    let csv = std::fs::read_to_string(&report).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "query,rank,id,distance");
    let first_row = lines.next().unwrap();
    assert!(
        first_row.starts_with("0,1,0,0.000000000"),
        "self-query must rank itself first at distance 0, got `{first_row}`"
    );
}

#[test]
fn query_gates_on_off_produce_identical_hit_csvs() {
    // Single shard plus queries copied from the base: every query code is
    // posted, the only shard is always admitted, so gating cannot change
    // the hits.
    let dir = tempfile::tempdir().unwrap();
    let (base, idx) = self_query_setup(dir.path());
    let base_vectors = bloomgate::vectors::io::read_fvecs(&base).unwrap();
    let queries = dir.path().join("probes.fvecs");
    write_fvecs(&queries, &base_vectors[..20]).unwrap();

    let on = dir.path().join("on.csv");
    let off = dir.path().join("off.csv");
    for (gates, report) in [("on", &on), ("off", &off)] {
        run_ok(&[
            "query", "--index", path_str(&idx), "--queries", path_str(&queries),
            "--thr", "6", "--top", "10", "--gates", gates, "--report", path_str(report),
        ]);
    }
    assert_eq!(
        std::fs::read_to_string(&on).unwrap(),
        std::fs::read_to_string(&off).unwrap()
    );
}

#[test]
fn query_malformed_file_leaves_no_partial_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (_, idx) = self_query_setup(dir.path());
    let bad = dir.path().join("bad.fvecs");
    std::fs::write(&bad, [3u8, 0, 0, 0, 9, 9]).unwrap(); // truncated record
    let report = dir.path().join("hits.csv");
    let output = run(&[
        "query", "--index", path_str(&idx), "--queries", path_str(&bad),
        "--report", path_str(&report),
    ]);
    assert!(!output.status.success());
    assert!(!report.exists(), "failed query must not leave a partial CSV");
    assert!(dir
        .path()
        .read_dir()
        .unwrap()
        .all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn query_config_file_defaults_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (base, idx) = self_query_setup(dir.path());
    let base_vectors = bloomgate::vectors::io::read_fvecs(&base).unwrap();
    let queries = dir.path().join("probes.fvecs");
    write_fvecs(&queries, &base_vectors[..3]).unwrap();

    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "thr=2\ntop=7\ngates=off\nworkers=1\n").unwrap();
    let stdout = run_ok(&[
        "query", "--index", path_str(&idx), "--queries", path_str(&queries),
        "--config", path_str(&cfg), "--top", "4",
    ]);
    // File supplies thr/gates/workers; the explicit flag wins for top.
    assert!(stdout.contains("thr=2"));
    assert!(stdout.contains("top=4"));
    assert!(stdout.contains("gates=off"));
}

#[test]
fn eval_sweep_emits_one_row_per_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    synth_dataset(&data_dir, 4, 25, 12);
    let report = dir.path().join("report.csv");
    run_ok(&[
        "eval",
        "--manifest",
        path_str(&data_dir.join("data.manifest")),
        "--mode",
        "min",
        "--n",
        "2,4",
        "--thr",
        "4,8",
        "--gates",
        "off",
        "--k",
        "16",
        "--iters",
        "15",
        "--top",
        "50",
        "--workers",
        "1",
        "--report",
        path_str(&report),
    ]);
    let csv = std::fs::read_to_string(&report).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).filter(|l| !l.is_empty()).collect();
    assert_eq!(rows.len(), 4, "2 N-values x 2 thresholds must give 4 rows:\n{csv}");
    assert!(csv.starts_with("label,map,"));
}

#[test]
fn eval_empty_sweep_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    synth_dataset(&data_dir, 3, 10, 8);
    let output = run(&[
        "eval",
        "--manifest",
        path_str(&data_dir.join("data.manifest")),
        "--n",
        "",
        "--k",
        "8",
    ]);
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("empty"));
}

#[test]
fn eval_distractor_run_rejects_and_speeds_up() {
    // Desk-scale replica of the distractor experiment: queries that were
    // never indexed are mostly stopped at the gates.
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    synth_dataset(&data_dir, 5, 80, 16);

    // Distractors far outside the base region.
    let distractors: Vec<FeatureVector> = (0..400)
        .map(|i| {
            FeatureVector::new(
                (0..16)
                    .map(|d| 5.0 + ((i * 16 + d) % 97) as f32 * 0.01)
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    let distractor_path = dir.path().join("distractors.fvecs");
    write_fvecs(&distractor_path, &distractors).unwrap();

    let report = dir.path().join("report.csv");
    let stdout = run_ok(&[
        "eval",
        "--manifest",
        path_str(&data_dir.join("data.manifest")),
        "--distractors",
        path_str(&distractor_path),
        "--mode",
        "min",
        "--n",
        "4",
        "--thr",
        "8",
        "--shards",
        "4",
        "--bloom-factor",
        "10",
        "--gates",
        "both",
        "--k",
        "32",
        "--iters",
        "15",
        "--workers",
        "1",
        "--report",
        path_str(&report),
    ]);
    assert!(stdout.contains("speedup_vs_no_gate="));

    let csv = std::fs::read_to_string(&report).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let rejection_col = header
        .iter()
        .position(|h| *h == "distractor_gated_out_fraction")
        .unwrap();
    let label_col = header.iter().position(|h| *h == "label").unwrap();
    let mut saw_gated = false;
    for row in csv.lines().skip(1).filter(|l| !l.is_empty()) {
        let fields: Vec<&str> = row.split(',').collect();
        if fields[label_col].starts_with("gated") {
            saw_gated = true;
            let rejection: f64 = fields[rejection_col].parse().unwrap();
            assert!(
                rejection >= 0.9,
                "distractor rejection {rejection} below 0.9 in row `{row}`"
            );
        }
    }
    assert!(saw_gated);
}

#[test]
fn bloom_math_prints_the_formula_values() {
    let stdout = run_ok(&["bloom-math", "--m", "10n", "--n", "10000"]);
    assert!(stdout.contains("optimal_k=7"));
    assert!(stdout.contains("fp_probability=0.0081"));
    assert!(stdout.contains("half_full_bound=0.0081"));

    // Explicit k overrides the optimum in the printout.
    let stdout = run_ok(&["bloom-math", "--m", "100000", "--n", "10000", "--k", "3"]);
    assert!(stdout.contains("optimal_k=7"));
    assert!(stdout.contains("k_used=3 (override)"));

    let output = run(&["bloom-math", "--m", "100", "--n", "0"]);
    assert!(!output.status.success());
}

#[test]
fn synth_output_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    run_ok(&[
        "synth", "--clusters", "3", "--per-cluster", "5", "--dim", "4",
        "--spread", "0.02", "--seed", "9", "--out", path_str(&out),
    ]);
    let dataset = bloomgate::vectors::io::load_dataset(out.join("data.manifest"), false).unwrap();
    assert_eq!(dataset.base().len(), 15);
    assert_eq!(dataset.queries().len(), 3);
    for q in dataset.queries() {
        assert_eq!(dataset.relevant_for(q.id).unwrap().len(), 5);
    }
}
