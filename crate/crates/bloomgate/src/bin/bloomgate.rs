//! Command-line driver: train codebooks, build and query indexes, run
//! evaluation sweeps, and evaluate the filter sizing formulas.
//!
//! Every run echoes its resolved configuration to stdout. Machine-readable
//! output is CSV behind `--report`; reports are staged to a temporary path
//! and renamed, so failures never leave partial output behind.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use bloomgate::bloom;
use bloomgate::error::{Error, Result};
use bloomgate::eval::{
    per_query_ap_csv, reports_to_csv, run_experiment, speedup_report, EvalReport, ExperimentConfig,
    GateConfig,
};
use bloomgate::index::{build_index, QueryParams, ShardPolicy, ShardedIndex};
use bloomgate::quantizer::{kmeans_train_detailed, Binarizer, Codebook};
use bloomgate::vectors::io::{
    load_dataset, read_fvecs, write_fvecs, write_ivecs, DatasetManifest,
};
use bloomgate::vectors::{generate_clustered, FeatureVector, LabeledVector};

#[derive(Parser)]
#[command(name = "bloomgate", version, about = "Bloom-gated sharded ANN retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Train a k-means codebook from an fvecs file.
    Train(TrainArgs),
    /// Build a sharded, gated index from base vectors.
    Build(BuildArgs),
    /// Query an index with vectors from an fvecs file.
    Query(QueryArgs),
    /// Run an evaluation sweep over a manifest-described dataset.
    Eval(EvalArgs),
    /// Evaluate the filter sizing formulas for given m and n.
    BloomMath(BloomMathArgs),
    /// Generate a synthetic clustered dataset on disk.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training vectors (fvecs).
    #[arg(long)]
    input: PathBuf,
    /// Number of centroids == hash code width in bits.
    #[arg(long, default_value_t = 64)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// L2-normalize vectors on ingest.
    #[arg(long)]
    normalize: bool,
    /// Output codebook file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildArgs {
    /// Base vectors (fvecs); record ids are row indices.
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    codebook: PathBuf,
    /// Binarization rule: `min` (with --n) or `mean`.
    #[arg(long, default_value = "min")]
    mode: String,
    /// N for the min rule: how many smallest distances set bits.
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    shards: usize,
    /// Gate size factor c: each gate gets m = c * records-in-shard bits.
    #[arg(long, default_value_t = 10.0)]
    bloom_factor: f64,
    /// Shard assignment: `round-robin` or `hash-id`.
    #[arg(long, default_value = "round-robin")]
    policy: String,
    #[arg(long)]
    normalize: bool,
    /// Output index directory (must not exist).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    /// Index directory.
    #[arg(long)]
    index: PathBuf,
    /// Query vectors (fvecs).
    #[arg(long)]
    queries: PathBuf,
    /// Optional key=value defaults file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Maximum Hamming distance for candidate selection.
    #[arg(long)]
    thr: Option<u32>,
    /// Result list length.
    #[arg(long)]
    top: Option<usize>,
    /// `on` or `off`.
    #[arg(long)]
    gates: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    normalize: bool,
    /// Hits CSV: query,rank,id,distance.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset manifest (key=value lines naming base/queries/groundtruth).
    #[arg(long)]
    manifest: PathBuf,
    /// Extra distractor queries (fvecs) with no ground truth.
    #[arg(long)]
    distractors: Option<PathBuf>,
    /// Pre-trained codebook; omitted = train on the base vectors.
    #[arg(long)]
    codebook: Option<PathBuf>,
    /// Optional key=value defaults file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `min` or `mean`.
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated N sweep for the min rule.
    #[arg(long)]
    n: Option<String>,
    /// Comma-separated Hamming threshold sweep.
    #[arg(long)]
    thr: Option<String>,
    /// Comma-separated shard count sweep.
    #[arg(long)]
    shards: Option<String>,
    /// Comma-separated gate size factor sweep.
    #[arg(long)]
    bloom_factor: Option<String>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    top: Option<usize>,
    /// `on`, `off`, or `both` (gated runs plus a no-gate baseline).
    #[arg(long)]
    gates: Option<String>,
    /// Codebook width when training here.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    normalize: bool,
    /// Per-configuration CSV report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Optional raw per-query AP CSV.
    #[arg(long)]
    per_query_ap: Option<PathBuf>,
}

#[derive(Args)]
struct BloomMathArgs {
    /// Filter size in bits; accepts a plain integer or `<factor>n`.
    #[arg(long)]
    m: String,
    /// Expected insertions.
    #[arg(long)]
    n: u64,
    /// Override the number of hash functions.
    #[arg(long)]
    k: Option<u32>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    clusters: usize,
    #[arg(long, default_value_t = 100)]
    per_cluster: usize,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 0.05)]
    spread: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory for base/queries/groundtruth plus a manifest.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => cmd_train(args),
        Command::Build(args) => cmd_build(args),
        Command::Query(args) => cmd_query(args),
        Command::Eval(args) => cmd_eval(args),
        Command::BloomMath(args) => cmd_bloom_math(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// key=value defaults file for query/eval; flags win over file entries.
fn read_config_file(path: Option<&Path>) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    let Some(path) = path else {
        return Ok(map);
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidParameter(format!(
                "bad config line `{line}` in {}",
                path.display()
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn resolve<T: FromStr + Clone>(
    flag: Option<T>,
    file: &HashMap<String, String>,
    key: &str,
    default: T,
) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match file.get(key) {
        Some(raw) => raw
            .parse::<T>()
            .map_err(|_| Error::InvalidParameter(format!("bad config value `{raw}` for `{key}`"))),
        None => Ok(default),
    }
}

fn parse_list<T: FromStr>(raw: &str, key: &str) -> Result<Vec<T>> {
    let items: Vec<T> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::InvalidParameter(format!("bad `{key}` entry `{s}`")))
        })
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::InvalidParameter(format!("empty `{key}` sweep")));
    }
    Ok(items)
}

fn binarizer_from(mode: &str, n_smallest: usize) -> Result<Binarizer> {
    match mode.trim().to_ascii_lowercase().as_str() {
        "mean" => Ok(Binarizer::Mean),
        "min" | "minx" => Ok(Binarizer::MinX { n_smallest }),
        other => Err(Error::InvalidParameter(format!(
            "bad mode `{other}` (expected `min` or `mean`)"
        ))),
    }
}

fn echo_config(command: &str, fields: &[(&str, &dyn Display)]) {
    let body: Vec<String> = fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("config: command={command} {}", body.join(" "));
}

/// Write through a temporary sibling so failures leave nothing behind.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    let staged = parent.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
    ));
    std::fs::write(&staged, contents).map_err(|e| Error::io(&staged, e))?;
    std::fs::rename(&staged, path).map_err(|e| Error::io(path, e))
}

fn load_vectors(path: &Path, normalize: bool) -> Result<Vec<FeatureVector>> {
    let vectors = read_fvecs(path)?;
    if !normalize {
        return Ok(vectors);
    }
    vectors.into_iter().map(|v| v.normalized()).collect()
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    echo_config(
        "train",
        &[
            ("input", &args.input.display()),
            ("k", &args.k),
            ("iters", &args.iters),
            ("seed", &args.seed),
            ("normalize", &args.normalize),
            ("out", &args.out.display()),
        ],
    );
    let vectors = load_vectors(&args.input, args.normalize)?;
    let run = kmeans_train_detailed(&vectors, args.k, args.iters, args.seed)?;
    println!(
        "trained: vectors={} k={} iterations={} converged={} objective={:.6}",
        vectors.len(),
        args.k,
        run.iterations,
        run.converged,
        run.objective_trace.last().copied().unwrap_or(0.0),
    );

    let staged = args.out.with_extension("tmp");
    run.codebook.save(&staged)?;
    std::fs::rename(&staged, &args.out).map_err(|e| Error::io(&args.out, e))?;
    println!("codebook written to {}", args.out.display());
    Ok(())
}

fn cmd_build(args: BuildArgs) -> Result<()> {
    echo_config(
        "build",
        &[
            ("base", &args.base.display()),
            ("codebook", &args.codebook.display()),
            ("mode", &args.mode),
            ("n", &args.n),
            ("shards", &args.shards),
            ("bloom_factor", &args.bloom_factor),
            ("policy", &args.policy),
            ("normalize", &args.normalize),
            ("out", &args.out.display()),
        ],
    );
    if args.out.exists() {
        return Err(Error::InvalidParameter(format!(
            "output directory {} already exists",
            args.out.display()
        )));
    }
    let codebook = Codebook::load(&args.codebook)?;
    let binarizer = binarizer_from(&args.mode, args.n)?;
    let policy: ShardPolicy = args.policy.parse()?;
    let base: Vec<LabeledVector> = load_vectors(&args.base, args.normalize)?
        .into_iter()
        .enumerate()
        .map(|(i, v)| LabeledVector::new(i as u32, v))
        .collect();

    let index = build_index(&base, codebook, binarizer, args.shards, args.bloom_factor, policy)?;

    let staged = args.out.with_extension("building");
    if staged.exists() {
        std::fs::remove_dir_all(&staged).map_err(|e| Error::io(&staged, e))?;
    }
    let result = index.save(&staged);
    if result.is_err() {
        let _ = std::fs::remove_dir_all(&staged);
    }
    result?;
    std::fs::rename(&staged, &args.out).map_err(|e| Error::io(&args.out, e))?;

    for (i, shard) in index.shards().iter().enumerate() {
        println!(
            "shard {i}: records={} distinct_codes={} gate_m_bits={} gate_k={} gate_bytes={} saturated={}",
            shard.len(),
            shard.distinct_codes(),
            shard.gate().params().m_bits(),
            shard.gate().params().k_hashes(),
            shard.gate().serialized_len(),
            shard.gate().is_saturated(),
        );
    }
    println!(
        "index written to {}: records={} shards={}",
        args.out.display(),
        index.len(),
        index.num_shards()
    );
    Ok(())
}

fn cmd_query(args: QueryArgs) -> Result<()> {
    let file = read_config_file(args.config.as_deref())?;
    let thr = resolve(args.thr, &file, "thr", 10)?;
    let top = resolve(args.top, &file, "top", 10)?;
    let gates_raw = resolve(args.gates, &file, "gates", "on".to_string())?;
    let workers = resolve(args.workers, &file, "workers", default_workers())?;
    let use_gates = match gates_raw.to_ascii_lowercase().as_str() {
        "on" => true,
        "off" => false,
        other => {
            return Err(Error::InvalidParameter(format!(
                "bad gates value `{other}` (expected on|off)"
            )))
        }
    };
    echo_config(
        "query",
        &[
            ("index", &args.index.display()),
            ("queries", &args.queries.display()),
            ("thr", &thr),
            ("top", &top),
            ("gates", &gates_raw),
            ("workers", &workers),
            ("normalize", &args.normalize),
        ],
    );

    let index = ShardedIndex::load(&args.index)?;
    let queries = load_vectors(&args.queries, args.normalize)?;
    if queries.is_empty() {
        return Err(Error::EmptyInput("query file"));
    }
    let params = QueryParams::new(thr, top, use_gates)?;
    let batch = index.query_batch(&queries, &params, workers);

    let mut csv = String::from("query,rank,id,distance\n");
    let mut gated_out = 0usize;
    let mut hits_total = 0usize;
    let mut candidates_total = 0u64;
    for (i, outcome) in batch.results.iter().enumerate() {
        let result = match outcome {
            Ok(r) => r,
            Err(e) => return Err(Error::InvalidParameter(format!("query {i} failed: {e}"))),
        };
        if result.gated_out {
            gated_out += 1;
        }
        hits_total += result.hits.len();
        candidates_total += result.candidates_examined as u64;
        for (rank, (id, distance)) in result.hits.iter().enumerate() {
            csv.push_str(&format!("{i},{},{id},{distance:.9}\n", rank + 1));
        }
    }
    println!(
        "queried: queries={} hits={} gated_out={} gated_out_fraction={:.4} candidates={} total_time_s={:.6} mean_query_time_s={:.9}",
        queries.len(),
        hits_total,
        gated_out,
        gated_out as f64 / queries.len() as f64,
        candidates_total,
        batch.total_time.as_secs_f64(),
        batch.mean_query_time.as_secs_f64(),
    );
    if let Some(report) = &args.report {
        write_atomic(report, &csv)?;
        println!("hits written to {}", report.display());
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let file = read_config_file(args.config.as_deref())?;
    let mode = resolve(args.mode, &file, "mode", "min".to_string())?;
    let n_raw = resolve(args.n, &file, "n", "6".to_string())?;
    let thr_raw = resolve(args.thr, &file, "thr", "10".to_string())?;
    let shards_raw = resolve(args.shards, &file, "shards", "1".to_string())?;
    let factor_raw = resolve(args.bloom_factor, &file, "bloom_factor", "10".to_string())?;
    let policy: ShardPolicy = resolve(args.policy, &file, "policy", "round-robin".to_string())?.parse()?;
    let top = resolve(args.top, &file, "top", 100)?;
    let gates = resolve(args.gates, &file, "gates", "both".to_string())?;
    let k = resolve(args.k, &file, "k", 64)?;
    let iters = resolve(args.iters, &file, "iters", 25)?;
    let seed = resolve(args.seed, &file, "seed", 42)?;
    let workers = resolve(args.workers, &file, "workers", default_workers())?;

    let n_list: Vec<usize> = parse_list(&n_raw, "n")?;
    let thr_list: Vec<u32> = parse_list(&thr_raw, "thr")?;
    let shards_list: Vec<usize> = parse_list(&shards_raw, "shards")?;
    let factor_list: Vec<f64> = parse_list(&factor_raw, "bloom_factor")?;

    let binarizers: Vec<Binarizer> = match mode.to_ascii_lowercase().as_str() {
        "mean" => vec![Binarizer::Mean],
        "min" | "minx" => n_list
            .iter()
            .map(|&n| Binarizer::MinX { n_smallest: n })
            .collect(),
        other => {
            return Err(Error::InvalidParameter(format!(
                "bad mode `{other}` (expected min|mean)"
            )))
        }
    };
    let gate_configs: Vec<GateConfig> = match gates.to_ascii_lowercase().as_str() {
        "off" => vec![GateConfig::Disabled],
        "on" => factor_list
            .iter()
            .map(|&c| GateConfig::Enabled { bloom_factor: c })
            .collect(),
        "both" => std::iter::once(GateConfig::Disabled)
            .chain(factor_list.iter().map(|&c| GateConfig::Enabled { bloom_factor: c }))
            .collect(),
        other => {
            return Err(Error::InvalidParameter(format!(
                "bad gates value `{other}` (expected on|off|both)"
            )))
        }
    };

    echo_config(
        "eval",
        &[
            ("manifest", &args.manifest.display()),
            ("mode", &mode),
            ("n", &n_raw),
            ("thr", &thr_raw),
            ("shards", &shards_raw),
            ("bloom_factor", &factor_raw),
            ("policy", &policy),
            ("top", &top),
            ("gates", &gates),
            ("k", &k),
            ("iters", &iters),
            ("seed", &seed),
            ("workers", &workers),
            ("normalize", &args.normalize),
        ],
    );

    let dataset = load_dataset(&args.manifest, args.normalize)?;
    let distractors = match &args.distractors {
        Some(path) => load_vectors(path, args.normalize)?,
        None => Vec::new(),
    };
    let codebook = match &args.codebook {
        Some(path) => Codebook::load(path)?,
        None => {
            let vectors: Vec<FeatureVector> =
                dataset.base().iter().map(|r| r.vector.clone()).collect();
            let run = kmeans_train_detailed(&vectors, k, iters, seed)?;
            println!(
                "trained codebook: k={k} iterations={} converged={}",
                run.iterations, run.converged
            );
            run.codebook
        }
    };

    let mut all_reports: Vec<EvalReport> = Vec::new();
    for &binarizer in &binarizers {
        for &hamming_threshold in &thr_list {
            for &num_shards in &shards_list {
                let config = ExperimentConfig {
                    binarizer,
                    num_shards,
                    policy,
                    hamming_threshold,
                    top_r: top,
                    workers,
                };
                let reports =
                    run_experiment(&dataset, &distractors, &codebook, &config, &gate_configs)?;
                let baseline = reports.iter().find(|r| r.label == "no-gate").cloned();
                for report in reports {
                    println!(
                        "{} {} thr={} shards={}: map={:.4} map_excluding_gated={:.4} \
                         gated_out={:.4} time_s={:.4}{}",
                        report.label,
                        binarizer,
                        hamming_threshold,
                        num_shards,
                        report.map_score,
                        report.map_excluding_gated,
                        report.gated_out_fraction,
                        report.total_time.as_secs_f64(),
                        match &baseline {
                            Some(b) if b.label != report.label => format!(
                                " speedup_vs_no_gate={:.2}",
                                speedup_report(b, &report)?
                            ),
                            _ => String::new(),
                        },
                    );
                    all_reports.push(report);
                }
            }
        }
    }

    if let Some(report_path) = &args.report {
        write_atomic(report_path, &reports_to_csv(&all_reports))?;
        println!("report written to {}", report_path.display());
    }
    if let Some(ap_path) = &args.per_query_ap {
        write_atomic(ap_path, &per_query_ap_csv(&all_reports))?;
        println!("per-query AP written to {}", ap_path.display());
    }
    Ok(())
}

fn cmd_bloom_math(args: BloomMathArgs) -> Result<()> {
    if args.n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let m = parse_m(&args.m, args.n)?;
    if m < args.n {
        return Err(Error::InvalidParameter(format!(
            "m={m} must be at least n={}",
            args.n
        )));
    }
    echo_config("bloom-math", &[("m", &m), ("n", &args.n)]);
    let k_opt = bloom::optimal_k(m, args.n)?;
    let k_used = args.k.unwrap_or(k_opt);
    if k_used == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    println!("optimal_k={k_opt}");
    println!("k_used={k_used}{}", if args.k.is_some() { " (override)" } else { "" });
    println!("fp_probability={:.6}", bloom::fp_probability(m, args.n, k_used));
    println!("half_full_bound={:.6}", bloom::fp_bound_rule(m, args.n));
    Ok(())
}

/// `--m` accepts `81920` or `8n`-style multiples of `--n`.
fn parse_m(raw: &str, n: u64) -> Result<u64> {
    let raw = raw.trim();
    if let Some(factor) = raw.strip_suffix(['n', 'N']) {
        let factor: f64 = factor
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad m `{raw}`")))?;
        if !factor.is_finite() || factor <= 0.0 {
            return Err(Error::InvalidParameter(format!("bad m `{raw}`")));
        }
        return Ok((factor * n as f64).round() as u64);
    }
    raw.parse::<u64>()
        .map_err(|_| Error::InvalidParameter(format!("bad m `{raw}`")))
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    echo_config(
        "synth",
        &[
            ("clusters", &args.clusters),
            ("per_cluster", &args.per_cluster),
            ("dim", &args.dim),
            ("spread", &args.spread),
            ("seed", &args.seed),
            ("out", &args.out.display()),
        ],
    );
    let dataset = generate_clustered(
        args.clusters,
        args.per_cluster,
        args.dim,
        args.spread,
        args.seed,
    )?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;

    let base: Vec<FeatureVector> = dataset.base().iter().map(|r| r.vector.clone()).collect();
    let queries: Vec<FeatureVector> = dataset.queries().iter().map(|r| r.vector.clone()).collect();
    let gt_rows: Vec<Vec<u32>> = dataset
        .queries()
        .iter()
        .map(|q| {
            dataset
                .relevant_for(q.id)
                .map(|s| s.iter().copied().collect())
                .unwrap_or_default()
        })
        .collect();

    write_fvecs(args.out.join("base.fvecs"), &base)?;
    write_fvecs(args.out.join("queries.fvecs"), &queries)?;
    write_ivecs(args.out.join("groundtruth.ivecs"), &gt_rows)?;
    DatasetManifest {
        base: args.out.join("base.fvecs"),
        queries: args.out.join("queries.fvecs"),
        groundtruth: args.out.join("groundtruth.ivecs"),
    }
    .write(args.out.join("data.manifest"))?;
    println!(
        "dataset written to {}: base={} queries={} dim={}",
        args.out.display(),
        base.len(),
        queries.len(),
        args.dim
    );
    Ok(())
}
