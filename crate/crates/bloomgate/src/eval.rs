//! Retrieval-quality (AP/MAP) and performance measurement: the experiment
//! harness runs one query workload against the index under several gate
//! configurations and reports MAP, timing and gating statistics.
//!
//! Distractor queries carry no ground truth; they contribute to timing and
//! gating statistics but never to MAP. A gated-out ground-truth query counts
//! as AP 0 in `map_score`; `map_excluding_gated` reports the variant that
//! drops such queries instead.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::index::{build_index, QueryParams, ShardPolicy};
use crate::quantizer::{Binarizer, Codebook};
use crate::vectors::{Dataset, FeatureVector, RecordId};

/// Average precision of one ranked list against its relevant set:
/// `AP = (1/|relevant|) * sum of precision@r over ranks r that hit`.
pub fn average_precision(
    ranked_ids: &[RecordId],
    relevant: &HashSet<RecordId>,
) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevantSet);
    }
    let mut seen = HashSet::with_capacity(ranked_ids.len());
    let mut hits = 0usize;
    let mut precision_sum = 0.0f64;
    for (rank0, id) in ranked_ids.iter().enumerate() {
        if !seen.insert(*id) {
            return Err(Error::DuplicateRankedId { id: *id });
        }
        if relevant.contains(id) {
            hits += 1;
            precision_sum += hits as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(precision_sum / relevant.len() as f64)
}

/// Arithmetic mean of per-query average precision.
pub fn mean_average_precision(results: &[(Vec<RecordId>, HashSet<RecordId>)]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyInput("mean_average_precision results"));
    }
    let mut sum = 0.0;
    for (ranked, relevant) in results {
        sum += average_precision(ranked, relevant)?;
    }
    Ok(sum / results.len() as f64)
}

/// One gate configuration of an experiment run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateConfig {
    /// Baseline: gates built but never consulted.
    Disabled,
    /// Gates consulted; each shard's filter sized `m = bloom_factor * n`.
    Enabled { bloom_factor: f64 },
}

impl GateConfig {
    fn label(&self) -> String {
        match self {
            GateConfig::Disabled => "no-gate".to_string(),
            GateConfig::Enabled { bloom_factor } => format!("gated-m{bloom_factor}n"),
        }
    }
}

/// Index- and query-side parameters of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub binarizer: Binarizer,
    pub num_shards: usize,
    pub policy: ShardPolicy,
    pub hamming_threshold: u32,
    pub top_r: usize,
    /// Worker threads for the query batch; 1 keeps timings comparable.
    pub workers: usize,
}

/// Quality, timing and gating measurements of one configuration.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub label: String,
    /// Mean of `per_query_ap`; gated-out ground-truth queries score 0.
    pub map_score: f64,
    /// AP per ground-truth query, in query order.
    pub per_query_ap: Vec<f64>,
    /// MAP over ground-truth queries that were not gated out.
    pub map_excluding_gated: f64,
    pub gt_queries: usize,
    pub distractor_queries: usize,
    /// Wall clock of the query pipeline only (hash, gate, scan, re-rank).
    pub total_time: Duration,
    pub mean_query_time: Duration,
    /// Fraction of all queries rejected by every gate.
    pub gated_out_fraction: f64,
    pub gt_gated_out_fraction: f64,
    pub distractor_gated_out_fraction: f64,
    pub candidates_examined_total: u64,
    /// Serialized size of all gates, in bytes (reported, never asserted).
    pub gate_bytes_total: u64,
    /// Full resolved parameter record, space-separated `key=value` pairs.
    pub config_echo: String,
}

/// Run the workload once per gate configuration over a freshly built index.
///
/// MAP is computed over the dataset's ground-truth queries only; distractor
/// vectors are appended to the batch for timing and gating statistics.
/// Identical inputs produce identical reports, wall-clock fields aside.
pub fn run_experiment(
    dataset: &Dataset,
    distractors: &[FeatureVector],
    codebook: &Codebook,
    config: &ExperimentConfig,
    gate_configs: &[GateConfig],
) -> Result<Vec<EvalReport>> {
    if gate_configs.is_empty() {
        return Err(Error::EmptyInput("gate configurations"));
    }
    if dataset.dim() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            got: dataset.dim(),
        });
    }
    for d in distractors {
        if d.dim() != codebook.dim() {
            return Err(Error::DimensionMismatch {
                expected: codebook.dim(),
                got: d.dim(),
            });
        }
    }
    let gt_queries: Vec<(RecordId, &FeatureVector)> = dataset
        .queries()
        .iter()
        .filter(|q| dataset.relevant_for(q.id).is_some_and(|r| !r.is_empty()))
        .map(|q| (q.id, &q.vector))
        .collect();
    if gt_queries.is_empty() {
        return Err(Error::EmptyInput("ground-truth queries"));
    }

    let mut workload: Vec<FeatureVector> =
        Vec::with_capacity(gt_queries.len() + distractors.len());
    workload.extend(gt_queries.iter().map(|(_, v)| (*v).clone()));
    workload.extend(distractors.iter().cloned());

    let mut reports = Vec::with_capacity(gate_configs.len());
    for gate_config in gate_configs {
        let (bloom_factor, use_gates) = match gate_config {
            GateConfig::Disabled => (1.0, false),
            GateConfig::Enabled { bloom_factor } => (*bloom_factor, true),
        };
        let index = build_index(
            dataset.base(),
            codebook.clone(),
            config.binarizer,
            config.num_shards,
            bloom_factor,
            config.policy,
        )?;
        let params = QueryParams::new(config.hamming_threshold, config.top_r, use_gates)?;
        let batch = index.query_batch(&workload, &params, config.workers);

        let mut per_query_ap = Vec::with_capacity(gt_queries.len());
        let mut ap_sum_admitted = 0.0f64;
        let mut admitted_gt = 0usize;
        let mut gated_gt = 0usize;
        let mut gated_distractors = 0usize;
        let mut candidates_total = 0u64;
        for (i, outcome) in batch.results.iter().enumerate() {
            let result = match outcome {
                Ok(r) => r,
                Err(e) => {
                    return Err(Error::InvalidParameter(format!(
                        "query {i} failed mid-batch: {e}"
                    )))
                }
            };
            candidates_total += result.candidates_examined as u64;
            if i < gt_queries.len() {
                let (query_id, _) = gt_queries[i];
                let relevant: HashSet<RecordId> = dataset
                    .relevant_for(query_id)
                    .expect("filtered above")
                    .iter()
                    .copied()
                    .collect();
                let ap = average_precision(&result.ranked_ids(), &relevant)?;
                per_query_ap.push(ap);
                if result.gated_out {
                    gated_gt += 1;
                } else {
                    ap_sum_admitted += ap;
                    admitted_gt += 1;
                }
            } else if result.gated_out {
                gated_distractors += 1;
            }
        }

        let map_score = per_query_ap.iter().sum::<f64>() / per_query_ap.len() as f64;
        let map_excluding_gated = if admitted_gt > 0 {
            ap_sum_admitted / admitted_gt as f64
        } else {
            0.0
        };
        let total_queries = workload.len();
        let gate_bytes_total = index
            .shards()
            .iter()
            .map(|s| s.gate().serialized_len())
            .sum();

        let mut config_echo = String::new();
        let _ = write!(
            config_echo,
            "gates={} binarizer={} shards={} policy={} bloom_factor={} threshold={} top_r={} \
             workers={} code_width={} dim={} records={} gt_queries={} distractors={}",
            use_gates,
            config.binarizer,
            config.num_shards,
            config.policy,
            bloom_factor,
            config.hamming_threshold,
            config.top_r,
            config.workers,
            codebook.k_centroids(),
            codebook.dim(),
            dataset.base().len(),
            gt_queries.len(),
            distractors.len(),
        );

        reports.push(EvalReport {
            label: gate_config.label(),
            map_score,
            per_query_ap,
            map_excluding_gated,
            gt_queries: gt_queries.len(),
            distractor_queries: distractors.len(),
            total_time: batch.total_time,
            mean_query_time: batch.mean_query_time,
            gated_out_fraction: (gated_gt + gated_distractors) as f64 / total_queries as f64,
            gt_gated_out_fraction: gated_gt as f64 / gt_queries.len() as f64,
            distractor_gated_out_fraction: if distractors.is_empty() {
                0.0
            } else {
                gated_distractors as f64 / distractors.len() as f64
            },
            candidates_examined_total: candidates_total,
            gate_bytes_total,
            config_echo,
        });
    }
    Ok(reports)
}

/// `baseline.total_time / gated.total_time` for the same workload.
pub fn speedup_report(baseline: &EvalReport, gated: &EvalReport) -> Result<f64> {
    let baseline_queries = baseline.gt_queries + baseline.distractor_queries;
    let gated_queries = gated.gt_queries + gated.distractor_queries;
    if baseline_queries != gated_queries {
        return Err(Error::WorkloadMismatch {
            baseline: baseline_queries,
            gated: gated_queries,
        });
    }
    Ok(baseline.total_time.as_secs_f64() / gated.total_time.as_secs_f64())
}

/// Stable column order of the per-configuration CSV.
pub const REPORT_CSV_HEADER: &str = "label,map,map_excluding_gated,gt_queries,distractor_queries,\
total_time_s,mean_query_time_s,gated_out_fraction,gt_gated_out_fraction,\
distractor_gated_out_fraction,candidates_examined_total,gate_bytes_total,config";

/// One CSV row per report, under [`REPORT_CSV_HEADER`].
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{},{},{:.6},{:.9},{:.6},{:.6},{:.6},{},{},{}",
            r.label,
            r.map_score,
            r.map_excluding_gated,
            r.gt_queries,
            r.distractor_queries,
            r.total_time.as_secs_f64(),
            r.mean_query_time.as_secs_f64(),
            r.gated_out_fraction,
            r.gt_gated_out_fraction,
            r.distractor_gated_out_fraction,
            r.candidates_examined_total,
            r.gate_bytes_total,
            r.config_echo,
        );
    }
    out
}

/// Raw per-query AP dump: `label,query_index,ap`.
pub fn per_query_ap_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("label,query_index,ap\n");
    for r in reports {
        for (i, ap) in r.per_query_ap.iter().enumerate() {
            let _ = writeln!(out, "{},{},{:.6}", r.label, i, ap);
        }
    }
    out
}

pub fn write_reports_csv(path: impl AsRef<Path>, reports: &[EvalReport]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, reports_to_csv(reports)).map_err(|e| Error::io(path, e))
}

pub fn write_per_query_ap_csv(path: impl AsRef<Path>, reports: &[EvalReport]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, per_query_ap_csv(reports)).map_err(|e| Error::io(path, e))
}
