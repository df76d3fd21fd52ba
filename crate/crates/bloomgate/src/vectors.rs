//! Feature vectors, distance functions and synthetic dataset generation.
//!
//! Descriptor components are stored as 32-bit floats (matching the fvecs
//! ecosystem) and widened to 64-bit for distance accumulation, so dot
//! products over high-dimensional descriptors do not lose precision.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub mod io;

/// Record identifier, unique within one dataset.
pub type RecordId = u32;

/// Dense real-valued descriptor. Components are finite by construction;
/// zero-norm vectors are representable (distance profiles of the origin are
/// legal) but are rejected wherever they enter the retrieval pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f32>,
}

impl FeatureVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("feature vector"));
        }
        if let Some(position) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { position });
        }
        Ok(FeatureVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| {
                let v = v as f64;
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    /// L2-normalized copy, used by the optional normalize-on-ingest path.
    pub fn normalized(&self) -> Result<Self> {
        let norm = self.l2_norm();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        FeatureVector::new(self.values.iter().map(|&v| (v as f64 / norm) as f32).collect())
    }
}

fn check_dims(p: &FeatureVector, q: &FeatureVector) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    Ok(())
}

/// Cosine distance `1 - p.q / (|p||q|)` in `[0, 2]`.
///
/// The denominator is computed as `sqrt(|p|^2 * |q|^2)` so that a self-match
/// yields exactly 0.0 and the ratio stays in `[-1, 1]` after clamping.
pub fn cosine_distance(p: &FeatureVector, q: &FeatureVector) -> Result<f64> {
    check_dims(p, q)?;
    let mut dot = 0.0f64;
    let mut pp = 0.0f64;
    let mut qq = 0.0f64;
    for (&a, &b) in p.values.iter().zip(q.values.iter()) {
        let a = a as f64;
        let b = b as f64;
        dot += a * b;
        pp += a * a;
        qq += b * b;
    }
    if pp == 0.0 || qq == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let similarity = (dot / (pp * qq).sqrt()).clamp(-1.0, 1.0);
    Ok(1.0 - similarity)
}

/// Euclidean distance, accumulated in f64.
pub fn l2_distance(p: &FeatureVector, q: &FeatureVector) -> Result<f64> {
    check_dims(p, q)?;
    Ok(l2_squared_unchecked(p.values(), q.values()).sqrt())
}

/// Squared L2 distance over raw slices; callers guarantee equal lengths.
pub(crate) fn l2_squared_unchecked(p: &[f32], q: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (&a, &b) in p.iter().zip(q.iter()) {
        let d = a as f64 - b as f64;
        acc += d * d;
    }
    acc
}

/// A feature vector carrying its record identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVector {
    pub id: RecordId,
    pub vector: FeatureVector,
}

impl LabeledVector {
    pub fn new(id: RecordId, vector: FeatureVector) -> Self {
        LabeledVector { id, vector }
    }
}

/// Base records, query records and the relevance judgments binding them.
///
/// All vectors share one dimensionality, ids are unique per side, ground
/// truth references only existing ids, and zero-norm vectors are rejected
/// here (ingestion), not silently fixed.
#[derive(Debug, Clone)]
pub struct Dataset {
    base: Vec<LabeledVector>,
    queries: Vec<LabeledVector>,
    ground_truth: BTreeMap<RecordId, BTreeSet<RecordId>>,
    dim: usize,
}

impl Dataset {
    pub fn new(
        base: Vec<LabeledVector>,
        queries: Vec<LabeledVector>,
        ground_truth: BTreeMap<RecordId, BTreeSet<RecordId>>,
    ) -> Result<Self> {
        if base.is_empty() {
            return Err(Error::EmptyInput("dataset base"));
        }
        let dim = base[0].vector.dim();
        let mut base_ids = HashSet::with_capacity(base.len());
        for record in &base {
            if record.vector.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: record.vector.dim(),
                });
            }
            if record.vector.is_zero() {
                return Err(Error::ZeroNorm);
            }
            if !base_ids.insert(record.id) {
                return Err(Error::DuplicateId { id: record.id });
            }
        }
        let mut query_ids = HashSet::with_capacity(queries.len());
        for record in &queries {
            if record.vector.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: record.vector.dim(),
                });
            }
            if record.vector.is_zero() {
                return Err(Error::ZeroNorm);
            }
            if !query_ids.insert(record.id) {
                return Err(Error::DuplicateId { id: record.id });
            }
        }
        for (query_id, relevant) in &ground_truth {
            if !query_ids.contains(query_id) {
                return Err(Error::UnknownId { id: *query_id });
            }
            for id in relevant {
                if !base_ids.contains(id) {
                    return Err(Error::UnknownId { id: *id });
                }
            }
        }
        Ok(Dataset {
            base,
            queries,
            ground_truth,
            dim,
        })
    }

    pub fn base(&self) -> &[LabeledVector] {
        &self.base
    }

    pub fn queries(&self) -> &[LabeledVector] {
        &self.queries
    }

    pub fn ground_truth(&self) -> &BTreeMap<RecordId, BTreeSet<RecordId>> {
        &self.ground_truth
    }

    pub fn relevant_for(&self, query_id: RecordId) -> Option<&BTreeSet<RecordId>> {
        self.ground_truth.get(&query_id)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// L2-normalize every base and query vector in place.
    pub fn normalize(self) -> Result<Self> {
        let base = self
            .base
            .into_iter()
            .map(|r| Ok(LabeledVector::new(r.id, r.vector.normalized()?)))
            .collect::<Result<Vec<_>>>()?;
        let queries = self
            .queries
            .into_iter()
            .map(|r| Ok(LabeledVector::new(r.id, r.vector.normalized()?)))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(base, queries, self.ground_truth)
    }
}

/// A synthetic dataset plus the generator state that produced it, for tests
/// that compare learned structure against the known cluster layout.
#[derive(Debug, Clone)]
pub struct ClusteredDataset {
    pub dataset: Dataset,
    /// True cluster centers, in cluster order.
    pub centers: Vec<FeatureVector>,
    /// Generating cluster of each base record, parallel to `dataset.base()`.
    pub base_cluster: Vec<usize>,
}

/// Deterministic clustered test data with known ground truth.
///
/// Cluster centers are drawn uniformly in the unit hypercube; each cluster
/// contributes `points_per_cluster` base points and one query point, all
/// center + Gaussian noise of standard deviation `spread`. The ground truth
/// of a query is the set of base members of its generating cluster. Base ids
/// are 0..n_base; query ids continue after them.
pub fn generate_clustered(
    num_clusters: usize,
    points_per_cluster: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    Ok(generate_clustered_detailed(num_clusters, points_per_cluster, dim, spread, seed)?.dataset)
}

/// As [`generate_clustered`], but also exposes the true cluster centers.
pub fn generate_clustered_detailed(
    num_clusters: usize,
    points_per_cluster: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<ClusteredDataset> {
    if num_clusters == 0 || points_per_cluster == 0 || dim == 0 {
        return Err(Error::InvalidParameter(
            "num_clusters, points_per_cluster and dim must be positive".into(),
        ));
    }
    if !spread.is_finite() || spread <= 0.0 {
        return Err(Error::InvalidParameter("spread must be positive and finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_base = num_clusters * points_per_cluster;

    let mut centers = Vec::with_capacity(num_clusters);
    let mut base = Vec::with_capacity(n_base);
    let mut base_cluster = Vec::with_capacity(n_base);
    let mut queries = Vec::with_capacity(num_clusters);
    let mut ground_truth = BTreeMap::new();

    for cluster in 0..num_clusters {
        let center: Vec<f32> = (0..dim).map(|_| rng.random_range(0.0f32..1.0f32)).collect();
        let noisy = |rng: &mut ChaCha8Rng| -> Result<FeatureVector> {
            FeatureVector::new(
                center
                    .iter()
                    .map(|&c| {
                        let noise: f64 = rng.sample(StandardNormal);
                        (c as f64 + noise * spread) as f32
                    })
                    .collect(),
            )
        };
        let members: BTreeSet<RecordId> = (0..points_per_cluster)
            .map(|i| (cluster * points_per_cluster + i) as RecordId)
            .collect();
        for id in &members {
            base.push(LabeledVector::new(*id, noisy(&mut rng)?));
            base_cluster.push(cluster);
        }
        let query_id = (n_base + cluster) as RecordId;
        queries.push(LabeledVector::new(query_id, noisy(&mut rng)?));
        ground_truth.insert(query_id, members);
        centers.push(FeatureVector::new(center)?);
    }

    Ok(ClusteredDataset {
        dataset: Dataset::new(base, queries, ground_truth)?,
        centers,
        base_cluster,
    })
}
