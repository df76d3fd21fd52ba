//! Multi-assignment k-means hashing: codebook training, MEAN/MINx
//! binarization of centroid-distance profiles, and Hamming distance.
//!
//! Each centroid of the codebook owns one bit of the hash code, so the code
//! width equals the number of centroids. MEAN sets the bits of centroids
//! closer than the mean centroid distance; MINx sets exactly the bits of the
//! N smallest distances.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vectors::{l2_squared_unchecked, FeatureVector};

/// Hash codes are stored in a single 64-bit word, so the code width (and the
/// number of centroids) is capped at 64.
pub const MAX_CODE_WIDTH: usize = 64;

/// Fixed-width binary code; bit `i` (LSB-first) belongs to centroid `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HashCode {
    bits: u64,
    width: u8,
}

impl HashCode {
    pub fn new(bits: u64, width: usize) -> Result<Self> {
        if width == 0 || width > MAX_CODE_WIDTH {
            return Err(Error::InvalidParameter(format!(
                "code width {width} outside 1..={MAX_CODE_WIDTH}"
            )));
        }
        if width < 64 && (bits >> width) != 0 {
            return Err(Error::InvalidParameter(format!(
                "bits 0x{bits:x} exceed width {width}"
            )));
        }
        Ok(HashCode {
            bits,
            width: width as u8,
        })
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn popcount(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn bit(&self, i: usize) -> bool {
        debug_assert!(i < self.width());
        (self.bits >> i) & 1 == 1
    }

    /// 8-byte little-endian representation, the input to gate hashing and
    /// the serialized form.
    pub fn to_le_bytes(&self) -> [u8; 8] {
        self.bits.to_le_bytes()
    }
}

impl fmt::Display for HashCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:0width$b}", self.bits, width = self.width())
    }
}

/// Hamming distance `popcount(a XOR b)`; the widths must agree.
pub fn hamming(a: HashCode, b: HashCode) -> Result<u32> {
    if a.width != b.width {
        return Err(Error::WidthMismatch {
            left: a.width(),
            right: b.width(),
        });
    }
    Ok((a.bits ^ b.bits).count_ones())
}

/// k-means centroids; centroid index = bit position in the hash code.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: Vec<FeatureVector>,
    dim: usize,
    trained_on: u64,
}

const CODEBOOK_MAGIC: &[u8; 4] = b"BGCB";
const CODEBOOK_VERSION: u32 = 1;

impl Codebook {
    pub fn new(centroids: Vec<FeatureVector>) -> Result<Self> {
        Self::with_training_count(centroids, 0)
    }

    fn with_training_count(centroids: Vec<FeatureVector>, trained_on: u64) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::EmptyInput("codebook centroids"));
        }
        if centroids.len() > MAX_CODE_WIDTH {
            return Err(Error::InvalidParameter(format!(
                "{} centroids exceed the maximum code width {MAX_CODE_WIDTH}",
                centroids.len()
            )));
        }
        let dim = centroids[0].dim();
        for c in &centroids {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.dim(),
                });
            }
        }
        Ok(Codebook {
            centroids,
            dim,
            trained_on,
        })
    }

    /// Number of centroids == hash code width in bits.
    pub fn k_centroids(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroids(&self) -> &[FeatureVector] {
        &self.centroids
    }

    /// Training-set size recorded at training time (0 for hand-built books).
    pub fn trained_on(&self) -> u64 {
        self.trained_on
    }

    pub fn write_to(&self, writer: &mut impl Write) -> std::io::Result<()> {
        writer.write_all(CODEBOOK_MAGIC)?;
        writer.write_all(&CODEBOOK_VERSION.to_le_bytes())?;
        writer.write_all(&(self.k_centroids() as u32).to_le_bytes())?;
        writer.write_all(&(self.dim as u32).to_le_bytes())?;
        writer.write_all(&self.trained_on.to_le_bytes())?;
        for c in &self.centroids {
            for &x in c.values() {
                writer.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(reader: &mut impl Read, path: &Path) -> Result<Self> {
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != CODEBOOK_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: "BGCB",
            });
        }
        let mut u32buf = [0u8; 4];
        reader.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
        let version = u32::from_le_bytes(u32buf);
        if version != CODEBOOK_VERSION {
            return Err(Error::UnsupportedVersion {
                path: path.to_path_buf(),
                got: version,
                supported: CODEBOOK_VERSION,
            });
        }
        reader.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
        let k = u32::from_le_bytes(u32buf) as usize;
        reader.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
        let dim = u32::from_le_bytes(u32buf) as usize;
        let mut u64buf = [0u8; 8];
        reader.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
        let trained_on = u64::from_le_bytes(u64buf);
        if k == 0 || k > MAX_CODE_WIDTH || dim == 0 {
            return Err(Error::corrupt(path, format!("implausible header k={k} dim={dim}")));
        }
        let mut centroids = Vec::with_capacity(k);
        for i in 0..k {
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                reader.read_exact(&mut u32buf).map_err(|e| {
                    if e.kind() == std::io::ErrorKind::UnexpectedEof {
                        Error::corrupt(path, format!("centroid {i} truncated"))
                    } else {
                        Error::io(path, e)
                    }
                })?;
                values.push(f32::from_le_bytes(u32buf));
            }
            centroids.push(FeatureVector::new(values).map_err(|_| {
                Error::corrupt(path, format!("centroid {i} has non-finite components"))
            })?);
        }
        Codebook::with_training_count(centroids, trained_on)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        self.write_to(&mut writer).map_err(|e| Error::io(path, e))?;
        writer.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file), path)
    }
}

/// Distances from `v` to every centroid, in centroid order.
pub fn distance_profile(v: &FeatureVector, codebook: &Codebook) -> Result<Vec<f64>> {
    if v.dim() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            got: v.dim(),
        });
    }
    Ok(codebook
        .centroids
        .iter()
        .map(|c| l2_squared_unchecked(v.values(), c.values()).sqrt())
        .collect())
}

fn check_profile(profile: &[f64]) -> Result<()> {
    if profile.is_empty() {
        return Err(Error::EmptyInput("distance profile"));
    }
    if profile.len() > MAX_CODE_WIDTH {
        return Err(Error::InvalidParameter(format!(
            "profile length {} exceeds the maximum code width {MAX_CODE_WIDTH}",
            profile.len()
        )));
    }
    if let Some(position) = profile.iter().position(|d| !d.is_finite()) {
        return Err(Error::NonFinite { position });
    }
    Ok(())
}

/// MEAN rule: bit `i` set iff `profile[i]` is strictly below the arithmetic
/// mean of the profile. An all-equal profile maps to code 0.
pub fn binarize_mean(profile: &[f64]) -> Result<HashCode> {
    check_profile(profile)?;
    let mean = profile.iter().sum::<f64>() / profile.len() as f64;
    let mut bits = 0u64;
    for (i, &d) in profile.iter().enumerate() {
        if d < mean {
            bits |= 1 << i;
        }
    }
    HashCode::new(bits, profile.len())
}

/// MINx rule: exactly the bits of the `n_smallest` smallest distances are
/// set; ties broken by lower centroid index, so popcount is always N.
pub fn binarize_minx(profile: &[f64], n_smallest: usize) -> Result<HashCode> {
    check_profile(profile)?;
    if n_smallest == 0 || n_smallest > profile.len() {
        return Err(Error::InvalidParameter(format!(
            "n_smallest {} outside 1..={}",
            n_smallest,
            profile.len()
        )));
    }
    let mut order: Vec<usize> = (0..profile.len()).collect();
    order.sort_by(|&a, &b| profile[a].total_cmp(&profile[b]).then(a.cmp(&b)));
    let mut bits = 0u64;
    for &i in order.iter().take(n_smallest) {
        bits |= 1 << i;
    }
    HashCode::new(bits, profile.len())
}

/// Binarization rule selector: MEAN or MINx with its N.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binarizer {
    Mean,
    MinX { n_smallest: usize },
}

impl Binarizer {
    pub fn binarize(&self, profile: &[f64]) -> Result<HashCode> {
        match self {
            Binarizer::Mean => binarize_mean(profile),
            Binarizer::MinX { n_smallest } => binarize_minx(profile, *n_smallest),
        }
    }

    /// Hash a feature vector: distance profile against the codebook, then
    /// the configured rule.
    pub fn code_for(&self, v: &FeatureVector, codebook: &Codebook) -> Result<HashCode> {
        self.binarize(&distance_profile(v, codebook)?)
    }
}

impl fmt::Display for Binarizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binarizer::Mean => write!(f, "mean"),
            Binarizer::MinX { n_smallest } => write!(f, "min{n_smallest}"),
        }
    }
}

impl FromStr for Binarizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "mean" {
            return Ok(Binarizer::Mean);
        }
        if let Some(n) = s.strip_prefix("min") {
            let n_smallest: usize = n
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad binarizer `{s}`")))?;
            return Ok(Binarizer::MinX { n_smallest });
        }
        Err(Error::InvalidParameter(format!("bad binarizer `{s}`")))
    }
}

/// Outcome of a training run, with the recorded objective trace
/// (sum of squared distances to the nearest centroid, per iteration).
#[derive(Debug, Clone)]
pub struct KMeansRun {
    pub codebook: Codebook,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Lloyd k-means under L2 with k-means++ seeding. Deterministic for a fixed
/// seed; stops when no assignment changes or after `max_iters` iterations.
pub fn kmeans_train(
    vectors: &[FeatureVector],
    k_centroids: usize,
    max_iters: usize,
    seed: u64,
) -> Result<Codebook> {
    Ok(kmeans_train_detailed(vectors, k_centroids, max_iters, seed)?.codebook)
}

/// As [`kmeans_train`], also returning the objective trace.
pub fn kmeans_train_detailed(
    vectors: &[FeatureVector],
    k_centroids: usize,
    max_iters: usize,
    seed: u64,
) -> Result<KMeansRun> {
    if vectors.is_empty() {
        return Err(Error::EmptyInput("training vectors"));
    }
    if k_centroids == 0 || k_centroids > MAX_CODE_WIDTH {
        return Err(Error::InvalidParameter(format!(
            "k_centroids {k_centroids} outside 1..={MAX_CODE_WIDTH}"
        )));
    }
    if max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
    }
    let dim = vectors[0].dim();
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
    }
    if vectors.len() < k_centroids || distinct_count(vectors, k_centroids) < k_centroids {
        return Err(Error::TooFewVectors {
            distinct: distinct_count(vectors, usize::MAX).min(vectors.len()),
            k: k_centroids,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Centroids are tracked in f64 during training so the mean update is the
    // exact within-cluster minimizer and the objective trace stays monotone;
    // the f32 cast happens once at the end.
    let mut centroids = seed_plus_plus(vectors, k_centroids, &mut rng);

    let mut assignments = vec![usize::MAX; vectors.len()];
    let mut point_d2 = vec![0.0f64; vectors.len()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iters {
        iterations += 1;
        let mut changed = false;
        let mut objective = 0.0f64;
        for (i, v) in vectors.iter().enumerate() {
            let (best, d2) = nearest_centroid(v.values(), &centroids);
            objective += d2;
            point_d2[i] = d2;
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        trace.push(objective);
        if !changed {
            converged = true;
            break;
        }

        let mut counts = vec![0u64; k_centroids];
        let mut sums = vec![vec![0.0f64; dim]; k_centroids];
        for (v, &a) in vectors.iter().zip(assignments.iter()) {
            counts[a] += 1;
            for (s, &x) in sums[a].iter_mut().zip(v.values()) {
                *s += x as f64;
            }
        }
        for c in 0..k_centroids {
            if counts[c] == 0 {
                continue;
            }
            for (dst, s) in centroids[c].iter_mut().zip(sums[c].iter()) {
                *dst = s / counts[c] as f64;
            }
        }
        repair_empty_clusters(vectors, &mut centroids, &counts, &point_d2);
    }

    let centroids_f32 = centroids
        .into_iter()
        .map(|c| FeatureVector::new(c.into_iter().map(|x| x as f32).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(KMeansRun {
        codebook: Codebook::with_training_count(centroids_f32, vectors.len() as u64)?,
        objective_trace: trace,
        iterations,
        converged,
    })
}

fn distinct_count(vectors: &[FeatureVector], stop_at: usize) -> usize {
    let mut seen: HashSet<Vec<u32>> = HashSet::with_capacity(vectors.len().min(4096));
    for v in vectors {
        seen.insert(v.values().iter().map(|x| x.to_bits()).collect());
        if seen.len() >= stop_at {
            break;
        }
    }
    seen.len()
}

fn dist2_to_f64(point: &[f32], centroid: &[f64]) -> f64 {
    let mut acc = 0.0f64;
    for (&p, &c) in point.iter().zip(centroid.iter()) {
        let d = p as f64 - c;
        acc += d * d;
    }
    acc
}

fn nearest_centroid(point: &[f32], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d2 = dist2_to_f64(point, centroid);
        if d2 < best_d2 {
            best = c;
            best_d2 = d2;
        }
    }
    (best, best_d2)
}

/// k-means++: first center uniform, the rest sampled proportionally to the
/// squared distance from the nearest chosen center.
fn seed_plus_plus(vectors: &[FeatureVector], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let as_f64 = |v: &FeatureVector| v.values().iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let first = rng.random_range(0..vectors.len());
    let mut centroids = vec![as_f64(&vectors[first])];
    let mut d2: Vec<f64> = vectors
        .iter()
        .map(|v| dist2_to_f64(v.values(), &centroids[0]))
        .collect();
    while centroids.len() < k {
        // Distinctness was checked up front, so some weight is positive.
        let dist = WeightedIndex::new(d2.iter().copied())
            .expect("positive total weight for k-means++ sampling");
        let next = dist.sample(rng);
        centroids.push(as_f64(&vectors[next]));
        let newest = centroids.last().expect("just pushed");
        for (slot, v) in d2.iter_mut().zip(vectors.iter()) {
            let d = dist2_to_f64(v.values(), newest);
            if d < *slot {
                *slot = d;
            }
        }
    }
    centroids
}

/// Reseed each empty cluster with the point currently farthest from its
/// assigned centroid (ties to the lowest point index), one point per repair.
fn repair_empty_clusters(
    vectors: &[FeatureVector],
    centroids: &mut [Vec<f64>],
    counts: &[u64],
    point_d2: &[f64],
) {
    let mut taken: HashSet<usize> = HashSet::new();
    for c in 0..centroids.len() {
        if counts[c] != 0 {
            continue;
        }
        let mut farthest: Option<(usize, f64)> = None;
        for (i, &d2) in point_d2.iter().enumerate() {
            if taken.contains(&i) {
                continue;
            }
            let better = match farthest {
                None => true,
                Some((_, best)) => d2 > best,
            };
            if better {
                farthest = Some((i, d2));
            }
        }
        if let Some((i, _)) = farthest {
            taken.insert(i);
            for (dst, &x) in centroids[c].iter_mut().zip(vectors[i].values()) {
                *dst = x as f64;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(values: &[f32]) -> FeatureVector {
        FeatureVector::new(values.to_vec()).unwrap()
    }

    fn code(bits: u64, width: usize) -> HashCode {
        HashCode::new(bits, width).unwrap()
    }

    #[test]
    fn hamming_basics() {
        let x = code(0b1010, 4);
        assert_eq!(hamming(x, x).unwrap(), 0);
        assert_eq!(hamming(code(0b1010, 4), code(0b0101, 4)).unwrap(), 4);
        assert!(matches!(
            hamming(code(0b1, 4), code(0b1, 8)),
            Err(Error::WidthMismatch { left: 4, right: 8 })
        ));
    }

    #[test]
    fn hamming_is_a_metric_at_width_8() {
        // Exhaustive: identity, symmetry and the triangle inequality.
        let all: Vec<HashCode> = (0u64..256).map(|b| code(b, 8)).collect();
        for &a in &all {
            assert_eq!(hamming(a, a).unwrap(), 0);
        }
        for &a in &all {
            for &b in &all {
                assert_eq!(hamming(a, b).unwrap(), hamming(b, a).unwrap());
            }
        }
        for &a in all.iter().step_by(17) {
            for &b in all.iter().step_by(13) {
                for &c in all.iter().step_by(11) {
                    assert!(
                        hamming(a, c).unwrap() <= hamming(a, b).unwrap() + hamming(b, c).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn binarize_mean_forced_examples() {
        assert_eq!(binarize_mean(&[2.0, 4.0, 2.0, 4.0]).unwrap().bits(), 0b0101);
        assert_eq!(binarize_mean(&[1.0, 1.0, 1.0, 1.0]).unwrap().bits(), 0);
    }

    #[test]
    fn binarize_mean_matches_independent_reevaluation() {
        // Second, independent statement of the rule.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let profile: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..10.0)).collect();
            let got = binarize_mean(&profile).unwrap();
            let mean: f64 = profile.iter().sum::<f64>() / 64.0;
            for (i, &d) in profile.iter().enumerate() {
                assert_eq!(got.bit(i), d < mean, "bit {i} of profile {profile:?}");
            }
        }
    }

    #[test]
    fn binarize_minx_forced_examples() {
        let profile = [0.9, 0.2, 0.5, 0.7, 0.1, 0.4, 0.8, 0.3];
        assert_eq!(binarize_minx(&profile, 3).unwrap().bits(), 0b10010010);
        assert_eq!(binarize_minx(&profile, 8).unwrap().bits(), 0xff);
        // Tie at 0.5 broken by the lower centroid index.
        assert_eq!(binarize_minx(&[0.5, 0.5, 0.5, 0.1], 2).unwrap().bits(), 0b1001);
        assert!(matches!(
            binarize_minx(&profile, 0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            binarize_minx(&profile, 9),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn distance_profile_basics() {
        let cb = Codebook::new(vec![fv(&[3.0, 4.0]), fv(&[6.0, 8.0])]).unwrap();
        let origin = fv(&[0.0, 0.0]);
        assert_eq!(distance_profile(&origin, &cb).unwrap(), vec![5.0, 10.0]);

        let cb4 = Codebook::new(vec![
            fv(&[0.0, 1.0]),
            fv(&[1.0, 0.0]),
            fv(&[1.0, 1.0]),
            fv(&[0.5, 0.5]),
        ])
        .unwrap();
        let p = distance_profile(&fv(&[0.5, 0.5]), &cb4).unwrap();
        assert_eq!(p[3], 0.0);
        // Invariant to rebuilding the codebook from copied centroids.
        let cb4_copy = Codebook::new(cb4.centroids().to_vec()).unwrap();
        assert_eq!(p, distance_profile(&fv(&[0.5, 0.5]), &cb4_copy).unwrap());

        assert!(matches!(
            distance_profile(&fv(&[1.0]), &cb),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kmeans_four_corners_exact() {
        let corners = vec![
            fv(&[0.0, 0.0]),
            fv(&[0.0, 1.0]),
            fv(&[1.0, 0.0]),
            fv(&[1.0, 1.0]),
        ];
        let run = kmeans_train_detailed(&corners, 4, 50, 3).unwrap();
        assert!(run.converged);
        assert_eq!(*run.objective_trace.last().unwrap(), 0.0);
        let mut got: Vec<Vec<f32>> = run
            .codebook
            .centroids()
            .iter()
            .map(|c| c.values().to_vec())
            .collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            got,
            vec![
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0]
            ]
        );
    }

    #[test]
    fn kmeans_k1_is_component_mean() {
        let points = vec![fv(&[1.0, 5.0]), fv(&[3.0, 1.0]), fv(&[2.0, 0.0])];
        let cb = kmeans_train(&points, 1, 10, 0).unwrap();
        let mean: Vec<f32> = (0..2)
            .map(|d| {
                (points.iter().map(|p| p.values()[d] as f64).sum::<f64>() / points.len() as f64)
                    as f32
            })
            .collect();
        assert_eq!(cb.centroids()[0].values(), mean.as_slice());
        assert_eq!(cb.trained_on(), 3);
    }

    #[test]
    fn kmeans_errors() {
        assert!(matches!(
            kmeans_train(&[], 2, 10, 0),
            Err(Error::EmptyInput(_))
        ));
        let one = vec![fv(&[1.0])];
        assert!(matches!(
            kmeans_train(&one, 2, 10, 0),
            Err(Error::TooFewVectors { .. })
        ));
        let dup = vec![fv(&[1.0]), fv(&[1.0])];
        assert!(matches!(
            kmeans_train(&dup, 2, 10, 0),
            Err(Error::TooFewVectors { distinct: 1, k: 2 })
        ));
        assert!(matches!(
            kmeans_train(&dup, 1, 0, 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn kmeans_is_deterministic() {
        let data = crate::vectors::generate_clustered(3, 20, 6, 0.05, 21).unwrap();
        let vectors: Vec<FeatureVector> =
            data.base().iter().map(|r| r.vector.clone()).collect();
        let a = kmeans_train(&vectors, 8, 50, 42).unwrap();
        let b = kmeans_train(&vectors, 8, 50, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kmeans_objective_trace_never_rises() {
        for seed in 0..6u64 {
            let data = crate::vectors::generate_clustered(4, 25, 6, 0.2, seed).unwrap();
            let vectors: Vec<FeatureVector> =
                data.base().iter().map(|r| r.vector.clone()).collect();
            let run = kmeans_train_detailed(&vectors, 10, 60, seed).unwrap();
            assert!(!run.objective_trace.is_empty());
            for pair in run.objective_trace.windows(2) {
                assert!(
                    pair[1] <= pair[0] * (1.0 + 1e-9) + 1e-12,
                    "objective rose {} -> {} with seed {seed}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn codebook_roundtrip() {
        let cb = Codebook::new(vec![fv(&[1.5, -2.25]), fv(&[0.0, 3.75])]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cb.bin");
        cb.save(&path).unwrap();
        let back = Codebook::load(&path).unwrap();
        assert_eq!(cb, back);

        std::fs::write(&path, b"XXXXGARBAGE").unwrap();
        assert!(matches!(Codebook::load(&path), Err(Error::BadMagic { .. })));
    }

    proptest! {
        #[test]
        fn minx_popcount_always_n(
            profile in proptest::collection::vec(0.0f64..100.0, 1..=64),
            n_raw in 1usize..=64,
        ) {
            let n = 1 + (n_raw - 1) % profile.len();
            let c = binarize_minx(&profile, n).unwrap();
            prop_assert_eq!(c.popcount() as usize, n);
        }

        #[test]
        fn minx_nested_in_n(
            profile in proptest::collection::btree_set(0u32..1_000_000, 2..=64)
                .prop_map(|set| set.into_iter().map(f64::from).collect::<Vec<_>>())
                .prop_shuffle(),
        ) {
            // Distinct values avoid boundary ties; MINx(N1) must be a
            // subset of MINx(N2) for N1 < N2.
            let n2 = profile.len();
            let n1 = 1 + n2 / 2;
            let c1 = binarize_minx(&profile, n1).unwrap();
            let c2 = binarize_minx(&profile, n2).unwrap();
            prop_assert_eq!(c1.bits() & c2.bits(), c1.bits());
        }

        #[test]
        fn binarization_ignores_positive_scaling(
            profile in proptest::collection::vec(0.01f64..100.0, 1..=64),
            scale_exp in -8i32..=8,
        ) {
            // Powers of two keep the scaling exact in floating point.
            let scale = (2.0f64).powi(scale_exp);
            let scaled: Vec<f64> = profile.iter().map(|d| d * scale).collect();
            prop_assert_eq!(
                binarize_mean(&profile).unwrap(),
                binarize_mean(&scaled).unwrap()
            );
            let n = 1 + profile.len() / 2;
            prop_assert_eq!(
                binarize_minx(&profile, n).unwrap(),
                binarize_minx(&scaled, n).unwrap()
            );
        }

        #[test]
        fn hamming_symmetry(a in any::<u64>(), b in any::<u64>()) {
            let x = HashCode::new(a, 64).unwrap();
            let y = HashCode::new(b, 64).unwrap();
            prop_assert_eq!(hamming(x, y).unwrap(), hamming(y, x).unwrap());
        }
    }
}
