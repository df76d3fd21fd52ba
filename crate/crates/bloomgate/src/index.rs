//! Sharded inverted-file index of hash codes, one Bloom gatekeeper per
//! shard, and the two-step query pipeline: gate check, Hamming-threshold
//! scan over the shard's distinct codes, cosine re-ranking of candidates.
//!
//! Records are horizontally partitioned: every base record lives in exactly
//! one shard, all shards share the codebook and binarizer. A query whose
//! code is rejected by every gate returns `gated_out` with no candidate
//! work; that early exit is the entire speedup mechanism.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::bloom::{optimal_k, BloomFilter, BloomParams};
use crate::error::{Error, Result};
use crate::quantizer::{hamming, Binarizer, Codebook, HashCode};
use crate::vectors::{cosine_distance, FeatureVector, LabeledVector, RecordId};

/// Rule assigning records to shards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShardPolicy {
    /// Record position `i` goes to shard `i mod S`; balanced by construction.
    RoundRobin,
    /// Record id modulo S, so co-located ids are stable under reordering.
    HashId,
}

impl fmt::Display for ShardPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShardPolicy::RoundRobin => write!(f, "round-robin"),
            ShardPolicy::HashId => write!(f, "hash-id"),
        }
    }
}

impl FromStr for ShardPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "round-robin" | "roundrobin" => Ok(ShardPolicy::RoundRobin),
            "hash-id" | "hashid" => Ok(ShardPolicy::HashId),
            other => Err(Error::InvalidParameter(format!("bad shard policy `{other}`"))),
        }
    }
}

impl ShardPolicy {
    fn shard_for(&self, position: usize, id: RecordId, num_shards: usize) -> usize {
        match self {
            ShardPolicy::RoundRobin => position % num_shards,
            ShardPolicy::HashId => id as usize % num_shards,
        }
    }
}

/// Query-time knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryParams {
    /// Maximum Hamming distance admitted into the candidate set.
    pub hamming_threshold: u32,
    /// Result list length.
    pub top_r: usize,
    /// Consult the per-shard gates before scanning.
    pub use_gates: bool,
}

impl QueryParams {
    pub fn new(hamming_threshold: u32, top_r: usize, use_gates: bool) -> Result<Self> {
        if top_r == 0 {
            return Err(Error::InvalidParameter("top_r must be at least 1".into()));
        }
        Ok(QueryParams {
            hamming_threshold,
            top_r,
            use_gates,
        })
    }
}

/// Ranked hits plus the instrumentation of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    /// `(record id, cosine distance)` ascending by distance, ties by id.
    pub hits: Vec<(RecordId, f64)>,
    /// True when every gate rejected the query code.
    pub gated_out: bool,
    /// Shards whose inverted file was actually scanned.
    pub shards_scanned: usize,
    /// Candidate records re-ranked with the full vectors.
    pub candidates_examined: usize,
    pub elapsed: Duration,
}

impl QueryResult {
    /// Hit ids in rank order.
    pub fn ranked_ids(&self) -> Vec<RecordId> {
        self.hits.iter().map(|&(id, _)| id).collect()
    }

    /// Equality ignoring the wall-clock field.
    pub fn same_outcome(&self, other: &QueryResult) -> bool {
        self.hits == other.hits
            && self.gated_out == other.gated_out
            && self.shards_scanned == other.shards_scanned
            && self.candidates_examined == other.candidates_examined
    }
}

/// One horizontal partition: gate, inverted file, vector store.
#[derive(Debug, Clone)]
pub struct Shard {
    gate: BloomFilter,
    postings: HashMap<HashCode, Vec<RecordId>>,
    store: HashMap<RecordId, FeatureVector>,
}

impl Shard {
    pub fn gate(&self) -> &BloomFilter {
        &self.gate
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn distinct_codes(&self) -> usize {
        self.postings.len()
    }

    pub fn record_ids(&self) -> impl Iterator<Item = RecordId> + '_ {
        self.store.keys().copied()
    }

    pub fn postings_for(&self, code: HashCode) -> Option<&[RecordId]> {
        self.postings.get(&code).map(|ids| ids.as_slice())
    }
}

/// Aggregate outcome of a query batch.
#[derive(Debug)]
pub struct BatchOutcome {
    /// Per-query outcomes in input order; failures do not abort the batch.
    pub results: Vec<Result<QueryResult>>,
    /// Wall-clock time of the whole batch.
    pub total_time: Duration,
    /// `total_time / results.len()`.
    pub mean_query_time: Duration,
}

const SHARD_MAGIC: &[u8; 4] = b"BGSH";
const SHARD_VERSION: u32 = 1;
const INDEX_MANIFEST_FORMAT: &str = "bloomgate-index";
const INDEX_MANIFEST_VERSION: u32 = 1;

/// The full index: shards plus the shared codebook and binarizer.
#[derive(Debug, Clone)]
pub struct ShardedIndex {
    shards: Vec<Shard>,
    codebook: Codebook,
    binarizer: Binarizer,
    policy: ShardPolicy,
    bloom_factor: f64,
    len: usize,
}

/// Build an index: each record is assigned to one shard by `policy`, its
/// code computed once, posted in that shard's inverted file and inserted
/// into that shard's gate. Gates are sized `m = ceil(c * n_shard)` with
/// `k = optimal_k(m, n_shard)`.
pub fn build_index(
    base: &[LabeledVector],
    codebook: Codebook,
    binarizer: Binarizer,
    num_shards: usize,
    bloom_size_factor: f64,
    policy: ShardPolicy,
) -> Result<ShardedIndex> {
    if base.is_empty() {
        return Err(Error::EmptyInput("index base"));
    }
    if num_shards == 0 {
        return Err(Error::InvalidParameter("num_shards must be at least 1".into()));
    }
    if !bloom_size_factor.is_finite() || bloom_size_factor < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "bloom_size_factor must be >= 1, got {bloom_size_factor}"
        )));
    }
    if let Binarizer::MinX { n_smallest } = binarizer {
        if n_smallest == 0 || n_smallest > codebook.k_centroids() {
            return Err(Error::InvalidParameter(format!(
                "n_smallest {n_smallest} outside 1..={}",
                codebook.k_centroids()
            )));
        }
    }

    let mut seen = HashMap::with_capacity(base.len());
    let mut members: Vec<Vec<(RecordId, HashCode, &FeatureVector)>> = vec![Vec::new(); num_shards];
    for (position, record) in base.iter().enumerate() {
        if record.vector.dim() != codebook.dim() {
            return Err(Error::DimensionMismatch {
                expected: codebook.dim(),
                got: record.vector.dim(),
            });
        }
        if record.vector.is_zero() {
            return Err(Error::ZeroNorm);
        }
        if seen.insert(record.id, ()).is_some() {
            return Err(Error::DuplicateId { id: record.id });
        }
        let code = binarizer.code_for(&record.vector, &codebook)?;
        members[policy.shard_for(position, record.id, num_shards)].push((
            record.id,
            code,
            &record.vector,
        ));
    }

    let mut shards = Vec::with_capacity(num_shards);
    for assigned in members {
        let n_shard = assigned.len() as u64;
        let n_eff = n_shard.max(1);
        let m_bits = ((bloom_size_factor * n_eff as f64).ceil() as u64).max(n_eff);
        let params = BloomParams::new(m_bits, n_eff, optimal_k(m_bits, n_eff)?)?;
        let mut gate = BloomFilter::new(params);
        let mut postings: HashMap<HashCode, Vec<RecordId>> = HashMap::new();
        let mut store = HashMap::with_capacity(assigned.len());
        for (id, code, vector) in assigned {
            gate.insert(code);
            postings.entry(code).or_default().push(id);
            store.insert(id, vector.clone());
        }
        for ids in postings.values_mut() {
            ids.sort_unstable();
        }
        shards.push(Shard {
            gate,
            postings,
            store,
        });
    }

    Ok(ShardedIndex {
        shards,
        codebook,
        binarizer,
        policy,
        bloom_factor: bloom_size_factor,
        len: base.len(),
    })
}

impl ShardedIndex {
    pub fn num_shards(&self) -> usize {
        self.shards.len()
    }

    pub fn shards(&self) -> &[Shard] {
        &self.shards
    }

    /// Total records indexed.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn binarizer(&self) -> Binarizer {
        self.binarizer
    }

    pub fn policy(&self) -> ShardPolicy {
        self.policy
    }

    pub fn bloom_factor(&self) -> f64 {
        self.bloom_factor
    }

    pub fn code_width(&self) -> usize {
        self.codebook.k_centroids()
    }

    /// Hash a query vector with the index's codebook and binarizer.
    pub fn code_for(&self, query: &FeatureVector) -> Result<HashCode> {
        self.binarizer.code_for(query, &self.codebook)
    }

    /// Two-step search: binarize the query, gate each shard, scan admitted
    /// shards' codes within the Hamming threshold, then rank the candidate
    /// records by cosine distance on the full vectors.
    pub fn query(&self, query: &FeatureVector, params: &QueryParams) -> Result<QueryResult> {
        let started = Instant::now();
        if query.dim() != self.codebook.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.codebook.dim(),
                got: query.dim(),
            });
        }
        if query.is_zero() {
            return Err(Error::ZeroNorm);
        }
        if params.top_r == 0 {
            return Err(Error::InvalidParameter("top_r must be at least 1".into()));
        }
        let width = self.code_width() as u32;
        if params.hamming_threshold > width {
            return Err(Error::InvalidParameter(format!(
                "hamming_threshold {} exceeds code width {width}",
                params.hamming_threshold
            )));
        }

        let code = self.code_for(query)?;

        let admitted: Vec<&Shard> = if params.use_gates {
            self.shards.iter().filter(|s| s.gate.contains(code)).collect()
        } else {
            self.shards.iter().collect()
        };
        if admitted.is_empty() {
            return Ok(QueryResult {
                hits: Vec::new(),
                gated_out: true,
                shards_scanned: 0,
                candidates_examined: 0,
                elapsed: started.elapsed(),
            });
        }

        let mut hits: Vec<(RecordId, f64)> = Vec::new();
        for shard in &admitted {
            for (&stored_code, ids) in &shard.postings {
                if hamming(code, stored_code)? <= params.hamming_threshold {
                    for id in ids {
                        let vector = &shard.store[id];
                        hits.push((*id, cosine_distance(query, vector)?));
                    }
                }
            }
        }
        let candidates_examined = hits.len();
        hits.sort_unstable_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        hits.truncate(params.top_r);

        Ok(QueryResult {
            hits,
            gated_out: false,
            shards_scanned: admitted.len(),
            candidates_examined,
            elapsed: started.elapsed(),
        })
    }

    /// Element-wise [`ShardedIndex::query`] over a worker pool. Per-query
    /// errors are reported in place without aborting the batch.
    /// `workers == 0` uses all available parallelism.
    pub fn query_batch(
        &self,
        queries: &[FeatureVector],
        params: &QueryParams,
        workers: usize,
    ) -> BatchOutcome {
        let started = Instant::now();
        let results: Vec<Result<QueryResult>> = if workers == 1 {
            queries.iter().map(|q| self.query(q, params)).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .expect("worker pool");
            pool.install(|| queries.par_iter().map(|q| self.query(q, params)).collect())
        };
        let total_time = started.elapsed();
        let mean_query_time = if results.is_empty() {
            Duration::ZERO
        } else {
            total_time / results.len() as u32
        };
        BatchOutcome {
            results,
            total_time,
            mean_query_time,
        }
    }

    /// Write the index as a directory: a manifest, the codebook, one shard
    /// file (postings + vector store) and one gate file per shard.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let manifest_path = dir.join("manifest.txt");
        let mut manifest = String::new();
        manifest.push_str(&format!("format={INDEX_MANIFEST_FORMAT}\n"));
        manifest.push_str(&format!("version={INDEX_MANIFEST_VERSION}\n"));
        manifest.push_str(&format!("shards={}\n", self.shards.len()));
        manifest.push_str(&format!("policy={}\n", self.policy));
        manifest.push_str(&format!("bloom_factor={}\n", self.bloom_factor));
        manifest.push_str(&format!("binarizer={}\n", self.binarizer));
        manifest.push_str(&format!("code_width={}\n", self.code_width()));
        manifest.push_str(&format!("dim={}\n", self.codebook.dim()));
        manifest.push_str(&format!("records={}\n", self.len));
        manifest.push_str("codebook=codebook.bin\n");
        std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;

        self.codebook.save(dir.join("codebook.bin"))?;

        for (i, shard) in self.shards.iter().enumerate() {
            shard.gate.save(dir.join(format!("gate_{i:04}.bloom")))?;
            let path = dir.join(format!("shard_{i:04}.bin"));
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            write_shard(&mut w, i as u32, shard, self.codebook.dim())
                .map_err(|e| Error::io(&path, e))?;
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Reload an index directory. The reloaded index answers every query
    /// identically, bit for bit, excluding timing.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join("manifest.txt");
        let text =
            std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let mut fields: HashMap<&str, &str> = HashMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::corrupt(&manifest_path, format!("bad manifest line `{line}`"))
            })?;
            fields.insert(key.trim(), value.trim());
        }
        let get = |key: &'static str| {
            fields.get(key).copied().ok_or(Error::MissingManifestKey {
                path: manifest_path.clone(),
                key,
            })
        };
        if get("format")? != INDEX_MANIFEST_FORMAT {
            return Err(Error::BadMagic {
                path: manifest_path.clone(),
                expected: INDEX_MANIFEST_FORMAT,
            });
        }
        let parse_err = |key: &str| Error::corrupt(&manifest_path, format!("unparsable `{key}`"));
        let version: u32 = get("version")?.parse().map_err(|_| parse_err("version"))?;
        if version != INDEX_MANIFEST_VERSION {
            return Err(Error::UnsupportedVersion {
                path: manifest_path.clone(),
                got: version,
                supported: INDEX_MANIFEST_VERSION,
            });
        }
        let num_shards: usize = get("shards")?.parse().map_err(|_| parse_err("shards"))?;
        let policy: ShardPolicy = get("policy")?.parse()?;
        let bloom_factor: f64 = get("bloom_factor")?
            .parse()
            .map_err(|_| parse_err("bloom_factor"))?;
        let binarizer: Binarizer = get("binarizer")?.parse()?;
        let code_width: usize = get("code_width")?.parse().map_err(|_| parse_err("code_width"))?;
        let dim: usize = get("dim")?.parse().map_err(|_| parse_err("dim"))?;
        let records: usize = get("records")?.parse().map_err(|_| parse_err("records"))?;

        let codebook = Codebook::load(dir.join(get("codebook")?))?;
        if codebook.k_centroids() != code_width {
            return Err(Error::WidthMismatch {
                left: code_width,
                right: codebook.k_centroids(),
            });
        }
        if codebook.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: codebook.dim(),
            });
        }
        if num_shards == 0 {
            return Err(Error::corrupt(&manifest_path, "zero shards"));
        }

        let mut shards = Vec::with_capacity(num_shards);
        let mut total = 0usize;
        for i in 0..num_shards {
            let gate = BloomFilter::load(dir.join(format!("gate_{i:04}.bloom")))?;
            let path = dir.join(format!("shard_{i:04}.bin"));
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            let shard = read_shard(&mut BufReader::new(file), &path, i as u32, code_width, dim, gate)?;
            total += shard.len();
            shards.push(shard);
        }
        if total != records {
            return Err(Error::corrupt(
                &manifest_path,
                format!("manifest declares {records} records, shards hold {total}"),
            ));
        }

        Ok(ShardedIndex {
            shards,
            codebook,
            binarizer,
            policy,
            bloom_factor,
            len: total,
        })
    }
}

fn write_shard(
    w: &mut impl Write,
    shard_index: u32,
    shard: &Shard,
    dim: usize,
) -> std::io::Result<()> {
    w.write_all(SHARD_MAGIC)?;
    w.write_all(&SHARD_VERSION.to_le_bytes())?;
    w.write_all(&shard_index.to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;

    // Store and postings are written in sorted order so rebuilds are
    // byte-identical.
    let mut ids: Vec<RecordId> = shard.store.keys().copied().collect();
    ids.sort_unstable();
    w.write_all(&(ids.len() as u64).to_le_bytes())?;
    for id in &ids {
        w.write_all(&id.to_le_bytes())?;
        for &x in shard.store[id].values() {
            w.write_all(&x.to_le_bytes())?;
        }
    }

    let mut codes: Vec<HashCode> = shard.postings.keys().copied().collect();
    codes.sort_unstable();
    w.write_all(&(codes.len() as u64).to_le_bytes())?;
    for code in codes {
        w.write_all(&code.to_le_bytes())?;
        let ids = &shard.postings[&code];
        w.write_all(&(ids.len() as u64).to_le_bytes())?;
        for id in ids {
            w.write_all(&id.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_shard(
    r: &mut impl Read,
    path: &Path,
    expected_index: u32,
    code_width: usize,
    dim: usize,
    gate: BloomFilter,
) -> Result<Shard> {
    let io_err = |e: std::io::Error| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::corrupt(path, "shard file truncated")
        } else {
            Error::io(path, e)
        }
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != SHARD_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "BGSH",
        });
    }
    let mut u32buf = [0u8; 4];
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u32buf).map_err(io_err)?;
    let version = u32::from_le_bytes(u32buf);
    if version != SHARD_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            got: version,
            supported: SHARD_VERSION,
        });
    }
    r.read_exact(&mut u32buf).map_err(io_err)?;
    let shard_index = u32::from_le_bytes(u32buf);
    if shard_index != expected_index {
        return Err(Error::corrupt(
            path,
            format!("shard index {shard_index} where {expected_index} expected"),
        ));
    }
    r.read_exact(&mut u32buf).map_err(io_err)?;
    let file_dim = u32::from_le_bytes(u32buf) as usize;
    if file_dim != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: file_dim,
        });
    }

    r.read_exact(&mut u64buf).map_err(io_err)?;
    let record_count = u64::from_le_bytes(u64buf) as usize;
    let mut store = HashMap::with_capacity(record_count);
    for _ in 0..record_count {
        r.read_exact(&mut u32buf).map_err(io_err)?;
        let id = u32::from_le_bytes(u32buf);
        let mut values = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut u32buf).map_err(io_err)?;
            values.push(f32::from_le_bytes(u32buf));
        }
        let vector = FeatureVector::new(values)
            .map_err(|e| Error::corrupt(path, format!("record {id}: {e}")))?;
        if store.insert(id, vector).is_some() {
            return Err(Error::corrupt(path, format!("duplicate record {id}")));
        }
    }

    r.read_exact(&mut u64buf).map_err(io_err)?;
    let code_count = u64::from_le_bytes(u64buf) as usize;
    let mut postings: HashMap<HashCode, Vec<RecordId>> = HashMap::with_capacity(code_count);
    let mut posted = 0usize;
    for _ in 0..code_count {
        r.read_exact(&mut u64buf).map_err(io_err)?;
        let code = HashCode::new(u64::from_le_bytes(u64buf), code_width)
            .map_err(|e| Error::corrupt(path, e.to_string()))?;
        r.read_exact(&mut u64buf).map_err(io_err)?;
        let id_count = u64::from_le_bytes(u64buf) as usize;
        let mut ids = Vec::with_capacity(id_count);
        for _ in 0..id_count {
            r.read_exact(&mut u32buf).map_err(io_err)?;
            let id = u32::from_le_bytes(u32buf);
            if !store.contains_key(&id) {
                return Err(Error::corrupt(path, format!("posting references unknown id {id}")));
            }
            ids.push(id);
        }
        posted += ids.len();
        if postings.insert(code, ids).is_some() {
            return Err(Error::corrupt(path, "duplicate posting code"));
        }
    }
    if posted != record_count {
        return Err(Error::corrupt(
            path,
            format!("{posted} posted ids for {record_count} records"),
        ));
    }

    Ok(Shard {
        gate,
        postings,
        store,
    })
}
