//! C ABI for the bloomgate retrieval engine.
//!
//! Handles (`BgCodebook`, `BgIndex`, `BgQueryResult`) are opaque; every
//! fallible call returns a `BgStatus` and stores a human-readable message
//! retrievable with `bg_last_error_message` (thread-local, valid until
//! the next failing call on the same thread). Out-parameters are written
//! only on `BG_STATUS_OK`. All handles must be released with the matching
//! `*_free` function; passing NULL to a `*_free` is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use bloomgate::bloom;
use bloomgate::error::Error;
use bloomgate::index::{build_index, QueryParams, ShardPolicy, ShardedIndex};
use bloomgate::quantizer::{kmeans_train, Binarizer, Codebook};
use bloomgate::vectors::{FeatureVector, LabeledVector};

/// Result code of every fallible FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    IoError = 4,
    FormatError = 5,
    InternalError = 6,
}

/// Binarization rule selector for `bg_index_build`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BgBinarizerMode {
    /// Set the bits of centroids closer than the mean centroid distance.
    Mean = 0,
    /// Set exactly the bits of the `n_smallest` smallest distances.
    Minx = 1,
}

/// Shard assignment rule for `bg_index_build`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BgShardPolicy {
    RoundRobin = 0,
    HashId = 1,
}

/// Opaque codebook handle.
pub struct BgCodebook(Codebook);

/// Opaque index handle.
pub struct BgIndex(ShardedIndex);

/// Opaque query-result handle.
pub struct BgQueryResult(bloomgate::index::QueryResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: impl Into<String>) {
    let message = message.into();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(message).unwrap_or_default();
    });
}

fn status_for(error: &Error) -> BgStatus {
    match error {
        Error::DimensionMismatch { .. } | Error::WidthMismatch { .. } => {
            BgStatus::DimensionMismatch
        }
        Error::Io { .. } => BgStatus::IoError,
        Error::BadMagic { .. }
        | Error::UnsupportedVersion { .. }
        | Error::Corrupt { .. }
        | Error::TruncatedRecord { .. }
        | Error::InconsistentDim { .. }
        | Error::MissingManifestKey { .. } => BgStatus::FormatError,
        _ => BgStatus::InvalidArgument,
    }
}

fn fail(error: Error) -> BgStatus {
    let status = status_for(&error);
    set_last_error(error.to_string());
    status
}

/// Run `body` with panics converted to `BG_STATUS_INTERNAL_ERROR`.
fn guarded(body: impl FnOnce() -> BgStatus) -> BgStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("internal panic");
            BgStatus::InternalError
        }
    }
}

unsafe fn path_from(raw: *const c_char) -> Result<PathBuf, BgStatus> {
    if raw.is_null() {
        set_last_error("path is NULL");
        return Err(BgStatus::NullPointer);
    }
    match CStr::from_ptr(raw).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => {
            set_last_error("path is not valid UTF-8");
            Err(BgStatus::InvalidArgument)
        }
    }
}

/// Gather a flat `count * dim` f32 buffer into feature vectors.
unsafe fn vectors_from(
    data: *const f32,
    count: usize,
    dim: usize,
) -> Result<Vec<FeatureVector>, BgStatus> {
    if data.is_null() {
        set_last_error("vector buffer is NULL");
        return Err(BgStatus::NullPointer);
    }
    if count == 0 || dim == 0 {
        set_last_error("count and dim must be positive");
        return Err(BgStatus::InvalidArgument);
    }
    let flat = std::slice::from_raw_parts(data, count * dim);
    flat.chunks_exact(dim)
        .map(|chunk| FeatureVector::new(chunk.to_vec()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| {
            let status = status_for(&e);
            set_last_error(e.to_string());
            status
        })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent failure on this thread. The pointer stays
/// valid until the next failing bloomgate call on the same thread.
#[no_mangle]
pub extern "C" fn bg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Train a k-means codebook over `count` vectors of `dim` floats.
///
/// # Safety
/// `vectors` must point to at least `count * dim` readable floats and
/// `out_codebook` to a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn bg_codebook_train(
    vectors: *const f32,
    count: usize,
    dim: usize,
    k_centroids: usize,
    max_iters: usize,
    seed: u64,
    out_codebook: *mut *mut BgCodebook,
) -> BgStatus {
    guarded(|| {
        if out_codebook.is_null() {
            set_last_error("out_codebook is NULL");
            return BgStatus::NullPointer;
        }
        let parsed = match vectors_from(vectors, count, dim) {
            Ok(v) => v,
            Err(status) => return status,
        };
        match kmeans_train(&parsed, k_centroids, max_iters, seed) {
            Ok(codebook) => {
                *out_codebook = Box::into_raw(Box::new(BgCodebook(codebook)));
                BgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out_codebook` as in
/// `bg_codebook_train`.
#[no_mangle]
pub unsafe extern "C" fn bg_codebook_load(
    path: *const c_char,
    out_codebook: *mut *mut BgCodebook,
) -> BgStatus {
    guarded(|| {
        if out_codebook.is_null() {
            set_last_error("out_codebook is NULL");
            return BgStatus::NullPointer;
        }
        let path = match path_from(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match Codebook::load(path) {
            Ok(codebook) => {
                *out_codebook = Box::into_raw(Box::new(BgCodebook(codebook)));
                BgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `codebook` must be a live handle from this library; `path` a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bg_codebook_save(
    codebook: *const BgCodebook,
    path: *const c_char,
) -> BgStatus {
    guarded(|| {
        let Some(handle) = codebook.as_ref() else {
            set_last_error("codebook is NULL");
            return BgStatus::NullPointer;
        };
        let path = match path_from(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match handle.0.save(path) {
            Ok(()) => BgStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Number of centroids (== code width in bits); 0 for NULL.
///
/// # Safety
/// `codebook` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bg_codebook_k(codebook: *const BgCodebook) -> usize {
    codebook.as_ref().map_or(0, |c| c.0.k_centroids())
}

/// Vector dimensionality; 0 for NULL.
///
/// # Safety
/// `codebook` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bg_codebook_dim(codebook: *const BgCodebook) -> usize {
    codebook.as_ref().map_or(0, |c| c.0.dim())
}

/// # Safety
/// `codebook` must be NULL or an owned handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn bg_codebook_free(codebook: *mut BgCodebook) {
    if !codebook.is_null() {
        drop(Box::from_raw(codebook));
    }
}

/// Build a sharded, gated index over `count` vectors of `dim` floats.
/// `ids` may be NULL, in which case records are numbered 0..count.
/// `n_smallest` is only read in `BG_BINARIZER_MODE_MINX`.
///
/// # Safety
/// `codebook` must be a live handle; `vectors` must hold `count * dim`
/// floats; `ids`, when non-NULL, must hold `count` u32 values;
/// `out_index` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bg_index_build(
    codebook: *const BgCodebook,
    vectors: *const f32,
    ids: *const u32,
    count: usize,
    dim: usize,
    mode: BgBinarizerMode,
    n_smallest: usize,
    num_shards: usize,
    bloom_factor: f64,
    policy: BgShardPolicy,
    out_index: *mut *mut BgIndex,
) -> BgStatus {
    guarded(|| {
        if out_index.is_null() {
            set_last_error("out_index is NULL");
            return BgStatus::NullPointer;
        }
        let Some(handle) = codebook.as_ref() else {
            set_last_error("codebook is NULL");
            return BgStatus::NullPointer;
        };
        let parsed = match vectors_from(vectors, count, dim) {
            Ok(v) => v,
            Err(status) => return status,
        };
        let labeled: Vec<LabeledVector> = parsed
            .into_iter()
            .enumerate()
            .map(|(i, vector)| {
                let id = if ids.is_null() { i as u32 } else { *ids.add(i) };
                LabeledVector::new(id, vector)
            })
            .collect();
        let binarizer = match mode {
            BgBinarizerMode::Mean => Binarizer::Mean,
            BgBinarizerMode::Minx => Binarizer::MinX { n_smallest },
        };
        let policy = match policy {
            BgShardPolicy::RoundRobin => ShardPolicy::RoundRobin,
            BgShardPolicy::HashId => ShardPolicy::HashId,
        };
        match build_index(
            &labeled,
            handle.0.clone(),
            binarizer,
            num_shards,
            bloom_factor,
            policy,
        ) {
            Ok(index) => {
                *out_index = Box::into_raw(Box::new(BgIndex(index)));
                BgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `path` must be a NUL-terminated string naming an index directory;
/// `out_index` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bg_index_load(
    path: *const c_char,
    out_index: *mut *mut BgIndex,
) -> BgStatus {
    guarded(|| {
        if out_index.is_null() {
            set_last_error("out_index is NULL");
            return BgStatus::NullPointer;
        }
        let path = match path_from(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match ShardedIndex::load(path) {
            Ok(index) => {
                *out_index = Box::into_raw(Box::new(BgIndex(index)));
                BgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `index` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bg_index_save(index: *const BgIndex, path: *const c_char) -> BgStatus {
    guarded(|| {
        let Some(handle) = index.as_ref() else {
            set_last_error("index is NULL");
            return BgStatus::NullPointer;
        };
        let path = match path_from(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match handle.0.save(path) {
            Ok(()) => BgStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Records indexed; 0 for NULL.
///
/// # Safety
/// `index` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bg_index_len(index: *const BgIndex) -> usize {
    index.as_ref().map_or(0, |i| i.0.len())
}

/// # Safety
/// `index` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bg_index_num_shards(index: *const BgIndex) -> usize {
    index.as_ref().map_or(0, |i| i.0.num_shards())
}

/// # Safety
/// `index` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bg_index_code_width(index: *const BgIndex) -> usize {
    index.as_ref().map_or(0, |i| i.0.code_width())
}

/// # Safety
/// `index` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bg_index_dim(index: *const BgIndex) -> usize {
    index.as_ref().map_or(0, |i| i.0.codebook().dim())
}

/// # Safety
/// `index` must be NULL or an owned handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn bg_index_free(index: *mut BgIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Run one query. On success the caller owns `*out_result` and must free
/// it with `bg_query_result_free`.
///
/// # Safety
/// `index` must be a live handle; `query` must hold `dim` floats;
/// `out_result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bg_index_query(
    index: *const BgIndex,
    query: *const f32,
    dim: usize,
    hamming_threshold: u32,
    top_r: usize,
    use_gates: bool,
    out_result: *mut *mut BgQueryResult,
) -> BgStatus {
    guarded(|| {
        if out_result.is_null() {
            set_last_error("out_result is NULL");
            return BgStatus::NullPointer;
        }
        let Some(handle) = index.as_ref() else {
            set_last_error("index is NULL");
            return BgStatus::NullPointer;
        };
        let parsed = match vectors_from(query, 1, dim) {
            Ok(mut v) => v.remove(0),
            Err(status) => return status,
        };
        let params = match QueryParams::new(hamming_threshold, top_r, use_gates) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        match handle.0.query(&parsed, &params) {
            Ok(result) => {
                *out_result = Box::into_raw(Box::new(BgQueryResult(result)));
                BgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of ranked hits; 0 for NULL.
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bg_query_result_hit_count(result: *const BgQueryResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.hits.len())
}

/// Fetch hit `rank` (0-based): record id and cosine distance.
///
/// # Safety
/// `result` must be a live handle; `out_id` and `out_distance`, when
/// non-NULL, must be writable.
#[no_mangle]
pub unsafe extern "C" fn bg_query_result_hit(
    result: *const BgQueryResult,
    rank: usize,
    out_id: *mut u32,
    out_distance: *mut f64,
) -> BgStatus {
    guarded(|| {
        let Some(handle) = result.as_ref() else {
            set_last_error("result is NULL");
            return BgStatus::NullPointer;
        };
        let Some(&(id, distance)) = handle.0.hits.get(rank) else {
            set_last_error(format!(
                "rank {rank} out of range ({} hits)",
                handle.0.hits.len()
            ));
            return BgStatus::InvalidArgument;
        };
        if !out_id.is_null() {
            *out_id = id;
        }
        if !out_distance.is_null() {
            *out_distance = distance;
        }
        BgStatus::Ok
    })
}

/// True when every gate rejected the query code.
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bg_query_result_gated_out(result: *const BgQueryResult) -> bool {
    result.as_ref().is_some_and(|r| r.0.gated_out)
}

/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bg_query_result_shards_scanned(result: *const BgQueryResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.shards_scanned)
}

/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bg_query_result_candidates_examined(
    result: *const BgQueryResult,
) -> usize {
    result.as_ref().map_or(0, |r| r.0.candidates_examined)
}

/// Wall-clock seconds spent inside the query.
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bg_query_result_elapsed_seconds(result: *const BgQueryResult) -> f64 {
    result.as_ref().map_or(0.0, |r| r.0.elapsed.as_secs_f64())
}

/// # Safety
/// `result` must be NULL or an owned handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn bg_query_result_free(result: *mut BgQueryResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Optimal hash-function count `round(ln 2 * m / n)`, clamped to >= 1.
///
/// # Safety
/// `out_k`, when non-NULL, must be writable.
#[no_mangle]
pub unsafe extern "C" fn bg_bloom_optimal_k(
    m_bits: u64,
    n_capacity: u64,
    out_k: *mut u32,
) -> BgStatus {
    guarded(|| match bloom::optimal_k(m_bits, n_capacity) {
        Ok(k) => {
            if !out_k.is_null() {
                *out_k = k;
            }
            BgStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// False-positive probability `(1 - e^(-k*n/m))^k`; NaN on invalid input.
#[no_mangle]
pub extern "C" fn bg_bloom_fp_probability(m_bits: u64, n_inserted: u64, k_hashes: u32) -> f64 {
    if m_bits == 0 || k_hashes == 0 {
        set_last_error("m_bits and k_hashes must be positive");
        return f64::NAN;
    }
    bloom::fp_probability(m_bits, n_inserted, k_hashes)
}

/// Half-full-filter bound `0.6185^(m/n)`; NaN on invalid input.
#[no_mangle]
pub extern "C" fn bg_bloom_fp_bound(m_bits: u64, n_capacity: u64) -> f64 {
    if n_capacity == 0 || m_bits < n_capacity {
        set_last_error("bg_bloom_fp_bound requires m >= n >= 1");
        return f64::NAN;
    }
    bloom::fp_bound_rule(m_bits, n_capacity)
}
