//! Exercises the C ABI end to end: train, build, query, save/load, error
//! paths, and the generated header.

use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use bloomgate_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(bg_last_error_message()).to_string_lossy().into_owned() }
}

/// Two well-separated clusters, 16 vectors of dim 4, flattened.
fn sample_vectors() -> Vec<f32> {
    let mut flat = Vec::new();
    for i in 0..8 {
        let jitter = i as f32 * 0.01;
        flat.extend_from_slice(&[0.1 + jitter, 0.2, 0.1, 0.3 + jitter]);
    }
    for i in 0..8 {
        let jitter = i as f32 * 0.01;
        flat.extend_from_slice(&[5.0 + jitter, 5.1, 4.9, 5.2 + jitter]);
    }
    flat
}

unsafe fn train_sample() -> *mut BgCodebook {
    let flat = sample_vectors();
    let mut codebook: *mut BgCodebook = ptr::null_mut();
    let status = bg_codebook_train(flat.as_ptr(), 16, 4, 8, 20, 7, &mut codebook);
    assert_eq!(status, BgStatus::Ok, "{}", last_error());
    assert!(!codebook.is_null());
    codebook
}

#[test]
fn version_is_a_c_string() {
    let version = unsafe { CStr::from_ptr(bg_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn full_lifecycle_through_the_c_abi() {
    unsafe {
        let codebook = train_sample();
        assert_eq!(bg_codebook_k(codebook), 8);
        assert_eq!(bg_codebook_dim(codebook), 4);

        let flat = sample_vectors();
        let mut index: *mut BgIndex = ptr::null_mut();
        let status = bg_index_build(
            codebook,
            flat.as_ptr(),
            ptr::null(),
            16,
            4,
            BgBinarizerMode::Minx,
            2,
            2,
            10.0,
            BgShardPolicy::RoundRobin,
            &mut index,
        );
        assert_eq!(status, BgStatus::Ok, "{}", last_error());
        assert_eq!(bg_index_len(index), 16);
        assert_eq!(bg_index_num_shards(index), 2);
        assert_eq!(bg_index_code_width(index), 8);
        assert_eq!(bg_index_dim(index), 4);

        // Self-query: record 3 must rank first at distance 0.
        let query = &flat[3 * 4..4 * 4];
        let mut result: *mut BgQueryResult = ptr::null_mut();
        let status = bg_index_query(index, query.as_ptr(), 4, 2, 5, true, &mut result);
        assert_eq!(status, BgStatus::Ok, "{}", last_error());
        assert!(!bg_query_result_gated_out(result));
        assert!(bg_query_result_hit_count(result) >= 1);
        let mut id = u32::MAX;
        let mut distance = f64::NAN;
        assert_eq!(
            bg_query_result_hit(result, 0, &mut id, &mut distance),
            BgStatus::Ok
        );
        assert_eq!(id, 3);
        assert_eq!(distance, 0.0);
        assert!(bg_query_result_shards_scanned(result) >= 1);
        assert!(bg_query_result_elapsed_seconds(result) >= 0.0);
        bg_query_result_free(result);

        // Round-trip through disk.
        let dir = tempfile::tempdir().unwrap();
        let cb_path = c_path(dir.path().join("cb.bin"));
        assert_eq!(bg_codebook_save(codebook, cb_path.as_ptr()), BgStatus::Ok);
        let mut reloaded_cb: *mut BgCodebook = ptr::null_mut();
        assert_eq!(
            bg_codebook_load(cb_path.as_ptr(), &mut reloaded_cb),
            BgStatus::Ok
        );
        assert_eq!(bg_codebook_k(reloaded_cb), 8);
        bg_codebook_free(reloaded_cb);

        let idx_path = c_path(dir.path().join("index"));
        assert_eq!(bg_index_save(index, idx_path.as_ptr()), BgStatus::Ok);
        let mut reloaded: *mut BgIndex = ptr::null_mut();
        assert_eq!(bg_index_load(idx_path.as_ptr(), &mut reloaded), BgStatus::Ok);
        assert_eq!(bg_index_len(reloaded), 16);

        let mut replay: *mut BgQueryResult = ptr::null_mut();
        assert_eq!(
            bg_index_query(reloaded, query.as_ptr(), 4, 2, 5, true, &mut replay),
            BgStatus::Ok
        );
        let mut replay_id = 0u32;
        assert_eq!(
            bg_query_result_hit(replay, 0, &mut replay_id, ptr::null_mut()),
            BgStatus::Ok
        );
        assert_eq!(replay_id, 3);
        bg_query_result_free(replay);

        bg_index_free(reloaded);
        bg_index_free(index);
        bg_codebook_free(codebook);
    }
}

fn c_path(path: std::path::PathBuf) -> CString {
    CString::new(path.to_str().unwrap()).unwrap()
}

#[test]
fn error_paths_set_codes_and_messages() {
    unsafe {
        // Null pointers.
        let mut codebook: *mut BgCodebook = ptr::null_mut();
        assert_eq!(
            bg_codebook_train(ptr::null(), 4, 2, 2, 5, 0, &mut codebook),
            BgStatus::NullPointer
        );
        assert!(last_error().contains("NULL"));

        // Too few vectors for k.
        let flat = [0.0f32, 1.0, 1.0, 0.0];
        assert_eq!(
            bg_codebook_train(flat.as_ptr(), 2, 2, 8, 5, 0, &mut codebook),
            BgStatus::InvalidArgument
        );

        // Non-finite component.
        let bad = [f32::NAN, 1.0];
        assert_eq!(
            bg_codebook_train(bad.as_ptr(), 1, 2, 1, 5, 0, &mut codebook),
            BgStatus::InvalidArgument
        );

        // Dimension mismatch at query time.
        let codebook = train_sample();
        let flat = sample_vectors();
        let mut index: *mut BgIndex = ptr::null_mut();
        assert_eq!(
            bg_index_build(
                codebook,
                flat.as_ptr(),
                ptr::null(),
                16,
                4,
                BgBinarizerMode::Mean,
                0,
                1,
                2.0,
                BgShardPolicy::HashId,
                &mut index,
            ),
            BgStatus::Ok
        );
        let short = [1.0f32, 2.0];
        let mut result: *mut BgQueryResult = ptr::null_mut();
        assert_eq!(
            bg_index_query(index, short.as_ptr(), 2, 2, 5, true, &mut result),
            BgStatus::DimensionMismatch
        );
        assert!(last_error().contains("dimension"));

        // Load failures map to io/format codes.
        let missing = CString::new("/nonexistent/cb.bin").unwrap();
        assert_eq!(
            bg_codebook_load(missing.as_ptr(), &mut codebook.cast_const().cast_mut()),
            BgStatus::IoError
        );
        let dir = tempfile::tempdir().unwrap();
        let garbage = dir.path().join("cb.bin");
        std::fs::write(&garbage, b"not a codebook").unwrap();
        let garbage_c = c_path(garbage);
        let mut loaded: *mut BgCodebook = ptr::null_mut();
        assert_eq!(
            bg_codebook_load(garbage_c.as_ptr(), &mut loaded),
            BgStatus::FormatError
        );

        bg_index_free(index);
        bg_codebook_free(codebook);

        // Frees tolerate NULL.
        bg_codebook_free(ptr::null_mut());
        bg_index_free(ptr::null_mut());
        bg_query_result_free(ptr::null_mut());
    }
}

#[test]
fn bloom_math_through_the_c_abi() {
    unsafe {
        let mut k = 0u32;
        assert_eq!(bg_bloom_optimal_k(100_000, 10_000, &mut k), BgStatus::Ok);
        assert_eq!(k, 7);
        assert_eq!(bg_bloom_optimal_k(10, 100, &mut k), BgStatus::InvalidArgument);
    }
    let p = bg_bloom_fp_probability(100_000, 10_000, 7);
    assert!((p - 0.00819).abs() < 1e-4);
    assert!(bg_bloom_fp_probability(0, 10, 1).is_nan());
    let bound = bg_bloom_fp_bound(100_000, 10_000);
    assert!((bound - 0.00819).abs() < 1e-4);
    assert!(bg_bloom_fp_bound(5, 10).is_nan());
}

#[test]
fn generated_header_exists_and_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/bloomgate.h");
    let text = std::fs::read_to_string(&header).expect("header generated at build time");
    for symbol in [
        "BgStatus",
        "bg_codebook_train",
        "bg_index_build",
        "bg_index_query",
        "bg_query_result_hit",
        "bg_bloom_optimal_k",
        "bg_last_error_message",
    ] {
        assert!(text.contains(symbol), "header misses `{symbol}`");
    }

    // The header must parse as C99.
    let dir = tempfile::tempdir().unwrap();
    let main_c = dir.path().join("probe.c");
    std::fs::write(&main_c, "#include \"bloomgate.h\"\nint main(void) { return 0; }\n").unwrap();
    let status = std::process::Command::new("cc")
        .arg("-std=c99")
        .arg("-fsyntax-only")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&main_c)
        .status()
        .expect("cc available");
    assert!(status.success(), "generated header failed C compilation");
}
