//! Bloom filter over hash codes with Kirsch–Mitzenmacher double hashing,
//! plus the sizing and false-positive formulas.
//!
//! The k probe positions are derived as `h1 + i*h2 mod m` from two xxHash64
//! instances with fixed seeds over the code's 8-byte little-endian
//! representation, so filters are byte-reproducible across runs and
//! platforms. False positives are possible, false negatives are not.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use twox_hash::XxHash64;

use crate::error::{Error, Result};
use crate::quantizer::HashCode;

/// Default seed of the first base hash function.
pub const DEFAULT_H1_SEED: u64 = 0x9e37_79b9_7f4a_7c15;
/// Default seed of the second base hash function.
pub const DEFAULT_H2_SEED: u64 = 0xc2b2_ae3d_27d4_eb4f;

/// Number of hash functions minimizing the false-positive probability:
/// `round(ln 2 * m / n)`, clamped to at least 1.
pub fn optimal_k(m_bits: u64, n_capacity: u64) -> Result<u32> {
    if n_capacity == 0 || m_bits < n_capacity {
        return Err(Error::InvalidParameter(format!(
            "optimal_k requires m >= n >= 1, got m={m_bits} n={n_capacity}"
        )));
    }
    let k = (std::f64::consts::LN_2 * m_bits as f64 / n_capacity as f64).round();
    Ok((k as u32).max(1))
}

/// False-positive probability `(1 - e^(-k*n/m))^k` for a filter of `m_bits`
/// bits holding `n_inserted` items under `k_hashes` hash functions.
///
/// An empty filter has probability 0. Panics if `m_bits` or `k_hashes`
/// is zero.
pub fn fp_probability(m_bits: u64, n_inserted: u64, k_hashes: u32) -> f64 {
    assert!(m_bits >= 1 && k_hashes >= 1, "m_bits and k_hashes must be positive");
    let exponent = -(k_hashes as f64) * n_inserted as f64 / m_bits as f64;
    (1.0 - exponent.exp()).powi(k_hashes as i32)
}

/// Rule-of-thumb bound `0.6185^(m/n)` at the optimal k (assuming the array
/// is half full). Panics unless `m >= n >= 1`.
pub fn fp_bound_rule(m_bits: u64, n_capacity: u64) -> f64 {
    assert!(
        n_capacity >= 1 && m_bits >= n_capacity,
        "fp_bound_rule requires m >= n >= 1"
    );
    0.6185f64.powf(m_bits as f64 / n_capacity as f64)
}

/// The k probe positions of `code` under the default seeds.
pub fn derive_indices(code: HashCode, k_hashes: u32, m_bits: u64) -> Vec<u64> {
    derive_indices_seeded(code, k_hashes, m_bits, DEFAULT_H1_SEED, DEFAULT_H2_SEED)
}

/// Double-hashing index derivation: `position_i = (h1 + i*h2) mod m` for
/// `i` in `0..k`, in wrapping 64-bit arithmetic.
pub fn derive_indices_seeded(
    code: HashCode,
    k_hashes: u32,
    m_bits: u64,
    h1_seed: u64,
    h2_seed: u64,
) -> Vec<u64> {
    debug_assert!(k_hashes >= 1 && m_bits >= 1);
    let bytes = code.to_le_bytes();
    let h1 = XxHash64::oneshot(h1_seed, &bytes);
    let h2 = XxHash64::oneshot(h2_seed, &bytes);
    (0..k_hashes as u64)
        .map(|i| h1.wrapping_add(i.wrapping_mul(h2)) % m_bits)
        .collect()
}

/// Sizing parameters of one filter, with the false-positive estimate at
/// capacity derived from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BloomParams {
    m_bits: u64,
    n_capacity: u64,
    k_hashes: u32,
    fp_estimate: f64,
}

impl BloomParams {
    pub fn new(m_bits: u64, n_capacity: u64, k_hashes: u32) -> Result<Self> {
        if m_bits == 0 || n_capacity == 0 || k_hashes == 0 {
            return Err(Error::InvalidParameter(format!(
                "BloomParams requires positive fields, got m={m_bits} n={n_capacity} k={k_hashes}"
            )));
        }
        Ok(BloomParams {
            m_bits,
            n_capacity,
            k_hashes,
            fp_estimate: fp_probability(m_bits, n_capacity, k_hashes),
        })
    }

    /// Parameters with `k = optimal_k(m, n)`.
    pub fn with_optimal_k(m_bits: u64, n_capacity: u64) -> Result<Self> {
        Self::new(m_bits, n_capacity, optimal_k(m_bits, n_capacity)?)
    }

    pub fn m_bits(&self) -> u64 {
        self.m_bits
    }

    pub fn n_capacity(&self) -> u64 {
        self.n_capacity
    }

    pub fn k_hashes(&self) -> u32 {
        self.k_hashes
    }

    /// `(1 - e^(-k*n/m))^k` evaluated at the declared capacity.
    pub fn fp_estimate(&self) -> f64 {
        self.fp_estimate
    }
}

const FILTER_MAGIC: &[u8; 4] = b"BGBF";
const FILTER_VERSION: u32 = 1;

/// m-bit array + k double-hashed functions; the per-shard gatekeeper.
#[derive(Debug, Clone, PartialEq)]
pub struct BloomFilter {
    params: BloomParams,
    words: Vec<u64>,
    count_inserted: u64,
    h1_seed: u64,
    h2_seed: u64,
}

impl BloomFilter {
    pub fn new(params: BloomParams) -> Self {
        Self::with_seeds(params, DEFAULT_H1_SEED, DEFAULT_H2_SEED)
    }

    pub fn with_seeds(params: BloomParams, h1_seed: u64, h2_seed: u64) -> Self {
        let words = vec![0u64; params.m_bits.div_ceil(64) as usize];
        BloomFilter {
            params,
            words,
            count_inserted: 0,
            h1_seed,
            h2_seed,
        }
    }

    pub fn params(&self) -> &BloomParams {
        &self.params
    }

    pub fn count_inserted(&self) -> u64 {
        self.count_inserted
    }

    /// True once more elements were inserted than the filter was sized for.
    pub fn is_saturated(&self) -> bool {
        self.count_inserted > self.params.n_capacity
    }

    /// Number of set bits in the array.
    pub fn ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn fill_ratio(&self) -> f64 {
        self.ones() as f64 / self.params.m_bits as f64
    }

    /// False-positive estimate at the current insertion count.
    pub fn current_fp_estimate(&self) -> f64 {
        fp_probability(self.params.m_bits, self.count_inserted, self.params.k_hashes)
    }

    fn positions(&self, code: HashCode) -> Vec<u64> {
        derive_indices_seeded(
            code,
            self.params.k_hashes,
            self.params.m_bits,
            self.h1_seed,
            self.h2_seed,
        )
    }

    /// Set the k derived positions; `contains` is true for the code
    /// afterwards. Requires exclusive access (single-writer build phase).
    pub fn insert(&mut self, code: HashCode) {
        for pos in self.positions(code) {
            self.words[(pos / 64) as usize] |= 1u64 << (pos % 64);
        }
        self.count_inserted += 1;
    }

    /// True iff all k derived positions are set. Never false for an
    /// inserted code; may be a false positive for others.
    pub fn contains(&self, code: HashCode) -> bool {
        self.positions(code)
            .iter()
            .all(|&pos| self.words[(pos / 64) as usize] >> (pos % 64) & 1 == 1)
    }

    /// Serialized size in bytes: header + packed bit array.
    pub fn serialized_len(&self) -> u64 {
        4 + 4 + 8 + 4 + 8 + 8 + 8 + 8 + 8 * self.words.len() as u64
    }

    pub fn write_to(&self, writer: &mut impl Write) -> std::io::Result<()> {
        writer.write_all(FILTER_MAGIC)?;
        writer.write_all(&FILTER_VERSION.to_le_bytes())?;
        writer.write_all(&self.params.m_bits.to_le_bytes())?;
        writer.write_all(&self.params.k_hashes.to_le_bytes())?;
        writer.write_all(&self.params.n_capacity.to_le_bytes())?;
        writer.write_all(&self.count_inserted.to_le_bytes())?;
        writer.write_all(&self.h1_seed.to_le_bytes())?;
        writer.write_all(&self.h2_seed.to_le_bytes())?;
        for w in &self.words {
            writer.write_all(&w.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(reader: &mut impl Read, path: &Path) -> Result<Self> {
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != FILTER_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: "BGBF",
            });
        }
        let mut u32buf = [0u8; 4];
        let mut u64buf = [0u8; 8];
        reader.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
        let version = u32::from_le_bytes(u32buf);
        if version != FILTER_VERSION {
            return Err(Error::UnsupportedVersion {
                path: path.to_path_buf(),
                got: version,
                supported: FILTER_VERSION,
            });
        }
        reader.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
        let m_bits = u64::from_le_bytes(u64buf);
        reader.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
        let k_hashes = u32::from_le_bytes(u32buf);
        reader.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
        let n_capacity = u64::from_le_bytes(u64buf);
        reader.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
        let count_inserted = u64::from_le_bytes(u64buf);
        reader.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
        let h1_seed = u64::from_le_bytes(u64buf);
        reader.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
        let h2_seed = u64::from_le_bytes(u64buf);

        let params = BloomParams::new(m_bits, n_capacity, k_hashes)
            .map_err(|e| Error::corrupt(path, e.to_string()))?;
        let mut words = vec![0u64; m_bits.div_ceil(64) as usize];
        for w in words.iter_mut() {
            reader.read_exact(&mut u64buf).map_err(|e| {
                if e.kind() == std::io::ErrorKind::UnexpectedEof {
                    Error::corrupt(path, "bit array truncated")
                } else {
                    Error::io(path, e)
                }
            })?;
            *w = u64::from_le_bytes(u64buf);
        }
        Ok(BloomFilter {
            params,
            words,
            count_inserted,
            h1_seed,
            h2_seed,
        })
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
