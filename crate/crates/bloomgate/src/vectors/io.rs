//! fvecs/ivecs readers and writers plus the plain-text dataset manifest.
//!
//! fvecs framing: per record, a 4-byte little-endian integer `d` followed by
//! `d` little-endian 32-bit floats. ivecs uses the same framing with 32-bit
//! integers. All records in one file must share `d`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::vectors::{Dataset, FeatureVector, LabeledVector, RecordId};

fn read_u32_le(
    reader: &mut impl Read,
    path: &Path,
    offset: &mut u64,
    at_record_boundary: bool,
) -> Result<Option<u32>> {
    let mut buf = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        let n = reader
            .read(&mut buf[filled..])
            .map_err(|e| Error::io(path, e))?;
        if n == 0 {
            if filled == 0 && at_record_boundary {
                return Ok(None); // clean EOF
            }
            return Err(Error::TruncatedRecord {
                path: path.to_path_buf(),
                offset: *offset + filled as u64,
            });
        }
        filled += n;
    }
    *offset += 4;
    Ok(Some(u32::from_le_bytes(buf)))
}

fn read_records(path: &Path) -> Result<Vec<Vec<u32>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut offset = 0u64;
    let mut records: Vec<Vec<u32>> = Vec::new();
    let mut expected_dim: Option<usize> = None;

    while let Some(raw_dim) = read_u32_le(&mut reader, path, &mut offset, true)? {
        let dim = raw_dim as usize;
        if dim == 0 {
            return Err(Error::corrupt(path, format!("record {} has dim 0", records.len())));
        }
        match expected_dim {
            None => expected_dim = Some(dim),
            Some(expected) if expected != dim => {
                return Err(Error::InconsistentDim {
                    path: path.to_path_buf(),
                    record: records.len(),
                    got: dim,
                    expected,
                });
            }
            _ => {}
        }
        let mut record = Vec::with_capacity(dim);
        for _ in 0..dim {
            match read_u32_le(&mut reader, path, &mut offset, false)? {
                Some(word) => record.push(word),
                None => unreachable!("mid-record EOF reported as truncation"),
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Read an fvecs file into feature vectors. Empty file yields an empty list.
pub fn read_fvecs(path: impl AsRef<Path>) -> Result<Vec<FeatureVector>> {
    let path = path.as_ref();
    read_records(path)?
        .into_iter()
        .map(|words| FeatureVector::new(words.into_iter().map(f32::from_bits).collect()))
        .collect()
}

/// Read an ivecs file (e.g. ground-truth neighbor lists).
pub fn read_ivecs(path: impl AsRef<Path>) -> Result<Vec<Vec<u32>>> {
    read_records(path.as_ref())
}

/// Write feature vectors in fvecs framing, bit-exactly.
pub fn write_fvecs(path: impl AsRef<Path>, vectors: &[FeatureVector]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for v in vectors {
        writer
            .write_all(&(v.dim() as u32).to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
        for &x in v.values() {
            writer.write_all(&x.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Write integer lists in ivecs framing.
pub fn write_ivecs(path: impl AsRef<Path>, lists: &[Vec<u32>]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for list in lists {
        writer
            .write_all(&(list.len() as u32).to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
        for &x in list {
            writer.write_all(&x.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// On-disk description of a dataset: a plain-text file of `key=value` lines
/// binding the base, query and ground-truth files.
///
/// Required keys: `base=`, `queries=`, `groundtruth=`, `format=` (must be
/// `fvecs`). Relative paths resolve against the manifest's directory. Line
/// `i` of the ground-truth ivecs lists the relevant base ids of query `i`.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub base: PathBuf,
    pub queries: PathBuf,
    pub groundtruth: PathBuf,
}

impl DatasetManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let mut base = None;
        let mut queries = None;
        let mut groundtruth = None;
        let mut format = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::corrupt(path, format!("bad manifest line `{line}`")));
            };
            let value = value.trim();
            match key.trim() {
                "base" => base = Some(dir.join(value)),
                "queries" => queries = Some(dir.join(value)),
                "groundtruth" => groundtruth = Some(dir.join(value)),
                "format" => format = Some(value.to_string()),
                other => {
                    return Err(Error::corrupt(path, format!("unknown manifest key `{other}`")));
                }
            }
        }
        match format.as_deref() {
            Some("fvecs") => {}
            Some(other) => {
                return Err(Error::corrupt(path, format!("unsupported format `{other}`")));
            }
            None => {
                return Err(Error::MissingManifestKey {
                    path: path.to_path_buf(),
                    key: "format",
                })
            }
        }
        let missing = |key| Error::MissingManifestKey {
            path: path.to_path_buf(),
            key,
        };
        Ok(DatasetManifest {
            base: base.ok_or_else(|| missing("base"))?,
            queries: queries.ok_or_else(|| missing("queries"))?,
            groundtruth: groundtruth.ok_or_else(|| missing("groundtruth"))?,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let rel = |p: &Path| {
            p.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.to_string_lossy().into_owned())
        };
        let text = format!(
            "format=fvecs\nbase={}\nqueries={}\ngroundtruth={}\n",
            rel(&self.base),
            rel(&self.queries),
            rel(&self.groundtruth)
        );
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Load a dataset through its manifest. Base ids are row indices, query ids
/// continue after the base; ground-truth row `i` belongs to query row `i`.
/// Queries beyond the ground-truth rows carry no relevance judgments.
pub fn load_dataset(manifest_path: impl AsRef<Path>, normalize: bool) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let manifest = DatasetManifest::read(manifest_path)?;
    let base_vectors = read_fvecs(&manifest.base)?;
    let query_vectors = read_fvecs(&manifest.queries)?;
    let gt_rows = read_ivecs(&manifest.groundtruth)?;
    if gt_rows.len() > query_vectors.len() {
        return Err(Error::corrupt(
            manifest_path,
            format!(
                "{} ground-truth rows for {} queries",
                gt_rows.len(),
                query_vectors.len()
            ),
        ));
    }

    let n_base = base_vectors.len() as RecordId;
    let base: Vec<LabeledVector> = base_vectors
        .into_iter()
        .enumerate()
        .map(|(i, v)| LabeledVector::new(i as RecordId, v))
        .collect();
    let queries: Vec<LabeledVector> = query_vectors
        .into_iter()
        .enumerate()
        .map(|(i, v)| LabeledVector::new(n_base + i as RecordId, v))
        .collect();
    let ground_truth = gt_rows
        .into_iter()
        .enumerate()
        .map(|(i, row)| (n_base + i as RecordId, row.into_iter().collect()))
        .collect();

    let dataset = Dataset::new(base, queries, ground_truth)?;
    if normalize {
        dataset.normalize()
    } else {
        Ok(dataset)
    }
}
