//! Experience dataset and its on-disk format.
//!
//! Binary record file, all integers little-endian:
//!
//! ```text
//! magic   8 bytes  "WNAVDS01"
//! count   u32      number of examples
//! per example:
//!   steps u32      window length
//!   label u8       0 or 1
//!   rows  steps * FEATURE_WIDTH * f64
//! ```
//!
//! A JSON sidecar manifest (`<file>.manifest.json`) records the example
//! count, history length `l`, feature width and feature-layout version so a
//! reader can reject files written under a different encoding.

use crate::error::{Error, Result};
use crate::features::{FEATURE_LAYOUT_VERSION, FEATURE_WIDTH};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

const DATASET_MAGIC: &[u8; 8] = b"WNAVDS01";

/// One training window: per-step feature rows plus the episode's terminal
/// collision label. The final row carries the evaluated action.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub features: Vec<Vec<f64>>,
    pub label: f64,
}

/// Append-only store of training windows. Windows never cross episode
/// boundaries; every window carries its source episode's terminal label.
#[derive(Debug, Clone)]
pub struct ExperienceDataset {
    pub examples: Vec<TrainingExample>,
    pub history_len: usize,
}

impl ExperienceDataset {
    pub fn new(history_len: usize) -> Self {
        ExperienceDataset {
            examples: Vec::new(),
            history_len,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn manifest_path(path: &Path) -> PathBuf {
        let mut name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        name.push_str(".manifest.json");
        path.with_file_name(name)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(DATASET_MAGIC)?;
        file.write_all(&(self.examples.len() as u32).to_le_bytes())?;
        for ex in &self.examples {
            file.write_all(&(ex.features.len() as u32).to_le_bytes())?;
            file.write_all(&[if ex.label > 0.5 { 1u8 } else { 0u8 }])?;
            for row in &ex.features {
                if row.len() != FEATURE_WIDTH {
                    return Err(Error::DimensionMismatch(format!(
                        "feature row width {} (expected {FEATURE_WIDTH})",
                        row.len()
                    )));
                }
                for v in row {
                    file.write_all(&v.to_le_bytes())?;
                }
            }
        }
        file.flush()?;

        let manifest = DatasetManifest {
            format: "warynav-dataset".into(),
            version: 1,
            examples: self.examples.len(),
            history_len: self.history_len,
            feature_width: FEATURE_WIDTH,
            feature_layout_version: FEATURE_LAYOUT_VERSION,
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::DatasetFile(format!("manifest: {e}")))?;
        std::fs::write(Self::manifest_path(path), json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ExperienceDataset> {
        let manifest_path = Self::manifest_path(path);
        let manifest: DatasetManifest =
            serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)
                .map_err(|e| Error::DatasetFile(format!("{}: {e}", manifest_path.display())))?;
        if manifest.format != "warynav-dataset" || manifest.version != 1 {
            return Err(Error::DatasetFile(format!(
                "{}: unsupported format/version",
                manifest_path.display()
            )));
        }
        if manifest.feature_width != FEATURE_WIDTH
            || manifest.feature_layout_version != FEATURE_LAYOUT_VERSION
        {
            return Err(Error::DatasetFile(format!(
                "{}: feature layout mismatch",
                manifest_path.display()
            )));
        }

        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        file.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::DatasetFile(format!(
                "{}: bad magic",
                path.display()
            )));
        }
        let mut u32_buf = [0u8; 4];
        file.read_exact(&mut u32_buf)?;
        let count = u32::from_le_bytes(u32_buf) as usize;
        if count != manifest.examples {
            return Err(Error::DatasetFile(format!(
                "{}: manifest says {} examples, file holds {count}",
                path.display(),
                manifest.examples
            )));
        }
        let mut examples = Vec::with_capacity(count);
        let mut f64_buf = [0u8; 8];
        for _ in 0..count {
            file.read_exact(&mut u32_buf)?;
            let steps = u32::from_le_bytes(u32_buf) as usize;
            let mut label_buf = [0u8; 1];
            file.read_exact(&mut label_buf)?;
            let mut features = Vec::with_capacity(steps);
            for _ in 0..steps {
                let mut row = Vec::with_capacity(FEATURE_WIDTH);
                for _ in 0..FEATURE_WIDTH {
                    file.read_exact(&mut f64_buf)?;
                    row.push(f64::from_le_bytes(f64_buf));
                }
                features.push(row);
            }
            examples.push(TrainingExample {
                features,
                label: label_buf[0] as f64,
            });
        }
        Ok(ExperienceDataset {
            examples,
            history_len: manifest.history_len,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetManifest {
    format: String,
    version: u32,
    examples: usize,
    history_len: usize,
    feature_width: usize,
    feature_layout_version: u32,
}
