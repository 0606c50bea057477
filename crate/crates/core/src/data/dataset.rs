//! On-disk embedding tables: a JSON manifest plus a flat `.f64le` payload.
//!
//! The payload holds `N + C` rows of `d` little-endian f64 values, row-major:
//! the `N` image embeddings first, then the `C` class anchors. Ground truth
//! lives in a `<stem>.truth` sidecar (one label per line) that only
//! [`load_ground_truth`] reads.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoders::FrozenProvider;
use crate::error::{Error, Result};
use crate::labels::GroundTruth;
use crate::math::{self, Vector};
use crate::scalar::Scalar;
use crate::util::hash64;

const RENORMALIZE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub num_samples: usize,
    pub num_classes: usize,
    pub dim: usize,
    pub class_names: Vec<String>,
    /// Relative to the manifest's directory.
    pub payload_path: String,
    pub checksum: u64,
    pub has_ground_truth: bool,
}

impl DatasetManifest {
    /// A manifest whose payload path and checksum are filled in on save.
    pub fn describe(
        name: &str,
        dim: usize,
        class_names: Vec<String>,
        num_samples: usize,
        has_ground_truth: bool,
    ) -> Self {
        Self {
            name: name.to_owned(),
            num_samples,
            num_classes: class_names.len(),
            dim,
            class_names,
            payload_path: format!("{name}.f64le"),
            checksum: 0,
            has_ground_truth,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::Format("manifest declares zero samples".into()));
        }
        if self.num_classes < 2 || self.dim == 0 {
            return Err(Error::Format(format!(
                "manifest needs at least two classes and a positive dimension (got C={}, d={})",
                self.num_classes, self.dim
            )));
        }
        if self.class_names.len() != self.num_classes {
            return Err(Error::Format(format!(
                "manifest lists {} class names for {} classes",
                self.class_names.len(),
                self.num_classes
            )));
        }
        let unique: BTreeSet<&String> = self.class_names.iter().collect();
        if unique.len() != self.class_names.len() {
            return Err(Error::Format("class names must be unique".into()));
        }
        Ok(())
    }

    pub fn payload_len(&self) -> usize {
        (self.num_samples + self.num_classes) * self.dim * 8
    }
}

/// Immutable table of unit-norm frozen embeddings and class anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    manifest: DatasetManifest,
    embeddings: Vec<Vector<f64>>,
    anchors: Vec<Vector<f64>>,
}

impl EmbeddingDataset {
    pub fn new(
        mut manifest: DatasetManifest,
        embeddings: Vec<Vector<f64>>,
        anchors: Vec<Vector<f64>>,
    ) -> Result<Self> {
        manifest.num_samples = embeddings.len();
        manifest.validate()?;
        if anchors.len() != manifest.num_classes {
            return Err(Error::Format(format!(
                "{} anchors for {} classes",
                anchors.len(),
                manifest.num_classes
            )));
        }
        if let Some(bad) = embeddings.iter().chain(&anchors).find(|v| v.dim() != manifest.dim) {
            return Err(Error::Format(format!(
                "row of dimension {} in a dimension-{} dataset",
                bad.dim(),
                manifest.dim
            )));
        }
        let mut dataset = Self {
            manifest,
            embeddings,
            anchors,
        };
        dataset.manifest.checksum = hash64(&dataset.payload_bytes());
        Ok(dataset)
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn embeddings(&self) -> &[Vector<f64>] {
        &self.embeddings
    }

    pub fn anchors(&self) -> &[Vector<f64>] {
        &self.anchors
    }

    pub fn payload_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.manifest.payload_len());
        for row in self.embeddings.iter().chain(&self.anchors) {
            for v in row.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Builds the frozen encoder stand-in, converting to the working precision.
    pub fn to_provider<T: Scalar>(&self, context_dim: usize, mixer_seed: u64) -> Result<FrozenProvider<T>> {
        let convert = |rows: &[Vector<f64>]| -> Result<Vec<Vector<T>>> {
            rows.iter()
                .map(|r| {
                    let v: Vec<T> = r.iter().map(|&x| T::lit(x)).collect();
                    Vector::new(math::l2_normalize(&v)?)
                })
                .collect()
        };
        FrozenProvider::with_random_mixer(
            convert(&self.embeddings)?,
            convert(&self.anchors)?,
            context_dim,
            mixer_seed,
        )
    }

    /// Writes `<name>.json` and the payload into `dir`; returns the manifest path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.json", self.manifest.name));
        fs::write(dir.join(&self.manifest.payload_path), self.payload_bytes())?;
        fs::write(&path, serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(path)
    }

    /// Like [`save`](Self::save), plus the ground-truth sidecar.
    pub fn save_with_truth(&self, dir: &Path, truth: &GroundTruth) -> Result<PathBuf> {
        if truth.len() != self.embeddings.len() {
            return Err(Error::Format(format!(
                "{} ground-truth labels for {} samples",
                truth.len(),
                self.embeddings.len()
            )));
        }
        let path = self.save(dir)?;
        let mut text = String::with_capacity(truth.len() * 3);
        for label in truth.as_slice() {
            text.push_str(&label.to_string());
            text.push('\n');
        }
        fs::write(truth_path(&path), text)?;
        Ok(path)
    }
}

pub fn truth_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("truth")
}

pub fn load_dataset(manifest_path: &Path) -> Result<EmbeddingDataset> {
    let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
    manifest.validate()?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let payload = fs::read(dir.join(&manifest.payload_path))?;
    if payload.len() != manifest.payload_len() {
        return Err(Error::Format(format!(
            "payload has {} bytes, manifest (N={}, C={}, d={}) implies {}",
            payload.len(),
            manifest.num_samples,
            manifest.num_classes,
            manifest.dim,
            manifest.payload_len()
        )));
    }
    let actual = hash64(&payload);
    if actual != manifest.checksum {
        return Err(Error::Integrity(format!(
            "payload checksum {actual:#018x} does not match manifest {:#018x}",
            manifest.checksum
        )));
    }

    let d = manifest.dim;
    let mut rows = Vec::with_capacity(manifest.num_samples + manifest.num_classes);
    for (i, chunk) in payload.chunks_exact(d * 8).enumerate() {
        let row: Vec<f64> = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("row {i} holds a non-finite value")));
        }
        let norm = math::norm(&row);
        let row = if (norm - 1.0).abs() > RENORMALIZE_TOLERANCE {
            log::warn!("row {i} has norm {norm}; re-normalizing");
            math::l2_normalize(&row).map_err(|_| Error::Format(format!("row {i} is the zero vector")))?
        } else {
            row
        };
        rows.push(Vector::new(row)?);
    }
    let anchors = rows.split_off(manifest.num_samples);
    Ok(EmbeddingDataset {
        manifest,
        embeddings: rows,
        anchors,
    })
}

/// Reads the evaluation-only label sidecar next to a manifest.
pub fn load_ground_truth(manifest_path: &Path) -> Result<GroundTruth> {
    let path = truth_path(manifest_path);
    let text = fs::read_to_string(&path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Lookup(format!(
                "ground-truth sidecar {} not found; evaluation needs a dataset generated with labels",
                path.display()
            ))
        } else {
            Error::Io(e)
        }
    })?;
    let labels = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroundTruth::new(labels))
}
