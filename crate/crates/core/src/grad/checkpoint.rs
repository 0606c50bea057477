//! Checkpoint files.
//!
//! A checkpoint is a JSON manifest (`<stem>.json`) listing every tensor by
//! name, shape and byte offset, plus a flat little-endian f64 payload
//! (`<stem>.f64le`). Optimizer moments live in a separate `optimizer`
//! section of the manifest and are appended after the parameters in the
//! same payload.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::optim::{Optimizer, OptimizerKind, SlotState};
use super::param::{ParamTensor, Parameterized};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: &str = "coft-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: usize,
}

impl TensorEntry {
    fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSection {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub step: u64,
    /// `<param>.first` and, for Adam, `<param>.second`.
    pub buffers: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
    pub params: Vec<TensorEntry>,
    #[serde(default)]
    pub optimizer: Option<OptimizerSection>,
    pub payload_bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub payload: Vec<u8>,
}

fn push_values<T: Scalar>(payload: &mut Vec<u8>, values: &[T]) -> usize {
    let offset = payload.len();
    for v in values {
        payload.extend_from_slice(&v.to_f64_lossless().to_le_bytes());
    }
    offset
}

impl Checkpoint {
    pub fn capture<T: Scalar>(
        meta: BTreeMap<String, String>,
        params: &[&ParamTensor<T>],
        optimizer: Option<&Optimizer<T>>,
    ) -> Self {
        let mut payload = Vec::new();
        let entries = params
            .iter()
            .map(|p| TensorEntry {
                name: p.name().to_owned(),
                shape: p.shape().to_vec(),
                offset: push_values(&mut payload, &p.values),
            })
            .collect();
        let optimizer = optimizer.map(|opt| {
            let mut buffers = Vec::new();
            for (name, slot) in opt.slots() {
                for (suffix, buf) in [("first", &slot.first), ("second", &slot.second)] {
                    if buf.is_empty() {
                        continue;
                    }
                    buffers.push(TensorEntry {
                        name: format!("{name}.{suffix}"),
                        shape: vec![buf.len()],
                        offset: push_values(&mut payload, buf),
                    });
                }
            }
            OptimizerSection {
                kind: opt.kind(),
                learning_rate: opt.learning_rate().to_f64_lossless(),
                step: opt.step_count(),
                buffers,
            }
        });
        Self {
            manifest: CheckpointManifest {
                format: CHECKPOINT_FORMAT.to_owned(),
                meta,
                params: entries,
                optimizer,
                payload_bytes: payload.len(),
            },
            payload,
        }
    }

    pub fn of_module<T: Scalar, M: Parameterized<T>>(
        meta: BTreeMap<String, String>,
        module: &M,
        optimizer: Option<&Optimizer<T>>,
    ) -> Self {
        Self::capture(meta, &module.params(), optimizer)
    }

    fn read_entry<T: Scalar>(&self, entry: &TensorEntry) -> Result<Vec<T>> {
        let len = entry.numel();
        let end = entry.offset + len * 8;
        if end > self.payload.len() {
            return Err(Error::Format(format!(
                "tensor `{}` extends past the payload ({end} > {})",
                entry.name,
                self.payload.len()
            )));
        }
        Ok(self.payload[entry.offset..end]
            .chunks_exact(8)
            .map(|b| T::lit(f64::from_le_bytes(b.try_into().expect("8-byte chunk"))))
            .collect())
    }

    pub fn tensor<T: Scalar>(&self, name: &str) -> Result<ParamTensor<T>> {
        let entry = self
            .manifest
            .params
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Lookup(format!("checkpoint has no tensor `{name}`")))?;
        ParamTensor::new(name, entry.shape.clone(), self.read_entry(entry)?)
    }

    /// Overwrites the values of `module`'s parameters by name.
    pub fn restore_into<T: Scalar, M: Parameterized<T>>(&self, module: &mut M) -> Result<()> {
        for p in module.params_mut() {
            let stored: ParamTensor<T> = self.tensor(p.name())?;
            if stored.shape() != p.shape() {
                return Err(Error::Shape(format!(
                    "checkpoint tensor `{}` has shape {:?}, module expects {:?}",
                    p.name(),
                    stored.shape(),
                    p.shape()
                )));
            }
            p.values = stored.values;
            p.zero_grad();
        }
        Ok(())
    }

    pub fn restore_optimizer<T: Scalar>(&self) -> Result<Option<Optimizer<T>>> {
        let Some(section) = &self.manifest.optimizer else {
            return Ok(None);
        };
        let mut slots: BTreeMap<String, SlotState<T>> = BTreeMap::new();
        for entry in &section.buffers {
            let (param, suffix) = entry
                .name
                .rsplit_once('.')
                .ok_or_else(|| Error::Format(format!("bad optimizer buffer name `{}`", entry.name)))?;
            let values = self.read_entry(entry)?;
            let slot = slots.entry(param.to_owned()).or_insert_with(|| SlotState {
                first: Vec::new(),
                second: Vec::new(),
            });
            match suffix {
                "first" => slot.first = values,
                "second" => slot.second = values,
                other => {
                    return Err(Error::Format(format!("unknown optimizer buffer `{other}`")));
                }
            }
        }
        Ok(Some(Optimizer::from_parts(
            section.kind,
            T::lit(section.learning_rate),
            section.step,
            slots,
        )))
    }

    pub fn paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
        (dir.join(format!("{stem}.json")), dir.join(format!("{stem}.f64le")))
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let (manifest, payload) = Self::paths(dir, stem);
        fs::write(manifest, serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        fs::write(payload, &self.payload)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let (manifest_path, payload_path) = Self::paths(dir, stem);
        let manifest: CheckpointManifest = serde_json::from_slice(&fs::read(manifest_path)?)?;
        if manifest.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!(
                "unsupported checkpoint format `{}`",
                manifest.format
            )));
        }
        let payload = fs::read(payload_path)?;
        if payload.len() != manifest.payload_bytes {
            return Err(Error::Format(format!(
                "checkpoint payload has {} bytes, manifest declares {}",
                payload.len(),
                manifest.payload_bytes
            )));
        }
        Ok(Self { manifest, payload })
    }
}
