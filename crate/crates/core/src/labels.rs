//! Zero-shot inference, pseudo-label assignment and per-class top-K selection.
//!
//! Ground truth is never stored on a [`PseudoLabel`]; it lives in a separate
//! [`GroundTruth`] table that only evaluation and export code accepts.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoders::FrozenProvider;
use crate::error::{Error, Result};
use crate::math::{self, Vector};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Zeroshot,
    Model1,
    Model2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelStatus {
    Unassigned,
    Candidate,
    Clean,
    Noise,
}

impl LabelStatus {
    /// `unassigned → candidate → {clean | noise}`
    pub fn can_become(self, next: LabelStatus) -> bool {
        matches!(
            (self, next),
            (LabelStatus::Unassigned, LabelStatus::Candidate)
                | (LabelStatus::Candidate, LabelStatus::Clean)
                | (LabelStatus::Candidate, LabelStatus::Noise)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub sample_id: usize,
    pub label: usize,
    /// Max component of the softmax that produced `label`.
    pub confidence: f64,
    pub generator: Generator,
    pub status: LabelStatus,
}

impl PseudoLabel {
    pub fn transition(&mut self, next: LabelStatus) -> Result<()> {
        if !self.status.can_become(next) {
            return Err(Error::Contract(format!(
                "sample {}: status cannot move from {:?} to {:?}",
                self.sample_id, self.status, next
            )));
        }
        self.status = next;
        Ok(())
    }
}

/// Evaluation-only class labels, indexed by sample id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth(Vec<usize>);

impl GroundTruth {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    pub fn get(&self, sample_id: usize) -> Option<usize> {
        self.0.get(sample_id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Fraction of `(sample_id, label)` pairs that match; `None` when empty.
    pub fn accuracy<'a>(&self, pairs: impl IntoIterator<Item = (usize, usize)>) -> Option<f64> {
        let (mut hits, mut total) = (0usize, 0usize);
        for (id, label) in pairs {
            total += 1;
            hits += usize::from(self.get(id) == Some(label));
        }
        (total > 0).then(|| hits as f64 / total as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PseudoLabelSet {
    records: Vec<PseudoLabel>,
}

#[derive(Serialize, Deserialize)]
struct ExportRecord {
    sample_id: usize,
    label: usize,
    confidence: f64,
    generator: Generator,
    status: LabelStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<usize>,
}

impl PseudoLabelSet {
    pub fn from_records(records: Vec<PseudoLabel>) -> Self {
        Self { records }
    }

    pub fn records(&self) -> &[PseudoLabel] {
        &self.records
    }

    pub fn into_records(self) -> Vec<PseudoLabel> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PseudoLabel> {
        self.records.iter()
    }

    pub fn find(&self, sample_id: usize) -> Option<&PseudoLabel> {
        self.records.iter().find(|r| r.sample_id == sample_id)
    }

    pub fn with_status(&self, status: LabelStatus) -> Vec<PseudoLabel> {
        self.records
            .iter()
            .filter(|r| r.status == status)
            .cloned()
            .collect()
    }

    pub fn accuracy(&self, truth: &GroundTruth) -> Option<f64> {
        truth.accuracy(self.records.iter().map(|r| (r.sample_id, r.label)))
    }

    /// One JSON object per line. Ground truth is only written when supplied.
    pub fn to_jsonl(&self, truth: Option<&GroundTruth>) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            let rec = ExportRecord {
                sample_id: r.sample_id,
                label: r.label,
                confidence: r.confidence,
                generator: r.generator,
                status: r.status,
                ground_truth: truth.and_then(|t| t.get(r.sample_id)),
            };
            out.push_str(&serde_json::to_string(&rec)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: &Path, truth: Option<&GroundTruth>) -> Result<()> {
        fs::write(path, self.to_jsonl(truth)?)?;
        Ok(())
    }

    /// Parses an export; the second element carries any `ground_truth` fields found.
    pub fn from_jsonl(text: &str) -> Result<(Self, Vec<Option<usize>>)> {
        let mut records = Vec::new();
        let mut truth = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ExportRecord = serde_json::from_str(line)
                .map_err(|e| Error::Format(format!("label record on line {}: {e}", lineno + 1)))?;
            truth.push(rec.ground_truth);
            records.push(PseudoLabel {
                sample_id: rec.sample_id,
                label: rec.label,
                confidence: rec.confidence,
                generator: rec.generator,
                status: rec.status,
            });
        }
        Ok((Self { records }, truth))
    }

    pub fn read_jsonl(path: &Path) -> Result<(Self, Vec<Option<usize>>)> {
        Self::from_jsonl(&fs::read_to_string(path)?)
    }
}

/// Class distribution of one sample: softmax over cosine similarities to
/// each class text embedding at temperature `tau`.
pub fn zero_shot_probs<T: Scalar>(
    provider: &FrozenProvider<T>,
    sample_id: usize,
    tau: T,
    text_embeddings: &[Vector<T>],
) -> Result<Vector<T>> {
    let x = provider.embedding(sample_id)?;
    probs_against(x, tau, text_embeddings)
}

pub(crate) fn probs_against<T: Scalar>(x: &[T], tau: T, text: &[Vector<T>]) -> Result<Vector<T>> {
    let sims = text
        .iter()
        .map(|t| math::cosine_sim(x, t))
        .collect::<Result<Vec<T>>>()?;
    Vector::new(math::softmax_temp(&sims, tau)?)
}

/// Argmax labels with confidence; ties go to the lowest class index.
pub fn assign_pseudo_labels<'a, T: Scalar>(
    probs: impl IntoIterator<Item = (usize, &'a [T])>,
    generator: Generator,
) -> Result<PseudoLabelSet> {
    let records: Vec<PseudoLabel> = probs
        .into_iter()
        .map(|(sample_id, p)| {
            let label = math::argmax(p);
            PseudoLabel {
                sample_id,
                label,
                confidence: p[label].to_f64_lossless(),
                generator,
                status: LabelStatus::Candidate,
            }
        })
        .collect();
    if records.is_empty() {
        return Err(Error::Contract("cannot assign pseudo-labels to an empty set".into()));
    }
    Ok(PseudoLabelSet { records })
}

/// Zero-shot pseudo-labels for `sample_ids`.
pub fn zero_shot_labels<T: Scalar>(
    provider: &FrozenProvider<T>,
    sample_ids: &[usize],
    tau: T,
    text_embeddings: &[Vector<T>],
) -> Result<PseudoLabelSet> {
    let probs = sample_ids
        .iter()
        .map(|&id| Ok((id, zero_shot_probs(provider, id, tau, text_embeddings)?)))
        .collect::<Result<Vec<_>>>()?;
    assign_pseudo_labels(probs.iter().map(|(id, p)| (*id, p.as_slice())), Generator::Zeroshot)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopK {
    /// Grouped by class ascending; within a class by confidence descending, then sample id.
    pub selected: Vec<PseudoLabel>,
    /// Classes with no candidate at all.
    pub empty_classes: Vec<usize>,
    /// Classes with fewer than K candidates.
    pub short_classes: Vec<usize>,
}

impl TopK {
    pub fn sample_ids(&self) -> BTreeSet<usize> {
        self.selected.iter().map(|r| r.sample_id).collect()
    }
}

/// Per class, the `k` most confident candidates carrying that label.
pub fn select_top_k(labels: &PseudoLabelSet, k: usize, num_classes: usize) -> Result<TopK> {
    if k == 0 {
        return Err(Error::Contract("top-k requires k >= 1".into()));
    }
    let mut by_class: Vec<Vec<&PseudoLabel>> = vec![Vec::new(); num_classes];
    for r in labels.records.iter().filter(|r| r.status == LabelStatus::Candidate) {
        let bucket = by_class.get_mut(r.label).ok_or(Error::Index {
            what: "classes",
            index: r.label,
            len: num_classes,
        })?;
        bucket.push(r);
    }
    let mut out = TopK {
        selected: Vec::new(),
        empty_classes: Vec::new(),
        short_classes: Vec::new(),
    };
    for (class, mut bucket) in by_class.into_iter().enumerate() {
        if bucket.is_empty() {
            log::warn!("class {class} has no pseudo-label candidates; it contributes no samples");
            out.empty_classes.push(class);
        } else if bucket.len() < k {
            out.short_classes.push(class);
        }
        bucket.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then(a.sample_id.cmp(&b.sample_id))
        });
        out.selected.extend(bucket.into_iter().take(k).cloned());
    }
    Ok(out)
}
