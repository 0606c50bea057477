//! Evaluation against ground truth. Nothing here feeds back into training.

use serde::Serialize;

use crate::encoders::{FftStudent, FrozenProvider};
use crate::error::Result;
use crate::labels::{GroundTruth, LabelStatus, PseudoLabel, PseudoLabelSet};
use crate::pipeline::{ensemble_predictions, student_predictions, PipelineOutcome};
use crate::scalar::Scalar;
use crate::train::FilterOutcome;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CleanStats {
    pub direction: String,
    pub size: usize,
    /// Fraction of clean-set labels that are correct.
    pub precision: Option<f64>,
    /// Fraction of the generator's correct labels that were kept.
    pub recall: Option<f64>,
    /// Accuracy of the generator's labels over all samples, before filtering.
    pub candidate_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub zero_shot_accuracy: Option<f64>,
    /// Accuracy of each Phase-I model's own labels on all samples.
    pub model_accuracy: [Option<f64>; 2],
    pub clean: [CleanStats; 2],
    pub student_accuracy: [Option<f64>; 2],
    pub ensemble_accuracy: Option<f64>,
}

fn correct(r: &PseudoLabel, truth: &GroundTruth) -> bool {
    truth.get(r.sample_id) == Some(r.label)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn clean_stats(direction: &str, labels: &PseudoLabelSet, truth: &GroundTruth) -> CleanStats {
    let clean: Vec<&PseudoLabel> = labels.iter().filter(|r| r.status == LabelStatus::Clean).collect();
    let clean_hits = clean.iter().filter(|r| correct(r, truth)).count();
    let all_hits = labels.iter().filter(|r| correct(r, truth)).count();
    CleanStats {
        direction: direction.to_owned(),
        size: clean.len(),
        precision: ratio(clean_hits, clean.len()),
        recall: ratio(clean_hits, all_hits),
        candidate_accuracy: ratio(all_hits, labels.len()),
    }
}

pub fn prediction_accuracy(predictions: &[usize], sample_ids: &[usize], truth: &GroundTruth) -> Option<f64> {
    truth.accuracy(sample_ids.iter().copied().zip(predictions.iter().copied()))
}

pub fn evaluate_parts<T: Scalar>(
    zero_shot: &PseudoLabelSet,
    filters: &[FilterOutcome; 2],
    students: &[FftStudent<T>; 2],
    provider: &FrozenProvider<T>,
    truth: &GroundTruth,
) -> Result<EvalReport> {
    let ids = provider.sample_ids();
    let clean = [
        clean_stats(&filters[0].direction(), &filters[0].labels, truth),
        clean_stats(&filters[1].direction(), &filters[1].labels, truth),
    ];
    let s1 = student_predictions(&students[0], provider, &ids)?;
    let s2 = student_predictions(&students[1], provider, &ids)?;
    let ens = ensemble_predictions(students, provider, &ids)?;
    Ok(EvalReport {
        zero_shot_accuracy: zero_shot.accuracy(truth),
        model_accuracy: [clean[0].candidate_accuracy, clean[1].candidate_accuracy],
        clean,
        student_accuracy: [
            prediction_accuracy(&s1, &ids, truth),
            prediction_accuracy(&s2, &ids, truth),
        ],
        ensemble_accuracy: prediction_accuracy(&ens, &ids, truth),
    })
}

pub fn evaluate<T: Scalar>(
    outcome: &PipelineOutcome<T>,
    provider: &FrozenProvider<T>,
    truth: &GroundTruth,
) -> Result<EvalReport> {
    evaluate_parts(&outcome.zero_shot, &outcome.filters, &outcome.students, provider, truth)
}
