//! End-to-end run: zero-shot labels, (iterated) Phase I, collaborative
//! filtering and Phase II for both directions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::data::EmbeddingDataset;
use crate::encoders::{FftStudent, FrozenProvider};
use crate::error::{Error, Result};
use crate::grad::{Checkpoint, Optimizer};
use crate::labels::{zero_shot_labels, PseudoLabelSet};
use crate::math::{self, Vector};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::train::{
    collaborate, iterate_peft, train_fft, train_phase2_plus, ContrastiveSetup, EmbeddingAugmenter, EpochStats,
    AdaptedModel, FilterOutcome, ModelId, MomentumState, PeftOutcome, PeftSettings,
};

pub const CHECKPOINT_STEMS: [&str; 4] = ["phase1-model1", "phase1-model2", "phase2-student1", "phase2-student2"];

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord<'a> {
    pub phase: &'static str,
    pub round: Option<usize>,
    pub model: &'a str,
    #[serde(flatten)]
    pub stats: &'a EpochStats,
}

/// Hooks for metrics and artifacts. Ground truth, when available, lives only
/// on the observer side.
pub trait PipelineObserver {
    fn on_stage(&mut self, _stage: &str) {}
    fn on_labels(&mut self, _name: &str, _labels: &PseudoLabelSet) {}
    fn on_epoch(&mut self, _record: &EpochRecord<'_>) {}
}

pub struct NoopObserver;

impl PipelineObserver for NoopObserver {}

#[derive(Debug, Clone)]
pub struct PipelineOutcome<T> {
    pub zero_shot: PseudoLabelSet,
    pub peft: PeftOutcome<T>,
    /// `[model1 → model2, model2 → model1]`
    pub filters: [FilterOutcome; 2],
    /// Student `i` trains on the clean set of direction `i`.
    pub students: [FftStudent<T>; 2],
    pub student_optimizers: [Optimizer<T>; 2],
}

/// Frozen provider for `dataset` at the configured context width and mixer seed.
pub fn dataset_provider<T: Scalar>(dataset: &EmbeddingDataset, config: &RunConfig) -> Result<FrozenProvider<T>> {
    let context_dim = config.encoder.resolved_context_dim(dataset.manifest().dim);
    dataset.to_provider(context_dim, config.encoder.mixer_seed)
}

/// Class text embeddings for zero-shot labelling: template means if given,
/// otherwise the provider anchors.
pub fn zero_shot_text<T: Scalar>(provider: &FrozenProvider<T>, templates: Option<&[Vector<T>]>) -> Vec<Vector<T>> {
    templates.map_or_else(|| provider.anchors().to_vec(), <[_]>::to_vec)
}

pub fn run_pipeline<T: Scalar>(
    config: &RunConfig,
    provider: &FrozenProvider<T>,
    text: &[Vector<T>],
    observer: &mut dyn PipelineObserver,
) -> Result<PipelineOutcome<T>> {
    config.validate()?;
    if text.len() != provider.num_classes() {
        return Err(Error::Shape(format!(
            "{} zero-shot text embeddings for {} classes",
            text.len(),
            provider.num_classes()
        )));
    }
    let ids = provider.sample_ids();
    let root = SeededRng::new(config.seed);
    let tau = T::lit(config.selection.tau);

    observer.on_stage("zero-shot");
    let zero_shot = zero_shot_labels(provider, &ids, tau, text)?;
    observer.on_labels("zero-shot", &zero_shot);

    observer.on_stage("phase1");
    let settings = PeftSettings::from_config(config, provider.dim());
    let peft = iterate_peft(provider, &zero_shot, &ids, &settings, config.effective_rounds(), &root)?;
    for record in &peft.rounds {
        for (i, model) in ["model1", "model2"].into_iter().enumerate() {
            observer.on_labels(
                &format!("round{}-{model}-selected", record.round),
                &PseudoLabelSet::from_records(record.selected[i].selected.clone()),
            );
            for stats in &record.epochs[i] {
                observer.on_epoch(&EpochRecord {
                    phase: "phase1",
                    round: Some(record.round),
                    model,
                    stats,
                });
            }
        }
    }

    observer.on_stage("filter");
    let filters = collaborate(&peft.models, provider, &ids)?;
    for f in &filters {
        observer.on_labels(&format!("filter-{}-{}", f.generator, f.validator), &f.labels);
    }

    observer.on_stage("phase2");
    let gamma = T::lit(config.effective_gamma());
    let hidden = config.encoder.resolved_hidden(provider.dim());
    let augmenter = EmbeddingAugmenter {
        noise_sigma: config.contrastive.noise_sigma,
        dropout: config.contrastive.dropout,
    };
    let mut trained = Vec::with_capacity(2);
    for (i, filter) in filters.iter().enumerate() {
        let name = format!("student{}", i + 1);
        let mut student = FftStudent::init(
            provider.dim(),
            hidden,
            provider.num_classes(),
            &root.split(format!("phase2/{name}/init")),
        );
        let rng = root.split(format!("phase2/{name}/train"));
        let clean = filter.clean();
        let direction = filter.direction();
        let report = if gamma == T::zero() {
            train_fft(&mut student, provider, &clean, &config.phase2, &direction, &rng)?
        } else {
            let mut state = MomentumState::new(
                &student.encoder,
                T::lit(config.contrastive.mu),
                config.contrastive.queue_capacity,
                T::lit(config.contrastive.tau_prime),
            )?;
            let setup = ContrastiveSetup {
                state: &mut state,
                augmenter: &augmenter,
                unlabeled: &ids,
                gamma,
            };
            train_phase2_plus(&mut student, provider, &clean, setup, &config.phase2, &direction, &rng)?
        };
        for stats in &report.epochs {
            observer.on_epoch(&EpochRecord {
                phase: "phase2",
                round: None,
                model: &name,
                stats,
            });
        }
        trained.push((student, report.optimizer));
    }
    observer.on_stage("done");
    let (s2, o2) = trained.pop().expect("two students");
    let (s1, o1) = trained.pop().expect("two students");
    Ok(PipelineOutcome {
        zero_shot,
        peft,
        filters,
        students: [s1, s2],
        student_optimizers: [o1, o2],
    })
}

/// Argmax of the mean of both students' logits.
pub fn ensemble_predictions<T: Scalar>(
    students: &[FftStudent<T>; 2],
    provider: &FrozenProvider<T>,
    sample_ids: &[usize],
) -> Result<Vec<usize>> {
    let half = T::lit(0.5);
    sample_ids
        .iter()
        .map(|&id| {
            let x = provider.embedding(id)?;
            let a = students[0].logits(x)?;
            let b = students[1].logits(x)?;
            let mean: Vec<T> = a.iter().zip(&b).map(|(&p, &q)| (p + q) * half).collect();
            Ok(math::argmax(&mean))
        })
        .collect()
}

pub fn student_predictions<T: Scalar>(
    student: &FftStudent<T>,
    provider: &FrozenProvider<T>,
    sample_ids: &[usize],
) -> Result<Vec<usize>> {
    sample_ids
        .iter()
        .map(|&id| student.predict(provider.embedding(id)?))
        .collect()
}

impl<T: Scalar> PipelineOutcome<T> {
    /// Final parameters and optimizer state of every trained module, keyed by
    /// [`CHECKPOINT_STEMS`].
    pub fn checkpoints(&self) -> Vec<(&'static str, Checkpoint)> {
        let meta = |role: &str| BTreeMap::from([("role".to_owned(), role.to_owned())]);
        vec![
            (
                CHECKPOINT_STEMS[0],
                Checkpoint::of_module(meta("model1"), &self.peft.models[0], Some(&self.peft.optimizers[0])),
            ),
            (
                CHECKPOINT_STEMS[1],
                Checkpoint::of_module(meta("model2"), &self.peft.models[1], Some(&self.peft.optimizers[1])),
            ),
            (
                CHECKPOINT_STEMS[2],
                Checkpoint::of_module(meta("student1"), &self.students[0], Some(&self.student_optimizers[0])),
            ),
            (
                CHECKPOINT_STEMS[3],
                Checkpoint::of_module(meta("student2"), &self.students[1], Some(&self.student_optimizers[1])),
            ),
        ]
    }
}

/// Trained modules rebuilt from a run directory's checkpoints.
#[derive(Debug, Clone)]
pub struct RestoredRun<T> {
    pub models: [AdaptedModel<T>; 2],
    pub students: [FftStudent<T>; 2],
}

pub fn restore_run<T: Scalar>(dir: &Path, config: &RunConfig, provider: &FrozenProvider<T>) -> Result<RestoredRun<T>> {
    let settings = PeftSettings::from_config(config, provider.dim());
    let scratch = SeededRng::new(0);
    let mut models = [
        AdaptedModel::init(ModelId::Model1, provider.dim(), &settings.shape, T::lit(settings.tau), &scratch)?,
        AdaptedModel::init(ModelId::Model2, provider.dim(), &settings.shape, T::lit(settings.tau), &scratch)?,
    ];
    let hidden = config.encoder.resolved_hidden(provider.dim());
    let mut students = [
        FftStudent::init(provider.dim(), hidden, provider.num_classes(), &scratch),
        FftStudent::init(provider.dim(), hidden, provider.num_classes(), &scratch),
    ];
    for (model, stem) in models.iter_mut().zip(&CHECKPOINT_STEMS[..2]) {
        Checkpoint::load(dir, stem)?.restore_into(model)?;
        model.trained = true;
    }
    for (student, stem) in students.iter_mut().zip(&CHECKPOINT_STEMS[2..]) {
        Checkpoint::load(dir, stem)?.restore_into(student)?;
    }
    Ok(RestoredRun { models, students })
}
