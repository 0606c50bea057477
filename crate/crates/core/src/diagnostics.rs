//! Finite-difference verification of every training loss on small random
//! instances.

use serde::Serialize;

use crate::encoders::{random_mixer, FftStudent, FrozenProvider};
use crate::error::Result;
use crate::grad::{check_gradients, Parameterized};
use crate::labels::{Generator, LabelStatus, PseudoLabel};
use crate::math::{self, Vector};
use crate::rng::SeededRng;
use crate::train::{
    contrastive_loss_fixed, fft_loss, loss_negative_with, loss_positive, phase1_loss, phase2_loss, AdaptedModel,
    ContrastiveViews, KeyQueue, ModelId, ModelShape,
};

pub const LOSS_NAMES: [&str; 6] = ["L1", "L2", "L_FFT", "L_Cont", "L_Phase1", "L_Phase2"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub instances: usize,
    pub eps: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            instances: 20,
            eps: 1e-5,
            tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossCheck {
    pub loss: &'static str,
    pub instances: usize,
    pub failed_instances: usize,
    pub max_relative_error: f64,
    /// Parameter holding the worst component over all instances.
    pub worst_param: String,
}

impl LossCheck {
    pub fn passed(&self) -> bool {
        self.failed_instances == 0
    }
}

/// A random problem with `C <= 5`, `d <= 16` and batches of at most 8.
#[derive(Debug, Clone)]
pub struct Instance {
    pub provider: FrozenProvider<f64>,
    pub model: AdaptedModel<f64>,
    pub student: FftStudent<f64>,
    pub candidates: Vec<PseudoLabel>,
    pub clean: Vec<PseudoLabel>,
    pub complements: Vec<usize>,
    pub views: ContrastiveViews<f64>,
    pub queue: KeyQueue<f64>,
    pub tau_prime: f64,
    pub lambda: f64,
    pub gamma: f64,
}

fn unit(rng: &mut SeededRng, dim: usize) -> Vec<f64> {
    loop {
        if let Ok(v) = math::l2_normalize(&rng.normal_vec::<f64>(dim, 1.0)) {
            return v;
        }
    }
}

fn randomize<M: Parameterized<f64>>(module: &mut M, rng: &mut SeededRng, sd: f64) {
    for p in module.params_mut() {
        let n = p.numel();
        p.values = rng.normal_vec(n, sd);
        p.zero_grad();
    }
}

pub fn random_instance(rng: &mut SeededRng) -> Result<Instance> {
    let classes = 2 + rng.below(4);
    let dim = 2 + rng.below(15);
    let context_dim = 1 + rng.below(dim);
    let samples = 1 + rng.below(8);
    let hidden = 1 + rng.below(2 * dim);
    let embeddings = (0..samples)
        .map(|_| Vector::new(unit(rng, dim)))
        .collect::<Result<Vec<_>>>()?;
    let anchors = (0..classes)
        .map(|_| Vector::new(unit(rng, dim)))
        .collect::<Result<Vec<_>>>()?;
    let mixer = random_mixer(dim, context_dim, rng.below(1 << 30) as u64);
    let provider = FrozenProvider::new(embeddings, anchors, mixer)?;

    let shape = ModelShape {
        context_len: 1 + rng.below(3),
        context_dim,
        context_sigma: 0.3,
        adapter_rank: 1 + rng.below(dim.min(4)),
        adapter_scale: 0.1 + rng.uniform::<f64>(),
    };
    let tau = 0.07 + rng.uniform::<f64>() * 0.93;
    let mut model = AdaptedModel::init(ModelId::Model1, dim, &shape, tau, &rng.split("model"))?;
    randomize(&mut model, rng, 0.3);
    let mut student = FftStudent::init(dim, hidden, classes, &rng.split("student"));
    randomize(&mut student, rng, 0.3);

    let labels: Vec<usize> = (0..samples).map(|_| rng.below(classes)).collect();
    let record = |i: usize, status| PseudoLabel {
        sample_id: i,
        label: labels[i],
        confidence: 1.0,
        generator: Generator::Zeroshot,
        status,
    };
    let candidates = (0..samples).map(|i| record(i, LabelStatus::Candidate)).collect();
    let clean = (0..samples).map(|i| record(i, LabelStatus::Clean)).collect();
    let complements = labels
        .iter()
        .map(|&y| {
            let r = rng.below(classes - 1);
            if r >= y {
                r + 1
            } else {
                r
            }
        })
        .collect();
    let views = ContrastiveViews {
        query_inputs: (0..samples).map(|_| unit(rng, dim)).collect(),
        keys: (0..samples).map(|_| unit(rng, dim)).collect(),
    };
    let mut queue = KeyQueue::new(8);
    let queued = rng.below(9);
    queue.push_batch((0..queued).map(|_| unit(rng, dim)));

    Ok(Instance {
        provider,
        model,
        student,
        candidates,
        clean,
        complements,
        views,
        queue,
        tau_prime: 0.1 + rng.uniform::<f64>() * 0.9,
        lambda: 0.1 + rng.uniform::<f64>() * 1.9,
        gamma: 0.1 + rng.uniform::<f64>() * 0.9,
    })
}

struct Tracker {
    check: LossCheck,
}

impl Tracker {
    fn new(loss: &'static str) -> Self {
        Self {
            check: LossCheck {
                loss,
                instances: 0,
                failed_instances: 0,
                max_relative_error: 0.0,
                worst_param: String::new(),
            },
        }
    }

    fn record(&mut self, report: crate::grad::GradReport) {
        self.check.instances += 1;
        if !report.passed() {
            self.check.failed_instances += 1;
        }
        for p in &report.params {
            if p.max_relative_error > self.check.max_relative_error || p.max_relative_error.is_nan() {
                self.check.max_relative_error = p.max_relative_error;
                self.check.worst_param = p.name.clone();
            }
        }
    }
}

/// Checks one instance against one loss, by name from [`LOSS_NAMES`].
fn check_one(loss: &str, inst: &Instance, opts: &SuiteOptions) -> Result<crate::grad::GradReport> {
    let (eps, tol) = (opts.eps, opts.tol);
    let p = &inst.provider;
    match loss {
        "L1" => {
            let mut m = inst.model.clone();
            loss_positive(&mut m, p, &inst.candidates)?;
            check_gradients(&mut m, |m: &AdaptedModel<f64>| loss_positive(&mut m.clone(), p, &inst.candidates), eps, tol)
        }
        "L2" => {
            let mut m = inst.model.clone();
            let c = &inst.complements;
            loss_negative_with(&mut m, p, &inst.candidates, c)?;
            check_gradients(
                &mut m,
                |m: &AdaptedModel<f64>| loss_negative_with(&mut m.clone(), p, &inst.candidates, c),
                eps,
                tol,
            )
        }
        "L_Phase1" => {
            let mut m = inst.model.clone();
            let c = Some(inst.complements.as_slice());
            phase1_loss(&mut m, p, &inst.candidates, c, inst.lambda)?;
            check_gradients(
                &mut m,
                |m: &AdaptedModel<f64>| Ok(phase1_loss(&mut m.clone(), p, &inst.candidates, c, inst.lambda)?.total),
                eps,
                tol,
            )
        }
        "L_FFT" => {
            let mut s = inst.student.clone();
            fft_loss(&mut s, p, &inst.clean)?;
            check_gradients(&mut s, |s: &FftStudent<f64>| fft_loss(&mut s.clone(), p, &inst.clean), eps, tol)
        }
        "L_Cont" => {
            let mut e = inst.student.encoder.clone();
            let (v, q, t) = (&inst.views, &inst.queue, inst.tau_prime);
            contrastive_loss_fixed(&mut e, v, q, t, 1.0)?;
            check_gradients(
                &mut e,
                |e: &crate::encoders::FftEncoder<f64>| contrastive_loss_fixed(&mut e.clone(), v, q, t, 1.0),
                eps,
                tol,
            )
        }
        "L_Phase2" => {
            let mut s = inst.student.clone();
            let c = Some((&inst.views, &inst.queue, inst.tau_prime));
            phase2_loss(&mut s, p, &inst.clean, c, inst.gamma)?;
            check_gradients(
                &mut s,
                |s: &FftStudent<f64>| Ok(phase2_loss(&mut s.clone(), p, &inst.clean, c, inst.gamma)?.total),
                eps,
                tol,
            )
        }
        other => Err(crate::Error::Lookup(format!("unknown loss `{other}`"))),
    }
}

/// Runs every loss over `opts.instances` random instances each.
pub fn gradient_suite(opts: &SuiteOptions) -> Result<Vec<LossCheck>> {
    let root = SeededRng::new(opts.seed).split("gradient-suite");
    LOSS_NAMES
        .iter()
        .map(|&loss| {
            let mut rng = root.split(loss);
            let mut tracker = Tracker::new(loss);
            for _ in 0..opts.instances {
                let inst = random_instance(&mut rng)?;
                tracker.record(check_one(loss, &inst, opts)?);
            }
            Ok(tracker.check)
        })
        .collect()
}
