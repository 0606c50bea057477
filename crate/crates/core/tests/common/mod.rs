//! Straight-line reference implementations and fixtures shared by the
//! integration tests. Nothing here calls into the library's math.

#![allow(dead_code)]

use coft::encoders::{FftStudent, FrozenProvider};
use coft::grad::Parameterized;
use coft::labels::{Generator, LabelStatus, PseudoLabel};
use coft::math::{Matrix, Vector};
use coft::rng::SeededRng;
use coft::train::{AdaptedModel, ModelId, ModelShape};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn unit(a: &[f64]) -> Vec<f64> {
    let n = norm(a);
    a.iter().map(|x| x / n).collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}

pub fn softmax(z: &[f64], tau: f64) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| ((v - m) / tau).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..z.len() {
        if z[i] > z[best] {
            best = i;
        }
    }
    best
}

pub fn param(module: &impl Parameterized<f64>, name: &str) -> Vec<f64> {
    module
        .params()
        .into_iter()
        .find(|p| p.name() == name)
        .unwrap_or_else(|| panic!("no parameter {name}"))
        .values
        .clone()
}

/// `normalize(mixer · mean(context rows) + anchor)` for every class.
pub fn text(model: &AdaptedModel<f64>, provider: &FrozenProvider<f64>, name: &str) -> Vec<Vec<f64>> {
    let ctx = param(model, name);
    let m = model.prompts.context_len();
    let dc = model.prompts.context_dim();
    let mut mean = vec![0.0; dc];
    for r in 0..m {
        for j in 0..dc {
            mean[j] += ctx[r * dc + j] / m as f64;
        }
    }
    let mixer = provider.mixer();
    let d = provider.dim();
    let mut shift = vec![0.0; d];
    for i in 0..d {
        for j in 0..dc {
            shift[i] += mixer.row(i)[j] * mean[j];
        }
    }
    provider
        .anchors()
        .iter()
        .map(|a| unit(&(0..d).map(|i| a[i] + shift[i]).collect::<Vec<_>>()))
        .collect()
}

/// `normalize(x + scale · upᵀ tanh(downᵀ x))`.
pub fn adapted(model: &AdaptedModel<f64>, x: &[f64]) -> Vec<f64> {
    let down = param(model, "adapter.down");
    let up = param(model, "adapter.up");
    let d = x.len();
    let r = model.adapter.rank();
    let mut h = vec![0.0; r];
    for k in 0..r {
        let mut s = 0.0;
        for i in 0..d {
            s += down[i * r + k] * x[i];
        }
        h[k] = s.tanh();
    }
    let mut out = x.to_vec();
    for i in 0..d {
        for k in 0..r {
            out[i] += model.adapter.scale() * up[k * d + i] * h[k];
        }
    }
    unit(&out)
}

pub fn positive_sims(model: &AdaptedModel<f64>, provider: &FrozenProvider<f64>, id: usize) -> Vec<f64> {
    let v = adapted(model, provider.embedding(id).unwrap());
    text(model, provider, "prompt.pos").iter().map(|t| cosine(&v, t)).collect()
}

pub fn negative_sims(model: &AdaptedModel<f64>, provider: &FrozenProvider<f64>, id: usize) -> Vec<f64> {
    let v = adapted(model, provider.embedding(id).unwrap());
    text(model, provider, "prompt.neg").iter().map(|t| cosine(&v, t)).collect()
}

pub fn zero_shot_probs(x: &[f64], text: &[Vector<f64>], tau: f64) -> Vec<f64> {
    let sims: Vec<f64> = text.iter().map(|t| cosine(x, t)).collect();
    softmax(&sims, tau)
}

pub fn clean_probability(model: &AdaptedModel<f64>, provider: &FrozenProvider<f64>, id: usize, label: usize) -> f64 {
    let pos = positive_sims(model, provider, id)[label];
    let neg = negative_sims(model, provider, id)[label];
    let a = (pos / model.tau).exp();
    let b = (neg / model.tau).exp();
    a / (a + b)
}

pub fn l1(model: &AdaptedModel<f64>, provider: &FrozenProvider<f64>, batch: &[PseudoLabel]) -> f64 {
    let mut total = 0.0;
    for r in batch {
        let p = softmax(&positive_sims(model, provider, r.sample_id), model.tau);
        total -= p[r.label].ln();
    }
    total / batch.len() as f64
}

pub fn l2(model: &AdaptedModel<f64>, provider: &FrozenProvider<f64>, batch: &[PseudoLabel], complements: &[usize]) -> f64 {
    let mut total = 0.0;
    for (r, &c) in batch.iter().zip(complements) {
        let py = clean_probability(model, provider, r.sample_id, r.label);
        let pc = clean_probability(model, provider, r.sample_id, c);
        total -= py.ln() + (1.0 - pc).ln();
    }
    total / batch.len() as f64
}

/// `x + W2 tanh(W1 x + b1) + b2`.
pub fn encode(student: &FftStudent<f64>, x: &[f64]) -> Vec<f64> {
    let w1 = param(student, "fft.w1");
    let b1 = param(student, "fft.b1");
    let w2 = param(student, "fft.w2");
    let b2 = param(student, "fft.b2");
    let d = x.len();
    let h = b1.len();
    let mut a = vec![0.0; h];
    for j in 0..h {
        let mut s = b1[j];
        for i in 0..d {
            s += w1[j * d + i] * x[i];
        }
        a[j] = s.tanh();
    }
    let mut out = vec![0.0; d];
    for i in 0..d {
        let mut s = x[i] + b2[i];
        for j in 0..h {
            s += w2[i * h + j] * a[j];
        }
        out[i] = s;
    }
    out
}

pub fn logits(student: &FftStudent<f64>, x: &[f64]) -> Vec<f64> {
    let w = param(student, "head.weight");
    let b = param(student, "head.bias");
    let v = encode(student, x);
    let d = v.len();
    (0..b.len())
        .map(|k| b[k] + (0..d).map(|i| w[k * d + i] * v[i]).sum::<f64>())
        .collect()
}

pub fn fft_loss(student: &FftStudent<f64>, provider: &FrozenProvider<f64>, batch: &[PseudoLabel]) -> f64 {
    let mut total = 0.0;
    for r in batch {
        let p = softmax(&logits(student, provider.embedding(r.sample_id).unwrap()), 1.0);
        total -= p[r.label].ln();
    }
    total / batch.len() as f64
}

/// Mean over queries of `-log(e^{q·k/τ'} / (e^{q·k/τ'} + Σ_n e^{q·n/τ'}))`.
pub fn info_nce(queries: &[Vec<f64>], keys: &[Vec<f64>], queue: &[Vec<f64>], tau: f64) -> f64 {
    let mut total = 0.0;
    for (q, k) in queries.iter().zip(keys) {
        let pos = (dot(q, k) / tau).exp();
        let mut den = pos;
        for n in queue {
            den += (dot(q, n) / tau).exp();
        }
        total -= (pos / den).ln();
    }
    total / queries.len() as f64
}

/// Sort every candidate by (label, confidence desc, id) and keep the first `k` per label.
pub fn top_k(records: &[PseudoLabel], k: usize) -> Vec<usize> {
    let mut sorted: Vec<&PseudoLabel> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.label
            .cmp(&b.label)
            .then(b.confidence.partial_cmp(&a.confidence).unwrap())
            .then(a.sample_id.cmp(&b.sample_id))
    });
    let mut out = Vec::new();
    let mut count = 0;
    let mut current = usize::MAX;
    for r in sorted {
        if r.label != current {
            current = r.label;
            count = 0;
        }
        if count < k {
            out.push(r.sample_id);
            count += 1;
        }
    }
    out
}

/// Per sample: the generator's argmax label and whether the validator's
/// positive similarity for it strictly beats the negative one.
pub fn filter(
    generator: &AdaptedModel<f64>,
    validator: &AdaptedModel<f64>,
    provider: &FrozenProvider<f64>,
) -> Vec<(usize, bool)> {
    (0..provider.num_samples())
        .map(|id| {
            let y = argmax(&positive_sims(generator, provider, id));
            let keep = positive_sims(validator, provider, id)[y] > negative_sims(validator, provider, id)[y];
            (y, keep)
        })
        .collect()
}

pub fn random_unit(rng: &mut SeededRng, dim: usize) -> Vec<f64> {
    unit(&rng.normal_vec::<f64>(dim, 1.0))
}

/// Random unit embeddings and anchors with a random mixer.
pub fn random_provider(rng: &mut SeededRng, samples: usize, classes: usize, dim: usize, context_dim: usize) -> FrozenProvider<f64> {
    let embeddings = (0..samples).map(|_| Vector::new(random_unit(rng, dim)).unwrap()).collect();
    let anchors = (0..classes).map(|_| Vector::new(random_unit(rng, dim)).unwrap()).collect();
    let mixer = Matrix::new(dim, context_dim, rng.normal_vec(dim * context_dim, 0.5)).unwrap();
    FrozenProvider::new(embeddings, anchors, mixer).unwrap()
}

pub fn shape(context_dim: usize, rank: usize) -> ModelShape {
    ModelShape {
        context_len: 3,
        context_dim,
        context_sigma: 0.3,
        adapter_rank: rank,
        adapter_scale: 0.7,
    }
}

/// A model whose every parameter is random, including the adapter's `up`.
pub fn random_model(id: ModelId, rng: &mut SeededRng, dim: usize, context_dim: usize, tau: f64) -> AdaptedModel<f64> {
    let mut model = AdaptedModel::init(id, dim, &shape(context_dim, 2), tau, &rng.split("init")).unwrap();
    for p in model.params_mut() {
        let n = p.numel();
        p.values = rng.normal_vec(n, 0.4);
    }
    model
}

pub fn random_student(rng: &mut SeededRng, dim: usize, hidden: usize, classes: usize) -> FftStudent<f64> {
    let mut s = FftStudent::init(dim, hidden, classes, &rng.split("init"));
    for p in s.params_mut() {
        let n = p.numel();
        p.values = rng.normal_vec(n, 0.4);
    }
    s
}

pub fn record(sample_id: usize, label: usize, status: LabelStatus) -> PseudoLabel {
    PseudoLabel {
        sample_id,
        label,
        confidence: 1.0,
        generator: Generator::Zeroshot,
        status,
    }
}

pub fn random_labels(rng: &mut SeededRng, samples: usize, classes: usize, status: LabelStatus) -> Vec<PseudoLabel> {
    (0..samples).map(|i| record(i, rng.below(classes), status)).collect()
}

pub fn complements(rng: &mut SeededRng, batch: &[PseudoLabel], classes: usize) -> Vec<usize> {
    batch
        .iter()
        .map(|r| (r.label + 1 + rng.below(classes - 1)) % classes)
        .collect()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
