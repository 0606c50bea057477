//! Gaussian cluster benchmark on the unit sphere.
//!
//! Each class has a unit-norm center; samples are `normalize(center + σ·z)`
//! with `z ~ N(0, I)`. Class anchors are `normalize(α·center + (1−α)·r)` for
//! a random unit direction `r`, so `α` (alignment) sets how good zero-shot
//! inference is.

use serde::{Deserialize, Serialize};

use super::dataset::{DatasetManifest, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::labels::GroundTruth;
use crate::math::{self, Vector};
use crate::rng::SeededRng;

const MAX_CENTER_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub name: String,
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Centers satisfy pairwise cosine `<= 1 - separation`.
    pub separation: f64,
    /// Per-coordinate standard deviation of the sample noise.
    pub sigma: f64,
    /// In `[0, 1]`; 1 puts each anchor on its cluster center.
    pub alignment: f64,
    /// Draw exactly orthogonal centers (requires `dim >= classes`).
    pub orthogonal: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            classes: 10,
            per_class: 100,
            dim: 64,
            separation: 0.5,
            sigma: 0.4,
            alignment: 0.6,
            orthogonal: false,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.classes < 2 {
            return bad("synthetic data needs at least two classes".into());
        }
        if self.per_class == 0 || self.dim < 2 {
            return bad("synthetic data needs per_class >= 1 and dim >= 2".into());
        }
        if !(self.separation > 0.0 && self.separation <= 2.0) {
            return bad(format!("separation must lie in (0, 2], got {}", self.separation));
        }
        if !(self.sigma >= 0.0) || !(0.0..=1.0).contains(&self.alignment) {
            return bad("sigma must be >= 0 and alignment in [0, 1]".into());
        }
        if self.orthogonal && self.dim < self.classes {
            return bad(format!(
                "{} orthogonal class centers do not fit in dimension {}",
                self.classes, self.dim
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: EmbeddingDataset,
    pub truth: GroundTruth,
    /// Cluster centers, for oracles only.
    pub centers: Vec<Vector<f64>>,
}

fn random_unit(rng: &mut SeededRng, dim: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = rng.normal_vec(dim, 1.0);
        if let Ok(u) = math::l2_normalize(&g) {
            return u;
        }
    }
}

fn orthogonal_centers(rng: &mut SeededRng, classes: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(classes);
    while basis.len() < classes {
        let mut v: Vec<f64> = rng.normal_vec(dim, 1.0);
        for b in &basis {
            let p = math::dot(&v, b);
            math::axpy(-p, b, &mut v);
        }
        if math::norm(&v) > 1e-6 {
            basis.push(math::l2_normalize(&v).expect("non-zero"));
        }
    }
    basis
}

fn separated_centers(rng: &mut SeededRng, spec: &SyntheticSpec) -> Result<Vec<Vec<f64>>> {
    let bound = 1.0 - spec.separation;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
    let mut attempts = 0;
    while centers.len() < spec.classes {
        attempts += 1;
        if attempts > MAX_CENTER_ATTEMPTS * spec.classes {
            return Err(Error::Config(format!(
                "could not place {} centers with pairwise cosine <= {bound} in dimension {}",
                spec.classes, spec.dim
            )));
        }
        let c = random_unit(rng, spec.dim);
        if centers.iter().all(|o| math::dot(&c, o) <= bound) {
            centers.push(c);
        }
    }
    Ok(centers)
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let root = SeededRng::new(spec.seed).split("synthetic");
    let centers = if spec.orthogonal {
        orthogonal_centers(&mut root.split("centers"), spec.classes, spec.dim)
    } else {
        separated_centers(&mut root.split("centers"), spec)?
    };

    let mut labels: Vec<usize> = (0..spec.classes)
        .flat_map(|k| std::iter::repeat(k).take(spec.per_class))
        .collect();
    root.split("order").shuffle(&mut labels);

    let mut noise = root.split("points");
    let mut embeddings = Vec::with_capacity(labels.len());
    for &k in &labels {
        let x: Vec<f64> = centers[k]
            .iter()
            .map(|&c| c + spec.sigma * noise.normal::<f64>(0.0, 1.0))
            .collect();
        let x = math::l2_normalize(&x).unwrap_or_else(|_| centers[k].clone());
        embeddings.push(Vector::new(x)?);
    }

    let mut anchor_rng = root.split("anchors");
    let anchors = centers
        .iter()
        .map(|c| {
            let r = random_unit(&mut anchor_rng, spec.dim);
            let mixed: Vec<f64> = c
                .iter()
                .zip(&r)
                .map(|(&ci, &ri)| spec.alignment * ci + (1.0 - spec.alignment) * ri)
                .collect();
            let a = math::l2_normalize(&mixed).unwrap_or_else(|_| c.clone());
            Vector::new(a)
        })
        .collect::<Result<Vec<_>>>()?;

    let class_names = (0..spec.classes).map(|k| format!("class_{k:03}")).collect();
    let manifest = DatasetManifest::describe(&spec.name, spec.dim, class_names, embeddings.len(), true);
    let dataset = EmbeddingDataset::new(manifest, embeddings, anchors)?;
    Ok(SyntheticData {
        dataset,
        truth: GroundTruth::new(labels),
        centers: centers.into_iter().map(Vector::new).collect::<Result<_>>()?,
    })
}
