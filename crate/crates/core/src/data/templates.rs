//! Prompt templates as deterministic perturbations of the class anchors.
//!
//! Without a text encoder, template `i > 0` maps every anchor through a fixed
//! product of Givens rotations seeded by a hash of the template text. Template
//! 0 is the identity. The per-class anchor is the normalized mean over
//! templates.

use std::collections::BTreeSet;
use std::path::Path;

use crate::encoders::FrozenProvider;
use crate::error::{Error, Result};
use crate::math::{self, Vector};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::util::hash64;

pub const PLACEHOLDER: &str = "{class}";
const MAX_ANGLE: f64 = 0.5;

/// One plane rotation of coordinates `(p, q)` by `angle` radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Givens {
    pub p: usize,
    pub q: usize,
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet<T> {
    pub templates: Vec<String>,
    /// `per_template[i][k]`: anchor of class `k` under template `i`.
    pub per_template: Vec<Vec<Vector<T>>>,
    pub anchors: Vec<Vector<T>>,
}

/// Parses a line-per-template file body. Blank lines are skipped and repeated
/// templates keep their first occurrence.
pub fn parse_templates(text: &str) -> Result<Vec<String>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let count = line.matches(PLACEHOLDER).count();
        if count != 1 {
            return Err(Error::Format(format!(
                "template on line {} must contain `{PLACEHOLDER}` exactly once (found {count})",
                n + 1
            )));
        }
        if seen.insert(line.to_owned()) {
            out.push(line.to_owned());
        }
    }
    if out.is_empty() {
        return Err(Error::Format("template file holds no templates".into()));
    }
    Ok(out)
}

pub fn template_rotation(template: &str, index: usize, dim: usize) -> Vec<Givens> {
    if index == 0 || dim < 2 {
        return Vec::new();
    }
    let mut rng = SeededRng::new(hash64(template.as_bytes())).split("template-rotation");
    (0..dim)
        .map(|_| {
            let p = rng.below(dim);
            let mut q = rng.below(dim - 1);
            if q >= p {
                q += 1;
            }
            let angle = (2.0 * rng.uniform::<f64>() - 1.0) * MAX_ANGLE;
            Givens { p, q, angle }
        })
        .collect()
}

pub fn apply_rotation<T: Scalar>(rotation: &[Givens], v: &[T]) -> Vec<T> {
    let mut out = v.to_vec();
    for g in rotation {
        let (c, s) = (T::lit(g.angle.cos()), T::lit(g.angle.sin()));
        let (xp, xq) = (out[g.p], out[g.q]);
        out[g.p] = c * xp - s * xq;
        out[g.q] = s * xp + c * xq;
    }
    out
}

pub fn build_template_set<T: Scalar>(templates: Vec<String>, base: &[Vector<T>]) -> Result<TemplateSet<T>> {
    let dim = base.first().map(|a| a.dim()).ok_or_else(|| Error::Shape("no class anchors".into()))?;
    let per_template = templates
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let rot = template_rotation(t, i, dim);
            base.iter()
                .map(|a| {
                    if rot.is_empty() {
                        Ok(a.clone())
                    } else {
                        Vector::new(math::l2_normalize(&apply_rotation(&rot, a))?)
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let n = T::from_usize_lossy(templates.len());
    let anchors = (0..base.len())
        .map(|k| {
            if templates.len() == 1 {
                return Ok(per_template[0][k].clone());
            }
            let mut mean = vec![T::zero(); dim];
            for table in &per_template {
                math::axpy(T::one(), &table[k], &mut mean);
            }
            mean.iter_mut().for_each(|m| *m /= n);
            Vector::new(math::l2_normalize(&mean)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TemplateSet {
        templates,
        per_template,
        anchors,
    })
}

pub fn ingest_templates<T: Scalar>(path: &Path, provider: &FrozenProvider<T>) -> Result<TemplateSet<T>> {
    let text = std::fs::read_to_string(path)?;
    build_template_set(parse_templates(&text)?, provider.anchors())
}
