use crate::error::{Error, Result};
use crate::math::{Matrix, Vector};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Frozen image embeddings, class anchors, and the fixed map from prompt
/// context space into embedding space. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenProvider<T> {
    embeddings: Vec<Vector<T>>,
    anchors: Vec<Vector<T>>,
    /// `dim x context_dim`
    mixer: Matrix<T>,
}

fn check_rows<T: Scalar>(rows: &[Vector<T>], dim: usize, what: &str) -> Result<()> {
    for (i, row) in rows.iter().enumerate() {
        if row.dim() != dim {
            return Err(Error::Shape(format!(
                "{what} row {i} has dimension {}, expected {dim}",
                row.dim()
            )));
        }
        if !row.is_normalized() {
            return Err(Error::Domain(format!(
                "{what} row {i} is not L2-normalized (norm {})",
                row.norm()
            )));
        }
    }
    Ok(())
}

impl<T: Scalar> FrozenProvider<T> {
    pub fn new(embeddings: Vec<Vector<T>>, anchors: Vec<Vector<T>>, mixer: Matrix<T>) -> Result<Self> {
        if embeddings.is_empty() {
            return Err(Error::Shape("provider needs at least one embedding".into()));
        }
        if anchors.is_empty() {
            return Err(Error::Shape("provider needs at least one class anchor".into()));
        }
        let dim = anchors[0].dim();
        check_rows(&embeddings, dim, "embedding")?;
        check_rows(&anchors, dim, "class anchor")?;
        if mixer.rows() != dim {
            return Err(Error::Shape(format!(
                "mixer maps into dimension {}, embeddings have {dim}",
                mixer.rows()
            )));
        }
        Ok(Self {
            embeddings,
            anchors,
            mixer,
        })
    }

    /// Builds a provider with a Gaussian mixer `N(0, 1/context_dim)` drawn from `mixer_seed`.
    pub fn with_random_mixer(
        embeddings: Vec<Vector<T>>,
        anchors: Vec<Vector<T>>,
        context_dim: usize,
        mixer_seed: u64,
    ) -> Result<Self> {
        let dim = anchors.first().map(|a| a.dim()).unwrap_or(0);
        let mixer = random_mixer(dim, context_dim, mixer_seed);
        Self::new(embeddings, anchors, mixer)
    }

    pub fn num_samples(&self) -> usize {
        self.embeddings.len()
    }

    pub fn num_classes(&self) -> usize {
        self.anchors.len()
    }

    pub fn dim(&self) -> usize {
        self.anchors[0].dim()
    }

    pub fn context_dim(&self) -> usize {
        self.mixer.cols()
    }

    pub fn embedding(&self, sample_id: usize) -> Result<&Vector<T>> {
        self.embeddings
            .get(sample_id)
            .ok_or_else(|| Error::Lookup(format!("unknown sample id {sample_id}")))
    }

    pub fn embeddings(&self) -> &[Vector<T>] {
        &self.embeddings
    }

    pub fn anchor(&self, class_id: usize) -> Result<&Vector<T>> {
        self.anchors.get(class_id).ok_or(Error::Index {
            what: "class anchors",
            index: class_id,
            len: self.anchors.len(),
        })
    }

    pub fn anchors(&self) -> &[Vector<T>] {
        &self.anchors
    }

    pub fn mixer(&self) -> &Matrix<T> {
        &self.mixer
    }

    pub fn sample_ids(&self) -> Vec<usize> {
        (0..self.embeddings.len()).collect()
    }
}

pub fn random_mixer<T: Scalar>(dim: usize, context_dim: usize, seed: u64) -> Matrix<T> {
    let mut rng = SeededRng::new(seed).split("frozen-mixer");
    let std = 1.0 / (context_dim as f64).sqrt();
    Matrix::new(dim, context_dim, rng.normal_vec(dim * context_dim, std)).expect("sized")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(xs: &[f64]) -> Vector<f64> {
        Vector::from_f64(xs).unwrap()
    }

    #[test]
    fn rejects_unnormalized_rows() {
        let err = FrozenProvider::new(
            vec![unit(&[2.0, 0.0])],
            vec![unit(&[1.0, 0.0])],
            Matrix::identity(2),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn rejects_mixed_dimensions() {
        let err = FrozenProvider::new(
            vec![unit(&[1.0, 0.0, 0.0])],
            vec![unit(&[1.0, 0.0])],
            Matrix::identity(2),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn lookups_are_checked() {
        let p = FrozenProvider::new(
            vec![unit(&[1.0, 0.0])],
            vec![unit(&[1.0, 0.0]), unit(&[0.0, 1.0])],
            Matrix::identity(2),
        )
        .unwrap();
        assert!(matches!(p.embedding(1), Err(Error::Lookup(_))));
        assert!(matches!(p.anchor(2), Err(Error::Index { .. })));
        assert_eq!(p.num_classes(), 2);
    }

    #[test]
    fn random_mixer_is_seeded() {
        let a: Matrix<f64> = random_mixer(4, 3, 11);
        let b: Matrix<f64> = random_mixer(4, 3, 11);
        let c: Matrix<f64> = random_mixer(4, 3, 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
