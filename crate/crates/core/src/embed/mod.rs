//! Dense paragraph vectors and cosine similarity.
//!
//! Vectors come either from [`dbow::train_dbow`] / [`dbow::EmbeddingModel::infer_vector`]
//! or from a vector file (see [`io`]). They are stored unnormalized.

pub mod dbow;
pub mod io;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dbow::{train_dbow, DbowConfig, DbowTraining, EmbeddingModel};
pub use io::{load_vectors, parse_vectors, write_vectors};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParagraphRef {
    pub doc_id: String,
    pub index: usize,
}

impl ParagraphRef {
    pub fn new(doc_id: impl Into<String>, index: usize) -> Self {
        Self {
            doc_id: doc_id.into(),
            index,
        }
    }
}

impl fmt::Display for ParagraphRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.doc_id, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub paragraph_ref: ParagraphRef,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(paragraph_ref: ParagraphRef, values: Vec<f64>) -> Self {
        Self {
            paragraph_ref,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> Result<f64> {
        cosine(&self.values, &other.values)
    }
}

pub type VectorMap = BTreeMap<ParagraphRef, EmbeddingVector>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedAngle);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Copy of `v` scaled to unit length.
pub fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::UndefinedAngle);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::UndefinedAngle)
        ));
        assert!(matches!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn nonzero_vec() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, 4).prop_filter("nonzero", |v| norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn self_cosine_is_one(a in nonzero_vec()) {
            prop_assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn scale_invariant_and_symmetric(a in nonzero_vec(), b in nonzero_vec(), s in 0.01f64..100.0) {
            let scaled: Vec<f64> = a.iter().map(|x| x * s).collect();
            let c = cosine(&a, &b).unwrap();
            prop_assert!((cosine(&scaled, &b).unwrap() - c).abs() < 1e-12);
            prop_assert!((cosine(&b, &a).unwrap() - c).abs() < 1e-15);
            prop_assert!((-1.0..=1.0).contains(&c));
        }
    }
}
