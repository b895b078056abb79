//! Generator / extractor abstractions and the distances used to compare
//! their outputs.
//!
//! The inversion engine treats both models as black boxes: it only ever
//! calls [`Generator::generate`] and [`Extractor::extract`] on whole
//! batches. [`Pipeline`] composes the two and checks every output against
//! the shapes the models declared, so a misbehaving backend surfaces as a
//! [`Error::ModelFailure`] naming the batch index instead of poisoning a run.

mod oracle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use oracle::{
    make_nonlinear_oracle, make_orthonormal_oracle, DenseMatrix, OracleExtractor, OracleGenerator,
    OracleKind, OracleSpec, OracleStream,
};

/// Tolerance on the unit norm of a normalized extractor's outputs.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

macro_rules! real_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(Vec<f64>);

        impl $name {
            pub fn new(values: Vec<f64>) -> Self {
                Self(values)
            }

            /// Like [`Self::new`] but rejects NaN and infinite entries.
            pub fn try_new(values: Vec<f64>) -> Result<Self> {
                match values.iter().position(|v| !v.is_finite()) {
                    Some(i) => Err(Error::Parse(format!(
                        "{} entry {i} is not finite",
                        stringify!($name)
                    ))),
                    None => Ok(Self(values)),
                }
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(values: Vec<f64>) -> Self {
                Self(values)
            }
        }

        impl std::ops::Index<usize> for $name {
            type Output = f64;

            fn index(&self, i: usize) -> &f64 {
                &self.0[i]
            }
        }
    };
}

real_vector!(
    /// A point in the generator's input space, the decision variable of the search.
    LatentVector
);
real_vector!(
    /// Flattened (row-major) generator output. Opaque to everything but the extractor.
    ImageTensor
);
real_vector!(
    /// A deep template: the extractor's output for one image.
    FeatureVector
);

pub trait Generator: Send + Sync {
    fn latent_dim(&self) -> usize;

    fn image_shape(&self) -> &[usize];

    fn generate(&self, latents: &[LatentVector]) -> Result<Vec<ImageTensor>>;

    fn image_len(&self) -> usize {
        self.image_shape().iter().product()
    }
}

pub trait Extractor: Send + Sync {
    fn feature_dim(&self) -> usize;

    /// Whether every output has unit Euclidean norm.
    fn normalized(&self) -> bool;

    fn extract(&self, images: &[ImageTensor]) -> Result<Vec<FeatureVector>>;
}

impl<T: Generator + ?Sized> Generator for &T {
    fn latent_dim(&self) -> usize {
        (**self).latent_dim()
    }
    fn image_shape(&self) -> &[usize] {
        (**self).image_shape()
    }
    fn generate(&self, latents: &[LatentVector]) -> Result<Vec<ImageTensor>> {
        (**self).generate(latents)
    }
}

impl<T: Extractor + ?Sized> Extractor for &T {
    fn feature_dim(&self) -> usize {
        (**self).feature_dim()
    }
    fn normalized(&self) -> bool {
        (**self).normalized()
    }
    fn extract(&self, images: &[ImageTensor]) -> Result<Vec<FeatureVector>> {
        (**self).extract(images)
    }
}

impl<T: Generator + ?Sized> Generator for std::sync::Arc<T> {
    fn latent_dim(&self) -> usize {
        (**self).latent_dim()
    }
    fn image_shape(&self) -> &[usize] {
        (**self).image_shape()
    }
    fn generate(&self, latents: &[LatentVector]) -> Result<Vec<ImageTensor>> {
        (**self).generate(latents)
    }
}

impl<T: Extractor + ?Sized> Extractor for std::sync::Arc<T> {
    fn feature_dim(&self) -> usize {
        (**self).feature_dim()
    }
    fn normalized(&self) -> bool {
        (**self).normalized()
    }
    fn extract(&self, images: &[ImageTensor]) -> Result<Vec<FeatureVector>> {
        (**self).extract(images)
    }
}

/// `extract ∘ generate` with output validation.
#[derive(Clone, Copy)]
pub struct Pipeline<'a> {
    pub generator: &'a dyn Generator,
    pub extractor: &'a dyn Extractor,
}

impl<'a> Pipeline<'a> {
    pub fn new(generator: &'a dyn Generator, extractor: &'a dyn Extractor) -> Self {
        Self {
            generator,
            extractor,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.generator.latent_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.extractor.feature_dim()
    }

    pub fn generate(&self, latents: &[LatentVector]) -> Result<Vec<ImageTensor>> {
        let dim = self.generator.latent_dim();
        if let Some(bad) = latents.iter().find(|z| z.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        let images = self.generator.generate(latents)?;
        check_batch(
            "generator",
            latents.len(),
            &images,
            self.generator.image_len(),
            |x| x.as_slice(),
        )?;
        Ok(images)
    }

    pub fn extract(&self, images: &[ImageTensor]) -> Result<Vec<FeatureVector>> {
        let features = self.extractor.extract(images)?;
        check_batch(
            "extractor",
            images.len(),
            &features,
            self.extractor.feature_dim(),
            |v| v.as_slice(),
        )?;
        if self.extractor.normalized() {
            for (i, v) in features.iter().enumerate() {
                let norm = l2_norm(v.as_slice());
                if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                    return Err(Error::model(
                        Some(i),
                        format!("normalized extractor returned norm {norm}"),
                    ));
                }
            }
        }
        Ok(features)
    }

    /// One generate call and one extract call over the whole batch.
    pub fn features(&self, latents: &[LatentVector]) -> Result<Vec<FeatureVector>> {
        if latents.is_empty() {
            return Ok(Vec::new());
        }
        let images = self.generate(latents)?;
        self.extract(&images)
    }
}

fn check_batch<T>(
    who: &str,
    expected_count: usize,
    items: &[T],
    expected_len: usize,
    values: impl Fn(&T) -> &[f64],
) -> Result<()> {
    if items.len() != expected_count {
        return Err(Error::model(
            None,
            format!(
                "{who} returned {} items for a batch of {expected_count}",
                items.len()
            ),
        ));
    }
    for (i, item) in items.iter().enumerate() {
        let v = values(item);
        if v.len() != expected_len {
            return Err(Error::model(
                Some(i),
                format!(
                    "{who} returned length {} (expected {expected_len})",
                    v.len()
                ),
            ));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::model(
                Some(i),
                format!("{who} returned non-finite values"),
            ));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    #[serde(alias = "cosine_distance")]
    Cosine,
    Euclidean,
}

impl DistanceMetric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            DistanceMetric::Cosine => cosine_distance(a, b),
            DistanceMetric::Euclidean => euclidean_distance(a, b),
        }
    }
}

impl std::str::FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" | "cosine_distance" | "cosine-distance" => Ok(DistanceMetric::Cosine),
            "euclidean" => Ok(DistanceMetric::Euclidean),
            other => Err(Error::InvalidConfig(format!("unknown metric {other:?}"))),
        }
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

pub(crate) fn l2_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `1 - cos(a, b)`, clamped to `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((1.0 - dot / (na * nb)).clamp(0.0, 2.0))
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Similarity score in `[0, 1]`: `(1 + cos) / 2`, computed as
/// `1 - cosine_distance / 2` so the two stay in exact correspondence.
///
/// Thresholds reported on this scale do not transfer to deployments that
/// normalize scores differently.
pub fn normalized_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(1.0 - cosine_distance(a, b)? / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_distance_reference_points() {
        assert_eq!(cosine_distance(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 2.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn cosine_distance_errors() {
        assert!(matches!(
            cosine_distance(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(
            cosine_distance(&[1.0], &[1.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn euclidean_reference_points() {
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(euclidean_distance(&[2.5, -1.0], &[2.5, -1.0]).unwrap(), 0.0);
        assert!(euclidean_distance(&[1.0], &[]).is_err());
    }

    #[test]
    fn similarity_reference_points() {
        assert_eq!(
            normalized_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(),
            1.0
        );
        assert_eq!(
            normalized_similarity(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(),
            0.0
        );
        assert_eq!(
            normalized_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            0.5
        );
    }

    #[test]
    fn metric_parses() {
        assert_eq!(
            "cosine".parse::<DistanceMetric>().unwrap(),
            DistanceMetric::Cosine
        );
        assert_eq!(
            "euclidean".parse::<DistanceMetric>().unwrap(),
            DistanceMetric::Euclidean
        );
        assert!("manhattan".parse::<DistanceMetric>().is_err());
    }

    fn pair(len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(-10.0..10.0f64, len),
            prop::collection::vec(-10.0..10.0f64, len),
        )
    }

    proptest! {
        #[test]
        fn euclidean_matches_naive_loop((a, b) in (1usize..40).prop_flat_map(pair)) {
            let mut acc = 0.0;
            for i in 0..a.len() {
                let d = a[i] - b[i];
                acc += d * d;
            }
            prop_assert_eq!(euclidean_distance(&a, &b).unwrap(), acc.sqrt());
        }

        #[test]
        fn distances_are_symmetric((a, b) in (1usize..40).prop_flat_map(pair)) {
            prop_assume!(l2_norm(&a) > 0.0 && l2_norm(&b) > 0.0);
            prop_assert_eq!(euclidean_distance(&a, &b).unwrap(), euclidean_distance(&b, &a).unwrap());
            prop_assert_eq!(cosine_distance(&a, &b).unwrap(), cosine_distance(&b, &a).unwrap());
            prop_assert_eq!(euclidean_distance(&a, &a).unwrap(), 0.0);
            prop_assert!(cosine_distance(&a, &a).unwrap() < 1e-12);
        }

        #[test]
        fn similarity_is_affine_in_distance((a, b) in (1usize..40).prop_flat_map(pair)) {
            prop_assume!(l2_norm(&a) > 0.0 && l2_norm(&b) > 0.0);
            let d = cosine_distance(&a, &b).unwrap();
            let s = normalized_similarity(&a, &b).unwrap();
            prop_assert_eq!(s, 1.0 - d / 2.0);
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }
}
