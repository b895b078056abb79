#![allow(dead_code)]

use std::sync::atomic::{AtomicU64, Ordering};

use latinv::models::{Extractor, FeatureVector, Generator, ImageTensor, LatentVector};
use latinv::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Image = latent.
pub struct IdentityGenerator {
    shape: Vec<usize>,
}

impl IdentityGenerator {
    pub fn new(latent_dim: usize) -> Self {
        Self {
            shape: vec![latent_dim],
        }
    }
}

impl Generator for IdentityGenerator {
    fn latent_dim(&self) -> usize {
        self.shape[0]
    }
    fn image_shape(&self) -> &[usize] {
        &self.shape
    }
    fn generate(&self, latents: &[LatentVector]) -> Result<Vec<ImageTensor>> {
        Ok(latents
            .iter()
            .map(|z| ImageTensor::new(z.as_slice().to_vec()))
            .collect())
    }
}

/// Ignores its input: every fitness is the same.
pub struct ConstantExtractor;

impl Extractor for ConstantExtractor {
    fn feature_dim(&self) -> usize {
        2
    }
    fn normalized(&self) -> bool {
        true
    }
    fn extract(&self, images: &[ImageTensor]) -> Result<Vec<FeatureVector>> {
        Ok(images
            .iter()
            .map(|_| FeatureVector::new(vec![1.0, 0.0]))
            .collect())
    }
}

/// Call `k` returns `[1/(k+1)]` for the whole batch, so every newly
/// evaluated generation beats all earlier ones under the euclidean metric
/// against target `[0]`.
#[derive(Default)]
pub struct CountingExtractor {
    calls: AtomicU64,
}

impl Extractor for CountingExtractor {
    fn feature_dim(&self) -> usize {
        1
    }
    fn normalized(&self) -> bool {
        false
    }
    fn extract(&self, images: &[ImageTensor]) -> Result<Vec<FeatureVector>> {
        let k = self.calls.fetch_add(1, Ordering::SeqCst);
        let v = 1.0 / (k as f64 + 1.0);
        Ok(images.iter().map(|_| FeatureVector::new(vec![v])).collect())
    }
}

pub fn random_latent(seed: u64, dim: usize) -> LatentVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    LatentVector::new((0..dim).map(|_| rng.sample(StandardNormal)).collect())
}

pub fn naive_rate(scores: &[f64], threshold: f64) -> f64 {
    let mut above = 0usize;
    for &s in scores {
        if s > threshold {
            above += 1;
        }
    }
    above as f64 / scores.len() as f64
}

/// Smallest imposter value whose false-accept rate meets `far`, by trying
/// every candidate.
pub fn naive_threshold(imposter: &[f64], far: f64) -> f64 {
    let mut best = f64::INFINITY;
    for &tau in imposter {
        if naive_rate(imposter, tau) <= far && tau < best {
            best = tau;
        }
    }
    best
}
