//! Self-contained synthetic generator/extractor pairs.
//!
//! The construction is fully specified here so an out-of-process server in
//! any language can reproduce it bit-for-bit (up to floating-point
//! summation order):
//!
//! 1. Stream: SplitMix64 with initial state `seed`.
//! 2. Uniform: `u = ((x >> 11) + 0.5) * 2^-53`, strictly inside (0, 1).
//! 3. Gaussian: two uniforms per draw, `sqrt(-2 ln u1) * cos(2π u2)`.
//! 4. `Q1` (`image_dim × latent_dim`): fill row-major with Gaussians, then
//!    modified Gram-Schmidt over its columns (orthonormal columns).
//! 5. `Q2` (`feature_dim × image_dim`): continue the same stream, fill
//!    row-major, then modified Gram-Schmidt over its rows.
//! 6. Generator: `x = Q1 z` (orthonormal kind) or `x = tanh(Q1 z)`
//!    (nonlinear kind). Extractor: `v = Q2 x / ‖Q2 x‖`.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use super::{Extractor, FeatureVector, Generator, ImageTensor, LatentVector};
use crate::error::{Error, Result};

/// The oracle's pseudo-random stream.
pub struct OracleStream(SplitMix64);

impl OracleStream {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::from_seed(seed.to_le_bytes()))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn gaussian(rows: usize, cols: usize, stream: &mut OracleStream) -> Self {
        let data = (0..rows * cols).map(|_| stream.next_gaussian()).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = DenseMatrix {
            rows: self.rows,
            cols: other.cols,
            data: vec![0.0; self.rows * other.cols],
        };
        for r in 0..self.rows {
            for c in 0..other.cols {
                let v = (0..self.cols)
                    .map(|k| self.get(r, k) * other.get(k, c))
                    .sum();
                out.set(r, c, v);
            }
        }
        out
    }

    /// Modified Gram-Schmidt over the rows, in order.
    fn orthonormalize_rows(&mut self) -> Result<()> {
        for i in 0..self.rows {
            for j in 0..i {
                let dot: f64 = (0..self.cols)
                    .map(|c| self.get(i, c) * self.get(j, c))
                    .sum();
                for c in 0..self.cols {
                    let v = self.get(i, c) - dot * self.get(j, c);
                    self.set(i, c, v);
                }
            }
            let norm = super::l2_norm(self.row(i));
            if norm < 1e-12 {
                return Err(Error::InvalidConfig("degenerate oracle matrix".into()));
            }
            for c in 0..self.cols {
                let v = self.get(i, c) / norm;
                self.set(i, c, v);
            }
        }
        Ok(())
    }

    /// Modified Gram-Schmidt over the columns, in order.
    fn orthonormalize_columns(&mut self) -> Result<()> {
        let mut t = self.transpose();
        t.orthonormalize_rows()?;
        *self = t.transpose();
        Ok(())
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix {
            rows: self.cols,
            cols: self.rows,
            data: vec![0.0; self.data.len()],
        };
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    Orthonormal,
    Nonlinear,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OracleSpec {
    pub kind: OracleKind,
    pub latent_dim: usize,
    pub image_dim: usize,
    pub feature_dim: usize,
    pub seed: u64,
}

impl OracleSpec {
    pub fn new(kind: OracleKind, latent_dim: usize, feature_dim: usize, seed: u64) -> Self {
        Self {
            kind,
            latent_dim,
            image_dim: latent_dim,
            feature_dim,
            seed,
        }
    }

    pub fn with_image_dim(mut self, image_dim: usize) -> Self {
        self.image_dim = image_dim;
        self
    }

    pub fn build(&self) -> Result<(OracleGenerator, OracleExtractor)> {
        let (l, p, d) = (self.latent_dim, self.image_dim, self.feature_dim);
        if l == 0 || d == 0 {
            return Err(Error::InvalidConfig(
                "oracle dimensions must be positive".into(),
            ));
        }
        if d > l {
            return Err(Error::InvalidConfig(format!(
                "oracle feature_dim {d} exceeds latent_dim {l}"
            )));
        }
        if p < l {
            return Err(Error::InvalidConfig(format!(
                "oracle image_dim {p} is smaller than latent_dim {l}"
            )));
        }
        let mut stream = OracleStream::new(self.seed);
        let mut q1 = DenseMatrix::gaussian(p, l, &mut stream);
        q1.orthonormalize_columns()?;
        let mut q2 = DenseMatrix::gaussian(d, p, &mut stream);
        q2.orthonormalize_rows()?;
        Ok((
            OracleGenerator {
                map: q1,
                shape: vec![p],
                squash: self.kind == OracleKind::Nonlinear,
            },
            OracleExtractor { map: q2 },
        ))
    }
}

pub fn make_orthonormal_oracle(
    latent_dim: usize,
    feature_dim: usize,
    seed: u64,
) -> Result<(OracleGenerator, OracleExtractor)> {
    OracleSpec::new(OracleKind::Orthonormal, latent_dim, feature_dim, seed).build()
}

pub fn make_nonlinear_oracle(
    latent_dim: usize,
    feature_dim: usize,
    seed: u64,
) -> Result<(OracleGenerator, OracleExtractor)> {
    OracleSpec::new(OracleKind::Nonlinear, latent_dim, feature_dim, seed).build()
}

#[derive(Clone, Debug)]
pub struct OracleGenerator {
    map: DenseMatrix,
    shape: Vec<usize>,
    squash: bool,
}

impl OracleGenerator {
    pub fn map(&self) -> &DenseMatrix {
        &self.map
    }

    pub fn render(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.map.matvec(z);
        if self.squash {
            x.iter_mut().for_each(|v| *v = v.tanh());
        }
        x
    }
}

impl Generator for OracleGenerator {
    fn latent_dim(&self) -> usize {
        self.map.cols()
    }

    fn image_shape(&self) -> &[usize] {
        &self.shape
    }

    fn generate(&self, latents: &[LatentVector]) -> Result<Vec<ImageTensor>> {
        latents
            .iter()
            .map(|z| {
                if z.len() != self.map.cols() {
                    return Err(Error::DimensionMismatch {
                        expected: self.map.cols(),
                        got: z.len(),
                    });
                }
                Ok(ImageTensor::new(self.render(z.as_slice())))
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct OracleExtractor {
    map: DenseMatrix,
}

impl OracleExtractor {
    pub fn map(&self) -> &DenseMatrix {
        &self.map
    }
}

impl Extractor for OracleExtractor {
    fn feature_dim(&self) -> usize {
        self.map.rows()
    }

    fn normalized(&self) -> bool {
        true
    }

    fn extract(&self, images: &[ImageTensor]) -> Result<Vec<FeatureVector>> {
        images
            .iter()
            .enumerate()
            .map(|(i, x)| {
                if x.len() != self.map.cols() {
                    return Err(Error::DimensionMismatch {
                        expected: self.map.cols(),
                        got: x.len(),
                    });
                }
                let mut v = self.map.matvec(x.as_slice());
                let norm = super::l2_norm(&v);
                if norm == 0.0 {
                    return Err(Error::model(Some(i), "projection of image is zero"));
                }
                v.iter_mut().for_each(|e| *e /= norm);
                Ok(FeatureVector::new(v))
            })
            .collect()
    }
}
