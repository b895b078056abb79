//! Sensitivity sweeps over the three GA knobs.
//!
//! Every sweep value is run against the same set of targets (one per
//! repeat), so differences between sweep points are paired.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::csv_err;
use crate::ga::{run_inversion, GaConfig};
use crate::models::{FeatureVector, LatentVector, Pipeline};

const TARGET_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AblationAxis {
    Population,
    Crossover,
    Mutation,
}

impl AblationAxis {
    /// Sweep grid used when none is given.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            AblationAxis::Population => vec![16.0, 32.0, 64.0, 128.0, 256.0],
            AblationAxis::Crossover => vec![0.1, 0.2, 0.3, 0.4],
            AblationAxis::Mutation => vec![0.1, 0.2, 0.3, 0.4, 0.5],
        }
    }

    pub fn apply(self, base: &GaConfig, value: f64) -> Result<GaConfig> {
        let mut cfg = base.clone();
        match self {
            AblationAxis::Population => {
                if value.fract() != 0.0 || value < 2.0 {
                    return Err(Error::InvalidConfig(format!("population size {value}")));
                }
                cfg.population_size = value as usize;
            }
            AblationAxis::Crossover => cfg.selection_rate = value,
            AblationAxis::Mutation => cfg.mutation_ratio = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub value: f64,
    pub mean: f64,
    pub stddev: f64,
    pub runs: usize,
    #[serde(skip)]
    pub errors: Vec<f64>,
}

/// Mean squared error between two feature vectors.
pub fn feature_mse(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64)
}

/// Target for repeat `r`: features of a fresh standard-normal latent.
pub fn ablation_targets(
    pipeline: &Pipeline<'_>,
    seed: u64,
    repeats: usize,
) -> Result<Vec<FeatureVector>> {
    let latents: Vec<LatentVector> = (0..repeats)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
            rng.set_stream(TARGET_STREAM);
            LatentVector::new(
                (0..pipeline.latent_dim())
                    .map(|_| rng.sample(StandardNormal))
                    .collect(),
            )
        })
        .collect();
    pipeline.features(&latents)
}

/// Runs `repeats` single inversions per sweep value and reports the mean and
/// sample standard deviation of the final feature MSE.
pub fn run_ablation(
    pipeline: &Pipeline<'_>,
    base: &GaConfig,
    axis: AblationAxis,
    values: &[f64],
    repeats: usize,
) -> Result<Vec<AblationPoint>> {
    if repeats < 2 {
        return Err(Error::InvalidConfig(
            "ablation needs at least 2 repeats".into(),
        ));
    }
    let configs = values
        .iter()
        .map(|&v| axis.apply(base, v))
        .collect::<Result<Vec<_>>>()?;
    let targets = ablation_targets(pipeline, base.rng_seed, repeats)?;

    configs
        .iter()
        .zip(values)
        .map(|(cfg, &value)| {
            let errors = (0..repeats)
                .into_par_iter()
                .map(|r| {
                    let run_cfg = GaConfig {
                        rng_seed: base.rng_seed.wrapping_add(r as u64),
                        restarts: 1,
                        ..cfg.clone()
                    };
                    let inv = run_inversion(&targets[r], pipeline, &run_cfg)?;
                    let found = pipeline.features(std::slice::from_ref(&inv.best.latent))?;
                    feature_mse(&found[0], &targets[r])
                })
                .collect::<Result<Vec<_>>>()?;
            let (mean, stddev) = mean_stddev(&errors);
            Ok(AblationPoint {
                value,
                mean,
                stddev,
                runs: repeats,
                errors,
            })
        })
        .collect()
}

pub fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Root of the mean per-point variance (equal run counts per point).
pub fn pooled_stddev(points: &[AblationPoint]) -> f64 {
    let var = points.iter().map(|p| p.stddev * p.stddev).sum::<f64>() / points.len() as f64;
    var.sqrt()
}

pub fn write_ablation_csv<W: Write>(points: &[AblationPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ablation_csv<R: Read>(input: R) -> Result<Vec<AblationPoint>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(csv_err))
        .collect()
}
