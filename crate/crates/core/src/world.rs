//! Synthetic identities for desk-scale attack experiments.
//!
//! Each user owns a base latent; their captures are the base plus
//! `N(0, σ²I)` noise. Identity therefore lives in latent space and the
//! extractor decides how separable users are.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{FeatureVector, LatentVector, Pipeline};

/// Index of the enrolled sample whose template is compromised.
pub const COMPROMISED_SAMPLE: usize = 0;
/// Index of the bona fide sample used for type-II comparisons.
pub const TYPE2_SAMPLE: usize = 1;

// The world draws from its own ChaCha stream so that equal seeds never
// make a world latent coincide with a GA initial population.
const WORLD_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldUser {
    pub user_id: String,
    pub samples: Vec<LatentVector>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub users: Vec<WorldUser>,
    pub intra_class_sigma: f64,
    pub seed: u64,
    pub latent_dim: usize,
}

pub fn generate_world(
    n_users: usize,
    samples_per_user: usize,
    latent_dim: usize,
    sigma: f64,
    seed: u64,
) -> Result<SyntheticWorld> {
    if n_users < 2 || samples_per_user < 1 || latent_dim < 1 {
        return Err(Error::InvalidConfig(format!(
            "world needs >= 2 users and >= 1 sample of dimension >= 1 \
             (got {n_users} users, {samples_per_user} samples, L={latent_dim})"
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "intra-class sigma {sigma} must be >= 0"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(WORLD_STREAM);
    let noise = Normal::new(0.0, sigma).expect("sigma checked above");
    let users = (0..n_users)
        .map(|u| {
            let base: Vec<f64> = (0..latent_dim)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let samples = (0..samples_per_user)
                .map(|_| {
                    LatentVector::new(base.iter().map(|b| b + noise.sample(&mut rng)).collect())
                })
                .collect();
            WorldUser {
                user_id: format!("user{u:03}"),
                samples,
            }
        })
        .collect();
    Ok(SyntheticWorld {
        users,
        intra_class_sigma: sigma,
        seed,
        latent_dim,
    })
}

impl SyntheticWorld {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let world: SyntheticWorld =
            serde_json::from_str(s).map_err(|e| Error::Parse(format!("world: {e}")))?;
        for u in &world.users {
            if u.samples.is_empty() {
                return Err(Error::Parse(format!(
                    "world user {} has no samples",
                    u.user_id
                )));
            }
            if let Some(z) = u
                .samples
                .iter()
                .find(|z| z.len() != world.latent_dim || !z.is_finite())
            {
                return Err(Error::Parse(format!(
                    "world user {} has a bad latent of length {}",
                    u.user_id,
                    z.len()
                )));
            }
        }
        Ok(world)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserTemplates {
    pub user_id: String,
    /// Indexed by sample.
    pub features: Vec<FeatureVector>,
}

/// Per-user feature templates, in enrollment order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TemplateStore {
    pub users: Vec<UserTemplates>,
}

/// One line of the template JSON-lines format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateRecord {
    pub user_id: String,
    pub sample_index: usize,
    pub vector: FeatureVector,
}

impl TemplateStore {
    pub fn get(&self, user_id: &str) -> Option<&UserTemplates> {
        self.users.iter().find(|u| u.user_id == user_id)
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.users
            .first()
            .and_then(|u| u.features.first())
            .map(|f| f.len())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for u in &self.users {
            for (i, v) in u.features.iter().enumerate() {
                let rec = TemplateRecord {
                    user_id: u.user_id.clone(),
                    sample_index: i,
                    vector: v.clone(),
                };
                let line = serde_json::to_string(&rec).map_err(|e| Error::Parse(e.to_string()))?;
                writeln!(out, "{line}")?;
            }
        }
        Ok(())
    }

    /// Reads records in any order. Users keep first-appearance order and
    /// each user's sample indices must be exactly `0..n`.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut grouped: Vec<(String, Vec<(usize, FeatureVector)>)> = Vec::new();
        let mut dim = None;
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TemplateRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("template line {}: {e}", n + 1)))?;
            if !rec.vector.is_finite() || rec.vector.is_empty() {
                return Err(Error::Parse(format!("template line {}: bad vector", n + 1)));
            }
            match dim {
                None => dim = Some(rec.vector.len()),
                Some(d) if d != rec.vector.len() => {
                    return Err(Error::Parse(format!(
                        "template line {}: dimension {} differs from {d}",
                        n + 1,
                        rec.vector.len()
                    )))
                }
                _ => {}
            }
            match grouped.iter_mut().find(|(id, _)| *id == rec.user_id) {
                Some((_, v)) => v.push((rec.sample_index, rec.vector)),
                None => grouped.push((rec.user_id, vec![(rec.sample_index, rec.vector)])),
            }
        }
        let users = grouped
            .into_iter()
            .map(|(user_id, mut samples)| {
                samples.sort_by_key(|(i, _)| *i);
                if samples.iter().enumerate().any(|(k, (i, _))| k != *i) {
                    return Err(Error::Parse(format!(
                        "user {user_id} sample indices are not 0..{}",
                        samples.len()
                    )));
                }
                Ok(UserTemplates {
                    user_id,
                    features: samples.into_iter().map(|(_, v)| v).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TemplateStore { users })
    }
}

/// Renders and extracts every sample of every user (one batch per user).
pub fn enroll(world: &SyntheticWorld, pipeline: &Pipeline<'_>) -> Result<TemplateStore> {
    if pipeline.latent_dim() != world.latent_dim {
        return Err(Error::DimensionMismatch {
            expected: pipeline.latent_dim(),
            got: world.latent_dim,
        });
    }
    let users = world
        .users
        .iter()
        .map(|u| {
            Ok(UserTemplates {
                user_id: u.user_id.clone(),
                features: pipeline.features(&u.samples)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TemplateStore { users })
}
