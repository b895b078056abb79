//! Impersonation attack: invert compromised templates from the compromised
//! system, then score the reconstructions inside the targeted system.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_report, AttackReport, ScoreSet};
use crate::error::{Error, Result};
use crate::ga::{run_inversion_multi, GaConfig, Termination};
use crate::models::{normalized_similarity, Extractor, FeatureVector, LatentVector, Pipeline};
use crate::world::{enroll, SyntheticWorld, TemplateStore, COMPROMISED_SAMPLE, TYPE2_SAMPLE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserSummary {
    pub user_id: String,
    pub best_fitness: f64,
    pub best_restart: usize,
    pub generations: Vec<usize>,
    pub terminated_by: Vec<Termination>,
    pub score_type1: f64,
    pub score_type2: f64,
}

/// The best latent found for one user's compromised template.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub user_id: String,
    pub latent: LatentVector,
    pub fitness: f64,
    pub best_restart: usize,
    pub generations: Vec<usize>,
    pub terminated_by: Vec<Termination>,
}

pub struct AttackSetup<'a> {
    /// Compromised system: the attacker's generator plus black-box access
    /// to its extractor.
    pub attacker: Pipeline<'a>,
    /// Targeted system's extractor, applied to the same image space.
    pub target_extractor: &'a dyn Extractor,
    pub ga: GaConfig,
    pub far_targets: Vec<f64>,
    /// Cap on cross-user bona fide pairs feeding FAR calibration.
    pub max_imposter_pairs: usize,
}

/// Inverts sample 0 of every user. User `u` uses GA seeds starting at
/// `ga.rng_seed + u * ga.restarts`, so no two inversions share a stream.
pub fn invert_templates(
    compromised: &TemplateStore,
    attacker: &Pipeline<'_>,
    ga: &GaConfig,
) -> Result<Vec<Reconstruction>> {
    ga.validate()?;
    compromised
        .users
        .par_iter()
        .enumerate()
        .map(|(u, user)| {
            let target = user
                .features
                .get(COMPROMISED_SAMPLE)
                .ok_or_else(|| Error::InsufficientSamples(user.user_id.clone()))?;
            let cfg = GaConfig {
                rng_seed: ga
                    .rng_seed
                    .wrapping_add((u as u64).wrapping_mul(ga.restarts as u64)),
                ..ga.clone()
            };
            let multi = run_inversion_multi(target, attacker, &cfg)?;
            let best = multi.best();
            Ok(Reconstruction {
                user_id: user.user_id.clone(),
                latent: best.best.latent.clone(),
                fitness: best.best_fitness(),
                best_restart: multi.best_run,
                generations: multi.runs.iter().map(|r| r.trace.generations()).collect(),
                terminated_by: multi.runs.iter().map(|r| r.trace.terminated_by).collect(),
            })
        })
        .collect()
}

fn similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    normalized_similarity(a.as_slice(), b.as_slice())
}

/// Builds genuine, imposter and mated-attack scores in the targeted system.
///
/// Genuine: every same-user pair of bona fide samples. Imposter: every
/// cross-user pair, thinned by a fixed stride to at most
/// `max_imposter_pairs`. Mated: the reconstruction against sample 0
/// (type-I) and sample 1 (type-II) of its owner.
pub fn score_attack(
    reconstructions: &[Reconstruction],
    bona_fide: &TemplateStore,
    attacker: &Pipeline<'_>,
    target_extractor: &dyn Extractor,
    max_imposter_pairs: usize,
) -> Result<(ScoreSet, Vec<UserSummary>)> {
    let mut scores = ScoreSet::default();

    for user in &bona_fide.users {
        let f = &user.features;
        for i in 0..f.len() {
            for j in i + 1..f.len() {
                scores.genuine.push(similarity(&f[i], &f[j])?);
            }
        }
    }

    let flat: Vec<(usize, &FeatureVector)> = bona_fide
        .users
        .iter()
        .enumerate()
        .flat_map(|(u, user)| user.features.iter().map(move |v| (u, v)))
        .collect();
    let total_pairs: usize = {
        let sizes: Vec<usize> = bona_fide.users.iter().map(|u| u.features.len()).collect();
        let n: usize = sizes.iter().sum();
        (n * n - sizes.iter().map(|s| s * s).sum::<usize>()) / 2
    };
    let stride = total_pairs.div_ceil(max_imposter_pairs.max(1)).max(1);
    let mut k = 0usize;
    for a in 0..flat.len() {
        for b in a + 1..flat.len() {
            if flat[a].0 == flat[b].0 {
                continue;
            }
            if k.is_multiple_of(stride) {
                scores.imposter.push(similarity(flat[a].1, flat[b].1)?);
            }
            k += 1;
        }
    }

    let in_target = Pipeline::new(attacker.generator, target_extractor);
    let latents: Vec<LatentVector> = reconstructions.iter().map(|r| r.latent.clone()).collect();
    let recon_features = in_target.features(&latents)?;

    let mut users = Vec::with_capacity(reconstructions.len());
    for (r, v) in reconstructions.iter().zip(&recon_features) {
        let enrolled = bona_fide.get(&r.user_id).ok_or_else(|| {
            Error::InvalidConfig(format!("user {} missing from target system", r.user_id))
        })?;
        if enrolled.features.len() <= TYPE2_SAMPLE {
            return Err(Error::InsufficientSamples(r.user_id.clone()));
        }
        let s1 = similarity(v, &enrolled.features[COMPROMISED_SAMPLE])?;
        let s2 = similarity(v, &enrolled.features[TYPE2_SAMPLE])?;
        scores.mated_type1.push(s1);
        scores.mated_type2.push(s2);
        users.push(UserSummary {
            user_id: r.user_id.clone(),
            best_fitness: r.fitness,
            best_restart: r.best_restart,
            generations: r.generations.clone(),
            terminated_by: r.terminated_by.clone(),
            score_type1: s1,
            score_type2: s2,
        });
    }
    Ok((scores, users))
}

/// End-to-end simulation on a synthetic world: enroll in both systems,
/// invert every compromised template, score in the targeted system.
pub fn run_attack_simulation(
    world: &SyntheticWorld,
    setup: &AttackSetup<'_>,
) -> Result<(AttackReport, ScoreSet)> {
    if world.users.iter().any(|u| u.samples.len() <= TYPE2_SAMPLE) {
        let u = world
            .users
            .iter()
            .find(|u| u.samples.len() <= TYPE2_SAMPLE)
            .unwrap();
        return Err(Error::InsufficientSamples(u.user_id.clone()));
    }
    let compromised = enroll(world, &setup.attacker)?;
    let bona_fide = enroll(
        world,
        &Pipeline::new(setup.attacker.generator, setup.target_extractor),
    )?;
    attack_from_templates(&compromised, &bona_fide, setup)
}

/// Same as [`run_attack_simulation`] but on already-enrolled templates,
/// e.g. real templates imported from JSON-lines files.
pub fn attack_from_templates(
    compromised: &TemplateStore,
    bona_fide: &TemplateStore,
    setup: &AttackSetup<'_>,
) -> Result<(AttackReport, ScoreSet)> {
    let recons = invert_templates(compromised, &setup.attacker, &setup.ga)?;
    let (scores, users) = score_attack(
        &recons,
        bona_fide,
        &setup.attacker,
        setup.target_extractor,
        setup.max_imposter_pairs,
    )?;
    let mut report = build_report(&scores, &setup.far_targets)?;
    report.metadata.users = users;
    Ok((report, scores))
}
