//! Genetic search over the generator's latent space.
//!
//! Each generation evaluates the unevaluated members through the black-box
//! pipeline, keeps the best `ceil(s·t)` members unchanged as parents, and
//! refills the population with children made by single-point crossover of
//! two distinct parents followed by per-entry Gaussian mutation. Because
//! parents survive untouched, the best fitness never increases.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{DistanceMetric, FeatureVector, LatentVector, Pipeline};

pub type GaRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> GaRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    pub selection_rate: f64,
    pub mutation_ratio: f64,
    pub max_generations: usize,
    /// Consecutive generations without a strict improvement before stopping.
    pub patience: usize,
    pub restarts: usize,
    pub rng_seed: u64,
    pub distance_metric: DistanceMetric,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 256,
            selection_rate: 0.3,
            mutation_ratio: 0.3,
            max_generations: 1000,
            patience: 20,
            restarts: 3,
            rng_seed: 0,
            distance_metric: DistanceMetric::Cosine,
        }
    }
}

impl GaConfig {
    /// Defaults with the selection and mutation ratios that performed best
    /// in the ablation sweeps (0.2 and 0.1).
    pub fn tuned() -> Self {
        Self {
            selection_rate: 0.2,
            mutation_ratio: 0.1,
            ..Self::default()
        }
    }

    /// `ceil(s·t)`, ignoring floating-point noise around integers.
    pub fn parent_count(&self) -> usize {
        ceil_tolerant(self.selection_rate * self.population_size as f64)
    }

    pub fn child_count(&self) -> usize {
        self.population_size.saturating_sub(self.parent_count())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.population_size < 2 {
            return bad(format!("population_size {} < 2", self.population_size));
        }
        if !(self.selection_rate > 0.0 && self.selection_rate < 1.0) {
            return bad(format!(
                "selection_rate {} outside (0,1)",
                self.selection_rate
            ));
        }
        if self.parent_count() < 2 {
            return bad(format!(
                "selection_rate {} keeps fewer than two parents of {}",
                self.selection_rate, self.population_size
            ));
        }
        if !(0.0..=1.0).contains(&self.mutation_ratio) {
            return bad(format!(
                "mutation_ratio {} outside [0,1]",
                self.mutation_ratio
            ));
        }
        if self.max_generations == 0 || self.patience == 0 || self.restarts == 0 {
            return bad("max_generations, patience and restarts must be positive".into());
        }
        Ok(())
    }
}

fn ceil_tolerant(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub latent: LatentVector,
    pub fitness: Option<f64>,
}

impl Individual {
    pub fn new(latent: LatentVector) -> Self {
        Self {
            latent,
            fitness: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub members: Vec<Individual>,
    pub generation_index: usize,
}

impl Population {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn fitnesses(&self) -> Result<Vec<f64>> {
        self.members
            .iter()
            .map(|m| m.fitness.ok_or(Error::UnevaluatedPopulation))
            .collect()
    }

    /// Index of the fittest member; ties go to the lower index.
    pub fn best_index(&self) -> Result<usize> {
        let f = self.fitnesses()?;
        let mut best = 0;
        for i in 1..f.len() {
            if f[i] < f[best] {
                best = i;
            }
        }
        Ok(best)
    }

    pub fn best_fitness(&self) -> Result<f64> {
        let i = self.best_index()?;
        Ok(self.members[i].fitness.unwrap())
    }

    pub fn mean_fitness(&self) -> Result<f64> {
        let f = self.fitnesses()?;
        Ok(f.iter().sum::<f64>() / f.len() as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Patience,
    MaxGenerations,
}

/// Per-generation record of a run. Index 0 is the initial population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessTrace {
    pub best_fitness_per_generation: Vec<f64>,
    pub mean_fitness_per_generation: Vec<f64>,
    pub terminated_by: Termination,
}

impl FitnessTrace {
    /// Number of `step_generation` calls made.
    pub fn generations(&self) -> usize {
        self.best_fitness_per_generation.len() - 1
    }

    pub fn final_fitness(&self) -> f64 {
        *self.best_fitness_per_generation.last().unwrap()
    }
}

pub fn init_population(size: usize, latent_dim: usize, rng: &mut impl Rng) -> Result<Population> {
    if size < 2 || latent_dim < 1 {
        return Err(Error::InvalidConfig(format!(
            "population of {size} latents of length {latent_dim}"
        )));
    }
    let members = (0..size)
        .map(|_| {
            let z = (0..latent_dim)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            Individual::new(LatentVector::new(z))
        })
        .collect();
    Ok(Population {
        members,
        generation_index: 0,
    })
}

/// Fills in the fitness of every unevaluated member with one batched pass
/// through the pipeline. Members that already carry a fitness are skipped.
pub fn evaluate_fitness(
    pop: &mut Population,
    pipeline: &Pipeline<'_>,
    target: &FeatureVector,
    metric: DistanceMetric,
) -> Result<()> {
    if target.len() != pipeline.feature_dim() {
        return Err(Error::model(
            None,
            format!(
                "target has dimension {} but the extractor produces {}",
                target.len(),
                pipeline.feature_dim()
            ),
        ));
    }
    let pending: Vec<usize> = pop
        .members
        .iter()
        .enumerate()
        .filter(|(_, m)| m.fitness.is_none())
        .map(|(i, _)| i)
        .collect();
    if pending.is_empty() {
        return Ok(());
    }
    let latents: Vec<LatentVector> = pending
        .iter()
        .map(|&i| pop.members[i].latent.clone())
        .collect();
    let features = pipeline
        .features(&latents)
        .map_err(|e| remap_index(e, &pending))?;
    for (k, (&i, v)) in pending.iter().zip(&features).enumerate() {
        let d = metric
            .distance(v.as_slice(), target.as_slice())
            .map_err(|e| match e {
                Error::ZeroVector => {
                    Error::model(Some(pending[k]), "extractor returned a zero vector")
                }
                other => other,
            })?;
        pop.members[i].fitness = Some(d);
    }
    Ok(())
}

// Batch indices refer to the pending subset; report population indices.
fn remap_index(e: Error, pending: &[usize]) -> Error {
    match e {
        Error::ModelFailure {
            index: Some(i),
            message,
        } => Error::ModelFailure {
            index: pending.get(i).copied().or(Some(i)),
            message,
        },
        other => other,
    }
}

/// Indices of the `ceil(s·t)` fittest members, best first; ties broken by
/// lower member index.
pub fn select_parents(pop: &Population, selection_rate: f64) -> Result<Vec<usize>> {
    let f = pop.fitnesses()?;
    let count = ceil_tolerant(selection_rate * pop.len() as f64).min(pop.len());
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| f[a].total_cmp(&f[b]).then(a.cmp(&b)));
    order.truncate(count);
    Ok(order)
}

/// Single-point crossover at `cut`: `a[..cut] ++ b[cut..]`.
pub fn crossover_at(a: &LatentVector, b: &LatentVector, cut: usize) -> Result<LatentVector> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let cut = cut.min(a.len());
    let mut child = Vec::with_capacity(a.len());
    child.extend_from_slice(&a.as_slice()[..cut]);
    child.extend_from_slice(&b.as_slice()[cut..]);
    Ok(LatentVector::new(child))
}

/// Single-point crossover with the cut drawn uniformly from `1..L`.
/// A length-1 latent has no interior cut and copies `a`.
pub fn crossover(a: &LatentVector, b: &LatentVector, rng: &mut impl Rng) -> Result<LatentVector> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let cut = if a.len() < 2 {
        a.len()
    } else {
        rng.random_range(1..a.len())
    };
    crossover_at(a, b, cut)
}

/// Adds one standard-normal draw to each entry with probability `ratio`.
pub fn mutate(child: LatentVector, ratio: f64, rng: &mut impl Rng) -> LatentVector {
    let mut values = child.into_inner();
    for v in values.iter_mut() {
        if rng.random::<f64>() < ratio {
            *v += rng.sample::<f64, _>(StandardNormal);
        }
    }
    LatentVector::new(values)
}

/// Advances one generation: parents carried over, children bred and
/// evaluated.
pub fn step_generation(
    pop: &Population,
    config: &GaConfig,
    pipeline: &Pipeline<'_>,
    target: &FeatureVector,
    rng: &mut impl Rng,
) -> Result<Population> {
    let mut current = pop.clone();
    evaluate_fitness(&mut current, pipeline, target, config.distance_metric)?;

    let parents = select_parents(&current, config.selection_rate)?;
    if parents.len() < 2 {
        return Err(Error::InvalidConfig(
            "crossover needs at least two parents".into(),
        ));
    }
    let children = current.len() - parents.len();

    let mut members: Vec<Individual> = parents
        .iter()
        .map(|&i| current.members[i].clone())
        .collect();
    for _ in 0..children {
        let pair = index::sample(rng, parents.len(), 2);
        let (a, b) = (
            &members[pair.index(0)].latent,
            &members[pair.index(1)].latent,
        );
        let child = crossover(a, b, rng)?;
        members.push(Individual::new(mutate(child, config.mutation_ratio, rng)));
    }

    let mut next = Population {
        members,
        generation_index: current.generation_index + 1,
    };
    evaluate_fitness(&mut next, pipeline, target, config.distance_metric)?;
    Ok(next)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inversion {
    pub best: Individual,
    pub trace: FitnessTrace,
    pub seed: u64,
}

impl Inversion {
    pub fn best_fitness(&self) -> f64 {
        self.best.fitness.unwrap_or(f64::INFINITY)
    }
}

/// Runs the search until the best fitness stalls for `patience` generations
/// or `max_generations` generations have been stepped.
pub fn run_inversion(
    target: &FeatureVector,
    pipeline: &Pipeline<'_>,
    config: &GaConfig,
) -> Result<Inversion> {
    config.validate()?;
    let mut rng = rng_from_seed(config.rng_seed);
    let mut pop = init_population(config.population_size, pipeline.latent_dim(), &mut rng)?;
    evaluate_fitness(&mut pop, pipeline, target, config.distance_metric)?;

    let mut best = pop.best_fitness()?;
    let mut bests = vec![best];
    let mut means = vec![pop.mean_fitness()?];
    let mut stalled = 0;
    let terminated_by = loop {
        pop = step_generation(&pop, config, pipeline, target, &mut rng)?;
        let gen_best = pop.best_fitness()?;
        bests.push(gen_best);
        means.push(pop.mean_fitness()?);
        if gen_best < best {
            best = gen_best;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if stalled >= config.patience {
            break Termination::Patience;
        }
        if pop.generation_index >= config.max_generations {
            break Termination::MaxGenerations;
        }
    };

    let winner = pop.best_index()?;
    Ok(Inversion {
        best: pop.members.swap_remove(winner),
        trace: FitnessTrace {
            best_fitness_per_generation: bests,
            mean_fitness_per_generation: means,
            terminated_by,
        },
        seed: config.rng_seed,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiInversion {
    pub runs: Vec<Inversion>,
    /// Index into `runs` of the returned candidate.
    pub best_run: usize,
}

impl MultiInversion {
    pub fn best(&self) -> &Inversion {
        &self.runs[self.best_run]
    }
}

/// `restarts` independent inversions seeded `seed, seed+1, ...`, run in
/// parallel; the candidate with the smallest final fitness wins (earliest
/// restart on ties).
pub fn run_inversion_multi(
    target: &FeatureVector,
    pipeline: &Pipeline<'_>,
    config: &GaConfig,
) -> Result<MultiInversion> {
    config.validate()?;
    let runs = (0..config.restarts)
        .into_par_iter()
        .map(|k| {
            let cfg = GaConfig {
                rng_seed: config.rng_seed.wrapping_add(k as u64),
                ..config.clone()
            };
            run_inversion(target, pipeline, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let best_run = argmin_restart(runs.iter().map(Inversion::best_fitness));
    Ok(MultiInversion { runs, best_run })
}

pub(crate) fn argmin_restart(finals: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, f) in finals.into_iter().enumerate() {
        if f < best.1 {
            best = (i, f);
        }
    }
    best.0
}
