//! Command-line front end. Precedence: flags > config file > defaults.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::ablation::{run_ablation, write_ablation_csv, AblationAxis};
use crate::bridge::serve_oracle;
use crate::config::{RunConfig, SystemModels};
use crate::error::{Error, Result};
use crate::eval::{
    attack_from_templates, build_report, emit_distributions, emit_roc, run_attack_simulation,
    write_distributions_csv, write_roc_csv, AttackReport, AttackSetup, ScoreSet,
};
use crate::ga::{run_inversion_multi, FitnessTrace, Termination};
use crate::models::{
    normalized_similarity, DistanceMetric, FeatureVector, OracleKind, OracleSpec, Pipeline,
};
use crate::world::{generate_world, SyntheticWorld, TemplateStore, COMPROMISED_SAMPLE};

#[derive(Debug, Parser)]
#[command(
    name = "latinv",
    version,
    about = "Latent-space template inversion and attack evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seeds both the GA and the synthetic world.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Launch the compromised system's models as a bridge server.
    #[arg(long = "bridge-cmd")]
    pub bridge_cmd: Option<String>,
    /// Seconds to wait for each bridge reply.
    #[arg(long = "bridge-timeout")]
    pub bridge_timeout: Option<u64>,
    #[arg(long)]
    pub metric: Option<DistanceMetric>,
    /// Comma-separated FAR targets in [0,1].
    #[arg(long, value_delimiter = ',')]
    pub far: Option<Vec<f64>>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long = "max-generations")]
    pub max_generations: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconstruct a latent for one template.
    Invert {
        #[command(flatten)]
        common: CommonArgs,
        /// JSON array of numbers, or a JSON-lines template file.
        #[arg(long, conflicts_with = "vector")]
        template: Option<PathBuf>,
        /// Inline comma-separated template.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        vector: Option<Vec<f64>>,
        /// User to pick from a JSON-lines template file (default: first).
        #[arg(long)]
        user: Option<String>,
    },
    /// Full attack simulation; writes report.json, roc.csv, distributions.csv.
    Attack {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep one GA parameter and report mean/stddev of the final feature MSE.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        axis: AblationAxis,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// ROC and score histograms from a category,score CSV.
    Roc {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        scores: PathBuf,
    },
    /// Serve an in-process oracle over the bridge protocol on stdin/stdout.
    #[command(hide = true)]
    ServeOracle {
        #[arg(long, default_value = "orthonormal")]
        kind: String,
        #[arg(long)]
        latent_dim: usize,
        #[arg(long)]
        image_dim: Option<usize>,
        #[arg(long)]
        feature_dim: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

pub fn resolve_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.ga.rng_seed = seed;
        cfg.world.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(cmd) = &common.bridge_cmd {
        cfg.sys_c.kind = crate::config::ModelKind::Bridge;
        cfg.sys_c.command = Some(cmd.clone());
    }
    if let Some(secs) = common.bridge_timeout {
        cfg.sys_c.timeout_secs = Some(secs);
    }
    if let Some(m) = common.metric {
        cfg.ga.distance_metric = m;
    }
    if let Some(far) = &common.far {
        cfg.far = far.clone();
    }
    if let Some(r) = common.restarts {
        cfg.ga.restarts = r;
    }
    if let Some(t) = common.population {
        cfg.ga.population_size = t;
    }
    if let Some(g) = common.max_generations {
        cfg.ga.max_generations = g;
    }
    cfg.normalize()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Invert {
            common,
            template,
            vector,
            user,
        } => {
            let cfg = resolve_config(&common)?;
            let target = match (template, vector) {
                (Some(path), _) => read_template(&path, user.as_deref())?,
                (None, Some(v)) => FeatureVector::try_new(v)?,
                (None, None) => {
                    return Err(Error::InvalidConfig("give --template or --vector".into()))
                }
            };
            let summary = cmd_invert(&cfg, &target)?;
            println!(
                "{}",
                serde_json::to_string(&summary).map_err(|e| Error::Parse(e.to_string()))?
            );
            Ok(())
        }
        Command::Attack { common } => {
            let cfg = resolve_config(&common)?;
            let report = cmd_attack(&cfg)?;
            for p in &report.operating_points {
                println!(
                    "far={} threshold={:.4} tar={:.4} sar_type1={:.4} sar_type2={:.4}",
                    p.far_target, p.threshold, p.tar, p.sar_type1, p.sar_type2
                );
            }
            Ok(())
        }
        Command::Ablate {
            common,
            axis,
            values,
            repeats,
        } => {
            let mut cfg = resolve_config(&common)?;
            if let Some(r) = repeats {
                cfg.ablation.repeats = r;
            }
            let values = values.unwrap_or_else(|| axis.default_values());
            let path = cmd_ablate(&cfg, axis, &values)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Roc { common, scores } => {
            let cfg = resolve_config(&common)?;
            cmd_roc(&cfg, &scores)?;
            Ok(())
        }
        Command::ServeOracle {
            kind,
            latent_dim,
            image_dim,
            feature_dim,
            seed,
        } => {
            let kind = match kind.as_str() {
                "orthonormal" => OracleKind::Orthonormal,
                "nonlinear" => OracleKind::Nonlinear,
                other => return Err(Error::InvalidConfig(format!("unknown oracle kind {other}"))),
            };
            let spec = OracleSpec::new(kind, latent_dim, feature_dim.unwrap_or(latent_dim), seed)
                .with_image_dim(image_dim.unwrap_or(latent_dim));
            let stdin = std::io::stdin();
            serve_oracle(&spec, stdin.lock(), std::io::stdout().lock())
        }
    }
}

/// Accepts a bare JSON array, or a JSON-lines template file from which the
/// compromised sample of `user` (default: the first user) is taken.
pub fn read_template(path: &Path, user: Option<&str>) -> Result<FeatureVector> {
    let text = fs::read_to_string(path)?;
    if let Ok(values) = serde_json::from_str::<Vec<f64>>(&text) {
        if values.is_empty() {
            return Err(Error::Parse("template is empty".into()));
        }
        return FeatureVector::try_new(values);
    }
    let store = TemplateStore::read_jsonl(text.as_bytes()).map_err(|e| {
        Error::Parse(format!(
            "{}: not a template array or template file ({e})",
            path.display()
        ))
    })?;
    let entry = match user {
        Some(id) => store
            .get(id)
            .ok_or_else(|| Error::Parse(format!("user {id} not in {}", path.display())))?,
        None => store
            .users
            .first()
            .ok_or_else(|| Error::Parse(format!("{} holds no templates", path.display())))?,
    };
    Ok(entry.features[COMPROMISED_SAMPLE].clone())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents)?;
    Ok(())
}

fn write_trace_csv(trace: &FitnessTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(crate::eval::csv_err)?;
    w.write_record(["generation", "best_fitness", "mean_fitness"])
        .map_err(crate::eval::csv_err)?;
    for (g, (b, m)) in trace
        .best_fitness_per_generation
        .iter()
        .zip(&trace.mean_fitness_per_generation)
        .enumerate()
    {
        w.write_record([g.to_string(), b.to_string(), m.to_string()])
            .map_err(crate::eval::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct InvertSummary {
    pub config_digest: String,
    pub model: String,
    pub metric: DistanceMetric,
    pub restarts: usize,
    pub best_restart: usize,
    pub final_fitness: f64,
    pub similarity: f64,
    pub generations: Vec<usize>,
    pub terminated_by: Vec<Termination>,
    pub trace_files: Vec<String>,
    pub reconstructed_feature: FeatureVector,
}

fn latent_dim_for(cfg: &RunConfig) -> usize {
    cfg.world.latent_dim
}

pub fn cmd_invert(cfg: &RunConfig, target: &FeatureVector) -> Result<InvertSummary> {
    let models = cfg.sys_c.build(latent_dim_for(cfg))?;
    let pipeline = Pipeline::new(models.generator.as_ref(), models.extractor.as_ref());
    if target.len() != pipeline.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: pipeline.feature_dim(),
            got: target.len(),
        });
    }
    let multi = run_inversion_multi(target, &pipeline, &cfg.ga)?;
    let best = multi.best();
    let feature = pipeline
        .features(std::slice::from_ref(&best.best.latent))?
        .remove(0);
    let similarity = normalized_similarity(feature.as_slice(), target.as_slice())?;

    fs::create_dir_all(&cfg.out)?;
    write(
        &cfg.out.join("best_latent.json"),
        serde_json::to_string(&best.best.latent).map_err(|e| Error::Parse(e.to_string()))?,
    )?;
    write_trace_csv(&best.trace, &cfg.out.join("trace.csv"))?;
    let mut trace_files = vec!["trace.csv".to_string()];
    if multi.runs.len() > 1 {
        for (k, run) in multi.runs.iter().enumerate() {
            let name = format!("trace_restart{k}.csv");
            write_trace_csv(&run.trace, &cfg.out.join(&name))?;
            trace_files.push(name);
        }
    }

    let summary = InvertSummary {
        config_digest: cfg.digest(),
        model: models.description.clone(),
        metric: cfg.ga.distance_metric,
        restarts: multi.runs.len(),
        best_restart: multi.best_run,
        final_fitness: best.best_fitness(),
        similarity,
        generations: multi.runs.iter().map(|r| r.trace.generations()).collect(),
        terminated_by: multi.runs.iter().map(|r| r.trace.terminated_by).collect(),
        trace_files,
        reconstructed_feature: feature,
    };
    write(
        &cfg.out.join("summary.json"),
        serde_json::to_string_pretty(&summary).map_err(|e| Error::Parse(e.to_string()))? + "\n",
    )?;
    Ok(summary)
}

fn write_score_outputs(cfg: &RunConfig, report: &AttackReport, scores: &ScoreSet) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    write(&cfg.out.join("report.json"), report.to_json()? + "\n")?;
    scores.write_csv(fs::File::create(cfg.out.join("scores.csv"))?)?;
    let roc = emit_roc(scores, cfg.eval.roc_points)?;
    write_roc_csv(&roc, fs::File::create(cfg.out.join("roc.csv"))?)?;
    let hist = emit_distributions(scores, cfg.eval.histogram_bins)?;
    write_distributions_csv(&hist, fs::File::create(cfg.out.join("distributions.csv"))?)?;
    Ok(())
}

pub fn cmd_attack(cfg: &RunConfig) -> Result<AttackReport> {
    let sys_c: SystemModels = cfg.sys_c.build(latent_dim_for(cfg))?;
    let latent_dim = sys_c.generator.latent_dim();
    let sys_t = match &cfg.sys_t {
        Some(t) => Some(t.build(latent_dim)?),
        None => None,
    };
    let target_extractor = sys_t
        .as_ref()
        .map(|t| t.extractor.as_ref())
        .unwrap_or(sys_c.extractor.as_ref());
    let setup = AttackSetup {
        attacker: Pipeline::new(sys_c.generator.as_ref(), sys_c.extractor.as_ref()),
        target_extractor,
        ga: cfg.ga.clone(),
        far_targets: cfg.far.clone(),
        max_imposter_pairs: cfg.eval.max_imposter_pairs,
    };

    let (mut report, scores, dataset) = match &cfg.templates {
        Some(files) => {
            let read = |p: &Path| -> Result<TemplateStore> {
                TemplateStore::read_jsonl(BufReader::new(fs::File::open(p)?))
            };
            let compromised = read(&files.compromised)?;
            let bona_fide = read(&files.bona_fide)?;
            let (r, s) = attack_from_templates(&compromised, &bona_fide, &setup)?;
            (r, s, format!("templates:{}", files.compromised.display()))
        }
        None => {
            let world = match &cfg.world.file {
                Some(p) => SyntheticWorld::from_json(&fs::read_to_string(p)?)?,
                None => generate_world(
                    cfg.world.users,
                    cfg.world.samples_per_user,
                    cfg.world.latent_dim,
                    cfg.world.sigma,
                    cfg.world.seed,
                )?,
            };
            if world.latent_dim != latent_dim {
                return Err(Error::DimensionMismatch {
                    expected: latent_dim,
                    got: world.latent_dim,
                });
            }
            let (r, s) = run_attack_simulation(&world, &setup)?;
            fs::create_dir_all(&cfg.out)?;
            write(&cfg.out.join("world.json"), world.to_json()? + "\n")?;
            let dataset = format!(
                "synthetic(users={},samples={},L={},sigma={},seed={})",
                world.users.len(),
                world.users.first().map_or(0, |u| u.samples.len()),
                world.latent_dim,
                world.intra_class_sigma,
                world.seed
            );
            (r, s, dataset)
        }
    };
    report.metadata.dataset = dataset;
    report.metadata.compromised_extractor = sys_c.description.clone();
    report.metadata.target_extractor = sys_t
        .as_ref()
        .map_or_else(|| sys_c.description.clone(), |t| t.description.clone());
    report.metadata.config_digest = cfg.digest();
    write_score_outputs(cfg, &report, &scores)?;
    Ok(report)
}

pub fn cmd_ablate(cfg: &RunConfig, axis: AblationAxis, values: &[f64]) -> Result<PathBuf> {
    let models = cfg.sys_c.build(latent_dim_for(cfg))?;
    let pipeline = Pipeline::new(models.generator.as_ref(), models.extractor.as_ref());
    let points = run_ablation(&pipeline, &cfg.ga, axis, values, cfg.ablation.repeats)?;
    fs::create_dir_all(&cfg.out)?;
    let name = format!(
        "ablation_{}.csv",
        serde_json::to_value(axis).unwrap().as_str().unwrap()
    );
    let path = cfg.out.join(name);
    write_ablation_csv(&points, fs::File::create(&path)?)?;
    Ok(path)
}

pub fn cmd_roc(cfg: &RunConfig, scores_path: &Path) -> Result<AttackReport> {
    let scores = ScoreSet::read_csv(fs::File::open(scores_path)?)?;
    scores.validate()?;
    let mut report = build_report(&scores, &cfg.far)?;
    report.metadata.dataset = format!("scores:{}", scores_path.display());
    report.metadata.config_digest = cfg.digest();
    write_score_outputs(cfg, &report, &scores)?;
    Ok(report)
}
