//! C ABI over `latinv`.
//!
//! Every fallible function returns a [`LatinvStatus`]. On failure the
//! message is kept per thread and can be read with [`latinv_last_error`].
//! Handles are opaque; each `*_new` has a matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use latinv::eval::{build_report, rate_above, threshold_at_far, AttackReport, ScoreSet};
use latinv::ga::{run_inversion_multi, GaConfig};
use latinv::models::{
    normalized_similarity, DistanceMetric, FeatureVector, LatentVector, OracleExtractor,
    OracleGenerator, OracleKind, OracleSpec, Pipeline,
};
use latinv::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatinvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    ModelFailure = 4,
    EmptyScores = 5,
    BufferTooSmall = 6,
    Internal = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatinvMetric {
    Cosine = 0,
    Euclidean = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatinvOracleKind {
    Orthonormal = 0,
    Nonlinear = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatinvGaConfig {
    pub population_size: usize,
    pub selection_rate: f64,
    pub mutation_ratio: f64,
    pub max_generations: usize,
    pub patience: usize,
    pub restarts: usize,
    pub rng_seed: u64,
    pub metric: LatinvMetric,
}

impl From<&LatinvGaConfig> for GaConfig {
    fn from(c: &LatinvGaConfig) -> Self {
        GaConfig {
            population_size: c.population_size,
            selection_rate: c.selection_rate,
            mutation_ratio: c.mutation_ratio,
            max_generations: c.max_generations,
            patience: c.patience,
            restarts: c.restarts,
            rng_seed: c.rng_seed,
            distance_metric: match c.metric {
                LatinvMetric::Cosine => DistanceMetric::Cosine,
                LatinvMetric::Euclidean => DistanceMetric::Euclidean,
            },
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LatinvOperatingPoint {
    pub far_target: f64,
    pub threshold: f64,
    pub far: f64,
    pub tar: f64,
    pub sar_type1: f64,
    pub sar_type2: f64,
}

/// Outcome of [`latinv_invert`].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LatinvInversion {
    pub fitness: f64,
    pub best_restart: usize,
    /// Generations stepped by the winning restart.
    pub generations: usize,
}

/// Analytic generator/extractor pair.
pub struct LatinvOracle {
    generator: OracleGenerator,
    extractor: OracleExtractor,
}

pub struct LatinvReport {
    report: AttackReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> LatinvStatus {
    match err {
        Error::InvalidConfig(_) | Error::ZeroVector | Error::Parse(_) => {
            LatinvStatus::InvalidArgument
        }
        Error::DimensionMismatch { .. } | Error::LengthMismatch(..) => {
            LatinvStatus::DimensionMismatch
        }
        Error::ModelFailure { .. } => LatinvStatus::ModelFailure,
        Error::EmptyScores(_) | Error::InsufficientSamples(_) => LatinvStatus::EmptyScores,
        _ => LatinvStatus::Internal,
    }
}

/// Runs `f`, recording any error or panic for `latinv_last_error`.
fn guard(f: impl FnOnce() -> Result<(), (LatinvStatus, String)>) -> LatinvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LatinvStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside latinv".into());
            LatinvStatus::Panic
        }
    }
}

fn lib<T>(r: latinv::Result<T>) -> Result<T, (LatinvStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (LatinvStatus, String) {
    (LatinvStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn input<'a>(
    p: *const f64,
    len: usize,
    what: &str,
) -> Result<&'a [f64], (LatinvStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or point to `len` writable values.
unsafe fn output<'a>(
    p: *mut f64,
    len: usize,
    need: usize,
    what: &str,
) -> Result<&'a mut [f64], (LatinvStatus, String)> {
    if len < need {
        return Err((
            LatinvStatus::BufferTooSmall,
            format!("{what} holds {len} values, {need} needed"),
        ));
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn latinv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn latinv_ga_config_default() -> LatinvGaConfig {
    let d = GaConfig::default();
    LatinvGaConfig {
        population_size: d.population_size,
        selection_rate: d.selection_rate,
        mutation_ratio: d.mutation_ratio,
        max_generations: d.max_generations,
        patience: d.patience,
        restarts: d.restarts,
        rng_seed: d.rng_seed,
        metric: LatinvMetric::Cosine,
    }
}

/// Builds an analytic oracle. `image_dim` of 0 means "same as latent".
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn latinv_oracle_new(
    kind: LatinvOracleKind,
    latent_dim: usize,
    image_dim: usize,
    feature_dim: usize,
    seed: u64,
    out: *mut *mut LatinvOracle,
) -> LatinvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kind = match kind {
            LatinvOracleKind::Orthonormal => OracleKind::Orthonormal,
            LatinvOracleKind::Nonlinear => OracleKind::Nonlinear,
        };
        let image_dim = if image_dim == 0 {
            latent_dim
        } else {
            image_dim
        };
        let (generator, extractor) = lib(OracleSpec::new(kind, latent_dim, feature_dim, seed)
            .with_image_dim(image_dim)
            .build())?;
        *out = Box::into_raw(Box::new(LatinvOracle {
            generator,
            extractor,
        }));
        Ok(())
    })
}

/// # Safety
/// `oracle` must be null or a handle from `latinv_oracle_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn latinv_oracle_free(oracle: *mut LatinvOracle) {
    if !oracle.is_null() {
        drop(Box::from_raw(oracle));
    }
}

/// # Safety
/// `oracle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn latinv_oracle_latent_dim(oracle: *const LatinvOracle) -> usize {
    oracle
        .as_ref()
        .map_or(0, |o| latinv::models::Generator::latent_dim(&o.generator))
}

/// # Safety
/// `oracle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn latinv_oracle_feature_dim(oracle: *const LatinvOracle) -> usize {
    oracle
        .as_ref()
        .map_or(0, |o| latinv::models::Extractor::feature_dim(&o.extractor))
}

/// Features of one latent: `extract(generate(latent))`.
///
/// # Safety
/// `oracle` must be a live handle; `latent` must hold `latent_len` values
/// and `out` must have room for `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn latinv_oracle_features(
    oracle: *const LatinvOracle,
    latent: *const f64,
    latent_len: usize,
    out: *mut f64,
    out_len: usize,
) -> LatinvStatus {
    guard(|| {
        let o = oracle.as_ref().ok_or_else(|| null("oracle"))?;
        let z = input(latent, latent_len, "latent")?;
        let p = Pipeline::new(&o.generator, &o.extractor);
        let dst = output(out, out_len, p.feature_dim(), "out")?;
        let f = lib(p.features(&[lib(LatentVector::try_new(z.to_vec()))?]))?;
        dst[..f[0].len()].copy_from_slice(f[0].as_slice());
        Ok(())
    })
}

/// Searches the oracle's latent space for `target`. The winning latent is
/// written to `latent_out`.
///
/// # Safety
/// `oracle` and `config` must be valid; `target` must hold `target_len`
/// values; `latent_out` must have room for `latent_len` values; `result`
/// may be null.
#[no_mangle]
pub unsafe extern "C" fn latinv_invert(
    oracle: *const LatinvOracle,
    target: *const f64,
    target_len: usize,
    config: *const LatinvGaConfig,
    latent_out: *mut f64,
    latent_len: usize,
    result: *mut LatinvInversion,
) -> LatinvStatus {
    guard(|| {
        let o = oracle.as_ref().ok_or_else(|| null("oracle"))?;
        let cfg: GaConfig = config.as_ref().ok_or_else(|| null("config"))?.into();
        let p = Pipeline::new(&o.generator, &o.extractor);
        let t = lib(FeatureVector::try_new(
            input(target, target_len, "target")?.to_vec(),
        ))?;
        if t.len() != p.feature_dim() {
            return Err((
                LatinvStatus::DimensionMismatch,
                format!(
                    "target has {} values, extractor gives {}",
                    t.len(),
                    p.feature_dim()
                ),
            ));
        }
        let dst = output(latent_out, latent_len, p.latent_dim(), "latent_out")?;
        let multi = lib(run_inversion_multi(&t, &p, &cfg))?;
        let best = multi.best();
        dst[..p.latent_dim()].copy_from_slice(best.best.latent.as_slice());
        if let Some(r) = result.as_mut() {
            *r = LatinvInversion {
                fitness: best.best_fitness(),
                best_restart: multi.best_run,
                generations: best.trace.generations(),
            };
        }
        Ok(())
    })
}

/// # Safety
/// `a` and `b` must each hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn latinv_normalized_similarity(
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut f64,
) -> LatinvStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = lib(normalized_similarity(
            input(a, len, "a")?,
            input(b, len, "b")?,
        ))?;
        Ok(())
    })
}

/// Fraction of scores strictly above `threshold`.
///
/// # Safety
/// `scores` must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn latinv_rate_above(
    scores: *const f64,
    len: usize,
    threshold: f64,
    out: *mut f64,
) -> LatinvStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = lib(rate_above(input(scores, len, "scores")?, threshold))?;
        Ok(())
    })
}

/// # Safety
/// `imposter` must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn latinv_threshold_at_far(
    imposter: *const f64,
    len: usize,
    far: f64,
    out: *mut f64,
) -> LatinvStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = lib(threshold_at_far(input(imposter, len, "imposter")?, far))?;
        Ok(())
    })
}

/// Builds operating points for each FAR target from the four score lists.
///
/// # Safety
/// Each array must hold the stated number of values; `out` must be a
/// valid pointer to writable storage for one handle.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn latinv_report_new(
    genuine: *const f64,
    genuine_len: usize,
    imposter: *const f64,
    imposter_len: usize,
    mated_type1: *const f64,
    mated_type1_len: usize,
    mated_type2: *const f64,
    mated_type2_len: usize,
    far_targets: *const f64,
    far_len: usize,
    out: *mut *mut LatinvReport,
) -> LatinvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let scores = ScoreSet {
            genuine: input(genuine, genuine_len, "genuine")?.to_vec(),
            imposter: input(imposter, imposter_len, "imposter")?.to_vec(),
            mated_type1: input(mated_type1, mated_type1_len, "mated_type1")?.to_vec(),
            mated_type2: input(mated_type2, mated_type2_len, "mated_type2")?.to_vec(),
        };
        let report = lib(build_report(
            &scores,
            input(far_targets, far_len, "far_targets")?,
        ))?;
        *out = Box::into_raw(Box::new(LatinvReport { report }));
        Ok(())
    })
}

/// Number of operating points, 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn latinv_report_len(report: *const LatinvReport) -> usize {
    report
        .as_ref()
        .map_or(0, |r| r.report.operating_points.len())
}

/// Operating point `index`, ordered by FAR target ascending.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn latinv_report_point(
    report: *const LatinvReport,
    index: usize,
    out: *mut LatinvOperatingPoint,
) -> LatinvStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let p = r.report.operating_points.get(index).ok_or_else(|| {
            (
                LatinvStatus::InvalidArgument,
                format!(
                    "index {index} out of {} points",
                    r.report.operating_points.len()
                ),
            )
        })?;
        *out = LatinvOperatingPoint {
            far_target: p.far_target,
            threshold: p.threshold,
            far: p.far,
            tar: p.tar,
            sar_type1: p.sar_type1,
            sar_type2: p.sar_type2,
        };
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle from `latinv_report_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn latinv_report_free(report: *mut LatinvReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
