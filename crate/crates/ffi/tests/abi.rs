use std::ffi::CStr;
use std::process::Command;
use std::ptr;

use latinv_ffi::*;

fn last_error() -> String {
    let p = latinv_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn oracle(latent: usize, features: usize, seed: u64) -> *mut LatinvOracle {
    let mut h = ptr::null_mut();
    let st = unsafe {
        latinv_oracle_new(
            LatinvOracleKind::Orthonormal,
            latent,
            0,
            features,
            seed,
            &mut h,
        )
    };
    assert_eq!(st, LatinvStatus::Ok);
    h
}

#[test]
fn default_config_matches_library() {
    let c = latinv_ga_config_default();
    let d = latinv::ga::GaConfig::default();
    assert_eq!(c.population_size, d.population_size);
    assert_eq!(c.selection_rate, 0.3);
    assert_eq!(c.mutation_ratio, 0.3);
    assert_eq!(c.max_generations, 1000);
    assert_eq!(c.patience, 20);
    assert_eq!(c.metric, LatinvMetric::Cosine);
}

#[test]
fn inversion_through_the_abi_finds_the_target() {
    let h = oracle(8, 8, 4);
    unsafe {
        assert_eq!(latinv_oracle_latent_dim(h), 8);
        assert_eq!(latinv_oracle_feature_dim(h), 8);
        let z = [0.3, -1.2, 0.5, 0.9, -0.1, 1.4, -0.7, 0.2];
        let mut target = [0.0; 8];
        assert_eq!(
            latinv_oracle_features(h, z.as_ptr(), 8, target.as_mut_ptr(), 8),
            LatinvStatus::Ok
        );

        let cfg = LatinvGaConfig {
            population_size: 64,
            mutation_ratio: 0.1,
            rng_seed: 3,
            ..latinv_ga_config_default()
        };
        let mut latent = [0.0; 8];
        let mut res = LatinvInversion::default();
        let st = latinv_invert(
            h,
            target.as_ptr(),
            8,
            &cfg,
            latent.as_mut_ptr(),
            8,
            &mut res,
        );
        assert_eq!(st, LatinvStatus::Ok);
        assert!(res.fitness < 0.05, "fitness {}", res.fitness);
        assert!(res.best_restart < 3);

        let mut found = [0.0; 8];
        latinv_oracle_features(h, latent.as_ptr(), 8, found.as_mut_ptr(), 8);
        let mut sim = 0.0;
        assert_eq!(
            latinv_normalized_similarity(found.as_ptr(), target.as_ptr(), 8, &mut sim),
            LatinvStatus::Ok
        );
        assert!((sim - (1.0 - res.fitness / 2.0)).abs() < 1e-12);
        latinv_oracle_free(h);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let h = oracle(4, 4, 0);
    unsafe {
        let mut out = [0.0; 4];
        let z = [1.0; 3];
        assert_eq!(
            latinv_oracle_features(h, z.as_ptr(), 3, out.as_mut_ptr(), 4),
            LatinvStatus::DimensionMismatch
        );
        assert!(last_error().contains('3'), "{}", last_error());

        let z = [1.0; 4];
        assert_eq!(
            latinv_oracle_features(h, z.as_ptr(), 4, out.as_mut_ptr(), 2),
            LatinvStatus::BufferTooSmall
        );
        assert_eq!(
            latinv_oracle_features(ptr::null(), z.as_ptr(), 4, out.as_mut_ptr(), 4),
            LatinvStatus::NullPointer
        );
        let cfg = latinv_ga_config_default();
        let t = [1.0, 0.0];
        assert_eq!(
            latinv_invert(h, t.as_ptr(), 2, &cfg, out.as_mut_ptr(), 4, ptr::null_mut()),
            LatinvStatus::DimensionMismatch
        );
        let bad = LatinvGaConfig {
            selection_rate: 1.5,
            ..cfg
        };
        let t = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(
            latinv_invert(h, t.as_ptr(), 4, &bad, out.as_mut_ptr(), 4, ptr::null_mut()),
            LatinvStatus::InvalidArgument
        );

        let mut bad_oracle = ptr::null_mut();
        assert_eq!(
            latinv_oracle_new(LatinvOracleKind::Nonlinear, 4, 0, 9, 0, &mut bad_oracle),
            LatinvStatus::InvalidArgument
        );
        assert!(bad_oracle.is_null());

        let mut v = 0.0;
        assert_eq!(
            latinv_rate_above(ptr::null(), 0, 0.5, &mut v),
            LatinvStatus::EmptyScores
        );
        let zero = [0.0, 0.0];
        assert_eq!(
            latinv_normalized_similarity(zero.as_ptr(), zero.as_ptr(), 2, &mut v),
            LatinvStatus::InvalidArgument
        );
        latinv_oracle_free(h);
        latinv_oracle_free(ptr::null_mut());
    }
}

#[test]
fn metrics_and_reports() {
    let imposter = [0.1, 0.2, 0.2, 0.4, 0.5];
    let genuine = [0.6, 0.45, 0.9];
    let t1 = [0.7, 0.3];
    let t2 = [0.5, 0.1];
    let fars = [0.2, 0.0];
    unsafe {
        let mut v = 0.0;
        assert_eq!(
            latinv_threshold_at_far(imposter.as_ptr(), 5, 0.2, &mut v),
            LatinvStatus::Ok
        );
        assert_eq!(v, 0.4);
        assert_eq!(
            latinv_rate_above(imposter.as_ptr(), 5, 0.2, &mut v),
            LatinvStatus::Ok
        );
        assert_eq!(v, 0.4);
        assert_eq!(
            latinv_threshold_at_far(imposter.as_ptr(), 5, 1.5, &mut v),
            LatinvStatus::InvalidArgument
        );

        let mut r = ptr::null_mut();
        let st = latinv_report_new(
            genuine.as_ptr(),
            3,
            imposter.as_ptr(),
            5,
            t1.as_ptr(),
            2,
            t2.as_ptr(),
            2,
            fars.as_ptr(),
            2,
            &mut r,
        );
        assert_eq!(st, LatinvStatus::Ok);
        assert_eq!(latinv_report_len(r), 2);
        let mut p = LatinvOperatingPoint::default();
        assert_eq!(latinv_report_point(r, 0, &mut p), LatinvStatus::Ok);
        assert_eq!(
            p,
            LatinvOperatingPoint {
                far_target: 0.0,
                threshold: 0.5,
                far: 0.0,
                tar: 2.0 / 3.0,
                sar_type1: 0.5,
                sar_type2: 0.0
            }
        );
        assert_eq!(latinv_report_point(r, 1, &mut p), LatinvStatus::Ok);
        assert_eq!(
            (p.far_target, p.threshold, p.far, p.tar),
            (0.2, 0.4, 0.2, 1.0)
        );
        assert_eq!(
            latinv_report_point(r, 2, &mut p),
            LatinvStatus::InvalidArgument
        );
        latinv_report_free(r);
        assert_eq!(latinv_report_len(ptr::null()), 0);
    }
}

#[test]
fn last_error_is_per_thread() {
    let mut v = 0.0;
    unsafe { latinv_rate_above(ptr::null(), 0, 0.0, &mut v) };
    let here = last_error();
    let other = std::thread::spawn(|| latinv_last_error().is_null())
        .join()
        .unwrap();
    assert!(other);
    assert!(here.contains("empty"), "{here}");
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/latinv.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in [
        "latinv_last_error",
        "latinv_ga_config_default",
        "latinv_oracle_new",
        "latinv_oracle_features",
        "latinv_invert",
        "latinv_threshold_at_far",
        "latinv_rate_above",
        "latinv_report_new",
        "latinv_report_point",
        "latinv_report_free",
        "LATINV_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .output()
    else {
        eprintln!("no C compiler; syntax check skipped");
        return;
    };
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
