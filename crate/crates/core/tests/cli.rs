use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use latinv::eval::{read_distributions_csv, read_roc_csv, AttackReport, ScoreSet};
use serde_json::Value;

fn latinv(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latinv"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn report(dir: &Path) -> AttackReport {
    AttackReport::from_json(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

const TARGET16: &str = "0.5,-0.5,0.5,0.5,0,0,0,0,0,0,0,0,0,0,0,0";

#[test]
fn invert_reconstructs_and_writes_traces() {
    let d = tempfile::tempdir().unwrap();
    let out = latinv(&["invert", "--vector", TARGET16, "--out", "o"], d.path());
    ok(&out);
    let o = d.path().join("o");
    let summary: Value =
        serde_json::from_slice(&fs::read(o.join("summary.json")).unwrap()).unwrap();
    assert!(summary["similarity"].as_f64().unwrap() >= 0.95);
    assert_eq!(summary["restarts"], 3);
    assert_eq!(summary["config_digest"].as_str().unwrap().len(), 64);
    let latent: Vec<f64> =
        serde_json::from_slice(&fs::read(o.join("best_latent.json")).unwrap()).unwrap();
    assert_eq!(latent.len(), 16);
    for name in [
        "trace.csv",
        "trace_restart0.csv",
        "trace_restart1.csv",
        "trace_restart2.csv",
    ] {
        let text = fs::read_to_string(o.join(name)).unwrap();
        assert!(
            text.starts_with("generation,best_fitness,mean_fitness\n"),
            "{name}"
        );
    }
    let stdout: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stdout["final_fitness"], summary["final_fitness"]);
}

#[test]
fn invert_reads_json_and_template_files() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("t.json"), format!("[{TARGET16}]")).unwrap();
    ok(&latinv(
        &[
            "invert",
            "--template",
            "t.json",
            "--restarts",
            "1",
            "--out",
            "a",
        ],
        d.path(),
    ));
    assert!(!d.path().join("a/trace_restart0.csv").exists());

    let mut lines = String::new();
    for (user, v) in [
        ("user000", "[1,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0]"),
        ("user001", "[0,1,0,0,0,0,0,0,0,0,0,0,0,0,0,0]"),
    ] {
        lines += &format!("{{\"user_id\":\"{user}\",\"sample_index\":0,\"vector\":{v}}}\n");
    }
    fs::write(d.path().join("t.jsonl"), lines).unwrap();
    let out = latinv(
        &[
            "invert",
            "--template",
            "t.jsonl",
            "--user",
            "user001",
            "--out",
            "b",
        ],
        d.path(),
    );
    ok(&out);
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["similarity"].as_f64().unwrap() >= 0.95);

    let out = latinv(
        &["invert", "--template", "t.jsonl", "--user", "nobody"],
        d.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_input_exits_with_code_two() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("bad.json"), "{not json").unwrap();
    let out = latinv(&["invert", "--template", "bad.json"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "parse");

    let out = latinv(&["invert", "--vector", "1,0,0"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "dimension-mismatch");

    let out = latinv(&["attack", "--far", "1.5"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "invalid-config");

    fs::write(d.path().join("c.toml"), "[ga]\npopulation = 3\n").unwrap();
    let out = latinv(&["attack", "--config", "c.toml"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "parse");

    assert_eq!(
        latinv(&["no-such-command"], d.path()).status.code(),
        Some(2)
    );
}

#[test]
fn bridge_failures_exit_with_code_three() {
    let d = tempfile::tempdir().unwrap();
    let out = latinv(
        &[
            "invert",
            "--vector",
            "1,0",
            "--bridge-cmd",
            "sleep 20",
            "--bridge-timeout",
            "1",
        ],
        d.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"]["kind"], "timeout");
}

#[test]
fn attack_outputs_are_complete_and_calibrated() {
    let d = tempfile::tempdir().unwrap();
    ok(&latinv(
        &["attack", "--out", "a", "--max-generations", "200"],
        d.path(),
    ));
    let a = d.path().join("a");
    let r = report(&a);
    assert_eq!(r.operating_points.len(), 4);
    let targets: Vec<f64> = r.operating_points.iter().map(|p| p.far_target).collect();
    assert_eq!(targets, vec![0.0, 0.001, 0.01, 0.1]);
    for p in &r.operating_points {
        assert!(p.far <= p.far_target);
    }
    assert!(r
        .operating_points
        .windows(2)
        .all(|w| w[1].threshold <= w[0].threshold));
    assert_eq!(r.metadata.users.len(), 10);
    assert_eq!(r.metadata.genuine_count, 10);
    assert_eq!(r.metadata.imposter_count, 180);
    assert_eq!(r.metadata.mated_count, 10);
    assert!(r.metadata.dataset.starts_with("synthetic(users=10"));

    let scores = ScoreSet::read_csv(fs::File::open(a.join("scores.csv")).unwrap()).unwrap();
    assert_eq!(scores.imposter.len(), 180);
    let roc = read_roc_csv(fs::File::open(a.join("roc.csv")).unwrap()).unwrap();
    assert_eq!(roc.len(), 26);
    assert!(roc.iter().all(|p| p.far <= p.far_target));
    let hist =
        read_distributions_csv(fs::File::open(a.join("distributions.csv")).unwrap()).unwrap();
    assert_eq!(hist.len(), 4 * 50);
    for chunk in hist.chunks(50) {
        let mass: f64 = chunk.iter().map(|b| b.mass).sum();
        assert!((mass - 1.0).abs() < 1e-9);
    }
    assert!(a.join("world.json").exists());

    // the roc command recomputes the same operating points from scores.csv
    ok(&latinv(
        &["roc", "--scores", "a/scores.csv", "--out", "r"],
        d.path(),
    ));
    assert_eq!(
        report(&d.path().join("r")).operating_points,
        r.operating_points
    );
    assert_eq!(
        fs::read(a.join("roc.csv")).unwrap(),
        fs::read(d.path().join("r/roc.csv")).unwrap()
    );
}

#[test]
fn attack_is_byte_identical_under_a_fixed_seed() {
    let d = tempfile::tempdir().unwrap();
    for out in ["x", "y"] {
        ok(&latinv(
            &[
                "attack",
                "--seed",
                "4",
                "--out",
                out,
                "--max-generations",
                "150",
            ],
            d.path(),
        ));
    }
    for f in [
        "report.json",
        "scores.csv",
        "roc.csv",
        "distributions.csv",
        "world.json",
    ] {
        assert_eq!(
            fs::read(d.path().join("x").join(f)).unwrap(),
            fs::read(d.path().join("y").join(f)).unwrap(),
            "{f}"
        );
    }
    ok(&latinv(
        &[
            "attack",
            "--seed",
            "5",
            "--out",
            "z",
            "--max-generations",
            "150",
        ],
        d.path(),
    ));
    assert_ne!(
        fs::read(d.path().join("x/report.json")).unwrap(),
        fs::read(d.path().join("z/report.json")).unwrap()
    );
}

#[test]
fn attack_through_the_bridge_matches_in_process() {
    let d = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_latinv");
    let cmd = format!("{bin} serve-oracle --latent-dim 16 --seed 1");
    ok(&latinv(
        &["attack", "--out", "local", "--max-generations", "120"],
        d.path(),
    ));
    ok(&latinv(
        &[
            "attack",
            "--out",
            "remote",
            "--max-generations",
            "120",
            "--bridge-cmd",
            &cmd,
        ],
        d.path(),
    ));
    let read = |n: &str| {
        ScoreSet::read_csv(fs::File::open(d.path().join(n).join("scores.csv")).unwrap()).unwrap()
    };
    let (a, b) = (read("local"), read("remote"));
    for (x, y) in [
        (&a.genuine, &b.genuine),
        (&a.imposter, &b.imposter),
        (&a.mated_type1, &b.mated_type1),
        (&a.mated_type2, &b.mated_type2),
    ] {
        assert_eq!(x.len(), y.len());
        assert!(x.iter().zip(y).all(|(p, q)| (p - q).abs() <= 1e-6));
    }
    let (ra, rb) = (
        report(&d.path().join("local")),
        report(&d.path().join("remote")),
    );
    for (p, q) in ra.operating_points.iter().zip(&rb.operating_points) {
        for (u, v) in [
            (p.threshold, q.threshold),
            (p.far, q.far),
            (p.tar, q.tar),
            (p.sar_type1, q.sar_type1),
            (p.sar_type2, q.sar_type2),
        ] {
            assert!((u - v).abs() <= 1e-6);
        }
    }
    assert!(rb.metadata.compromised_extractor.starts_with("bridge:"));
}

#[test]
fn config_file_with_flag_overrides() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("run.toml"),
        r#"
out = "from-file"
far = [0.01, 0.0]
[ga]
population_size = 32
restarts = 1
max_generations = 50
[world]
users = 4
latent_dim = 8
[sys_t]
kind = "orthonormal-oracle"
seed = 9
"#,
    )
    .unwrap();
    ok(&latinv(&["attack", "--config", "run.toml"], d.path()));
    let r = report(&d.path().join("from-file"));
    assert_eq!(r.operating_points.len(), 2);
    assert_eq!(r.metadata.users.len(), 4);
    assert_eq!(
        r.metadata.target_extractor,
        "orthonormal-oracle(L=8,P=8,D=8,seed=9)"
    );

    ok(&latinv(
        &[
            "attack", "--config", "run.toml", "--far", "0.1", "--out", "flag",
        ],
        d.path(),
    ));
    let r2 = report(&d.path().join("flag"));
    assert_eq!(r2.operating_points.len(), 1);
    assert_ne!(r.metadata.config_digest, r2.metadata.config_digest);
}

#[test]
fn attack_from_template_files() {
    let d = tempfile::tempdir().unwrap();
    let (g, e) = latinv::models::make_orthonormal_oracle(8, 8, 1).unwrap();
    let world = latinv::world::generate_world(4, 2, 8, 0.1, 2).unwrap();
    let store = latinv::world::enroll(&world, &latinv::models::Pipeline::new(&g, &e)).unwrap();
    let mut buf = Vec::new();
    store.write_jsonl(&mut buf).unwrap();
    fs::write(d.path().join("c.jsonl"), &buf).unwrap();
    fs::write(d.path().join("t.jsonl"), &buf).unwrap();
    fs::write(
        d.path().join("run.toml"),
        "[world]\nlatent_dim = 8\n[templates]\ncompromised = \"c.jsonl\"\nbona_fide = \"t.jsonl\"\n",
    )
    .unwrap();
    ok(&latinv(
        &["attack", "--config", "run.toml", "--out", "o"],
        d.path(),
    ));
    let r = report(&d.path().join("o"));
    assert_eq!(r.metadata.users.len(), 4);
    assert!(r.metadata.dataset.starts_with("templates:"));
    assert!(!d.path().join("o/world.json").exists());
}

#[test]
fn ablate_writes_a_sweep_table() {
    let d = tempfile::tempdir().unwrap();
    let out = latinv(
        &[
            "ablate",
            "--axis",
            "crossover",
            "--values",
            "0.2,0.4",
            "--repeats",
            "3",
            "--population",
            "32",
            "--max-generations",
            "40",
            "--out",
            "ab",
        ],
        d.path(),
    );
    ok(&out);
    let text = fs::read_to_string(d.path().join("ab/ablation_crossover.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "value,mean,stddev,runs");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.2,") && lines[2].starts_with("0.4,"));

    let out = latinv(
        &["ablate", "--axis", "population", "--values", "1"],
        d.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}
