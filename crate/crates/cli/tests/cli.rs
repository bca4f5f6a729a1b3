use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use ssmreg::geometry::{exp_so3, SimilarityTransform, Vec3};
use ssmreg::io::save_points;
use ssmreg::mesh::write_ply;
use ssmreg::sim::{generate_corpus, sample_visible_points, CorpusSpec};
use tempfile::TempDir;

fn ssmreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssmreg")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_corpus() -> CorpusSpec {
    CorpusSpec {
        n_shapes: 5,
        rings: 16,
        segments: 16,
        cap_rings: 2,
        ..CorpusSpec::default()
    }
}

fn tiny_experiment() -> Value {
    json!({
        "corpus": { "n_shapes": 5, "rings": 16, "segments": 16, "cap_rings": 2 },
        "trial": { "n_points": 200, "offsets_per_shape": 1, "modes": [0, 2], "shapes": [0, 1] }
    })
}

fn write(path: &Path, v: &Value) {
    std::fs::write(path, serde_json::to_string(v).unwrap()).unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes the small corpus as PLY files and returns their paths.
fn corpus_meshes(dir: &Path) -> Vec<String> {
    let (_, corpus) = generate_corpus(&small_corpus()).unwrap();
    corpus
        .shapes()
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let p = dir.join(format!("m{i}.ply"));
            write_ply(m, &p).unwrap();
            p.to_str().unwrap().to_string()
        })
        .collect()
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(code(&ssmreg(&["--help"])), 0);
    assert_eq!(code(&ssmreg(&["frobnicate"])), 1);
    assert_eq!(code(&ssmreg(&["simulate"])), 1, "missing --seed");
    assert_eq!(code(&ssmreg(&["register", "--model", "/nonexistent.json", "--data", "/nonexistent.csv"])), 1);
    assert_eq!(code(&ssmreg(&["build-ssm", "/nonexistent.ply"])), 1);
}

#[test]
fn malformed_config_exits_1() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{ \"trial\": { \"n_points\": 0 } }").unwrap();
    let o = ssmreg(&["simulate", "--seed", "1", "--config", s(&cfg), "--output", s(dir.path())]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    std::fs::write(&cfg, "{ \"unknown_key\": 3 }").unwrap();
    assert_eq!(code(&ssmreg(&["simulate", "--seed", "1", "--config", s(&cfg)])), 1);
    std::fs::write(&cfg, "not json").unwrap();
    assert_eq!(code(&ssmreg(&["simulate", "--seed", "1", "--config", s(&cfg)])), 1);
    let o = ssmreg(&["simulate", "--seed", "1", "--workers", "0", "--output", s(dir.path())]);
    assert_eq!(code(&o), 1);
    let o = ssmreg(&["simulate", "--seed", "1", "--p-ladder", "0.9,1.5", "--output", s(dir.path())]);
    assert_eq!(code(&o), 1);
}

#[test]
fn build_ssm_writes_a_reproducible_model() {
    let dir = TempDir::new().unwrap();
    let meshes = corpus_meshes(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let mut args = vec!["build-ssm", "--output", s(&out_a)];
    args.extend(meshes.iter().map(String::as_str));
    let o = ssmreg(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("eigenvalue_mm2"));

    let cfg = dir.path().join("build.json");
    write(&cfg, &json!({ "meshes": meshes.iter().map(|m| Path::new(m).file_name().unwrap().to_str().unwrap()).collect::<Vec<_>>() }));
    let o = ssmreg(&["build-ssm", "--config", s(&cfg), "--output", s(&out_b)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let a = std::fs::read(out_a.join("ssm.json")).unwrap();
    let b = std::fs::read(out_b.join("ssm.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn identical_meshes_give_a_model_without_modes() {
    let dir = TempDir::new().unwrap();
    let meshes = corpus_meshes(dir.path());
    let o = ssmreg(&["build-ssm", "--output", s(dir.path()), &meshes[0], &meshes[0], &meshes[0]]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    let model: Value = serde_json::from_slice(&std::fs::read(dir.path().join("ssm.json")).unwrap()).unwrap();
    assert!(model.is_object());
}

#[test]
fn build_ssm_rejects_one_mesh_and_mismatched_topology() {
    let dir = TempDir::new().unwrap();
    let meshes = corpus_meshes(dir.path());
    assert_eq!(code(&ssmreg(&["build-ssm", "--output", s(dir.path()), &meshes[0]])), 1);

    let coarse = CorpusSpec {
        rings: 12,
        ..small_corpus()
    };
    let (_, other) = generate_corpus(&coarse).unwrap();
    let odd = dir.path().join("odd.ply");
    write_ply(&other.shapes()[0], &odd).unwrap();
    let o = ssmreg(&["build-ssm", "--output", s(dir.path()), &meshes[0], &meshes[1], s(&odd)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("odd.ply"), "{}", stderr(&o));
}

/// Builds a model from the corpus and a posed cloud sampled from its mean.
fn model_and_cloud(dir: &Path, outlier_fraction: f64) -> (String, String) {
    let (base, corpus) = generate_corpus(&small_corpus()).unwrap();
    let ssm = ssmreg::build_ssm(&corpus).unwrap();
    let model = dir.join("ssm.json");
    ssm.save(&model).unwrap();
    let mut pts = sample_visible_points(ssm.mean(), &base.ring_centroid(ssm.mean(), 0.08), 600, 5).unwrap();
    let t = SimilarityTransform::new(1.01, exp_so3(&Vec3::new(0.03, -0.02, 0.05)), Vec3::new(1.5, -1.0, 2.0));
    for p in &mut pts {
        *p = p.transformed(&t);
    }
    let n_bad = (pts.len() as f64 * outlier_fraction) as usize;
    for (i, p) in pts.iter_mut().take(n_bad).enumerate() {
        let k = i as f64;
        p.position = Vec3::new((k * 7.3) % 40.0 - 20.0, (k * 3.1) % 40.0 - 20.0, (k * 5.7) % 40.0);
        p.normal = Vec3::new(k.sin(), k.cos(), 0.3).normalize();
    }
    let data = dir.join("cloud.csv");
    save_points(&data, &pts).unwrap();
    (model.to_str().unwrap().into(), data.to_str().unwrap().into())
}

#[test]
fn register_recovers_a_self_sampled_cloud_deterministically() {
    let dir = TempDir::new().unwrap();
    let (model, data) = model_and_cloud(dir.path(), 0.0);
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = ssmreg(&["register", "--model", &model, "--data", &data, "--modes", "2", "--output", s(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(out.join("trace.csv").is_file());
        std::fs::read_to_string(out.join("result.json")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    let v: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["tier"], "very_confident", "{a}");
    assert!((v["transform"]["scale"].as_f64().unwrap() - 1.0 / 1.01).abs() < 2e-3);
}

#[test]
fn register_survives_half_gross_outliers() {
    let dir = TempDir::new().unwrap();
    let (model, data) = model_and_cloud(dir.path(), 0.5);
    let o = ssmreg(&["register", "--model", &model, "--data", &data, "--modes", "2", "--output", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&std::fs::read(dir.path().join("result.json")).unwrap()).unwrap();
    assert!(v["e_p"].as_f64().unwrap().is_finite());
}

#[test]
fn register_reports_too_many_modes_as_config_error() {
    let dir = TempDir::new().unwrap();
    let (model, data) = model_and_cloud(dir.path(), 0.0);
    let o = ssmreg(&["register", "--model", &model, "--data", &data, "--modes", "99", "--output", s(dir.path())]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn simulate_and_report_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("exp.json");
    write(&cfg, &tiny_experiment());
    let run = |sub: &str, workers: &str| {
        let out = dir.path().join(sub);
        let o = ssmreg(&["simulate", "--seed", "3", "--config", s(&cfg), "--workers", workers, "--output", s(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    };
    let a = run("a", "1");
    let b = run("b", "3");
    let trials = std::fs::read_to_string(a.join("trials.csv")).unwrap();
    assert_eq!(trials, std::fs::read_to_string(b.join("trials.csv")).unwrap());
    assert_eq!(trials.lines().count(), 1 + 2 * 2);
    assert_eq!(
        std::fs::read(a.join("summary.json")).unwrap(),
        std::fs::read(b.join("summary.json")).unwrap()
    );

    // Reporting on one file reproduces the simulate summary.
    let r = dir.path().join("r");
    let o = ssmreg(&["report", "--output", s(&r), s(&a.join("trials.csv"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        std::fs::read(r.join("summary.json")).unwrap(),
        std::fs::read(a.join("summary.json")).unwrap()
    );
    assert!(r.join("summary_long.csv").is_file());

    // Reporting on two copies doubles every count.
    let rr = dir.path().join("rr");
    let t = s(&a.join("trials.csv")).to_string();
    assert_eq!(code(&ssmreg(&["report", "--output", s(&rr), &t, &t])), 0);
    let one: Value = serde_json::from_slice(&std::fs::read(r.join("summary.json")).unwrap()).unwrap();
    let two: Value = serde_json::from_slice(&std::fs::read(rr.join("summary.json")).unwrap()).unwrap();
    for (x, y) in one["tiers"].as_array().unwrap().iter().zip(two["tiers"].as_array().unwrap()) {
        assert_eq!(2 * x["count"].as_u64().unwrap(), y["count"].as_u64().unwrap());
    }
}

#[test]
fn report_rejects_a_malformed_csv() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "shape,offset\n1,2\n").unwrap();
    let o = ssmreg(&["report", "--output", s(dir.path()), s(&bad)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert_eq!(code(&ssmreg(&["report", "/nonexistent.csv"])), 1);
}

#[test]
fn corpus_writes_meshes() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    write(&cfg, &json!({ "n_shapes": 3, "rings": 12, "segments": 12, "cap_rings": 2 }));
    let o = ssmreg(&["corpus", "--seed", "2", "--config", s(&cfg), "--output", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for i in 0..3 {
        assert!(dir.path().join(format!("shape_{i:03}.ply")).is_file());
    }
}
