//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion does.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use ssmreg::geometry::{exp_so3, rotation_angle, SimilarityTransform, Vec3};
use ssmreg::mesh::hausdorff_distance;
use ssmreg::noise::NoiseSpec;
use ssmreg::registration::{CostModel, Matcher};
use ssmreg::sim::{
    apply_offset, generate_corpus, run_experiment, sample_visible_points, summarize, CorpusSpec, ExperimentSpec,
    OffsetRanges, RunOptions, TrialSpec,
};
use ssmreg::{
    build_ssm, chi2_inv, register, ConfidenceTier, OrientedPoint, RegistrationConfig, ShapeParameters,
    StatisticalShapeModel,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_params<R: Rng>(rng: &mut R, n: usize, bound: f64) -> ShapeParameters {
    ShapeParameters((0..n).map(|_| rng.random_range(-bound..bound)).collect())
}

fn small_model(n_shapes: usize) -> (ssmreg::sim::BaseCavity, ssmreg::ShapeCorpus, StatisticalShapeModel) {
    let spec = CorpusSpec {
        n_shapes,
        rings: 24,
        segments: 24,
        cap_rings: 3,
        ..CorpusSpec::default()
    };
    let (base, corpus) = generate_corpus(&spec).unwrap();
    let ssm = build_ssm(&corpus).unwrap();
    (base, corpus, ssm)
}

/// Model at the corpus's default resolution.
fn full_model(n_shapes: usize) -> (ssmreg::sim::BaseCavity, StatisticalShapeModel) {
    let (base, corpus) = generate_corpus(&CorpusSpec {
        n_shapes,
        ..CorpusSpec::default()
    })
    .unwrap();
    (base, build_ssm(&corpus).unwrap())
}

fn criterion_1() -> Outcome {
    let a = chi2_inv(0.95, 3).unwrap();
    let b = chi2_inv(0.95, 2).unwrap();
    let fixed = (a - 7.814728).abs() < 1e-4 && (b - 5.991465).abs() < 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let p = rng.random_range(0.001..0.999);
        let k = rng.random_range(1..=9000usize);
        let x = chi2_inv(p, k).unwrap();
        let cdf = ChiSquared::new(k as f64).unwrap().cdf(x);
        worst = worst.max((cdf - p).abs());
    }
    outcome(
        fixed && worst < 1e-6,
        format!("chi2_inv(0.95,3) = {a:.6}, chi2_inv(0.95,2) = {b:.6}, worst |CDF(x) - p| = {worst:.2e}"),
    )
}

fn criterion_2() -> Outcome {
    let (_, _, ssm) = small_model(8);
    let n_modes = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let noise = NoiseSpec::new(
            [rng.random_range(0.3..1.5), rng.random_range(0.3..1.5), rng.random_range(0.5..3.0)],
            rng.random_range(5.0..40.0),
            rng.random_range(0.1..0.9),
        );
        let (pos, kent) = (noise.position().unwrap(), noise.kent().unwrap());
        assert!(kent.beta > 0.0);
        let s = random_params(&mut rng, n_modes, 2.0);
        let mesh = ssm.instantiate(&s).unwrap();
        let t = SimilarityTransform::new(
            rng.random_range(0.9..1.1),
            exp_so3(&(unit(&mut rng) * rng.random_range(0.0..0.3))),
            Vec3::from_fn(|_, _| rng.random_range(-2.0..2.0)),
        );
        let data: Vec<OrientedPoint> = (0..60)
            .map(|_| {
                let v = mesh.vertices()[rng.random_range(0..mesh.vertex_count())];
                let position = t.inverse().apply_point(&(v + Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0))));
                OrientedPoint::new(position, unit(&mut rng)).unwrap()
            })
            .collect();
        let corrs = Matcher::new(&mesh, &pos, &kent, &t).unwrap().find_all(&data).unwrap();
        let cm = CostModel::new(&data, &corrs, &ssm, n_modes, &pos, &kent, &t.rotation).unwrap();
        let mut p = DVector::from_fn(cm.dim(), |_, _| rng.random_range(-0.2..0.2));
        p[0] = rng.random_range(0.9..1.1);
        for j in 0..n_modes {
            p[7 + j] = rng.random_range(-2.0..2.0);
        }
        let (_, g) = cm.cost_and_gradient(&p);
        let h = 1e-6;
        let fd = DVector::from_fn(cm.dim(), |i, _| {
            let (mut a, mut b) = (p.clone(), p.clone());
            a[i] += h;
            b[i] -= h;
            (cm.cost(&a) - cm.cost(&b)) / (2.0 * h)
        });
        worst = worst.max((&g - &fd).norm() / g.norm().max(1e-8));
    }
    outcome(worst < 1e-5, format!("worst relative gradient error {worst:.2e} over 100 configurations"))
}

fn criterion_3() -> Outcome {
    let (_, corpus, ssm) = small_model(10);
    let full = ssm.mode_count();
    let mut recon: f64 = 0.0;
    for shape in corpus.shapes() {
        let back = ssm.instantiate(&ssm.project(shape, full).unwrap()).unwrap();
        for (a, b) in back.vertices().iter().zip(shape.vertices()) {
            recon = recon.max((a - b).norm());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut param: f64 = 0.0;
    for _ in 0..50 {
        let s = random_params(&mut rng, full, 3.0);
        let back = ssm.project(&ssm.instantiate(&s).unwrap(), full).unwrap();
        param = param.max(back.0.iter().zip(&s.0).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
    }
    outcome(
        recon < 1e-6 && param < 1e-9,
        format!("max reconstruction error {recon:.2e} mm, max parameter round-trip error {param:.2e}"),
    )
}

fn criterion_4() -> Outcome {
    let (base, ssm) = full_model(20);
    let mean = ssm.mean();
    let viewpoint = base.ring_centroid(mean, 0.08);
    let config = RegistrationConfig::default();
    let (mut rot, mut trans, mut scale, mut tre, mut iters) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0usize);
    let mut all = true;
    for seed in 0..20u64 {
        let clean = sample_visible_points(mean, &viewpoint, 3000, 100 + seed).unwrap();
        let (data, truth) = apply_offset(&clean, &OffsetRanges::default(), 200 + seed);
        let r = register(&data, &ssm, &config).unwrap();
        let e = &r.transform;
        let rot_err = rotation_angle(&(e.rotation * truth.rotation)).to_degrees();
        let trans_err = e.apply_point(&truth.translation).norm();
        let scale_err = (e.scale * truth.scale - 1.0).abs();
        let tre_err = hausdorff_distance(&mean.transformed(&e.inverse()), &mean.transformed(&truth)).unwrap();
        all &= rot_err < 0.1 && trans_err < 0.1 && scale_err < 0.005 && tre_err < 0.1 && r.iterations <= 100;
        rot = rot.max(rot_err);
        trans = trans.max(trans_err);
        scale = scale.max(scale_err);
        tre = tre.max(tre_err);
        iters = iters.max(r.iterations);
    }
    outcome(
        all,
        format!(
            "worst over 20 seeds: rotation {rot:.4} deg, translation {trans:.4} mm, scale {scale:.5}, tRE {tre:.4} mm, {iters} iterations"
        ),
    )
}

/// Criteria 5 and 7 share one leave-one-out run.
fn criteria_5_and_7() -> (Outcome, Outcome, Outcome, Outcome) {
    let spec = ExperimentSpec {
        seed: 5,
        corpus: CorpusSpec {
            n_shapes: 20,
            ..CorpusSpec::default()
        },
        trial: TrialSpec {
            n_points: 1500,
            offsets_per_shape: 2,
            modes: vec![0, 5, 10, 17],
            ..TrialSpec::default()
        },
    };
    let rows = run_experiment(&spec, RunOptions::default()).unwrap();
    let summary = summarize(&rows, &spec.trial.registration.ladder);

    let false_vc: Vec<_> = rows
        .iter()
        .filter(|r| !r.success && r.tier == ConfidenceTier::VeryConfident)
        .collect();
    let failed = rows.iter().filter(|r| !r.success).count();
    let worst_false = false_vc.iter().map(|r| r.tre_mm).fold(f64::NAN, f64::max);
    let a = outcome(
        false_vc.is_empty(),
        format!(
            "{} of {failed} failed registrations (of {}) classified very_confident at p = 0.95 (largest tRE {worst_false:.2} mm)",
            false_vc.len(),
            rows.len()
        ),
    );

    let tiers: Vec<String> = summary
        .tiers
        .iter()
        .filter_map(|t| t.mean_tre_mm.map(|m| format!("{} {m:.3}", t.tier.as_str())))
        .collect();
    let b = outcome(summary.tier_tre_monotone, format!("mean tRE by tier: {}", tiers.join(", ")));

    let vc: Vec<f64> = rows
        .iter()
        .filter(|r| r.modes > 0 && r.tier == ConfidenceTier::VeryConfident && r.tre_mm.is_finite())
        .map(|r| r.tre_mm)
        .collect();
    let vc_mean = vc.iter().sum::<f64>() / vc.len() as f64;
    let c = outcome(
        !vc.is_empty() && vc_mean < 1.0,
        format!("mean tRE of {} very_confident deformable registrations {vc_mean:.3} mm", vc.len()),
    );

    let mut iters: Vec<usize> = rows.iter().filter(|r| r.modes > 0).map(|r| r.iterations).collect();
    iters.sort_unstable();
    let m = iters.len() / 2;
    let median = if iters.len() % 2 == 1 {
        iters[m] as f64
    } else {
        0.5 * (iters[m - 1] + iters[m]) as f64
    };
    let per_mode: Vec<String> = summary
        .by_modes
        .iter()
        .map(|s| format!("{}: {}", s.modes, s.median_iterations.map_or("-".into(), |v| format!("{v}"))))
        .collect();
    let seven = outcome(
        median <= 30.0,
        format!("median outer iterations with modes > 0: {median} (per mode count {})", per_mode.join(", ")),
    );
    (a, b, c, seven)
}

fn criterion_6() -> Outcome {
    let (_, _, ssm) = small_model(8);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let noise = NoiseSpec::new([1.0, 1.0, 2.0], 30.0, 0.5);
    let (pos, kent) = (noise.position().unwrap(), noise.kent().unwrap());
    let mut mismatches = 0;
    for _ in 0..5 {
        let mesh = ssm.instantiate(&random_params(&mut rng, ssm.mode_count(), 2.5)).unwrap();
        let t = SimilarityTransform::new(
            rng.random_range(0.9..1.1),
            exp_so3(&(unit(&mut rng) * rng.random_range(0.0..1.0))),
            Vec3::from_fn(|_, _| rng.random_range(-5.0..5.0)),
        );
        let matcher = Matcher::new(&mesh, &pos, &kent, &t).unwrap();
        let lo = mesh.vertices().iter().fold(Vec3::repeat(f64::MAX), |a, v| a.inf(v));
        let hi = mesh.vertices().iter().fold(Vec3::repeat(f64::MIN), |a, v| a.sup(v));
        for i in 0..200 {
            let q = Vec3::from_fn(|k, _| rng.random_range(lo[k] - 5.0..hi[k] + 5.0));
            let x = OrientedPoint::new(t.inverse().apply_point(&q), unit(&mut rng)).unwrap();
            let fast = matcher.find(i, &x).unwrap();
            let slow = matcher.find_brute_force(i, &x).unwrap();
            let same = fast.nll == slow.nll && (fast.y.position - slow.y.position).norm() < 1e-9;
            mismatches += usize::from(!same);
        }
    }
    outcome(mismatches == 0, format!("{mismatches} of 1000 queries differ from the brute-force scan"))
}

fn criterion_8() -> Outcome {
    let (base, ssm) = full_model(20);
    let mean = ssm.mean();
    let viewpoint = base.ring_centroid(mean, 0.08);
    let config = RegistrationConfig::default();
    let mut all = true;
    let (mut worst_tre, mut worst_flag) = (0.0f64, 1.0f64);
    for seed in 0..10u64 {
        let clean = sample_visible_points(mean, &viewpoint, 1500, 800 + seed).unwrap();
        let (mut data, truth) = apply_offset(&clean, &OffsetRanges::default(), 900 + seed);
        let centre = data.iter().map(|p| p.position).sum::<Vec3>() / data.len() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n_out = data.len() / 10;
        let first = data.len();
        for _ in 0..n_out {
            let position = centre + Vec3::from_fn(|_, _| rng.random_range(-25.0..25.0));
            data.push(OrientedPoint::new(position, unit(&mut rng)).unwrap());
        }
        let r = register(&data, &ssm, &config).unwrap();
        let tre = hausdorff_distance(&mean.transformed(&r.transform.inverse()), &mean.transformed(&truth)).unwrap();
        let flagged = r.outliers.iter().filter(|&&i| i >= first).count() as f64 / n_out as f64;
        all &= tre < 0.5 && flagged >= 0.9;
        worst_tre = worst_tre.max(tre);
        worst_flag = worst_flag.min(flagged);
    }
    outcome(
        all,
        format!("worst over 10 seeds: tRE {worst_tre:.4} mm, {:.1}% of injected outliers flagged", 100.0 * worst_flag),
    )
}

fn simulate(dir: &Path, workers: &str) -> Vec<u8> {
    let cfg = dir.join("exp.json");
    std::fs::write(
        &cfg,
        r#"{ "corpus": { "n_shapes": 6, "rings": 16, "segments": 16, "cap_rings": 2 },
             "trial": { "n_points": 300, "offsets_per_shape": 2, "modes": [0, 3], "shapes": [0, 1, 2] } }"#,
    )
    .unwrap();
    let out = dir.join(format!("w{workers}"));
    let status = Command::new(env!("CARGO_BIN_EXE_ssmreg"))
        .args(["simulate", "--seed", "9", "--workers", workers, "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    std::fs::read(out.join("trials.csv")).unwrap()
}

fn criterion_9() -> Outcome {
    let a = tempfile::TempDir::new().unwrap();
    let b = tempfile::TempDir::new().unwrap();
    let one = simulate(a.path(), "1");
    let again = simulate(b.path(), "1");
    let many = simulate(b.path(), "4");
    outcome(
        one == again && one == many,
        format!(
            "trials.csv ({} bytes) identical across runs: {}, across --workers 1 and 4: {}",
            one.len(),
            one == again,
            one == many
        ),
    )
}

#[test]
fn acceptance() {
    fn timed(name: &str, f: impl FnOnce() -> Outcome) -> (String, Outcome, f64) {
        let start = Instant::now();
        let o = f();
        (name.to_string(), o, start.elapsed().as_secs_f64())
    }
    let mut results = vec![
        timed("1", criterion_1),
        timed("2", criterion_2),
        timed("3", criterion_3),
        timed("4", criterion_4),
    ];
    let start = Instant::now();
    let (a, b, c, seven) = criteria_5_and_7();
    let shared = start.elapsed().as_secs_f64();
    results.push(("5a".into(), a, shared));
    results.push(("5b".into(), b, shared));
    results.push(("5c".into(), c, shared));
    results.push(("7".into(), seven, shared));
    results.push(timed("6", criterion_6));
    results.push(timed("8", criterion_8));
    results.push(timed("9", criterion_9));
    results.sort_by_key(|(n, _, _)| (n.trim_end_matches(char::is_alphabetic).parse::<u32>().unwrap(), n.clone()));

    for (name, o, secs) in &results {
        println!(
            "{} criterion {name}: {} [{secs:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    let failed: Vec<&str> = results.iter().filter(|(_, o, _)| !o.pass).map(|(n, _, _)| n.as_str()).collect();
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
