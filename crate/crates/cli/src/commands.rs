use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use ssmreg::confidence::{thresholds, ConfidenceLadder};
use ssmreg::io::{load_points, write_trace_csv, ResultRecord};
use ssmreg::mesh::{read_ply, write_ply};
use ssmreg::sim::{
    generate_corpus, read_trials_csv, run_experiment, summarize, write_long_csv, write_trials_csv, CorpusSpec,
    ExperimentSpec, RunOptions, Summary,
};
use ssmreg::{RegistrationConfig, ShapeCorpus, StatisticalShapeModel};

use crate::Common;

/// Exit code 1 for usage and configuration problems, 2 for failures while running.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

type Result<T> = std::result::Result<T, CliError>;

/// Parses the config file if given; relative paths inside it resolve against its directory.
fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<(T, PathBuf)> {
    let Some(path) = path else {
        return Ok((T::default(), PathBuf::from(".")));
    };
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    let value = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((value, dir))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn existing(p: PathBuf, what: &str) -> Result<PathBuf> {
    if p.is_file() {
        Ok(p)
    } else {
        Err(config_err(format!("{what} not found: {}", p.display())))
    }
}

fn ladder(common: &Common) -> Result<Option<ConfidenceLadder>> {
    common.p_ladder.as_deref().map(|s| s.parse().map_err(config_err)).transpose()
}

fn output_dir(common: &Common) -> Result<&Path> {
    std::fs::create_dir_all(&common.output)
        .map_err(|e| runtime(format!("cannot create {}: {e}", common.output.display())))?;
    Ok(&common.output)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    std::fs::write(path, text + "\n").map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(config_err("--workers must be positive"));
        }
        builder = builder.num_threads(n);
    }
    Ok(builder.build().map_err(runtime)?.install(f))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BuildConfig {
    meshes: Vec<PathBuf>,
}

pub fn build_ssm(common: &Common, extra: Vec<PathBuf>) -> Result<()> {
    let (config, base) = load_config::<BuildConfig>(common.config.as_deref())?;
    let paths = config
        .meshes
        .iter()
        .map(|p| resolve(&base, p))
        .chain(extra)
        .map(|p| existing(p, "mesh"))
        .collect::<Result<Vec<_>>>()?;
    if paths.len() < 2 {
        return Err(config_err(format!("at least 2 meshes are needed, got {}", paths.len())));
    }
    let mut meshes = Vec::with_capacity(paths.len());
    for p in &paths {
        let m = read_ply(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
        if let Some(first) = meshes.first() {
            if !m.same_topology(first) {
                return Err(runtime(format!(
                    "{}: topology differs from {}",
                    p.display(),
                    paths[0].display()
                )));
            }
        }
        meshes.push(m);
    }
    let ssm = ssmreg::build_ssm(&ShapeCorpus::new(meshes).map_err(runtime)?).map_err(runtime)?;
    let out = output_dir(common)?.join("ssm.json");
    ssm.save(&out).map_err(runtime)?;

    let spectrum = ssm.spectrum();
    let total: f64 = spectrum.iter().sum();
    if ssm.mode_count() == 0 {
        eprintln!("warning: all shapes are identical; the model has no modes");
    }
    println!("{:>5} {:>16} {:>11} {:>13}", "mode", "eigenvalue_mm2", "variance_%", "cumulative_%");
    let mut cum = 0.0;
    for (j, l) in spectrum.iter().enumerate() {
        let pct = if total > 0.0 { 100.0 * l / total } else { 0.0 };
        cum += pct;
        println!("{:>5} {:>16.6} {:>11.3} {:>13.3}", j + 1, l, pct, cum);
    }
    println!("wrote {} ({} modes)", out.display(), ssm.mode_count());
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RegisterConfig {
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    registration: RegistrationConfig,
}

pub fn register(common: &Common, model: Option<PathBuf>, data: Option<PathBuf>, modes: Option<usize>) -> Result<()> {
    let (config, base) = load_config::<RegisterConfig>(common.config.as_deref())?;
    let model = model
        .or(config.model.map(|p| resolve(&base, &p)))
        .ok_or_else(|| config_err("no model given (--model or \"model\" in the config)"))?;
    let data = data
        .or(config.data.map(|p| resolve(&base, &p)))
        .ok_or_else(|| config_err("no data given (--data or \"data\" in the config)"))?;
    let (model, data) = (existing(model, "model")?, existing(data, "data")?);
    let mut reg = config.registration;
    if let Some(m) = modes {
        reg.n_modes = m;
    }
    if let Some(l) = ladder(common)? {
        reg.ladder = l;
    }

    let ssm = StatisticalShapeModel::load(&model).map_err(|e| runtime(format!("{}: {e}", model.display())))?;
    reg.validate(&ssm).map_err(config_err)?;
    let points = load_points(&data).map_err(|e| runtime(format!("{}: {e}", data.display())))?;
    let dir = output_dir(common)?;
    let result = with_workers(common.workers, || ssmreg::register(&points, &ssm, &reg))?.map_err(runtime)?;

    let th = thresholds(&reg.ladder, result.inliers.len()).map_err(runtime)?;
    write_json(&dir.join("result.json"), &ResultRecord::new(&result, th[0].position, th[0].orientation))?;
    write_trace_csv(create(&dir.join("trace.csv"))?, &result.trace).map_err(runtime)?;

    println!("tier: {}", result.confidence.tier);
    println!(
        "iterations: {} ({})",
        result.iterations,
        if result.converged { "converged" } else { "iteration limit" }
    );
    println!("inliers: {} of {}", result.inliers.len(), points.len());
    println!("{:>10} {:>14} {:>14} {:>14} {:>14}", "p", "E_p", "chi2inv(p,3n)", "E_o", "chi2inv(p,2n)");
    for t in &th {
        println!(
            "{:>10} {:>14.3} {:>14.3} {:>14.3} {:>14.3}",
            t.p, result.e_p, t.position, result.e_o, t.orientation
        );
    }
    Ok(())
}

fn print_summary(s: &Summary) {
    println!("{:<20} {:>6} {:>9} {:>10} {:>8}", "tier", "count", "success", "mean_tRE", "sd_tRE");
    for t in &s.tiers {
        println!(
            "{:<20} {:>6} {:>9} {:>10} {:>8}",
            t.tier.as_str(),
            t.count,
            t.successes,
            opt(t.mean_tre_mm),
            opt(t.sd_tre_mm)
        );
    }
    println!();
    println!("{:>10} {:>5} {:>5} {:>5} {:>5} {:>10} {:>8}", "p", "TP", "FP", "TN", "FN", "precision", "recall");
    for c in &s.confusion {
        println!(
            "{:>10} {:>5} {:>5} {:>5} {:>5} {:>10} {:>8}",
            c.p,
            c.true_positive,
            c.false_positive,
            c.true_negative,
            c.false_negative,
            opt(c.precision),
            opt(c.recall)
        );
    }
    println!();
    println!("{:>6} {:>7} {:>9} {:>10} {:>11}", "modes", "trials", "success", "mean_tRE", "median_iter");
    for m in &s.by_modes {
        println!(
            "{:>6} {:>7} {:>9.3} {:>10} {:>11}",
            m.modes,
            m.trials,
            m.success_rate,
            opt(m.mean_tre_mm),
            opt(m.median_iterations)
        );
    }
    println!(
        "\nmean tRE of successful trials: {} mm; mean shape error: {} mm",
        opt(s.mean_tre_successful_mm),
        opt(s.mean_shape_err_mm)
    );
}

pub fn simulate(common: &Common, seed: u64, modes: Option<Vec<usize>>, timing: bool) -> Result<()> {
    let (mut spec, _) = load_config::<ExperimentSpec>(common.config.as_deref())?;
    spec.seed = seed;
    if let Some(m) = modes {
        spec.trial.modes = m;
    }
    if let Some(l) = ladder(common)? {
        spec.trial.registration.ladder = l;
    }
    spec.trial.validate(&spec.corpus).map_err(config_err)?;
    let dir = output_dir(common)?;
    let rows = with_workers(common.workers, || run_experiment(&spec, RunOptions { timing }))?.map_err(runtime)?;
    write_trials_csv(create(&dir.join("trials.csv"))?, &rows).map_err(runtime)?;
    let summary = summarize(&rows, &spec.trial.registration.ladder);
    write_json(&dir.join("summary.json"), &summary)?;
    print_summary(&summary);
    Ok(())
}

pub fn report(common: &Common, paths: &[PathBuf]) -> Result<()> {
    let ladder = ladder(common)?.unwrap_or_default();
    let mut rows = Vec::new();
    for p in paths {
        let p = existing(p.clone(), "trial CSV")?;
        let f = File::open(&p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
        rows.extend(read_trials_csv(f).map_err(|e| runtime(format!("{}: {e}", p.display())))?);
    }
    let summary = summarize(&rows, &ladder);
    let dir = output_dir(common)?;
    write_json(&dir.join("summary.json"), &summary)?;
    write_long_csv(create(&dir.join("summary_long.csv"))?, &summary).map_err(runtime)?;
    print_summary(&summary);
    Ok(())
}

pub fn corpus(common: &Common, seed: u64) -> Result<()> {
    let (mut spec, _) = load_config::<CorpusSpec>(common.config.as_deref())?;
    spec.seed = seed;
    spec.validate().map_err(config_err)?;
    let (_, corpus) = generate_corpus(&spec).map_err(runtime)?;
    let dir = output_dir(common)?;
    for (i, m) in corpus.shapes().iter().enumerate() {
        write_ply(m, dir.join(format!("shape_{i:03}.ply"))).map_err(runtime)?;
    }
    println!("wrote {} meshes to {}", corpus.len(), dir.display());
    Ok(())
}
