//! Command-line entry point: `generate`, `identify`, `validate`, `experiment`.
//!
//! Structured settings come from one TOML run config; flags carry only paths,
//! the seed, the realization count, `--enforce` and `--jobs`. Every output
//! directory gets a `manifest.json` carrying the config hash.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Resolved, RunConfig};
use crate::datagen::{derive_seed, generate_set, inject_noise, make_splits, Dataset};
use crate::error::{Error, Result};
use crate::harness::experiment::{footer, write_band_table, write_checks, write_model_terms};
use crate::harness::identify::step_rows;
use crate::harness::validate::write_trace_csv;
use crate::harness::{
    identify_all, run_interp_extrap, run_numerical_validation, Method, MethodStatus, StepRow, TargetModels,
    ValidationOutput, ValidationRun,
};
use crate::metrics::{write_report_csv, ReportRow};
use crate::target::Target;

#[derive(Debug, Parser)]
#[command(name = "quadpi", version, about = "Quadrotor model identification with validated prediction intervals")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate clean and noisy flight datasets.
    Generate(GenerateArgs),
    /// Identify polynomial, bootstrap and quality-driven models.
    Identify(IdentifyArgs),
    /// Monte Carlo validation of the identified intervals.
    Validate(ValidateArgs),
    /// Interpolation/extrapolation study on velocity bands.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run config (TOML). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config and QUADPI_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "data")]
    pub data: PathBuf,
    #[arg(long, default_value = "models")]
    pub models: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "data")]
    pub data: PathBuf,
    #[arg(long, default_value = "models")]
    pub models: PathBuf,
    #[arg(long, default_value = "reports")]
    pub out: PathBuf,
    #[arg(long)]
    pub realizations: Option<usize>,
    /// Exit with code 3 if any PICP is below 1 - alpha.
    #[arg(long)]
    pub enforce: bool,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "data")]
    pub data: PathBuf,
    /// Where the band-trained models are written.
    #[arg(long, default_value = "models-bands")]
    pub models: PathBuf,
    #[arg(long, default_value = "reports-bands")]
    pub out: PathBuf,
    /// Exit with code 3 if any band check fails.
    #[arg(long)]
    pub enforce: bool,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(j) = cli.jobs {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    let res = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Identify(a) => cmd_identify(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(c: &Common, tweak: impl FnOnce(&mut RunConfig)) -> Result<Resolved> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    tweak(&mut cfg);
    cfg.resolve()
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Dataset roles written by `generate`.
pub const ROLES: [&str; 3] = ["training", "validation", "bands"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    pub band: Option<f64>,
    pub samples: usize,
    pub seed: u64,
    pub noise_seed: u64,
    pub clean: String,
    pub noisy: String,
    pub clean_sha256: String,
    pub noisy_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetEntry {
    pub role: String,
    pub preset: String,
    pub name: String,
    pub seed: u64,
    pub datasets: Vec<DatasetEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub config_hash: String,
    pub seed: u64,
    pub sets: Vec<SetEntry>,
}

impl DataManifest {
    fn set(&self, role: &str) -> Result<&SetEntry> {
        self.sets
            .iter()
            .find(|s| s.role == role)
            .ok_or_else(|| Error::Schema(format!("data manifest has no '{role}' set")))
    }
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let r = load_config(&a.common, |_| {})?;
    let c = &r.config;
    let mut sets = Vec::new();
    for (k, role) in ROLES.iter().enumerate() {
        let (preset, set) = match *role {
            "training" => (&c.data.training, &r.training),
            "validation" => (&c.data.validation, &r.validation),
            _ => (&c.data.bands, &r.bands),
        };
        let set_seed = derive_seed(c.seed, 100 + k as u64);
        let dir = a.out.join(role);
        mkdir(&dir)?;
        let clean = generate_set(set, &r.vehicle, &r.truth, set_seed)?;
        let entries = clean
            .par_iter()
            .enumerate()
            .map(|(i, ds)| {
                let noise_seed = derive_seed(set_seed, 10_000 + i as u64);
                let noisy = inject_noise(ds, &r.noise, &r.vehicle, noise_seed)?;
                let cp = dir.join(format!("{}.csv", ds.id));
                let np = dir.join(format!("{}.noisy.csv", ds.id));
                ds.write_csv(&cp)?;
                noisy.write_csv(&np)?;
                Ok(DatasetEntry {
                    id: ds.id.clone(),
                    band: ds.band,
                    samples: ds.len(),
                    seed: ds.provenance.seed,
                    noise_seed,
                    clean: format!("{role}/{}.csv", ds.id),
                    noisy: format!("{role}/{}.noisy.csv", ds.id),
                    clean_sha256: file_sha256(&cp)?,
                    noisy_sha256: file_sha256(&np)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        sets.push(SetEntry {
            role: role.to_string(),
            preset: preset.clone(),
            name: set.name.clone(),
            seed: set_seed,
            datasets: entries,
        });
    }
    let total: usize = sets.iter().map(|s| s.datasets.len()).sum();
    write_json(
        &a.out.join("manifest.json"),
        &DataManifest {
            config_hash: r.hash.clone(),
            seed: c.seed,
            sets,
        },
    )?;
    println!("generated {total} datasets in {} (config {})", a.out.display(), &r.hash[..12]);
    Ok(())
}

/// Loads every dataset of one role, clean or noisy, band tags restored.
pub fn load_role(data: &Path, role: &str, noisy: bool, s_r: i8) -> Result<Vec<Dataset>> {
    let man: DataManifest = read_json(&data.join("manifest.json"))?;
    man.set(role)?
        .datasets
        .iter()
        .map(|e| {
            let rel = if noisy { &e.noisy } else { &e.clean };
            let mut ds = Dataset::read_csv(&data.join(rel), &e.id, s_r)?;
            ds.band = e.band;
            ds.provenance.seed = e.seed;
            ds.provenance.maneuver_ids = vec![e.id.clone()];
            if noisy {
                ds.provenance.noise_seed = Some(e.noise_seed);
            }
            Ok(ds)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelsManifest {
    pub config_hash: String,
    pub seed: u64,
    pub data_manifest_sha256: String,
    pub targets: Vec<Target>,
    pub methods: Vec<Method>,
    pub statuses: Vec<MethodStatus>,
}

#[derive(Serialize)]
struct Summary<'a> {
    statuses: &'a [MethodStatus],
    steps: &'a [StepRow],
}

fn write_steps_csv(path: &Path, steps: &[StepRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(["target", "step", "action", "term", "r2", "coefficient"])?;
    for s in steps {
        let action = serde_json::to_value(s.action)?;
        w.write_record([
            s.target.clone(),
            s.step.to_string(),
            action.as_str().unwrap_or_default().to_string(),
            s.term.clone(),
            format!("{:.6}", s.r2),
            s.coefficient.map_or(String::new(), |c| format!("{c:.6e}")),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes models, `summary.json`, `summary.csv` and `manifest.json`.
fn save_models(
    dir: &Path,
    r: &Resolved,
    models: &[TargetModels],
    statuses: &[MethodStatus],
    data_sha: String,
) -> Result<()> {
    mkdir(dir)?;
    for tm in models {
        tm.save(&dir.join(tm.target().name()))?;
    }
    let steps = step_rows(models);
    write_json(
        &dir.join("summary.json"),
        &Summary {
            statuses,
            steps: &steps,
        },
    )?;
    write_steps_csv(&dir.join("summary.csv"), &steps)?;
    write_json(
        &dir.join("manifest.json"),
        &ModelsManifest {
            config_hash: r.hash.clone(),
            seed: r.config.seed,
            data_manifest_sha256: data_sha,
            targets: r.config.identify.targets.clone(),
            methods: r.config.identify.methods.clone(),
            statuses: statuses.to_vec(),
        },
    )
}

fn report_failures(statuses: &[MethodStatus]) -> Result<()> {
    let failed: Vec<String> = statuses
        .iter()
        .filter(|s| !s.ok)
        .map(|s| format!("{} {}: {}", s.target, s.method, s.detail))
        .collect();
    if failed.is_empty() {
        return Ok(());
    }
    for f in &failed {
        eprintln!("failed: {f}");
    }
    Err(Error::InsufficientData(format!("{} identification(s) failed", failed.len())))
}

fn cmd_identify(a: &IdentifyArgs) -> Result<()> {
    let r = load_config(&a.common, |_| {})?;
    let train = Dataset::concat("training", &load_role(&a.data, "training", true, r.vehicle.s_r)?);
    let (models, statuses) =
        identify_all(&r.targets, &r.config.identify.methods, &r.config.identify, &train, r.config.seed);
    save_models(&a.models, &r, &models, &statuses, file_sha256(&a.data.join("manifest.json"))?)?;
    for s in &statuses {
        println!("{} {:<15} {} {}", s.target, s.method.name(), if s.ok { "ok  " } else { "FAIL" }, s.detail);
    }
    report_failures(&statuses)
}

/// Loads the models a previous `identify` reported as successful.
pub fn load_models(dir: &Path) -> Result<Vec<TargetModels>> {
    let man: ModelsManifest = read_json(&dir.join("manifest.json"))?;
    man.targets
        .iter()
        .map(|t| {
            let ok: Vec<Method> = man
                .statuses
                .iter()
                .filter(|s| s.ok && s.target == t.name())
                .map(|s| s.method)
                .collect();
            TargetModels::load(&dir.join(t.name()), *t, &ok)
        })
        .collect()
}

#[derive(Serialize)]
struct ReportManifest<'a> {
    config_hash: &'a str,
    seed: u64,
    alpha: f64,
    realizations: usize,
    pooling: crate::metrics::Pooling,
    anchor: crate::harness::Anchor,
    models_manifest_sha256: String,
    data_manifest_sha256: String,
    complete: bool,
}

fn write_validation(out: &Path, v: &ValidationOutput, traces: bool) -> Result<()> {
    mkdir(out)?;
    write_report_csv(&out.join("report.csv"), &v.rows)?;
    if traces {
        let dir = out.join("traces");
        mkdir(&dir)?;
        for t in &v.traces {
            write_trace_csv(&dir.join(format!("{}_{}.csv", t.target, t.method.name())), t)?;
        }
    }
    Ok(())
}

/// Rows whose coverage falls below `1 - alpha`.
pub fn enforcement_failures(rows: &[ReportRow], alpha: f64) -> Vec<String> {
    rows.iter()
        .filter(|r| r.report.picp < 1.0 - alpha)
        .map(|r| format!("{} {} {}: PICP {:.4}", r.target, r.method, r.report.kind.name(), r.report.picp))
        .collect()
}

fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    let r = load_config(&a.common, |c| {
        if let Some(n) = a.realizations {
            c.validate.realizations = n;
        }
    })?;
    let c = &r.config;
    let s_r = r.vehicle.s_r;
    let train = Dataset::concat("training", &load_role(&a.data, "training", true, s_r)?);
    let clean = Dataset::concat("validation", &load_role(&a.data, "validation", false, s_r)?);
    let models = load_models(&a.models)?;
    let run = ValidationRun {
        alpha: c.alpha,
        realizations: c.validate.realizations,
        pooling: c.validate.pooling,
        anchor: c.validate.anchor,
        seed: c.seed,
        width_scale: c.validate.width_scale,
    };
    let (output, failure) = match run_numerical_validation(&run, &models, &train, &clean, &r.noise, &r.vehicle) {
        Ok(o) => (o, None),
        Err(p) => (p.partial, Some(p.error)),
    };
    write_validation(&a.out, &output, c.validate.traces)?;
    write_json(
        &a.out.join("manifest.json"),
        &ReportManifest {
            config_hash: &r.hash,
            seed: c.seed,
            alpha: c.alpha,
            realizations: c.validate.realizations,
            pooling: c.validate.pooling,
            anchor: c.validate.anchor,
            models_manifest_sha256: file_sha256(&a.models.join("manifest.json"))?,
            data_manifest_sha256: file_sha256(&a.data.join("manifest.json"))?,
            complete: failure.is_none(),
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    for row in &output.rows {
        println!(
            "{:<3} {:<15} {:<22} PICP {:.4}  MPIW {:.4e}",
            row.target,
            row.method,
            row.report.kind.name(),
            row.report.picp,
            row.report.mpiw_abs
        );
    }
    if a.enforce {
        let bad = enforcement_failures(&output.rows, c.alpha);
        if !bad.is_empty() {
            return Err(Error::Enforcement(bad.join("; ")));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ExperimentManifest<'a> {
    config_hash: &'a str,
    seed: u64,
    alpha: f64,
    bands: &'a [f64],
    interpolation: &'a [f64],
    extrapolation: &'a [f64],
    data_manifest_sha256: String,
    all_checks_pass: bool,
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<()> {
    let r = load_config(&a.common, |_| {})?;
    let c = &r.config;
    let data = load_role(&a.data, "bands", true, r.vehicle.s_r)?;
    let splits = make_splits(data, &c.experiment.policy())?;
    let train = Dataset::concat("identification", splits.get(crate::datagen::splits::IDENTIFICATION));
    if train.is_empty() {
        return Err(Error::InvalidPolicy("no identification band data".into()));
    }
    let (models, statuses) = identify_all(&r.targets, &c.identify.methods, &c.identify, &train, c.seed);
    let data_sha = file_sha256(&a.data.join("manifest.json"))?;
    save_models(&a.models, &r, &models, &statuses, data_sha.clone())?;
    report_failures(&statuses)?;

    let out = run_interp_extrap(&models, &splits, c.alpha, &c.experiment)?;
    mkdir(&a.out)?;
    write_band_table(&a.out.join("bands.csv"), &out.rows)?;
    write_model_terms(&a.out.join("model_term.csv"), &out.model_terms)?;
    write_checks(&a.out.join("checks.csv"), &out.checks)?;
    write_json(
        &a.out.join("manifest.json"),
        &ExperimentManifest {
            config_hash: &r.hash,
            seed: c.seed,
            alpha: c.alpha,
            bands: &c.experiment.bands,
            interpolation: &c.experiment.interpolation,
            extrapolation: &c.experiment.extrapolation,
            data_manifest_sha256: data_sha,
            all_checks_pass: out.all_pass(),
        },
    )?;
    for row in &out.rows {
        println!(
            "{:<3} {:<15} MPIW id {:.4e}  interp {:.4e}  extrap {:.4e}",
            row.target,
            row.method.name(),
            row.mpiw[0],
            row.mpiw[1],
            row.mpiw[2]
        );
    }
    print!("{}", footer(&out.checks));
    if a.enforce && !out.all_pass() {
        let n = out.checks.iter().filter(|c| !c.pass).count();
        return Err(Error::Enforcement(format!("{n} band check(s) failed")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_exits_zero_and_bad_usage_exits_one() {
        assert_eq!(run(["quadpi", "--help"]), 0);
        assert_eq!(run(["quadpi", "frobnicate"]), 1);
        assert_eq!(run(["quadpi", "validate", "--realizations", "many"]), 1);
    }

    #[test]
    fn missing_config_file_exits_one() {
        assert_eq!(run(["quadpi", "generate", "--config", "/nonexistent/run.toml", "--out", "/tmp/x"]), 1);
    }

    #[test]
    fn enforcement_threshold() {
        use crate::metrics::{ContainmentKind, PIQualityReport};
        let row = |p: f64| ReportRow {
            target: "Fx".into(),
            method: "bootstrap".into(),
            report: PIQualityReport {
                picp: p,
                mpiw_abs: 1.0,
                mpiw_norm: None,
                n_samples: 10,
                kind: ContainmentKind::ModelVariation,
            },
        };
        assert!(enforcement_failures(&[row(0.95), row(1.0)], 0.05).is_empty());
        assert_eq!(enforcement_failures(&[row(0.9499), row(1.0)], 0.05).len(), 1);
    }
}
