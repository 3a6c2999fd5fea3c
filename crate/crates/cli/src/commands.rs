//! The `generate`, `run`, `verify` and `compare` subcommands.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use dproj_core::federated::{local_asvrg_with, local_sgd_with, local_svrg_with, LocalOptions};
use dproj_core::metrics::{complexity_to_eps, read_csv, ComparisonRow, ComplexityCounters, RunTrace};
use dproj_core::par;
use dproj_core::problems::{solve_reference_with, Instance, LcpProblem, ReferenceOptions};
use dproj_core::snapshot::{load_instance, save_problem};
use dproj_core::solvers::{restart_asvrg_with, run as run_solver, RestartOptions, RunOptions, Variant};
use dproj_core::verify::{run_suite, CheckOutcome, Level};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{relative_to, ExperimentConfig, SweepEntry};
use crate::CliError;

/// A loaded problem with its metadata.
pub struct LoadedProblem {
    pub instance: Instance,
    pub problem: LcpProblem,
    pub metadata: Value,
}

impl LoadedProblem {
    pub fn reference_value(&self) -> Option<f64> {
        self.metadata.get("reference_value").and_then(Value::as_f64)
    }
}

fn generate_problem(config: &ExperimentConfig) -> Result<LoadedProblem, CliError> {
    let spec = config.problem.as_ref().ok_or_else(|| CliError::Config(anyhow!("no [problem] table")))?;
    let instance = spec.build().map_err(|e| CliError::Config(anyhow!("problem generator {}: {e}", spec.name())))?;
    let problem = instance.problem().map_err(|e| CliError::Config(e.into()))?;
    let reference =
        solve_reference_with(&problem, &ReferenceOptions { tol: config.reference_tol, ..Default::default() })
            .map_err(|e| CliError::Runtime(anyhow!("reference solve: {e}")))?;
    let metadata = json!({
        "generator": spec.name(),
        "parameters": spec,
        "dim": problem.dim(),
        "n_atoms": problem.n_atoms(),
        "constraint_rank": problem.subspace().rank(),
        "workers": instance.federated().map(|f| f.n_workers()),
        "smoothness": problem.smoothness(),
        "strong_convexity": problem.strong_convexity(),
        "condition_number": problem.condition_number(),
        "reference_value": reference.value,
        "reference_tol": config.reference_tol,
        "reference_stationarity": reference.stationarity,
        "reference_feasibility": reference.feasibility,
    });
    Ok(LoadedProblem { instance, problem, metadata })
}

fn load_snapshot(path: &Path) -> Result<LoadedProblem, CliError> {
    let file =
        File::open(path).with_context(|| format!("opening snapshot {}", path.display())).map_err(CliError::Config)?;
    let (instance, metadata) = load_instance(BufReader::new(file))
        .map_err(|e| CliError::Config(anyhow!("snapshot {}: {e}", path.display())))?;
    let problem = instance.problem().map_err(|e| CliError::Config(e.into()))?;
    Ok(LoadedProblem { instance, problem, metadata })
}

/// Problem named by the config: its snapshot, or the generator run inline.
pub fn load_problem(config: &ExperimentConfig, config_path: &Path) -> Result<LoadedProblem, CliError> {
    match &config.snapshot {
        Some(p) => load_snapshot(&relative_to(config_path, p)),
        None => generate_problem(config),
    }
}

/// Generates the configured problem and writes its snapshot plus a JSON
/// copy of the metadata next to it. Returns the snapshot path.
pub fn generate(config_path: &Path, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let config = ExperimentConfig::load(config_path).map_err(CliError::Config)?;
    let loaded = generate_problem(&config)?;
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => config.resolve_output(config_path, None).join("problem.dproj"),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(e.into()))?;
    }
    let file =
        File::create(&path).with_context(|| format!("creating {}", path.display())).map_err(CliError::Runtime)?;
    save_problem(&loaded.problem, loaded.metadata.clone(), BufWriter::new(file))
        .map_err(|e| CliError::Runtime(e.into()))?;
    let meta = serde_json::to_string_pretty(&loaded.metadata).map_err(|e| CliError::Runtime(e.into()))?;
    fs::write(path.with_extension("json"), meta).map_err(|e| CliError::Runtime(e.into()))?;
    Ok(path)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntryResult {
    pub label: String,
    pub run_id: String,
    pub variant: String,
    pub local: bool,
    pub repetition: u32,
    pub seed: u64,
    pub csv: Option<String>,
    pub status: String,
    pub error: Option<String>,
    pub eta: Option<f64>,
    pub final_suboptimality: Option<f64>,
    pub counters: Option<ComplexityCounters>,
    pub comparison: Option<ComparisonRow>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub problem: Value,
    pub eps: f64,
    pub seed_offset: u64,
    pub entries: Vec<EntryResult>,
}

impl RunSummary {
    pub fn failed(&self) -> impl Iterator<Item = &EntryResult> {
        self.entries.iter().filter(|e| e.status != "ok")
    }
}

pub struct RunArgs<'a> {
    pub config: &'a Path,
    pub out: Option<&'a Path>,
    pub seed_offset: u64,
    pub eps: Option<f64>,
    pub threads: Option<usize>,
}

fn slug(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c.to_ascii_lowercase() } else { '_' })
        .collect();
    s.trim_matches('_').to_string()
}

struct Finished {
    trace: RunTrace,
    eta: Option<f64>,
    suboptimality: f64,
    counters: ComplexityCounters,
}

fn run_entry(loaded: &LoadedProblem, entry: &SweepEntry, offset: u64, run_id: &str) -> anyhow::Result<Finished> {
    let config = entry.solver_config(offset)?;
    let f_star = loaded.reference_value();
    if entry.local {
        let fed = loaded.instance.federated().ok_or_else(|| anyhow!("local runs need a federated problem"))?;
        let opts = LocalOptions {
            reference_value: f_star.map(|f| f / fed.n_workers() as f64),
            run_id: Some(run_id.to_string()),
            ..Default::default()
        };
        let out = match Variant::from(entry.variant) {
            Variant::DpSgd => local_sgd_with(fed, &config, opts),
            Variant::DpSvrg => local_svrg_with(fed, &config, opts),
            Variant::DpAsvrg => local_asvrg_with(fed, &config, opts),
        }?;
        return Ok(Finished {
            trace: out.trace,
            eta: Some(out.eta),
            suboptimality: out.suboptimality,
            counters: out.counters,
        });
    }
    if let Some(eps) = entry.restart_eps {
        let opts = RestartOptions {
            reference_value: f_star,
            stages: entry.stages,
            run_id: Some(run_id.to_string()),
            ..Default::default()
        };
        let out = restart_asvrg_with(&loaded.problem, &config, eps, opts)?;
        let last = out.suboptimality.last().copied().unwrap_or(f64::NAN);
        return Ok(Finished { trace: out.trace, eta: None, suboptimality: last, counters: out.counters });
    }
    let opts = RunOptions { reference_value: f_star, run_id: Some(run_id.to_string()), ..Default::default() };
    let out = run_solver(&loaded.problem, &config, opts)?;
    Ok(Finished { trace: out.trace, eta: Some(out.eta), suboptimality: out.suboptimality, counters: out.counters })
}

/// Runs every sweep entry for every repetition, writing one trace CSV per
/// run, `summary.json` and a `README.md` describing the columns. Failed
/// entries are recorded in the summary without stopping the sweep.
pub fn run(args: &RunArgs<'_>) -> Result<RunSummary, CliError> {
    let config = ExperimentConfig::load(args.config).map_err(CliError::Config)?;
    if config.sweep.is_empty() {
        return Err(CliError::EmptySweep);
    }
    let eps = args.eps.unwrap_or(config.eps);
    if !(eps > 0.0) {
        return Err(CliError::Config(anyhow!("eps must be positive")));
    }
    let loaded = load_problem(&config, args.config)?;
    if let Some(entry) = config.sweep.iter().find(|e| e.local && loaded.instance.federated().is_none()) {
        return Err(CliError::Config(anyhow!(
            "sweep entry {:?} is local but the problem is not federated",
            entry.label
        )));
    }
    if let Some(entry) = config.sweep.iter().find(|e| e.local && e.restart_eps.is_some()) {
        return Err(CliError::Config(anyhow!(
            "sweep entry {:?}: restarts are not available for local runs",
            entry.label
        )));
    }
    let out_dir = config.resolve_output(args.config, args.out);
    fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))
        .map_err(CliError::Runtime)?;

    let jobs: Vec<(&SweepEntry, u32)> =
        config.sweep.iter().flat_map(|e| (0..config.repetitions).map(move |r| (e, r))).collect();
    let threads = args.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let entries = par::map_capped(jobs.len(), threads, |j| {
        let (entry, rep) = jobs[j];
        let offset = args.seed_offset + rep as u64;
        let run_id = format!("{}__s{offset}", slug(&entry.label));
        let mut result = EntryResult {
            label: entry.label.clone(),
            run_id: run_id.clone(),
            variant: Variant::from(entry.variant).name().to_string(),
            local: entry.local,
            repetition: rep,
            seed: entry.seed.wrapping_add(offset),
            csv: None,
            status: "ok".into(),
            error: None,
            eta: None,
            final_suboptimality: None,
            counters: None,
            comparison: None,
        };
        let written = run_entry(&loaded, entry, offset, &run_id).and_then(|f| {
            let name = format!("{run_id}.csv");
            let file = File::create(out_dir.join(&name))?;
            f.trace.write_csv(BufWriter::new(file))?;
            result.comparison = Some(complexity_to_eps(&f.trace, eps));
            result.eta = f.eta;
            result.final_suboptimality = Some(f.suboptimality).filter(|v| v.is_finite());
            result.counters = Some(f.counters);
            Ok(name)
        });
        match written {
            Ok(name) => result.csv = Some(name),
            Err(e) => {
                result.status = "failed".into();
                result.error = Some(format!("{e:#}"));
            }
        }
        result
    });

    let summary = RunSummary { problem: loaded.metadata.clone(), eps, seed_offset: args.seed_offset, entries };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Runtime(e.into()))?;
    fs::write(out_dir.join("summary.json"), text).map_err(|e| CliError::Runtime(e.into()))?;
    fs::write(out_dir.join("README.md"), run_readme(&config, &summary)).map_err(|e| CliError::Runtime(e.into()))?;
    Ok(summary)
}

fn run_readme(config: &ExperimentConfig, summary: &RunSummary) -> String {
    let generator = summary.problem.get("generator").and_then(Value::as_str).unwrap_or("snapshot");
    let mut s = format!(
        "# Run output\n\nProblem: `{generator}`, reference value {}.\nTarget suboptimality for the comparison table: {:e}.\n\n",
        summary.problem.get("reference_value").map_or("unknown".to_string(), |v| v.to_string()),
        summary.eps
    );
    s.push_str("Each `<label>__s<offset>.csv` holds one run. Columns:\n\n");
    for (col, doc) in [
        ("run_id", "label slug and seed offset"),
        ("variant", "dp_sgd, dp_svrg or dp_asvrg"),
        ("stage", "completed stages"),
        ("iter", "completed iterations"),
        ("projections", "projection events so far"),
        ("gradients", "atom gradient evaluations so far"),
        ("comm_rounds", "synchronization rounds; zero for non-consensus problems"),
        ("suboptimality", "objective minus the reference optimum; for local runs, of the worker average"),
        ("feasibility", "constraint residual of the recorded point"),
        ("wall_ns", "elapsed wall time in nanoseconds"),
    ] {
        s.push_str(&format!("- `{col}`: {doc}\n"));
    }
    s.push_str(&format!(
        "\nRows are written at recorded projection events, at every stage end (snapshot) and once for the final output.\n\n\
         `summary.json` lists every run with its counters and the first row at or below the target. \
         {} sweep entries, {} repetitions.\n",
        config.sweep.len(),
        config.repetitions
    ));
    s
}

pub fn verify(level: Level) -> Vec<CheckOutcome> {
    run_suite(level)
}

/// Re-reads trace CSVs and recomputes the comparison rows.
pub fn compare(paths: &[PathBuf], eps: f64) -> Result<Vec<ComparisonRow>, CliError> {
    let mut rows = Vec::new();
    for p in paths {
        let file = File::open(p).with_context(|| format!("opening {}", p.display())).map_err(CliError::Runtime)?;
        let traces = read_csv(BufReader::new(file)).map_err(|e| CliError::Runtime(anyhow!("{}: {e}", p.display())))?;
        rows.extend(traces.iter().map(|t| complexity_to_eps(t, eps)));
    }
    Ok(rows)
}

/// Fixed-width table of comparison rows.
pub fn format_table(rows: &[ComparisonRow]) -> String {
    let cell = |v: Option<u64>| v.map_or("-".to_string(), |v| v.to_string());
    let mut s = format!(
        "{:<32} {:>12} {:>14} {:>12} {:>8} {:>12}\n",
        "run", "projections", "gradients", "iterations", "stages", "comm_rounds"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<32} {:>12} {:>14} {:>12} {:>8} {:>12}\n",
            r.label,
            cell(r.projections_to_eps),
            cell(r.gradients_to_eps),
            cell(r.iterations_to_eps),
            cell(r.stages_to_eps),
            cell(r.comm_rounds_to_eps)
        ));
    }
    s
}
