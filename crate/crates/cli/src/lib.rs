//! Scenario-driven front end for `trajcomplete`.
//!
//! A scenario file names one task and the sections it needs. Running it
//! writes `report.txt`, `report.json` and the task's CSV into
//! `<output-dir>/<scenario name>/`.

pub mod catalog;
pub mod error;
pub mod expr;
pub mod report;
pub mod scenario;
pub mod tasks;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

pub use error::{CliError, Result};
pub use report::Report;
pub use scenario::{Model, Scenario, Task};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub output_dir: PathBuf,
    /// `dotted.key=value` edits applied before validation.
    pub overrides: Vec<String>,
    pub echo_config: bool,
    pub jobs: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            output_dir: PathBuf::from("out"),
            overrides: Vec::new(),
            echo_config: false,
            jobs: 1,
        }
    }
}

#[derive(Debug)]
pub struct RunSummary {
    pub name: String,
    pub dir: PathBuf,
    pub report: Report,
    pub elapsed: Duration,
}

/// Expands directories into their `.scn` files, sorted by path.
pub fn collect_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries = fs::read_dir(p).map_err(|source| CliError::Io { path: p.clone(), source })?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| q.extension().is_some_and(|x| x == "scn"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn load_model(path: &Path, overrides: &[String]) -> Result<Model> {
    Scenario::load(path, overrides)?.validate()
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<()> {
    fs::write(&path, bytes).map_err(|source| CliError::Io { path, source })
}

/// Runs a validated model and writes its files.
pub fn run_model(model: &Model, output_dir: &Path, echo_config: bool) -> Result<RunSummary> {
    let start = Instant::now();
    let out = tasks::execute(model)?;
    let dir = output_dir.join(&model.name);
    fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    let stem = &model.scenario.output.report;
    write(dir.join(format!("{stem}.txt")), out.report.to_text().as_bytes())?;
    write(dir.join(format!("{stem}.json")), out.report.to_json().as_bytes())?;
    for a in &out.artifacts {
        write(dir.join(&a.name), &a.bytes)?;
    }
    if echo_config {
        write(dir.join(format!("{}.scn", model.name)), model.scenario.to_text().as_bytes())?;
    }
    Ok(RunSummary {
        name: model.name.clone(),
        dir,
        report: out.report,
        elapsed: start.elapsed(),
    })
}

pub fn run_file(path: &Path, opts: &RunOptions) -> Result<RunSummary> {
    let model = load_model(path, &opts.overrides)?;
    run_model(&model, &opts.output_dir, opts.echo_config)
}

/// Validates every input before running any, then runs them on `opts.jobs`
/// threads. Results come back in input order.
pub fn run_batch(paths: &[PathBuf], opts: &RunOptions) -> Result<Vec<Result<RunSummary>>> {
    let inputs = collect_inputs(paths)?;
    if inputs.is_empty() {
        return Err(CliError::Usage("no scenario files given".into()));
    }
    let models: Vec<Model> = inputs
        .iter()
        .map(|p| load_model(p, &opts.overrides))
        .collect::<Result<_>>()?;
    let mut names: Vec<&str> = models.iter().map(|m| m.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(CliError::validation("name", format!("two scenarios are named '{}'", w[0])));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(pool.install(|| {
        models
            .par_iter()
            .map(|m| run_model(m, &opts.output_dir, opts.echo_config))
            .collect()
    }))
}

/// Parses and validates without computing anything.
pub fn validate_files(paths: &[PathBuf], overrides: &[String]) -> Result<Vec<(PathBuf, Result<String>)>> {
    let inputs = collect_inputs(paths)?;
    Ok(inputs
        .into_iter()
        .map(|p| {
            let r = load_model(&p, overrides).map(|m| format!("{} ({})", m.name, m.task.name()));
            (p, r)
        })
        .collect())
}
