//! `flmtest simulate`: run the cells of a plan file, one CSV row per cell
//! and method. Cells already present in the output with identical settings
//! are not run again.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::Args;
use flmtest_core::simulation::ProcessConfig;
use flmtest_core::{run_experiment, ExperimentPlan, Method, SlopeSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{comment_block, read_to_string, write_atomic};
use crate::SCHEMA_VERSION;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Plan file (TOML).
    #[arg(long)]
    pub plan: PathBuf,
    /// Overrides the trial count of every cell.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Overrides the base seed; cell `i` uses `seed + i`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Results CSV; existing matching rows are kept.
    #[arg(long)]
    pub out: PathBuf,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_noise_sd() -> f64 {
    1.0
}

fn default_methods() -> Vec<Method> {
    vec![Method::P1, Method::P2]
}

fn default_replicates() -> usize {
    flmtest_core::adaptive::DEFAULT_REPLICATES
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanFile {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub seed: u64,
    pub trials: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    #[serde(default)]
    pub kbar: Option<usize>,
    #[serde(default)]
    pub process: ProcessConfig,
    pub cells: Vec<CellEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellEntry {
    pub name: String,
    pub n: usize,
    pub slope: SlopeSpec,
    #[serde(default)]
    pub trials: Option<usize>,
}

#[derive(Debug, Serialize)]
struct ResolvedCell<'a> {
    name: &'a str,
    #[serde(flatten)]
    plan: &'a ExperimentPlan,
}

#[derive(Debug, Serialize)]
struct ResolvedRun<'a> {
    schema_version: u32,
    command: &'static str,
    plan_file: &'a Path,
    cells: Vec<ResolvedCell<'a>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub cell: String,
    pub n: usize,
    pub family: String,
    pub b: Option<f64>,
    pub xi: Option<f64>,
    pub tau: Option<f64>,
    pub noise_sd: f64,
    pub alpha: f64,
    pub method: Method,
    pub trials: usize,
    pub rejections: usize,
    pub percent: f64,
    pub ci_half_width: f64,
    pub replicates: usize,
    pub seed: u64,
    pub kbar: Option<usize>,
    pub process: String,
    pub elapsed_seconds: f64,
}

impl ResultRow {
    /// True if the row was produced by `plan` for `method`.
    fn matches(&self, name: &str, plan: &ExperimentPlan, method: Method) -> bool {
        let (family, b, xi, tau) = slope_columns(&plan.slope);
        self.cell == name
            && self.method == method
            && self.n == plan.n
            && self.family == family
            && self.b == b
            && self.xi == xi
            && self.tau == tau
            && self.noise_sd == plan.noise_sd
            && self.alpha == plan.alpha
            && self.trials == plan.trials
            && self.replicates == plan.replicates
            && self.seed == plan.seed
            && self.kbar == plan.kbar
            && self.process == process_label(&plan.process)
    }
}

fn slope_columns(slope: &SlopeSpec) -> (String, Option<f64>, Option<f64>, Option<f64>) {
    match slope {
        SlopeSpec::Zero => ("zero".into(), None, None, None),
        SlopeSpec::ThetaKl { b, xi } => ("theta_kl".into(), Some(*b), Some(*xi), None),
        SlopeSpec::ThetaG { b, tau } => ("theta_g".into(), Some(*b), None, Some(*tau)),
        SlopeSpec::Custom { .. } => ("custom".into(), None, None, None),
    }
}

fn process_label(process: &ProcessConfig) -> String {
    match process {
        ProcessConfig::Brownian { grid_points, terms } => format!("brownian:{grid_points}:{terms}"),
        ProcessConfig::Custom { grid, eigenvalues, .. } => {
            format!("custom:{}:{}", grid.len(), eigenvalues.len())
        }
    }
}

/// Expands the plan file into one validated experiment per cell. All cell
/// errors are collected before returning.
pub fn resolve(file: &PlanFile, trials: Option<usize>, seed: Option<u64>) -> CliResult<Vec<(String, ExperimentPlan)>> {
    if file.schema_version != SCHEMA_VERSION {
        return Err(CliError::Input(format!(
            "unsupported plan schema_version {} (expected {SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    if file.cells.is_empty() {
        return Err(CliError::Input("plan has no cells".into()));
    }
    let process = file.process.build().map_err(|e| CliError::Input(format!("process: {e}")))?;
    let base = seed.unwrap_or(file.seed);
    let mut problems = Vec::new();
    let mut resolved = Vec::new();
    let mut seen = HashMap::new();
    for (i, cell) in file.cells.iter().enumerate() {
        if let Some(prev) = seen.insert(cell.name.clone(), i) {
            problems.push(format!("cell '{}' (#{}) duplicates cell #{}", cell.name, i + 1, prev + 1));
        }
        let plan = ExperimentPlan {
            process: file.process.clone(),
            slope: cell.slope.clone(),
            noise_sd: file.noise_sd,
            n: cell.n,
            alpha: file.alpha,
            methods: file.methods.clone(),
            trials: trials.or(cell.trials).unwrap_or(file.trials),
            replicates: file.replicates,
            seed: base.wrapping_add(i as u64),
            kbar: file.kbar,
        };
        let check = plan.validate().and_then(|_| plan.slope.evaluate(&process).map(|_| ()));
        if file.methods.contains(&Method::P2) && file.replicates < flmtest_core::adaptive::MIN_REPLICATES {
            problems.push(format!(
                "cell '{}': replicates must be at least {}",
                cell.name,
                flmtest_core::adaptive::MIN_REPLICATES
            ));
        }
        match check {
            Ok(()) => resolved.push((cell.name.clone(), plan)),
            Err(e) => problems.push(format!("cell '{}': {e}", cell.name)),
        }
    }
    if problems.is_empty() {
        Ok(resolved)
    } else {
        Err(CliError::Input(format!("invalid plan:\n  {}", problems.join("\n  "))))
    }
}

fn read_existing(path: &Path) -> CliResult<Vec<ResultRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::parse(path, e.to_string()))?;
    reader
        .deserialize()
        .collect::<Result<Vec<ResultRow>, _>>()
        .map_err(|e| CliError::parse(path, format!("cannot resume from existing results: {e}")))
}

fn render(header: &str, rows: &[ResultRow]) -> CliResult<Vec<u8>> {
    let mut out = header.as_bytes().to_vec();
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::Input(format!("cannot serialize result row: {e}")))?;
    }
    let body = writer
        .into_inner()
        .map_err(|e| CliError::Input(format!("cannot serialize results: {e}")))?;
    out.extend(body);
    Ok(out)
}

pub struct SimulateSummary {
    pub rows: Vec<ResultRow>,
    pub reused_cells: usize,
    pub run_cells: usize,
}

pub fn run(args: &SimulateArgs) -> CliResult<SimulateSummary> {
    let text = read_to_string(&args.plan)?;
    let file: PlanFile = toml::from_str(&text).map_err(|e| CliError::parse(&args.plan, e.to_string()))?;
    let cells = resolve(&file, args.trials, args.seed)?;

    let resolved = ResolvedRun {
        schema_version: SCHEMA_VERSION,
        command: "simulate",
        plan_file: &args.plan,
        cells: cells.iter().map(|(name, plan)| ResolvedCell { name, plan }).collect(),
    };
    let config = toml::to_string(&resolved).map_err(|e| CliError::Input(format!("cannot serialize plan: {e}")))?;
    let header = comment_block(&config);

    let existing = read_existing(&args.out)?;
    let mut rows: Vec<ResultRow> = Vec::new();
    let (mut reused_cells, mut run_cells) = (0, 0);
    for (idx, (name, plan)) in cells.iter().enumerate() {
        let previous: Option<Vec<ResultRow>> = plan
            .methods
            .iter()
            .map(|&m| existing.iter().find(|r| r.matches(name, plan, m)).cloned())
            .collect();
        if let Some(prev) = previous {
            eprintln!("cell '{name}': reusing existing results");
            rows.extend(prev);
            reused_cells += 1;
            continue;
        }
        eprintln!("cell '{name}': running {} trials (n = {})", plan.trials, plan.n);
        let result = run_experiment(plan)?;
        let (family, b, xi, tau) = slope_columns(&plan.slope);
        for o in &result.outcomes {
            rows.push(ResultRow {
                cell: name.clone(),
                n: plan.n,
                family: family.clone(),
                b,
                xi,
                tau,
                noise_sd: plan.noise_sd,
                alpha: plan.alpha,
                method: o.method,
                trials: o.trials,
                rejections: o.rejections,
                percent: o.percent,
                ci_half_width: o.ci_half_width,
                replicates: plan.replicates,
                seed: plan.seed,
                kbar: plan.kbar,
                process: process_label(&plan.process),
                elapsed_seconds: result.elapsed_seconds,
            });
        }
        run_cells += 1;
        // Rewrite after every cell so an interrupted run can resume; rows of
        // later cells from an earlier run are carried along.
        let later: Vec<&str> = cells[idx + 1..].iter().map(|(n, _)| n.as_str()).collect();
        let mut snapshot = rows.clone();
        snapshot.extend(existing.iter().filter(|r| later.contains(&r.cell.as_str())).cloned());
        write_atomic(&args.out, &render(&header, &snapshot)?)?;
    }
    write_atomic(&args.out, &render(&header, &rows)?)?;
    Ok(SimulateSummary {
        rows,
        reused_cells,
        run_cells,
    })
}
