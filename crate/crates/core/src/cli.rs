//! Batch front end: configuration, command dispatch and output files.
//!
//! A run is fully described by a [`RunConfig`]; command-line flags only
//! override fields of it. Every output file carries the effective
//! configuration, and no output depends on anything beyond that
//! configuration and the input file.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::assignment::MechanismSpec;
use crate::balance::{
    balance_test, seed_for_bandwidth, select_window, BalanceOptions, BalanceResult, PValueMethod, TestStatistic,
    DEFAULT_ALPHA, DEFAULT_DRAWS,
};
use crate::data::{assign_treatment, load_dataset, window_units, CovariateKind, CovariateSpec, Dataset, Direction, Schema};
use crate::error::{Error, Result};
use crate::estimation::{block_complier_ate, estimate_for_mechanism, BlockComponent, EstimationOptions};
use crate::report::{self, CsvTable};
use crate::sensitivity::sensitivity_grid;
use crate::simulation::{coverage_study, StudyConfig};
use crate::assignment::Mechanism;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Subcommand)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Scan the bandwidth grid and select the as-if randomized window.
    Windows,
    /// Estimate the local complier effect at a fixed bandwidth.
    Estimate,
    /// Cross every mechanism with every bandwidth.
    Sensitivity,
    /// Run a coverage and test-validity simulation.
    Simulate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Windows => "windows",
            Command::Estimate => "estimate",
            Command::Sensitivity => "sensitivity",
            Command::Simulate => "simulate",
        }
    }
}

/// Complete description of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub delimiter: char,
    pub schema: Option<Schema>,
    pub cutoff: f64,
    pub direction: Direction,
    pub mechanisms: Vec<MechanismSpec>,
    pub grid: Vec<f64>,
    /// Bandwidth for `estimate`.
    pub bandwidth: Option<f64>,
    pub statistic: TestStatistic,
    /// Level of the balance test.
    pub alpha: f64,
    pub draws: usize,
    pub seed: u64,
    pub method: PValueMethod,
    pub min_arm: usize,
    /// Covariates entering the balance test; all schema covariates when `None`.
    pub balance_covariates: Option<Vec<String>>,
    pub estimation: EstimationOptions,
    pub simulation: Option<StudyConfig>,
    pub out: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let b = BalanceOptions::default();
        Self {
            input: None,
            delimiter: ',',
            schema: None,
            cutoff: 0.0,
            direction: Direction::TreatedIfLe,
            mechanisms: vec![MechanismSpec::complete()],
            grid: Vec::new(),
            bandwidth: None,
            statistic: b.statistic,
            alpha: DEFAULT_ALPHA,
            draws: DEFAULT_DRAWS,
            seed: 0,
            method: b.method,
            min_arm: b.min_arm,
            balance_covariates: None,
            estimation: EstimationOptions::default(),
            simulation: None,
            out: PathBuf::from("out"),
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !self.cutoff.is_finite() {
            return Err(Error::Config("cutoff must be finite".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.draws == 0 {
            return Err(Error::Config("draws must be at least 1".into()));
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::Config("delimiter must be a single ASCII character".into()));
        }
        if self.formats.is_empty() {
            return Err(Error::Config("at least one output format is required".into()));
        }
        Ok(())
    }

    pub fn balance_options(&self) -> BalanceOptions {
        BalanceOptions {
            statistic: self.statistic,
            alpha: self.alpha,
            draws: self.draws,
            seed: self.seed,
            method: self.method,
            min_arm: self.min_arm,
            covariates: self.balance_covariates.clone(),
        }
    }

    fn schema(&self) -> Result<&Schema> {
        self.schema.as_ref().ok_or_else(|| Error::Config("no schema given (use --running etc. or the config file)".into()))
    }

    fn load(&self, schema: &Schema) -> Result<Dataset> {
        let path = self.input.as_ref().ok_or_else(|| Error::Config("no input file given".into()))?;
        let file = fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let data = load_dataset(file, schema, self.delimiter as u8)?;
        assign_treatment(&data, self.cutoff, self.direction)
    }
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub message: String,
}

/// Runs `command` and writes its outputs under `config.out`.
pub fn run(command: Command, config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let (tables, json, message) = match command {
        Command::Windows => run_windows(config)?,
        Command::Estimate => run_estimate(config)?,
        Command::Sensitivity => run_sensitivity(config)?,
        Command::Simulate => run_simulate(config)?,
    };
    fs::create_dir_all(&config.out)?;
    let header = report::config_header(command.name(), config);
    let mut files = Vec::new();
    if config.formats.contains(&OutputFormat::Csv) {
        for (name, table) in &tables {
            let path = config.out.join(format!("{name}.csv"));
            fs::write(&path, table.render(&header)?)?;
            files.push(path);
        }
    }
    if config.formats.contains(&OutputFormat::Json) {
        let path = config.out.join(format!("{}.json", command.name()));
        let doc = serde_json::json!({
            "command": command.name(),
            "config": config,
            "result": json,
        });
        fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
        files.push(path);
    }
    Ok(RunSummary { files, message })
}

type CommandOutput = (Vec<(String, CsvTable)>, serde_json::Value, String);

fn single_mechanism(config: &RunConfig) -> Result<&MechanismSpec> {
    match config.mechanisms.as_slice() {
        [one] => Ok(one),
        [] => Err(Error::Config("no mechanism given".into())),
        _ => Err(Error::Config("`windows` takes exactly one mechanism".into())),
    }
}

fn run_windows(config: &RunConfig) -> Result<CommandOutput> {
    let spec = single_mechanism(config)?;
    // Design stage: outcome and receipt columns are never loaded.
    let data = config.load(&config.schema()?.design_only())?;
    let selection = select_window(&data, spec, config.cutoff, &config.grid, &config.balance_options())?;
    let mut table = CsvTable::new(&["bandwidth", "p_min"]);
    for row in &selection.rows {
        table.push(vec![report::num(row.bandwidth), report::opt_num(row.p_min)]);
    }
    let message = match selection.selected {
        Some(h) => format!("selected bandwidth {h} under {}", selection.mechanism),
        None => format!("no plausible window under {}", selection.mechanism),
    };
    Ok((vec![("pcurve".into(), table)], serde_json::to_value(&selection)?, message))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub mechanism: String,
    pub h: f64,
    pub n_t: usize,
    pub n_c: usize,
    pub balance: Option<BalanceResult>,
    pub itt_y: f64,
    pub itt_w: f64,
    pub point: f64,
    pub variance: f64,
    pub ci: (f64, f64),
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<BlockComponent>>,
    pub warnings: Vec<String>,
}

/// Estimate and balance result for one mechanism at a fixed bandwidth.
pub fn estimate_report(
    data: &Dataset,
    spec: &MechanismSpec,
    cutoff: f64,
    h: f64,
    balance: &BalanceOptions,
    estimation: &EstimationOptions,
) -> Result<EstimateReport> {
    let window = window_units(data, cutoff, h)?;
    let mechanism = spec.resolve(data, &window)?;
    let mut warnings = Vec::new();
    let opts = BalanceOptions { seed: seed_for_bandwidth(balance.seed, h), ..balance.clone() };
    let balance = match balance_test(&window, data, &mechanism, &opts) {
        Ok(b) => Some(b),
        Err(e) => {
            warnings.push(format!("balance test failed: {e}"));
            None
        }
    };
    let (est, blocks) = match &mechanism {
        Mechanism::Block { blocking, .. } => {
            let b = block_complier_ate(&window, blocking, data, estimation)?;
            (b.pooled, Some(b.per_block))
        }
        _ => (estimate_for_mechanism(&window, data, &mechanism, estimation)?, None),
    };
    warnings.extend(est.warnings.iter().cloned());
    Ok(EstimateReport {
        mechanism: spec.label(),
        h,
        n_t: window.n_treated,
        n_c: window.n_control,
        balance,
        itt_y: est.itt.itt_y,
        itt_w: est.itt.itt_w,
        point: est.point,
        variance: est.variance,
        ci: est.ci,
        blocks,
        warnings,
    })
}

fn run_estimate(config: &RunConfig) -> Result<CommandOutput> {
    let h = config.bandwidth.ok_or_else(|| Error::Config("`estimate` needs a bandwidth".into()))?;
    if config.mechanisms.is_empty() {
        return Err(Error::Config("no mechanism given".into()));
    }
    let data = config.load(config.schema()?)?;
    let balance = config.balance_options();
    let reports = config
        .mechanisms
        .iter()
        .map(|spec| estimate_report(&data, spec, config.cutoff, h, &balance, &config.estimation))
        .collect::<Result<Vec<_>>>()?;
    let mut table = CsvTable::new(&[
        "mechanism", "h", "n_t", "n_c", "p_min", "itt_y", "itt_w", "point", "variance", "ci_lower", "ci_upper",
        "warnings",
    ]);
    for r in &reports {
        table.push(vec![
            r.mechanism.clone(),
            report::num(r.h),
            r.n_t.to_string(),
            r.n_c.to_string(),
            report::opt_num(r.balance.as_ref().map(|b| b.p_min)),
            report::num(r.itt_y),
            report::num(r.itt_w),
            report::num(r.point),
            report::num(r.variance),
            report::num(r.ci.0),
            report::num(r.ci.1),
            r.warnings.join("; "),
        ]);
    }
    let message = reports
        .iter()
        .map(|r| format!("{}: {:.4} ({:.4}, {:.4})", r.mechanism, r.point, r.ci.0, r.ci.1))
        .collect::<Vec<_>>()
        .join("\n");
    Ok((vec![("estimate".into(), table)], serde_json::to_value(&reports)?, message))
}

fn run_sensitivity(config: &RunConfig) -> Result<CommandOutput> {
    let data = config.load(config.schema()?)?;
    let rows = sensitivity_grid(
        &data,
        config.cutoff,
        &config.mechanisms,
        &config.grid,
        &config.balance_options(),
        &config.estimation,
    )?;
    let mut table = CsvTable::new(&[
        "mechanism", "h", "n", "n_t", "n_c", "p_min", "point", "ci_lower", "ci_upper", "flagged", "errors",
    ]);
    for r in &rows {
        table.push(vec![
            r.mechanism.clone(),
            report::num(r.bandwidth),
            r.n.to_string(),
            r.n_treated.to_string(),
            r.n_control.to_string(),
            report::opt_num(r.p_min),
            report::opt_num(r.point),
            report::opt_num(r.ci.map(|c| c.0)),
            report::opt_num(r.ci.map(|c| c.1)),
            r.flagged.to_string(),
            r.errors.join("; "),
        ]);
    }
    let flagged = rows.iter().filter(|r| r.flagged).count();
    let message = format!("{} cells, {flagged} flagged", rows.len());
    Ok((vec![("sensitivity".into(), table)], serde_json::to_value(&rows)?, message))
}

fn run_simulate(config: &RunConfig) -> Result<CommandOutput> {
    let study = config
        .simulation
        .as_ref()
        .ok_or_else(|| Error::Config("`simulate` needs a `simulation` section in the config".into()))?;
    let report = coverage_study(study)?;
    let mut table = CsvTable::new(&[
        "reps",
        "completed",
        "failures",
        "coverage",
        "mean_ci_width",
        "complete_coverage",
        "complete_mean_ci_width",
        "balance_rejection_rate",
    ]);
    table.push(vec![
        report.reps.to_string(),
        report.completed.to_string(),
        report.failures.to_string(),
        report::num(report.coverage),
        report::num(report.mean_ci_width),
        report::num(report.complete_coverage),
        report::num(report.complete_mean_ci_width),
        report::opt_num(report.balance_rejection_rate),
    ]);
    let message = format!("coverage {:.4} over {} replications", report.coverage, report.completed);
    Ok((vec![("simulate".into(), table)], serde_json::to_value(&report)?, message))
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("cannot parse grid `{text}`"));
    if let Some((start, rest)) = text.split_once(':') {
        let (stop, step) = rest.split_once(':').ok_or_else(bad)?;
        let (start, stop, step): (f64, f64, f64) =
            (start.trim().parse().map_err(|_| bad())?, stop.trim().parse().map_err(|_| bad())?, step.trim().parse().map_err(|_| bad())?);
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=count).map(|k| start + k as f64 * step).collect());
    }
    text.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect()
}

fn parse_covariates(text: &str) -> Result<Vec<CovariateSpec>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (name, kind) = item.split_once(':').unwrap_or((item, "numeric"));
            let kind = match kind.trim() {
                "numeric" | "num" => CovariateKind::Numeric,
                "categorical" | "cat" => CovariateKind::Categorical,
                other => return Err(Error::Config(format!("unknown covariate kind `{other}`"))),
            };
            Ok(CovariateSpec { name: name.trim().to_string(), kind })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MechanismKind {
    Complete,
    Block,
    Bernoulli,
}

/// Flags shared by all commands; each overrides the matching config field.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON config file.
    #[arg(global = true, long)]
    pub config: Option<PathBuf>,
    #[arg(global = true, long)]
    pub input: Option<PathBuf>,
    #[arg(global = true, long)]
    pub delimiter: Option<char>,
    /// Running-variable column.
    #[arg(global = true, long)]
    pub running: Option<String>,
    #[arg(global = true, long)]
    pub outcome: Option<String>,
    /// Treatment-receipt column.
    #[arg(global = true, long)]
    pub receipt: Option<String>,
    /// Covariates as `name:kind,...` with kind numeric or categorical.
    #[arg(global = true, long)]
    pub covariates: Option<String>,
    #[arg(global = true, long, allow_hyphen_values = true)]
    pub cutoff: Option<f64>,
    /// treated_if_le or treated_if_gt.
    #[arg(global = true, long)]
    pub direction: Option<Direction>,
    /// Replaces the configured mechanisms (repeatable).
    #[arg(global = true, long, value_enum)]
    pub mechanism: Vec<MechanismKind>,
    /// Blocking covariates for `--mechanism block`, comma-separated.
    #[arg(global = true, long)]
    pub blocks: Option<String>,
    /// `start:stop:step` or a comma-separated list.
    #[arg(global = true, long)]
    pub grid: Option<String>,
    #[arg(global = true, long)]
    pub bandwidth: Option<f64>,
    #[arg(global = true, long)]
    pub statistic: Option<TestStatistic>,
    #[arg(global = true, long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(global = true, long)]
    pub alpha: Option<f64>,
    #[arg(global = true, long)]
    pub draws: Option<usize>,
    #[arg(global = true, long)]
    pub seed: Option<u64>,
    #[arg(global = true, long)]
    pub out: Option<PathBuf>,
    #[arg(global = true, long, value_enum)]
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    MonteCarlo,
    PaperExact,
    Exact,
}

impl Overrides {
    /// Loads the config file (if any) and applies the flags on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                RunConfig::from_json(&text)?
            }
            None => RunConfig::default(),
        };
        self.apply(&mut config)?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&self, config: &mut RunConfig) -> Result<()> {
        if let Some(v) = &self.input {
            config.input = Some(v.clone());
        }
        if let Some(v) = self.delimiter {
            config.delimiter = v;
        }
        if self.running.is_some() || self.outcome.is_some() || self.receipt.is_some() || self.covariates.is_some() {
            let mut schema = match (&config.schema, &self.running) {
                (_, Some(r)) => Schema { running: r.clone(), ..config.schema.clone().unwrap_or_else(|| Schema::new(r)) },
                (Some(s), None) => s.clone(),
                (None, None) => return Err(Error::Config("--running is required to build a schema".into())),
            };
            if let Some(v) = &self.outcome {
                schema.outcome = Some(v.clone());
            }
            if let Some(v) = &self.receipt {
                schema.receipt = Some(v.clone());
            }
            if let Some(v) = &self.covariates {
                schema.covariates = parse_covariates(v)?;
            }
            config.schema = Some(schema);
        }
        if let Some(v) = self.cutoff {
            config.cutoff = v;
        }
        if let Some(v) = self.direction {
            config.direction = v;
        }
        let blocks: Vec<String> = self
            .blocks
            .as_deref()
            .map(|b| b.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default();
        if !self.mechanism.is_empty() {
            config.mechanisms = self
                .mechanism
                .iter()
                .map(|kind| match kind {
                    MechanismKind::Complete => Ok(MechanismSpec::complete()),
                    MechanismKind::Block if blocks.is_empty() => {
                        Err(Error::Config("--mechanism block needs --blocks".into()))
                    }
                    MechanismKind::Block => Ok(MechanismSpec::block(blocks.clone())),
                    MechanismKind::Bernoulli => Ok(MechanismSpec::bernoulli_fitted(Vec::<String>::new(), false)),
                })
                .collect::<Result<_>>()?;
        } else if !blocks.is_empty() {
            config.mechanisms.push(MechanismSpec::block(blocks));
        }
        if let Some(v) = &self.grid {
            config.grid = parse_grid(v)?;
        }
        if let Some(v) = self.bandwidth {
            config.bandwidth = Some(v);
        }
        if let Some(v) = self.statistic {
            config.statistic = v;
        }
        if let Some(v) = self.method {
            config.method = match v {
                MethodArg::MonteCarlo => PValueMethod::MonteCarlo,
                MethodArg::PaperExact => PValueMethod::PaperExact,
                MethodArg::Exact => PValueMethod::Exact,
            };
        }
        if let Some(v) = self.alpha {
            config.alpha = v;
        }
        if let Some(v) = self.draws {
            config.draws = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = &self.out {
            config.out = v.clone();
        }
        if let Some(v) = self.format {
            config.formats = vec![v];
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "localrd", version, about = "Local randomization analysis of regression discontinuity designs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = cli.overrides.resolve().and_then(|config| run(cli.command, &config));
    match outcome {
        Ok(summary) => {
            println!("{}", summary.message);
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.module());
            1
        }
    }
}

/// Writes `config` as pretty JSON, e.g. to seed a config file.
pub fn write_config(config: &RunConfig, path: &Path) -> Result<()> {
    fs::write(path, config.to_json() + "\n")?;
    Ok(())
}
