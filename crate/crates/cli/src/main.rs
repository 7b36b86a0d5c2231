//! `realopt`: valuation engines and sensitivity studies for the option to
//! acquire a project, driven by JSON scenario configs.
//!
//! Exit codes: 0 on success, 2 for configuration problems (with field-path
//! diagnostics, before any output is written), 3 for numeric failures such
//! as an unbracketed IRR.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{ConfigIssue, EngineKind, ScenarioConfig, SCENARIO_SCHEMA};
use realopt_core::study::{run_study, StudyId, SweepSpec};
use realopt_core::{
    lsm_value, mad_valuation, npv_paths, sdcf_valuation, simulate_paths, solve_irr,
    CompoundingMode, Error as CoreError, LsmConfig,
};

#[derive(Parser)]
#[command(name = "realopt", version, about = "Real-option valuation on subjectively discounted cash flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Overrides {
    /// Simulation paths
    #[arg(long)]
    paths: Option<usize>,
    /// Grid steps over the horizon
    #[arg(long)]
    steps: Option<usize>,
    /// Master RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Compounding mode: continuous | discrete-annual
    #[arg(long)]
    mode: Option<String>,
    /// Directory for output files
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Value a scenario with the engine selected in the config
    Value {
        /// Scenario config (JSON)
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Back out the internal rate of return from the observed market value
    Irr {
        /// Scenario config (JSON); uses cash_flow, horizon, mode and
        /// rates.market_value
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a sensitivity study and write its grid, verdicts and tables
    Sweep {
        /// Study id: disagreement | npv-mitigation | boundary | volatility |
        /// hedging | idiosyncratic
        #[arg(long)]
        study: String,
        /// Optional overrides file (JSON): paths, steps, seed, axes
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the scenario config JSON schema
    Schema,
}

enum CliError {
    Config(Vec<ConfigIssue>),
    Numeric(CoreError),
    Io(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter { .. } => CliError::Config(vec![ConfigIssue {
                path: "(derived)".into(),
                message: e.to_string(),
            }]),
            other => CliError::Numeric(other),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Value { config, overrides } => cmd_value(&config, &overrides),
        Command::Irr { config, overrides } => cmd_irr(&config, &overrides),
        Command::Sweep { study, config, overrides } => cmd_sweep(&study, config.as_deref(), &overrides),
        Command::Schema => {
            print!("{SCENARIO_SCHEMA}");
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(issues)) => {
            for issue in &issues {
                eprintln!("config error: {issue}");
            }
            ExitCode::from(2)
        }
        Err(CliError::Numeric(e)) => {
            eprintln!("numeric failure: {e}");
            ExitCode::from(3)
        }
        Err(CliError::Io(e)) => {
            eprintln!("io error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg: ScenarioConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::Config(vec![ConfigIssue {
            path: "(document)".into(),
            message: e.to_string(),
        }])
    })?;
    if let Some(p) = overrides.paths {
        cfg.paths = p;
    }
    if let Some(s) = overrides.steps {
        cfg.horizon.steps = s;
    }
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if let Some(mode) = &overrides.mode {
        cfg.mode = parse_mode(mode)?;
    }
    if let Some(dir) = &overrides.out_dir {
        cfg.out_dir = Some(dir.display().to_string());
    }
    let issues = cfg.validate();
    if !issues.is_empty() {
        return Err(CliError::Config(issues));
    }
    Ok(cfg)
}

fn parse_mode(s: &str) -> Result<CompoundingMode, CliError> {
    match s {
        "continuous" => Ok(CompoundingMode::Continuous),
        "discrete-annual" => Ok(CompoundingMode::DiscreteAnnual),
        other => Err(CliError::Config(vec![ConfigIssue {
            path: "mode".into(),
            message: format!("unknown mode `{other}` (continuous | discrete-annual)"),
        }])),
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serialized valuation results; optional sections per engine.
#[derive(Serialize)]
struct ValuationReport {
    engine: String,
    option_value: f64,
    value_of_delay: f64,
    npv0: f64,
    immediate_payoff: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    standard_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exercise_probability: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    boundary: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    calibration_step_vols: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    calibration_dividend_yields: Option<Vec<f64>>,
    seed: u64,
    paths: usize,
}

fn cmd_value(path: &Path, overrides: &Overrides) -> Result<(), CliError> {
    let cfg = load_config(path, overrides)?;
    let scenario = cfg.resolve()?;
    let years = scenario.horizon.steps;

    // (report, files to write)
    let mut files: Vec<(String, String)> = Vec::new();
    let report = match scenario.engine {
        EngineKind::BinomialSdcf => {
            let realopt_core::CashFlowSpec::SingleStream { initial, drift, vol } = scenario.spec
            else {
                unreachable!("validated")
            };
            let v = sdcf_valuation(initial, drift, vol, &scenario.rates, years)?;
            files.push(("profit_lattice.csv".into(), v.profit.csv_string()));
            files.push(("investor_value_lattice.csv".into(), v.lattices.investor_value.csv_string()));
            files.push(("market_value_lattice.csv".into(), v.lattices.market_value.csv_string()));
            files.push(("npv_time0_lattice.csv".into(), v.lattices.npv_time0.csv_string()));
            files.push(("option_value_lattice.csv".into(), v.option_lattice.csv_string()));
            ValuationReport {
                engine: scenario.engine.as_str().into(),
                option_value: v.option_value,
                value_of_delay: v.value_of_delay,
                npv0: v.npv0,
                immediate_payoff: v.npv0.max(0.0),
                standard_error: None,
                exercise_probability: None,
                boundary: None,
                calibration_step_vols: None,
                calibration_dividend_yields: None,
                seed: scenario.seed,
                paths: scenario.paths,
            }
        }
        EngineKind::BinomialMad => {
            let realopt_core::CashFlowSpec::SingleStream { initial, drift, vol } = scenario.spec
            else {
                unreachable!("validated")
            };
            let q0 = scenario.market_value.expect("validated");
            let p0 = scenario
                .spec
                .present_value(scenario.rates.investor, scenario.mode, 0.0, &scenario.horizon)?;
            let v = mad_valuation(
                initial,
                drift,
                vol,
                scenario.rates.investor,
                q0,
                p0,
                years,
                scenario.paths,
                scenario.seed,
            )?;
            if v.calibration.undersized {
                eprintln!("warning: calibration undersized ({} paths < 1000)", scenario.paths);
            }
            files.push(("mad_value_lattice.csv".into(), v.value_lattice.csv_string()));
            files.push(("option_value_lattice.csv".into(), v.option_lattice.csv_string()));
            ValuationReport {
                engine: scenario.engine.as_str().into(),
                option_value: v.option_value,
                value_of_delay: v.value_of_delay,
                npv0: v.npv0,
                immediate_payoff: v.npv0.max(0.0),
                standard_error: None,
                exercise_probability: None,
                boundary: None,
                calibration_step_vols: Some(v.calibration.step_vols.clone()),
                calibration_dividend_yields: Some(v.calibration.dividend_yields.clone()),
                seed: scenario.seed,
                paths: scenario.paths,
            }
        }
        EngineKind::Lsm => {
            let paths = simulate_paths(&scenario.spec, &scenario.horizon, scenario.paths, scenario.seed)?;
            let npv = npv_paths(&paths, &scenario.rates, scenario.spec.drifts());
            let res = lsm_value(&npv, &LsmConfig::default())?;

            let mut phi_csv = String::from("t,probability\n");
            for (k, p) in res.exercise_prob.iter().enumerate() {
                phi_csv.push_str(&format!("{},{}\n", fmt17(scenario.horizon.time(k)), fmt17(*p)));
            }
            files.push(("exercise_probability.csv".into(), phi_csv));
            files.push(("boundary.csv".into(), res.boundary.csv_string()));
            let mut times_csv = String::from("path,exercise_step\n");
            for (p, step) in res.exercise_step.iter().enumerate() {
                match step {
                    Some(s) => times_csv.push_str(&format!("{p},{s}\n")),
                    None => times_csv.push_str(&format!("{p},\n")),
                }
            }
            files.push(("exercise_times.csv".into(), times_csv));

            println!("exercise_probability:");
            for (k, p) in res.exercise_prob.iter().enumerate() {
                println!("  t={} {}", scenario.horizon.time(k), fmt17(*p));
            }
            println!("boundary (t, lower, upper):");
            for e in &res.boundary.entries {
                println!(
                    "  t={} {} {}",
                    e.time_index,
                    e.lower.map(fmt17).unwrap_or_else(|| "-".into()),
                    e.upper.map(fmt17).unwrap_or_else(|| "-".into()),
                );
            }
            ValuationReport {
                engine: scenario.engine.as_str().into(),
                option_value: res.option_value,
                value_of_delay: res.value_of_delay,
                npv0: res.npv0,
                immediate_payoff: res.immediate_payoff,
                standard_error: Some(res.standard_error),
                exercise_probability: Some(res.exercise_prob.clone()),
                boundary: Some(serde_json::to_value(&res.boundary).expect("serializable")),
                calibration_step_vols: None,
                calibration_dividend_yields: None,
                seed: scenario.seed,
                paths: scenario.paths,
            }
        }
    };

    println!("engine = {}", report.engine);
    println!("option_value = {}", fmt17(report.option_value));
    println!("value_of_delay = {}", fmt17(report.value_of_delay));
    println!("npv0 = {}", fmt17(report.npv0));

    if let Some(dir) = &cfg.out_dir {
        let dir = Path::new(dir);
        files.push((
            "report.json".into(),
            serde_json::to_string_pretty(&report).expect("serializable") + "\n",
        ));
        write_all(dir, &files)?;
        println!("wrote {} files to {}", files.len(), dir.display());
    }
    Ok(())
}

fn cmd_irr(path: &Path, overrides: &Overrides) -> Result<(), CliError> {
    let cfg = load_config(path, overrides)?;
    let market_value = cfg
        .rates
        .as_ref()
        .and_then(|r| r.market_value)
        .ok_or_else(|| {
            CliError::Config(vec![ConfigIssue {
                path: "rates.market_value".into(),
                message: "the irr command needs the observed market value".into(),
            }])
        })?;
    let scenario = cfg.resolve()?;
    let rate = solve_irr(&scenario.spec, market_value, scenario.mode, &scenario.horizon)?;
    println!("irr = {}", fmt17(rate));
    Ok(())
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepOverridesFile {
    #[serde(default)]
    paths: Option<usize>,
    #[serde(default)]
    steps: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    axes: Vec<AxisOverride>,
    #[serde(default)]
    out_dir: Option<String>,
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct AxisOverride {
    name: String,
    min: f64,
    max: f64,
    count: usize,
}

fn cmd_sweep(study: &str, config: Option<&Path>, overrides: &Overrides) -> Result<(), CliError> {
    let id = StudyId::parse(study).map_err(|_| {
        CliError::Config(vec![ConfigIssue {
            path: "study".into(),
            message: format!(
                "unknown study `{study}`; one of {}",
                StudyId::ALL.map(|s| s.as_str()).join(", ")
            ),
        }])
    })?;
    let mut spec = SweepSpec::default_for(id);
    let mut out_dir: Option<String> = overrides.out_dir.as_ref().map(|d| d.display().to_string());

    if let Some(path) = config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        let file: SweepOverridesFile = serde_json::from_str(&text).map_err(|e| {
            CliError::Config(vec![ConfigIssue {
                path: "(document)".into(),
                message: e.to_string(),
            }])
        })?;
        if let Some(p) = file.paths {
            spec.n_paths = p;
        }
        if let Some(s) = file.steps {
            spec.steps = s;
        }
        if let Some(s) = file.seed {
            spec.seed = s;
        }
        for (i, axis) in file.axes.iter().enumerate() {
            spec.override_axis(&axis.name, axis.min, axis.max, axis.count)
                .map_err(|e| {
                    CliError::Config(vec![ConfigIssue {
                        path: format!("axes[{i}].name"),
                        message: e.to_string(),
                    }])
                })?;
        }
        if out_dir.is_none() {
            out_dir = file.out_dir;
        }
    }
    if let Some(p) = overrides.paths {
        spec.n_paths = p;
    }
    if let Some(s) = overrides.steps {
        spec.steps = s;
    }
    if let Some(s) = overrides.seed {
        spec.seed = s;
    }
    if spec.n_paths < 2 {
        return Err(CliError::Config(vec![ConfigIssue {
            path: "paths".into(),
            message: "must be at least 2".into(),
        }]));
    }

    let report = run_study(&spec)?;
    for v in &report.verdicts {
        println!(
            "{} {}: margin={} se={} {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.property,
            fmt17(v.margin),
            fmt17(v.standard_error),
            v.detail
        );
    }

    let dir_name = out_dir.unwrap_or_else(|| format!("study_{}", id.as_str()));
    let dir = Path::new(&dir_name);
    let mut files = vec![
        ("grid.csv".to_string(), report.grid_csv()),
        ("verdicts.json".to_string(), report.verdicts_json()),
    ];
    for table in &report.extra_tables {
        files.push((table.name.clone(), table.csv.clone()));
    }
    write_all(dir, &files)?;
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}

fn write_all(dir: &Path, files: &[(String, String)]) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    for (name, contents) in files {
        let path = dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}
