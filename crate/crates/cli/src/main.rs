//! `formsim`: run, certify, sweep and plot spoofed formation scenarios.

mod config;
mod error;
mod plot;
mod report;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use formation_core::attack::SelectorMask;
use formation_core::dynamics::{closed_loop_matrix, StepParams};
use formation_core::experiment::{MethodReport, Scenario};
use formation_core::stability::{certify, empirical_decrease_check, error_system, solve_discrete_lyapunov};
use serde::Serialize;

use config::{FileConfig, ManifestSection};
use error::CliError;
use report::MethodJson;

const SUMMARY_FILE: &str = "summary.csv";
const TRAJECTORY_FILE: &str = "trajectory.csv";
const MANIFEST_FILE: &str = "manifest.toml";
const SWEEP_FILE: &str = "sweep.csv";
const LINE_SVG: &str = "v_trajectory.svg";
const BOX_SVG: &str = "auc_box.svg";
const DEFAULT_OUT: &str = "formsim-out";
const SWEEP_PARAMS: [&str; 6] = ["gamma", "M", "kappa", "huber_c", "wmsr_F", "dt"];

#[derive(Debug, Parser)]
#[command(name = "formsim", version, about = "Formation control under broadcast spoofing")]
struct Cli {
    /// Base seed for the Monte Carlo trials (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of Monte Carlo trials (overrides the config).
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Add every agent's coordinates to the trajectory CSV.
    #[arg(long, global = true)]
    full_state: bool,
    /// Print machine-readable JSON instead of a table.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the Monte Carlo experiment described by a config file.
    Run { config: PathBuf },
    /// Lyapunov certificate for the configured closed loop.
    Certify {
        config: PathBuf,
        /// Hallucination gain to certify (defaults to the config's).
        #[arg(long)]
        gamma: Option<f64>,
        /// Random error states for the empirical decrease check.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Radius of the sampled error ball.
        #[arg(long, default_value_t = 0.05)]
        radius: f64,
    },
    /// One Monte Carlo per parameter value.
    Sweep {
        config: PathBuf,
        /// One of gamma, M, kappa, huber_c, wmsr_F, dt.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
    /// SVG charts from a summary CSV and its sibling trajectory CSV.
    Plot {
        summary: PathBuf,
        /// Trajectory CSV (defaults to trajectory.csv next to the summary).
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run { config } => cmd_run(cli, config),
        Command::Certify {
            config,
            gamma,
            samples,
            radius,
        } => cmd_certify(cli, config, *gamma, *samples, *radius),
        Command::Sweep { config, param, values } => cmd_sweep(cli, config, param, values),
        Command::Plot { summary, trajectory } => cmd_plot(cli, summary, trajectory.as_deref()),
    }
}

fn load(cli: &Cli, path: &Path) -> Result<FileConfig, CliError> {
    let mut cfg = FileConfig::load(path)?;
    if let Some(seed) = cli.seed {
        if i64::try_from(seed).is_err() {
            return Err(CliError::Usage(format!("--seed must be at most {}", i64::MAX)));
        }
        cfg.monte_carlo.base_seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.monte_carlo.trials = trials;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<PathBuf, CliError> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn stdout_json(value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    println!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct RunJson {
    methods: Vec<MethodJson>,
    outputs: Vec<String>,
}

fn cmd_run(cli: &Cli, path: &Path) -> Result<(), CliError> {
    let mut cfg = load(cli, path)?;
    let resolved = cfg.resolve()?;
    let scenario = Scenario::new(resolved.scenario)?;
    let full_state = cli.full_state || cfg.manifest.as_ref().is_some_and(|m| m.full_state);
    let reports = scenario.monte_carlo(&resolved.methods, full_state)?;

    let dir = out_dir(cli)?;
    let summary = dir.join(SUMMARY_FILE);
    let trajectory = dir.join(TRAJECTORY_FILE);
    let manifest = dir.join(MANIFEST_FILE);
    report::write_summary(&summary, &reports)?;
    report::write_trajectory(&trajectory, &reports, scenario.agent_count(), scenario.dim())?;
    cfg.manifest = Some(ManifestSection {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        base_seed: cfg.monte_carlo.base_seed,
        full_state,
        outputs: vec![SUMMARY_FILE.into(), TRAJECTORY_FILE.into(), MANIFEST_FILE.into()],
    });
    std::fs::write(&manifest, cfg.to_toml())?;

    let outputs: Vec<String> = [summary, trajectory, manifest]
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    if cli.json {
        stdout_json(&RunJson {
            methods: reports.iter().map(MethodJson::from).collect(),
            outputs,
        })
    } else {
        let mut out = std::io::stdout().lock();
        report::print_table(&mut out, &reports)?;
        for p in &outputs {
            writeln!(out, "wrote {p}")?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct DecreaseJson {
    samples: usize,
    radius: f64,
    fitted_c: f64,
    worst_ratio: f64,
}

#[derive(Serialize)]
struct CertifyJson {
    spectral_radius: f64,
    alpha: f64,
    lambda_max_qe: f64,
    threshold: f64,
    gamma: f64,
    gamma_sq: f64,
    verdict: &'static str,
    margin: f64,
    r_e: f64,
    decrease_check: Option<DecreaseJson>,
}

fn certificate(cfg: &FileConfig, gamma: f64, samples: usize, radius: f64) -> Result<CertifyJson, CliError> {
    let resolved = cfg.resolve()?;
    let scenario = Scenario::new(resolved.scenario)?;
    let (n_agents, dim) = (scenario.agent_count(), scenario.dim());
    let gamma_full = closed_loop_matrix(&scenario.graph, dim, &StepParams::new(scenario.params.dt)?);
    let sys = error_system(&gamma_full, n_agents, dim)?;
    let (q, alpha) = solve_discrete_lyapunov(&sys.gamma_e)?;
    let cert = certify(gamma, &q, alpha);
    let decrease_check = if cert.stable && samples > 0 {
        let params = scenario.config.mitigation.sosh.with_gamma(gamma)?;
        let attacked = SelectorMask::new(scenario.config.attacks.iter().map(|a| a.target));
        let seed = scenario.config.base_seed;
        let r = empirical_decrease_check(&sys, &gamma_full, &q, alpha, &attacked, &params, dim, samples, radius, seed)?;
        Some(DecreaseJson {
            samples: r.samples,
            radius: r.radius,
            fitted_c: r.fitted_c,
            worst_ratio: r.worst_ratio,
        })
    } else {
        None
    };
    Ok(CertifyJson {
        spectral_radius: sys.spectral_radius,
        alpha,
        lambda_max_qe: cert.lambda_max_qe,
        threshold: cert.threshold,
        gamma,
        gamma_sq: gamma * gamma,
        verdict: if cert.stable { "stable" } else { "unstable" },
        margin: cert.margin,
        r_e: cert.r_e,
        decrease_check,
    })
}

fn cmd_certify(cli: &Cli, path: &Path, gamma: Option<f64>, samples: usize, radius: f64) -> Result<(), CliError> {
    let cfg = load(cli, path)?;
    let gamma = gamma.unwrap_or(cfg.mitigation.gamma);
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(CliError::Usage(format!("--gamma must be positive, got {gamma}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(CliError::Usage(format!("--radius must be positive, got {radius}")));
    }
    let c = certificate(&cfg, gamma, samples, radius)?;
    if cli.json {
        return stdout_json(&c);
    }
    println!("spectral radius of error dynamics: {}", c.spectral_radius);
    println!("alpha:                             {}", c.alpha);
    println!("lambda_max(Q_e):                   {}", c.lambda_max_qe);
    println!("threshold alpha/lambda_max:        {}", c.threshold);
    println!("gamma:                             {}", c.gamma);
    println!("gamma^2:                           {}", c.gamma_sq);
    println!("verdict:                           {}", c.verdict);
    println!("margin:                            {}", c.margin);
    if let Some(d) = &c.decrease_check {
        println!(
            "decrease check:                    {} samples within radius {}, all decreasing; fitted C = {:e}, worst V+/V = {}",
            d.samples, d.radius, d.fitted_c, d.worst_ratio
        );
    }
    Ok(())
}

fn apply_param(cfg: &mut FileConfig, param: &str, value: f64) -> Result<(), CliError> {
    match param {
        "gamma" => cfg.mitigation.gamma = value,
        "M" => cfg.mitigation.m_bound = value,
        "kappa" => cfg.detection.kappa = value,
        "huber_c" => cfg.mitigation.huber_c = value,
        "dt" => cfg.dynamics.dt = value,
        "wmsr_F" => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(CliError::Usage(format!("wmsr_F values must be non-negative integers, got {value}")));
            }
            cfg.mitigation.wmsr_f = value as usize;
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown sweep parameter `{other}`; valid parameters: {}",
                SWEEP_PARAMS.join(", ")
            )))
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepBlockJson {
    parameter: String,
    value: f64,
    certified: bool,
    methods: Vec<MethodJson>,
}

fn cmd_sweep(cli: &Cli, path: &Path, param: &str, raw_values: &[String]) -> Result<(), CliError> {
    if !SWEEP_PARAMS.contains(&param) {
        return Err(CliError::Usage(format!(
            "unknown sweep parameter `{param}`; valid parameters: {}",
            SWEEP_PARAMS.join(", ")
        )));
    }
    let values = raw_values
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("sweep value `{s}` is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::Usage("--values needs at least one value".into()));
    }
    let base = load(cli, path)?;

    let mut blocks: Vec<(f64, bool, Vec<MethodReport>)> = Vec::with_capacity(values.len());
    for &value in &values {
        let mut cfg = base.clone();
        apply_param(&mut cfg, param, value)?;
        let resolved = cfg.resolve()?;
        let scenario = Scenario::new(resolved.scenario)?;
        let reports = scenario.monte_carlo(&resolved.methods, false)?;
        let certified = certificate(&cfg, cfg.mitigation.gamma, 0, 0.05).is_ok_and(|c| c.verdict == "stable");
        blocks.push((value, certified, reports));
    }

    let dir = out_dir(cli)?;
    let file = dir.join(SWEEP_FILE);
    let mut w = csv::Writer::from_path(&file)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", file.display())))?;
    let mut header = vec!["parameter", "value", "certified"];
    header.extend(report::SUMMARY_HEADER);
    w.write_record(&header).map_err(|e| CliError::Io(e.to_string()))?;
    for (value, certified, reports) in &blocks {
        for r in reports {
            for rec in &r.records {
                let mut row = vec![param.to_string(), report::fmt_f64(*value), certified.to_string()];
                row.extend(report::summary_fields(rec));
                w.write_record(&row).map_err(|e| CliError::Io(e.to_string()))?;
            }
        }
    }
    w.flush()?;

    if cli.json {
        let out: Vec<SweepBlockJson> = blocks
            .iter()
            .map(|(value, certified, reports)| SweepBlockJson {
                parameter: param.to_string(),
                value: *value,
                certified: *certified,
                methods: reports.iter().map(MethodJson::from).collect(),
            })
            .collect();
        return stdout_json(&out);
    }
    let mut out = std::io::stdout().lock();
    for (value, certified, reports) in &blocks {
        writeln!(
            out,
            "{param} = {value} ({})",
            if *certified { "certified" } else { "not certified" }
        )?;
        report::print_table(&mut out, reports)?;
        writeln!(out)?;
    }
    writeln!(out, "wrote {}", file.display())?;
    Ok(())
}

fn cmd_plot(cli: &Cli, summary: &Path, trajectory: Option<&Path>) -> Result<(), CliError> {
    let data = plot::read_summary(summary)?;
    let parent = summary.parent().map(Path::to_path_buf).unwrap_or_default();
    let trajectory = trajectory
        .map(Path::to_path_buf)
        .unwrap_or_else(|| parent.join(TRAJECTORY_FILE));
    let series = plot::read_mean_trajectories(&trajectory)?;
    let dir = match &cli.out {
        Some(_) => out_dir(cli)?,
        None => parent,
    };
    let line = dir.join(LINE_SVG);
    let boxes = dir.join(BOX_SVG);
    std::fs::write(&line, plot::line_chart(&series))?;
    std::fs::write(&boxes, plot::box_chart(&data.auc))?;
    let outputs = [line.display().to_string(), boxes.display().to_string()];
    if cli.json {
        return stdout_json(&outputs);
    }
    for p in outputs {
        println!("wrote {p}");
    }
    Ok(())
}
