use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use stochvar_cli::config::{documented_defaults, Config};
use stochvar_cli::{run, CliError};

/// Runs one verification experiment and writes JSON/CSV reports.
///
/// Exit codes: 0 when every check passes, 1 on a check failure, 2 on a
/// usage error.
#[derive(Parser, Debug)]
#[command(name = "stochvar", version)]
struct Args {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ns-verify, criticality, noether or spde-converge.
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override any configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    branches: Option<usize>,
    #[arg(long)]
    eps_steps: Option<usize>,
    /// Directory for the trajectory checkpoint.
    #[arg(long)]
    save_trajectory: Option<PathBuf>,
    /// Wavevectors of the perturbation basis, e.g. `1,0;0,1`.
    #[arg(long)]
    perturbation_modes: Option<String>,
    /// Comma-separated, strictly decreasing.
    #[arg(long)]
    epsilon_ladder: Option<String>,
    /// Path of the CSV series.
    #[arg(long)]
    report: Option<PathBuf>,
    /// translation-x, translation-y, or `custom <file>`.
    #[arg(long, num_args = 1..=2, value_names = ["NAME", "FILE"])]
    symmetry: Vec<String>,
    /// ito or stratonovich-heun.
    #[arg(long)]
    scheme: Option<String>,
    /// Comma-separated time steps.
    #[arg(long)]
    dt_ladder: Option<String>,
    /// Compute the Noether residual even when invariance fails.
    #[arg(long)]
    force: bool,
    /// Worker threads; 0 uses every core. Reports do not depend on it.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Print the documented default configuration and exit.
    #[arg(long)]
    print_defaults: bool,
}

fn path_str(p: &std::path::Path) -> Result<String, CliError> {
    p.to_str()
        .map(str::to_string)
        .ok_or_else(|| CliError::Usage(format!("non-utf-8 path {}", p.display())))
}

fn build_config(args: &Args) -> Result<Config, CliError> {
    let mut cfg = match &args.config {
        Some(p) => Config::parse(&std::fs::read_to_string(p)?)?,
        None => Config::new(),
    };
    for pair in &args.set {
        cfg.set_pair(pair)?;
    }
    let mut flags: Vec<(&str, String)> = Vec::new();
    if let Some(e) = &args.experiment {
        flags.push(("experiment", e.clone()));
    }
    if let Some(s) = args.seed {
        flags.push(("seed", s.to_string()));
    }
    if let Some(p) = &args.out {
        flags.push(("out", path_str(p)?));
    }
    if let Some(r) = args.replicas {
        flags.push(("replicas", r.to_string()));
    }
    if let Some(d) = args.dt {
        flags.push(("dt", d.to_string()));
    }
    if let Some(b) = args.branches {
        flags.push(("branches", b.to_string()));
    }
    if let Some(k) = args.eps_steps {
        flags.push(("eps-steps", k.to_string()));
    }
    if let Some(p) = &args.save_trajectory {
        flags.push(("save-trajectory", path_str(p)?));
    }
    if let Some(m) = &args.perturbation_modes {
        flags.push(("criticality.modes", m.clone()));
    }
    if let Some(l) = &args.epsilon_ladder {
        flags.push(("criticality.epsilon-ladder", l.clone()));
    }
    if let Some(p) = &args.report {
        flags.push(("report", path_str(p)?));
    }
    match args.symmetry.as_slice() {
        [] => {}
        [name] if name != "custom" => flags.push(("noether.symmetry", name.clone())),
        [name, file] if name == "custom" => {
            flags.push(("noether.symmetry", name.clone()));
            flags.push(("noether.symmetry-file", file.clone()));
        }
        _ => {
            return Err(CliError::Usage(
                "--symmetry takes translation-x, translation-y or `custom <file>`".into(),
            ))
        }
    }
    if let Some(s) = &args.scheme {
        flags.push(("spde.scheme", s.clone()));
    }
    if let Some(l) = &args.dt_ladder {
        flags.push(("spde.dt-ladder", l.clone()));
    }
    if args.force {
        flags.push(("noether.force", "true".into()));
    }
    for (k, v) in flags {
        cfg.set(k, &v)?;
    }
    Ok(cfg)
}

fn execute(args: &Args) -> Result<bool, CliError> {
    let cfg = build_config(args)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let threads = pool.current_num_threads();
    let report = pool.install(|| run(&cfg))?;
    let out = PathBuf::from(cfg.get("out")?);
    let csv = cfg.get("report")?;
    let csv = (!csv.is_empty()).then(|| PathBuf::from(csv));
    let written = report.write(&out, csv.as_deref(), threads)?;
    for note in &report.notes {
        log::info!("{note}");
    }
    let passed = report.passed();
    println!(
        "{}: {} ({} checks, {:.1}s)",
        report.experiment,
        if passed { "pass" } else { "FAIL" },
        report.checks.len(),
        report.wall_clock
    );
    for c in report.failures() {
        eprintln!(
            "failed: {} value {:e} tolerance {:e}{}",
            c.name,
            c.value,
            c.tolerance,
            c.stderr.map(|s| format!(" stderr {s:e}")).unwrap_or_default()
        );
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if args.print_defaults {
        print!("{}", documented_defaults());
        return ExitCode::SUCCESS;
    }
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
