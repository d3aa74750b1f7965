//! Command-line runner for single simulations and the ensemble studies.
//!
//! Every subcommand reads an optional config (TOML, or JSON by extension),
//! writes its report under `--out-dir` and exits 0 iff every pass flag holds.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use stochastic_wave::config::{load_config, save_state, InitSpec, SimConfig};
use stochastic_wave::diagnostics::{energy_series, write_energy_csv};
use stochastic_wave::experiments::{
    covariance_table, persist_study, run_cauchy_study, run_scaling_swe1, run_scaling_swe2,
    CauchyConfig, CovarianceTableConfig, ScalingStudyConfig, Study,
};
use stochastic_wave::noise::NoiseSpecFile;
use stochastic_wave::verify::run_verification;
use stochastic_wave::{BrownianDriver, Error, Model, Nonlinearity, Result};

#[derive(Parser)]
#[command(name = "swave", version, about = "Stochastic wave equations with transport noise")]
struct Cli {
    /// Study or run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for ensemble runs (all cores by default).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One trajectory: energy CSV plus state snapshots.
    Simulate,
    /// Truncation-difference study against a fine reference.
    Cauchy,
    /// SWE1 errors against the undamped wave as the noise spreads out.
    ScalingSwe1,
    /// SWE2 errors against the damped wave, with the fitted rate.
    ScalingSwe2,
    /// Operator and integrator invariant checks.
    Verify,
    /// Covariance norm tables for a set of noise specs.
    Covariance,
}

fn config_or<T: DeserializeOwned>(path: Option<&Path>, default: impl FnOnce() -> T) -> Result<T> {
    match path {
        Some(p) => load_config(p),
        None => Ok(default()),
    }
}

fn default_sim() -> SimConfig {
    SimConfig {
        model: Model::Swe2,
        scheme: None,
        d: 2,
        n: 16,
        dt: 1e-3,
        t_final: 1.0,
        kappa: 0.5,
        f: Nonlinearity::Sin(1.0),
        seed: 0,
        save_times: None,
        save_count: 65,
        init: InitSpec::single_mode(&[1, 0], 1.0),
        noise: None,
    }
}

fn default_cauchy() -> CauchyConfig {
    CauchyConfig {
        model: Model::Swe1,
        d: 2,
        truncations: vec![4, 8, 16],
        reference: 32,
        dt: 1e-3,
        t_final: 1.0,
        f: Nonlinearity::Sin(1.0),
        noise: NoiseSpecFile {
            d: 2,
            kappa: 1.0,
            mode: "uniform-shell".into(),
            shell: Some(2),
            theta: None,
        },
        paths: 32,
        seed: 0,
        save_count: 65,
        init: InitSpec::single_mode(&[2, 1], 1.0),
        scheme: None,
    }
}

fn default_swe2() -> ScalingStudyConfig {
    let mut c = ScalingStudyConfig::swe2(0.5, &[1, 2, 4, 8], 0.4);
    c.n = 32;
    c.epsilon = Some(0.1);
    c
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn simulate(cli: &Cli) -> Result<bool> {
    let mut config = config_or(cli.config.as_deref(), default_sim)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let integrator = config.integrator()?;
    let init = config.initial_state()?;
    let driver = BrownianDriver::new(config.seed, config.dt)?;
    let traj = integrator.run(&init, config.t_final, &driver, &config.resolved_save_times()?)?;

    let snapshots = cli.out_dir.join("snapshots");
    std::fs::create_dir_all(&snapshots).map_err(|e| Error::io(&snapshots, e))?;
    write_json(&cli.out_dir.join("config.json"), &config)?;
    let records = energy_series(&traj);
    write_energy_csv(&cli.out_dir.join("trajectory.csv"), &records)?;
    for (i, state) in traj.states.iter().enumerate() {
        save_state(&snapshots.join(format!("state_{i:04}.json")), state)?;
    }
    let last = records.last().expect("at least one saved state");
    println!(
        "simulate: {:?} with {:?}, {} states saved, final energy {:.6} at t = {}",
        config.model,
        integrator.scheme(),
        traj.len(),
        last.total,
        last.t
    );
    Ok(true)
}

fn finish<S: Study>(cli: &Cli, name: &str, report: &S, pass: bool) -> Result<bool> {
    let path = cli.out_dir.join(format!("{name}.json"));
    persist_study(report, &path)?;
    println!("{name}: report written to {}", path.display());
    Ok(pass)
}

fn run(cli: &Cli) -> Result<bool> {
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| Error::io(&cli.out_dir, e))?;
    let config = cli.config.as_deref();
    match cli.command {
        Command::Simulate => simulate(cli),
        Command::Cauchy => {
            let mut c = config_or(config, default_cauchy)?;
            c.seed = cli.seed.unwrap_or(c.seed);
            let r = run_cauchy_study(&c)?;
            for (n, (y, se)) in r.truncations.iter().zip(r.y.iter().zip(&r.stderr)) {
                println!("n = {n:>3}  E sup N = {y:.4e} +- {se:.1e}");
            }
            println!("final/first {:.3e}, weakly decreasing {}, pass {}", r.final_ratio, r.weakly_decreasing, r.pass);
            finish(cli, "cauchy", &r, r.pass)
        }
        Command::ScalingSwe1 | Command::ScalingSwe2 => {
            let swe1 = matches!(cli.command, Command::ScalingSwe1);
            let default = if swe1 {
                ScalingStudyConfig::swe1(1.0, &[1, 2, 4], 0.25)
            } else {
                default_swe2()
            };
            let mut c = config_or(config, || default)?;
            c.seed = cli.seed.unwrap_or(c.seed);
            let r = if swe1 { run_scaling_swe1(&c)? } else { run_scaling_swe2(&c)? };
            println!("{}", r.quantity);
            for i in 0..r.y.len() {
                println!("shell {:>2}  |Q|_L1 = {:.4}  y = {:.4e} +- {:.1e}", r.shells[i], r.x[i], r.y[i], r.stderr[i]);
            }
            if let (Some(slope), Some(r2)) = (r.slope, r.r2) {
                println!("slope {slope:.3}, r2 {r2:.3}, final/first {:.3}", r.final_ratio());
            }
            if let Some(ratio) = r.contrast_ratio() {
                println!("contrast against the undamped wave at the last shell: {ratio:.1}x");
            }
            println!("pass {}", r.pass);
            finish(cli, if swe1 { "scaling_swe1" } else { "scaling_swe2" }, &r, r.pass)
        }
        Command::Verify => {
            let r = run_verification(cli.seed.unwrap_or(0))?;
            for c in &r.checks {
                println!("{} {}: {:.3e} (tol {:.0e})", if c.pass { "ok  " } else { "FAIL" }, c.name, c.value, c.tolerance);
            }
            write_json(&cli.out_dir.join("verify.json"), &r)?;
            Ok(r.pass)
        }
        Command::Covariance => {
            let c = config_or(config, CovarianceTableConfig::default)?;
            let t = covariance_table(&c)?;
            println!("{:>2} {:>6} {:>5} {:>10} {:>10} {:>10} {:>10}", "d", "kappa", "modes", "kappa_eff", "|Q|_L1", "|Q|_L2", "closed");
            for r in &t.rows {
                println!(
                    "{:>2} {:>6} {:>5} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
                    r.d, r.kappa, r.modes, r.kappa_eff, r.l1_norm, r.l2_norm, r.l2_closed_form
                );
            }
            finish(cli, "covariance", &t, t.pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot set up {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
