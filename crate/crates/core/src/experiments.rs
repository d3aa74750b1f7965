//! Ensemble studies: truncation convergence, vanishing-noise limits with
//! fitted rates, scheme agreement, energy bounds, and their persistence.
//!
//! Paths are integrated in parallel. Every path's driver is
//! `path_seed(seed, path)`, independent of scheduling, and all reductions run
//! in a fixed order, so a study is reproducible bit for bit from its echoed
//! config.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::brownian::{path_seed, BrownianDriver};
use crate::config::InitSpec;
use crate::diagnostics::{csv_writer, energy, state_difference_energy, write_json};
use crate::dynamics::{uniform_save_times, GalerkinState, Integrator, Model, ModelSpec, Scheme, Trajectory};
use crate::error::{Error, Result};
use crate::noise::{make_scaling_family, CovarianceReport, NoiseBasis, NoiseSpec, NoiseSpecFile};
use crate::nonlinearity::Nonlinearity;
use crate::spectral::{Lattice, FOUR_PI_SQ};
use crate::stats::{estimate_mean, fit_rate, MeanEstimate, RateFit};

/// Margin between the largest noise shell and the truncation: `n >= 2·N + 8`.
pub const TRUNCATION_MARGIN: usize = 8;
/// Tolerance on the fitted slope for the dissipative limit.
pub const SLOPE_TOLERANCE: f64 = 0.05;
/// Allowed spread of `kappa_eff` across a scaling family.
pub const KAPPA_EFF_TOLERANCE: f64 = 1e-10;
/// Minimal `r²` of the dissipative-limit fit.
pub const MIN_R2: f64 = 0.9;
/// Required drop `y[last] / y[0]` for the SWE1 limit and the Cauchy study.
pub const MAX_FINAL_RATIO: f64 = 0.5;
/// How far the wrong (undamped) target must stay above the right one.
pub const CONTRAST_FACTOR: f64 = 5.0;

/// Runs `task(i)` for `i in 0..count` in parallel, returning results in index order.
pub fn ensemble<T: Send>(count: usize, task: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..count).into_par_iter().map(task).collect()
}

fn default_save_count() -> usize {
    65
}

/// A vanishing-noise study over a uniform-shell family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingStudyConfig {
    pub model: Model,
    pub d: usize,
    pub kappa: f64,
    pub shells: Vec<usize>,
    pub paths: usize,
    pub n: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub f: Nonlinearity,
    /// Regularity loss for the `SWE1` error norm `H^{1-γ}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Negative order of the `SWE2` error norm `H^{-a}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Rate loss in the `SWE2` target exponent; defaults to `a/4`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub seed: u64,
    #[serde(default = "default_save_count")]
    pub save_count: usize,
    pub init: InitSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
}

impl ScalingStudyConfig {
    pub fn swe1(kappa: f64, shells: &[usize], gamma: f64) -> ScalingStudyConfig {
        let max = shells.iter().copied().max().unwrap_or(1);
        ScalingStudyConfig {
            model: Model::Swe1,
            d: 2,
            kappa,
            shells: shells.to_vec(),
            paths: 64,
            n: 2 * max + TRUNCATION_MARGIN,
            dt: 1e-3,
            t_final: 1.0,
            f: Nonlinearity::Sin(1.0),
            gamma: Some(gamma),
            a: None,
            epsilon: None,
            seed: 0,
            save_count: 65,
            init: InitSpec::single_mode(&[1, 0], 1.0),
            scheme: None,
        }
    }

    pub fn swe2(kappa: f64, shells: &[usize], a: f64) -> ScalingStudyConfig {
        ScalingStudyConfig {
            model: Model::Swe2,
            gamma: None,
            a: Some(a),
            ..ScalingStudyConfig::swe1(kappa, shells, 0.25)
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme.unwrap_or_else(|| Scheme::default_for(self.model))
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.a.map(|a| self.epsilon.unwrap_or(a / 4.0))
    }

    fn validate(&self) -> Result<()> {
        if self.shells.len() < 2 || self.shells.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "shells must be strictly increasing with at least two entries, got {:?}",
                self.shells
            )));
        }
        let max = *self.shells.last().expect("nonempty");
        if self.n < 2 * max + TRUNCATION_MARGIN {
            return Err(Error::Precondition(format!(
                "truncation n = {} is below 2·{max} + {TRUNCATION_MARGIN}",
                self.n
            )));
        }
        if self.paths == 0 {
            return Err(Error::Config("need at least one path".into()));
        }
        match self.model {
            Model::Swe1 => match self.gamma {
                Some(g) if g > 0.0 && g < 0.5 => Ok(()),
                other => Err(Error::Config(format!("SWE1 study needs gamma in (0, 1/2), got {other:?}"))),
            },
            Model::Swe2 => {
                if !self.f.is_cb2() {
                    return Err(Error::Precondition(format!(
                        "the dissipative limit needs a bounded C² forcing, got {}",
                        self.f
                    )));
                }
                let a = self.a.unwrap_or(f64::NAN);
                if !(a > 0.0 && a < 0.5) {
                    return Err(Error::Config(format!("SWE2 study needs a in (0, 1/2), got {:?}", self.a)));
                }
                let eps = self.epsilon().expect("a is set");
                if !(eps > 0.0 && eps <= a) {
                    return Err(Error::Config(format!("epsilon must lie in (0, a], got {eps}")));
                }
                Ok(())
            }
            other => Err(Error::Config(format!("scaling studies run SWE1 or SWE2, not {other:?}"))),
        }
    }
}

/// Ensemble means of a second quantity (e.g. errors against the wrong limit).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub quantity: String,
    pub y: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Error statistics against `‖Q^N‖_{L¹}` with a log-log fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub quantity: String,
    pub model: Model,
    pub shells: Vec<usize>,
    /// `‖Q^N‖_{L¹}` per shell.
    pub x: Vec<f64>,
    /// Ensemble means per shell.
    pub y: Vec<f64>,
    pub stderr: Vec<f64>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r2: Option<f64>,
    pub target: Option<f64>,
    pub tolerance: Option<f64>,
    pub strictly_decreasing: bool,
    pub pass: bool,
    pub kappa_eff: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast: Option<Contrast>,
    pub config: ScalingStudyConfig,
}

impl RateReport {
    /// `y[last] / y[0]`.
    pub fn final_ratio(&self) -> f64 {
        self.y.last().copied().unwrap_or(0.0) / self.y[0]
    }

    /// Contrast error over the study error at the largest shell.
    pub fn contrast_ratio(&self) -> Option<f64> {
        let c = self.contrast.as_ref()?;
        Some(c.y.last()? / self.y.last()?)
    }
}

/// Builds the bases of a uniform-shell family and checks the study
/// preconditions: equal `kappa_eff` and strictly decreasing `‖Q‖_{L¹}`.
pub fn scaling_family(d: usize, kappa: f64, shells: &[usize]) -> Result<Vec<(Arc<NoiseBasis>, CovarianceReport)>> {
    let family = make_scaling_family(d, kappa, shells)?;
    let out: Vec<(Arc<NoiseBasis>, CovarianceReport)> = family
        .into_iter()
        .map(|spec| {
            let basis = Arc::new(NoiseBasis::new(spec)?);
            let report = basis.covariance_norms(basis.default_quadrature_level())?;
            Ok((basis, report))
        })
        .collect::<Result<_>>()?;
    let k0 = out[0].1.kappa_eff;
    for (b, r) in &out {
        if (r.kappa_eff - k0).abs() > KAPPA_EFF_TOLERANCE * k0.abs().max(1.0) {
            return Err(Error::Precondition(format!(
                "kappa_eff {} at shell {} differs from {k0}",
                r.kappa_eff,
                b.spec().max_norm()
            )));
        }
    }
    if kappa > 0.0 && out.windows(2).any(|w| w[1].1.l1_norm >= w[0].1.l1_norm) {
        let l1: Vec<f64> = out.iter().map(|(_, r)| r.l1_norm).collect();
        return Err(Error::Precondition(format!("‖Q‖_L1 is not strictly decreasing: {l1:?}")));
    }
    Ok(out)
}

/// `sup_t ‖u(t) − ū(t)‖_{H^s}^power` over the common save grid.
fn sup_distance(traj: &Trajectory, reference: &Trajectory, s: f64, power: i32) -> Result<f64> {
    let mut sup = 0.0f64;
    for (a, b) in traj.states.iter().zip(&reference.states) {
        let diff = a.u.sub(&b.u)?;
        sup = sup.max(diff.sobolev_norm_sq(s).sqrt().powi(power));
    }
    Ok(sup)
}

fn is_strictly_decreasing(y: &[f64]) -> bool {
    y.windows(2).all(|w| w[1] < w[0])
}

/// Vanishing-noise limit of `SWE1` towards the plain wave equation:
/// `E sup_t ‖u^N − ū‖²_{H^{1−γ}}` per shell.
pub fn run_scaling_swe1(config: &ScalingStudyConfig) -> Result<RateReport> {
    if config.model != Model::Swe1 {
        return Err(Error::Config("run_scaling_swe1 needs model SWE1".into()));
    }
    run_scaling(config)
}

/// Vanishing-noise limit of `SWE2` towards the damped wave equation with
/// `κ = kappa_eff`: `E sup_t ‖u^N − ū‖_{H^{-a}}` per shell, fitted against
/// `‖Q^N‖_{L¹}` with target exponent `(a − ε)/d`. The same paths are also
/// compared against the undamped wave equation.
pub fn run_scaling_swe2(config: &ScalingStudyConfig) -> Result<RateReport> {
    if config.model != Model::Swe2 {
        return Err(Error::Config("run_scaling_swe2 needs model SWE2".into()));
    }
    run_scaling(config)
}

fn run_scaling(config: &ScalingStudyConfig) -> Result<RateReport> {
    config.validate()?;
    let family = scaling_family(config.d, config.kappa, &config.shells)?;
    let kappa_eff = family[0].1.kappa_eff;
    let lattice = Lattice::new(config.d, config.n)?;
    let init = config.init.build(&lattice, config.seed)?;
    let save = uniform_save_times(config.t_final, config.dt, config.save_count)?;
    // deterministic limits are driven by a dummy driver
    let quiet = BrownianDriver::new(config.seed, config.dt)?;

    let (s, power, quantity) = match config.model {
        Model::Swe1 => {
            let g = config.gamma.expect("validated");
            (1.0 - g, 2, format!("E sup_t |u^N - u_wave|^2_H^{}", 1.0 - g))
        }
        _ => {
            let a = config.a.expect("validated");
            (-a, 1, format!("E sup_t |u^N - u_damped|_H^-{a}"))
        }
    };
    let wave = Integrator::new(ModelSpec::wave(config.f), Scheme::EulerMaruyama, config.dt, &lattice)?
        .run(&init, config.t_final, &quiet, &save)?;
    let reference = match config.model {
        Model::Swe1 => wave.clone(),
        _ => Integrator::new(
            ModelSpec::damped_wave(config.f, kappa_eff)?,
            config.scheme(),
            config.dt,
            &lattice,
        )?
        .run(&init, config.t_final, &quiet, &save)?,
    };

    let integrators: Vec<Integrator> = family
        .iter()
        .map(|(basis, _)| {
            let spec = match config.model {
                Model::Swe1 => ModelSpec::swe1(Arc::clone(basis), config.f)?,
                _ => ModelSpec::swe2(Arc::clone(basis), config.f)?,
            };
            Integrator::new(spec, config.scheme(), config.dt, &lattice)
        })
        .collect::<Result<_>>()?;

    let paths = config.paths;
    let with_contrast = config.model == Model::Swe2;
    let samples = ensemble(integrators.len() * paths, |task| {
        let (shell, path) = (task / paths, task % paths);
        let driver = BrownianDriver::new(path_seed(config.seed, path as u64), config.dt)?;
        let traj = integrators[shell].run(&init, config.t_final, &driver, &save)?;
        let err = sup_distance(&traj, &reference, s, power)?;
        let contrast = if with_contrast {
            sup_distance(&traj, &wave, s, power)?
        } else {
            0.0
        };
        Ok((err, contrast))
    })?;

    let mut y = Vec::new();
    let mut stderr = Vec::new();
    let mut cy = Vec::new();
    let mut cstderr = Vec::new();
    for chunk in samples.chunks(paths) {
        let (e, c): (Vec<f64>, Vec<f64>) = chunk.iter().copied().unzip();
        let me = estimate_mean(&e)?;
        let mc = estimate_mean(&c)?;
        y.push(me.mean);
        stderr.push(me.stderr);
        cy.push(mc.mean);
        cstderr.push(mc.stderr);
    }
    let x: Vec<f64> = family.iter().map(|(_, r)| r.l1_norm).collect();
    let fit: Option<RateFit> = fit_rate(&x, &y).ok();
    let strictly_decreasing = is_strictly_decreasing(&y);
    let silent = config.kappa == 0.0;
    let (target, tolerance) = match config.model {
        Model::Swe2 => {
            let a = config.a.expect("validated");
            let eps = config.epsilon().expect("validated");
            (Some((a - eps) / config.d as f64), Some(SLOPE_TOLERANCE))
        }
        _ => (None, None),
    };
    let pass = if silent {
        y.iter().all(|v| *v == 0.0)
    } else {
        match (target, tolerance) {
            (Some(t), Some(tol)) => {
                let last = y.len() - 1;
                fit.is_some_and(|f| f.slope >= t - tol && f.r2 >= MIN_R2)
                    && cy[last] >= CONTRAST_FACTOR * y[last]
            }
            _ => strictly_decreasing && y[y.len() - 1] <= MAX_FINAL_RATIO * y[0],
        }
    };
    Ok(RateReport {
        quantity,
        model: config.model,
        shells: config.shells.clone(),
        x,
        y,
        stderr,
        slope: fit.map(|f| f.slope),
        intercept: fit.map(|f| f.intercept),
        r2: fit.map(|f| f.r2),
        target,
        tolerance,
        strictly_decreasing,
        pass,
        kappa_eff,
        contrast: with_contrast.then(|| Contrast {
            quantity: format!("E sup_t |u^N - u_wave|_H^{s}"),
            y: cy,
            stderr: cstderr,
        }),
        config: config.clone(),
    })
}

/// Truncation-convergence study: `E sup_t N_{m,n}` for a reference `m` and
/// coarser `n`, all driven by the same Brownian paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CauchyConfig {
    pub model: Model,
    pub d: usize,
    pub truncations: Vec<usize>,
    pub reference: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub f: Nonlinearity,
    pub noise: NoiseSpecFile,
    pub paths: usize,
    pub seed: u64,
    #[serde(default = "default_save_count")]
    pub save_count: usize,
    pub init: InitSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
}

impl CauchyConfig {
    pub fn scheme(&self) -> Scheme {
        self.scheme.unwrap_or_else(|| Scheme::default_for(self.model))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyReport {
    pub truncations: Vec<usize>,
    pub reference: usize,
    /// `E sup_t N_{m,n}` per truncation.
    pub y: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Log-log fit of `y` against `1/n²`, when every entry is positive.
    pub fit_inverse_square: Option<RateFit>,
    /// Every entry is at most 1.2 times the previous one.
    pub weakly_decreasing: bool,
    pub final_ratio: f64,
    pub pass: bool,
    /// `SWE2` pairs are a per-scheme reproducibility check only.
    pub note: String,
    pub config: CauchyConfig,
}

pub fn run_cauchy_study(config: &CauchyConfig) -> Result<CauchyReport> {
    let mut sorted = config.truncations.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted != config.truncations || sorted.is_empty() {
        return Err(Error::Config(format!(
            "truncations must be strictly increasing, got {:?}",
            config.truncations
        )));
    }
    if config.reference <= *sorted.last().expect("nonempty") {
        return Err(Error::Config(format!(
            "reference truncation {} must exceed every truncation in {:?}",
            config.reference, config.truncations
        )));
    }
    if config.paths == 0 {
        return Err(Error::Config("need at least one path".into()));
    }
    if config.noise.d != config.d {
        return Err(Error::Config("noise dimension differs from the study dimension".into()));
    }
    let basis = if config.model.is_stochastic() {
        Some(Arc::new(NoiseBasis::new(NoiseSpec::from_file(&config.noise)?)?))
    } else {
        None
    };
    let spec = match config.model {
        Model::Swe1 => ModelSpec::swe1(basis.expect("stochastic"), config.f)?,
        Model::Swe2 => ModelSpec::swe2(basis.expect("stochastic"), config.f)?,
        Model::Wave => ModelSpec::wave(config.f),
        Model::DampedWave => ModelSpec::damped_wave(config.f, config.noise.kappa)?,
    };
    let fine_lattice = Lattice::new(config.d, config.reference)?;
    let init = config.init.build(&fine_lattice, config.seed)?;
    let save = uniform_save_times(config.t_final, config.dt, config.save_count)?;
    let fine = Integrator::new(spec.clone(), config.scheme(), config.dt, &fine_lattice)?;
    let coarse: Vec<(Integrator, GalerkinState)> = config
        .truncations
        .iter()
        .map(|&n| {
            let l = Lattice::new(config.d, n)?;
            let start = init.resample(&l)?;
            Ok((Integrator::new(spec.clone(), config.scheme(), config.dt, &l)?, start))
        })
        .collect::<Result<_>>()?;

    let per_path = ensemble(config.paths, |path| {
        let driver = BrownianDriver::new(path_seed(config.seed, path as u64), config.dt)?;
        let reference = fine.run(&init, config.t_final, &driver, &save)?;
        coarse
            .iter()
            .map(|(integ, start)| {
                let traj = integ.run(start, config.t_final, &driver, &save)?;
                let mut sup = 0.0f64;
                for (f, c) in reference.states.iter().zip(&traj.states) {
                    sup = sup.max(state_difference_energy(f, c)?.total);
                }
                Ok(sup)
            })
            .collect::<Result<Vec<f64>>>()
    })?;

    let mut y = Vec::new();
    let mut stderr = Vec::new();
    for i in 0..config.truncations.len() {
        let column: Vec<f64> = per_path.iter().map(|p| p[i]).collect();
        let m = estimate_mean(&column)?;
        y.push(m.mean);
        stderr.push(m.stderr);
    }
    let x: Vec<f64> = config.truncations.iter().map(|&n| 1.0 / (n * n) as f64).collect();
    let fit_inverse_square = if y.iter().all(|v| *v > 0.0) && y.len() >= 3 {
        Some(fit_rate(&x, &y)?)
    } else {
        None
    };
    let weakly_decreasing = y.windows(2).all(|w| w[1] <= 1.2 * w[0]);
    let final_ratio = if y[0] > 0.0 {
        y[y.len() - 1] / y[0]
    } else {
        0.0
    };
    let pass = weakly_decreasing && y[y.len() - 1] <= MAX_FINAL_RATIO * y[0];
    let note = if config.model == Model::Swe2 {
        "per-scheme reproducibility across truncations; not evidence of pathwise uniqueness".into()
    } else {
        "truncation convergence".into()
    };
    Ok(CauchyReport {
        truncations: config.truncations.clone(),
        reference: config.reference,
        y,
        stderr,
        fit_inverse_square,
        weakly_decreasing,
        final_ratio,
        pass,
        note,
        config: config.clone(),
    })
}

/// Strong distance at `T` between a Stratonovich Heun run (no correction
/// drift) and an Itô Euler run (with the correction drift, for `SWE2`) on
/// shared increments, as `dt` shrinks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeAgreementConfig {
    pub model: Model,
    pub d: usize,
    pub n: usize,
    pub kappa: f64,
    pub shell: usize,
    pub f: Nonlinearity,
    pub dts: Vec<f64>,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub paths: usize,
    pub seed: u64,
    pub init: InitSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeAgreementReport {
    pub dts: Vec<f64>,
    /// `E (‖Δu(T)‖²_{H¹} + ‖Δv(T)‖²)^{1/2}` per step size.
    pub errors: Vec<MeanEstimate>,
    pub slope: f64,
    pub r2: f64,
    pub config: SchemeAgreementConfig,
}

pub fn run_scheme_agreement(config: &SchemeAgreementConfig) -> Result<SchemeAgreementReport> {
    if !config.model.is_stochastic() {
        return Err(Error::ModelMismatch("scheme agreement compares SWE1 or SWE2 runs".into()));
    }
    if config.paths == 0 {
        return Err(Error::Config("need at least one path".into()));
    }
    let basis = Arc::new(NoiseBasis::new(NoiseSpec::uniform_shell(config.d, config.kappa, config.shell)?)?);
    let spec = match config.model {
        Model::Swe1 => ModelSpec::swe1(basis, config.f)?,
        _ => ModelSpec::swe2(basis, config.f)?,
    };
    let lattice = Lattice::new(config.d, config.n)?;
    let init = config.init.build(&lattice, config.seed)?;
    let mut errors = Vec::new();
    for &dt in &config.dts {
        let ito = Integrator::new(spec.clone(), Scheme::default_for(config.model), dt, &lattice)?;
        let strat = Integrator::new(spec.clone(), Scheme::StratonovichHeun, dt, &lattice)?;
        let samples = ensemble(config.paths, |path| {
            let driver = BrownianDriver::new(path_seed(config.seed, path as u64), dt)?;
            let a = ito.run(&init, config.t_final, &driver, &[])?;
            let b = strat.run(&init, config.t_final, &driver, &[])?;
            let (a, b) = (a.last().expect("final state"), b.last().expect("final state"));
            let du = a.u.sub(&b.u)?;
            let dv = a.v.sub(&b.v)?;
            Ok((du.sobolev_norm_sq(1.0) + dv.sobolev_norm_sq(0.0)).sqrt())
        })?;
        errors.push(estimate_mean(&samples)?);
    }
    let means: Vec<f64> = errors.iter().map(|e| e.mean).collect();
    let fit = fit_rate(&config.dts, &means)?;
    Ok(SchemeAgreementReport {
        dts: config.dts.clone(),
        errors,
        slope: fit.slope,
        r2: fit.r2,
        config: config.clone(),
    })
}

/// Growth constant `C` for which the Galerkin `SWE2` flow satisfies
/// `sup_t E(t) <= e^{CT}(E(0) + 1)` pathwise, with `E = ‖u‖²_{H¹} + ‖v‖²`.
///
/// With `Ê = ‖u‖² + ‖∇u‖² + ‖v‖²` the noise and damping terms cancel up to a
/// nonpositive remainder, and `dÊ/dt <= C₁Ê + C₁` with
/// `C₁ = max(1 + 2L², 2, 2f(0)²)`. Since `E <= Ê <= 4π²E`, the bound for `E`
/// carries an extra `ln(4π²)/T`.
pub fn swe2_energy_constant(f: &Nonlinearity, t_final: f64) -> f64 {
    let l = f.lipschitz_const();
    let c1 = (1.0 + 2.0 * l * l).max(2.0).max(2.0 * f.eval(0.0).powi(2));
    c1 + FOUR_PI_SQ.ln() / t_final
}

/// `sup_t E(t)` along every path of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyStudyConfig {
    pub model: Model,
    pub d: usize,
    pub n: usize,
    pub kappa: f64,
    pub shell: usize,
    pub f: Nonlinearity,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub paths: usize,
    pub seed: u64,
    pub init: InitSpec,
    #[serde(default = "default_save_count")]
    pub save_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyStudy {
    pub initial_energy: f64,
    pub sup_energy: Vec<f64>,
    pub mean_sup: MeanEstimate,
    pub config: EnergyStudyConfig,
}

pub fn run_energy_study(config: &EnergyStudyConfig) -> Result<EnergyStudy> {
    let basis = Arc::new(NoiseBasis::new(NoiseSpec::uniform_shell(config.d, config.kappa, config.shell)?)?);
    let spec = match config.model {
        Model::Swe1 => ModelSpec::swe1(basis, config.f)?,
        Model::Swe2 => ModelSpec::swe2(basis, config.f)?,
        other => return Err(Error::ModelMismatch(format!("energy study runs SWE1 or SWE2, not {other:?}"))),
    };
    let lattice = Lattice::new(config.d, config.n)?;
    let init = config.init.build(&lattice, config.seed)?;
    let save = uniform_save_times(config.t_final, config.dt, config.save_count)?;
    let integ = Integrator::new(spec, Scheme::default_for(config.model), config.dt, &lattice)?;
    let sup_energy = ensemble(config.paths, |path| {
        let driver = BrownianDriver::new(path_seed(config.seed, path as u64), config.dt)?;
        let traj = integ.run(&init, config.t_final, &driver, &save)?;
        Ok(traj.states.iter().map(|s| energy(s).total).fold(0.0, f64::max))
    })?;
    Ok(EnergyStudy {
        initial_energy: energy(&init).total,
        mean_sup: estimate_mean(&sup_energy)?,
        sup_energy,
        config: config.clone(),
    })
}

impl EnergyStudy {
    /// Share of paths with `sup_t E <= e^{cT}(E(0) + 1)`.
    pub fn fraction_within(&self, c: f64) -> f64 {
        let bound = (c * self.config.t_final).exp() * (self.initial_energy + 1.0);
        let inside = self.sup_energy.iter().filter(|&&e| e <= bound).count();
        inside as f64 / self.sup_energy.len() as f64
    }
}

/// Ensemble-mean `sup_t E` across truncations, checked against a constant
/// fitted on the smallest one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformEnergyReport {
    pub truncations: Vec<usize>,
    pub mean_sup: Vec<MeanEstimate>,
    /// `(1 + slack)` times the mean at the first truncation.
    pub fitted_bound: f64,
    pub slack: f64,
    pub pass: bool,
    pub config: EnergyStudyConfig,
}

/// Runs `config` once per truncation (ignoring `config.n`), same seeds throughout.
pub fn run_uniform_energy(
    config: &EnergyStudyConfig,
    truncations: &[usize],
    slack: f64,
) -> Result<UniformEnergyReport> {
    if truncations.len() < 2 {
        return Err(Error::Config("need at least two truncations".into()));
    }
    if !(slack >= 0.0) {
        return Err(Error::Config(format!("slack must be nonnegative, got {slack}")));
    }
    let mut mean_sup = Vec::with_capacity(truncations.len());
    for &n in truncations {
        let study = run_energy_study(&EnergyStudyConfig { n, ..config.clone() })?;
        mean_sup.push(study.mean_sup);
    }
    let fitted_bound = (1.0 + slack) * mean_sup[0].mean;
    let pass = mean_sup.iter().all(|m| m.mean <= fitted_bound);
    Ok(UniformEnergyReport {
        truncations: truncations.to_vec(),
        mean_sup,
        fitted_bound,
        slack,
        pass,
        config: config.clone(),
    })
}

/// Noise specs to tabulate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceTableConfig {
    pub specs: Vec<NoiseSpecFile>,
}

impl Default for CovarianceTableConfig {
    /// Uniform shells `1, 2, 4, 8` in `d = 2` and `1, 2` in `d = 3`, `κ = 1`.
    fn default() -> Self {
        let shell = |d: usize, n: usize| NoiseSpecFile {
            d,
            kappa: 1.0,
            mode: "uniform-shell".into(),
            shell: Some(n),
            theta: None,
        };
        CovarianceTableConfig {
            specs: vec![shell(2, 1), shell(2, 2), shell(2, 4), shell(2, 8), shell(3, 1), shell(3, 2)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceRow {
    pub d: usize,
    pub kappa: f64,
    pub modes: usize,
    pub kappa_eff: f64,
    pub l1_norm: f64,
    pub l2_norm: f64,
    pub l2_closed_form: f64,
    pub fourier_sup: f64,
    pub isotropy_defect: f64,
    pub lattice_symmetric: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceTable {
    pub rows: Vec<CovarianceRow>,
    /// Closed-form `‖Q‖_{L²}` matches to 1e-8 everywhere, and `Q(0)` is
    /// isotropic to 1e-10 for lattice-symmetric specs.
    pub pass: bool,
    pub config: CovarianceTableConfig,
}

pub fn covariance_table(config: &CovarianceTableConfig) -> Result<CovarianceTable> {
    let mut rows = Vec::with_capacity(config.specs.len());
    let mut pass = true;
    for file in &config.specs {
        let spec = NoiseSpec::from_file(file)?;
        let lattice_symmetric = spec.is_lattice_symmetric();
        let modes = spec.len();
        let basis = NoiseBasis::new(spec)?;
        let r = basis.covariance_norms(basis.default_quadrature_level())?;
        let gap = (r.l2_norm.powi(2) - r.l2_closed_form.powi(2)).abs() / r.l2_closed_form.powi(2);
        let isotropy_defect = r.isotropy_defect();
        pass &= gap <= 1e-8 && (!lattice_symmetric || isotropy_defect <= 1e-10);
        rows.push(CovarianceRow {
            d: r.d,
            kappa: file.kappa,
            modes,
            kappa_eff: r.kappa_eff,
            l1_norm: r.l1_norm,
            l2_norm: r.l2_norm,
            l2_closed_form: r.l2_closed_form,
            fourier_sup: r.fourier_sup,
            isotropy_defect,
            lattice_symmetric,
        });
    }
    Ok(CovarianceTable {
        rows,
        pass,
        config: config.clone(),
    })
}

/// A report that can be written as JSON plus a CSV companion table.
pub trait Study: Serialize + DeserializeOwned {
    fn csv_header(&self) -> Vec<String>;
    fn csv_rows(&self) -> Vec<Vec<f64>>;
}

impl Study for RateReport {
    fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["shell", "q_l1", "y", "stderr"].map(String::from).to_vec();
        if self.contrast.is_some() {
            h.extend(["contrast_y", "contrast_stderr"].map(String::from));
        }
        h
    }

    fn csv_rows(&self) -> Vec<Vec<f64>> {
        (0..self.y.len())
            .map(|i| {
                let mut row = vec![self.shells[i] as f64, self.x[i], self.y[i], self.stderr[i]];
                if let Some(c) = &self.contrast {
                    row.extend([c.y[i], c.stderr[i]]);
                }
                row
            })
            .collect()
    }
}

impl Study for CauchyReport {
    fn csv_header(&self) -> Vec<String> {
        ["n", "m", "y", "stderr"].map(String::from).to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<f64>> {
        (0..self.y.len())
            .map(|i| vec![self.truncations[i] as f64, self.reference as f64, self.y[i], self.stderr[i]])
            .collect()
    }
}

impl Study for SchemeAgreementReport {
    fn csv_header(&self) -> Vec<String> {
        ["dt", "error", "stderr"].map(String::from).to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<f64>> {
        self.dts
            .iter()
            .zip(&self.errors)
            .map(|(dt, e)| vec![*dt, e.mean, e.stderr])
            .collect()
    }
}

impl Study for EnergyStudy {
    fn csv_header(&self) -> Vec<String> {
        ["path", "sup_energy"].map(String::from).to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<f64>> {
        self.sup_energy
            .iter()
            .enumerate()
            .map(|(i, e)| vec![i as f64, *e])
            .collect()
    }
}

impl Study for UniformEnergyReport {
    fn csv_header(&self) -> Vec<String> {
        ["n", "mean_sup", "stderr", "fitted_bound"].map(String::from).to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<f64>> {
        self.truncations
            .iter()
            .zip(&self.mean_sup)
            .map(|(n, m)| vec![*n as f64, m.mean, m.stderr, self.fitted_bound])
            .collect()
    }
}

impl Study for CovarianceTable {
    fn csv_header(&self) -> Vec<String> {
        ["d", "kappa", "modes", "kappa_eff", "l1_norm", "l2_norm", "l2_closed_form", "fourier_sup", "isotropy_defect"]
            .map(String::from)
            .to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.d as f64,
                    r.kappa,
                    r.modes as f64,
                    r.kappa_eff,
                    r.l1_norm,
                    r.l2_norm,
                    r.l2_closed_form,
                    r.fourier_sup,
                    r.isotropy_defect,
                ]
            })
            .collect()
    }
}

/// Writes `path` (JSON) and `path` with extension `csv`.
pub fn persist_study<S: Study>(report: &S, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
            ));
        }
    }
    write_json(path, report)?;
    let csv_path = path.with_extension("csv");
    let mut w = csv_writer(&csv_path)?;
    w.write_record(report.csv_header())?;
    for row in report.csv_rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))
}

pub fn load_study<S: Study>(path: &Path) -> Result<S> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_swe2() -> ScalingStudyConfig {
        ScalingStudyConfig {
            paths: 3,
            t_final: 0.05,
            dt: 1e-3,
            save_count: 6,
            ..ScalingStudyConfig::swe2(0.2, &[1, 2, 3], 0.4)
        }
    }

    #[test]
    fn config_validation() {
        let mut c = small_swe2();
        c.f = Nonlinearity::Linear(1.0);
        assert!(matches!(run_scaling_swe2(&c), Err(Error::Precondition(_))));
        let mut c = small_swe2();
        c.shells = vec![2, 1, 3];
        assert!(run_scaling_swe2(&c).is_err());
        let mut c = small_swe2();
        c.n = 10;
        assert!(matches!(run_scaling_swe2(&c), Err(Error::Precondition(_))));
        let mut c = small_swe2();
        c.a = Some(0.6);
        assert!(run_scaling_swe2(&c).is_err());
        let mut c = ScalingStudyConfig::swe1(0.2, &[1, 2, 3], 0.25);
        c.gamma = Some(0.5);
        assert!(run_scaling_swe1(&c).is_err());
        assert!(run_scaling_swe1(&small_swe2()).is_err());
        assert_eq!(small_swe2().epsilon(), Some(0.1));
    }

    #[test]
    fn silent_family_has_zero_error() {
        let c = ScalingStudyConfig {
            kappa: 0.0,
            ..small_swe2()
        };
        let r = run_scaling_swe2(&c).unwrap();
        assert!(r.y.iter().all(|v| *v == 0.0), "{:?}", r.y);
        assert!(r.pass);
        let c1 = ScalingStudyConfig {
            model: Model::Swe1,
            gamma: Some(0.25),
            a: None,
            ..c
        };
        let r1 = run_scaling_swe1(&c1).unwrap();
        assert!(r1.y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn study_is_reproducible_and_persists() {
        let c = small_swe2();
        let a = run_scaling_swe2(&c).unwrap();
        let b = run_scaling_swe2(&a.config).unwrap();
        assert_eq!(a, b);
        assert!(a.contrast.is_some());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("swe2.json");
        persist_study(&a, &path).unwrap();
        let back: RateReport = load_study(&path).unwrap();
        assert_eq!(back, a);
        let csv = std::fs::read_to_string(path.with_extension("csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(matches!(
            persist_study(&a, &dir.path().join("missing").join("r.json")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn cauchy_trivial_case() {
        let c = CauchyConfig {
            model: Model::Swe1,
            d: 2,
            truncations: vec![2, 3, 4],
            reference: 6,
            dt: 1e-3,
            t_final: 0.05,
            f: Nonlinearity::Zero,
            noise: NoiseSpec::uniform_shell(2, 1.0, 1).unwrap().silenced().to_file(),
            paths: 2,
            seed: 1,
            save_count: 6,
            init: InitSpec::single_mode(&[1, 1], 0.5),
            scheme: None,
        };
        let r = run_cauchy_study(&c).unwrap();
        assert!(r.y.iter().all(|v| *v == 0.0));
        assert!(r.pass);
        let bad = CauchyConfig {
            reference: 4,
            ..c.clone()
        };
        assert!(run_cauchy_study(&bad).is_err());
    }

    #[test]
    fn energy_constant_examples() {
        let c = swe2_energy_constant(&Nonlinearity::Sin(1.0), 1.0);
        assert!((c - (3.0 + FOUR_PI_SQ.ln())).abs() < 1e-12);
        assert!((swe2_energy_constant(&Nonlinearity::Zero, 2.0) - (2.0 + FOUR_PI_SQ.ln() / 2.0)).abs() < 1e-12);
    }
}
