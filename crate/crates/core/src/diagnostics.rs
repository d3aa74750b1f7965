//! Energies, truncation-difference energies, increment moments and the
//! stochastic convolution.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::brownian::BrownianDriver;
use crate::dynamics::{GalerkinState, PairedTrajectory, Trajectory};
use crate::error::{Error, Result};
use crate::noise::{NoiseBasis, TransportOperator};
use crate::spectral::{Lattice, SpectralField, FOUR_PI_SQ};
use crate::stats::{estimate_mean, fit_rate, pairwise_sum, MeanEstimate};

/// `E = ‖u‖²_{H¹} + ‖v‖²_{L²}` at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub t: f64,
    pub e_u_h1: f64,
    pub e_v_l2: f64,
    pub total: f64,
}

pub fn energy(state: &GalerkinState) -> EnergyRecord {
    let e_u_h1 = state.u.sobolev_norm_sq(1.0);
    let e_v_l2 = state.v.sobolev_norm_sq(0.0);
    EnergyRecord {
        t: state.t,
        e_u_h1,
        e_v_l2,
        total: e_u_h1 + e_v_l2,
    }
}

pub fn energy_series(trajectory: &Trajectory) -> Vec<EnergyRecord> {
    trajectory.states.iter().map(energy).collect()
}

/// `‖∇u‖² + ‖v‖²`, conserved by the linear wave flow.
pub fn wave_energy(state: &GalerkinState) -> f64 {
    let lattice = state.lattice();
    let terms: Vec<f64> = state
        .u
        .coeffs()
        .iter()
        .zip(state.v.coeffs())
        .zip(lattice.norms_sq())
        .map(|((u, v), q)| FOUR_PI_SQ * q * u.norm_sqr() + v.norm_sqr())
        .collect();
    pairwise_sum(&terms)
}

/// `N = ‖u_m − u_n‖²_{L²} + ‖v_m − v_n‖²_{H^{-1}}` at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferenceEnergy {
    pub t: f64,
    pub n_low: usize,
    pub n_high: usize,
    pub w_l2: f64,
    pub z_hm1: f64,
    pub total: f64,
}

/// Difference energy of two states; the coarser one is embedded in the finer ball.
pub fn state_difference_energy(a: &GalerkinState, b: &GalerkinState) -> Result<DifferenceEnergy> {
    if a.lattice().dim() != b.lattice().dim() {
        return Err(Error::LatticeMismatch {
            expected_d: a.lattice().dim(),
            expected_n: a.lattice().radius(),
            got_d: b.lattice().dim(),
            got_n: b.lattice().radius(),
        });
    }
    if (a.t - b.t).abs() > 1e-9 * a.t.abs().max(1.0) {
        return Err(Error::TimeGrid(format!("states at different times {} and {}", a.t, b.t)));
    }
    let (fine, coarse) = if a.lattice().radius() >= b.lattice().radius() {
        (a, b)
    } else {
        (b, a)
    };
    let target = fine.lattice();
    let w = fine.u.sub(&coarse.u.resample(target)?)?;
    let z = fine.v.sub(&coarse.v.resample(target)?)?;
    let w_l2 = w.sobolev_norm_sq(0.0);
    let z_hm1 = z.sobolev_norm_sq(-1.0);
    Ok(DifferenceEnergy {
        t: fine.t,
        n_low: coarse.lattice().radius(),
        n_high: fine.lattice().radius(),
        w_l2,
        z_hm1,
        total: w_l2 + z_hm1,
    })
}

/// `N_{m,n}(t)` at every saved time of a coupled pair.
pub fn difference_energy(pair: &PairedTrajectory) -> Result<Vec<DifferenceEnergy>> {
    if pair.fine.len() != pair.coarse.len() {
        return Err(Error::TimeGrid(format!(
            "paired trajectories have {} and {} saved states",
            pair.fine.len(),
            pair.coarse.len()
        )));
    }
    pair.fine
        .states
        .iter()
        .zip(&pair.coarse.states)
        .map(|(f, c)| state_difference_energy(f, c))
        .collect()
}

pub fn sup_difference(series: &[DifferenceEnergy]) -> f64 {
    series.iter().map(|e| e.total).fold(0.0, f64::max)
}

/// Fourth moments `E‖v(t+ℓ) − v(t)‖⁴_{H^{-ρ}}` against the lag `ℓ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementMomentTable {
    pub rho: f64,
    pub lags: Vec<f64>,
    pub moments: Vec<MeanEstimate>,
    /// Log-log slope over the positive lags, when there are at least three.
    pub slope: Option<f64>,
}

/// Averages over paths and over every start time on the save grid.
/// `lags` are in units of save-grid steps.
pub fn increment_moment(ensemble: &[Trajectory], rho: f64, lags: &[usize]) -> Result<IncrementMomentTable> {
    let first = ensemble
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?;
    let d = first.states.first().map(|s| s.lattice().dim()).unwrap_or(2);
    if !(rho > d as f64 / 2.0 + 1.0) {
        return Err(Error::InvalidArgument(format!(
            "rho must exceed d/2 + 1 = {}, got {rho}",
            d as f64 / 2.0 + 1.0
        )));
    }
    if lags.len() < 2 {
        return Err(Error::InvalidArgument("need at least two lags".into()));
    }
    let len = first.len();
    if ensemble.iter().any(|t| t.len() != len) {
        return Err(Error::TimeGrid("ensemble members have different save grids".into()));
    }
    if lags.iter().any(|&l| l >= len.max(1)) {
        return Err(Error::InvalidArgument(format!("lags must be below the {len} saved states")));
    }
    let spacing = if len > 1 {
        first.states[1].t - first.states[0].t
    } else {
        0.0
    };
    let mut moments = Vec::with_capacity(lags.len());
    for &lag in lags {
        let mut samples = Vec::new();
        for traj in ensemble {
            for s in 0..len - lag {
                let dv = traj.states[s + lag].v.sub(&traj.states[s].v)?;
                samples.push(dv.sobolev_norm_sq(-rho).powi(2));
            }
        }
        moments.push(estimate_mean(&samples)?);
    }
    let lag_times: Vec<f64> = lags.iter().map(|&l| l as f64 * spacing).collect();
    let (x, y): (Vec<f64>, Vec<f64>) = lag_times
        .iter()
        .zip(&moments)
        .filter(|(l, m)| **l > 0.0 && m.mean > 0.0)
        .map(|(l, m)| (*l, m.mean))
        .unzip();
    let slope = if x.len() >= 3 {
        Some(fit_rate(&x, &y)?.slope)
    } else {
        None
    };
    Ok(IncrementMomentTable {
        rho,
        lags: lag_times,
        moments,
        slope,
    })
}

/// Velocity fed into the stochastic convolution.
#[derive(Clone, Copy, Debug)]
pub enum VelocityPath<'a> {
    Frozen(&'a SpectralField),
    /// One field per time step, `v(t_k)` at index `k`.
    Sampled(&'a [SpectralField]),
}

impl VelocityPath<'_> {
    fn at(&self, step: usize) -> Result<&SpectralField> {
        match self {
            VelocityPath::Frozen(v) => Ok(v),
            VelocityPath::Sampled(vs) => vs.get(step).ok_or_else(|| {
                Error::TimeGrid(format!("velocity path has no sample at step {step}"))
            }),
        }
    }
}

/// Left-point discretisation of `Z_t = Σ_ch ∫₀ᵗ e^{κ(t−s)Δ} Π(σ_ch·∇v_s) dB_ch(s)`:
/// `Z_{k+1} = e^{κΔ dt} Z_k + Σ_ch Π(σ_ch·∇v_{t_k}) ΔB_ch^k`.
///
/// `observe(k, Z_k)` is called for `k = 0..=steps`.
pub fn stochastic_convolution_observed(
    op: &TransportOperator,
    velocity: VelocityPath<'_>,
    kappa: f64,
    steps: usize,
    driver: &BrownianDriver,
    mut observe: impl FnMut(usize, &SpectralField),
) -> Result<SpectralField> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidArgument(format!("kappa must be > 0, got {kappa}")));
    }
    if let VelocityPath::Sampled(vs) = velocity {
        if vs.len() < steps {
            return Err(Error::TimeGrid(format!(
                "t = {} is beyond the {}-step velocity path",
                steps as f64 * driver.dt(),
                vs.len()
            )));
        }
    }
    let lattice: &Arc<Lattice> = op.lattice();
    let heat: Vec<f64> = lattice
        .norms_sq()
        .iter()
        .map(|q| (-FOUR_PI_SQ * kappa * q * driver.dt()).exp())
        .collect();
    let ids = op.basis().channel_ids();
    let mut z = SpectralField::scalar_zeros(lattice);
    let mut inc = Vec::with_capacity(ids.len());
    observe(0, &z);
    for k in 0..steps {
        let v = velocity.at(k)?;
        z.apply_weights_in_place(&heat);
        driver.increments_into(&ids, k as u64, &mut inc);
        op.accumulate_combined(v, &inc, 1.0, &mut z)?;
        observe(k + 1, &z);
    }
    Ok(z)
}

pub fn stochastic_convolution(
    op: &TransportOperator,
    velocity: VelocityPath<'_>,
    kappa: f64,
    steps: usize,
    driver: &BrownianDriver,
) -> Result<SpectralField> {
    stochastic_convolution_observed(op, velocity, kappa, steps, driver, |_, _| {})
}

/// `E sup_t ‖Z_t‖²_{H^{-a}}` for each member of a noise family, with the log-log
/// slope against `‖Q‖_{L¹}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionBoundReport {
    pub a: f64,
    pub epsilon: f64,
    pub kappa: f64,
    pub l1_norms: Vec<f64>,
    pub sup_norms: Vec<MeanEstimate>,
    pub slope: f64,
    pub r2: f64,
    /// `2(a − ε)/d`
    pub target: f64,
}

#[derive(Clone, Debug)]
pub struct ConvolutionStudy<'a> {
    pub family: &'a [Arc<NoiseBasis>],
    pub velocity: &'a SpectralField,
    pub kappa: f64,
    pub dt: f64,
    pub steps: usize,
    /// Sup over every `save_every`-th step.
    pub save_every: usize,
    pub paths: usize,
    pub seed: u64,
}

pub fn convolution_bound_report(study: &ConvolutionStudy<'_>, epsilon: f64, a: f64) -> Result<ConvolutionBoundReport> {
    use rayon::prelude::*;

    if study.family.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need a family of at least 3 bases, got {}",
            study.family.len()
        )));
    }
    if !(epsilon > 0.0 && epsilon <= a) {
        return Err(Error::InvalidArgument(format!("need 0 < epsilon <= a, got {epsilon}, {a}")));
    }
    let d = study.velocity.lattice().dim();
    let mut l1_norms = Vec::new();
    let mut sup_norms = Vec::new();
    for basis in study.family {
        let report = basis.covariance_norms(basis.default_quadrature_level())?;
        l1_norms.push(report.l1_norm);
        let op = TransportOperator::new(basis, study.velocity.lattice())?;
        let sups: Vec<f64> = (0..study.paths as u64)
            .into_par_iter()
            .map(|p| {
                let driver = BrownianDriver::new(crate::brownian::path_seed(study.seed, p), study.dt)?;
                let mut sup = 0.0f64;
                stochastic_convolution_observed(
                    &op,
                    VelocityPath::Frozen(study.velocity),
                    study.kappa,
                    study.steps,
                    &driver,
                    |k, z| {
                        if k % study.save_every.max(1) == 0 || k == study.steps {
                            sup = sup.max(z.sobolev_norm_sq(-a));
                        }
                    },
                )?;
                Ok(sup)
            })
            .collect::<Result<_>>()?;
        sup_norms.push(estimate_mean(&sups)?);
    }
    let means: Vec<f64> = sup_norms.iter().map(|m| m.mean).collect();
    let fit = fit_rate(&l1_norms, &means)?;
    Ok(ConvolutionBoundReport {
        a,
        epsilon,
        kappa: study.kappa,
        l1_norms,
        sup_norms,
        slope: fit.slope,
        r2: fit.r2,
        target: 2.0 * (a - epsilon) / d as f64,
    })
}

/// `Σ_ch ∫₀ᵗ ‖e^{κ(t−s)Δ} Π(σ_ch·∇v)‖²_{H^{-eps}} ds` for a frozen `v`, by
/// composite Simpson with `intervals` (rounded up to even) subintervals.
pub fn isometry_quadrature(
    op: &TransportOperator,
    v: &SpectralField,
    kappa: f64,
    t: f64,
    eps: f64,
    intervals: usize,
) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("t must be finite and >= 0, got {t}")));
    }
    let intervals = intervals.max(2).next_multiple_of(2);
    let h = t / intervals as f64;
    let mut total = 0.0;
    for ch in 0..op.num_channels() {
        let g = op.apply_channel(ch, v)?;
        let mut acc = 0.0;
        for i in 0..=intervals {
            let w = if i == 0 || i == intervals {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let lag = t - i as f64 * h;
            acc += w * g.heat_multiply(kappa, lag)?.sobolev_norm_sq(-eps);
        }
        total += acc * h / 3.0;
    }
    Ok(total)
}

/// Ensemble `E‖Z_t‖²_{H^{-eps}}` against [`isometry_quadrature`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsometryReport {
    pub t: f64,
    pub eps: f64,
    pub ensemble: MeanEstimate,
    pub quadrature: f64,
    /// `|ensemble − quadrature| / stderr`
    pub z_score: f64,
    /// `z_score <= 3`
    pub pass: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn isometry_report(
    op: &TransportOperator,
    v: &SpectralField,
    kappa: f64,
    dt: f64,
    steps: usize,
    eps: f64,
    paths: usize,
    seed: u64,
) -> Result<IsometryReport> {
    use rayon::prelude::*;

    if paths < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 paths, got {paths}")));
    }
    let samples: Vec<f64> = (0..paths as u64)
        .into_par_iter()
        .map(|p| {
            let driver = BrownianDriver::new(crate::brownian::path_seed(seed, p), dt)?;
            let z = stochastic_convolution(op, VelocityPath::Frozen(v), kappa, steps, &driver)?;
            Ok(z.sobolev_norm_sq(-eps))
        })
        .collect::<Result<_>>()?;
    let ensemble = estimate_mean(&samples)?;
    let t = steps as f64 * dt;
    let quadrature = isometry_quadrature(op, v, kappa, t, eps, 2000)?;
    let z_score = (ensemble.mean - quadrature).abs() / ensemble.stderr;
    Ok(IsometryReport {
        t,
        eps,
        ensemble,
        quadrature,
        z_score,
        pass: z_score <= 3.0,
    })
}

pub fn write_energy_csv(path: &Path, records: &[EnergyRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "e_u_h1", "e_v_l2", "total"])?;
    for r in records {
        w.write_record(&[r.t, r.e_u_h1, r.e_v_l2, r.total].map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_difference_csv(path: &Path, records: &[DifferenceEnergy]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "w_l2", "z_hm1", "total"])?;
    for r in records {
        w.write_record(&[r.t, r.w_l2, r.z_hm1, r.total].map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;

    use super::*;
    use crate::dynamics::{coupled_pair_run, Integrator, ModelSpec, Scheme};
    use crate::noise::NoiseSpec;
    use crate::nonlinearity::Nonlinearity;

    fn lat(n: usize) -> Arc<Lattice> {
        Lattice::new(2, n).unwrap()
    }

    fn mode_state(l: &Arc<Lattice>, j: &[i32], u: f64, v: f64) -> GalerkinState {
        let mut s = GalerkinState::zeros(l);
        s.u.set_pair(j, Complex64::new(u, 0.0)).unwrap();
        s.v.set_pair(j, Complex64::new(v, 0.0)).unwrap();
        s
    }

    #[test]
    fn energy_examples() {
        let l = lat(4);
        assert_eq!(energy(&GalerkinState::zeros(&l)).total, 0.0);
        let e = energy(&mode_state(&l, &[1, 0], 0.5, 0.0));
        assert!((e.e_u_h1 - 1.0).abs() < 1e-15);
        let a = mode_state(&l, &[1, 1], 0.3, 0.2);
        let b = mode_state(&l, &[2, 1], -0.1, 0.4);
        let both = GalerkinState::new(0.0, a.u.add(&b.u).unwrap(), a.v.add(&b.v).unwrap()).unwrap();
        assert!((energy(&both).total - energy(&a).total - energy(&b).total).abs() < 1e-14);
    }

    #[test]
    fn wave_energy_drift_is_first_order() {
        let l = lat(3);
        let dt = 1e-3;
        let t_final = 1.0;
        let integ = Integrator::new(ModelSpec::wave(Nonlinearity::Zero), Scheme::EulerMaruyama, dt, &l).unwrap();
        let driver = BrownianDriver::new(0, dt).unwrap();
        let init = mode_state(&l, &[1, 2], 0.4, 0.3);
        let e0 = wave_energy(&init);
        let mut worst = 0.0f64;
        integ
            .run_observed(&init, t_final, &driver, &[], |_, s| {
                worst = worst.max((wave_energy(s) - e0).abs() / e0);
            })
            .unwrap();
        assert!(worst <= 10.0 * dt * t_final, "relative drift {worst}");
    }

    #[test]
    fn difference_energy_examples() {
        let l = lat(8);
        let mut init = mode_state(&l, &[1, 0], 0.5, 0.2);
        init.u.set_pair(&[5, 2], Complex64::new(0.1, 0.05)).unwrap();
        init.v.set_pair(&[3, 3], Complex64::new(-0.2, 0.0)).unwrap();
        let basis = Arc::new(NoiseBasis::new(NoiseSpec::uniform_shell(2, 0.5, 1).unwrap()).unwrap());
        let spec = ModelSpec::swe1(basis, Nonlinearity::Sin(1.0)).unwrap();
        let driver = BrownianDriver::new(4, 1e-3).unwrap();
        let pair = coupled_pair_run(&spec, Scheme::EulerMaruyama, 1e-3, &init, 0.05, &driver, 8, 4, &[0.0, 0.05]).unwrap();
        let series = difference_energy(&pair).unwrap();
        // projection oracle at t = 0: only the modes outside the coarse ball survive
        let mut w = SpectralField::scalar_zeros(&l);
        w.set_pair(&[5, 2], Complex64::new(0.1, 0.05)).unwrap();
        let mut z = SpectralField::scalar_zeros(&l);
        z.set_pair(&[3, 3], Complex64::new(-0.2, 0.0)).unwrap();
        let want = w.sobolev_norm_sq(0.0) + z.sobolev_norm_sq(-1.0);
        assert!((series[0].total - want).abs() < 1e-15);
        assert!(series[1].total > 0.0);
        assert_eq!((series[0].n_low, series[0].n_high), (4, 8));

        let same = state_difference_energy(&init, &init).unwrap();
        assert_eq!(same.total, 0.0);
        let mut later = init.clone();
        later.t = 1.0;
        assert!(state_difference_energy(&init, &later).is_err());
    }

    #[test]
    fn increment_moment_examples() {
        let l = lat(3);
        let s = mode_state(&l, &[1, 1], 0.2, 0.4);
        let frozen = Trajectory {
            states: (0..5)
                .map(|k| GalerkinState {
                    t: k as f64 * 0.1,
                    ..s.clone()
                })
                .collect(),
        };
        let table = increment_moment(&[frozen.clone()], 2.5, &[0, 1, 2]).unwrap();
        assert!(table.moments.iter().all(|m| m.mean == 0.0));
        assert!(increment_moment(&[frozen.clone()], 2.0, &[0, 1]).is_err());
        assert!(increment_moment(&[frozen.clone()], 2.5, &[1]).is_err());
        assert!(increment_moment(&[frozen], 2.5, &[1, 9]).is_err());
    }

    #[test]
    fn convolution_examples() {
        let l = lat(8);
        let basis = Arc::new(NoiseBasis::new(NoiseSpec::uniform_shell(2, 1.0, 1).unwrap()).unwrap());
        let op = TransportOperator::new(&basis, &l).unwrap();
        let dt = 1e-3;
        let driver = BrownianDriver::new(6, dt).unwrap();
        let zero = SpectralField::scalar_zeros(&l);
        assert!(stochastic_convolution(&op, VelocityPath::Frozen(&zero), 0.5, 20, &driver).unwrap().is_zero());
        let v = SpectralField::cosine_mode(&l, &[1, 2], 1.0).unwrap();
        let one = stochastic_convolution(&op, VelocityPath::Frozen(&v), 0.5, 1, &driver).unwrap();
        let inc = driver.increments(&basis.channel_ids(), 0);
        let want = op.apply_combined(&v, &inc).unwrap();
        assert!(one.sub(&want).unwrap().l2_norm() < 1e-15);
        let short = vec![v.clone(); 3];
        assert!(stochastic_convolution(&op, VelocityPath::Sampled(&short), 0.5, 4, &driver).is_err());
        assert!(stochastic_convolution(&op, VelocityPath::Sampled(&short), 0.5, 3, &driver).is_ok());
    }

    #[test]
    fn csv_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("energy.csv");
        let l = lat(2);
        write_energy_csv(&path, &[energy(&mode_state(&l, &[1, 0], 0.5, 0.0))]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,e_u_h1,e_v_l2,total\n"));
        let missing = dir.path().join("nope").join("energy.csv");
        match write_energy_csv(&missing, &[]) {
            Err(Error::Io { path, .. }) => assert_eq!(path, missing),
            other => panic!("expected io error, got {other:?}"),
        }
    }
}
