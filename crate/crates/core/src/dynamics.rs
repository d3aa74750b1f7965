//! Galerkin time integration for the four wave systems.
//!
//! With `v = ∂_t u` every model reads
//!
//! ```text
//! du = v dt
//! dv = (Δu + Π_n f(u)) dt  [+ κΔv dt]  [+ Σ_ch Π_n(σ_ch·∇w) dB_ch]
//! ```
//!
//! where the damping term is present for `Swe2` and `DampedWave`, and the
//! noise acts on `w = u` (`Swe1`) or `w = v` (`Swe2`).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::brownian::BrownianDriver;
use crate::diagnostics::energy;
use crate::error::{Error, Result};
use crate::grid::PhysicalGrid;
use crate::noise::{NoiseBasis, TransportOperator};
use crate::nonlinearity::Nonlinearity;
use crate::spectral::{Lattice, SpectralField, FOUR_PI_SQ};

/// Energies above this abort a run; the forcings are globally Lipschitz, so
/// growth this large means the time step is unstable.
pub const BLOW_UP_ENERGY: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    /// Noise on the displacement: `dv = ... + Σ σ·∇u dB`.
    #[serde(rename = "SWE1")]
    Swe1,
    /// Noise on the velocity with its Itô correction: `dv = ... + κΔv dt + Σ σ·∇v dB`.
    #[serde(rename = "SWE2")]
    Swe2,
    #[serde(rename = "WAVE")]
    Wave,
    #[serde(rename = "DAMPED_WAVE")]
    DampedWave,
}

impl Model {
    pub fn is_stochastic(self) -> bool {
        matches!(self, Model::Swe1 | Model::Swe2)
    }

    pub fn is_damped(self) -> bool {
        matches!(self, Model::Swe2 | Model::DampedWave)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Explicit Euler–Maruyama in `v`, followed by `u += dt·v_new`.
    #[serde(rename = "EULER_MARUYAMA")]
    EulerMaruyama,
    /// Exact heat factor `e^{κΔdt}` on `v`, followed by `u += dt·v_new`.
    #[serde(rename = "EXP_EULER")]
    ExpEuler,
    /// Stochastic Heun predictor–corrector (Stratonovich). For `Swe2` the
    /// `κΔv` drift is omitted: it must come out of the scheme.
    #[serde(rename = "STRATONOVICH_HEUN")]
    StratonovichHeun,
}

impl Scheme {
    pub fn default_for(model: Model) -> Scheme {
        if model.is_damped() {
            Scheme::ExpEuler
        } else {
            Scheme::EulerMaruyama
        }
    }
}

/// Displacement and velocity at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct GalerkinState {
    pub t: f64,
    pub u: SpectralField,
    pub v: SpectralField,
}

impl GalerkinState {
    pub fn new(t: f64, u: SpectralField, v: SpectralField) -> Result<GalerkinState> {
        u.require_scalar()?;
        v.require_scalar()?;
        if !u.lattice().same_as(v.lattice()) {
            return Err(Error::InvalidArgument(
                "displacement and velocity live on different lattices".into(),
            ));
        }
        Ok(GalerkinState { t, u, v })
    }

    pub fn zeros(lattice: &Arc<Lattice>) -> GalerkinState {
        GalerkinState {
            t: 0.0,
            u: SpectralField::scalar_zeros(lattice),
            v: SpectralField::scalar_zeros(lattice),
        }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        self.u.lattice()
    }

    pub fn resample(&self, lattice: &Arc<Lattice>) -> Result<GalerkinState> {
        Ok(GalerkinState {
            t: self.t,
            u: self.u.resample(lattice)?,
            v: self.v.resample(lattice)?,
        })
    }
}

/// Which system to integrate and its ingredients.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub model: Model,
    pub basis: Option<Arc<NoiseBasis>>,
    pub f: Nonlinearity,
    pub kappa: f64,
}

impl ModelSpec {
    pub fn new(
        model: Model,
        basis: Option<Arc<NoiseBasis>>,
        f: Nonlinearity,
        kappa: f64,
    ) -> Result<ModelSpec> {
        match (model.is_stochastic(), basis.is_some()) {
            (true, false) => {
                return Err(Error::ModelMismatch(format!("{model:?} needs a noise basis")))
            }
            (false, true) => {
                return Err(Error::ModelMismatch(format!(
                    "{model:?} is deterministic and takes no noise basis"
                )))
            }
            _ => {}
        }
        // κ = 0 is accepted so that a silenced noise family reduces SWE2 to
        // the undamped limit instead of failing
        if model.is_damped() && !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::ModelMismatch(format!(
                "{model:?} needs kappa >= 0, got {kappa}"
            )));
        }
        Ok(ModelSpec {
            model,
            basis,
            f,
            kappa,
        })
    }

    pub fn swe1(basis: Arc<NoiseBasis>, f: Nonlinearity) -> Result<ModelSpec> {
        let kappa = basis.kappa_eff();
        ModelSpec::new(Model::Swe1, Some(basis), f, kappa)
    }

    /// SWE2 with the damping coefficient measured from the basis covariance.
    pub fn swe2(basis: Arc<NoiseBasis>, f: Nonlinearity) -> Result<ModelSpec> {
        let kappa = basis.kappa_eff();
        ModelSpec::new(Model::Swe2, Some(basis), f, kappa)
    }

    pub fn wave(f: Nonlinearity) -> ModelSpec {
        ModelSpec {
            model: Model::Wave,
            basis: None,
            f,
            kappa: 0.0,
        }
    }

    pub fn damped_wave(f: Nonlinearity, kappa: f64) -> Result<ModelSpec> {
        ModelSpec::new(Model::DampedWave, None, f, kappa)
    }
}

/// A saved trajectory, one state per requested save time.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<GalerkinState>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&GalerkinState> {
        self.states.last()
    }

    pub fn displacement_series(&self) -> Vec<(f64, SpectralField)> {
        self.states.iter().map(|s| (s.t, s.u.clone())).collect()
    }
}

/// A model, a scheme and a step size bound to one lattice ball.
#[derive(Debug)]
pub struct Integrator {
    spec: ModelSpec,
    scheme: Scheme,
    dt: f64,
    lattice: Arc<Lattice>,
    transport: Option<TransportOperator>,
    channel_ids: Vec<u64>,
    grid: Option<PhysicalGrid>,
    laplacian: Vec<f64>,
    damping: Vec<f64>,
    heat: Vec<f64>,
}

impl Integrator {
    pub fn new(spec: ModelSpec, scheme: Scheme, dt: f64, lattice: &Arc<Lattice>) -> Result<Integrator> {
        Integrator::with_dealias(spec, scheme, dt, lattice, 2.0)
    }

    pub fn with_dealias(
        spec: ModelSpec,
        scheme: Scheme,
        dt: f64,
        lattice: &Arc<Lattice>,
        dealias_level: f64,
    ) -> Result<Integrator> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        match scheme {
            Scheme::ExpEuler if !spec.model.is_damped() => {
                return Err(Error::ModelMismatch(format!(
                    "EXP_EULER needs a damped model (SWE2 or DAMPED_WAVE), got {:?}",
                    spec.model
                )))
            }
            Scheme::StratonovichHeun if !spec.model.is_stochastic() => {
                return Err(Error::ModelMismatch(format!(
                    "STRATONOVICH_HEUN is only defined for SWE1 and SWE2, got {:?}",
                    spec.model
                )))
            }
            _ => {}
        }
        let transport = spec
            .basis
            .as_ref()
            .map(|b| TransportOperator::new(b, lattice))
            .transpose()?;
        let channel_ids = spec.basis.as_ref().map(|b| b.channel_ids()).unwrap_or_default();
        let grid = if spec.f.is_zero() || matches!(spec.f, Nonlinearity::Linear(_)) {
            None
        } else {
            Some(PhysicalGrid::new(lattice, dealias_level)?)
        };
        let laplacian: Vec<f64> = lattice.norms_sq().iter().map(|q| -FOUR_PI_SQ * q).collect();
        let kappa = if spec.model.is_damped() { spec.kappa } else { 0.0 };
        let damping = laplacian.iter().map(|l| kappa * l).collect();
        let heat = laplacian.iter().map(|l| (kappa * l * dt).exp()).collect();
        Ok(Integrator {
            spec,
            scheme,
            dt,
            lattice: Arc::clone(lattice),
            transport,
            channel_ids,
            grid,
            laplacian,
            damping,
            heat,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn transport(&self) -> Option<&TransportOperator> {
        self.transport.as_ref()
    }

    fn check_state(&self, state: &GalerkinState) -> Result<()> {
        if !state.lattice().same_as(&self.lattice) {
            return Err(Error::LatticeMismatch {
                expected_d: self.lattice.dim(),
                expected_n: self.lattice.radius(),
                got_d: state.lattice().dim(),
                got_n: state.lattice().radius(),
            });
        }
        Ok(())
    }

    fn forcing(&self, u: &SpectralField) -> Result<Option<SpectralField>> {
        match (&self.spec.f, &self.grid) {
            (f, _) if f.is_zero() => Ok(None),
            (Nonlinearity::Linear(c), _) => Ok(Some(u.scaled(*c))),
            (f, Some(grid)) => f.apply_on(grid, u).map(Some),
            (_, None) => unreachable!("grid is built for every non-polynomial forcing"),
        }
    }

    /// `Δu + Π_n f(u)`, plus `κΔv` when `with_damping`.
    fn velocity_drift(&self, state: &GalerkinState, with_damping: bool) -> Result<SpectralField> {
        let mut dv = state.u.apply_weights(&self.laplacian);
        if let Some(fu) = self.forcing(&state.u)? {
            dv.axpy(1.0, &fu)?;
        }
        if with_damping && self.spec.model.is_damped() {
            dv.axpy(1.0, &state.v.apply_weights(&self.damping))?;
        }
        Ok(dv)
    }

    /// `(du/dt, dv/dt)` of the Itô form.
    pub fn drift(&self, state: &GalerkinState) -> Result<(SpectralField, SpectralField)> {
        self.check_state(state)?;
        Ok((state.v.clone(), self.velocity_drift(state, true)?))
    }

    /// `Σ_ch Π_n(σ_ch·∇w) ΔB_ch` with `w = u` (SWE1) or `w = v` (SWE2).
    pub fn diffusion(&self, state: &GalerkinState, increments: &[f64]) -> Result<SpectralField> {
        self.check_state(state)?;
        let op = self.transport.as_ref().ok_or_else(|| {
            Error::ModelMismatch(format!("{:?} has no noise basis", self.spec.model))
        })?;
        let target = match self.spec.model {
            Model::Swe1 => &state.u,
            _ => &state.v,
        };
        op.apply_combined(target, increments)
    }

    pub fn increments(&self, driver: &BrownianDriver, step_index: u64) -> Vec<f64> {
        driver.increments(&self.channel_ids, step_index)
    }

    fn check_driver(&self, driver: &BrownianDriver) -> Result<()> {
        if (driver.dt() - self.dt).abs() > 1e-12 * self.dt {
            return Err(Error::InvalidArgument(format!(
                "driver dt {} differs from integrator dt {}",
                driver.dt(),
                self.dt
            )));
        }
        Ok(())
    }

    /// Advances one step of size `dt`, drawing increments for `step_index`.
    pub fn step(
        &self,
        state: &GalerkinState,
        driver: &BrownianDriver,
        step_index: u64,
    ) -> Result<GalerkinState> {
        self.check_state(state)?;
        self.check_driver(driver)?;
        let noise = if self.spec.model.is_stochastic() {
            Some(self.increments(driver, step_index))
        } else {
            None
        };
        self.step_with(state, noise.as_deref())
    }

    /// One step with explicit channel increments (`None` for deterministic models).
    pub fn step_with(&self, state: &GalerkinState, increments: Option<&[f64]>) -> Result<GalerkinState> {
        self.check_state(state)?;
        let dt = self.dt;
        let noise = match (self.spec.model.is_stochastic(), increments) {
            (true, Some(inc)) => Some(inc),
            (true, None) => {
                return Err(Error::InvalidArgument("stochastic step needs increments".into()))
            }
            (false, _) => None,
        };
        let t = state.t + dt;
        match self.scheme {
            Scheme::EulerMaruyama => {
                let mut v = state.v.clone();
                v.axpy(dt, &self.velocity_drift(state, true)?)?;
                if let Some(inc) = noise {
                    v.axpy(1.0, &self.diffusion(state, inc)?)?;
                }
                let mut u = state.u.clone();
                u.axpy(dt, &v)?;
                Ok(GalerkinState { t, u, v })
            }
            Scheme::ExpEuler => {
                let mut w = state.v.clone();
                w.axpy(dt, &self.velocity_drift(state, false)?)?;
                if let Some(inc) = noise {
                    w.axpy(1.0, &self.diffusion(state, inc)?)?;
                }
                w.apply_weights_in_place(&self.heat);
                let mut u = state.u.clone();
                u.axpy(dt, &w)?;
                Ok(GalerkinState { t, u, v: w })
            }
            Scheme::StratonovichHeun => {
                let inc = noise.expect("Heun is restricted to stochastic models");
                let a0 = self.velocity_drift(state, false)?;
                let b0 = self.diffusion(state, inc)?;
                let mut pred_u = state.u.clone();
                pred_u.axpy(dt, &state.v)?;
                let mut pred_v = state.v.clone();
                pred_v.axpy(dt, &a0)?;
                pred_v.axpy(1.0, &b0)?;
                let pred = GalerkinState {
                    t,
                    u: pred_u,
                    v: pred_v,
                };
                let a1 = self.velocity_drift(&pred, false)?;
                let b1 = self.diffusion(&pred, inc)?;
                let mut u = state.u.clone();
                u.axpy(0.5 * dt, &state.v)?;
                u.axpy(0.5 * dt, &pred.v)?;
                let mut v = state.v.clone();
                v.axpy(0.5 * dt, &a0)?;
                v.axpy(0.5 * dt, &a1)?;
                v.axpy(0.5, &b0)?;
                v.axpy(0.5, &b1)?;
                Ok(GalerkinState { t, u, v })
            }
        }
    }

    /// Maps save times onto step indices of this integrator's grid.
    pub fn save_steps(&self, t_final: f64, save_times: &[f64]) -> Result<(u64, Vec<u64>)> {
        let total = time_to_step(t_final, self.dt)?;
        let mut steps = Vec::with_capacity(save_times.len());
        for &t in save_times {
            if !(t >= 0.0) || t > t_final * (1.0 + 1e-12) + 1e-15 {
                return Err(Error::TimeGrid(format!("save time {t} outside [0, {t_final}]")));
            }
            let s = time_to_step(t, self.dt)?;
            if steps.last().is_some_and(|&prev| s < prev) {
                return Err(Error::TimeGrid("save times must be non-decreasing".into()));
            }
            steps.push(s);
        }
        Ok((total, steps))
    }

    /// Integrates `init` to `t_final`, keeping the states at `save_times`
    /// (only the final state when `save_times` is empty).
    pub fn run(
        &self,
        init: &GalerkinState,
        t_final: f64,
        driver: &BrownianDriver,
        save_times: &[f64],
    ) -> Result<Trajectory> {
        self.run_observed(init, t_final, driver, save_times, |_, _| {})
    }

    /// Like [`Integrator::run`], calling `observe(step_index, state)` on every
    /// step (including step 0).
    pub fn run_observed(
        &self,
        init: &GalerkinState,
        t_final: f64,
        driver: &BrownianDriver,
        save_times: &[f64],
        mut observe: impl FnMut(u64, &GalerkinState),
    ) -> Result<Trajectory> {
        self.check_state(init)?;
        self.check_driver(driver)?;
        let (total, steps) = self.save_steps(t_final, save_times)?;
        let mut saved = Vec::with_capacity(steps.len().max(1));
        let mut state = GalerkinState {
            t: 0.0,
            ..init.clone()
        };
        let mut next = 0;
        let mut last_finite = energy(&state).total;
        observe(0, &state);
        for k in 0..=total {
            while next < steps.len() && steps[next] == k {
                saved.push(state.clone());
                next += 1;
            }
            if k == total {
                break;
            }
            state = self.step(&state, driver, k)?;
            state.t = (k + 1) as f64 * self.dt;
            let e = energy(&state).total;
            if !e.is_finite() || e > BLOW_UP_ENERGY {
                return Err(Error::BlowUp {
                    t: state.t,
                    energy: e,
                    last_finite,
                });
            }
            last_finite = e;
            observe(k + 1, &state);
        }
        if save_times.is_empty() {
            saved.push(state);
        }
        Ok(saved_trajectory(saved))
    }
}

fn saved_trajectory(states: Vec<GalerkinState>) -> Trajectory {
    Trajectory { states }
}

fn time_to_step(t: f64, dt: f64) -> Result<u64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::TimeGrid(format!("time {t} must be finite and >= 0")));
    }
    let x = t / dt;
    let s = x.round();
    if (x - s).abs() > 1e-6 * s.max(1.0) {
        return Err(Error::TimeGrid(format!("time {t} is not a multiple of dt = {dt}")));
    }
    Ok(s as u64)
}

/// `count` save times spread uniformly over `[0, t_final]`, snapped to the dt grid.
pub fn uniform_save_times(t_final: f64, dt: f64, count: usize) -> Result<Vec<f64>> {
    let total = time_to_step(t_final, dt)?;
    if count < 2 {
        return Err(Error::TimeGrid("need at least two save times".into()));
    }
    let mut steps: Vec<u64> = (0..count)
        .map(|i| ((i as f64) * total as f64 / (count - 1) as f64).round() as u64)
        .collect();
    steps.dedup();
    Ok(steps.into_iter().map(|s| s as f64 * dt).collect())
}

/// Fine and coarse trajectories driven by the same Brownian path.
#[derive(Clone, Debug)]
pub struct PairedTrajectory {
    pub fine: Trajectory,
    pub coarse: Trajectory,
    pub fine_radius: usize,
    pub coarse_radius: usize,
}

/// Runs the same model at truncations `fine_radius >= coarse_radius` with a
/// shared driver. The coarse start is the projection of the fine one.
#[allow(clippy::too_many_arguments)]
pub fn coupled_pair_run(
    spec: &ModelSpec,
    scheme: Scheme,
    dt: f64,
    init: &GalerkinState,
    t_final: f64,
    driver: &BrownianDriver,
    fine_radius: usize,
    coarse_radius: usize,
    save_times: &[f64],
) -> Result<PairedTrajectory> {
    if fine_radius < coarse_radius {
        return Err(Error::InvalidArgument(format!(
            "fine truncation {fine_radius} is below coarse truncation {coarse_radius}"
        )));
    }
    let d = init.lattice().dim();
    let fine_lattice = Lattice::new(d, fine_radius)?;
    let coarse_lattice = Lattice::new(d, coarse_radius)?;
    let fine_init = init.resample(&fine_lattice)?;
    let coarse_init = fine_init.resample(&coarse_lattice)?;
    let fine = Integrator::new(spec.clone(), scheme, dt, &fine_lattice)?;
    let coarse = Integrator::new(spec.clone(), scheme, dt, &coarse_lattice)?;
    Ok(PairedTrajectory {
        fine: fine.run(&fine_init, t_final, driver, save_times)?,
        coarse: coarse.run(&coarse_init, t_final, driver, save_times)?,
        fine_radius,
        coarse_radius,
    })
}
