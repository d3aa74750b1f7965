//! Fast invariant checks on the operators and integrators, each with a
//! tolerance and a pass flag.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::brownian::BrownianDriver;
use crate::config::random_h1_field;
use crate::diagnostics::isometry_report;
use crate::dynamics::{GalerkinState, Integrator, ModelSpec, Scheme};
use crate::error::Result;
use crate::experiments::{scaling_family, KAPPA_EFF_TOLERANCE};
use crate::noise::{NoiseBasis, NoiseSpec, TransportOperator};
use crate::nonlinearity::Nonlinearity;
use crate::spectral::{Lattice, SpectralField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Measured defect; the check passes when it is at most `tolerance`.
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: &str, value: f64, tolerance: f64) -> Check {
        Check {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn covariance_checks(checks: &mut Vec<Check>) -> Result<()> {
    let mut l2_gap = 0.0f64;
    let mut isotropy = 0.0f64;
    for (d, kappa, shell) in [(2, 1.0, 1), (2, 0.3, 3), (3, 0.5, 2)] {
        let basis = NoiseBasis::new(NoiseSpec::uniform_shell(d, kappa, shell)?)?;
        let r = basis.covariance_norms(basis.default_quadrature_level())?;
        l2_gap = l2_gap.max(relative(r.l2_norm.powi(2), r.l2_closed_form.powi(2)));
        isotropy = isotropy.max(r.isotropy_defect());
    }
    checks.push(Check::new("covariance L2 closed form (relative)", l2_gap, 1e-8));
    checks.push(Check::new("isotropy of Q(0) (relative to trace)", isotropy, 1e-10));
    let mut spread = 0.0f64;
    for (d, shells) in [(2, vec![1, 2, 4, 8]), (3, vec![1, 2])] {
        let family = scaling_family(d, 1.0, &shells)?;
        let k0 = family[0].1.kappa_eff;
        for (_, r) in &family {
            spread = spread.max((r.kappa_eff - k0).abs());
        }
    }
    checks.push(Check::new("kappa_eff spread across a family", spread, KAPPA_EFF_TOLERANCE));
    Ok(())
}

fn operator_checks(checks: &mut Vec<Check>, seed: u64) -> Result<()> {
    let lattice = Lattice::new(2, 12)?;
    let basis = Arc::new(NoiseBasis::new(NoiseSpec::uniform_shell(2, 0.8, 2)?)?);
    let op = TransportOperator::new(&basis, &lattice)?;
    let kappa_eff = basis.kappa_eff();
    let reach = basis.spec().max_norm();
    let mut qv_gap = 0.0f64;
    let mut ito_gap = 0.0f64;
    let mut boundary_excess = 0.0f64;
    for k in 0..10 {
        let full = random_h1_field(&lattice, 1.0, seed.wrapping_add(k));
        let grad = |u: &SpectralField| -> Result<f64> { Ok(u.gradient()?.sobolev_norm_sq(0.0)) };

        let u = full.project((12.0 - reach) as usize)?;
        let qv = op.quadratic_variation(&u)?;
        qv_gap = qv_gap.max(relative(qv, 2.0 * kappa_eff * grad(&u)?));

        let rhs = 2.0 * kappa_eff * grad(&full)?;
        boundary_excess = boundary_excess.max((op.quadratic_variation(&full)? - rhs) / rhs);

        let v = full.project((12.0 - 2.0 * reach) as usize)?;
        let want = v.laplacian().scaled(kappa_eff);
        let got = op.ito_correction(&v)?;
        ito_gap = ito_gap.max(got.sub(&want)?.l2_norm() / want.l2_norm());
    }
    checks.push(Check::new("quadratic variation = 2 kappa_eff |grad u|^2", qv_gap, 1e-8));
    checks.push(Check::new("truncated quadratic variation excess", boundary_excess, 1e-12));
    checks.push(Check::new("Ito correction = kappa_eff Laplacian", ito_gap, 1e-8));
    Ok(())
}

fn integrator_checks(checks: &mut Vec<Check>, seed: u64) -> Result<()> {
    let (dt, t) = (1e-3, 1.0);
    let lattice = Lattice::new(2, 4)?;
    let j = [1, 0];
    let init = GalerkinState::new(
        0.0,
        SpectralField::cosine_mode(&lattice, &j, 1.0)?,
        SpectralField::scalar_zeros(&lattice),
    )?;
    let wave = Integrator::new(ModelSpec::wave(Nonlinearity::Zero), Scheme::EulerMaruyama, dt, &lattice)?;
    let driver = BrownianDriver::new(seed, dt)?;
    let traj = wave.run(&init, t, &driver, &[])?;
    let end = traj.last().expect("final state");
    let omega = 2.0 * PI;
    let du = end.u.sub(&SpectralField::cosine_mode(&lattice, &j, (omega * t).cos())?)?;
    let dv = end.v.sub(&SpectralField::cosine_mode(&lattice, &j, -omega * (omega * t).sin())?)?;
    let err = (du.sobolev_norm_sq(1.0) + dv.sobolev_norm_sq(0.0)).sqrt();
    checks.push(Check::new("single-mode wave vs closed form", err, 5.0 * dt * t));

    let lattice = Lattice::new(2, 8)?;
    let basis = Arc::new(NoiseBasis::new(NoiseSpec::uniform_shell(2, 1.0, 1)?)?);
    let swe2 = Integrator::new(ModelSpec::swe2(Arc::clone(&basis), Nonlinearity::Sin(1.0))?, Scheme::ExpEuler, dt, &lattice)?;
    let init = GalerkinState::new(0.0, random_h1_field(&lattice, 1.0, seed), SpectralField::scalar_zeros(&lattice))?;
    let traj = swe2.run(&init, 0.1, &driver, &[])?;
    let end = traj.last().expect("final state");
    let defect = end.u.conjugate_symmetry_defect().max(end.v.conjugate_symmetry_defect());
    checks.push(Check::new("SWE2 step keeps fields real", defect, 1e-12));

    let op = TransportOperator::new(&basis, &lattice)?;
    let v = SpectralField::cosine_mode(&lattice, &j, 1.0)?;
    let iso = isometry_report(&op, &v, 0.5, 1e-4, 5000, 0.1, 400, seed)?;
    checks.push(Check::new("Ito isometry (standard errors)", iso.z_score, 3.0));
    Ok(())
}

/// Runs every check; `seed` drives the random fields and Brownian paths.
pub fn run_verification(seed: u64) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    covariance_checks(&mut checks)?;
    operator_checks(&mut checks, seed)?;
    integrator_checks(&mut checks, seed)?;
    let pass = checks.iter().all(|c| c.pass);
    Ok(VerifyReport { seed, checks, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checks_compare_against_tolerance() {
        assert!(Check::new("a", 1e-9, 1e-8).pass);
        assert!(!Check::new("a", f64::NAN, 1e-8).pass);
        assert!(!Check::new("a", 2.0, 1.0).pass);
    }
}
