//! Velocity noise acts like viscosity: one SWE2 path per shell, compared with
//! the damped and the undamped wave at the same `kappa_eff`.
//!
//! `cargo run --release --example emergent_damping`

use std::sync::Arc;

use stochastic_wave::dynamics::uniform_save_times;
use stochastic_wave::experiments::scaling_family;
use stochastic_wave::*;

fn main() -> Result<()> {
    let (dt, t, n) = (1e-3, 1.0, 24);
    let lattice = Lattice::new(2, n)?;
    let init = GalerkinState::new(
        0.0,
        SpectralField::cosine_mode(&lattice, &[1, 0], 1.0)?,
        SpectralField::scalar_zeros(&lattice),
    )?;
    let save = uniform_save_times(t, dt, 33)?;
    let driver = BrownianDriver::new(3, dt)?;
    let family = scaling_family(2, 0.5, &[1, 2, 4, 8])?;
    let kappa_eff = family[0].1.kappa_eff;

    let wave = Integrator::new(ModelSpec::wave(Nonlinearity::Zero), Scheme::EulerMaruyama, dt, &lattice)?
        .run(&init, t, &driver, &save)?;
    let damped = Integrator::new(ModelSpec::damped_wave(Nonlinearity::Zero, kappa_eff)?, Scheme::ExpEuler, dt, &lattice)?
        .run(&init, t, &driver, &save)?;

    let sup = |a: &Trajectory, b: &Trajectory| -> Result<f64> {
        let mut worst = 0.0f64;
        for (x, y) in a.states.iter().zip(&b.states) {
            worst = worst.max(x.u.sub(&y.u)?.sobolev_norm(-0.4));
        }
        Ok(worst)
    };
    println!("kappa_eff = {kappa_eff}; sup_t |u - target|_H^-0.4 along one path");
    println!("{:>5} {:>10} {:>14} {:>14}", "shell", "|Q|_L1", "vs damped", "vs undamped");
    for (shell, (basis, report)) in [1, 2, 4, 8].iter().zip(family) {
        let spec = ModelSpec::swe2(Arc::clone(&basis), Nonlinearity::Zero)?;
        let swe2 = Integrator::new(spec, Scheme::ExpEuler, dt, &lattice)?.run(&init, t, &driver, &save)?;
        println!(
            "{shell:>5} {:>10.4} {:>14.4e} {:>14.4e}",
            report.l1_norm,
            sup(&swe2, &damped)?,
            sup(&swe2, &wave)?
        );
    }
    Ok(())
}
