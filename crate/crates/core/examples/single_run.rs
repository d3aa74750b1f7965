//! One SWE2 trajectory: energy over time and the final spectrum by shell.
//!
//! `cargo run --release --example single_run -- [seed]`

use std::sync::Arc;

use stochastic_wave::diagnostics::energy_series;
use stochastic_wave::dynamics::uniform_save_times;
use stochastic_wave::*;

fn main() -> Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let lattice = Lattice::new(2, 16)?;
    let basis = Arc::new(NoiseBasis::new(NoiseSpec::uniform_shell(2, 0.5, 2)?)?);
    let spec = ModelSpec::swe2(basis, Nonlinearity::Sin(1.0))?;
    let integ = Integrator::new(spec, Scheme::default_for(Model::Swe2), 1e-3, &lattice)?;
    let init = GalerkinState::new(
        0.0,
        SpectralField::cosine_mode(&lattice, &[1, 0], 1.0)?,
        SpectralField::scalar_zeros(&lattice),
    )?;
    let driver = BrownianDriver::new(seed, 1e-3)?;
    let traj = integ.run(&init, 1.0, &driver, &uniform_save_times(1.0, 1e-3, 11)?)?;

    println!("{:>5} {:>12} {:>12} {:>12}", "t", "|u|_H1^2", "|v|^2", "E");
    for e in energy_series(&traj) {
        println!("{:>5.2} {:>12.6} {:>12.6} {:>12.6}", e.t, e.e_u_h1, e.e_v_l2, e.total);
    }

    let last = traj.last().expect("final state");
    let mut shells = [0.0f64; 17];
    for (idx, z) in last.u.coeffs().iter().enumerate() {
        shells[lattice.norm_sq(idx).sqrt().round() as usize] += z.norm_sqr();
    }
    println!("\n|u|^2 by shell at t = 1:");
    for (r, e) in shells.iter().enumerate().filter(|(_, e)| **e > 0.0) {
        println!("{r:>3} {e:.3e}");
    }
    Ok(())
}
