//! Time regularity of the velocity: `E‖v(t+h) − v(t)‖⁴_{H^{-ρ}}` against the
//! lag `h`. Noise enters SWE1 velocities only through `Δu dt`, so they are
//! much smoother in time than SWE2 velocities, whose increments carry `dW`
//! directly and cannot beat the Kolmogorov slope 2. At these lags both slopes
//! are still below their asymptotic values.
//!
//! `cargo run --release --example increment_moments -- [paths]`

use std::sync::Arc;

use stochastic_wave::diagnostics::increment_moment;
use stochastic_wave::dynamics::uniform_save_times;
use stochastic_wave::*;

fn main() -> Result<()> {
    let paths: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    let (dt, t) = (1e-3, 0.5);
    let lattice = Lattice::new(2, 12)?;
    let basis = Arc::new(NoiseBasis::new(NoiseSpec::uniform_shell(2, 1.0, 1)?)?);
    let init = GalerkinState::new(
        0.0,
        SpectralField::cosine_mode(&lattice, &[1, 0], 1.0)?,
        SpectralField::scalar_zeros(&lattice),
    )?;
    let save = uniform_save_times(t, dt, 101)?;
    let models = [
        (Model::Swe1, ModelSpec::swe1(Arc::clone(&basis), Nonlinearity::Sin(1.0))?),
        (Model::Swe2, ModelSpec::swe2(basis, Nonlinearity::Sin(1.0))?),
    ];
    for (model, spec) in models {
        let integ = Integrator::new(spec, Scheme::default_for(model), dt, &lattice)?;
        let ensemble: Vec<Trajectory> = (0..paths)
            .map(|p| integ.run(&init, t, &BrownianDriver::new(path_seed(2, p), dt)?, &save))
            .collect::<Result<_>>()?;
        let table = increment_moment(&ensemble, 2.5, &[1, 2, 4, 8])?;
        println!("{model:?}, rho = {}", table.rho);
        for (h, m) in table.lags.iter().zip(&table.moments) {
            println!("  h = {h:.4}: {:.4e} +- {:.1e}", m.mean, m.stderr);
        }
        if let Some(s) = table.slope {
            println!("  log-log slope {s:.2}");
        }
    }
    Ok(())
}
