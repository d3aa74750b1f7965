//! Stratonovich Heun against the Itô schemes. For SWE1 the correction
//! vanishes; for SWE2 Heun has no `κΔv` term and still lands on the Itô
//! solution that has one.
//!
//! `cargo run --release --example ito_stratonovich -- [paths]`

use stochastic_wave::config::InitSpec;
use stochastic_wave::experiments::{run_scheme_agreement, SchemeAgreementConfig};
use stochastic_wave::{Model, Nonlinearity};

fn main() -> stochastic_wave::Result<()> {
    let paths = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    for (model, kappa) in [(Model::Swe1, 0.1), (Model::Swe2, 0.01)] {
        let config = SchemeAgreementConfig {
            model,
            d: 2,
            n: 16,
            kappa,
            shell: 1,
            f: Nonlinearity::Sin(1.0),
            dts: vec![4e-3, 2e-3, 1e-3, 5e-4],
            t_final: 0.5,
            paths,
            seed: 7,
            init: InitSpec::single_mode(&[1, 0], 1.0),
        };
        let r = run_scheme_agreement(&config)?;
        println!("{model:?}, kappa {kappa}");
        for (dt, e) in r.dts.iter().zip(&r.errors) {
            println!("  dt {dt:.0e}: {:.3e} +- {:.1e}", e.mean, e.stderr);
        }
        println!("  slope {:.3}, r2 {:.3}", r.slope, r.r2);
    }
    Ok(())
}
