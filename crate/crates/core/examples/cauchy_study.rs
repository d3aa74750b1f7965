//! Truncation differences `E sup_t N_{m,n}` against a fine reference, with
//! Brownian paths shared across truncations by channel id.
//!
//! `cargo run --release --example cauchy_study -- [paths]`

use stochastic_wave::config::InitSpec;
use stochastic_wave::experiments::{run_cauchy_study, CauchyConfig};
use stochastic_wave::noise::NoiseSpecFile;
use stochastic_wave::{Model, Nonlinearity};

fn main() -> stochastic_wave::Result<()> {
    let paths = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let config = CauchyConfig {
        model: Model::Swe1,
        d: 2,
        truncations: vec![4, 6, 8, 12],
        reference: 24,
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
        paths,
        seed: 5,
        save_count: 33,
        init: InitSpec::single_mode(&[2, 1], 1.0),
        scheme: None,
    };
    let r = run_cauchy_study(&config)?;
    for ((n, y), se) in r.truncations.iter().zip(&r.y).zip(&r.stderr) {
        println!("n = {n:>2} vs m = {}: {y:.3e} +- {se:.1e}", r.reference);
    }
    if let Some(fit) = r.fit_inverse_square {
        println!("log-log slope against 1/n^2: {:.2}", fit.slope);
    }
    println!("pass: {}", r.pass);
    Ok(())
}
