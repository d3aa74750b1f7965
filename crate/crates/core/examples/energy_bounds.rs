//! Energy along SWE1 and SWE2 ensembles: the pathwise SWE2 bound and the
//! truncation-uniform SWE1 mean.
//!
//! `cargo run --release --example energy_bounds -- [paths]`

use stochastic_wave::experiments::{run_energy_study, run_uniform_energy, swe2_energy_constant, EnergyStudyConfig};
use stochastic_wave::{Model, Nonlinearity};

fn main() -> stochastic_wave::Result<()> {
    let paths = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(32);
    let swe2 = EnergyStudyConfig {
        model: Model::Swe2,
        d: 2,
        n: 16,
        kappa: 1.0,
        shell: 1,
        f: Nonlinearity::Sin(1.0),
        dt: 1e-3,
        t_final: 1.0,
        paths,
        seed: 11,
        init: "random-h1:1".parse()?,
        save_count: 65,
    };
    let study = run_energy_study(&swe2)?;
    let c = swe2_energy_constant(&swe2.f, swe2.t_final);
    println!(
        "SWE2: E(0) = {:.3}, mean sup E = {:.3}, share within e^(CT)(E(0)+1) with C = {c:.3}: {:.1}%",
        study.initial_energy,
        study.mean_sup.mean,
        100.0 * study.fraction_within(c)
    );

    let swe1 = EnergyStudyConfig { model: Model::Swe1, ..swe2 };
    let r = run_uniform_energy(&swe1, &[8, 16, 32], 0.1)?;
    for (n, m) in r.truncations.iter().zip(&r.mean_sup) {
        println!("SWE1 n = {n:>2}: mean sup E = {:.4} +- {:.4}", m.mean, m.stderr);
    }
    println!("fitted bound {:.4}, pass {}", r.fitted_bound, r.pass);
    Ok(())
}
