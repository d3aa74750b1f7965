//! Displacement noise with shrinking correlation: SWE1 approaches the plain
//! wave equation (no extra damping).
//!
//! `cargo run --release --example scaling_swe1 -- [paths]`

use stochastic_wave::experiments::{run_scaling_swe1, ScalingStudyConfig};

fn main() -> stochastic_wave::Result<()> {
    let paths = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    let mut config = ScalingStudyConfig::swe1(1.0, &[1, 2, 4], 0.25);
    config.paths = paths;
    let r = run_scaling_swe1(&config)?;
    println!("{}", r.quantity);
    for i in 0..r.y.len() {
        println!("shell {:>2}  |Q|_L1 {:.4}  {:.4} +- {:.4}", r.shells[i], r.x[i], r.y[i], r.stderr[i]);
    }
    println!("final/first {:.3}, pass {}", r.final_ratio(), r.pass);
    Ok(())
}
