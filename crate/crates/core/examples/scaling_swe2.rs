//! Velocity noise with shrinking correlation: SWE2 approaches the damped wave
//! equation at a rate in `‖Q‖_{L¹}`, and stays away from the undamped one.
//!
//! `cargo run --release --example scaling_swe2 -- [paths]`

use stochastic_wave::experiments::{run_scaling_swe2, ScalingStudyConfig};

fn main() -> stochastic_wave::Result<()> {
    let paths = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let mut config = ScalingStudyConfig::swe2(0.5, &[1, 2, 4, 8], 0.4);
    config.n = 32;
    config.epsilon = Some(0.1);
    config.paths = paths;
    let r = run_scaling_swe2(&config)?;
    let contrast = r.contrast.as_ref().expect("SWE2 studies carry a contrast");
    println!("{}  (contrast: {})", r.quantity, contrast.quantity);
    for i in 0..r.y.len() {
        println!(
            "shell {:>2}  |Q|_L1 {:.4}  {:.4e} +- {:.1e}   undamped {:.4e}",
            r.shells[i], r.x[i], r.y[i], r.stderr[i], contrast.y[i]
        );
    }
    println!(
        "slope {:.3} (target {:.3}), r2 {:.3}, contrast {:.1}x, pass {}",
        r.slope.unwrap_or(f64::NAN),
        r.target.unwrap_or(f64::NAN),
        r.r2.unwrap_or(f64::NAN),
        r.contrast_ratio().unwrap_or(f64::NAN),
        r.pass
    );
    Ok(())
}
