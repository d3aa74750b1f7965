//! Covariance norms of the uniform-shell family: `‖Q‖_{L¹}` shrinks with the
//! shell while `kappa_eff` stays put.
//!
//! `cargo run --release --example covariance_table`

use stochastic_wave::experiments::scaling_family;

fn main() -> stochastic_wave::Result<()> {
    for (d, shells) in [(2, vec![1, 2, 4, 8, 16]), (3, vec![1, 2, 3])] {
        println!("d = {d}, kappa = 1");
        println!("{:>5} {:>10} {:>10} {:>10} {:>12}", "N", "kappa_eff", "|Q|_L1", "|Q|_L2", "max theta^2");
        for (shell, (_, r)) in shells.iter().zip(scaling_family(d, 1.0, &shells)?) {
            println!(
                "{shell:>5} {:>10.6} {:>10.6} {:>10.6} {:>12.3e}",
                r.kappa_eff, r.l1_norm, r.l2_norm, r.fourier_sup
            );
        }
    }
    Ok(())
}
