//! The sphere log-moment I(k) = −E[log|z_k|] on the unit sphere of ℂ^k:
//! Monte Carlo against the closed form H_{k−1}/2 (|z_k|² is Beta(1, k−1)
//! distributed), plus the a·log k + b envelope with a = b = 2.
//!
//! Run:
//!   cargo run -p projline --release --example log_sphere_moment

use projline::zeros::{expected_log_sphere, harmonic_number};

fn main() {
    println!("k\tMonte Carlo\tstd err\t\texact H(k-1)/2\tpull");
    for k in [1usize, 2, 5, 10, 100, 1000] {
        let est = expected_log_sphere(k, 100_000, 2024).unwrap();
        let pull = if est.std_error > 0.0 {
            (est.estimate - est.exact) / est.std_error
        } else {
            0.0
        };
        println!(
            "{k}\t{:.6}\t{:.2e}\t{:.6}\t{pull:+.2}σ",
            est.estimate, est.std_error, est.exact
        );
    }
    let worst = (1..=10_000usize)
        .map(|k| 0.5 * harmonic_number(k - 1) - 2.0 * (k as f64).ln() - 2.0)
        .fold(f64::MIN, f64::max);
    println!("\nenvelope check: max over k ≤ 10⁴ of I(k) − (2 log k + 2) = {worst:.4} (≤ 0)");
}
