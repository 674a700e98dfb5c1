//! The explicit kernel-ratio certificate for a smooth perturbed metric
//! sequence p·φ_FS + √p·bump: sup |P_p·ω/c₁ − 1| against the ε_p^{2/3}
//! envelope and the K₁/K₂ ≤ ratio ≤ K₃ sandwich, with the empirical
//! activation degree of the lower bound.
//!
//! Run:
//!   cargo run -p projline --release --example kernel_certificate

use num_complex::Complex64;
use projline::asymptotics::{kernel_ratio_certificate, CertificateMode};
use projline::geometry::{Chart, Grid};
use projline::runner::certificate_text;
use projline::weights::{build_schedule, ScheduleKind, SeqRule, Weight};

fn main() {
    let grid = Grid::new(Chart::default()).unwrap();
    let schedule = build_schedule(
        &grid,
        ScheduleKind::Tensor {
            factors: vec![
                (Weight::fs(), SeqRule::Full),
                (Weight::bump(Complex64::new(0.0, 0.0), 0.1, 1.0).unwrap(), SeqRule::CeilSqrt),
            ],
        },
    )
    .unwrap();
    for (mode, name) in [(CertificateMode::Trend, "trend"), (CertificateMode::Fitted, "fitted")] {
        println!("=== {name} mode ===");
        let report =
            kernel_ratio_certificate(&grid, &schedule, &[16, 32, 64], mode, 1.0).unwrap();
        print!("{}", certificate_text(&report));
        for row in &report.rows {
            println!(
                "  p={:>2}: a_p = {:.2}{}  ‖h‖₃ = {:.2}  refinement shift {:.1e}",
                row.p,
                row.a_p,
                if row.a_p_empirical { " (empirical)" } else { "" },
                row.h_norm_3,
                row.refinement_shift
            );
        }
        println!();
    }
}
