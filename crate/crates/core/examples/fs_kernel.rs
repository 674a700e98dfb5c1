//! The constant-kernel oracle: for the Fubini–Study power metric on O(p) the
//! Bergman kernel function is exactly P_p ≡ p + 1, so every digit of grid
//! deviation measures quadrature + factorization error.
//!
//! Run:
//!   cargo run -p projline --release --example fs_kernel

use projline::bergman::{bergman_kernel, fs_beta_basis, gram_matrix, gram_matrix_2d};
use projline::geometry::{Chart, Grid};
use projline::weights::{build_schedule, ScheduleKind, Weight};

fn main() {
    let grid = Grid::new(Chart::default()).unwrap();
    let schedule = build_schedule(&grid, ScheduleKind::Power { base: Weight::fs() }).unwrap();

    println!("p\tpath\t\tmax |P_p/(p+1) - 1|\ttrace gap\tP_p(∞)");
    for p in [5usize, 10, 20, 40] {
        let expect = (p + 1) as f64;
        // three independent routes to the same constant
        let routes: [(&str, projline::bergman::OrthoBasis); 3] = [
            ("radial 1-D", gram_matrix(&grid, &schedule, p).unwrap()),
            ("full 2-D  ", gram_matrix_2d(&grid, &schedule, p).unwrap()),
            ("Beta exact", fs_beta_basis(p)),
        ];
        for (name, basis) in routes {
            let kernel = bergman_kernel(&grid, &basis).unwrap();
            let dev = kernel
                .values
                .iter()
                .map(|v| (v - expect).abs() / expect)
                .fold(0.0f64, f64::max);
            println!(
                "{p}\t{name}\t{dev:.3e}\t\t{:.3e}\t{:.9}",
                kernel.trace_gap(),
                kernel.infinity
            );
        }
    }
    println!("\nmonomial norms at p = 3 (Beta integrals k!(3-k)!/4!):");
    let basis = gram_matrix(&grid, &schedule, 3).unwrap();
    for (c, n) in basis.norms().iter().enumerate() {
        println!("  ||z^{c}||^2 = {n:.12}   (exact {})", ["1/4", "1/12", "1/12", "1/4"][c]);
    }
}
