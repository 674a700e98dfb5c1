//! The normalized log-norm statistic Y_p(σ) = (1/A_p)∫ log(|σ|_{h_p}/√P_p) ω
//! for sphere-ensemble sections: always ≤ 0, its ensemble mean equals
//! −I(d_p)/A_p exactly, and it tends to 0 along the degree sequence.
//!
//! Run:
//!   cargo run -p projline --release --example y_statistic

use projline::bergman::{bergman_kernel, gram_matrix};
use projline::geometry::{Chart, Grid};
use projline::weights::{build_schedule, ScheduleKind, Weight};
use projline::zeros::{harmonic_number, sample_ensemble, y_statistics, EnsembleKind, EnsembleSpec};

fn main() {
    let grid = Grid::new(Chart::default()).unwrap();
    let schedule = build_schedule(&grid, ScheduleKind::Power { base: Weight::fs() }).unwrap();
    let spec = EnsembleSpec { kind: EnsembleKind::Sphere, seed: 77, samples: 500 };
    println!("p\tmean Y_p\t−I(d_p)/A_p\tenvelope −(2·log d_p + 2)/(2A_p)\tmax Y_p");
    for p in [16usize, 32, 64] {
        let basis = gram_matrix(&grid, &schedule, p).unwrap();
        let kernel = bergman_kernel(&grid, &basis).unwrap();
        let samples = sample_ensemble(&basis, &spec);
        let y = y_statistics(&grid, &basis, &kernel, &samples).unwrap();
        let mean = y.values.iter().sum::<f64>() / y.values.len() as f64;
        let max = y.values.iter().cloned().fold(f64::MIN, f64::max);
        let exact = -0.5 * harmonic_number(basis.dim - 1) / basis.big_a;
        let envelope = -(2.0 * (basis.dim as f64).ln() + 2.0) / (2.0 * basis.big_a);
        println!("{p}\t{mean:+.6}\t{exact:+.6}\t{envelope:+.6}\t\t\t{max:+.2e}");
    }
}
