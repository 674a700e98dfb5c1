//! Zeros of random L² holomorphic sections: sphere-ensemble samples, the
//! Aberth–Ehrlich zero extraction, and the equidistribution of the averaged
//! zero measure toward the curvature of the metric.
//!
//! Run:
//!   cargo run -p projline --release --example random_zeros

use projline::bergman::gram_matrix;
use projline::geometry::{default_family, Chart, Grid};
use projline::weights::{build_schedule, ScheduleKind, SeqRule, Weight};
use projline::zeros::{empirical_measure, ensemble_zeros, EnsembleKind, EnsembleSpec};

fn main() {
    let grid = Grid::new(Chart::default()).unwrap();
    let family = default_family();
    let spec = EnsembleSpec { kind: EnsembleKind::Sphere, seed: 7, samples: 200 };

    // Fubini–Study powers: zeros equidistribute toward ω_FS
    let fs = build_schedule(&grid, ScheduleKind::Power { base: Weight::fs() }).unwrap();
    println!("Fubini–Study power, M = {}:", spec.samples);
    println!("p\tdistance to ω_FS\tzeros in |z| ≤ 1\tmax root residual");
    for p in [10usize, 25, 50] {
        let basis = gram_matrix(&grid, &fs, p).unwrap();
        let samples = ensemble_zeros(&basis, &spec).unwrap();
        let emp = empirical_measure(&grid, &samples, p);
        let dist = grid.measure_distance(&emp, &grid.fs_measure(1.0), &family).unwrap();
        let mut in_disk = 0usize;
        let mut total = 0usize;
        for s in &samples {
            for (z, m) in s.zero_points() {
                if z.norm_sqr() <= 1.0 {
                    in_disk += m;
                }
                total += m;
            }
            total += s.infinity_multiplicity;
        }
        let residual = samples.iter().map(|s| s.residual).fold(0.0f64, f64::max);
        println!(
            "{p}\t{dist:.4}\t\t\t{:.4}\t\t\t{residual:.2e}",
            in_disk as f64 / total as f64
        );
    }

    // half Fubini–Study, half equilibrium: the limit is ½ω_FS + ½(circle)
    let tensor = build_schedule(
        &grid,
        ScheduleKind::Tensor {
            factors: vec![
                (Weight::fs(), SeqRule::CeilFrac { num: 1, den: 2 }),
                (Weight::equilibrium(), SeqRule::Remainder),
            ],
        },
    )
    .unwrap();
    let target = tensor.target_measure(&grid).unwrap();
    println!("\ntensor ½·fs ⊗ ½·eq, target ½ω_FS + ½(unit circle):");
    println!("p\tzero gap to target");
    for p in [16usize, 32, 64] {
        let basis = gram_matrix(&grid, &tensor, p).unwrap();
        let samples = ensemble_zeros(&basis, &spec).unwrap();
        let emp = empirical_measure(&grid, &samples, p);
        let gap = grid.measure_distance(&emp, &target, &family).unwrap();
        println!("{p}\t{gap:.4}");
    }
}
