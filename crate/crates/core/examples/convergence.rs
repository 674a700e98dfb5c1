//! Semiclassical convergence tables over a doubling degree sequence: the L¹
//! size of log P_p, the pairing gap between the Fubini–Study current and the
//! curvature, the zero-measure gap to the limit current, and log d_p / A_p.
//!
//! Run:
//!   cargo run -p projline --release --example convergence

use projline::asymptotics::{convergence_suite, ConvergenceThresholds};
use projline::geometry::{Chart, Grid};
use projline::runner::convergence_text;
use projline::weights::{build_schedule, ScheduleKind, SeqRule, Weight};
use projline::zeros::{EnsembleKind, EnsembleSpec};

fn main() {
    let grid = Grid::new(Chart::default()).unwrap();
    let spec = EnsembleSpec { kind: EnsembleKind::Sphere, seed: 7, samples: 200 };
    let schedules = vec![
        build_schedule(&grid, ScheduleKind::Power { base: Weight::fs() }).unwrap(),
        build_schedule(&grid, ScheduleKind::Power { base: Weight::equilibrium() }).unwrap(),
        build_schedule(
            &grid,
            ScheduleKind::Mixed {
                h: Weight::equilibrium(),
                h0: Weight::fs(),
                n_rule: SeqRule::CeilSqrt,
            },
        )
        .unwrap(),
        build_schedule(
            &grid,
            ScheduleKind::Tensor {
                factors: vec![
                    (Weight::fs(), SeqRule::CeilFrac { num: 1, den: 2 }),
                    (Weight::equilibrium(), SeqRule::Remainder),
                ],
            },
        )
        .unwrap(),
    ];
    for schedule in &schedules {
        let table = convergence_suite(
            &grid,
            schedule,
            &[8, 16, 32, 64],
            Some(&spec),
            ConvergenceThresholds::default(),
        )
        .unwrap();
        print!("{}", convergence_text(&table));
        println!();
    }
}
