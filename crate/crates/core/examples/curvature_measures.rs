//! Curvature measures dd^c W of the built-in weight families, comparing the
//! analytic cell constructors against the flux-stencil route and showing the
//! mass bookkeeping (cells + atom at ∞ = growth order, exactly).
//!
//! Run:
//!   cargo run -p projline --release --example curvature_measures

use num_complex::Complex64;
use projline::geometry::{default_family, Chart, Grid, TestFunction};
use projline::weights::{curvature, curvature_stencil, Weight};

fn main() {
    let grid = Grid::new(Chart::default()).unwrap();
    let family = default_family();
    let weights = [
        Weight::fs(),
        Weight::equilibrium(),
        Weight::log_at(Complex64::new(0.0, 0.0)),
        Weight::log_pole(0.5).unwrap(),
        Weight::cone(Complex64::new(0.0, 0.0), 0.5, 0.1, 1.0).unwrap(),
    ];
    println!("weight\t\t\ttotal\tinfinity\tmin cell\tanalytic-vs-stencil gap");
    for w in &weights {
        let stencil = curvature_stencil(&grid, w);
        let preferred = curvature(&grid, w).unwrap();
        let gap = grid.pairing_gap(&preferred, &stencil, &family);
        println!(
            "{:<22}\t{:.4}\t{:.3e}\t{:+.2e}\t{:.3e}",
            w.label(),
            preferred.total,
            preferred.infinity_mass,
            stencil.min_cell(),
            gap
        );
    }

    // the equilibrium measure concentrates on the unit circle
    let eq = curvature(&grid, &Weight::equilibrium()).unwrap();
    let annulus_in = grid.integrate(&TestFunction::RadialIndicator { radius: 1.1 }, &eq)
        - grid.integrate(&TestFunction::RadialIndicator { radius: 0.9 }, &eq);
    println!("\nequilibrium mass in 0.9 ≤ |z| ≤ 1.1: {annulus_in:.12}");

    // dd^c log|z| is the unit atom at the origin
    let atom = curvature(&grid, &Weight::log_at(Complex64::new(0.0, 0.0))).unwrap();
    let near0 = grid.integrate(&TestFunction::RadialIndicator { radius: 0.01 }, &atom);
    println!("log|z| mass within |z| ≤ 0.01:       {near0:.12}");
}
