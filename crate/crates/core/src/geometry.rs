//! The model space: ℙ¹ as one affine chart plus an atom at ∞.
//!
//! The reference form is the Fubini–Study form normalized to total mass 1,
//! with density `fs_volume_density` against Lebesgue measure on the chart.
//! All integration runs on a polar tensor grid: Gauss–Legendre nodes in the
//! compactified radial variable t = r²/(1+r²) ∈ [0,1) (two panels split at
//! t = 1/2, i.e. |z| = 1) and uniform angular nodes. The substitution makes
//! ∫ f ω_FS = (1/2π) ∫∫ f dt dθ, so the rational radial densities appearing
//! in every kernel here are integrated exactly.
//!
//! Positive measures are discretized as [`GridMeasure`]: one mass per polar
//! cell inside |z| ≤ truncation_radius plus an explicit atom at ∞ that also
//! absorbs whatever lives beyond the chart. Weak convergence is probed by
//! pairing against a fixed family of [`TestFunction`]s.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Density of ω_FS against Lebesgue measure on the chart: (1/π)(1+|z|²)⁻².
/// Total mass over ℂ is 1.
pub fn fs_volume_density(z: Complex64) -> f64 {
    let q = 1.0 + z.norm_sqr();
    1.0 / (std::f64::consts::PI * q * q)
}

/// Chart parameters: cell-grid truncation radius and node counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    /// Cells live in |z| ≤ truncation_radius; mass beyond is tracked at ∞.
    pub truncation_radius: f64,
    pub grid_radial: usize,
    pub grid_angular: usize,
}

impl Default for Chart {
    fn default() -> Self {
        Chart {
            truncation_radius: 20.0,
            grid_radial: 512,
            grid_angular: 256,
        }
    }
}

impl Chart {
    pub fn validate(&self) -> Result<()> {
        if !(self.truncation_radius.is_finite() && self.truncation_radius > 1.0) {
            return Err(Error::Config(format!(
                "truncation_radius must be > 1, got {}",
                self.truncation_radius
            )));
        }
        if self.grid_radial < 8 || self.grid_angular < 8 {
            return Err(Error::Config(format!(
                "grid node counts must be ≥ 8, got {} × {}",
                self.grid_radial, self.grid_angular
            )));
        }
        Ok(())
    }
}

/// Gauss–Legendre nodes and weights on \[−1, 1\].
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for k in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut t = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = t;
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * t * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-15 {
                // one clean-up iteration and out
                let mut q0 = 1.0;
                let mut q1 = t;
                for j in 2..=n {
                    let q2 = ((2 * j - 1) as f64 * t * q1 - (j - 1) as f64 * q0) / j as f64;
                    q0 = q1;
                    q1 = q2;
                }
                dp = n as f64 * (t * q1 - q0) / (t * t - 1.0);
                break;
            }
        }
        x[k] = -t;
        x[n - 1 - k] = t;
        let wk = 2.0 / ((1.0 - t * t) * dp * dp);
        w[k] = wk;
        w[n - 1 - k] = wk;
    }
    (x, w)
}

/// Polar quadrature/cell grid on the chart.
///
/// Immutable after construction; shared freely across workers.
#[derive(Clone, Debug)]
pub struct Grid {
    pub chart: Chart,
    /// Radial nodes in t, ascending over (0,1).
    pub t: Vec<f64>,
    /// Gauss–Legendre weights in t (sum to 1).
    pub w: Vec<f64>,
    /// Radial node positions r = sqrt(t/(1−t)).
    pub r: Vec<f64>,
    /// s = ln r per radial node.
    pub s: Vec<f64>,
    /// Angular cell centers θ_j = (j+1/2)·Δθ.
    pub theta: Vec<f64>,
    pub cos_theta: Vec<f64>,
    pub sin_theta: Vec<f64>,
    pub dtheta: f64,
    /// Radial cell edges in t: `edges[0] = 0`, `edges[n_r] = 1`; interior
    /// edges at the geometric mean of adjacent node radii.
    pub t_edges: Vec<f64>,
    /// ln of edge radii (`s_edges[0]` = −∞).
    pub s_edges: Vec<f64>,
    /// Number of radial indices with r ≤ truncation_radius (cell grid extent).
    pub n_chart: usize,
}

impl Grid {
    pub fn new(chart: Chart) -> Result<Self> {
        chart.validate()?;
        let n_r = chart.grid_radial;
        let n1 = n_r / 2;
        let n2 = n_r - n1;
        // Composite Gauss–Legendre: panels [0, 1/2] and [1/2, 1] in t. The
        // split keeps |z| = 1 (where the equilibrium family is singular) at a
        // panel boundary.
        let mut t = Vec::with_capacity(n_r);
        let mut w = Vec::with_capacity(n_r);
        for (lo, hi, n) in [(0.0f64, 0.5f64, n1), (0.5, 1.0, n2)] {
            let (x, wx) = gauss_legendre(n);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for k in 0..n {
                t.push(mid + half * x[k]);
                w.push(half * wx[k]);
            }
        }
        debug_assert!(t.iter().all(|&ti| ti > 0.0 && ti < 1.0));
        debug_assert!(w.iter().all(|&wi| wi > 0.0));
        let r: Vec<f64> = t.iter().map(|&ti| (ti / (1.0 - ti)).sqrt()).collect();
        let s: Vec<f64> = r.iter().map(|&ri| ri.ln()).collect();
        let mut t_edges = Vec::with_capacity(n_r + 1);
        t_edges.push(0.0);
        for i in 0..n_r - 1 {
            let re = (r[i] * r[i + 1]).sqrt();
            t_edges.push(re * re / (1.0 + re * re));
        }
        t_edges.push(1.0);
        let s_edges: Vec<f64> = t_edges
            .iter()
            .map(|&te| {
                if te <= 0.0 {
                    f64::NEG_INFINITY
                } else if te >= 1.0 {
                    f64::INFINITY
                } else {
                    0.5 * (te / (1.0 - te)).ln()
                }
            })
            .collect();
        let n_theta = chart.grid_angular;
        let dtheta = 2.0 * std::f64::consts::PI / n_theta as f64;
        let theta: Vec<f64> = (0..n_theta).map(|j| (j as f64 + 0.5) * dtheta).collect();
        let cos_theta: Vec<f64> = theta.iter().map(|&a| a.cos()).collect();
        let sin_theta: Vec<f64> = theta.iter().map(|&a| a.sin()).collect();
        let rc = chart.truncation_radius;
        let n_chart = r.iter().take_while(|&&ri| ri <= rc).count();
        Ok(Grid {
            chart,
            t,
            w,
            r,
            s,
            theta,
            cos_theta,
            sin_theta,
            dtheta,
            t_edges,
            s_edges,
            n_chart,
        })
    }

    pub fn n_radial(&self) -> usize {
        self.r.len()
    }

    pub fn n_angular(&self) -> usize {
        self.theta.len()
    }

    /// Total node count of the full quadrature grid.
    pub fn n_nodes(&self) -> usize {
        self.n_radial() * self.n_angular()
    }

    /// Cell count of the chart cell grid (GridMeasure length).
    pub fn n_cells(&self) -> usize {
        self.n_chart * self.n_angular()
    }

    #[inline]
    pub fn node_z(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.r[i] * self.cos_theta[j], self.r[i] * self.sin_theta[j])
    }

    /// ∫ f ω_FS over all of ℙ¹ minus the point ∞ (which has ω-measure zero).
    ///
    /// Parallel over radial rings; the final reduction is a fixed-order serial
    /// sum, so results are bit-identical at any thread count.
    pub fn integrate_fs<F>(&self, f: F) -> f64
    where
        F: Fn(Complex64) -> f64 + Sync,
    {
        let n_theta = self.n_angular() as f64;
        let rows: Vec<f64> = (0..self.n_radial())
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                for j in 0..self.n_angular() {
                    acc += f(self.node_z(i, j));
                }
                acc * self.w[i] / n_theta
            })
            .collect();
        rows.iter().sum()
    }

    /// ∫ f(|z|) ω_FS for radial integrands: Σ w_i f(r_i).
    pub fn integrate_fs_radial<F>(&self, f: F) -> f64
    where
        F: Fn(f64) -> f64,
    {
        self.r.iter().zip(&self.w).map(|(&ri, &wi)| wi * f(ri)).sum()
    }

    /// Cell index of a chart point, or None for |z| beyond the cell grid.
    pub fn cell_of(&self, z: Complex64) -> Option<usize> {
        let t = z.norm_sqr() / (1.0 + z.norm_sqr());
        let i = match self
            .t_edges
            .binary_search_by(|e| e.partial_cmp(&t).unwrap())
        {
            Ok(k) => k,          // exactly on edge k: put in cell k (lower-closed)
            Err(k) => k - 1,     // t_edges[k-1] < t < t_edges[k]
        };
        if i >= self.n_chart {
            return None;
        }
        let mut a = z.arg();
        if a < 0.0 {
            a += 2.0 * std::f64::consts::PI;
        }
        let j = ((a / self.dtheta) as usize).min(self.n_angular() - 1);
        Some(i * self.n_angular() + j)
    }

    /// Analytic discretization of scale·ω_FS.
    pub fn fs_measure(&self, scale: f64) -> GridMeasure {
        let n_theta = self.n_angular();
        let mut cells = vec![0.0; self.n_cells()];
        for i in 0..self.n_chart {
            let m = scale * (self.t_edges[i + 1] - self.t_edges[i]) / n_theta as f64;
            for j in 0..n_theta {
                cells[i * n_theta + j] = m;
            }
        }
        let infinity = scale * (1.0 - self.t_edges[self.n_chart]);
        GridMeasure::new(cells, infinity)
    }

    /// Uniform measure of given total mass on the circle |z| = radius.
    ///
    /// A circle sitting on a cell edge (within 1e-12 in t) splits its mass
    /// evenly between the two adjacent rings; this matches both the flux
    /// stencil and smoothed empirical zero measures.
    pub fn circle_measure(&self, radius: f64, mass: f64) -> GridMeasure {
        let n_theta = self.n_angular();
        let mut cells = vec![0.0; self.n_cells()];
        let mut infinity = 0.0;
        let t0 = radius * radius / (1.0 + radius * radius);
        let mut rings: Vec<(usize, f64)> = Vec::new();
        let k = self.t_edges.partition_point(|&e| e < t0);
        // t_edges[k-1] < t0 ≤ t_edges[k]
        let nearest = if k == 0 {
            0
        } else if (t0 - self.t_edges[k - 1]).abs() <= (self.t_edges[k] - t0).abs() {
            k - 1
        } else {
            k
        };
        if nearest >= 1
            && nearest < self.t_edges.len() - 1
            && (t0 - self.t_edges[nearest]).abs() < 1e-12
        {
            rings.push((nearest - 1, 0.5));
            rings.push((nearest, 0.5));
        } else {
            rings.push((if self.t_edges[k] == t0 { k } else { k - 1 }, 1.0));
        }
        for (i, frac) in rings {
            if i >= self.n_chart {
                infinity += mass * frac;
            } else {
                let m = mass * frac / n_theta as f64;
                for j in 0..n_theta {
                    cells[i * n_theta + j] += m;
                }
            }
        }
        GridMeasure::new(cells, infinity)
    }

    /// Point mass at z (binned to its cell, or to ∞ beyond the chart).
    pub fn atom(&self, z: Complex64, mass: f64) -> GridMeasure {
        let mut cells = vec![0.0; self.n_cells()];
        let mut infinity = 0.0;
        match self.cell_of(z) {
            Some(c) => cells[c] = mass,
            None => infinity = mass,
        }
        GridMeasure::new(cells, infinity)
    }

    /// Point mass at ∞.
    pub fn atom_at_infinity(&self, mass: f64) -> GridMeasure {
        GridMeasure::new(vec![0.0; self.n_cells()], mass)
    }

    /// Cell-aggregated distributional dd^c of a potential sampled at the grid
    /// nodes: (1/2π) × flux of ∇u through each cell boundary, with
    /// d^c = (1/2πi)(∂−∂̄) so that dd^c log|z| is the unit atom at 0.
    ///
    /// `u` has length n_radial × n_angular (node-major: i·n_θ + j) and must be
    /// finite at every node. `total_mass` is the known total of the measure
    /// (the log-growth coefficient of u at ∞); whatever the chart cells do not
    /// capture is assigned to infinity_mass so the total is exact.
    pub fn ddc_from_potential(&self, u: &[f64], total_mass: f64) -> GridMeasure {
        assert_eq!(u.len(), self.n_nodes());
        let n_theta = self.n_angular();
        let two_pi = 2.0 * std::f64::consts::PI;
        let rows: Vec<Vec<f64>> = (0..self.n_chart)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![0.0; n_theta];
                // s-extent of ring i used by the angular fluxes; the innermost
                // ring is a disk, measured from its node outward.
                let ds_cell = if i == 0 {
                    self.s_edges[1] - self.s[0]
                } else {
                    self.s_edges[i + 1] - self.s_edges[i]
                };
                for j in 0..n_theta {
                    let jm = (j + n_theta - 1) % n_theta;
                    let jp = (j + 1) % n_theta;
                    let c = u[i * n_theta + j];
                    // radial fluxes through the outer and inner ring edges
                    let f_out = (u[(i + 1) * n_theta + j] - c) / (self.s[i + 1] - self.s[i]);
                    let f_in = if i == 0 {
                        0.0
                    } else {
                        (c - u[(i - 1) * n_theta + j]) / (self.s[i] - self.s[i - 1])
                    };
                    // angular fluxes through the two side edges
                    let g_p = (u[i * n_theta + jp] - c) / self.dtheta;
                    let g_m = (c - u[i * n_theta + jm]) / self.dtheta;
                    row[j] = ((f_out - f_in) * self.dtheta + (g_p - g_m) * ds_cell) / two_pi;
                }
                row
            })
            .collect();
        let mut cells = Vec::with_capacity(self.n_cells());
        for row in rows {
            cells.extend_from_slice(&row);
        }
        let captured: f64 = cells.iter().sum();
        GridMeasure::new(cells, total_mass - captured)
    }

    /// Evaluate a potential on every node (parallel, node-major layout).
    pub fn sample_nodes<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(Complex64) -> f64 + Sync,
    {
        let n_theta = self.n_angular();
        let rows: Vec<Vec<f64>> = (0..self.n_radial())
            .into_par_iter()
            .map(|i| (0..n_theta).map(|j| f(self.node_z(i, j))).collect())
            .collect();
        let mut out = Vec::with_capacity(self.n_nodes());
        for row in rows {
            out.extend_from_slice(&row);
        }
        out
    }

    /// Pairing ⟨μ, f⟩ = Σ f(cell center)·mass + f(∞)·infinity_mass.
    pub fn integrate(&self, f: &TestFunction, mu: &GridMeasure) -> f64 {
        self.integrate_with(mu, |z| f.eval(z), Some(f.at_infinity()))
            .expect("test functions are defined at infinity")
    }

    /// Pairing against an arbitrary bounded grid function. `at_infinity` must
    /// be given whenever the measure carries mass at ∞.
    pub fn integrate_with<F>(
        &self,
        mu: &GridMeasure,
        f: F,
        at_infinity: Option<f64>,
    ) -> Result<f64>
    where
        F: Fn(Complex64) -> f64,
    {
        assert_eq!(mu.cell_masses.len(), self.n_cells());
        let n_theta = self.n_angular();
        let mut acc = 0.0;
        for i in 0..self.n_chart {
            for j in 0..n_theta {
                let m = mu.cell_masses[i * n_theta + j];
                if m != 0.0 {
                    acc += m * f(self.node_z(i, j));
                }
            }
        }
        if mu.infinity_mass != 0.0 {
            match at_infinity {
                Some(v) => acc += mu.infinity_mass * v,
                None => {
                    return Err(Error::UndefinedAtInfinity {
                        mass: mu.infinity_mass,
                    })
                }
            }
        }
        Ok(acc)
    }

    /// max over f ∈ family of |⟨μ, f⟩ − ⟨ν, f⟩|, requiring equal total mass
    /// (relative 1e−9). Symmetric, and zero iff all pairings agree.
    pub fn measure_distance(
        &self,
        mu: &GridMeasure,
        nu: &GridMeasure,
        family: &[TestFunction],
    ) -> Result<f64> {
        let scale = mu.total.abs().max(nu.total.abs()).max(1e-300);
        let rel = (mu.total - nu.total).abs() / scale;
        if rel > 1e-9 {
            return Err(Error::MassMismatch {
                lhs: mu.total,
                rhs: nu.total,
                rel,
            });
        }
        Ok(self.pairing_gap(mu, nu, family))
    }

    /// Same as [`Grid::measure_distance`] but without the mass check; used
    /// for signed differences paired against zero.
    pub fn pairing_gap(&self, mu: &GridMeasure, nu: &GridMeasure, family: &[TestFunction]) -> f64 {
        family
            .iter()
            .map(|f| (self.integrate(f, mu) - self.integrate(f, nu)).abs())
            .fold(0.0, f64::max)
    }

    /// Pairing distance between the stencil curvature of φ_FS and the analytic
    /// ω_FS cells on the default family: the grid's measured stencil accuracy.
    pub fn stencil_tolerance(&self) -> f64 {
        let u = self.sample_nodes(|z| 0.5 * z.norm_sqr().ln_1p());
        let stencil = self.ddc_from_potential(&u, 1.0);
        self.pairing_gap(&stencil, &self.fs_measure(1.0), &default_family())
    }
}

/// A positive (or signed, for differences) measure on ℙ¹ discretized on the
/// polar cell grid plus an atom at ∞.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridMeasure {
    pub cell_masses: Vec<f64>,
    pub infinity_mass: f64,
    /// Sum of all masses (maintained by construction).
    pub total: f64,
}

/// Tiny negative quadrature noise allowed on cells before clamping.
pub const TOL_NEG: f64 = 1e-9;

impl GridMeasure {
    pub fn new(cell_masses: Vec<f64>, infinity_mass: f64) -> Self {
        let total = cell_masses.iter().sum::<f64>() + infinity_mass;
        GridMeasure {
            cell_masses,
            infinity_mass,
            total,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        GridMeasure::new(
            self.cell_masses.iter().map(|m| m * c).collect(),
            self.infinity_mass * c,
        )
    }

    pub fn add(&self, other: &GridMeasure) -> Self {
        assert_eq!(self.cell_masses.len(), other.cell_masses.len());
        GridMeasure::new(
            self.cell_masses
                .iter()
                .zip(&other.cell_masses)
                .map(|(a, b)| a + b)
                .collect(),
            self.infinity_mass + other.infinity_mass,
        )
    }

    pub fn axpy(&self, c: f64, other: &GridMeasure) -> Self {
        self.add(&other.scaled(c))
    }

    /// Normalize to total mass 1, clamping tiny negative cells.
    pub fn normalized(&self) -> Self {
        let cells: Vec<f64> = self.cell_masses.iter().map(|&m| m.max(0.0)).collect();
        let total = cells.iter().sum::<f64>() + self.infinity_mass.max(0.0);
        GridMeasure::new(
            cells.iter().map(|m| m / total).collect(),
            self.infinity_mass.max(0.0) / total,
        )
    }

    pub fn min_cell(&self) -> f64 {
        self.cell_masses.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Check the positivity/total bookkeeping invariants.
    pub fn check(&self) -> Result<()> {
        let scale = self.total.abs().max(1.0);
        if self.min_cell() < -TOL_NEG * scale || self.infinity_mass < -TOL_NEG * scale {
            return Err(Error::NotSubharmonic {
                r: f64::NAN,
                theta: f64::NAN,
                mass: self.min_cell(),
            });
        }
        let sum = self.cell_masses.iter().sum::<f64>() + self.infinity_mass;
        let rel = (sum - self.total).abs() / scale;
        if rel > 1e-12 {
            return Err(Error::MassMismatch {
                lhs: sum,
                rhs: self.total,
                rel,
            });
        }
        Ok(())
    }
}

/// Bounded test functions with an explicit value at ∞.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TestFunction {
    /// 1 on the closed disk |z| ≤ radius, 0 elsewhere and at ∞.
    RadialIndicator { radius: f64 },
    /// exp(−|z−center|²/width²) ∈ \[0,1\]; 0 at ∞.
    SmoothBump { center: (f64, f64), width: f64 },
    /// Re or Im of z^k/(1+|z|²)^{k/2}, k ≤ 4; bounded by 1; 0 at ∞
    /// (the angular average of the non-convergent radial limit).
    HarmonicMoment { k: u32, imaginary: bool },
    /// Constant function (defined everywhere including ∞).
    Constant { value: f64 },
}

impl TestFunction {
    pub fn eval(&self, z: Complex64) -> f64 {
        match self {
            TestFunction::RadialIndicator { radius } => {
                if z.norm_sqr() <= radius * radius {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::SmoothBump { center, width } => {
                let d = z - Complex64::new(center.0, center.1);
                (-d.norm_sqr() / (width * width)).exp()
            }
            TestFunction::HarmonicMoment { k, imaginary } => {
                let zk = z.powu(*k);
                let denom = (1.0 + z.norm_sqr()).powf(*k as f64 / 2.0);
                if *imaginary {
                    zk.im / denom
                } else {
                    zk.re / denom
                }
            }
            TestFunction::Constant { value } => *value,
        }
    }

    pub fn at_infinity(&self) -> f64 {
        match self {
            TestFunction::Constant { value } => *value,
            _ => 0.0,
        }
    }

    pub fn label(&self) -> String {
        match self {
            TestFunction::RadialIndicator { radius } => format!("ind(r<={radius})"),
            TestFunction::SmoothBump { center, width } => {
                format!("bump({:+.2}{:+.2}i,w={})", center.0, center.1, width)
            }
            TestFunction::HarmonicMoment { k, imaginary } => {
                format!("mom({}{}, k={k})", if *imaginary { "Im" } else { "Re" }, "")
            }
            TestFunction::Constant { value } => format!("const({value})"),
        }
    }
}

/// The default pairing family: radial indicators at r ∈ {0.5, 0.8, 1, 1.25, 2},
/// four smooth bumps, and harmonic moments k ≤ 4 (Re and Im).
pub fn default_family() -> Vec<TestFunction> {
    let mut family = Vec::new();
    for radius in [0.5, 0.8, 1.0, 1.25, 2.0] {
        family.push(TestFunction::RadialIndicator { radius });
    }
    for (center, width) in [
        ((0.0, 0.0), 0.75),
        ((1.0, 0.0), 0.5),
        ((-0.6, 0.8), 0.5),
        ((0.5, -1.2), 0.75),
    ] {
        family.push(TestFunction::SmoothBump { center, width });
    }
    for k in 1..=4 {
        family.push(TestFunction::HarmonicMoment { k, imaginary: false });
        family.push(TestFunction::HarmonicMoment { k, imaginary: true });
    }
    family
}

/// Radial-only subfamily (indicators and the centered bump).
pub fn radial_family() -> Vec<TestFunction> {
    default_family()
        .into_iter()
        .filter(|f| {
            matches!(f, TestFunction::RadialIndicator { .. })
                || matches!(f, TestFunction::SmoothBump { center, .. } if *center == (0.0, 0.0))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_grid() -> Grid {
        Grid::new(Chart {
            truncation_radius: 20.0,
            grid_radial: 128,
            grid_angular: 64,
        })
        .unwrap()
    }

    fn beta_integral(k: usize, p: usize) -> f64 {
        // ∫ t^k (1-t)^{p-k} dt = k!(p-k)!/(p+1)! = 1/((p+1)·C(p,k))
        let mut c = 1.0f64;
        for j in 0..k {
            c = c * (p - j) as f64 / (j + 1) as f64;
        }
        1.0 / ((p + 1) as f64 * c)
    }

    #[test]
    fn fs_density_at_origin() {
        assert_relative_eq!(
            fs_volume_density(Complex64::new(0.0, 0.0)),
            1.0 / std::f64::consts::PI,
            max_relative = 1e-15
        );
    }

    #[test]
    fn fs_total_mass_is_one() {
        let g = small_grid();
        // ∫ density dm over ℂ, done as ∫ 1 dω_FS on the compactified grid.
        let total = g.integrate_fs(|_| 1.0);
        assert_relative_eq!(total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn unit_disk_has_half_the_mass() {
        let g = small_grid();
        // forced by the symmetry z ↦ 1/z̄; the panel split at t = 1/2 makes
        // the indicator quadrature exact
        let m = g.integrate_fs(|z| if z.norm_sqr() <= 1.0 { 1.0 } else { 0.0 });
        assert_relative_eq!(m, 0.5, epsilon = 1e-12);
        let disc = g.fs_measure(1.0);
        let ind = TestFunction::RadialIndicator { radius: 1.0 };
        assert_relative_eq!(g.integrate(&ind, &disc), 0.5, epsilon = 1e-4);
    }

    #[test]
    fn quadrature_matches_beta_integrals() {
        // the Gram integrands of the Fubini–Study powers, against their
        // closed-form values
        let g = small_grid();
        for p in [3usize, 10, 40] {
            for k in [0usize, 1, p / 2, p] {
                let q = g.integrate_fs_radial(|r| {
                    let t = r * r / (1.0 + r * r);
                    t.powi(k as i32) * (1.0 - t).powi((p - k) as i32)
                });
                assert_relative_eq!(q, beta_integral(k, p), max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn truncation_radius_does_not_touch_quadrature() {
        // doubling the truncation radius changes cell bookkeeping only
        let g1 = small_grid();
        let g2 = Grid::new(Chart {
            truncation_radius: 40.0,
            ..g1.chart
        })
        .unwrap();
        let f = |r: f64| {
            let t = r * r / (1.0 + r * r);
            t.powi(40)
        };
        assert_eq!(g1.integrate_fs_radial(f), g2.integrate_fs_radial(f));
        // and the mass the smaller chart parks at ∞ is exactly the tail
        let m1 = g1.fs_measure(1.0);
        let m2 = g2.fs_measure(1.0);
        assert!(m1.infinity_mass > m2.infinity_mass);
        assert_relative_eq!(m1.total, 1.0, epsilon = 1e-12);
        assert_relative_eq!(m2.total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn integrate_constant_and_atoms() {
        let g = small_grid();
        let mu = g.fs_measure(1.0);
        let one = TestFunction::Constant { value: 1.0 };
        assert_relative_eq!(g.integrate(&one, &mu), 1.0, epsilon = 1e-12);
        // indicator vanishes on an atom at ∞
        let inf = g.atom_at_infinity(1.0);
        let ind = TestFunction::RadialIndicator { radius: 1.0 };
        assert_eq!(g.integrate(&ind, &inf), 0.0);
        // undefined-at-∞ rejection
        let err = g.integrate_with(&inf, |_| 1.0, None);
        assert!(matches!(err, Err(Error::UndefinedAtInfinity { .. })));
    }

    #[test]
    fn measure_distance_examples() {
        let g = small_grid();
        let omega = g.fs_measure(1.0);
        let family = default_family();
        assert_eq!(g.measure_distance(&omega, &omega, &family).unwrap(), 0.0);
        // ω_FS vs unit atom at 0 against the r=1 indicator: 1 − 0.5
        let delta = g.atom(Complex64::new(0.0, 0.0), 1.0);
        let fam = vec![TestFunction::RadialIndicator { radius: 1.0 }];
        let d = g.measure_distance(&omega, &delta, &fam).unwrap();
        assert_relative_eq!(d, 0.5, epsilon = 1e-4);
        // rotational symmetry: a rotated ω_FS is the same discretized measure
        let d0 = g
            .measure_distance(&omega, &g.fs_measure(1.0), &radial_family())
            .unwrap();
        assert_eq!(d0, 0.0);
        // mass mismatch is an error
        assert!(g
            .measure_distance(&omega, &omega.scaled(1.5), &family)
            .is_err());
    }

    #[test]
    fn measure_distance_is_a_pseudometric() {
        let g = small_grid();
        let family = default_family();
        let a = g.fs_measure(1.0);
        let b = g.atom(Complex64::new(0.3, -0.4), 1.0);
        let c = g.circle_measure(1.0, 1.0);
        let dab = g.measure_distance(&a, &b, &family).unwrap();
        let dba = g.measure_distance(&b, &a, &family).unwrap();
        assert_eq!(dab, dba);
        let dac = g.measure_distance(&a, &c, &family).unwrap();
        let dcb = g.measure_distance(&c, &b, &family).unwrap();
        assert!(dab <= dac + dcb + 1e-15);
    }

    #[test]
    fn ddc_of_log_is_the_unit_atom() {
        let g = small_grid();
        let u = g.sample_nodes(|z| z.norm().ln());
        let mu = g.ddc_from_potential(&u, 1.0);
        mu.check().unwrap();
        // all mass in the innermost ring
        let inner: f64 = mu.cell_masses[..g.n_angular()].iter().sum();
        assert_relative_eq!(inner, 1.0, epsilon = 1e-9);
        assert_relative_eq!(mu.infinity_mass, 0.0, epsilon = 1e-9);
        assert_relative_eq!(mu.total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ddc_of_fs_weight_is_fs_measure() {
        let g = small_grid();
        let tol = g.stencil_tolerance();
        assert!(tol < 5e-4, "stencil tolerance {tol} unexpectedly large");
        // mass bookkeeping is exact
        let u = g.sample_nodes(|z| 0.5 * z.norm_sqr().ln_1p());
        let mu = g.ddc_from_potential(&u, 1.0);
        mu.check().unwrap();
    }

    #[test]
    fn ddc_of_equilibrium_weight_concentrates_on_the_circle() {
        let g = small_grid();
        let u = g.sample_nodes(|z| z.norm().ln().max(0.0));
        let mu = g.ddc_from_potential(&u, 1.0);
        mu.check().unwrap();
        // all mass within the annulus 0.9 ≤ |z| ≤ 1.1
        let n_theta = g.n_angular();
        let mut annulus = 0.0;
        for i in 0..g.n_chart {
            if g.r[i] >= 0.9 && g.r[i] <= 1.1 {
                for j in 0..n_theta {
                    annulus += mu.cell_masses[i * n_theta + j];
                }
            }
        }
        assert_relative_eq!(annulus, 1.0, epsilon = 1e-9);
        // and it agrees with the analytic circle binning in pairing
        let d = g.pairing_gap(&mu, &g.circle_measure(1.0, 1.0), &default_family());
        assert!(d < 1e-3, "equilibrium stencil vs analytic circle gap {d}");
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(Chart {
            truncation_radius: 0.5,
            grid_radial: 128,
            grid_angular: 64
        })
        .is_err());
        assert!(Grid::new(Chart {
            truncation_radius: 20.0,
            grid_radial: 4,
            grid_angular: 64
        })
        .is_err());
    }
}
