//! Random sections, their zero sets, and the associated log statistics.
//!
//! Sections are drawn in orthonormal coordinates from either the sphere
//! ensemble (uniform on the unit sphere of H⁰₍₂₎) or the Gaussian ensemble
//! (independent standard complex Gaussians). Sampling is reproducible and
//! order-independent: each (seed, p, sample index) gets its own counter-based
//! ChaCha stream.
//!
//! Zeros are extracted with the Aberth–Ehrlich simultaneous iteration plus
//! Newton polishing; leading coefficients below 1e−13 of the coefficient
//! scale are deflated into multiplicity at ∞, and close roots are clustered
//! at 1e−7.

use crate::bergman::{KernelField, OrthoBasis};
use crate::error::{Error, Result};
use crate::geometry::{Grid, GridMeasure};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Relative threshold below which leading coefficients are treated as zero.
pub const DEFLATION_THRESHOLD: f64 = 1e-13;
/// Clustering tolerance for root multiplicities.
pub const CLUSTER_TOLERANCE: f64 = 1e-7;

/// Which ensemble to draw sections from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnsembleKind {
    /// Uniform on the unit sphere S^{2d_p−1} of coefficient space.
    Sphere,
    /// Independent standard complex Gaussian coefficients.
    Gaussian,
}

impl EnsembleKind {
    pub fn label(&self) -> &'static str {
        match self {
            EnsembleKind::Sphere => "sphere",
            EnsembleKind::Gaussian => "gaussian",
        }
    }
}

/// Ensemble description: kind, RNG seed, number of samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub seed: u64,
    pub samples: usize,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("ensemble needs at least one sample".into()));
        }
        Ok(())
    }
}

/// RNG stream namespaces (kept distinct so different ops never share draws).
mod ns {
    pub const SECTION: u64 = 1;
    pub const LOG_SPHERE: u64 = 2;
}

fn stream_rng(seed: u64, namespace: u64, p: usize, index: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream((namespace << 56) | ((p as u64) << 32) | index as u64);
    rng
}

/// Draw one section in orthonormal coordinates. Sphere samples have unit
/// coefficient norm; Gaussian samples are unnormalized.
pub fn sample_section(basis: &OrthoBasis, spec: &EnsembleSpec, index: usize) -> Vec<Complex64> {
    let mut rng = stream_rng(spec.seed, ns::SECTION, basis.p, index);
    let mut a: Vec<Complex64> = (0..basis.dim)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            // complex standard normal: E|g|² = 1
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
        .collect();
    if spec.kind == EnsembleKind::Sphere {
        let n = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        for x in a.iter_mut() {
            *x /= n;
        }
    }
    a
}

/// Draw the whole ensemble (parallel over samples, order-independent).
pub fn sample_ensemble(basis: &OrthoBasis, spec: &EnsembleSpec) -> Vec<Vec<Complex64>> {
    (0..spec.samples)
        .into_par_iter()
        .map(|m| sample_section(basis, spec, m))
        .collect()
}

/// Zeros of one section, with multiplicities and the mass at ∞.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZeroSample {
    /// Finite roots with multiplicities.
    pub zeros: Vec<((f64, f64), usize)>,
    /// Degree deficit p − effective degree.
    pub infinity_multiplicity: usize,
    /// Max backward-relative residual |s(root)| / Σ_k |c_k||root|^k over the
    /// polished roots.
    pub residual: f64,
    /// Orthonormal-basis coordinates of the section (empty when built from
    /// raw polynomial coefficients).
    pub coefficient_vector: Vec<(f64, f64)>,
}

impl ZeroSample {
    pub fn total_finite_multiplicity(&self) -> usize {
        self.zeros.iter().map(|(_, m)| m).sum()
    }

    /// Exact integer identity: finite multiplicities + ∞ multiplicity = p.
    pub fn check_count(&self, p: usize) -> bool {
        self.total_finite_multiplicity() + self.infinity_multiplicity == p
    }

    pub fn zero_points(&self) -> impl Iterator<Item = (Complex64, usize)> + '_ {
        self.zeros
            .iter()
            .map(|((re, im), m)| (Complex64::new(*re, *im), *m))
    }
}

fn horner(c: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut v = Complex64::new(0.0, 0.0);
    let mut d = Complex64::new(0.0, 0.0);
    for &ck in c.iter().rev() {
        d = d * z + v;
        v = v * z + ck;
    }
    (v, d)
}

/// Aberth–Ehrlich simultaneous iteration on a polynomial with nonzero
/// leading and trailing coefficients (degree = c.len()−1 ≥ 1).
fn aberth(c: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = c.len() - 1;
    // initial guesses on a circle at the geometric-mean root radius,
    // staggered to break symmetry
    let lead = c[n].norm();
    let tail = c[0].norm();
    let radius = (tail / lead).powf(1.0 / n as f64).clamp(1e-6, 1e6);
    let mut z: Vec<Complex64> = (0..n)
        .map(|m| {
            Complex64::from_polar(
                radius * (1.0 + 0.1 * (m as f64 / n as f64)),
                2.0 * std::f64::consts::PI * m as f64 / n as f64 + 0.4,
            )
        })
        .collect();
    let max_iter = 200;
    for _ in 0..max_iter {
        let mut moved = 0.0f64;
        for i in 0..n {
            let (v, d) = horner(c, z[i]);
            if v.norm() == 0.0 {
                continue;
            }
            let newton = if d.norm() > 0.0 {
                v / d
            } else {
                Complex64::new(1e-12, 1e-12)
            };
            let mut s = Complex64::new(0.0, 0.0);
            for (j, zj) in z.iter().enumerate() {
                if j != i {
                    let diff = z[i] - zj;
                    if diff.norm() > 0.0 {
                        s += Complex64::new(1.0, 0.0) / diff;
                    }
                }
            }
            let denom = Complex64::new(1.0, 0.0) - newton * s;
            let w = if denom.norm() > 1e-300 { newton / denom } else { newton };
            z[i] -= w;
            moved = moved.max(w.norm() / (1.0 + z[i].norm()));
        }
        if moved < 1e-14 {
            // Newton polish
            for zi in z.iter_mut() {
                for _ in 0..3 {
                    let (v, d) = horner(c, *zi);
                    if d.norm() > 0.0 {
                        *zi -= v / d;
                    }
                }
            }
            return Ok(z);
        }
    }
    let converged = z
        .iter()
        .filter(|zi| {
            let (v, _) = horner(c, **zi);
            v.norm() < 1e-8
        })
        .count();
    Err(Error::RootsDiverged {
        iterations: max_iter,
        converged,
        total: n,
        partial: z,
    })
}

/// All zeros (with multiplicities and the atom at ∞) of a polynomial given by
/// its monomial coefficients c_0..c_p, read as a section of O(p).
pub fn find_zeros(coeffs: &[Complex64], p: usize) -> Result<ZeroSample> {
    assert_eq!(coeffs.len(), p + 1);
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::ZeroSection);
    }
    let c: Vec<Complex64> = coeffs.iter().map(|x| x / scale).collect();
    // leading deflation into multiplicity at ∞
    let mut q = p;
    while q > 0 && c[q].norm() <= DEFLATION_THRESHOLD {
        q -= 1;
    }
    if q == 0 && c[0].norm() <= DEFLATION_THRESHOLD {
        return Err(Error::ZeroSection);
    }
    let infinity_multiplicity = p - q;
    // exact trailing zeros are roots at the origin
    let mut t = 0usize;
    while t < q && c[t].norm() == 0.0 {
        t += 1;
    }
    let core = &c[t..=q];
    let finite_roots = if core.len() > 1 { aberth(core)? } else { Vec::new() };
    // multiplicity clustering
    let mut clusters: Vec<(Complex64, usize)> = Vec::new();
    if t > 0 {
        clusters.push((Complex64::new(0.0, 0.0), t));
    }
    for root in finite_roots {
        let mut placed = false;
        for (rep, m) in clusters.iter_mut() {
            if (*rep - root).norm() <= CLUSTER_TOLERANCE * rep.norm().max(1.0) {
                // running centroid over the polished members
                let total = *m as f64;
                *rep = (*rep * total + root) / (total + 1.0);
                *m += 1;
                placed = true;
                break;
            }
        }
        if !placed {
            clusters.push((root, 1));
        }
    }
    // backward-relative residual: |P(z)| over the evaluation scale Σ|c_k||z|^k
    let mut residual = 0.0f64;
    for (rep, m) in &clusters {
        if *m == t && rep.norm() == 0.0 {
            continue; // exact deflated origin roots
        }
        let (v, _) = horner(core, *rep);
        let mut scale_at = 0.0;
        let mut pw = 1.0;
        for ck in core {
            scale_at += ck.norm() * pw;
            pw *= rep.norm();
        }
        residual = residual.max(v.norm() / scale_at.max(f64::MIN_POSITIVE));
    }
    Ok(ZeroSample {
        zeros: clusters.iter().map(|(z, m)| ((z.re, z.im), *m)).collect(),
        infinity_multiplicity,
        residual,
        coefficient_vector: Vec::new(),
    })
}

/// Zeros of a section in orthonormal coordinates (pads the pole-excluded
/// monomials back in as exact zeros at the origin).
pub fn section_zeros(basis: &OrthoBasis, a: &[Complex64]) -> Result<ZeroSample> {
    let c_low = basis.monomial_coefficients(a);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); basis.degree + 1];
    for (i, v) in c_low.iter().enumerate() {
        coeffs[basis.k_min + i] = *v;
    }
    let mut sample = find_zeros(&coeffs, basis.degree)?;
    sample.coefficient_vector = a.iter().map(|x| (x.re, x.im)).collect();
    Ok(sample)
}

/// Zeros for a whole ensemble (parallel over samples; errors carry the index).
pub fn ensemble_zeros(
    basis: &OrthoBasis,
    spec: &EnsembleSpec,
) -> Result<Vec<ZeroSample>> {
    let out: Vec<Result<ZeroSample>> = (0..spec.samples)
        .into_par_iter()
        .map(|m| {
            let a = sample_section(basis, spec, m);
            section_zeros(basis, &a)
        })
        .collect();
    out.into_iter().collect()
}

/// Averaged normalized empirical zero measure: each sample contributes mass
/// 1/p per zero (counting multiplicity) and its ∞ deficit at the atom.
pub fn empirical_measure(grid: &Grid, samples: &[ZeroSample], p: usize) -> GridMeasure {
    assert!(!samples.is_empty(), "empirical measure needs at least one sample");
    let mut cells = vec![0.0; grid.n_cells()];
    let mut infinity = 0.0;
    let unit = 1.0 / (p as f64 * samples.len() as f64);
    for sample in samples {
        for (z, m) in sample.zero_points() {
            let mass = unit * m as f64;
            match grid.cell_of(z) {
                Some(c) => cells[c] += mass,
                None => infinity += mass,
            }
        }
        infinity += unit * sample.infinity_multiplicity as f64;
    }
    GridMeasure::new(cells, infinity)
}

/// n-th harmonic number Σ_{j≤n} 1/j.
pub fn harmonic_number(n: usize) -> f64 {
    (1..=n).map(|j| 1.0 / j as f64).sum()
}

/// Monte Carlo estimate of I(k) = −E[log|z_k|] on the unit sphere of ℂ^k,
/// with the closed-form value H_{k−1}/2 (Beta-distribution oracle:
/// |z_k|² ~ Beta(1, k−1), so E[−log|z_k|] = ½·H_{k−1}).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IkEstimate {
    pub k: usize,
    pub samples: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub exact: f64,
}

pub fn expected_log_sphere(k: usize, samples: usize, seed: u64) -> Result<IkEstimate> {
    if k == 0 || samples == 0 {
        return Err(Error::Config("expected_log_sphere needs k ≥ 1, M ≥ 1".into()));
    }
    let chunk = 1024usize;
    let n_chunks = samples.div_ceil(chunk);
    let partials: Vec<(f64, f64, usize)> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = stream_rng(seed, ns::LOG_SPHERE, k & 0xFF_FFFF, ci);
            let m_here = chunk.min(samples - ci * chunk);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..m_here {
                let mut norm2 = 0.0;
                let mut last2 = 0.0;
                for j in 0..k {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    let n2 = re * re + im * im;
                    norm2 += n2;
                    if j == k - 1 {
                        last2 = n2;
                    }
                }
                let v = -0.5 * (last2 / norm2).ln();
                s += v;
                s2 += v * v;
            }
            (s, s2, m_here)
        })
        .collect();
    let (sum, sum2, m) = partials
        .iter()
        .fold((0.0, 0.0, 0usize), |acc, x| (acc.0 + x.0, acc.1 + x.1, acc.2 + x.2));
    let mean = sum / m as f64;
    let var = (sum2 / m as f64 - mean * mean).max(0.0);
    Ok(IkEstimate {
        k,
        samples: m,
        estimate: mean,
        std_error: (var / m as f64).sqrt(),
        exact: 0.5 * harmonic_number(k - 1),
    })
}

/// Y statistics for a batch of sections: per sample,
/// Y_p(σ) = (1/A_p) ∫ log(|σ|_{h_p} / √P_p) ω_FS (always ≤ 0 up to noise).
#[derive(Clone, Debug)]
pub struct YStatistics {
    pub values: Vec<f64>,
    /// Quadrature nodes where some |σ| underflowed to the clamp (flag when
    /// above 1% of nodes).
    pub clamped_nodes: usize,
}

pub fn y_statistics(
    grid: &Grid,
    basis: &OrthoBasis,
    kernel: &KernelField,
    samples: &[Vec<Complex64>],
) -> Result<YStatistics> {
    if kernel.min_value() <= 0.0 {
        return Err(Error::Verdict(
            "Y statistic needs a strictly positive kernel on the grid".into(),
        ));
    }
    let n_theta = grid.n_angular();
    let m = samples.len();
    let d = basis.dim;
    let rows: Vec<(Vec<f64>, usize)> = (0..grid.n_radial())
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0; m];
            let mut clamped = 0usize;
            for j in 0..n_theta {
                let z = grid.node_z(i, j);
                let sv = basis.section_values(z);
                let r = z.norm();
                let anchor = if r >= 1.0 { basis.degree } else { basis.k_min };
                let common = anchor as f64 * r.ln() - basis.weight().eval_base(z);
                let half_log_p = 0.5 * kernel.values[i * n_theta + j].ln();
                let wq = grid.w[i] / n_theta as f64;
                for (s_idx, a) in samples.iter().enumerate() {
                    let mut val = Complex64::new(0.0, 0.0);
                    for (aj, yj) in a.iter().zip(&sv).take(d) {
                        val += aj * yj;
                    }
                    let nrm = val.norm();
                    let log_sigma = if nrm > 0.0 {
                        nrm.ln() + common
                    } else {
                        clamped += 1;
                        f64::MIN_POSITIVE.ln()
                    };
                    acc[s_idx] += wq * (log_sigma - half_log_p);
                }
            }
            (acc, clamped)
        })
        .collect();
    let mut values = vec![0.0; m];
    let mut clamped_nodes = 0;
    for (acc, clamped) in rows {
        for (v, a) in values.iter_mut().zip(&acc) {
            *v += a;
        }
        clamped_nodes += clamped;
    }
    for v in values.iter_mut() {
        *v /= kernel.big_a;
    }
    Ok(YStatistics { values, clamped_nodes })
}
