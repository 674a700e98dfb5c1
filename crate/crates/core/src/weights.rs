//! Weights (local potentials of Hermitian metrics on O(1)) and metric
//! schedules p ↦ (W_p, a_p, A_p).
//!
//! A weight is a nonnegative combination of built-in families on the chart:
//!
//! * `fs` — φ_FS = ½log(1+|z|²), curvature ω_FS;
//! * `eq` — max(log|z|, 0), curvature the uniform unit-circle measure;
//! * `log` — log|z−z₀|, curvature δ_{z₀};
//! * `logpole(ν)` — (1−ν)φ_FS + ν·log|z|, curvature (1−ν)ω_FS + ν·δ₀;
//! * `cone(β)` — φ_FS backbone plus a·|z−z₀|^{2(1−β)}·exp(−|z−z₀|²/w²),
//!   the local model of a cone point of angle 2π(1−β);
//! * `bump` — a·exp(−|z−z₀|²/w²), a smooth degree-0 perturbation (signed
//!   curvature; only admissible inside a schedule whose total stays positive).
//!
//! Every family has log-growth 1 at ∞ except `bump` (growth 0), so total
//! curvature mass always equals the growth order. Constant shifts of a weight
//! are carried symbolically ([`Weight::shifted`]) and never reach the
//! numerics: curvature and Bergman kernels are shift-invariant exactly as
//! computed.

use crate::error::{Error, Result};
use crate::geometry::{fs_volume_density, Grid, GridMeasure};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Smoothness class of a weight, with singular data where applicable.
#[derive(Clone, Debug, PartialEq)]
pub enum Smoothness {
    Smooth,
    Continuous,
    HasLogPoles(Vec<(Complex64, f64)>),
    Cone { location: Complex64, beta: f64 },
}

impl std::fmt::Display for Smoothness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Smoothness::Smooth => write!(f, "smooth"),
            Smoothness::Continuous => write!(f, "continuous"),
            Smoothness::HasLogPoles(ps) => write!(f, "log poles ({} of them)", ps.len()),
            Smoothness::Cone { beta, .. } => write!(f, "cone(beta={beta})"),
        }
    }
}

/// One built-in weight family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum WeightKind {
    FubiniStudy,
    Equilibrium,
    Log { location: (f64, f64) },
    LogPole { nu: f64 },
    Cone { location: (f64, f64), beta: f64, amplitude: f64, width: f64 },
    Bump { location: (f64, f64), amplitude: f64, width: f64 },
}

impl WeightKind {
    fn eval(&self, z: Complex64) -> f64 {
        match self {
            WeightKind::FubiniStudy => 0.5 * z.norm_sqr().ln_1p(),
            WeightKind::Equilibrium => z.norm().ln().max(0.0),
            WeightKind::Log { location } => {
                (z - Complex64::new(location.0, location.1)).norm().ln()
            }
            WeightKind::LogPole { nu } => {
                (1.0 - nu) * 0.5 * z.norm_sqr().ln_1p() + nu * z.norm().ln()
            }
            WeightKind::Cone { location, beta, amplitude, width } => {
                let d = z - Complex64::new(location.0, location.1);
                let rho2 = d.norm_sqr();
                0.5 * z.norm_sqr().ln_1p()
                    + amplitude * rho2.powf(1.0 - beta) * (-rho2 / (width * width)).exp()
            }
            WeightKind::Bump { location, amplitude, width } => {
                let d = z - Complex64::new(location.0, location.1);
                amplitude * (-d.norm_sqr() / (width * width)).exp()
            }
        }
    }

    /// Coefficient of log|z| at ∞.
    fn growth_order(&self) -> f64 {
        match self {
            WeightKind::Bump { .. } => 0.0,
            _ => 1.0,
        }
    }

    /// Bundle degree contributed per unit multiplicity (O(1) or trivial).
    fn degree(&self) -> usize {
        match self {
            WeightKind::Bump { .. } => 0,
            _ => 1,
        }
    }

    fn is_radial(&self) -> bool {
        match self {
            WeightKind::FubiniStudy | WeightKind::Equilibrium | WeightKind::LogPole { .. } => true,
            WeightKind::Log { location }
            | WeightKind::Cone { location, .. }
            | WeightKind::Bump { location, .. } => *location == (0.0, 0.0),
        }
    }

    fn smoothness(&self) -> Smoothness {
        match self {
            WeightKind::FubiniStudy | WeightKind::Bump { .. } => Smoothness::Smooth,
            WeightKind::Equilibrium => Smoothness::Continuous,
            WeightKind::Log { location } => {
                Smoothness::HasLogPoles(vec![(Complex64::new(location.0, location.1), 1.0)])
            }
            WeightKind::LogPole { nu } => {
                Smoothness::HasLogPoles(vec![(Complex64::new(0.0, 0.0), *nu)])
            }
            WeightKind::Cone { location, beta, .. } => Smoothness::Cone {
                location: Complex64::new(location.0, location.1),
                beta: *beta,
            },
        }
    }

    /// Known strictly positive curvature-density lower bound against ω_FS.
    fn certified_eps(&self) -> Option<f64> {
        match self {
            WeightKind::FubiniStudy => Some(1.0),
            WeightKind::LogPole { nu } => Some(1.0 - nu),
            WeightKind::Equilibrium | WeightKind::Log { .. } => Some(0.0),
            WeightKind::Cone { .. } | WeightKind::Bump { .. } => None,
        }
    }

    /// Certified curvature ≥ 0 (admissible nonneg factor).
    fn certified_nonneg(&self) -> bool {
        !matches!(self, WeightKind::Bump { .. } | WeightKind::Cone { .. })
    }

    /// Closed-form curvature density against Lebesgue measure, when smooth.
    fn curvature_density(&self, z: Complex64) -> Option<f64> {
        match self {
            WeightKind::FubiniStudy => Some(fs_volume_density(z)),
            WeightKind::Bump { location, amplitude, width } => {
                // (1/2π)·Δ[a e^{−ρ²/w²}] = (a/2π) e^{−ρ²/w²} (4ρ²/w⁴ − 4/w²)
                let d = z - Complex64::new(location.0, location.1);
                let rho2 = d.norm_sqr();
                let w2 = width * width;
                Some(
                    amplitude * (-rho2 / w2).exp() * (4.0 * rho2 / (w2 * w2) - 4.0 / w2)
                        / (2.0 * std::f64::consts::PI),
                )
            }
            _ => None,
        }
    }

    /// Analytic cell discretization of the curvature, when available.
    fn analytic_curvature(&self, grid: &Grid) -> Option<GridMeasure> {
        match self {
            WeightKind::FubiniStudy => Some(grid.fs_measure(1.0)),
            WeightKind::Equilibrium => Some(grid.circle_measure(1.0, 1.0)),
            WeightKind::Log { location } => {
                Some(grid.atom(Complex64::new(location.0, location.1), 1.0))
            }
            WeightKind::LogPole { nu } => Some(
                grid.fs_measure(1.0 - nu)
                    .add(&grid.atom(Complex64::new(0.0, 0.0), *nu)),
            ),
            _ => None,
        }
    }

    fn label(&self) -> String {
        match self {
            WeightKind::FubiniStudy => "fs".into(),
            WeightKind::Equilibrium => "eq".into(),
            WeightKind::Log { location } => format!("log@({},{})", location.0, location.1),
            WeightKind::LogPole { nu } => format!("logpole(nu={nu})"),
            WeightKind::Cone { beta, amplitude, width, location } => format!(
                "cone(beta={beta},amp={amplitude},width={width},at=({},{}))",
                location.0, location.1
            ),
            WeightKind::Bump { amplitude, width, location } => format!(
                "bump(amp={amplitude},width={width},at=({},{}))",
                location.0, location.1
            ),
        }
    }
}

/// A weight function on the chart: a nonnegative combination of built-in
/// families, plus a symbolic constant shift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    terms: Vec<(f64, WeightKind)>,
    shift: f64,
}

impl Weight {
    pub fn fs() -> Self {
        Weight::single(WeightKind::FubiniStudy)
    }

    pub fn equilibrium() -> Self {
        Weight::single(WeightKind::Equilibrium)
    }

    pub fn log_at(location: Complex64) -> Self {
        Weight::single(WeightKind::Log { location: (location.re, location.im) })
    }

    pub fn log_pole(nu: f64) -> Result<Self> {
        if !(0.0 < nu && nu < 1.0) {
            return Err(Error::UnsupportedWeight(format!(
                "log-pole coefficient must lie in (0,1), got {nu}"
            )));
        }
        Ok(Weight::single(WeightKind::LogPole { nu }))
    }

    pub fn cone(location: Complex64, beta: f64, amplitude: f64, width: f64) -> Result<Self> {
        if !(0.0 < beta && beta < 1.0) || amplitude <= 0.0 || width <= 0.0 {
            return Err(Error::UnsupportedWeight(format!(
                "cone requires 0<beta<1, amp>0, width>0, got beta={beta}, amp={amplitude}, width={width}"
            )));
        }
        Ok(Weight::single(WeightKind::Cone {
            location: (location.re, location.im),
            beta,
            amplitude,
            width,
        }))
    }

    pub fn bump(location: Complex64, amplitude: f64, width: f64) -> Result<Self> {
        if amplitude <= 0.0 || width <= 0.0 {
            return Err(Error::UnsupportedWeight(format!(
                "bump requires amp>0 and width>0, got amp={amplitude}, width={width}"
            )));
        }
        Ok(Weight::single(WeightKind::Bump {
            location: (location.re, location.im),
            amplitude,
            width,
        }))
    }

    fn single(kind: WeightKind) -> Self {
        Weight { terms: vec![(1.0, kind)], shift: 0.0 }
    }

    /// Nonnegative combination Σ cᵢ·wᵢ.
    pub fn combine(parts: &[(f64, &Weight)]) -> Result<Self> {
        let mut terms = Vec::new();
        let mut shift = 0.0;
        for (c, w) in parts {
            if *c < 0.0 {
                return Err(Error::Schedule(format!(
                    "negative combination coefficient {c}"
                )));
            }
            if *c == 0.0 {
                continue;
            }
            shift += c * w.shift;
            for (ci, k) in &w.terms {
                terms.push((c * ci, k.clone()));
            }
        }
        Ok(Weight { terms, shift })
    }

    /// The same weight plus a constant; the shift is carried symbolically.
    pub fn shifted(&self, c: f64) -> Self {
        let mut w = self.clone();
        w.shift += c;
        w
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// W(z), −∞ at log poles. Includes the constant shift.
    pub fn eval(&self, z: Complex64) -> f64 {
        self.eval_base(z) + self.shift
    }

    /// W(z) without the constant shift (what the numerics consume).
    pub fn eval_base(&self, z: Complex64) -> f64 {
        self.terms.iter().map(|(c, k)| c * k.eval(z)).sum()
    }

    /// Coefficient of log|z| as |z| → ∞.
    pub fn growth_order(&self) -> f64 {
        self.terms.iter().map(|(c, k)| c * k.growth_order()).sum()
    }

    /// Integer bundle degree (monomial candidates run over 0..=degree).
    pub fn degree(&self) -> usize {
        let d: f64 = self.terms.iter().map(|(c, k)| c * k.degree() as f64).sum();
        d.round() as usize
    }

    pub fn is_radial(&self) -> bool {
        self.terms.iter().all(|(_, k)| k.is_radial())
    }

    pub fn is_smooth(&self) -> bool {
        matches!(self.smoothness(), Smoothness::Smooth)
    }

    pub fn smoothness(&self) -> Smoothness {
        let mut poles: Vec<(Complex64, f64)> = Vec::new();
        let mut cone: Option<(Complex64, f64)> = None;
        let mut continuous = false;
        for (c, k) in &self.terms {
            match k.smoothness() {
                Smoothness::Smooth => {}
                Smoothness::Continuous => continuous = true,
                Smoothness::HasLogPoles(ps) => {
                    for (z0, nu) in ps {
                        match poles.iter_mut().find(|(z, _)| (*z - z0).norm() < 1e-14) {
                            Some((_, m)) => *m += c * nu,
                            None => poles.push((z0, c * nu)),
                        }
                    }
                }
                Smoothness::Cone { location, beta } => cone = Some((location, beta)),
            }
        }
        if !poles.is_empty() {
            Smoothness::HasLogPoles(poles)
        } else if let Some((location, beta)) = cone {
            Smoothness::Cone { location, beta }
        } else if continuous {
            Smoothness::Continuous
        } else {
            Smoothness::Smooth
        }
    }

    /// The raw (coefficient, family) terms.
    pub fn kinds(&self) -> &[(f64, WeightKind)] {
        &self.terms
    }

    /// Aggregated log-pole data: (location, total coefficient).
    pub fn log_poles(&self) -> Vec<(Complex64, f64)> {
        match self.smoothness() {
            Smoothness::HasLogPoles(ps) => ps,
            _ => Vec::new(),
        }
    }

    /// lim (growth_order·log r − W) along |z| → ∞ (0 for every built-in).
    pub fn infinity_log_gap(&self) -> f64 {
        0.0
    }

    pub fn certified_eps(&self) -> Option<f64> {
        let mut eps = 0.0;
        for (c, k) in &self.terms {
            eps += c * k.certified_eps()?;
        }
        Some(eps)
    }

    pub fn certified_nonneg(&self) -> bool {
        self.terms.iter().all(|(_, k)| k.certified_nonneg())
    }

    /// Closed-form curvature density against Lebesgue, when every term is
    /// smooth with a known density.
    pub fn curvature_density(&self, z: Complex64) -> Option<f64> {
        let mut d = 0.0;
        for (c, k) in &self.terms {
            d += c * k.curvature_density(z)?;
        }
        Some(d)
    }

    fn analytic_curvature(&self, grid: &Grid) -> Option<GridMeasure> {
        let mut acc = GridMeasure::new(vec![0.0; grid.n_cells()], 0.0);
        for (c, k) in &self.terms {
            acc = acc.axpy(*c, &k.analytic_curvature(grid)?);
        }
        Some(acc)
    }

    pub fn label(&self) -> String {
        let body = self
            .terms
            .iter()
            .map(|(c, k)| {
                if (*c - 1.0).abs() < 1e-12 {
                    k.label()
                } else {
                    format!("{c}*{}", k.label())
                }
            })
            .collect::<Vec<_>>()
            .join(" + ");
        if self.shift != 0.0 {
            format!("{body} {} {}", if self.shift > 0.0 { "+" } else { "-" }, self.shift.abs())
        } else {
            body
        }
    }
}

/// Curvature measure dd^c W as a positive measure of total mass growth_order.
///
/// Uses the analytic cell constructor when every term has one, otherwise the
/// flux stencil applied to the weight with its log poles subtracted, plus
/// explicit atoms. Constant shifts never reach the stencil, so
/// curvature(w + c) == curvature(w) exactly.
pub fn curvature(grid: &Grid, w: &Weight) -> Result<GridMeasure> {
    let mu = curvature_unchecked(grid, w);
    let scale = mu.total.abs().max(1.0);
    if mu.min_cell() < -crate::geometry::TOL_NEG * scale {
        let idx = mu
            .cell_masses
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (i, j) = (idx / grid.n_angular(), idx % grid.n_angular());
        return Err(Error::NotSubharmonic {
            r: grid.r[i],
            theta: grid.theta[j],
            mass: mu.min_cell(),
        });
    }
    Ok(mu)
}

/// Curvature without the positivity check (signed measures allowed); used for
/// schedule totals that are positive even though single factors are not.
pub fn curvature_unchecked(grid: &Grid, w: &Weight) -> GridMeasure {
    if let Some(mu) = w.analytic_curvature(grid) {
        return mu;
    }
    curvature_stencil(grid, w)
}

/// Pure stencil route: five-point flux dd^c of (W − Σ ν log|z−z₀|) plus exact
/// atoms for the poles. Available for every weight; cross-checked against the
/// analytic constructors in tests.
pub fn curvature_stencil(grid: &Grid, w: &Weight) -> GridMeasure {
    let poles = w.log_poles();
    let u = grid.sample_nodes(|z| {
        let mut v = w.eval_base(z);
        for (z0, nu) in &poles {
            v -= nu * (z - z0).norm().ln();
        }
        v
    });
    let smooth_total = w.growth_order() - poles.iter().map(|(_, nu)| nu).sum::<f64>();
    let mut mu = grid.ddc_from_potential(&u, smooth_total);
    for (z0, nu) in &poles {
        mu = mu.add(&grid.atom(*z0, *nu));
    }
    mu
}

/// Measured grid minimum of curvature-density / ω_FS-density for the total
/// weight; the "empirical a_p" fallback when no certified bound exists.
pub fn measured_eps(grid: &Grid, w: &Weight) -> f64 {
    let mu = curvature_unchecked(grid, w);
    let omega = grid.fs_measure(1.0);
    let mut min_ratio = f64::INFINITY;
    for (m, o) in mu.cell_masses.iter().zip(&omega.cell_masses) {
        if *o > 0.0 {
            min_ratio = min_ratio.min(m / o);
        }
    }
    min_ratio
}

/// Rule for an integer multiplicity sequence p ↦ m(p).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeqRule {
    /// m(p) = p.
    Full,
    /// m(p) = ⌈√p⌉ (→ ∞, o(p)).
    CeilSqrt,
    /// m(p) = ⌈p·num/den⌉.
    CeilFrac { num: u32, den: u32 },
    /// m(p) = p − (sum of the other factors); only valid as a last tensor rule.
    Remainder,
}

impl SeqRule {
    pub fn apply(&self, p: usize) -> usize {
        match self {
            SeqRule::Full => p,
            SeqRule::CeilSqrt => (p as f64).sqrt().ceil() as usize,
            SeqRule::CeilFrac { num, den } => (p * *num as usize).div_ceil(*den as usize),
            SeqRule::Remainder => unreachable!("Remainder is resolved by the schedule"),
        }
    }

    /// lim m(p)/p.
    pub fn ray(&self) -> f64 {
        match self {
            SeqRule::Full => 1.0,
            SeqRule::CeilSqrt => 0.0,
            SeqRule::CeilFrac { num, den } => *num as f64 / *den as f64,
            SeqRule::Remainder => unreachable!(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SeqRule::Full => "p".into(),
            SeqRule::CeilSqrt => "ceil(sqrt(p))".into(),
            SeqRule::CeilFrac { num, den } => format!("ceil({num}p/{den})"),
            SeqRule::Remainder => "remainder".into(),
        }
    }
}

/// The three schedule shapes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum ScheduleKind {
    /// (L, h)^p: W_p = p·base.
    Power { base: Weight },
    /// h_p = h^{p−n_p} ⊗ h₀^{n_p} with n_p → ∞, n_p/p → 0.
    Mixed { h: Weight, h0: Weight, n_rule: SeqRule },
    /// L_p = F₁^{m₁,p} ⊗ … ⊗ F_k^{m_k,p} with m₁ → ∞ and m_j/p convergent.
    Tensor { factors: Vec<(Weight, SeqRule)> },
}

/// The map p ↦ (W_p, a_p, A_p) for a sequence of Hermitian metrics.
#[derive(Clone, Debug)]
pub struct MetricSchedule {
    pub kind: ScheduleKind,
    /// Strict-positivity constant entering a_p.
    eps: f64,
    /// True when eps was measured from the grid rather than certified.
    eps_empirical: bool,
}

/// Build and validate a schedule. Preconditions follow the corollaries the
/// shapes come from: the mixed h must have nonnegative curvature and h₀ a
/// strictly positive one; tensor multiplicity rays must converge with the
/// first factor strict; negative coefficients are rejected at the Weight
/// level. A power base without a certified positive bound (the equilibrium
/// weight) is accepted with the measured bound, which may be 0; ops that
/// require a_p > 0 reject such schedules themselves.
pub fn build_schedule(grid: &Grid, kind: ScheduleKind) -> Result<MetricSchedule> {
    let (eps, eps_empirical) = match &kind {
        ScheduleKind::Power { base } => match base.certified_eps() {
            Some(e) => (e, false),
            None => (measured_eps(grid, base).max(0.0), true),
        },
        ScheduleKind::Mixed { h, h0, n_rule } => {
            if !h.certified_nonneg() {
                return Err(Error::Schedule(format!(
                    "mixed schedule requires curvature(h) ≥ 0; {} is not certified nonnegative",
                    h.label()
                )));
            }
            match n_rule {
                SeqRule::CeilSqrt => {}
                SeqRule::CeilFrac { .. } | SeqRule::Full => {
                    return Err(Error::Schedule(
                        "mixed schedule requires n_p → ∞ with n_p/p → 0; a linear rule has n_p/p ↛ 0"
                            .into(),
                    ))
                }
                SeqRule::Remainder => {
                    return Err(Error::Schedule("remainder rule is tensor-only".into()))
                }
            }
            match h0.certified_eps() {
                Some(e) if e > 0.0 => (e, false),
                _ => {
                    let e = measured_eps(grid, h0);
                    if e <= 0.0 {
                        return Err(Error::Schedule(format!(
                            "mixed schedule requires c₁(h₀) ≥ εω with ε > 0; measured ε = {e:.3e}"
                        )));
                    }
                    (e, true)
                }
            }
        }
        ScheduleKind::Tensor { factors } => {
            if factors.is_empty() {
                return Err(Error::Schedule("tensor schedule needs factors".into()));
            }
            for (i, (_, rule)) in factors.iter().enumerate() {
                if matches!(rule, SeqRule::Remainder) && i + 1 != factors.len() {
                    return Err(Error::Schedule(
                        "remainder rule is only valid for the last tensor factor".into(),
                    ));
                }
            }
            let first = &factors[0].0;
            match first.certified_eps() {
                Some(e) if e > 0.0 => (e, false),
                _ => {
                    let e = measured_eps(grid, first);
                    if e <= 0.0 {
                        return Err(Error::Schedule(format!(
                            "tensor schedule requires a strictly positive first factor; measured ε = {e:.3e} for {}",
                            first.label()
                        )));
                    }
                    (e, true)
                }
            }
        }
    };
    let schedule = MetricSchedule { kind, eps, eps_empirical };
    // sanity: multiplicities must be representable at a nominal degree
    schedule.multiplicities(8)?;
    Ok(schedule)
}

impl MetricSchedule {
    /// Per-factor multiplicities at degree p (power/mixed expressed as
    /// two-term combinations).
    pub fn multiplicities(&self, p: usize) -> Result<Vec<(f64, Weight)>> {
        match &self.kind {
            ScheduleKind::Power { base } => Ok(vec![(p as f64, base.clone())]),
            ScheduleKind::Mixed { h, h0, n_rule } => {
                let n = n_rule.apply(p);
                if n > p {
                    return Err(Error::Schedule(format!(
                        "mixed schedule needs n_p ≤ p, got n_{p} = {n}"
                    )));
                }
                Ok(vec![((p - n) as f64, h.clone()), (n as f64, h0.clone())])
            }
            ScheduleKind::Tensor { factors } => {
                let mut out = Vec::new();
                let mut used = 0usize;
                for (w, rule) in factors.iter() {
                    let m = if matches!(rule, SeqRule::Remainder) {
                        if used > p {
                            return Err(Error::Schedule(format!(
                                "remainder multiplicity negative at p = {p}"
                            )));
                        }
                        p - used
                    } else {
                        let m = rule.apply(p);
                        used += m;
                        m
                    };
                    out.push((m as f64, w.clone()));
                }
                Ok(out)
            }
        }
    }

    /// Total weight W_p of h_p on O(degree_at(p)).
    pub fn weight_at(&self, p: usize) -> Result<Weight> {
        let parts = self.multiplicities(p)?;
        Weight::combine(&parts.iter().map(|(c, w)| (*c, w)).collect::<Vec<_>>())
    }

    /// Lower curvature bound a_p (pε / n_pε / m₁,p·ε).
    pub fn a_p(&self, p: usize) -> Result<f64> {
        Ok(match &self.kind {
            ScheduleKind::Power { .. } => p as f64 * self.eps,
            ScheduleKind::Mixed { n_rule, .. } => n_rule.apply(p) as f64 * self.eps,
            ScheduleKind::Tensor { .. } => self.multiplicities(p)?[0].0 * self.eps,
        })
    }

    /// Total curvature mass A_p = ∫ c₁(L_p,h_p) (∧ω⁰ on ℙ¹).
    pub fn big_a(&self, p: usize) -> Result<f64> {
        Ok(self
            .multiplicities(p)?
            .iter()
            .map(|(c, w)| c * w.growth_order())
            .sum())
    }

    /// Bundle degree of L_p (monomial candidates run over 0..=degree).
    pub fn degree_at(&self, p: usize) -> Result<usize> {
        Ok(self
            .multiplicities(p)?
            .iter()
            .map(|(c, w)| (*c as usize) * w.degree())
            .sum())
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn eps_empirical(&self) -> bool {
        self.eps_empirical
    }

    pub fn is_radial(&self) -> bool {
        self.factors().iter().all(|w| w.is_radial())
    }

    pub fn is_smooth(&self) -> bool {
        self.factors().iter().all(|w| w.is_smooth())
    }

    fn factors(&self) -> Vec<&Weight> {
        match &self.kind {
            ScheduleKind::Power { base } => vec![base],
            ScheduleKind::Mixed { h, h0, .. } => vec![h, h0],
            ScheduleKind::Tensor { factors } => factors.iter().map(|(w, _)| w).collect(),
        }
    }

    /// The limit current T of (1/A_p)·c₁(L_p,h_p), discretized and normalized
    /// to total mass 1.
    pub fn target_measure(&self, grid: &Grid) -> Result<GridMeasure> {
        let (weights, rays): (Vec<&Weight>, Vec<f64>) = match &self.kind {
            ScheduleKind::Power { base } => (vec![base], vec![1.0]),
            ScheduleKind::Mixed { h, .. } => (vec![h], vec![1.0]),
            ScheduleKind::Tensor { factors } => {
                let mut ws = Vec::new();
                let mut rs = Vec::new();
                let mut used = 0.0f64;
                for (i, (w, rule)) in factors.iter().enumerate() {
                    let r = if matches!(rule, SeqRule::Remainder) {
                        debug_assert_eq!(i + 1, factors.len());
                        (1.0 - used).max(0.0)
                    } else {
                        let r = rule.ray();
                        used += r;
                        r
                    };
                    ws.push(w);
                    rs.push(r);
                }
                (ws, rs)
            }
        };
        let mut acc = GridMeasure::new(vec![0.0; grid.n_cells()], 0.0);
        for (w, r) in weights.iter().zip(&rays) {
            if *r > 0.0 {
                acc = acc.axpy(*r, &curvature(grid, w)?);
            }
        }
        if acc.total <= 0.0 {
            return Err(Error::Schedule("target measure has no mass".into()));
        }
        Ok(acc.scaled(1.0 / acc.total))
    }

    pub fn label(&self) -> String {
        match &self.kind {
            ScheduleKind::Power { base } => format!("power({})", base.label()),
            ScheduleKind::Mixed { h, h0, n_rule } => format!(
                "mixed(h={}, h0={}, n_p={})",
                h.label(),
                h0.label(),
                n_rule.label()
            ),
            ScheduleKind::Tensor { factors } => format!(
                "tensor({})",
                factors
                    .iter()
                    .map(|(w, r)| format!("{}^{}", w.label(), r.label()))
                    .collect::<Vec<_>>()
                    .join(" (x) ")
            ),
        }
    }
}

/// C³ regularity data of h_p: ‖h_p‖₃, a_p and ε_p = ‖h_p‖₃^{1/3}·a_p^{−1/2}.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegularityReport {
    pub p: usize,
    /// max(1, sup over the probe disk of |D^α W_p| for |α| ≤ 3), measured in
    /// the fixed chart (overestimates the chart-optimized norm by a bounded
    /// factor; recorded in every bound report).
    pub h_norm_3: f64,
    pub a_p: f64,
    pub a_p_empirical: bool,
    pub epsilon_p: f64,
}

/// Probe-disk radius for the finite-difference sup.
const PROBE_RADIUS: f64 = 1.0;

/// All mixed derivatives up to order 3 at one point from a 5×5 stencil.
fn fd_derivatives(w: &Weight, x: f64, y: f64, h: f64) -> [f64; 10] {
    let mut f = [[0.0f64; 5]; 5];
    for (a, fa) in f.iter_mut().enumerate() {
        for (b, v) in fa.iter_mut().enumerate() {
            *v = w.eval_base(Complex64::new(
                x + (a as f64 - 2.0) * h,
                y + (b as f64 - 2.0) * h,
            ));
        }
    }
    let c = f[2][2];
    let fx = (f[3][2] - f[1][2]) / (2.0 * h);
    let fy = (f[2][3] - f[2][1]) / (2.0 * h);
    let fxx = (f[3][2] - 2.0 * c + f[1][2]) / (h * h);
    let fyy = (f[2][3] - 2.0 * c + f[2][1]) / (h * h);
    let fxy = (f[3][3] - f[3][1] - f[1][3] + f[1][1]) / (4.0 * h * h);
    let fxxx = (f[4][2] - 2.0 * f[3][2] + 2.0 * f[1][2] - f[0][2]) / (2.0 * h * h * h);
    let fyyy = (f[2][4] - 2.0 * f[2][3] + 2.0 * f[2][1] - f[2][0]) / (2.0 * h * h * h);
    let fxxy = ((f[3][3] - 2.0 * f[2][3] + f[1][3]) - (f[3][1] - 2.0 * f[2][1] + f[1][1]))
        / (2.0 * h * h * h);
    let fxyy = ((f[3][3] - 2.0 * f[3][2] + f[3][1]) - (f[1][3] - 2.0 * f[1][2] + f[1][1]))
        / (2.0 * h * h * h);
    [c, fx, fy, fxx, fxy, fyy, fxxx, fxxy, fxyy, fyyy]
}

fn fd_sup(w: &Weight, h: f64) -> f64 {
    let mut sup: f64 = 0.0;
    let n_r = 12;
    let n_a = 24;
    for ir in 0..=n_r {
        let rho = PROBE_RADIUS * ir as f64 / n_r as f64;
        let n_here = if ir == 0 { 1 } else { n_a };
        for ia in 0..n_here {
            let phi = 2.0 * std::f64::consts::PI * ia as f64 / n_here as f64;
            let d = fd_derivatives(w, rho * phi.cos(), rho * phi.sin(), h);
            for v in d {
                sup = sup.max(v.abs());
            }
        }
    }
    sup
}

/// The C³-norm estimator: finite-difference sup of the degree-p total weight
/// over the probe disk, Richardson-checked, floored at 1.
pub fn c3_norm(grid: &Grid, schedule: &MetricSchedule, p: usize) -> Result<RegularityReport> {
    let w = schedule.weight_at(p)?;
    if !w.is_smooth() {
        return Err(Error::NonSmoothWeight {
            smoothness: w.smoothness().to_string(),
        });
    }
    let h = 1e-2;
    let coarse = fd_sup(&w, h);
    let fine = fd_sup(&w, h / 2.0);
    let disagreement = 100.0 * (coarse - fine).abs() / fine.max(1.0);
    if disagreement > 5.0 {
        return Err(Error::FdInstability { disagreement, order: 3 });
    }
    let h_norm_3 = fine.max(1.0);
    let (a_p, a_p_empirical) = schedule_a_p_effective(grid, schedule, p)?;
    if a_p <= 0.0 {
        return Err(Error::Schedule(format!(
            "ε_p undefined: a_{p} = {a_p} is not positive for {}",
            schedule.label()
        )));
    }
    Ok(RegularityReport {
        p,
        h_norm_3,
        a_p,
        a_p_empirical,
        epsilon_p: h_norm_3.powf(1.0 / 3.0) / a_p.sqrt(),
    })
}

/// a_p actually used by the bound chain: the schedule formula when every
/// factor is certified nonnegative, otherwise the measured grid minimum of
/// curvature/ω_FS for the total weight (flagged empirical).
pub fn schedule_a_p_effective(
    grid: &Grid,
    schedule: &MetricSchedule,
    p: usize,
) -> Result<(f64, bool)> {
    let all_nonneg = schedule.factors().iter().all(|w| w.certified_nonneg());
    if all_nonneg && !schedule.eps_empirical() {
        Ok((schedule.a_p(p)?, false))
    } else {
        let w = schedule.weight_at(p)?;
        Ok((measured_eps(grid, &w), true))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{default_family, Chart};
    use approx::assert_relative_eq;

    fn grid() -> Grid {
        Grid::new(Chart {
            truncation_radius: 20.0,
            grid_radial: 128,
            grid_angular: 64,
        })
        .unwrap()
    }

    #[test]
    fn curvature_of_fs_is_fs_measure() {
        let g = grid();
        let mu = curvature(&g, &Weight::fs()).unwrap();
        mu.check().unwrap();
        assert_relative_eq!(mu.total, 1.0, epsilon = 1e-12);
        // only the ω_FS tail beyond the chart sits at ∞
        assert!(mu.infinity_mass < 0.01, "infinity mass {}", mu.infinity_mass);
        // stencil route agrees with the analytic cells in pairing
        let st = curvature_stencil(&g, &Weight::fs());
        let d = g.pairing_gap(&mu, &st, &default_family());
        assert!(d < 5e-4, "analytic vs stencil gap {d}");
    }

    #[test]
    fn curvature_of_equilibrium_is_circle() {
        let g = grid();
        let mu = curvature(&g, &Weight::equilibrium()).unwrap();
        let n_theta = g.n_angular();
        let mut annulus = 0.0;
        for i in 0..g.n_chart {
            if g.r[i] >= 0.9 && g.r[i] <= 1.1 {
                for j in 0..n_theta {
                    annulus += mu.cell_masses[i * n_theta + j];
                }
            }
        }
        assert_relative_eq!(annulus, 1.0, epsilon = 1e-12);
        assert_relative_eq!(mu.total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn curvature_of_log_is_unit_atom() {
        let g = grid();
        let mu = curvature(&g, &Weight::log_at(Complex64::new(0.0, 0.0))).unwrap();
        assert_relative_eq!(mu.total, 1.0, epsilon = 1e-14);
        assert_eq!(mu.infinity_mass, 0.0);
        let inner: f64 = mu.cell_masses[..g.n_angular()].iter().sum();
        assert_relative_eq!(inner, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn constant_shift_leaves_curvature_unchanged_exactly() {
        let g = grid();
        let w = Weight::log_pole(0.3).unwrap();
        let a = curvature(&g, &w).unwrap();
        let b = curvature(&g, &w.shifted(17.25)).unwrap();
        assert_eq!(a.cell_masses, b.cell_masses);
        assert_eq!(a.infinity_mass, b.infinity_mass);
        // and on the stencil route
        let c = curvature_stencil(&g, &Weight::equilibrium());
        let d = curvature_stencil(&g, &Weight::equilibrium().shifted(-3.5));
        assert_eq!(c.cell_masses, d.cell_masses);
    }

    #[test]
    fn mass_conservation_for_all_builtins() {
        let g = grid();
        let weights = [
            Weight::fs(),
            Weight::equilibrium(),
            Weight::log_pole(0.5).unwrap(),
            Weight::cone(Complex64::new(0.0, 0.0), 0.5, 0.1, 1.0).unwrap(),
        ];
        for w in &weights {
            let mu = curvature_stencil(&g, w);
            let sum = mu.cell_masses.iter().sum::<f64>() + mu.infinity_mass;
            assert_relative_eq!(sum, w.growth_order(), epsilon = 1e-9);
            assert!(
                mu.min_cell() > -1e-9,
                "negative cell {} for {}",
                mu.min_cell(),
                w.label()
            );
        }
    }

    #[test]
    fn bump_alone_is_not_subharmonic() {
        let g = grid();
        let bump = Weight::bump(Complex64::new(0.0, 0.0), 0.1, 1.0).unwrap();
        assert!(matches!(
            curvature(&g, &bump),
            Err(Error::NotSubharmonic { .. })
        ));
    }

    #[test]
    fn schedule_linearity_cell_by_cell() {
        let g = grid();
        let sched = build_schedule(
            &g,
            ScheduleKind::Tensor {
                factors: vec![
                    (Weight::fs(), SeqRule::CeilFrac { num: 1, den: 2 }),
                    (Weight::equilibrium(), SeqRule::Remainder),
                ],
            },
        )
        .unwrap();
        let p = 16;
        let w = sched.weight_at(p).unwrap();
        let total = curvature_stencil(&g, &w);
        let m = sched.multiplicities(p).unwrap();
        let combo = curvature_stencil(&g, &m[0].1)
            .scaled(m[0].0)
            .add(&curvature_stencil(&g, &m[1].1).scaled(m[1].0));
        for (a, b) in total.cell_masses.iter().zip(&combo.cell_masses) {
            assert!((a - b).abs() < 1e-9 * total.total.max(1.0));
        }
    }

    #[test]
    fn power_schedule_populates_a_and_big_a() {
        let g = grid();
        let s = build_schedule(&g, ScheduleKind::Power { base: Weight::fs() }).unwrap();
        assert_eq!(s.a_p(25).unwrap(), 25.0);
        assert_eq!(s.big_a(25).unwrap(), 25.0);
        assert_eq!(s.degree_at(25).unwrap(), 25);
        // curvature-mass consistency: A_p equals the measure total
        let mu = curvature(&g, &s.weight_at(25).unwrap()).unwrap();
        assert_relative_eq!(mu.total, 25.0, epsilon = 1e-9);
    }

    #[test]
    fn mixed_schedule_example() {
        // weight_at(4) = (4−2)·max(log|z|,0) + 2·φ_FS with n_p = ⌈√p⌉
        let g = grid();
        let s = build_schedule(
            &g,
            ScheduleKind::Mixed {
                h: Weight::equilibrium(),
                h0: Weight::fs(),
                n_rule: SeqRule::CeilSqrt,
            },
        )
        .unwrap();
        let w4 = s.weight_at(4).unwrap();
        let z = Complex64::new(1.3, -0.4);
        let expect = 2.0 * Weight::equilibrium().eval(z) + 2.0 * Weight::fs().eval(z);
        assert_relative_eq!(w4.eval(z), expect, max_relative = 1e-15);
        assert_eq!(s.a_p(16).unwrap(), 4.0);
    }

    #[test]
    fn mixed_rejects_linear_n_rule() {
        let g = grid();
        let err = build_schedule(
            &g,
            ScheduleKind::Mixed {
                h: Weight::equilibrium(),
                h0: Weight::fs(),
                n_rule: SeqRule::CeilFrac { num: 1, den: 2 },
            },
        );
        assert!(matches!(err, Err(Error::Schedule(_))));
    }

    #[test]
    fn tensor_target_measure() {
        let g = grid();
        let s = build_schedule(
            &g,
            ScheduleKind::Tensor {
                factors: vec![
                    (Weight::fs(), SeqRule::CeilFrac { num: 1, den: 2 }),
                    (Weight::equilibrium(), SeqRule::Remainder),
                ],
            },
        )
        .unwrap();
        let t = s.target_measure(&g).unwrap();
        assert_relative_eq!(t.total, 1.0, epsilon = 1e-12);
        // T = ½ω_FS + ½·circle
        let expect = g.fs_measure(0.5).add(&g.circle_measure(1.0, 0.5));
        let d = g.measure_distance(&t, &expect, &default_family()).unwrap();
        assert!(d < 1e-12, "tensor target distance {d}");
    }

    #[test]
    fn negative_coefficients_rejected() {
        assert!(Weight::combine(&[(-1.0, &Weight::fs())]).is_err());
    }

    #[test]
    fn c3_norm_fs_power_scaling() {
        // ε_p ∝ p^{−1/6} for the Fubini–Study powers:
        // ε(100)/ε(25) = (1/4)^{1/6} ± 10%
        let g = grid();
        let s = build_schedule(&g, ScheduleKind::Power { base: Weight::fs() }).unwrap();
        let r25 = c3_norm(&g, &s, 25).unwrap();
        let r100 = c3_norm(&g, &s, 100).unwrap();
        let ratio = r100.epsilon_p / r25.epsilon_p;
        let expect = 0.25f64.powf(1.0 / 6.0);
        assert!(
            (ratio / expect - 1.0).abs() < 0.10,
            "epsilon ratio {ratio} vs {expect}"
        );
        assert!(r25.h_norm_3 >= 1.0);
        assert_relative_eq!(
            r25.epsilon_p,
            r25.h_norm_3.powf(1.0 / 3.0) / r25.a_p.sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn c3_norm_floors_at_one_for_small_quadratic() {
        // λ|z|² with λ = 1/4 near 0: third derivatives vanish and the lower
        // orders stay below 1 on the probe disk, so the floor applies.
        // A very wide bump is exactly λ·(1 − ρ²/w² + …) there.
        let quad = Weight::bump(Complex64::new(0.0, 0.0), 0.25, 1e6).unwrap();
        let sup = fd_sup(&quad, 1e-2);
        assert!(sup <= 1.0, "quadratic-probe sup {sup}");
    }

    #[test]
    fn c3_norm_rejects_non_smooth() {
        let g = grid();
        let s = build_schedule(&g, ScheduleKind::Power { base: Weight::equilibrium() }).unwrap();
        assert!(matches!(
            c3_norm(&g, &s, 8),
            Err(Error::NonSmoothWeight { .. })
        ));
    }

    #[test]
    fn perturbed_schedule_empirical_a_p() {
        // p·φ_FS + √p·bump: a_p measured ≥ 0.9·p·(min curvature ratio at p)
        let g = grid();
        let s = build_schedule(
            &g,
            ScheduleKind::Tensor {
                factors: vec![
                    (Weight::fs(), SeqRule::Full),
                    (Weight::bump(Complex64::new(0.0, 0.0), 0.1, 1.0).unwrap(), SeqRule::CeilSqrt),
                ],
            },
        )
        .unwrap();
        let p = 64;
        let rep = c3_norm(&g, &s, p).unwrap();
        assert!(rep.a_p_empirical);
        let w = s.weight_at(p).unwrap();
        let min_ratio = measured_eps(&g, &w);
        assert!(rep.a_p >= 0.9 * min_ratio, "a_p {} vs ratio {}", rep.a_p, min_ratio);
        assert!(rep.a_p > 0.9 * p as f64, "a_p {} should be near p = {p}", rep.a_p);
        assert_relative_eq!(
            rep.epsilon_p,
            rep.h_norm_3.powf(1.0 / 3.0) / rep.a_p.sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn growth_order_matches_measured_slope() {
        // numerical slope of W(r)/log r near the chart edge, within 2%
        let g = grid();
        for w in [
            Weight::fs(),
            Weight::equilibrium(),
            Weight::log_pole(0.4).unwrap(),
        ] {
            let r = g.chart.truncation_radius;
            let slope = (w.eval(Complex64::new(r, 0.0)) - w.eval(Complex64::new(r / 2.0, 0.0)))
                / (r.ln() - (r / 2.0).ln());
            assert!(
                (slope - w.growth_order()).abs() < 0.02 * w.growth_order().max(1.0),
                "slope {slope} vs growth {} for {}",
                w.growth_order(),
                w.label()
            );
        }
    }
}
