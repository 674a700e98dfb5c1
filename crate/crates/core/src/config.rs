//! Run configuration: a flat, diff-able sectioned key = value text format,
//! canonical serialization and hashing.
//!
//! ```text
//! [schedule]
//! kind = power                 # power | mixed | tensor
//! base = fs                    # weight grammar, see below
//!
//! [degrees]
//! p_list = 8, 16, 32
//!
//! [ensemble]
//! kind = sphere                # sphere | gaussian
//! seed = 7
//! samples = 200
//! ```
//!
//! Weight grammar: `fs`, `eq`, `log@(re,im)`, `logpole:nu=0.25`,
//! `bump:amp=0.1,width=1[,at=(re,im)]`,
//! `cone:beta=0.5,amp=0.1,width=1[,at=(re,im)]`, combined with `+` and
//! optional `c*` coefficients. Multiplicity rules: `p`, `ceil_sqrt`,
//! `ceil_frac:NUM/DEN`, `remainder` (tensor `factorN = weight * rule`).
//!
//! Every run's config hash (sha256 of the canonical text) is embedded in all
//! outputs.

use crate::asymptotics::{CertificateMode, ConvergenceThresholds};
use crate::error::{Error, Result};
use crate::geometry::Chart;
use crate::weights::{build_schedule, MetricSchedule, ScheduleKind, SeqRule, Weight, WeightKind};
use crate::zeros::{EnsembleKind, EnsembleSpec};
use crate::Grid;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Parsed, validated run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schedule: ScheduleSpec,
    pub p_list: Vec<usize>,
    pub ensemble: EnsembleSpec,
    pub chart: Chart,
    pub certificate_mode: CertificateMode,
    pub c_ref: f64,
    pub thresholds: ConvergenceThresholds,
    pub ik_k: usize,
    pub ik_mc: usize,
    /// 0 = leave the worker pool at its default size.
    pub threads: usize,
}

/// Schedule description (weights kept as structured data; builds a
/// [`MetricSchedule`] against a grid).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScheduleSpec {
    Power { base: Weight },
    Mixed { h: Weight, h0: Weight, n_rule: SeqRule },
    Tensor { factors: Vec<(Weight, SeqRule)> },
}

impl ScheduleSpec {
    pub fn build(&self, grid: &Grid) -> Result<MetricSchedule> {
        let kind = match self {
            ScheduleSpec::Power { base } => ScheduleKind::Power { base: base.clone() },
            ScheduleSpec::Mixed { h, h0, n_rule } => ScheduleKind::Mixed {
                h: h.clone(),
                h0: h0.clone(),
                n_rule: n_rule.clone(),
            },
            ScheduleSpec::Tensor { factors } => ScheduleKind::Tensor { factors: factors.clone() },
        };
        build_schedule(grid, kind)
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schedule: ScheduleSpec::Power { base: Weight::fs() },
            p_list: vec![8, 16, 32],
            ensemble: EnsembleSpec { kind: EnsembleKind::Sphere, seed: 7, samples: 200 },
            chart: Chart::default(),
            certificate_mode: CertificateMode::Trend,
            c_ref: 1.0,
            thresholds: ConvergenceThresholds::default(),
            ik_k: 2,
            ik_mc: 100_000,
            threads: 0,
        }
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_weight(w: &Weight) -> String {
    let term = |c: f64, k: &WeightKind| -> String {
        let body = match k {
            WeightKind::FubiniStudy => "fs".to_string(),
            WeightKind::Equilibrium => "eq".to_string(),
            WeightKind::Log { location } => {
                format!("log@({},{})", fmt_f64(location.0), fmt_f64(location.1))
            }
            WeightKind::LogPole { nu } => format!("logpole:nu={}", fmt_f64(*nu)),
            WeightKind::Cone { location, beta, amplitude, width } => format!(
                "cone:beta={},amp={},width={},at=({},{})",
                fmt_f64(*beta),
                fmt_f64(*amplitude),
                fmt_f64(*width),
                fmt_f64(location.0),
                fmt_f64(location.1)
            ),
            WeightKind::Bump { location, amplitude, width } => format!(
                "bump:amp={},width={},at=({},{})",
                fmt_f64(*amplitude),
                fmt_f64(*width),
                fmt_f64(location.0),
                fmt_f64(location.1)
            ),
        };
        if (c - 1.0).abs() < 1e-15 {
            body
        } else {
            format!("{}*{}", fmt_f64(c), body)
        }
    };
    w.kinds()
        .iter()
        .map(|(c, k)| term(*c, k))
        .collect::<Vec<_>>()
        .join(" + ")
}

fn fmt_rule(r: &SeqRule) -> String {
    match r {
        SeqRule::Full => "p".into(),
        SeqRule::CeilSqrt => "ceil_sqrt".into(),
        SeqRule::CeilFrac { num, den } => format!("ceil_frac:{num}/{den}"),
        SeqRule::Remainder => "remainder".into(),
    }
}

fn parse_complex_pair(s: &str) -> Result<(f64, f64)> {
    let inner = s
        .trim()
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| Error::Config(format!("expected (re,im), got `{s}`")))?;
    let mut it = inner.split(',');
    let re = it
        .next()
        .ok_or_else(|| Error::Config(format!("expected (re,im), got `{s}`")))?
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::Config(format!("bad real part in `{s}`: {e}")))?;
    let im = it
        .next()
        .ok_or_else(|| Error::Config(format!("expected (re,im), got `{s}`")))?
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::Config(format!("bad imaginary part in `{s}`: {e}")))?;
    Ok((re, im))
}

fn parse_params(spec: &str) -> Result<Vec<(String, String)>> {
    // key=value pairs separated by commas, but (a,b) tuples hold together
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for ch in spec.chars() {
        match ch {
            '(' => {
                depth += 1;
                cur.push(ch);
            }
            ')' => {
                depth = depth.saturating_sub(1);
                cur.push(ch);
            }
            ',' if depth == 0 => {
                if !cur.trim().is_empty() {
                    out.push(cur.trim().to_string());
                }
                cur.clear();
            }
            _ => cur.push(ch),
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out.into_iter()
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{kv}`")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

/// Parse one weight term (no `+`).
fn parse_weight_term(s: &str) -> Result<(f64, Weight)> {
    let s = s.trim();
    let (coeff, body) = match s.split_once('*') {
        Some((c, rest)) if c.trim().parse::<f64>().is_ok() => {
            (c.trim().parse::<f64>().unwrap(), rest.trim())
        }
        _ => (1.0, s),
    };
    if coeff < 0.0 {
        return Err(Error::Config(format!(
            "negative weight coefficient in `{s}`: combination coefficients must be ≥ 0"
        )));
    }
    let (name, params) = match body.split_once(':') {
        Some((n, p)) => (n.trim(), Some(p)),
        None => (body, None),
    };
    let get = |params: &Option<&str>, key: &str, default: Option<f64>| -> Result<f64> {
        if let Some(p) = params {
            for (k, v) in parse_params(p)? {
                if k == key {
                    return v
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad value for {key}: {e}")));
                }
            }
        }
        default.ok_or_else(|| Error::Config(format!("weight `{body}` needs parameter {key}")))
    };
    let get_at = |params: &Option<&str>| -> Result<Complex64> {
        if let Some(p) = params {
            for (k, v) in parse_params(p)? {
                if k == "at" {
                    let (re, im) = parse_complex_pair(&v)?;
                    return Ok(Complex64::new(re, im));
                }
            }
        }
        Ok(Complex64::new(0.0, 0.0))
    };
    let w = match name {
        "fs" => Weight::fs(),
        "eq" => Weight::equilibrium(),
        _ if name.starts_with("log@") => {
            let rest = name.strip_prefix("log@").unwrap();
            let (re, im) = parse_complex_pair(rest)?;
            Weight::log_at(Complex64::new(re, im))
        }
        "log" => Weight::log_at(Complex64::new(0.0, 0.0)),
        "logpole" => Weight::log_pole(get(&params, "nu", None)?)?,
        "cone" => Weight::cone(
            get_at(&params)?,
            get(&params, "beta", None)?,
            get(&params, "amp", Some(0.1))?,
            get(&params, "width", Some(1.0))?,
        )?,
        "bump" => Weight::bump(
            get_at(&params)?,
            get(&params, "amp", Some(0.1))?,
            get(&params, "width", Some(1.0))?,
        )?,
        other => {
            return Err(Error::Config(format!(
                "unknown weight family `{other}`; valid: fs, eq, log, logpole, cone, bump"
            )))
        }
    };
    Ok((coeff, w))
}

/// Parse the full weight grammar (terms joined with `+`).
pub fn parse_weight(s: &str) -> Result<Weight> {
    let mut parts = Vec::new();
    for term in s.split('+') {
        parts.push(parse_weight_term(term)?);
    }
    let refs: Vec<(f64, &Weight)> = parts.iter().map(|(c, w)| (*c, w)).collect();
    Weight::combine(&refs)
}

pub fn parse_rule(s: &str) -> Result<SeqRule> {
    let s = s.trim();
    match s {
        "p" | "full" => Ok(SeqRule::Full),
        "ceil_sqrt" => Ok(SeqRule::CeilSqrt),
        "remainder" => Ok(SeqRule::Remainder),
        _ => {
            if let Some(frac) = s.strip_prefix("ceil_frac:") {
                let (num, den) = frac
                    .split_once('/')
                    .ok_or_else(|| Error::Config(format!("ceil_frac needs NUM/DEN, got `{s}`")))?;
                let num: u32 = num.trim().parse().map_err(|_| {
                    Error::Config(format!(
                        "bad multiplicity fraction `{s}`: numerator must be a nonnegative integer"
                    ))
                })?;
                let den: u32 = den.trim().parse().map_err(|_| {
                    Error::Config(format!(
                        "bad multiplicity fraction `{s}`: denominator must be a positive integer"
                    ))
                })?;
                if den == 0 {
                    return Err(Error::Config("ceil_frac denominator must be > 0".into()));
                }
                Ok(SeqRule::CeilFrac { num, den })
            } else {
                Err(Error::Config(format!(
                    "unknown rule `{s}`; valid: p, ceil_sqrt, ceil_frac:NUM/DEN, remainder"
                )))
            }
        }
    }
}

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, cb) in b.iter().enumerate() {
            let cost = if ca == cb { 0 } else { 1 };
            cur[j + 1] = (prev[j] + cost).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

fn nearest<'a>(key: &str, valid: &[&'a str]) -> &'a str {
    valid
        .iter()
        .min_by_key(|v| levenshtein(key, v))
        .copied()
        .unwrap_or("")
}

const SCHEDULE_KEYS: &[&str] = &["kind", "base", "h", "h0", "n_rule"];
const DEGREE_KEYS: &[&str] = &["p_list"];
const ENSEMBLE_KEYS: &[&str] = &["kind", "seed", "samples"];
const GRID_KEYS: &[&str] = &["radial_nodes", "angular_nodes", "truncation_radius"];
const CERT_KEYS: &[&str] = &["mode", "c_ref"];
const THRESH_KEYS: &[&str] = &["l1_log_kernel", "fs_gap", "zero_gap", "log_dim_ratio"];
const IK_KEYS: &[&str] = &["k", "mc_samples"];
const RUN_KEYS: &[&str] = &["threads"];

/// Parse the sectioned key = value text into a validated RunConfig.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut section = String::new();
    let mut schedule_kind: Option<String> = None;
    let mut base: Option<Weight> = None;
    let mut h: Option<Weight> = None;
    let mut h0: Option<Weight> = None;
    let mut n_rule: Option<SeqRule> = None;
    let mut factors: Vec<(usize, Weight, SeqRule)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            let known = ["schedule", "degrees", "ensemble", "grid", "certificate", "thresholds", "ik", "run"];
            if !known.contains(&section.as_str()) {
                return Err(Error::Config(format!(
                    "line {}: unknown section [{section}]; nearest valid: [{}]",
                    lineno + 1,
                    nearest(&section, &known)
                )));
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key = value, got `{line}`", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad_key = |valid: &[&str]| {
            Error::Config(format!(
                "line {}: unknown key `{key}` in [{section}]; nearest valid key: `{}`",
                lineno + 1,
                nearest(key, valid)
            ))
        };
        match section.as_str() {
            "schedule" => {
                if let Some(fnum) = key.strip_prefix("factor") {
                    let idx: usize = fnum.parse().map_err(|_| {
                        Error::Config(format!("bad tensor factor key `{key}` (use factor1, factor2, …)"))
                    })?;
                    let (wspec, rspec) = value.split_once('*').ok_or_else(|| {
                        Error::Config(format!(
                            "tensor factor must be `weight * rule`, got `{value}`"
                        ))
                    })?;
                    factors.push((idx, parse_weight(wspec)?, parse_rule(rspec)?));
                } else {
                    match key {
                        "kind" => schedule_kind = Some(value.to_string()),
                        "base" => base = Some(parse_weight(value)?),
                        "h" => h = Some(parse_weight(value)?),
                        "h0" => h0 = Some(parse_weight(value)?),
                        "n_rule" => n_rule = Some(parse_rule(value)?),
                        _ => return Err(bad_key(SCHEDULE_KEYS)),
                    }
                }
            }
            "degrees" => match key {
                "p_list" => {
                    let v = value.trim_start_matches('[').trim_end_matches(']');
                    cfg.p_list = v
                        .split(',')
                        .map(|x| {
                            x.trim().parse::<usize>().map_err(|e| {
                                Error::Config(format!("bad degree `{}`: {e}", x.trim()))
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                }
                _ => return Err(bad_key(DEGREE_KEYS)),
            },
            "ensemble" => match key {
                "kind" => {
                    cfg.ensemble.kind = match value {
                        "sphere" => EnsembleKind::Sphere,
                        "gaussian" => EnsembleKind::Gaussian,
                        other => {
                            return Err(Error::Config(format!(
                                "unknown ensemble `{other}`; valid: sphere, gaussian"
                            )))
                        }
                    }
                }
                "seed" => {
                    cfg.ensemble.seed = value
                        .parse()
                        .map_err(|e| Error::Config(format!("bad seed: {e}")))?
                }
                "samples" => {
                    cfg.ensemble.samples = value
                        .parse()
                        .map_err(|e| Error::Config(format!("bad sample count: {e}")))?
                }
                _ => return Err(bad_key(ENSEMBLE_KEYS)),
            },
            "grid" => match key {
                "radial_nodes" => {
                    cfg.chart.grid_radial =
                        value.parse().map_err(|e| Error::Config(format!("bad radial_nodes: {e}")))?
                }
                "angular_nodes" => {
                    cfg.chart.grid_angular = value
                        .parse()
                        .map_err(|e| Error::Config(format!("bad angular_nodes: {e}")))?
                }
                "truncation_radius" => {
                    cfg.chart.truncation_radius = value
                        .parse()
                        .map_err(|e| Error::Config(format!("bad truncation_radius: {e}")))?
                }
                _ => return Err(bad_key(GRID_KEYS)),
            },
            "certificate" => match key {
                "mode" => {
                    cfg.certificate_mode = match value {
                        "trend" => CertificateMode::Trend,
                        "fitted" => CertificateMode::Fitted,
                        other => {
                            return Err(Error::Config(format!(
                                "unknown certificate mode `{other}`; valid: trend, fitted"
                            )))
                        }
                    }
                }
                "c_ref" => {
                    cfg.c_ref = value
                        .parse()
                        .map_err(|e| Error::Config(format!("bad c_ref: {e}")))?
                }
                _ => return Err(bad_key(CERT_KEYS)),
            },
            "thresholds" => {
                let v: f64 = value
                    .parse()
                    .map_err(|e| Error::Config(format!("bad threshold: {e}")))?;
                match key {
                    "l1_log_kernel" => cfg.thresholds.l1_log_kernel = v,
                    "fs_gap" => cfg.thresholds.fs_gap = v,
                    "zero_gap" => cfg.thresholds.zero_gap = v,
                    "log_dim_ratio" => cfg.thresholds.log_dim_ratio = v,
                    _ => return Err(bad_key(THRESH_KEYS)),
                }
            }
            "ik" => match key {
                "k" => cfg.ik_k = value.parse().map_err(|e| Error::Config(format!("bad k: {e}")))?,
                "mc_samples" => {
                    cfg.ik_mc = value
                        .parse()
                        .map_err(|e| Error::Config(format!("bad mc_samples: {e}")))?
                }
                _ => return Err(bad_key(IK_KEYS)),
            },
            "run" => match key {
                "threads" => {
                    cfg.threads = value
                        .parse()
                        .map_err(|e| Error::Config(format!("bad threads: {e}")))?
                }
                _ => return Err(bad_key(RUN_KEYS)),
            },
            "" => {
                return Err(Error::Config(format!(
                    "line {}: key `{key}` appears before any [section]",
                    lineno + 1
                )))
            }
            _ => unreachable!("sections validated on entry"),
        }
    }

    // assemble the schedule
    let kind = schedule_kind.unwrap_or_else(|| "power".into());
    cfg.schedule = match kind.as_str() {
        "power" => ScheduleSpec::Power { base: base.unwrap_or_else(Weight::fs) },
        "mixed" => {
            let n_rule = n_rule.unwrap_or(SeqRule::CeilSqrt);
            if !matches!(n_rule, SeqRule::CeilSqrt) {
                return Err(Error::Config(
                    "mixed schedule rejected: n_p/p must tend to 0 (n_rule must be ceil_sqrt)"
                        .into(),
                ));
            }
            ScheduleSpec::Mixed {
                h: h.ok_or_else(|| Error::Config("mixed schedule needs h".into()))?,
                h0: h0.ok_or_else(|| Error::Config("mixed schedule needs h0".into()))?,
                n_rule,
            }
        }
        "tensor" => {
            if factors.is_empty() {
                return Err(Error::Config("tensor schedule needs factor1, factor2, …".into()));
            }
            factors.sort_by_key(|(i, _, _)| *i);
            ScheduleSpec::Tensor {
                factors: factors.into_iter().map(|(_, w, r)| (w, r)).collect(),
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown schedule kind `{other}`; valid: power, mixed, tensor"
            )))
        }
    };

    // global validation
    if cfg.p_list.is_empty() || cfg.p_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("p_list must be nonempty and strictly increasing".into()));
    }
    cfg.ensemble.validate()?;
    cfg.chart.validate()?;
    Ok(cfg)
}

impl RunConfig {
    /// Canonical text form (parse ∘ to_text is the identity on RunConfig).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("[schedule]\n");
        match &self.schedule {
            ScheduleSpec::Power { base } => {
                out.push_str("kind = power\n");
                out.push_str(&format!("base = {}\n", fmt_weight(base)));
            }
            ScheduleSpec::Mixed { h, h0, n_rule } => {
                out.push_str("kind = mixed\n");
                out.push_str(&format!("h = {}\n", fmt_weight(h)));
                out.push_str(&format!("h0 = {}\n", fmt_weight(h0)));
                out.push_str(&format!("n_rule = {}\n", fmt_rule(n_rule)));
            }
            ScheduleSpec::Tensor { factors } => {
                out.push_str("kind = tensor\n");
                for (i, (w, r)) in factors.iter().enumerate() {
                    out.push_str(&format!("factor{} = {} * {}\n", i + 1, fmt_weight(w), fmt_rule(r)));
                }
            }
        }
        out.push_str("\n[degrees]\n");
        out.push_str(&format!(
            "p_list = {}\n",
            self.p_list.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ")
        ));
        out.push_str("\n[ensemble]\n");
        out.push_str(&format!("kind = {}\n", self.ensemble.kind.label()));
        out.push_str(&format!("seed = {}\n", self.ensemble.seed));
        out.push_str(&format!("samples = {}\n", self.ensemble.samples));
        out.push_str("\n[grid]\n");
        out.push_str(&format!("radial_nodes = {}\n", self.chart.grid_radial));
        out.push_str(&format!("angular_nodes = {}\n", self.chart.grid_angular));
        out.push_str(&format!(
            "truncation_radius = {}\n",
            fmt_f64(self.chart.truncation_radius)
        ));
        out.push_str("\n[certificate]\n");
        out.push_str(&format!(
            "mode = {}\n",
            match self.certificate_mode {
                CertificateMode::Trend => "trend",
                CertificateMode::Fitted => "fitted",
            }
        ));
        out.push_str(&format!("c_ref = {}\n", fmt_f64(self.c_ref)));
        out.push_str("\n[thresholds]\n");
        out.push_str(&format!("l1_log_kernel = {}\n", fmt_f64(self.thresholds.l1_log_kernel)));
        out.push_str(&format!("fs_gap = {}\n", fmt_f64(self.thresholds.fs_gap)));
        out.push_str(&format!("zero_gap = {}\n", fmt_f64(self.thresholds.zero_gap)));
        out.push_str(&format!("log_dim_ratio = {}\n", fmt_f64(self.thresholds.log_dim_ratio)));
        out.push_str("\n[ik]\n");
        out.push_str(&format!("k = {}\n", self.ik_k));
        out.push_str(&format!("mc_samples = {}\n", self.ik_mc));
        out.push_str("\n[run]\n");
        out.push_str(&format!("threads = {}\n", self.threads));
        out
    }

    /// Hex-truncated sha256 of the canonical text.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_text().as_bytes());
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
