//! Experiment orchestration: run one subcommand against a config, write the
//! CSV/JSON artifacts, and record a manifest with checksums.
//!
//! Exit-code contract (mapped by the binary): 0 success, 2 verdict failure
//! (a convergence/bound assertion did not hold), 1 operational error. CSV
//! bodies are byte-stable for a fixed (config, thread count); wall times and
//! timestamps live only in the manifest.

use crate::asymptotics::{
    convergence_suite, kernel_ratio_certificate, BoundReport, ConvergenceTable,
};
use crate::bergman::{bergman_kernel, fubini_study_current, gram_matrix};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::{default_family, Grid, GridMeasure};
use crate::zeros::{empirical_measure, ensemble_zeros, expected_log_sphere};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// The available pipelines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Gram,
    Kernel,
    FsCurrent,
    Zeros,
    Ik,
    Converge,
    Certify,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Gram => "gram",
            Subcommand::Kernel => "kernel",
            Subcommand::FsCurrent => "fscurrent",
            Subcommand::Zeros => "zeros",
            Subcommand::Ik => "ik",
            Subcommand::Converge => "converge",
            Subcommand::Certify => "certify",
        }
    }
}

/// Result of a run: artifacts written, plus whether a verdict failed.
#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub verdict_failed: Option<String>,
    /// Human-readable lines already printed to stdout.
    pub summary: String,
}

#[derive(Serialize)]
struct ManifestFile {
    name: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    config_hash: String,
    artifact_version: &'static str,
    subcommand: &'static str,
    wall_times_s: Vec<(String, f64)>,
    files: Vec<ManifestFile>,
    config_text: String,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

struct Artifacts {
    out_dir: PathBuf,
    files: Vec<PathBuf>,
    times: Vec<(String, f64)>,
}

impl Artifacts {
    fn new(out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        Ok(Artifacts { out_dir: out_dir.to_path_buf(), files: Vec::new(), times: Vec::new() })
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, body)?;
        self.files.push(path);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut body = serde_json::to_string_pretty(value)?;
        body.push('\n');
        self.write(name, &body)
    }

    fn finish(mut self, cfg: &RunConfig, sub: Subcommand) -> Result<(PathBuf, Vec<PathBuf>)> {
        let manifest = Manifest {
            config_hash: cfg.hash(),
            artifact_version: crate::VERSION,
            subcommand: sub.name(),
            wall_times_s: self.times.clone(),
            files: self
                .files
                .iter()
                .map(|p| {
                    Ok(ManifestFile {
                        name: p.file_name().unwrap().to_string_lossy().into_owned(),
                        bytes: std::fs::metadata(p)?.len(),
                        sha256: sha256_file(p)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            config_text: cfg.to_text(),
        };
        let path = self.out_dir.join("manifest.json");
        let mut body = serde_json::to_string_pretty(&manifest)?;
        body.push('\n');
        std::fs::write(&path, body)?;
        self.files.push(path);
        Ok((self.out_dir, self.files))
    }
}

/// CSV body for a grid measure: one row per nonzero cell (r, theta, mass).
fn measure_csv(grid: &Grid, mu: &GridMeasure) -> String {
    let mut out = String::from("r,theta,mass\n");
    let n_theta = grid.n_angular();
    for i in 0..grid.n_chart {
        for j in 0..n_theta {
            let m = mu.cell_masses[i * n_theta + j];
            if m != 0.0 {
                let _ = writeln!(out, "{},{},{}", grid.r[i], grid.theta[j], m);
            }
        }
    }
    out
}

#[derive(Serialize)]
struct MeasureHeader {
    config_hash: String,
    omega_mass: f64,
    infinity_mass: f64,
    total: f64,
    truncation_radius: f64,
}

fn measure_header(cfg: &RunConfig, mu: &GridMeasure) -> MeasureHeader {
    MeasureHeader {
        config_hash: cfg.hash(),
        omega_mass: 1.0,
        infinity_mass: mu.infinity_mass,
        total: mu.total,
        truncation_radius: cfg.chart.truncation_radius,
    }
}

/// Execute one subcommand. Verdict failures are reported in the outcome, not
/// as errors, so the caller can map them to exit code 2.
pub fn run(sub: Subcommand, cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    let mut art = Artifacts::new(out_dir)?;
    let mut summary = String::new();
    let mut verdict_failed: Option<String> = None;
    let grid = Grid::new(cfg.chart)?;
    let hash = cfg.hash();

    match sub {
        Subcommand::Gram => {
            let schedule = cfg.schedule.build(&grid)?;
            for &p in &cfg.p_list {
                let t0 = Instant::now();
                let basis = gram_matrix(&grid, &schedule, p)?;
                let mut csv = String::from("k,norm\n");
                for (c, n) in basis.norms().iter().enumerate() {
                    let _ = writeln!(csv, "{},{}", basis.exponent(c), n);
                }
                art.write(&format!("gram_p{p}.csv"), &csv)?;
                #[derive(Serialize)]
                struct GramSummary {
                    config_hash: String,
                    p: usize,
                    degree: usize,
                    d_p: usize,
                    k_min: usize,
                    condition_estimate: f64,
                    radial_path: bool,
                }
                art.write_json(
                    &format!("gram_p{p}.json"),
                    &GramSummary {
                        config_hash: hash.clone(),
                        p,
                        degree: basis.degree,
                        d_p: basis.dim,
                        k_min: basis.k_min,
                        condition_estimate: basis.condition_estimate,
                        radial_path: basis.radial_path,
                    },
                )?;
                art.times.push((format!("gram p={p}"), t0.elapsed().as_secs_f64()));
                let _ = writeln!(
                    summary,
                    "gram p={p}: d_p={} k_min={} cond={:.3e}",
                    basis.dim, basis.k_min, basis.condition_estimate
                );
            }
        }
        Subcommand::Kernel => {
            let schedule = cfg.schedule.build(&grid)?;
            for &p in &cfg.p_list {
                let t0 = Instant::now();
                let basis = gram_matrix(&grid, &schedule, p)?;
                let kernel = bergman_kernel(&grid, &basis)?;
                let mut csv = String::from("r,theta,P\n");
                let n_theta = grid.n_angular();
                for i in 0..grid.n_chart {
                    for j in 0..n_theta {
                        let _ = writeln!(
                            csv,
                            "{},{},{}",
                            grid.r[i],
                            grid.theta[j],
                            kernel.values[i * n_theta + j]
                        );
                    }
                }
                art.write(&format!("kernel_p{p}.csv"), &csv)?;
                #[derive(Serialize)]
                struct KernelSummary {
                    config_hash: String,
                    p: usize,
                    d_p: usize,
                    big_a: f64,
                    condition_estimate: f64,
                    trace: f64,
                    trace_check: bool,
                    infinity: f64,
                    pole_nodes: usize,
                }
                let trace_ok = kernel.trace_gap() < 1e-6;
                art.write_json(
                    &format!("kernel_p{p}.json"),
                    &KernelSummary {
                        config_hash: hash.clone(),
                        p,
                        d_p: kernel.d_p,
                        big_a: kernel.big_a,
                        condition_estimate: basis.condition_estimate,
                        trace: kernel.trace,
                        trace_check: trace_ok,
                        infinity: kernel.infinity,
                        pole_nodes: kernel.pole_nodes,
                    },
                )?;
                if !trace_ok {
                    verdict_failed =
                        Some(format!("trace identity failed at p={p}: gap {}", kernel.trace_gap()));
                }
                art.times.push((format!("kernel p={p}"), t0.elapsed().as_secs_f64()));
                let _ = writeln!(
                    summary,
                    "kernel p={p}: d_p={} trace={:.9} infinity={:.6}",
                    kernel.d_p, kernel.trace, kernel.infinity
                );
            }
        }
        Subcommand::FsCurrent => {
            let schedule = cfg.schedule.build(&grid)?;
            for &p in &cfg.p_list {
                let t0 = Instant::now();
                let basis = gram_matrix(&grid, &schedule, p)?;
                let cur = fubini_study_current(&grid, &basis)?;
                art.write(&format!("fscurrent_p{p}.csv"), &measure_csv(&grid, &cur.measure))?;
                // the curvature measure c₁(L_p,h_p) in the same format
                let c1 = crate::weights::curvature_unchecked(&grid, &schedule.weight_at(p)?);
                art.write(&format!("curvature_p{p}.csv"), &measure_csv(&grid, &c1))?;
                art.write_json(&format!("curvature_p{p}.json"), &measure_header(cfg, &c1))?;
                #[derive(Serialize)]
                struct FsHeader {
                    #[serde(flatten)]
                    measure: MeasureHeader,
                    p: usize,
                    base_locus_nodes: usize,
                }
                art.write_json(
                    &format!("fscurrent_p{p}.json"),
                    &FsHeader {
                        measure: measure_header(cfg, &cur.measure),
                        p,
                        base_locus_nodes: cur.base_locus_nodes,
                    },
                )?;
                art.times.push((format!("fscurrent p={p}"), t0.elapsed().as_secs_f64()));
                let _ = writeln!(
                    summary,
                    "fscurrent p={p}: total={:.6} infinity={:.6}",
                    cur.measure.total, cur.measure.infinity_mass
                );
            }
        }
        Subcommand::Zeros => {
            let schedule = cfg.schedule.build(&grid)?;
            let family = default_family();
            let target = schedule.target_measure(&grid)?;
            for &p in &cfg.p_list {
                let t0 = Instant::now();
                let basis = gram_matrix(&grid, &schedule, p)?;
                let samples = ensemble_zeros(&basis, &cfg.ensemble)?;
                let mut csv = String::from("sample_id,re,im,multiplicity\n");
                for (sid, zs) in samples.iter().enumerate() {
                    for ((re, im), m) in &zs.zeros {
                        let _ = writeln!(csv, "{sid},{re},{im},{m}");
                    }
                }
                art.write(&format!("zeros_p{p}.csv"), &csv)?;
                let emp = empirical_measure(&grid, &samples, basis.degree);
                let discrepancy: Vec<(String, f64)> = family
                    .iter()
                    .map(|f| {
                        (f.label(), (grid.integrate(f, &emp) - grid.integrate(f, &target)).abs())
                    })
                    .collect();
                let inf_fraction = samples
                    .iter()
                    .map(|s| s.infinity_multiplicity as f64)
                    .sum::<f64>()
                    / (basis.degree as f64 * samples.len() as f64);
                #[derive(Serialize)]
                struct ZeroSummary {
                    config_hash: String,
                    p: usize,
                    samples: usize,
                    seed: u64,
                    ensemble: &'static str,
                    infinity_mass_fraction: f64,
                    max_residual: f64,
                    discrepancy: Vec<(String, f64)>,
                }
                art.write_json(
                    &format!("zeros_p{p}.json"),
                    &ZeroSummary {
                        config_hash: hash.clone(),
                        p,
                        samples: samples.len(),
                        seed: cfg.ensemble.seed,
                        ensemble: cfg.ensemble.kind.label(),
                        infinity_mass_fraction: inf_fraction,
                        max_residual: samples.iter().map(|s| s.residual).fold(0.0, f64::max),
                        discrepancy,
                    },
                )?;
                art.times.push((format!("zeros p={p}"), t0.elapsed().as_secs_f64()));
                let gap = grid.measure_distance(&emp, &target, &family)?;
                let _ = writeln!(summary, "zeros p={p}: M={} gap={gap:.4}", samples.len());
            }
        }
        Subcommand::Ik => {
            let t0 = Instant::now();
            let est = expected_log_sphere(cfg.ik_k, cfg.ik_mc, cfg.ensemble.seed)?;
            art.write_json("ik.json", &est)?;
            art.times.push(("ik".into(), t0.elapsed().as_secs_f64()));
            let _ = writeln!(
                summary,
                "I({}) = {:.6} ± {:.6} (exact {:.6}, M = {})",
                est.k, est.estimate, est.std_error, est.exact, est.samples
            );
            if (est.estimate - est.exact).abs() > 3.0 * est.std_error {
                verdict_failed = Some(format!(
                    "I(k) Monte Carlo off by more than 3 standard errors: {} vs {}",
                    est.estimate, est.exact
                ));
            }
        }
        Subcommand::Converge => {
            let schedule = cfg.schedule.build(&grid)?;
            let t0 = Instant::now();
            let table = convergence_suite(
                &grid,
                &schedule,
                &cfg.p_list,
                Some(&cfg.ensemble),
                cfg.thresholds,
            )?;
            art.write("converge.csv", &convergence_csv(&table))?;
            art.write_json("converge.json", &table)?;
            art.times.push(("converge".into(), t0.elapsed().as_secs_f64()));
            summary.push_str(&convergence_text(&table));
            if !table.verdict() {
                verdict_failed = Some(format!(
                    "convergence verdict failed (trend_ok={}, absolute_ok={}); last row: {:?}",
                    table.trend_ok,
                    table.absolute_ok,
                    table.rows.last()
                ));
            }
        }
        Subcommand::Certify => {
            let schedule = cfg.schedule.build(&grid)?;
            let t0 = Instant::now();
            let report = kernel_ratio_certificate(
                &grid,
                &schedule,
                &cfg.p_list,
                cfg.certificate_mode,
                cfg.c_ref,
            )?;
            art.write("certify.csv", &certificate_csv(&report))?;
            art.write_json("certify.json", &report)?;
            art.times.push(("certify".into(), t0.elapsed().as_secs_f64()));
            summary.push_str(&certificate_text(&report));
            if !(report.deviation_decreasing
                && report.envelope_ok
                && report.sandwich_all
                && !report.under_resolved)
            {
                verdict_failed = Some(format!(
                    "certificate verdict failed (decreasing={}, envelope_ok={}, sandwich={}, under_resolved={})",
                    report.deviation_decreasing,
                    report.envelope_ok,
                    report.sandwich_all,
                    report.under_resolved
                ));
            }
        }
    }

    let (out_dir, files) = art.finish(cfg, sub)?;
    Ok(RunOutcome { out_dir, files, verdict_failed, summary })
}

/// Plot-ready certificate columns.
pub fn certificate_csv(report: &BoundReport) -> String {
    let mut out = String::from("p,epsilon_p,deviation,envelope,k1,k2,k3,a_p,h_norm_3,r_p\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.p,
            r.epsilon_p,
            r.sup_ratio_deviation,
            r.envelope,
            r.k1,
            r.k2,
            r.k3,
            r.a_p,
            r.h_norm_3,
            r.r_p
        );
    }
    out
}

/// Aligned-column human-readable certificate report.
pub fn certificate_text(report: &BoundReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "kernel-ratio certificate: {}", report.schedule);
    let _ = writeln!(
        out,
        "mode={:?} c_ref={} c_envelope={:.4} dbar_chi={:.6}",
        report.mode, report.c_ref, report.c_envelope, report.dbar_chi
    );
    let _ = writeln!(
        out,
        "{:>4} {:>10} {:>12} {:>12} {:>10} {:>10} {:>10} {:>9} {:>7}",
        "p", "eps_p", "deviation", "envelope", "K1", "K2", "K3", "sandwich", "active"
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:>4} {:>10.5} {:>12.6} {:>12.6} {:>10.5} {:>10.5} {:>10.5} {:>9} {:>7}",
            r.p,
            r.epsilon_p,
            r.sup_ratio_deviation,
            r.envelope,
            r.k1,
            r.k2,
            r.k3,
            if r.sandwich_ok { "ok" } else { "FAIL" },
            if r.k1_active { "yes" } else { "pre" }
        );
    }
    let _ = writeln!(
        out,
        "deviation decreasing: {}; ratio bounded: {}; sandwich: {}; activation p: {:?}",
        report.deviation_decreasing, report.ratio_bounded, report.sandwich_all, report.activation_p
    );
    out
}

/// Plot-ready convergence columns.
pub fn convergence_csv(table: &ConvergenceTable) -> String {
    let mut out = String::from("p,d_p,A_p,l1_log_kernel,fs_gap,zero_gap,log_dim_ratio,trace_gap\n");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.p,
            r.d_p,
            r.big_a,
            r.l1_log_kernel,
            r.fs_gap,
            r.zero_gap.map(|z| z.to_string()).unwrap_or_default(),
            r.log_dim_ratio,
            r.trace_gap
        );
    }
    out
}

/// Aligned-column human-readable convergence table.
pub fn convergence_text(table: &ConvergenceTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "convergence table: {}", table.schedule);
    let _ = writeln!(
        out,
        "{:>4} {:>5} {:>8} {:>14} {:>12} {:>10} {:>14}",
        "p", "d_p", "A_p", "l1_log_kernel", "fs_gap", "zero_gap", "log_dim_ratio"
    );
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{:>4} {:>5} {:>8.2} {:>14.6} {:>12.3e} {:>10} {:>14.6}",
            r.p,
            r.d_p,
            r.big_a,
            r.l1_log_kernel,
            r.fs_gap,
            r.zero_gap.map(|z| format!("{z:.4}")).unwrap_or_else(|| "-".into()),
            r.log_dim_ratio
        );
    }
    let _ = writeln!(
        out,
        "Σ 1/A_p² = {:.6}; trend {}, absolute {}",
        table.sum_inv_a2,
        if table.trend_ok { "ok" } else { "FAIL" },
        if table.absolute_ok { "ok" } else { "FAIL" }
    );
    out
}

/// Resolve the output directory: the explicit flag, else
/// `$PROJLINE_OUT/<subcommand>-<config hash>`, else `./runs/…`.
pub fn resolve_out_dir(flag: Option<&Path>, sub: Subcommand, cfg: &RunConfig) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    let root = std::env::var_os("PROJLINE_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    root.join(format!("{}-{}", sub.name(), cfg.hash()))
}

/// Map an error to the process exit code (verdict failures are handled by the
/// caller from RunOutcome and never pass through here).
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Verdict(_) => 2,
        _ => 1,
    }
}
