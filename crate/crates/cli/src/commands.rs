use crate::config::ProblemConfig;
use crate::output::{write_json, write_with};
use crate::Common;
use num_complex::Complex64;
use serde::Serialize;
use std::path::PathBuf;
use transverse_core::asymptotics::{high_freq_sign, low_freq_coefficient, orientation_index, IndexConclusion};
use transverse_core::conserved::{sweep, write_sweep_csv, SweepRow};
use transverse_core::evans::evans_scan;
use transverse_core::{
    compute_invariants, gradients, integrate_profile, Error, GradientSet, HighFreqReport, InvariantSet, IndexVerdict,
    LowFreqReport, ScanReport, Tolerances, WaveParams, WaveProfile,
};

/// A command failure with its exit code: 2 for bad input, 3 for numerics.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "invalid input: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

pub fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidInput(_)
            | Error::UnsupportedOrder(_)
            | Error::AmbiguousWell { .. }
            | Error::ModulusOutOfRange(_)
            | Error::Precondition(_)
            | Error::NotKdV
            | Error::Json(_)
    )
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if is_input_error(&e) {
            Failure::Input(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_DEGENERATE: u8 = 4;
pub const EXIT_VERIFY_FAILED: u8 = 5;
pub const EXIT_UNSTABLE: u8 = 10;

/// Parsed configuration plus the effective tolerances and output directory.
pub struct Context {
    pub config: ProblemConfig,
    pub params: WaveParams,
    pub tol: Tolerances,
    pub tol_scale: f64,
    pub out: PathBuf,
}

impl Context {
    pub fn load(common: &Common) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(&common.config)
            .map_err(|e| Failure::Input(format!("{}: {e}", common.config.display())))?;
        let config = ProblemConfig::from_json(&text).map_err(|e| Failure::Input(format!("{}: {e}", common.config.display())))?;
        if !(common.tol_scale.is_finite() && common.tol_scale > 0.0) {
            return Err(Failure::Input(format!("--tol-scale must be positive, got {}", common.tol_scale)));
        }
        if config.samples < 8 {
            return Err(Failure::Input(format!("samples must be at least 8, got {}", config.samples)));
        }
        let params = config.wave_params()?;
        let tol = config.tolerances.scaled(common.tol_scale);
        std::fs::create_dir_all(&common.out).map_err(|e| Failure::Input(format!("{}: {e}", common.out.display())))?;
        Ok(Self {
            config,
            params,
            tol,
            tol_scale: common.tol_scale,
            out: common.out.clone(),
        })
    }

    pub fn profile(&self) -> Result<WaveProfile, Failure> {
        Ok(integrate_profile(&self.params, self.config.samples, &self.tol)?)
    }
}

#[derive(Serialize)]
struct ProfileSummary {
    params: WaveParams,
    u_minus: f64,
    u_plus: f64,
    period: f64,
    samples: usize,
    invariants: InvariantSet,
    energy_residual: f64,
    periodicity_mismatch: f64,
}

pub fn profile(ctx: &Context) -> Result<u8, Failure> {
    let p = ctx.profile()?;
    let invariants = compute_invariants(&ctx.params, &ctx.tol)?;
    write_with(ctx, "profile.csv", |w| p.write_csv(w))?;
    write_json(
        ctx,
        "profile.json",
        &ProfileSummary {
            params: ctx.params.clone(),
            u_minus: p.u_minus,
            u_plus: p.u_plus,
            period: p.period,
            samples: p.samples(),
            invariants,
            energy_residual: p.energy_residual(),
            periodicity_mismatch: p.periodicity_mismatch(),
        },
    )?;
    println!("T = {:.16e}, u- = {:.16e}, u+ = {:.16e}", p.period, p.u_minus, p.u_plus);
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct InvariantReport {
    params: WaveParams,
    invariants: InvariantSet,
    gradients: GradientSet,
    jacobian_tm: f64,
    jensen_gap: f64,
    gradient_identity_residual: f64,
    sweep: Vec<SweepRow>,
}

pub fn invariants(ctx: &Context) -> Result<u8, Failure> {
    let invariants = compute_invariants(&ctx.params, &ctx.tol)?;
    let g = gradients(&ctx.params, ctx.tol.fd_h_rel, &ctx.tol)?;
    let points: Vec<WaveParams> = ctx.config.sweep.iter().map(|&[a, e, c]| ctx.params.with_aec(a, e, c)).collect();
    for p in &points {
        p.validate()?;
    }
    let rows = sweep(&points, &ctx.tol).into_iter().collect::<transverse_core::Result<Vec<_>>>()?;
    if !rows.is_empty() {
        write_with(ctx, "sweep.csv", |w| write_sweep_csv(&rows, w))?;
    }
    let report = InvariantReport {
        params: ctx.params.clone(),
        invariants,
        gradients: g,
        jacobian_tm: g.jacobian_tm(),
        jensen_gap: invariants.jensen_gap(),
        gradient_identity_residual: g.identity_residual(&ctx.params),
        sweep: rows,
    };
    write_json(ctx, "invariants.json", &report)?;
    println!(
        "T = {:.16e}, M = {:.16e}, P = {:.16e}, H = {:.16e}, {{T,M}}_(a,E) = {:.16e}",
        invariants.t,
        invariants.m,
        invariants.p,
        invariants.h,
        report.jacobian_tm
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ScanOutput {
    params: WaveParams,
    tolerances: Tolerances,
    scans: Vec<ScanReport>,
    high_freq: Vec<HighFreqReport>,
    low_freq: Option<LowFreqReport>,
}

pub fn scan(ctx: &Context) -> Result<u8, Failure> {
    let cfg = ctx
        .config
        .scan
        .as_ref()
        .ok_or_else(|| Failure::Input("the scan command needs a \"scan\" block".into()))?;
    let grid = cfg.mu_grid.as_ref().map(|g| g.points()).unwrap_or_default();
    if !grid.is_empty() && cfg.k.is_empty() {
        return Err(Failure::Input("scan.mu_grid given without any scan.k".into()));
    }
    if !cfg.k.is_empty() && grid.is_empty() {
        return Err(Failure::Input("scan.k given without a scan.mu_grid".into()));
    }
    if grid.iter().any(|m| !m.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Failure::Input("scan.mu_grid must be finite and strictly increasing".into()));
    }
    if let Some(hf) = &cfg.high_freq {
        if let Some(k) = hf.k.iter().find(|k| **k == 0.0 || !k.is_finite()) {
            return Err(Failure::Input(format!("high-frequency probes need k != 0, got {k}")));
        }
    }
    let p = ctx.profile()?;
    let lambda = Complex64::new(cfg.lambda[0], cfg.lambda[1]);
    let mut scans = Vec::with_capacity(cfg.k.len());
    for (i, &k) in cfg.k.iter().enumerate() {
        let rep = evans_scan(&p, &grid, k, lambda, &ctx.tol)?;
        write_with(ctx, &format!("scan_k{i}.csv"), |w| rep.write_csv(w))?;
        for r in &rep.roots {
            println!("k = {k}: root mu* = {:.12e} (width {:.1e})", r.mu_star, r.width);
        }
        scans.push(rep);
    }
    let mut high_freq = Vec::new();
    if let Some(hf) = &cfg.high_freq {
        for (i, &k) in hf.k.iter().enumerate() {
            let rep = high_freq_sign(&p, k, &hf.mu, &ctx.tol)?;
            write_with(ctx, &format!("high_freq_k{i}.csv"), |w| rep.write_csv(w))?;
            println!("k = {k}: high-frequency sign {} from mu = {}", rep.verdict, rep.onset_mu);
            high_freq.push(rep);
        }
    }
    let low_freq = match &cfg.low_freq {
        Some(lf) => {
            let rep = low_freq_coefficient(&p, &lf.k, &ctx.tol)?;
            write_with(ctx, "low_freq.csv", |w| rep.write_csv(w))?;
            println!(
                "k^4 coefficient: fitted {:.6e}, predicted {:.6e} (rel {:.1e})",
                rep.fitted_c4, rep.predicted_c4, rep.relative_error
            );
            Some(rep)
        }
        None => None,
    };
    write_json(
        ctx,
        "scan.json",
        &ScanOutput {
            params: ctx.params.clone(),
            tolerances: ctx.tol,
            scans,
            high_freq,
            low_freq,
        },
    )?;
    Ok(EXIT_OK)
}

pub fn index_exit(v: &IndexVerdict) -> u8 {
    match v.conclusion {
        IndexConclusion::UnstableDetected => EXIT_UNSTABLE,
        IndexConclusion::IndexInconclusive => EXIT_OK,
        IndexConclusion::DegenerateJacobian => EXIT_DEGENERATE,
    }
}

#[derive(Serialize)]
struct IndexOutput {
    params: WaveParams,
    verdict: IndexVerdict,
    exit_code: u8,
}

pub fn index(ctx: &Context) -> Result<u8, Failure> {
    let p = ctx.profile()?;
    let verdict = orientation_index(&p, &ctx.tol)?;
    let exit_code = index_exit(&verdict);
    write_json(
        ctx,
        "index.json",
        &IndexOutput {
            params: ctx.params.clone(),
            verdict,
            exit_code,
        },
    )?;
    println!("{:?}: sigma {{T,M}}_(a,E) = {:.6e}", verdict.conclusion, verdict.sigma as f64 * verdict.jacobian);
    Ok(exit_code)
}
