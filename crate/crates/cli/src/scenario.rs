//! Scenario execution: every requested route at every channel time, the
//! cross-checks between them and the files written for a run.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use qdiffusion::channel::{
    build_kraus_set, coherent_output, evolve_via_husimi_integral, evolve_via_p_integral, kraus_evolve, number_output,
    squeezed_output, ChannelTime, SignResolution,
};
use qdiffusion::fock::{
    density_from_vector, psd_tolerance_exact, psd_tolerance_quadrature, state_metrics, state_vector, thermal_state,
    trace_distance, DensityMatrix,
};
use qdiffusion::oracle::{integrate_master_equation, IntegratorConfig};
use qdiffusion::phase_space::{p_coherent_evolved, rho_from_p, PFunctionAnalytic, PFunctionKind, PInput, SampledP};
use qdiffusion::Complex64;
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigFile, InputSpec, OutputKind, Route, ScenarioConfig};
use crate::error::{exit, CliError};
use crate::format::{float, to_json};

/// Largest RK4 step in channel-time units.
pub const ODE_MAX_DT: f64 = 1e-3;

/// Trace, mean-photon and pairwise tolerances for routes without quadrature.
pub const EXACT_TOL: f64 = 1e-6;

/// The same tolerances for quadrature-based routes.
pub const QUADRATURE_TOL: f64 = 1e-5;

pub const HERMITICITY_TOL: f64 = 1e-12;

/// The truncated generator leaks anti-Hermitian terms through coherences
/// with the top level, so RK4 output is held to its own accuracy instead.
pub const ODE_HERMITICITY_TOL: f64 = 1e-9;

/// Population allowed in the top tenth of the retained levels.
pub const TRUNCATION_TOL: f64 = 1e-6;

pub const SEMIGROUP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckClass {
    Tolerance,
    Truncation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub class: CheckClass,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &'static str, class: CheckClass, value: f64, tolerance: f64) -> Self {
        Self {
            name,
            class,
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignReport {
    pub sign: f64,
    pub printed_sign: f64,
    pub agrees_with_printed: bool,
    pub trace_plus: f64,
    pub trace_minus: f64,
}

impl From<SignResolution> for SignReport {
    fn from(s: SignResolution) -> Self {
        Self {
            sign: s.sign,
            printed_sign: s.printed_sign,
            agrees_with_printed: s.agrees_with_printed(),
            trace_plus: s.trace_plus,
            trace_minus: s.trace_minus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub route: Route,
    pub tau: f64,
    pub trace: f64,
    pub mean_photon: f64,
    pub purity: f64,
    pub min_eigenvalue: f64,
    pub hermiticity_residual: f64,
    pub truncation_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kraus_max_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub completeness_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sign_resolution: Option<SignReport>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    pub tau: f64,
    pub routes: [Route; 2],
    pub trace_distance: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub property: &'static str,
    pub tau: f64,
    /// The channel is applied for `tau_first`, then for `tau − tau_first`.
    pub tau_first: f64,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    ToleranceFailure,
    TruncationFailure,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => exit::SUCCESS,
            Status::ToleranceFailure => exit::TOLERANCE,
            Status::TruncationFailure => exit::TRUNCATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Versions {
    pub qdiffusion_cli: &'static str,
    pub qdiffusion_core: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KrausOrder {
    pub tau: f64,
    pub max_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub cutoff_dim: usize,
    pub kraus_max_index: Vec<KrausOrder>,
    pub initial_mean_photon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellTiming {
    pub route: Route,
    pub tau: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timings {
    pub threads: usize,
    pub total_seconds: f64,
    pub cells: Vec<CellTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub versions: Versions,
    pub config: ConfigFile,
    pub resolved: Resolved,
    /// The only part of the report that varies between identical runs.
    pub timings: Timings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolutionReport {
    pub status: Status,
    pub input: String,
    pub cells: Vec<CellReport>,
    pub pairs: Vec<PairReport>,
    pub properties: Vec<PropertyReport>,
    pub failures: Vec<String>,
    pub files: Vec<String>,
    pub metadata: Metadata,
}

impl EvolutionReport {
    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }

    pub fn cell(&self, route: Route, tau: f64) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.route == route && c.tau == tau)
    }

    pub fn max_trace_distance(&self) -> f64 {
        self.pairs.iter().map(|p| p.trace_distance).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }
}

struct Context<'a> {
    cfg: &'a ScenarioConfig,
    rho0: DensityMatrix,
    p_input: Option<PInput>,
}

struct Evolved {
    rho: DensityMatrix,
    kraus_max_index: Option<usize>,
    completeness_residual: Option<f64>,
    sign: Option<SignResolution>,
}

impl Evolved {
    fn plain(rho: DensityMatrix) -> Self {
        Self {
            rho,
            kraus_max_index: None,
            completeness_residual: None,
            sign: None,
        }
    }
}

fn complex(v: [f64; 2]) -> Complex64 {
    Complex64::new(v[0], v[1])
}

fn p_input(input: &InputSpec, cfg: &ScenarioConfig) -> qdiffusion::Result<Option<PInput>> {
    Ok(match *input {
        InputSpec::Coherent { z } => Some(PInput::Analytic(PFunctionAnalytic::delta(complex(z)))),
        InputSpec::Thermal { mean_photon } if mean_photon == 0.0 => {
            Some(PInput::Analytic(PFunctionAnalytic::delta(Complex64::new(0.0, 0.0))))
        }
        InputSpec::Thermal { mean_photon } => Some(PInput::Analytic(PFunctionAnalytic::gaussian(
            Complex64::new(0.0, 0.0),
            mean_photon,
        )?)),
        InputSpec::GridSampled { center, variance } => {
            let p = PFunctionAnalytic::gaussian(complex(center), variance)?;
            Some(PInput::Sampled(SampledP::from_fn(cfg.grid, |a| {
                p.value(a).expect("gaussian")
            })))
        }
        InputSpec::Number { .. } | InputSpec::SqueezedVacuum { .. } => None,
    })
}

fn initial_state(cfg: &ScenarioConfig, p: Option<&PInput>) -> qdiffusion::Result<DensityMatrix> {
    let input = cfg.input();
    match *input {
        InputSpec::Thermal { mean_photon } => thermal_state(mean_photon, cfg.cutoff),
        InputSpec::GridSampled { .. } => rho_from_p(p.expect("sampled input"), cfg.cutoff, &cfg.grid),
        _ => {
            let spec = input.pure_state().expect("pure input");
            density_from_vector(&state_vector(&spec, cfg.cutoff)?, spec.label())
        }
    }
}

fn is_quadrature(route: Route, p: Option<&PInput>) -> bool {
    match route {
        Route::HusimiIntegral => true,
        Route::PIntegral => !matches!(
            p,
            Some(PInput::Analytic(PFunctionAnalytic {
                kind: PFunctionKind::Delta { .. },
                ..
            }))
        ),
        _ => false,
    }
}

fn kraus_step(ctx: &Context, rho: &DensityMatrix, t: ChannelTime) -> qdiffusion::Result<(DensityMatrix, usize, f64)> {
    let m = ctx.cfg.kraus_order(t);
    let ks = build_kraus_set(t, m, ctx.cfg.cutoff)?;
    Ok((kraus_evolve(rho, &ks)?, m, ks.completeness_residual))
}

fn evolve(ctx: &Context, route: Route, t: ChannelTime) -> qdiffusion::Result<Evolved> {
    let cut = ctx.cfg.cutoff;
    let input = ctx.cfg.input();
    match route {
        Route::Kraus => {
            let (rho, m, residual) = kraus_step(ctx, &ctx.rho0, t)?;
            Ok(Evolved {
                rho,
                kraus_max_index: Some(m),
                completeness_residual: Some(residual),
                sign: None,
            })
        }
        Route::ClosedForm => match *input {
            InputSpec::Coherent { z } => coherent_output(complex(z), t, cut).map(Evolved::plain),
            InputSpec::Number { l } => number_output(l, t, cut).map(Evolved::plain),
            InputSpec::SqueezedVacuum { lambda } => {
                let (rho, sign) = squeezed_output(lambda, t, cut)?;
                Ok(Evolved {
                    sign: Some(sign),
                    ..Evolved::plain(rho)
                })
            }
            // A chaotic input stays chaotic and gains τ photons.
            InputSpec::Thermal { mean_photon } => thermal_state(mean_photon + t.tau(), cut).map(Evolved::plain),
            InputSpec::GridSampled { .. } => unreachable!("rejected during validation"),
        },
        Route::PIntegral => {
            let p = ctx.p_input.as_ref().expect("validated");
            evolve_via_p_integral(p, t, &ctx.cfg.grid, cut).map(Evolved::plain)
        }
        Route::HusimiIntegral => {
            let spec = input.pure_state().expect("validated");
            evolve_via_husimi_integral(&ctx.rho0, &spec, t, cut).map(Evolved::plain)
        }
        Route::OdeOracle => {
            let ode = IntegratorConfig::for_channel_time(t.tau(), ODE_MAX_DT)?;
            integrate_master_equation(&ctx.rho0, &ode).map(Evolved::plain)
        }
    }
}

struct CellOutcome {
    report: CellReport,
    rho: DensityMatrix,
    seconds: f64,
}

fn run_cell(ctx: &Context, route: Route, t: ChannelTime, initial_mean: f64) -> Result<CellOutcome, CliError> {
    let start = Instant::now();
    let ev = evolve(ctx, route, t)?;
    let seconds = start.elapsed().as_secs_f64();
    let m = state_metrics(&ev.rho);
    let dim = ev.rho.dim();
    let band = (dim / 10).max(1);
    let entries = ev.rho.entries();
    let truncation_loss: f64 = (dim - band..dim).map(|n| entries[(n, n)].re).sum();
    let quad = is_quadrature(route, ctx.p_input.as_ref());
    let tol = if quad { QUADRATURE_TOL } else { EXACT_TOL };
    let psd = if quad {
        psd_tolerance_quadrature(dim)
    } else {
        psd_tolerance_exact(dim)
    };
    let hermiticity_tol = if route == Route::OdeOracle {
        ODE_HERMITICITY_TOL
    } else {
        HERMITICITY_TOL
    };
    let checks = vec![
        Check::at_most("trace", CheckClass::Tolerance, (m.trace - 1.0).abs(), tol),
        Check::at_most(
            "mean_photon_gain",
            CheckClass::Tolerance,
            (m.mean_photon - initial_mean - t.tau()).abs(),
            tol,
        ),
        Check::at_most("psd_violation", CheckClass::Tolerance, (-m.min_eigenvalue).max(0.0), psd),
        Check::at_most("hermiticity", CheckClass::Tolerance, m.hermiticity_residual, hermiticity_tol),
        Check::at_most("truncation_loss", CheckClass::Truncation, truncation_loss.abs(), TRUNCATION_TOL),
    ];
    let report = CellReport {
        route,
        tau: t.tau(),
        trace: m.trace,
        mean_photon: m.mean_photon,
        purity: m.purity,
        min_eigenvalue: m.min_eigenvalue,
        hermiticity_residual: m.hermiticity_residual,
        truncation_loss,
        kraus_max_index: ev.kraus_max_index,
        completeness_residual: ev.completeness_residual,
        sign_resolution: ev.sign.map(SignReport::from),
        checks,
    };
    Ok(CellOutcome {
        report,
        rho: ev.rho,
        seconds,
    })
}

fn run_semigroup(ctx: &Context, t: ChannelTime, first: f64) -> Result<PropertyReport, CliError> {
    let t1 = ChannelTime::new(first)?;
    let t2 = ChannelTime::new(t.tau() - first)?;
    let (mid, _, _) = kraus_step(ctx, &ctx.rho0, t1)?;
    let (two_step, _, _) = kraus_step(ctx, &mid, t2)?;
    let (one_step, _, _) = kraus_step(ctx, &ctx.rho0, t)?;
    let d = trace_distance(&two_step, &one_step)?;
    Ok(PropertyReport {
        property: "semigroup",
        tau: t.tau(),
        tau_first: first,
        value: d,
        tolerance: SEMIGROUP_TOL,
        pass: d <= SEMIGROUP_TOL,
    })
}

enum Job {
    Cell(Route, ChannelTime),
    Semigroup(ChannelTime, f64),
}

enum JobOutput {
    Cell(CellOutcome),
    Semigroup(PropertyReport),
}

fn run_job(ctx: &Context, job: &Job, initial_mean: f64) -> Result<JobOutput, CliError> {
    match *job {
        Job::Cell(route, t) => run_cell(ctx, route, t, initial_mean).map(JobOutput::Cell),
        Job::Semigroup(t, first) => run_semigroup(ctx, t, first).map(JobOutput::Semigroup),
    }
}

fn finite(report: &EvolutionReport) -> Result<(), CliError> {
    let bad = |what: String| Err(CliError::NonFinite(what));
    for c in &report.cells {
        let values = [c.trace, c.mean_photon, c.purity, c.min_eigenvalue, c.hermiticity_residual, c.truncation_loss];
        if values.iter().chain(c.completeness_residual.iter()).any(|v| !v.is_finite()) {
            return bad(format!("{} at tau = {}", c.route, c.tau));
        }
    }
    for p in &report.pairs {
        if !p.trace_distance.is_finite() {
            return bad(format!("trace distance {} / {} at tau = {}", p.routes[0], p.routes[1], p.tau));
        }
    }
    for p in &report.properties {
        if !p.value.is_finite() {
            return bad(format!("{} at tau = {}", p.property, p.tau));
        }
    }
    Ok(())
}

/// Evaluates the scenario without touching the file system. `threads = 0`
/// runs serially; otherwise the (route, τ) cells run on a pool of that size
/// and are merged in canonical order, so the report does not depend on it.
pub fn evaluate(cfg: &ScenarioConfig, threads: usize) -> Result<EvolutionReport, CliError> {
    let start = Instant::now();
    let p = p_input(cfg.input(), cfg)?;
    let rho0 = initial_state(cfg, p.as_ref())?;
    let initial_mean = state_metrics(&rho0).mean_photon;
    let ctx = Context { cfg, rho0, p_input: p };

    let mut jobs: Vec<Job> = Vec::new();
    for &t in &cfg.taus {
        for &route in &cfg.routes {
            jobs.push(Job::Cell(route, t));
        }
    }
    if cfg.has_route(Route::Kraus) {
        let mut rng = StdRng::seed_from_u64(cfg.file.seed);
        for &t in cfg.taus.iter().filter(|t| !t.is_zero()) {
            let first = t.tau() * rng.random_range(0.2..0.8);
            jobs.push(Job::Semigroup(t, first));
        }
    }

    let outputs: Vec<Result<JobOutput, CliError>> = if threads == 0 {
        jobs.iter().map(|j| run_job(&ctx, j, initial_mean)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::ThreadPool(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(|j| run_job(&ctx, j, initial_mean)).collect())
    };

    let mut cells: Vec<CellOutcome> = Vec::new();
    let mut properties = Vec::new();
    for out in outputs {
        match out? {
            JobOutput::Cell(c) => cells.push(c),
            JobOutput::Semigroup(p) => properties.push(p),
        }
    }

    let mut pairs = Vec::new();
    let per_tau = cfg.routes.len();
    for group in cells.chunks(per_tau) {
        for i in 0..group.len() {
            for j in i + 1..group.len() {
                let (a, b) = (&group[i], &group[j]);
                let quad = is_quadrature(a.report.route, ctx.p_input.as_ref())
                    || is_quadrature(b.report.route, ctx.p_input.as_ref());
                let tolerance = if quad { QUADRATURE_TOL } else { EXACT_TOL };
                let d = trace_distance(&a.rho, &b.rho)?;
                pairs.push(PairReport {
                    tau: a.report.tau,
                    routes: [a.report.route, b.report.route],
                    trace_distance: d,
                    tolerance,
                    pass: d <= tolerance,
                });
            }
        }
    }

    let mut failures = Vec::new();
    let mut truncation = false;
    for c in &cells {
        for check in c.report.checks.iter().filter(|k| !k.pass) {
            truncation |= check.class == CheckClass::Truncation;
            failures.push(format!(
                "{} tau={}: {} = {:.3e} exceeds {:.1e}",
                c.report.route, c.report.tau, check.name, check.value, check.tolerance
            ));
        }
    }
    for p in pairs.iter().filter(|p| !p.pass) {
        failures.push(format!(
            "tau={}: trace distance {} vs {} = {:.3e} exceeds {:.1e}",
            p.tau, p.routes[0], p.routes[1], p.trace_distance, p.tolerance
        ));
    }
    for p in properties.iter().filter(|p| !p.pass) {
        failures.push(format!(
            "tau={}: {} residual {:.3e} exceeds {:.1e}",
            p.tau, p.property, p.value, p.tolerance
        ));
    }
    let status = if truncation {
        Status::TruncationFailure
    } else if failures.is_empty() {
        Status::Ok
    } else {
        Status::ToleranceFailure
    };

    let kraus_max_index = if cfg.has_route(Route::Kraus) {
        cfg.taus
            .iter()
            .map(|&t| KrausOrder {
                tau: t.tau(),
                max_index: cfg.kraus_order(t),
            })
            .collect()
    } else {
        Vec::new()
    };
    let timings = Timings {
        threads,
        total_seconds: start.elapsed().as_secs_f64(),
        cells: cells
            .iter()
            .map(|c| CellTiming {
                route: c.report.route,
                tau: c.report.tau,
                seconds: c.seconds,
            })
            .collect(),
    };
    let report = EvolutionReport {
        status,
        input: cfg.input().label(),
        cells: cells.into_iter().map(|c| c.report).collect(),
        pairs,
        properties,
        failures,
        files: planned_files(cfg),
        metadata: Metadata {
            versions: Versions {
                qdiffusion_cli: env!("CARGO_PKG_VERSION"),
                qdiffusion_core: qdiffusion::VERSION,
            },
            config: cfg.file.clone(),
            resolved: Resolved {
                cutoff_dim: cfg.cutoff.dim(),
                kraus_max_index,
                initial_mean_photon: initial_mean,
            },
            timings,
        },
    };
    finite(&report)?;
    Ok(report)
}

/// Diffused P-function of the input at channel time `tau`, or `None` where
/// it is a delta function.
fn p_evolved(input: &InputSpec, tau: f64, alpha: Complex64) -> qdiffusion::Result<Option<f64>> {
    let gaussian = |center: Complex64, variance: f64| {
        (variance > 0.0).then(|| (-(alpha - center).norm_sqr() / variance).exp() / variance)
    };
    Ok(match *input {
        InputSpec::Coherent { z } if tau > 0.0 => Some(p_coherent_evolved(alpha, complex(z), tau)?),
        InputSpec::Coherent { .. } => None,
        InputSpec::Thermal { mean_photon } => gaussian(Complex64::new(0.0, 0.0), mean_photon + tau),
        InputSpec::GridSampled { center, variance } => gaussian(complex(center), variance + tau),
        InputSpec::Number { .. } | InputSpec::SqueezedVacuum { .. } => None,
    })
}

fn pfun_taus(cfg: &ScenarioConfig) -> Vec<f64> {
    let probe = Complex64::new(0.0, 0.0);
    cfg.file
        .tau_values
        .iter()
        .copied()
        .filter(|&t| matches!(p_evolved(cfg.input(), t, probe), Ok(Some(_))))
        .collect()
}

fn pfun_name(tau: f64) -> String {
    format!("pfun_{tau}.csv")
}

fn planned_files(cfg: &ScenarioConfig) -> Vec<String> {
    let mut files = Vec::new();
    if cfg.wants(OutputKind::Report) {
        files.push("report.json".to_string());
    }
    if cfg.wants(OutputKind::PfunGrid) {
        files.extend(pfun_taus(cfg).into_iter().map(pfun_name));
    }
    if cfg.wants(OutputKind::PhotonTrajectory) {
        files.push("photon_trajectory.csv".to_string());
    }
    files
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the requested output files for an evaluated scenario and returns
/// their paths.
pub fn write_outputs(cfg: &ScenarioConfig, report: &EvolutionReport) -> Result<Vec<PathBuf>, CliError> {
    let dir = &cfg.file.output_dir;
    fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.clone(),
        source,
    })?;
    let mut written = Vec::new();
    if cfg.wants(OutputKind::Report) {
        let path = dir.join("report.json");
        write(&path, &report.to_json())?;
        written.push(path);
    }
    if cfg.wants(OutputKind::PfunGrid) {
        for tau in pfun_taus(cfg) {
            let mut text = String::from("re_alpha,im_alpha,p\n");
            for (alpha, _) in cfg.grid.nodes() {
                let p = p_evolved(cfg.input(), tau, alpha)?.expect("regular P-function");
                text.push_str(&format!("{},{},{}\n", float(alpha.re), float(alpha.im), float(p)));
            }
            let path = dir.join(pfun_name(tau));
            write(&path, &text)?;
            written.push(path);
        }
    }
    if cfg.wants(OutputKind::PhotonTrajectory) {
        let mut text = String::from("tau,route,mean_photon\n");
        for c in &report.cells {
            text.push_str(&format!("{},{},{}\n", float(c.tau), c.route, float(c.mean_photon)));
        }
        let path = dir.join("photon_trajectory.csv");
        write(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

/// Evaluates the scenario and writes its outputs.
pub fn run_scenario(cfg: &ScenarioConfig, threads: usize) -> Result<EvolutionReport, CliError> {
    let report = evaluate(cfg, threads)?;
    write_outputs(cfg, &report)?;
    Ok(report)
}
