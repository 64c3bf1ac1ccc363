//! The diffusion channel: Kraus operator sum, the two integration-form
//! solutions, and closed forms for coherent, number and squeezed-vacuum
//! inputs.
//!
//! All routes depend on time only through `τ = κt`, and at `τ = 0` every
//! route returns its input unchanged.
//!
//! The β-integral behind [`evolve_via_husimi_integral`] has Gaussian
//! coefficient `ζ = (τ+1)/τ` with positive real part, so it does not converge
//! as written. It is evaluated only through the closed forms of
//! [`crate::special`] in [`IntegralMode::AnalyticContinuation`], never by
//! quadrature.

use std::f64::consts::PI;

use crate::fock::{
    coherent_coefficients, density_from_vector, ordered_gaussian_kernel, psd_tolerance_exact, state_metrics,
    state_vector, DensityMatrix, FockCutoff, OrderedKernelParams, StateSpec, MIN_RETAINED_MASS,
};
use crate::oracle::ComplexGrid;
use crate::phase_space::{integrate_against_p, rho_from_p, PFunctionAnalytic, PFunctionKind, PInput, P_QUADRATURE_TOL};
use crate::special::{
    gaussian_moment_integral, gaussian_quadratic_integral, laguerre_coefficients, GaussianMomentParams,
    GaussianQuadraticParams, IntegralMode,
};
use crate::{CMatrix, Complex64, Error, Result};

/// A sign is accepted when it puts the trace this close to one.
pub const SIGN_TRACE_TOL: f64 = 1e-3;

/// Largest squeezing parameter accepted by [`squeezed_output`].
pub const MAX_SQUEEZING: f64 = 2.0;

/// Dimensionless channel time `τ = κt ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ChannelTime(f64);

impl ChannelTime {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("channel time must be finite and >= 0, got {tau}")));
        }
        Ok(Self(tau))
    }

    pub fn tau(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// `M_{m,n} = Σ_k weights[k] |k+m⟩⟨k+n|`, the band form of a Kraus operator.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausOperator {
    pub raise: usize,
    pub lower: usize,
    pub weights: Vec<f64>,
}

impl KrausOperator {
    fn identity(dim: usize) -> Self {
        Self {
            raise: 0,
            lower: 0,
            weights: vec![1.0; dim],
        }
    }

    fn build(m: usize, n: usize, tau: f64, dim: usize, lnf: &[f64]) -> Self {
        let len = dim.saturating_sub(m.max(n));
        let ln_t = tau.ln();
        let ln_t1 = tau.ln_1p();
        let head = 0.5 * ((m + n) as f64 * ln_t - lnf[m] - lnf[n] - (m + n + 1) as f64 * ln_t1);
        let weights = (0..len)
            .map(|k| {
                let band = 0.5 * (lnf[k + m] - lnf[k] + lnf[k + n] - lnf[k]) - k as f64 * ln_t1;
                (head + band).exp()
            })
            .collect();
        Self {
            raise: m,
            lower: n,
            weights,
        }
    }

    pub fn to_matrix(&self, dim: usize) -> CMatrix {
        let mut out = CMatrix::zeros(dim, dim);
        for (k, &w) in self.weights.iter().enumerate() {
            out[(k + self.raise, k + self.lower)] = c(w);
        }
        out
    }
}

/// `M_{m,n} = √(τ^{m+n}/(m! n! (τ+1)^{m+n+1})) A†^m (1+τ)^{−N} A^n`.
pub fn kraus_operator(m: usize, n: usize, tau: ChannelTime, cutoff: FockCutoff) -> Result<CMatrix> {
    let dim = cutoff.dim();
    if tau.is_zero() {
        if (m, n) != (0, 0) {
            return Err(Error::ZeroTimeNontrivialIndex { m, n });
        }
        return Ok(CMatrix::identity(dim, dim));
    }
    let lnf = ln_factorials(dim + m.max(n));
    Ok(KrausOperator::build(m, n, tau.tau(), dim, &lnf).to_matrix(dim))
}

/// The family `M_{m,n}`, `0 ≤ m, n ≤ max_index`, on one cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    pub tau: ChannelTime,
    pub max_index: usize,
    pub cutoff: FockCutoff,
    /// Row-major in `(m, n)`; a single identity at `τ = 0`.
    pub operators: Vec<KrausOperator>,
    pub completeness_residual: f64,
}

impl KrausSet {
    pub fn get(&self, m: usize, n: usize) -> Option<&KrausOperator> {
        self.operators.iter().find(|op| op.raise == m && op.lower == n)
    }

    /// Diagonal of `Σ M†M`; the off-diagonal entries vanish identically.
    pub fn completeness_diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.cutoff.dim()];
        for op in &self.operators {
            for (k, &w) in op.weights.iter().enumerate() {
                diag[k + op.lower] += w * w;
            }
        }
        diag
    }
}

pub fn build_kraus_set(tau: ChannelTime, max_index: usize, cutoff: FockCutoff) -> Result<KrausSet> {
    let dim = cutoff.dim();
    if max_index < 1 {
        return Err(Error::InvalidParameter("Kraus max_index must be >= 1".into()));
    }
    if dim <= max_index {
        return Err(Error::CutoffTooSmall { dim, max_index });
    }
    let operators = if tau.is_zero() {
        vec![KrausOperator::identity(dim)]
    } else {
        let lnf = ln_factorials(dim + max_index);
        let mut ops = Vec::with_capacity((max_index + 1) * (max_index + 1));
        for m in 0..=max_index {
            for n in 0..=max_index {
                ops.push(KrausOperator::build(m, n, tau.tau(), dim, &lnf));
            }
        }
        ops
    };
    let mut ks = KrausSet {
        tau,
        max_index,
        cutoff,
        operators,
        completeness_residual: 0.0,
    };
    ks.completeness_residual = completeness_residual(&ks);
    Ok(ks)
}

/// `max |(Σ M†M − I)[j,j′]|` over `j, j′ < dim − max_index`.
pub fn completeness_residual(ks: &KrausSet) -> f64 {
    let interior = ks.cutoff.dim().saturating_sub(ks.max_index);
    ks.completeness_diagonal()
        .iter()
        .take(interior)
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max)
}

/// `Σ_{m,n} M_{m,n} ρ₀ M†_{m,n}`, summed in fixed `(m, n)` order.
pub fn kraus_evolve(rho0: &DensityMatrix, ks: &KrausSet) -> Result<DensityMatrix> {
    let dim = ks.cutoff.dim();
    if rho0.dim() != dim {
        return Err(Error::DimensionMismatch {
            left: rho0.dim(),
            right: dim,
        });
    }
    if ks.tau.is_zero() {
        return Ok(rho0.clone());
    }
    let rho = rho0.entries();
    let mut out = CMatrix::zeros(dim, dim);
    for op in &ks.operators {
        let (m, n) = (op.raise, op.lower);
        let w = &op.weights;
        for k2 in 0..w.len() {
            for k1 in 0..w.len() {
                out[(k1 + m, k2 + m)] += rho[(k1 + n, k2 + n)] * (w[k1] * w[k2]);
            }
        }
    }
    DensityMatrix::new(out, format!("kraus[{}](tau={})", rho0.label(), ks.tau.tau()))
}

/// `ceil(10·τ/(τ+1)·√dim) + 8`.
pub fn default_kraus_order(tau: ChannelTime, dim: usize) -> usize {
    let t = tau.tau();
    (10.0 * t / (t + 1.0) * (dim as f64).sqrt()).ceil() as usize + 8
}

fn pure_state(spec: &StateSpec, cutoff: FockCutoff) -> Result<DensityMatrix> {
    density_from_vector(&state_vector(spec, cutoff)?, spec.label())
}

fn require_trace(rho: &CMatrix, context: &str) -> Result<()> {
    let trace = rho.trace().re;
    if trace < MIN_RETAINED_MASS {
        return Err(Error::TruncationLoss {
            context: context.to_string(),
            retained: trace,
        });
    }
    Ok(())
}

/// `K(α) = :exp[−a†a/(τ+1) + α a†/(1+τ) + α* a/(1+τ)]:`.
fn diffusion_kernel(alpha: Complex64, tau: f64, cutoff: FockCutoff) -> CMatrix {
    let s = 1.0 / (1.0 + tau);
    let p = OrderedKernelParams::linear(c(-s), alpha * s, alpha.conj() * s);
    ordered_gaussian_kernel(&p, cutoff)
}

/// `(1/(τ+1)) e^{−|α|²/(τ+1)} K(α)`, the channel output of `|α⟩⟨α|`.
fn weighted_kernel(alpha: Complex64, tau: f64, cutoff: FockCutoff) -> CMatrix {
    let s = 1.0 / (1.0 + tau);
    diffusion_kernel(alpha, tau, cutoff) * c(s * (-alpha.norm_sqr() * s).exp())
}

/// Evolved coherent state
/// `(1/(τ+1)) e^{−|z|²/(τ+1)} e^{z a†/(1+τ)} (τ/(τ+1))^{a†a} e^{z* a/(1+τ)}`.
pub fn coherent_output(z: Complex64, tau: ChannelTime, cutoff: FockCutoff) -> Result<DensityMatrix> {
    let spec = StateSpec::Coherent { z };
    if tau.is_zero() {
        return pure_state(&spec, cutoff);
    }
    let m = weighted_kernel(z, tau.tau(), cutoff);
    require_trace(&m, &format!("coherent_output(z={z}, tau={})", tau.tau()))?;
    DensityMatrix::new(m, format!("coherent_output(z={z}, tau={})", tau.tau()))
}

/// Laguerre-weighted chaotic state
/// `(τ^l/(τ+1)^{l+1}) :L_l(−a†a/(τ(τ+1))) e^{−a†a/(τ+1)}:`, which is diagonal.
pub fn number_output(l: usize, tau: ChannelTime, cutoff: FockCutoff) -> Result<DensityMatrix> {
    let dim = cutoff.dim();
    if 2 * l >= dim {
        return Err(Error::NumberExceedsCutoff { l, dim });
    }
    let spec = StateSpec::Number { l };
    if tau.is_zero() {
        return pure_state(&spec, cutoff);
    }
    let t = tau.tau();
    let coefs = laguerre_coefficients(l)?;
    let lnf = ln_factorials(dim);
    let ln_pref = l as f64 * t.ln() - (l + 1) as f64 * t.ln_1p();
    let ln_ratio = t.ln() - t.ln_1p();
    let ln_x = -(t.ln() + t.ln_1p());
    let mut m = CMatrix::zeros(dim, dim);
    for n in 0..dim {
        let mut acc = 0.0;
        for (k, &a) in coefs.iter().enumerate().take(n.min(l) + 1) {
            // a_k (−x)^k with x = −1/(τ(τ+1)); every term is positive.
            let ln_term = ln_pref + k as f64 * ln_x + lnf[n] - lnf[n - k] + (n - k) as f64 * ln_ratio;
            acc += a.abs() * ln_term.exp();
        }
        m[(n, n)] = c(acc);
    }
    require_trace(&m, &format!("number_output(l={l}, tau={t})"))?;
    DensityMatrix::new(m, format!("number_output(l={l}, tau={t})"))
}

/// Which overall sign of the squeezed-output prefactor produced a unit
/// trace. The printed prefactor carries `printed_sign = −1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignResolution {
    pub sign: f64,
    pub printed_sign: f64,
    pub trace_plus: f64,
    pub trace_minus: f64,
}

impl SignResolution {
    pub fn agrees_with_printed(&self) -> bool {
        self.sign == self.printed_sign
    }
}

/// Picks the sign `s` for which `s·m` has trace within [`SIGN_TRACE_TOL`] of
/// one and is positive semidefinite.
fn resolve_sign(m: CMatrix, context: &str, label: String) -> Result<(DensityMatrix, SignResolution)> {
    let trace = m.trace().re;
    let (trace_plus, trace_minus) = (trace, -trace);
    if trace.abs() < MIN_RETAINED_MASS {
        return Err(Error::TruncationLoss {
            context: context.to_string(),
            retained: trace.abs(),
        });
    }
    let accept = |t: f64| (t - 1.0).abs() <= SIGN_TRACE_TOL;
    let sign = match (accept(trace_plus), accept(trace_minus)) {
        (true, false) => 1.0,
        (false, true) => -1.0,
        _ => {
            return Err(Error::SignResolutionFailed {
                plus: trace_plus,
                minus: trace_minus,
            })
        }
    };
    let rho = DensityMatrix::new(m * c(sign), label)?;
    let min_eig = state_metrics(&rho).min_eigenvalue;
    if min_eig < -psd_tolerance_exact(rho.dim()) {
        return Err(Error::SignResolutionFailed {
            plus: trace_plus,
            minus: trace_minus,
        });
    }
    Ok((
        rho,
        SignResolution {
            sign,
            printed_sign: -1.0,
            trace_plus,
            trace_minus,
        },
    ))
}

/// Squeezed thermal output of the squeezed vacuum,
/// `s·sech λ·G^{−1/2} e^{(tanh λ/2G) a†²} :exp[((τ+1)/(Gτ) − 1/τ) a†a]: e^{(tanh λ/2G) a²}`
/// with `G = (τ+1)² − τ² tanh²λ` and the overall sign `s` fixed by the trace.
pub fn squeezed_output(lambda: f64, tau: ChannelTime, cutoff: FockCutoff) -> Result<(DensityMatrix, SignResolution)> {
    if !(lambda.abs() <= MAX_SQUEEZING) {
        return Err(Error::InvalidParameter(format!(
            "squeezing |lambda| must be <= {MAX_SQUEEZING}, got {lambda}"
        )));
    }
    let spec = StateSpec::SqueezedVacuum { lambda };
    if tau.is_zero() {
        let rho = pure_state(&spec, cutoff)?;
        let trace = rho.trace().re;
        return Ok((
            rho,
            SignResolution {
                sign: 1.0,
                printed_sign: -1.0,
                trace_plus: trace,
                trace_minus: -trace,
            },
        ));
    }
    let t = tau.tau();
    let th = lambda.tanh();
    let g = (t + 1.0).powi(2) - t * t * th * th;
    let lam_k = (t + 1.0) / (g * t) - 1.0 / t;
    let q = c(th / (2.0 * g));
    let p = OrderedKernelParams::linear(c(lam_k), c(0.0), c(0.0)).with_quadratic(q, q);
    let m = ordered_gaussian_kernel(&p, cutoff) * c(1.0 / (lambda.cosh() * g.sqrt()));
    let context = format!("squeezed_output(lambda={lambda}, tau={t})");
    resolve_sign(m, &context, context.clone())
}

/// `(1/(τ+1)) ∫ d²α/π e^{−|α|²/(τ+1)} P(α) K(α)`; delta inputs are evaluated
/// at their support without quadrature.
pub fn evolve_via_p_integral(p: &PInput, tau: ChannelTime, grid: &ComplexGrid, cutoff: FockCutoff) -> Result<DensityMatrix> {
    if tau.is_zero() {
        return rho_from_p(p, cutoff, grid);
    }
    let t = tau.tau();
    if let PInput::Analytic(PFunctionAnalytic {
        kind: PFunctionKind::Delta { z },
        normalization,
    }) = p
    {
        let m = weighted_kernel(*z, t, cutoff) * c(*normalization);
        return DensityMatrix::new(m, format!("p_integral[delta z={z}](tau={t})"));
    }
    let q = integrate_against_p(p, grid, |alpha| weighted_kernel(alpha, t, cutoff))?;
    if q.refinement_estimate > P_QUADRATURE_TOL {
        return Err(Error::QuadratureNotConverged {
            estimate: q.refinement_estimate,
            tolerance: P_QUADRATURE_TOL,
        });
    }
    DensityMatrix::new(q.value, format!("p_integral[quadrature](tau={t})"))
}

/// Probe points for checking an input against its declared kernel.
const KERNEL_PROBES: [(f64, f64); 4] = [(0.3, 0.0), (0.0, -0.25), (-0.2, 0.15), (0.1, 0.35)];

/// Allowed mismatch between a supplied input and its declared kernel; covers
/// the renormalization of a truncated state vector.
const KERNEL_MATCH_TOL: f64 = 2e-3;

/// `⟨−β|ψ⟩⟨ψ|β⟩` of the untruncated pure state.
fn analytic_cross_element(spec: &StateSpec, beta: Complex64) -> Result<Complex64> {
    let b2 = beta.norm_sqr();
    Ok(match *spec {
        StateSpec::Coherent { z } => (-b2 - z.norm_sqr() + z.conj() * beta - z * beta.conj()).exp(),
        StateSpec::Number { l } => {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            let ln_lf: f64 = (1..=l).map(|k| (k as f64).ln()).sum();
            c(sign * (l as f64 * b2.ln() - ln_lf - b2).exp())
        }
        StateSpec::SqueezedVacuum { lambda } => {
            let th = 0.5 * lambda.tanh();
            (th * (beta * beta + beta.conj() * beta.conj()) - b2).exp() / lambda.cosh()
        }
    })
}

fn check_input_kernel(rho0: &DensityMatrix, spec: &StateSpec) -> Result<()> {
    let dim = rho0.dim();
    for (re, im) in KERNEL_PROBES {
        let beta = Complex64::new(re, im);
        let right = coherent_coefficients(beta, dim);
        let left = coherent_coefficients(-beta, dim).map(|x| x.conj());
        let got = (left.transpose() * rho0.entries() * right)[(0, 0)];
        let want = analytic_cross_element(spec, beta)?;
        if (got - want).norm() > KERNEL_MATCH_TOL * want.norm().max(1.0) {
            return Err(Error::UnsupportedInput(format!(
                "input state does not match {} (kernel {got} vs {want} at beta = {beta})",
                spec.label()
            )));
        }
    }
    Ok(())
}

/// Normally ordered Gaussian read off from its symbol `F(u, v)`, where `u`
/// stands for `a†` and `v` for `a`.
struct GaussianSymbol {
    scale: Complex64,
    params: OrderedKernelParams,
}

const SYMBOL_STEP: f64 = 0.125;
const SYMBOL_FIT_TOL: f64 = 1e-9;

fn fit_gaussian_symbol<F: Fn(Complex64, Complex64) -> Result<Complex64>>(f: F) -> Result<GaussianSymbol> {
    let h = SYMBOL_STEP;
    let zero = c(0.0);
    let scale = f(zero, zero)?;
    if scale == zero {
        return Err(Error::UnsupportedInput("symbol vanishes at the origin".into()));
    }
    let l = |u: f64, v: f64| -> Result<Complex64> { Ok((f(c(u), c(v))? / scale).ln()) };
    let (lu_p, lu_m, lv_p, lv_m, luv) = (l(h, 0.0)?, l(-h, 0.0)?, l(0.0, h)?, l(0.0, -h)?, l(h, h)?);
    let params = OrderedKernelParams {
        lam: (luv - lu_p - lv_p) / (h * h),
        mu: (lu_p - lu_m) / (2.0 * h),
        nu: (lv_p - lv_m) / (2.0 * h),
        mu2: (lu_p + lu_m) / (2.0 * h * h),
        nu2: (lv_p + lv_m) / (2.0 * h * h),
    };
    let (u, v) = (c(-h), c(2.0 * h));
    let predicted = params.lam * u * v + params.mu * u + params.nu * v + params.mu2 * u * u + params.nu2 * v * v;
    let actual = f(u, v)? / scale;
    let mismatch = (actual / predicted.exp() - 1.0).norm();
    if mismatch > SYMBOL_FIT_TOL {
        return Err(Error::UnsupportedInput(format!(
            "output symbol is not a normally ordered Gaussian (mismatch {mismatch:.3e})"
        )));
    }
    Ok(GaussianSymbol { scale, params })
}

/// Output of the number state `|l⟩`. The β-moment integral times
/// `e^{ξη/ζ}` is a polynomial of degree `l` in `w = ξη`; its coefficients
/// are read off by a discrete Fourier transform on a circle.
fn husimi_number(l: usize, tau: f64, cutoff: FockCutoff) -> Result<CMatrix> {
    let dim = cutoff.dim();
    let zeta = c((tau + 1.0) / tau);
    let count = l + 1;
    let radius = zeta.re * (1.0 + l as f64 / 4.0);
    let samples = (0..count)
        .map(|k| {
            let w = Complex64::from_polar(radius, 2.0 * PI * k as f64 / count as f64);
            let p = GaussianMomentParams {
                n: l,
                m: l,
                zeta,
                xi: w,
                eta: c(1.0),
            };
            Ok(gaussian_moment_integral(&p, IntegralMode::AnalyticContinuation)? * (w / zeta).exp())
        })
        .collect::<Result<Vec<_>>>()?;
    let coefs: Vec<Complex64> = (0..count)
        .map(|j| {
            let sum: Complex64 = samples
                .iter()
                .enumerate()
                .map(|(k, s)| s * Complex64::from_polar(1.0, -2.0 * PI * (j * k) as f64 / count as f64))
                .sum();
            sum / (count as f64 * radius.powi(j as i32))
        })
        .collect();
    let sign = if l % 2 == 0 { -1.0 } else { 1.0 };
    let ln_lf: f64 = (1..=l).map(|k| (k as f64).ln()).sum();
    let prefactor = sign * (-ln_lf).exp() / tau;
    // w = −uv/τ², and :(a†a)^j e^{λ a†a}: = A†^j (1+λ)^N A^j with
    // λ = 1/(τ²ζ) − 1/τ = −1/(τ+1).
    let ratio = tau / (tau + 1.0);
    let lnf = ln_factorials(dim);
    let mut m = CMatrix::zeros(dim, dim);
    for n in 0..dim {
        let mut acc = c(0.0);
        for (j, cj) in coefs.iter().enumerate().take(n.min(l) + 1) {
            let falling = (lnf[n] - lnf[n - j]).exp();
            acc += cj * (-1.0 / (tau * tau)).powi(j as i32) * falling * ratio.powi((n - j) as i32);
        }
        m[(n, n)] = acc * prefactor;
    }
    Ok(m)
}

fn husimi_coherent(z: Complex64, tau: f64, cutoff: FockCutoff) -> Result<CMatrix> {
    let zeta = c((tau + 1.0) / tau);
    let pref = (-z.norm_sqr()).exp() * (-1.0 / tau);
    let symbol = fit_gaussian_symbol(|u, v| {
        let p = GaussianMomentParams {
            n: 0,
            m: 0,
            zeta,
            xi: u / tau + z.conj(),
            eta: -v / tau - z,
        };
        Ok(gaussian_moment_integral(&p, IntegralMode::AnalyticContinuation)? * pref * (-u * v / tau).exp())
    })?;
    Ok(ordered_gaussian_kernel(&symbol.params, cutoff) * symbol.scale)
}

fn husimi_squeezed(lambda: f64, tau: f64, cutoff: FockCutoff) -> Result<CMatrix> {
    let zeta = c((tau + 1.0) / tau);
    let half_t = c(0.5 * lambda.tanh());
    let pref = -1.0 / (lambda.cosh() * tau);
    let symbol = fit_gaussian_symbol(|u, v| {
        let p = GaussianQuadraticParams {
            zeta,
            xi: u / tau,
            eta: -v / tau,
            f: half_t,
            g: half_t,
        };
        Ok(gaussian_quadratic_integral(&p, IntegralMode::AnalyticContinuation)? * pref * (-u * v / tau).exp())
    })?;
    Ok(ordered_gaussian_kernel(&symbol.params, cutoff) * symbol.scale)
}

/// Output of `ρ(τ) = (−1/τ) :e^{−a†a/τ} ∫ d²β/π ⟨−β|ρ₀|β⟩ exp[ζ'|β|² + (a†β − aβ*)/τ]:`,
/// with the β-integral evaluated by analytic continuation. Only the pure
/// inputs named by `spec` are supported, and `rho0` must match `spec`.
pub fn evolve_via_husimi_integral(
    rho0: &DensityMatrix,
    spec: &StateSpec,
    tau: ChannelTime,
    cutoff: FockCutoff,
) -> Result<DensityMatrix> {
    if rho0.dim() != cutoff.dim() {
        return Err(Error::DimensionMismatch {
            left: rho0.dim(),
            right: cutoff.dim(),
        });
    }
    if let StateSpec::Number { l } = *spec {
        if l >= cutoff.dim() {
            return Err(Error::NumberExceedsCutoff { l, dim: cutoff.dim() });
        }
    }
    check_input_kernel(rho0, spec)?;
    if tau.is_zero() {
        return Ok(rho0.clone());
    }
    let t = tau.tau();
    let label = format!("husimi_integral[{}](tau={t})", spec.label());
    let m = match *spec {
        StateSpec::Number { l } => husimi_number(l, t, cutoff)?,
        StateSpec::Coherent { z } => husimi_coherent(z, t, cutoff)?,
        StateSpec::SqueezedVacuum { lambda } => {
            return resolve_sign(husimi_squeezed(lambda, t, cutoff)?, &label, label.clone()).map(|(rho, _)| rho);
        }
    };
    require_trace(&m, &label)?;
    DensityMatrix::new(m, label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{state_metrics, thermal_state, trace_distance};
    use crate::oracle::{integrate_master_equation, IntegratorConfig, QuadratureRule};

    fn ct(t: f64) -> ChannelTime {
        ChannelTime::new(t).unwrap()
    }

    fn cut(d: usize) -> FockCutoff {
        FockCutoff::new(d).unwrap()
    }

    fn kraus(rho: &DensityMatrix, t: f64) -> DensityMatrix {
        let d = rho.dim();
        let ks = build_kraus_set(ct(t), default_kraus_order(ct(t), d), cut(d)).unwrap();
        kraus_evolve(rho, &ks).unwrap()
    }

    fn rk4(rho: &DensityMatrix, t: f64) -> DensityMatrix {
        integrate_master_equation(rho, &IntegratorConfig::for_channel_time(t, 2e-3).unwrap()).unwrap()
    }

    #[test]
    fn channel_time_guard() {
        assert!(ChannelTime::new(-0.1).is_err());
        assert!(ChannelTime::new(f64::NAN).is_err());
        assert!(ChannelTime::new(0.0).unwrap().is_zero());
    }

    #[test]
    fn lowest_kraus_operator_is_diagonal() {
        let t = 0.7;
        let m = kraus_operator(0, 0, ct(t), cut(6)).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { (1.0 / (t + 1.0)).sqrt() * (1.0 + t).powi(-(i as i32)) } else { 0.0 };
                assert!((m[(i, j)] - c(want)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn kraus_operator_matches_explicit_product() {
        // τ=1, m=1, n=0: (1/2) A† diag(2^{−n}).
        let m = kraus_operator(1, 0, ct(1.0), cut(4)).unwrap();
        for k in 0..3 {
            let want = 0.5 * ((k + 1) as f64).sqrt() * 0.5f64.powi(k as i32);
            assert!((m[(k + 1, k)] - c(want)).norm() < 1e-15);
        }
        assert_eq!(m.iter().filter(|x| x.norm() > 0.0).count(), 3);
    }

    #[test]
    fn lowering_kraus_operators_kill_the_vacuum() {
        for (m, n) in [(0, 1), (2, 1), (3, 4)] {
            let k = kraus_operator(m, n, ct(0.5), cut(10)).unwrap();
            assert!(k.column(0).iter().all(|x| x.norm() == 0.0));
        }
    }

    #[test]
    fn zero_time_kraus_guards() {
        assert_eq!(
            kraus_operator(1, 0, ct(0.0), cut(4)),
            Err(Error::ZeroTimeNontrivialIndex { m: 1, n: 0 })
        );
        assert_eq!(kraus_operator(0, 0, ct(0.0), cut(4)).unwrap(), CMatrix::identity(4, 4));
        let ks = build_kraus_set(ct(0.0), 3, cut(8)).unwrap();
        assert_eq!(ks.operators.len(), 1);
        assert_eq!(ks.completeness_residual, 0.0);
    }

    #[test]
    fn kraus_set_guards() {
        assert_eq!(
            build_kraus_set(ct(0.5), 8, cut(8)),
            Err(Error::CutoffTooSmall { dim: 8, max_index: 8 })
        );
        assert!(build_kraus_set(ct(0.5), 0, cut(8)).is_err());
    }

    #[test]
    fn completeness_diagonal_matches_dense_sum() {
        let ks = build_kraus_set(ct(0.4), 3, cut(7)).unwrap();
        let mut dense = CMatrix::zeros(7, 7);
        for op in &ks.operators {
            let m = op.to_matrix(7);
            dense += m.adjoint() * &m;
        }
        let diag = ks.completeness_diagonal();
        for i in 0..7 {
            for j in 0..7 {
                let want = if i == j { diag[i] } else { 0.0 };
                assert!((dense[(i, j)] - c(want)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn completeness_residual_reference_values() {
        // Negative-binomial tail of the truncated m-sum, computed independently.
        let ks = build_kraus_set(ct(0.25), 12, cut(32)).unwrap();
        let diag = ks.completeness_diagonal();
        assert!((diag[0] - 1.0).abs() < 1e-9 && (diag[0] - 1.0).abs() > 5e-10);
        assert!((ks.completeness_residual - 1.894010423e-3).abs() < 1e-11);
    }

    #[test]
    fn completeness_residual_decreases_with_order() {
        let r4 = build_kraus_set(ct(1.0), 4, cut(32)).unwrap().completeness_residual;
        let r12 = build_kraus_set(ct(1.0), 12, cut(32)).unwrap().completeness_residual;
        assert!(r4 > r12);
        let mut prev = f64::INFINITY;
        for m in 1..=16 {
            let r = build_kraus_set(ct(0.25), m, cut(32)).unwrap().completeness_residual;
            assert!(r <= prev + 1e-12, "M = {m}");
            prev = r;
        }
    }

    #[test]
    fn kraus_evolve_matches_dense_sum() {
        let rho0 = pure_state(&StateSpec::Coherent { z: Complex64::new(0.4, 0.3) }, cut(10)).unwrap();
        let ks = build_kraus_set(ct(0.3), 4, cut(10)).unwrap();
        let mut dense = CMatrix::zeros(10, 10);
        for op in &ks.operators {
            let m = op.to_matrix(10);
            dense += &m * rho0.entries() * m.adjoint();
        }
        let got = kraus_evolve(&rho0, &ks).unwrap();
        assert!(crate::fock::max_abs_diff(got.entries(), &dense) < 1e-14);
    }

    #[test]
    fn kraus_evolve_guards_and_identity() {
        let rho0 = pure_state(&StateSpec::Number { l: 2 }, cut(8)).unwrap();
        let ks0 = build_kraus_set(ct(0.0), 2, cut(8)).unwrap();
        assert_eq!(kraus_evolve(&rho0, &ks0).unwrap().entries(), rho0.entries());
        let ks = build_kraus_set(ct(0.5), 2, cut(9)).unwrap();
        assert_eq!(kraus_evolve(&rho0, &ks), Err(Error::DimensionMismatch { left: 8, right: 9 }));
    }

    #[test]
    fn kraus_vacuum_gains_tau_photons() {
        let rho0 = pure_state(&StateSpec::Number { l: 0 }, cut(48)).unwrap();
        let ks = build_kraus_set(ct(0.5), 16, cut(48)).unwrap();
        let out = kraus_evolve(&rho0, &ks).unwrap();
        assert!((state_metrics(&out).mean_photon - 0.5).abs() < 1e-6);
    }

    #[test]
    fn kraus_coherent_matches_rk4() {
        let rho0 = pure_state(&StateSpec::Coherent { z: c(1.0) }, cut(48)).unwrap();
        let d = trace_distance(&kraus(&rho0, 0.5), &rk4(&rho0, 0.5)).unwrap();
        assert!(d < 1e-6, "{d}");
    }

    #[test]
    fn coherent_output_examples() {
        let thermal = coherent_output(c(0.0), ct(0.5), cut(48)).unwrap();
        let want = thermal_state(0.5, cut(48)).unwrap();
        assert!(crate::fock::max_abs_diff(thermal.entries(), want.entries()) < 1e-12);

        let rho = coherent_output(c(1.0), ct(0.5), cut(48)).unwrap();
        let m = state_metrics(&rho);
        assert!((m.trace - 1.0).abs() < 1e-8);
        assert!((m.mean_photon - 1.5).abs() < 1e-6);
        let rho0 = pure_state(&StateSpec::Coherent { z: c(1.0) }, cut(48)).unwrap();
        assert!(trace_distance(&rho, &kraus(&rho0, 0.5)).unwrap() < 1e-7);
    }

    #[test]
    fn coherent_output_at_zero_time_is_the_projector() {
        let rho = coherent_output(Complex64::new(0.5, -0.5), ct(0.0), cut(16)).unwrap();
        assert!((state_metrics(&rho).purity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coherent_output_truncation_guard() {
        assert!(matches!(
            coherent_output(c(4.0), ct(1.0), cut(8)),
            Err(Error::TruncationLoss { .. })
        ));
    }

    #[test]
    fn purity_decays_with_time() {
        let mut prev = 1.0 + 1e-12;
        for t in [0.0, 0.1, 0.25, 0.5, 1.0, 2.0] {
            let p = state_metrics(&coherent_output(c(1.0), ct(t), cut(64)).unwrap()).purity;
            assert!(p < prev, "tau = {t}");
            prev = p;
        }
    }

    #[test]
    fn number_output_examples() {
        let a = number_output(0, ct(0.5), cut(48)).unwrap();
        let b = coherent_output(c(0.0), ct(0.5), cut(48)).unwrap();
        assert!(crate::fock::max_abs_diff(a.entries(), b.entries()) < 1e-14);

        let rho = number_output(2, ct(0.5), cut(64)).unwrap();
        assert!((state_metrics(&rho).mean_photon - 2.5).abs() < 1e-6);

        let rho = number_output(1, ct(0.25), cut(48)).unwrap();
        let rho0 = pure_state(&StateSpec::Number { l: 1 }, cut(48)).unwrap();
        assert!(trace_distance(&rho, &kraus(&rho0, 0.25)).unwrap() < 1e-7);
    }

    #[test]
    fn number_output_single_photon_diagonal() {
        // Entry by entry against the Kraus sum.
        let t = 0.5;
        let rho = number_output(1, ct(t), cut(40)).unwrap();
        let rho0 = pure_state(&StateSpec::Number { l: 1 }, cut(40)).unwrap();
        let k = kraus(&rho0, t);
        for n in 0..10 {
            assert!((rho.entries()[(n, n)] - k.entries()[(n, n)]).norm() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn number_output_guard() {
        assert_eq!(
            number_output(4, ct(0.5), cut(8)),
            Err(Error::NumberExceedsCutoff { l: 4, dim: 8 })
        );
    }

    #[test]
    fn squeezed_output_examples() {
        let (rho, sign) = squeezed_output(0.0, ct(0.7), cut(48)).unwrap();
        let thermal = coherent_output(c(0.0), ct(0.7), cut(48)).unwrap();
        assert!(crate::fock::max_abs_diff(rho.entries(), thermal.entries()) < 1e-14);
        assert_eq!(sign.sign, 1.0);

        let (rho, sign) = squeezed_output(0.5, ct(0.5), cut(64)).unwrap();
        assert!((rho.trace().re - 1.0).abs() < 1e-6);
        assert_eq!(sign.sign, 1.0);
        assert!(!sign.agrees_with_printed());
        let rho0 = pure_state(&StateSpec::SqueezedVacuum { lambda: 0.5 }, cut(64)).unwrap();
        assert!(trace_distance(&rho, &kraus(&rho0, 0.5)).unwrap() < 1e-6);
    }

    #[test]
    fn squeezed_output_guards() {
        assert!(matches!(squeezed_output(2.5, ct(0.5), cut(32)), Err(Error::InvalidParameter(_))));
        assert!(matches!(
            squeezed_output(1.5, ct(1.0), cut(8)),
            Err(Error::TruncationLoss { .. })
        ));
    }

    #[test]
    fn squeezed_output_gains_tau_photons() {
        let lambda: f64 = 0.5;
        let (rho, _) = squeezed_output(lambda, ct(0.25), cut(64)).unwrap();
        let want = lambda.sinh().powi(2) + 0.25;
        assert!((state_metrics(&rho).mean_photon - want).abs() < 1e-6);
    }

    #[test]
    fn p_integral_delta_is_coherent_output() {
        let p = PInput::Analytic(PFunctionAnalytic::delta(c(1.0)));
        let grid = ComplexGrid::new(4.0, 8, QuadratureRule::GaussLegendre).unwrap();
        let a = evolve_via_p_integral(&p, ct(0.5), &grid, cut(32)).unwrap();
        let b = coherent_output(c(1.0), ct(0.5), cut(32)).unwrap();
        assert!(crate::fock::max_abs_diff(a.entries(), b.entries()) < 1e-12);
    }

    #[test]
    fn p_integral_thermal_gaussian() {
        let p = PInput::Analytic(PFunctionAnalytic::gaussian(c(0.0), 0.5).unwrap());
        let grid = ComplexGrid::new(5.0, 48, QuadratureRule::GaussLegendre).unwrap();
        let rho = evolve_via_p_integral(&p, ct(0.5), &grid, cut(32)).unwrap();
        assert!((state_metrics(&rho).mean_photon - 1.0).abs() < 1e-5);
        let want = thermal_state(1.0, cut(32)).unwrap();
        assert!(trace_distance(&rho, &want).unwrap() < 1e-5);
    }

    #[test]
    fn p_integral_sampled_narrow_gaussian() {
        let z = c(0.5);
        let var = 0.05f64 * 0.05;
        let grid = ComplexGrid::new(1.0, 96, QuadratureRule::GaussLegendre).unwrap();
        let sampled = crate::phase_space::SampledP::from_fn(grid, |a| (-(a - z).norm_sqr() / var).exp() / var);
        let rho = evolve_via_p_integral(&PInput::Sampled(sampled), ct(1.0), &grid, cut(24)).unwrap();
        let want = coherent_output(z, ct(1.0), cut(24)).unwrap();
        let d = trace_distance(&rho, &want).unwrap();
        assert!(d < 1e-3, "{d}");
    }

    #[test]
    fn p_integral_quadrature_guard() {
        let p = PInput::Analytic(PFunctionAnalytic::gaussian(c(0.0), 0.5).unwrap());
        let grid = ComplexGrid::new(5.0, 4, QuadratureRule::GaussLegendre).unwrap();
        assert!(matches!(
            evolve_via_p_integral(&p, ct(0.5), &grid, cut(16)),
            Err(Error::QuadratureNotConverged { .. })
        ));
    }

    #[test]
    fn husimi_route_examples() {
        let spec = StateSpec::Number { l: 1 };
        let rho0 = pure_state(&spec, cut(48)).unwrap();
        let a = evolve_via_husimi_integral(&rho0, &spec, ct(0.5), cut(48)).unwrap();
        let b = number_output(1, ct(0.5), cut(48)).unwrap();
        assert!(crate::fock::max_abs_diff(a.entries(), b.entries()) < 1e-9);

        let spec = StateSpec::Coherent { z: c(0.0) };
        let rho0 = pure_state(&spec, cut(48)).unwrap();
        let a = evolve_via_husimi_integral(&rho0, &spec, ct(0.5), cut(48)).unwrap();
        let b = coherent_output(c(0.0), ct(0.5), cut(48)).unwrap();
        assert!(crate::fock::max_abs_diff(a.entries(), b.entries()) < 1e-9);

        let spec = StateSpec::SqueezedVacuum { lambda: 0.3 };
        let rho0 = pure_state(&spec, cut(48)).unwrap();
        let a = evolve_via_husimi_integral(&rho0, &spec, ct(0.25), cut(48)).unwrap();
        let (b, _) = squeezed_output(0.3, ct(0.25), cut(48)).unwrap();
        assert!(crate::fock::max_abs_diff(a.entries(), b.entries()) < 1e-8);
    }

    #[test]
    fn husimi_route_matches_closed_forms_more_widely() {
        for l in [0usize, 2, 3, 7, 12] {
            let spec = StateSpec::Number { l };
            let rho0 = pure_state(&spec, cut(64)).unwrap();
            let a = evolve_via_husimi_integral(&rho0, &spec, ct(0.5), cut(64)).unwrap();
            let b = number_output(l, ct(0.5), cut(64)).unwrap();
            assert!(crate::fock::max_abs_diff(a.entries(), b.entries()) < 1e-9, "l = {l}");
        }
        let z = Complex64::new(0.8, -0.6);
        let spec = StateSpec::Coherent { z };
        let rho0 = pure_state(&spec, cut(48)).unwrap();
        let a = evolve_via_husimi_integral(&rho0, &spec, ct(0.25), cut(48)).unwrap();
        let b = coherent_output(z, ct(0.25), cut(48)).unwrap();
        assert!(crate::fock::max_abs_diff(a.entries(), b.entries()) < 1e-9);
    }

    #[test]
    fn husimi_route_rejects_mismatched_input() {
        let rho0 = pure_state(&StateSpec::Number { l: 2 }, cut(16)).unwrap();
        let spec = StateSpec::Coherent { z: c(0.5) };
        assert!(matches!(
            evolve_via_husimi_integral(&rho0, &spec, ct(0.5), cut(16)),
            Err(Error::UnsupportedInput(_))
        ));
        let mixed = thermal_state(0.3, cut(16)).unwrap();
        assert!(matches!(
            evolve_via_husimi_integral(&mixed, &StateSpec::Number { l: 0 }, ct(0.5), cut(16)),
            Err(Error::UnsupportedInput(_))
        ));
    }

    #[test]
    fn every_route_is_the_identity_at_zero_time() {
        let spec = StateSpec::Coherent { z: c(0.7) };
        let rho0 = pure_state(&spec, cut(24)).unwrap();
        let ks = build_kraus_set(ct(0.0), 4, cut(24)).unwrap();
        assert_eq!(kraus_evolve(&rho0, &ks).unwrap().entries(), rho0.entries());
        assert_eq!(coherent_output(c(0.7), ct(0.0), cut(24)).unwrap().entries(), rho0.entries());
        assert_eq!(
            evolve_via_husimi_integral(&rho0, &spec, ct(0.0), cut(24)).unwrap().entries(),
            rho0.entries()
        );
    }

    #[test]
    fn channel_composes_additively() {
        let rho0 = pure_state(&StateSpec::Coherent { z: c(1.0) }, cut(48)).unwrap();
        let twice = kraus(&kraus(&rho0, 0.25), 0.25);
        let once = kraus(&rho0, 0.5);
        assert!(trace_distance(&twice, &once).unwrap() < 1e-6);
    }
}
