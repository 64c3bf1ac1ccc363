//! Independent ground truth: fixed-step RK4 integration of the diffusion
//! master equation and tensor-product quadrature over the complex plane.

use std::f64::consts::PI;

use crate::fock::DensityMatrix;
use crate::{CMatrix, Complex64, Error, Result};

/// Population allowed on the top Fock level before the integrator reports
/// truncation loss.
pub const TOP_LEVEL_BUDGET: f64 = 1e-6;

/// Upper bound on `κ·dt` for the accuracy contract.
pub const MAX_KAPPA_DT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegratorMethod {
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub kappa: f64,
    pub t_final: f64,
    pub dt: f64,
    pub method: IntegratorMethod,
}

impl IntegratorConfig {
    pub fn new(kappa: f64, t_final: f64, dt: f64) -> Result<Self> {
        let cfg = Self {
            kappa,
            t_final,
            dt,
            method: IntegratorMethod::Rk4,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// RK4 configuration for a channel time `τ = κt` at unit κ, with the
    /// step chosen so that an integer number of steps of size ≤ `max_dt`
    /// lands exactly on τ.
    pub fn for_channel_time(tau: f64, max_dt: f64) -> Result<Self> {
        let steps = (tau / max_dt).ceil().max(1.0);
        Self::new(1.0, tau, if tau > 0.0 { tau / steps } else { max_dt })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::InvalidParameter(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidParameter(format!("t_final must be >= 0, got {}", self.t_final)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.t_final > 0.0 && self.dt > self.t_final * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "dt = {} exceeds t_final = {}",
                self.dt, self.t_final
            )));
        }
        if self.kappa * self.dt > MAX_KAPPA_DT * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge {
                kappa_dt: self.kappa * self.dt,
            });
        }
        Ok(())
    }

    /// Number of steps; the last step is shortened implicitly by using
    /// `t_final / steps` as the actual step size.
    pub fn steps(&self) -> usize {
        if self.t_final == 0.0 {
            0
        } else {
            (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize
        }
    }
}

/// `−κ(A†Aρ − A†ρA − AρA† + ρAA†)` with truncated ladder matrices, evaluated
/// from the band structure in O(dim²).
pub(crate) fn lindblad_rhs_matrix(rho: &CMatrix, kappa: f64, out: &mut CMatrix) {
    let dim = rho.nrows();
    let sqrt_n: Vec<f64> = (0..=dim).map(|n| (n as f64).sqrt()).collect();
    for j in 0..dim {
        // (AA†)_jj = j+1 except on the last level, where A† has no image.
        let aad_j = if j + 1 < dim { (j + 1) as f64 } else { 0.0 };
        for i in 0..dim {
            let r = rho[(i, j)];
            let mut acc = r * (i as f64 + aad_j);
            if i > 0 && j > 0 {
                acc -= rho[(i - 1, j - 1)] * (sqrt_n[i] * sqrt_n[j]);
            }
            if i + 1 < dim && j + 1 < dim {
                acc -= rho[(i + 1, j + 1)] * (sqrt_n[i + 1] * sqrt_n[j + 1]);
            }
            out[(i, j)] = acc * (-kappa);
        }
    }
}

/// Right-hand side of the diffusion master equation.
pub fn lindblad_rhs(rho: &DensityMatrix, kappa: f64) -> DensityMatrix {
    let mut out = CMatrix::zeros(rho.dim(), rho.dim());
    lindblad_rhs_matrix(rho.entries(), kappa, &mut out);
    DensityMatrix::new(out, format!("rhs[{}]", rho.label())).expect("square by construction")
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationOutcome {
    pub state: DensityMatrix,
    pub steps: usize,
    /// Largest `|Tr ρ(t) − Tr ρ₀|` over all step boundaries.
    pub max_trace_drift: f64,
    /// Largest population on the top retained level over all steps.
    pub max_top_occupation: f64,
}

/// Fixed-step classical RK4 for the master equation, with diagnostics.
pub fn integrate_master_equation_detailed(rho0: &DensityMatrix, cfg: &IntegratorConfig) -> Result<IntegrationOutcome> {
    cfg.validate()?;
    let dim = rho0.dim();
    let steps = cfg.steps();
    let trace0 = rho0.trace().re;
    let mut rho = rho0.entries().clone();
    let mut max_trace_drift: f64 = 0.0;
    let mut max_top: f64 = rho[(dim - 1, dim - 1)].re.abs();
    if steps > 0 {
        let h = cfg.t_final / steps as f64;
        let mut k1 = CMatrix::zeros(dim, dim);
        let mut k2 = CMatrix::zeros(dim, dim);
        let mut k3 = CMatrix::zeros(dim, dim);
        let mut k4 = CMatrix::zeros(dim, dim);
        let mut stage = CMatrix::zeros(dim, dim);
        let half = Complex64::new(0.5 * h, 0.0);
        let full = Complex64::new(h, 0.0);
        let sixth = Complex64::new(h / 6.0, 0.0);
        for _ in 0..steps {
            lindblad_rhs_matrix(&rho, cfg.kappa, &mut k1);
            stage.copy_from(&rho);
            stage.zip_apply(&k1, |y, x| *y += half * x);
            lindblad_rhs_matrix(&stage, cfg.kappa, &mut k2);
            stage.copy_from(&rho);
            stage.zip_apply(&k2, |y, x| *y += half * x);
            lindblad_rhs_matrix(&stage, cfg.kappa, &mut k3);
            stage.copy_from(&rho);
            stage.zip_apply(&k3, |y, x| *y += full * x);
            lindblad_rhs_matrix(&stage, cfg.kappa, &mut k4);
            k2 *= Complex64::new(2.0, 0.0);
            k3 *= Complex64::new(2.0, 0.0);
            k1 += &k2;
            k1 += &k3;
            k1 += &k4;
            rho.zip_apply(&k1, |y, x| *y += sixth * x);
            max_trace_drift = max_trace_drift.max((rho.trace().re - trace0).abs());
            max_top = max_top.max(rho[(dim - 1, dim - 1)].re.abs());
        }
    }
    if max_top > TOP_LEVEL_BUDGET {
        return Err(Error::TruncationLoss {
            context: format!("master-equation integration: top-level occupation {max_top:.3e}"),
            retained: 1.0 - max_top,
        });
    }
    let state = DensityMatrix::new(rho, format!("rk4[{}](kappa*t={})", rho0.label(), cfg.kappa * cfg.t_final))?;
    Ok(IntegrationOutcome {
        state,
        steps,
        max_trace_drift,
        max_top_occupation: max_top,
    })
}

/// `ρ(t_final)` by fixed-step RK4.
pub fn integrate_master_equation(rho0: &DensityMatrix, cfg: &IntegratorConfig) -> Result<DensityMatrix> {
    integrate_master_equation_detailed(rho0, cfg).map(|o| o.state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureRule {
    Midpoint,
    GaussLegendre,
}

/// Tensor-product sampling of the square `[−R, R]²` in (Re β, Im β).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexGrid {
    pub radius: f64,
    pub points_per_axis: usize,
    pub rule: QuadratureRule,
}

impl ComplexGrid {
    pub fn new(radius: f64, points_per_axis: usize, rule: QuadratureRule) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!("grid radius must be > 0, got {radius}")));
        }
        if points_per_axis == 0 {
            return Err(Error::InvalidParameter("grid needs at least one point per axis".into()));
        }
        Ok(Self {
            radius,
            points_per_axis,
            rule,
        })
    }

    pub fn refined(&self) -> Self {
        Self {
            points_per_axis: 2 * self.points_per_axis,
            ..*self
        }
    }

    /// One-dimensional nodes and weights on `[−R, R]`.
    pub fn axis(&self) -> Vec<(f64, f64)> {
        let r = self.radius;
        let n = self.points_per_axis;
        match self.rule {
            QuadratureRule::Midpoint => {
                let h = 2.0 * r / n as f64;
                (0..n).map(|i| (-r + (i as f64 + 0.5) * h, h)).collect()
            }
            QuadratureRule::GaussLegendre => gauss_legendre(n).into_iter().map(|(x, w)| (r * x, r * w)).collect(),
        }
    }

    /// Two-dimensional nodes with weights that include the `1/π` measure.
    pub fn nodes(&self) -> Vec<(Complex64, f64)> {
        let axis = self.axis();
        let mut out = Vec::with_capacity(axis.len() * axis.len());
        for &(x, wx) in &axis {
            for &(y, wy) in &axis {
                out.push((Complex64::new(x, y), wx * wy / PI));
            }
        }
        out
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out[i] = (-x, w);
        out[n - 1 - i] = (x, w);
    }
    out
}

/// Values that can be accumulated by the quadrature driver.
pub trait Integrand: Clone {
    fn zero_like(&self) -> Self;
    fn add_scaled(&mut self, other: &Self, w: f64);
    fn max_abs(&self) -> f64;
    fn max_abs_diff(&self, other: &Self) -> f64;
}

impl Integrand for Complex64 {
    fn zero_like(&self) -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn add_scaled(&mut self, other: &Self, w: f64) {
        *self += other * w;
    }
    fn max_abs(&self) -> f64 {
        self.norm()
    }
    fn max_abs_diff(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
}

impl Integrand for CMatrix {
    fn zero_like(&self) -> Self {
        CMatrix::zeros(self.nrows(), self.ncols())
    }
    fn add_scaled(&mut self, other: &Self, w: f64) {
        let w = Complex64::new(w, 0.0);
        self.zip_apply(other, |y, x| *y += w * x);
    }
    fn max_abs(&self) -> f64 {
        self.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
    fn max_abs_diff(&self, other: &Self) -> f64 {
        crate::fock::max_abs_diff(self, other)
    }
}

/// Integration domain inside the grid square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureDomain {
    /// The full square `[−R, R]²`.
    Square,
    /// Only nodes with `|β| ≤ R` contribute.
    Disk,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Largest allowed boundary magnitude relative to the peak node magnitude.
    pub decay_tol: f64,
    pub domain: QuadratureDomain,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            decay_tol: 1e-12,
            domain: QuadratureDomain::Square,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureResult<T> {
    /// Value on the refined (doubled) grid.
    pub value: T,
    /// Max-norm change between the base and the refined grid.
    pub refinement_estimate: f64,
}

fn boundary_points(grid: &ComplexGrid, domain: QuadratureDomain) -> Vec<Complex64> {
    let r = grid.radius;
    let n = 4 * grid.points_per_axis.max(4);
    match domain {
        QuadratureDomain::Square => {
            let mut pts = Vec::with_capacity(4 * n);
            for i in 0..n {
                let s = -r + 2.0 * r * i as f64 / n as f64;
                pts.push(Complex64::new(s, -r));
                pts.push(Complex64::new(r, s));
                pts.push(Complex64::new(-s, r));
                pts.push(Complex64::new(-r, -s));
            }
            pts
        }
        QuadratureDomain::Disk => (0..4 * n)
            .map(|i| Complex64::from_polar(r, 2.0 * PI * i as f64 / (4 * n) as f64))
            .collect(),
    }
}

fn single_pass<T: Integrand, F: Fn(Complex64) -> T>(f: &F, grid: &ComplexGrid, domain: QuadratureDomain) -> Option<(T, f64)> {
    let mut acc: Option<T> = None;
    let mut peak: f64 = 0.0;
    for (beta, w) in grid.nodes() {
        if domain == QuadratureDomain::Disk && beta.norm() > grid.radius {
            continue;
        }
        let v = f(beta);
        peak = peak.max(v.max_abs());
        match acc.as_mut() {
            Some(a) => a.add_scaled(&v, w),
            None => {
                let mut a = v.zero_like();
                a.add_scaled(&v, w);
                acc = Some(a);
            }
        }
    }
    acc.map(|a| (a, peak))
}

/// `∫ d²β/π f(β)` with the default options (square domain, boundary
/// magnitude ≤ 1e−12 of the peak).
pub fn quadrature_2d<T: Integrand, F: Fn(Complex64) -> T>(f: F, grid: &ComplexGrid) -> Result<QuadratureResult<T>> {
    quadrature_2d_with(f, grid, &QuadratureOptions::default())
}

pub fn quadrature_2d_with<T: Integrand, F: Fn(Complex64) -> T>(
    f: F,
    grid: &ComplexGrid,
    opts: &QuadratureOptions,
) -> Result<QuadratureResult<T>> {
    let (coarse, peak) = single_pass(&f, grid, opts.domain)
        .ok_or_else(|| Error::InvalidParameter("quadrature grid has no nodes inside the domain".into()))?;
    let boundary = boundary_points(grid, opts.domain)
        .into_iter()
        .map(|b| f(b).max_abs())
        .fold(0.0, f64::max);
    if boundary > opts.decay_tol * peak {
        return Err(Error::NotDecayed { boundary, peak });
    }
    let (fine, _) = single_pass(&f, &grid.refined(), opts.domain).expect("refined grid contains the coarse domain");
    let refinement_estimate = fine.max_abs_diff(&coarse);
    Ok(QuadratureResult {
        value: fine,
        refinement_estimate,
    })
}
