//! Quasi-probability layer: the Glauber–Sudarshan P-function, its Mehta
//! inverse, the cross element `⟨−β|ρ|β⟩`, and checks that the diffusion
//! channel acts as classical diffusion on P.
//!
//! The P-function of an evolved coherent state is
//! `P(α, τ) = (1/τ) exp[−|z − α|²/τ]`, which satisfies
//! `∂P/∂τ = ∂²P/∂α∂α*` (with κ absorbed into τ = κt).

use crate::fock::{annihilation_matrix, coherent_coefficients, DensityMatrix, FockCutoff};
use crate::oracle::{quadrature_2d, ComplexGrid, QuadratureResult};
use crate::{CMatrix, CVector, Complex64, Error, Result};

/// Refinement tolerance for P-function quadratures.
pub const P_QUADRATURE_TOL: f64 = 1e-5;

/// Boundary-to-peak ratio allowed for the Mehta integrand.
pub const MEHTA_DECAY_TOL: f64 = 1e-5;

/// Coherent-vector mass that may fall above the cutoff in
/// [`husimi_cross_element`].
pub const CROSS_ELEMENT_TAIL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PFunctionKind {
    /// `π δ²(α − z)`
    Delta { z: Complex64 },
    /// `e^{−|α − center|²/variance}`
    Gaussian { center: Complex64, variance: f64 },
}

/// Analytic P-function: `normalization × kind`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PFunctionAnalytic {
    pub kind: PFunctionKind,
    pub normalization: f64,
}

impl PFunctionAnalytic {
    pub fn delta(z: Complex64) -> Self {
        Self {
            kind: PFunctionKind::Delta { z },
            normalization: 1.0,
        }
    }

    /// Unit-trace Gaussian, `(1/variance) e^{−|α − center|²/variance}`.
    pub fn gaussian(center: Complex64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Gaussian P-function variance must be > 0, got {variance}"
            )));
        }
        Ok(Self {
            kind: PFunctionKind::Gaussian { center, variance },
            normalization: 1.0 / variance,
        })
    }

    /// Pointwise value; `None` for the delta kind.
    pub fn value(&self, alpha: Complex64) -> Option<f64> {
        match self.kind {
            PFunctionKind::Delta { .. } => None,
            PFunctionKind::Gaussian { center, variance } => {
                Some(self.normalization * (-(alpha - center).norm_sqr() / variance).exp())
            }
        }
    }

    /// `∫ d²α/π P(α) |α|²`, the normally ordered `⟨a†a⟩`.
    pub fn mean_photon_number(&self) -> f64 {
        match self.kind {
            PFunctionKind::Delta { z } => self.normalization * z.norm_sqr(),
            PFunctionKind::Gaussian { center, variance } => {
                self.normalization * variance * (center.norm_sqr() + variance)
            }
        }
    }
}

/// P-function known only through samples on a grid and on its refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledP {
    pub grid: ComplexGrid,
    /// Values at `grid.nodes()`.
    pub coarse: Vec<f64>,
    /// Values at `grid.refined().nodes()`.
    pub fine: Vec<f64>,
}

impl SampledP {
    pub fn from_fn(grid: ComplexGrid, f: impl Fn(Complex64) -> f64) -> Self {
        let coarse = grid.nodes().into_iter().map(|(a, _)| f(a)).collect();
        let fine = grid.refined().nodes().into_iter().map(|(a, _)| f(a)).collect();
        Self { grid, coarse, fine }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PInput {
    Analytic(PFunctionAnalytic),
    Sampled(SampledP),
}

impl PInput {
    pub fn mean_photon_number(&self) -> Option<f64> {
        match self {
            PInput::Analytic(p) => Some(p.mean_photon_number()),
            PInput::Sampled(_) => None,
        }
    }
}

fn weighted_sum<F: Fn(Complex64) -> CMatrix>(nodes: &[(Complex64, f64)], values: &[f64], g: &F) -> (CMatrix, f64, f64) {
    let ring = nodes
        .iter()
        .map(|(a, _)| a.re.abs().max(a.im.abs()))
        .fold(0.0, f64::max);
    let mut acc: Option<CMatrix> = None;
    let (mut peak, mut edge) = (0.0f64, 0.0f64);
    for (&(alpha, w), &p) in nodes.iter().zip(values) {
        let term = g(alpha) * Complex64::new(p, 0.0);
        let mag = term.iter().map(|c| c.norm()).fold(0.0, f64::max);
        peak = peak.max(mag);
        if alpha.re.abs().max(alpha.im.abs()) >= ring * (1.0 - 1e-12) {
            edge = edge.max(mag);
        }
        match acc.as_mut() {
            Some(a) => a.zip_apply(&term, |y, x| *y += x * w),
            None => acc = Some(term * Complex64::new(w, 0.0)),
        }
    }
    (acc.expect("grid has nodes"), peak, edge)
}

/// `∫ d²α/π P(α) g(α)` for a non-delta P-function, with refinement estimate.
pub(crate) fn integrate_against_p<F: Fn(Complex64) -> CMatrix>(
    p: &PInput,
    grid: &ComplexGrid,
    g: F,
) -> Result<QuadratureResult<CMatrix>> {
    match p {
        PInput::Analytic(pa) => match pa.kind {
            PFunctionKind::Delta { .. } => Err(Error::InvalidParameter(
                "delta P-functions are evaluated directly, not by quadrature".into(),
            )),
            PFunctionKind::Gaussian { .. } => quadrature_2d(
                |alpha| g(alpha) * Complex64::new(pa.value(alpha).expect("gaussian"), 0.0),
                grid,
            ),
        },
        PInput::Sampled(s) => {
            let coarse_nodes = s.grid.nodes();
            let fine_nodes = s.grid.refined().nodes();
            if s.coarse.len() != coarse_nodes.len() || s.fine.len() != fine_nodes.len() {
                return Err(Error::DimensionMismatch {
                    left: s.coarse.len() + s.fine.len(),
                    right: coarse_nodes.len() + fine_nodes.len(),
                });
            }
            let (coarse, _, _) = weighted_sum(&coarse_nodes, &s.coarse, &g);
            let (fine, peak, edge) = weighted_sum(&fine_nodes, &s.fine, &g);
            if edge > 1e-12 * peak {
                return Err(Error::NotDecayed { boundary: edge, peak });
            }
            let refinement_estimate = crate::fock::max_abs_diff(&fine, &coarse);
            Ok(QuadratureResult {
                value: fine,
                refinement_estimate,
            })
        }
    }
}

fn coherent_projector(alpha: Complex64, dim: usize) -> CMatrix {
    let v = coherent_coefficients(alpha, dim);
    &v * v.adjoint()
}

/// `ρ = ∫ d²α/π P(α) |α⟩⟨α|`; delta inputs bypass quadrature.
pub fn rho_from_p(p: &PInput, cutoff: FockCutoff, grid: &ComplexGrid) -> Result<DensityMatrix> {
    let dim = cutoff.dim();
    if let PInput::Analytic(PFunctionAnalytic {
        kind: PFunctionKind::Delta { z },
        normalization,
    }) = p
    {
        let m = coherent_projector(*z, dim) * Complex64::new(*normalization, 0.0);
        return DensityMatrix::new(m, format!("rho_from_p[delta z={z}]"));
    }
    let q = integrate_against_p(p, grid, |alpha| coherent_projector(alpha, dim))?;
    if q.refinement_estimate > P_QUADRATURE_TOL {
        return Err(Error::QuadratureNotConverged {
            estimate: q.refinement_estimate,
            tolerance: P_QUADRATURE_TOL,
        });
    }
    DensityMatrix::new(q.value, "rho_from_p[quadrature]")
}

/// Evolved coherent-state P-function `(1/τ) e^{−|z−α|²/τ}`.
pub fn p_coherent_evolved(alpha: Complex64, z: Complex64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::ZeroTime);
    }
    Ok((-(z - alpha).norm_sqr() / tau).exp() / tau)
}

/// Truncated coherent amplitudes without the `e^{−|β|²/2}` prefactor.
fn scaled_coherent(beta: Complex64, dim: usize) -> CVector {
    let mut out = CVector::zeros(dim);
    let mut c = Complex64::new(1.0, 0.0);
    for n in 0..dim {
        out[n] = c;
        c = c * beta / ((n + 1) as f64).sqrt();
    }
    out
}

fn truncation_tail(beta: Complex64, dim: usize) -> f64 {
    1.0 - coherent_coefficients(beta, dim).norm_squared()
}

/// `⟨−β|ρ|β⟩e^{|β|²}`, assuming the truncation guard already passed.
fn scaled_cross_element(rho: &CMatrix, beta: Complex64) -> Complex64 {
    let dim = rho.nrows();
    let right = scaled_coherent(beta, dim);
    // ⟨−β|m⟩ = conj(c_m(−β))
    let left = scaled_coherent(-beta, dim).map(|c| c.conj());
    (left.transpose() * rho * right)[(0, 0)]
}

/// Bilinear form `⟨−β|ρ|β⟩` between truncated coherent vectors.
pub fn husimi_cross_element(rho: &DensityMatrix, beta: Complex64) -> Result<Complex64> {
    let tail = truncation_tail(beta, rho.dim());
    if tail > CROSS_ELEMENT_TAIL_TOL {
        return Err(Error::TruncationLoss {
            context: format!("coherent vector at |beta| = {:.3}", beta.norm()),
            retained: 1.0 - tail,
        });
    }
    Ok(scaled_cross_element(rho.entries(), beta) * (-beta.norm_sqr()).exp())
}

/// Precomputed Mehta inversion of one density matrix,
/// `P(α) = e^{|α|²} ∫ d²β/π ⟨−β|ρ|β⟩ e^{|β|² + β*α − βα*}`.
///
/// The β-integral is restricted to the disk `|β| ≤ R` inscribed in the grid
/// square: the integrand is a strongly cancelling alternating sum in the Fock
/// basis, and at the square's corners the cancellation exceeds double
/// precision long before the integrand itself is negligible.
#[derive(Debug, Clone)]
pub struct MehtaInverter {
    coarse: Vec<(Complex64, f64, Complex64)>,
    fine: Vec<(Complex64, f64, Complex64)>,
}

impl MehtaInverter {
    pub fn new(rho: &DensityMatrix, grid: &ComplexGrid) -> Result<Self> {
        let dim = rho.dim();
        let tail = truncation_tail(Complex64::new(grid.radius, 0.0), dim);
        if tail > CROSS_ELEMENT_TAIL_TOL {
            return Err(Error::TruncationLoss {
                context: format!("Mehta inversion needs coherent vectors up to |beta| = {}", grid.radius),
                retained: 1.0 - tail,
            });
        }
        let sample = |g: &ComplexGrid| -> Vec<(Complex64, f64, Complex64)> {
            g.nodes()
                .into_iter()
                .filter(|(b, _)| b.norm() <= g.radius)
                .map(|(b, w)| (b, w, scaled_cross_element(rho.entries(), b)))
                .collect()
        };
        let coarse = sample(grid);
        let peak = coarse.iter().map(|(_, _, h)| h.norm()).fold(0.0, f64::max);
        let ring = 4 * grid.points_per_axis.max(8);
        let boundary = (0..ring)
            .map(|i| {
                let b = Complex64::from_polar(grid.radius, 2.0 * std::f64::consts::PI * i as f64 / ring as f64);
                scaled_cross_element(rho.entries(), b).norm()
            })
            .fold(0.0, f64::max);
        if !(boundary <= MEHTA_DECAY_TOL * peak) {
            return Err(Error::NotDecayed { boundary, peak });
        }
        Ok(Self {
            coarse,
            fine: sample(&grid.refined()),
        })
    }

    fn sum(nodes: &[(Complex64, f64, Complex64)], alpha: Complex64) -> Complex64 {
        nodes
            .iter()
            .map(|&(b, w, h)| h * (b.conj() * alpha - b * alpha.conj()).exp() * w)
            .sum::<Complex64>()
            * alpha.norm_sqr().exp()
    }

    pub fn p_at(&self, alpha: Complex64) -> QuadratureResult<Complex64> {
        let fine = Self::sum(&self.fine, alpha);
        let coarse = Self::sum(&self.coarse, alpha);
        QuadratureResult {
            value: fine,
            refinement_estimate: (fine - coarse).norm(),
        }
    }
}

/// P-function of `ρ` at `α` via the Mehta inverse; refuses states whose
/// integrand does not decay.
pub fn p_from_rho_mehta(rho: &DensityMatrix, alpha: Complex64, grid: &ComplexGrid) -> Result<Complex64> {
    let r = MehtaInverter::new(rho, grid)?.p_at(alpha);
    if r.refinement_estimate > P_QUADRATURE_TOL {
        return Err(Error::QuadratureNotConverged {
            estimate: r.refinement_estimate,
            tolerance: P_QUADRATURE_TOL,
        });
    }
    Ok(r.value)
}

fn pde_sample_points(z: Complex64, grid: &ComplexGrid) -> Vec<Complex64> {
    grid.nodes()
        .into_iter()
        .filter(|(a, _)| a.norm() <= grid.radius)
        .map(|(a, _)| z + a)
        .collect()
}

/// Max residual of `∂P/∂τ − ∂²P/∂α∂α*` for the evolved coherent P-function,
/// both sides by second-order central differences with step `h`, sampled at
/// `z + node` for grid nodes inside the disk of the grid radius.
pub fn diffusion_pde_residual(z: Complex64, tau_list: &[f64], grid: &ComplexGrid, h: f64) -> Result<f64> {
    if !(h > 0.0 && h <= 1e-3) {
        return Err(Error::StencilOutOfRange(format!("step h = {h} must lie in (0, 1e-3]")));
    }
    let points = pde_sample_points(z, grid);
    let mut worst: f64 = 0.0;
    for &tau in tau_list {
        if !(tau - h > 0.0) {
            return Err(Error::StencilOutOfRange(format!("tau = {tau} is not interior for h = {h}")));
        }
        let p = |a: Complex64, t: f64| p_coherent_evolved(a, z, t).expect("positive time");
        for &a in &points {
            let dt = (p(a, tau + h) - p(a, tau - h)) / (2.0 * h);
            // ∂α∂α* = ¼(∂x² + ∂y²)
            let lap = (p(a + h, tau) + p(a - h, tau) + p(a + Complex64::new(0.0, h), tau)
                + p(a - Complex64::new(0.0, h), tau)
                - 4.0 * p(a, tau))
                / (4.0 * h * h);
            worst = worst.max((dt - lap).abs());
        }
    }
    Ok(worst)
}

/// Same check with both sides differentiated by hand:
/// `∂P/∂τ = P(−1/τ + |z−α|²/τ²)` and `∂²P/∂α∂α* = P·(z−α)(z*−α*)/τ² − P/τ`.
pub fn diffusion_pde_analytic_residual(z: Complex64, tau_list: &[f64], grid: &ComplexGrid) -> Result<f64> {
    let points = pde_sample_points(z, grid);
    let mut worst: f64 = 0.0;
    for &tau in tau_list {
        for &a in &points {
            let p = p_coherent_evolved(a, z, tau)?;
            let d = z - a;
            let dt = p * (-1.0 / tau + d.norm_sqr() / (tau * tau));
            // ∂_{α*} P = P (z−α)/τ, then ∂_α of that
            let mixed = p * (d * d.conj()).re / (tau * tau) - p / tau;
            worst = worst.max((dt - mixed).abs());
        }
    }
    Ok(worst)
}

/// Residuals at step `h` and `h/2` and their ratio (≈ 4 for a second-order
/// stencil).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeConvergence {
    pub residual: f64,
    pub residual_half_step: f64,
    pub ratio: f64,
    /// `residual / h²`.
    pub constant: f64,
}

pub fn diffusion_pde_convergence(z: Complex64, tau_list: &[f64], grid: &ComplexGrid, h: f64) -> Result<PdeConvergence> {
    let residual = diffusion_pde_residual(z, tau_list, grid, h)?;
    let residual_half_step = diffusion_pde_residual(z, tau_list, grid, 0.5 * h)?;
    Ok(PdeConvergence {
        residual,
        residual_half_step,
        ratio: residual / residual_half_step,
        constant: residual / (h * h),
    })
}

/// Residuals of the coherent-projector derivative identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderIdentityResiduals {
    /// `a†|α⟩⟨α| − (α* + ∂/∂α)|α⟩⟨α|`
    pub creation_left: f64,
    /// `|α⟩⟨α|a − (α + ∂/∂α*)|α⟩⟨α|`
    pub annihilation_right: f64,
    /// `(a†a·ρ − a†·ρ·a − a·ρ·a† + ρ·aa†)` at ρ = |α⟩⟨α| against
    /// `−∂²/∂α∂α* |α⟩⟨α|`.
    pub lindblad_combination: f64,
}

impl LadderIdentityResiduals {
    pub fn max(&self) -> f64 {
        self.creation_left.max(self.annihilation_right).max(self.lindblad_combination)
    }
}

/// `e^{−a₁a₂} e^{a₁a†}|0⟩⟨0|e^{a₂a}` with `a₁ = α` and `a₂ = α*` treated as
/// independent variables.
fn analytic_projector(a1: Complex64, a2: Complex64, dim: usize) -> CMatrix {
    let u = scaled_coherent(a1, dim);
    let v = scaled_coherent(a2, dim);
    (&u * v.transpose()) * (-a1 * a2).exp()
}

/// Finite-difference check of the coherent-projector derivative identities
/// at `α`, compared on the `dim × dim` block of a computation carried out at
/// `dim + 2` levels so that boundary terms of the ladder operators are exact.
pub fn coherent_derivative_identity_residual(alpha: Complex64, cutoff: FockCutoff, h: f64) -> Result<LadderIdentityResiduals> {
    if !(h > 0.0 && h <= 1e-4) {
        return Err(Error::InvalidParameter(format!("step h = {h} must lie in (0, 1e-4]")));
    }
    if alpha.norm() > 2.0 {
        return Err(Error::InvalidParameter(format!("|alpha| = {} exceeds 2", alpha.norm())));
    }
    let dim = cutoff.dim();
    let big = dim + 2;
    let a = annihilation_matrix(FockCutoff::new(big)?);
    let ad = a.adjoint();
    let (a1, a2) = (alpha, alpha.conj());
    let hc = Complex64::new(h, 0.0);
    let proj = analytic_projector(a1, a2, big);

    let d_a1 = (analytic_projector(a1 + hc, a2, big) - analytic_projector(a1 - hc, a2, big)) / (2.0 * hc);
    let d_a2 = (analytic_projector(a1, a2 + hc, big) - analytic_projector(a1, a2 - hc, big)) / (2.0 * hc);
    let d_mixed = (analytic_projector(a1 + hc, a2 + hc, big) - analytic_projector(a1 + hc, a2 - hc, big)
        - analytic_projector(a1 - hc, a2 + hc, big)
        + analytic_projector(a1 - hc, a2 - hc, big))
        / (4.0 * hc * hc);

    let block = |m: CMatrix| m.view((0, 0), (dim, dim)).into_owned();
    let creation = block(&ad * &proj - (&proj * a2 + &d_a1));
    let annihilation = block(&proj * &a - (&proj * a1 + &d_a2));
    let lindblad = &ad * &a * &proj - &ad * &proj * &a - &a * &proj * &ad + &proj * &a * &ad;
    let combination = block(lindblad + &d_mixed);

    let norm = |m: &CMatrix| m.iter().map(|c| c.norm()).fold(0.0, f64::max);
    Ok(LadderIdentityResiduals {
        creation_left: norm(&creation),
        annihilation_right: norm(&annihilation),
        lindblad_combination: norm(&combination),
    })
}
