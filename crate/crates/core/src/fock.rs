//! Truncated Fock-space operator algebra.
//!
//! The basis is |0⟩..|dim−1⟩. Ladder operators are the usual finite
//! matrices, so the canonical commutator holds everywhere except on the last
//! diagonal entry. Normally ordered Gaussian exponentials
//! `:exp[λ a†a + μ a† + ν a + μ₂ a†² + ν₂ a²]:` are realized through the
//! factorization `e^{μa† + μ₂a†²} (1+λ)^{a†a} e^{νa + ν₂a²}`; because the
//! raising factor is lower triangular and the lowering factor upper
//! triangular, every retained matrix element equals the corresponding element
//! of the infinite-dimensional operator.

use crate::{CMatrix, CVector, Complex64, Error, Result};

/// Minimum retained probability for truncated state expansions.
pub const MIN_RETAINED_MASS: f64 = 0.999;

/// Number of Fock levels kept in the truncated basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FockCutoff(usize);

impl FockCutoff {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidCutoff { dim });
        }
        Ok(Self(dim))
    }

    #[inline]
    pub fn dim(self) -> usize {
        self.0
    }
}

/// `A` with `A[n−1, n] = √n`.
pub fn annihilation_matrix(cutoff: FockCutoff) -> CMatrix {
    let dim = cutoff.dim();
    CMatrix::from_fn(dim, dim, |i, j| {
        if j == i + 1 {
            Complex64::new((j as f64).sqrt(), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

pub fn creation_matrix(cutoff: FockCutoff) -> CMatrix {
    annihilation_matrix(cutoff).adjoint()
}

pub fn number_matrix(cutoff: FockCutoff) -> CMatrix {
    let dim = cutoff.dim();
    CMatrix::from_diagonal(&CVector::from_fn(dim, |n, _| Complex64::new(n as f64, 0.0)))
}

/// Pure input states supported by the closed-form routes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateSpec {
    Coherent { z: Complex64 },
    Number { l: usize },
    /// `sech λ · e^{½ a†² tanh λ}|0⟩⟨0|e^{½ a² tanh λ}` in projector form.
    SqueezedVacuum { lambda: f64 },
}

impl StateSpec {
    /// Exact (untruncated) mean photon number of the state.
    pub fn mean_photon_number(&self) -> f64 {
        match *self {
            StateSpec::Coherent { z } => z.norm_sqr(),
            StateSpec::Number { l } => l as f64,
            StateSpec::SqueezedVacuum { lambda } => lambda.sinh().powi(2),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            StateSpec::Coherent { z } => format!("coherent(z={}{:+}i)", z.re, z.im),
            StateSpec::Number { l } => format!("number(l={l})"),
            StateSpec::SqueezedVacuum { lambda } => format!("squeezed_vacuum(lambda={lambda})"),
        }
    }
}

/// Truncated coherent-state amplitudes `e^{−|z|²/2} zⁿ/√n!`, not renormalized.
pub fn coherent_coefficients(z: Complex64, dim: usize) -> CVector {
    let mut out = CVector::zeros(dim);
    let mut c = Complex64::new((-0.5 * z.norm_sqr()).exp(), 0.0);
    for n in 0..dim {
        out[n] = c;
        c = c * z / ((n + 1) as f64).sqrt();
    }
    out
}

/// Normalized truncated state vector.
pub fn state_vector(spec: &StateSpec, cutoff: FockCutoff) -> Result<CVector> {
    let dim = cutoff.dim();
    let raw = match *spec {
        StateSpec::Number { l } => {
            if l >= dim {
                return Err(Error::NumberExceedsCutoff { l, dim });
            }
            let mut v = CVector::zeros(dim);
            v[l] = Complex64::new(1.0, 0.0);
            return Ok(v);
        }
        StateSpec::Coherent { z } => coherent_coefficients(z, dim),
        StateSpec::SqueezedVacuum { lambda } => {
            let half_t = 0.5 * lambda.tanh();
            let mut v = CVector::zeros(dim);
            let mut a = (1.0 / lambda.cosh()).sqrt();
            let mut k = 0usize;
            while 2 * k < dim {
                v[2 * k] = Complex64::new(a, 0.0);
                k += 1;
                a *= half_t * (((2 * k) * (2 * k - 1)) as f64).sqrt() / k as f64;
            }
            v
        }
    };
    let norm_sq = raw.norm_squared();
    if norm_sq < MIN_RETAINED_MASS {
        return Err(Error::TruncationLoss {
            context: format!("state_vector {}", spec.label()),
            retained: norm_sq,
        });
    }
    Ok(raw.unscale(norm_sq.sqrt()))
}

/// Density matrix on a truncated Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    cutoff: FockCutoff,
    entries: CMatrix,
    label: String,
}

impl DensityMatrix {
    pub fn new(entries: CMatrix, label: impl Into<String>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                left: entries.nrows(),
                right: entries.ncols(),
            });
        }
        let cutoff = FockCutoff::new(entries.nrows())?;
        Ok(Self {
            cutoff,
            entries,
            label: label.into(),
        })
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.cutoff.dim()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    pub fn ensure_same_cutoff(&self, other: &DensityMatrix) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }
}

/// `|v⟩⟨v|` for a normalized vector.
pub fn density_from_vector(v: &CVector, label: impl Into<String>) -> Result<DensityMatrix> {
    let norm_sq = v.norm_squared();
    if (norm_sq - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized { norm_sq });
    }
    DensityMatrix::new(v * v.adjoint(), label)
}

/// Chaotic state `(1/(n̄+1)) (n̄/(n̄+1))^{a†a}` truncated at the cutoff.
pub fn thermal_state(mean_photon: f64, cutoff: FockCutoff) -> Result<DensityMatrix> {
    if !(mean_photon >= 0.0) || !mean_photon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "thermal mean photon number must be finite and >= 0, got {mean_photon}"
        )));
    }
    let ratio = mean_photon / (mean_photon + 1.0);
    let mut p = 1.0 / (mean_photon + 1.0);
    let mut diag = CVector::zeros(cutoff.dim());
    for n in 0..cutoff.dim() {
        diag[n] = Complex64::new(p, 0.0);
        p *= ratio;
    }
    DensityMatrix::new(
        CMatrix::from_diagonal(&diag),
        format!("thermal(nbar={mean_photon})"),
    )
}

/// Coefficients of a normally ordered Gaussian exponential
/// `:exp[lam a†a + mu a† + nu a + mu2 a†² + nu2 a²]:`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderedKernelParams {
    pub lam: Complex64,
    pub mu: Complex64,
    pub nu: Complex64,
    pub mu2: Complex64,
    pub nu2: Complex64,
}

impl OrderedKernelParams {
    pub fn linear(lam: Complex64, mu: Complex64, nu: Complex64) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self {
            lam,
            mu,
            nu,
            mu2: zero,
            nu2: zero,
        }
    }

    pub fn with_quadratic(mut self, mu2: Complex64, nu2: Complex64) -> Self {
        self.mu2 = mu2;
        self.nu2 = nu2;
        self
    }
}

/// `exp(c1 A† + c2 A†²)` by its finite Taylor series (the argument is
/// nilpotent at the cutoff, so `dim` terms are exact).
pub fn raising_exponential(c1: Complex64, c2: Complex64, dim: usize) -> CMatrix {
    let sqrt_n: Vec<f64> = (0..dim).map(|n| (n as f64).sqrt()).collect();
    let mut term = CMatrix::identity(dim, dim);
    let mut sum = term.clone();
    let mut next = CMatrix::zeros(dim, dim);
    for k in 1..dim {
        let inv_k = 1.0 / k as f64;
        let mut nonzero = false;
        for j in 0..dim {
            // X^k only reaches rows m >= j + k.
            for m in (j + k).min(dim)..dim {
                let mut acc = c1 * sqrt_n[m] * term[(m - 1, j)];
                if m >= 2 {
                    acc += c2 * (sqrt_n[m] * sqrt_n[m - 1]) * term[(m - 2, j)];
                }
                let v = acc * inv_k;
                next[(m, j)] = v;
                nonzero |= v != Complex64::new(0.0, 0.0);
            }
            for m in j..(j + k).min(dim) {
                next[(m, j)] = Complex64::new(0.0, 0.0);
            }
        }
        std::mem::swap(&mut term, &mut next);
        if !nonzero {
            break;
        }
        sum += &term;
    }
    sum
}

/// Matrix of `:exp[λ a†a + μ a† + ν a + μ₂ a†² + ν₂ a²]:` on the truncated basis.
///
/// The diagonal factor is `(1+λ)ⁿ`; at λ = −1 it degenerates to the vacuum
/// projector `|0⟩⟨0| = :e^{−a†a}:`.
pub fn ordered_gaussian_kernel(p: &OrderedKernelParams, cutoff: FockCutoff) -> CMatrix {
    let dim = cutoff.dim();
    let up = raising_exponential(p.mu, p.mu2, dim);
    // exp(νA + ν₂A²) is the transpose of exp(νA† + ν₂A†²) since A is real.
    let down = raising_exponential(p.nu, p.nu2, dim).transpose();
    let ratio = Complex64::new(1.0, 0.0) + p.lam;
    let mut diag = vec![Complex64::new(0.0, 0.0); dim];
    if ratio == Complex64::new(0.0, 0.0) {
        diag[0] = Complex64::new(1.0, 0.0);
    } else {
        let mut d = Complex64::new(1.0, 0.0);
        for x in diag.iter_mut() {
            *x = d;
            d *= ratio;
        }
    }
    triangular_sandwich(&up, &diag, &down)
}

/// `L · diag(d) · U` for lower-triangular `L` and upper-triangular `U`.
pub(crate) fn triangular_sandwich(lower: &CMatrix, d: &[Complex64], upper: &CMatrix) -> CMatrix {
    let dim = d.len();
    let mut out = CMatrix::zeros(dim, dim);
    let mut scaled = CMatrix::zeros(dim, dim);
    for k in 0..dim {
        for n in k..dim {
            scaled[(k, n)] = d[k] * upper[(k, n)];
        }
    }
    for n in 0..dim {
        for m in 0..dim {
            let kmax = m.min(n);
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..=kmax {
                acc += lower[(m, k)] * scaled[(k, n)];
            }
            out[(m, n)] = acc;
        }
    }
    out
}

/// Scalar diagnostics of a density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateMetrics {
    pub trace: f64,
    pub mean_photon: f64,
    pub purity: f64,
    pub hermiticity_residual: f64,
    pub min_eigenvalue: f64,
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn state_metrics(rho: &DensityMatrix) -> StateMetrics {
    let m = rho.entries();
    let dim = rho.dim();
    let trace = m.trace().re;
    let mean_photon = (0..dim).map(|n| n as f64 * m[(n, n)].re).sum();
    let purity = m.iter().map(|c| c.norm_sqr()).sum();
    let hermiticity_residual = m
        .iter()
        .zip(m.adjoint().iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let min_eigenvalue = hermitian_part(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    StateMetrics {
        trace,
        mean_photon,
        purity,
        hermiticity_residual,
        min_eigenvalue,
    }
}

/// `½ ‖ρ − σ‖₁` evaluated on the Hermitian part of the difference.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    rho.ensure_same_cutoff(sigma)?;
    let diff = hermitian_part(&(rho.entries() - sigma.entries()));
    Ok(0.5 * diff.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>())
}

/// Maximum absolute entry of a matrix difference.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// PSD tolerance for exact (closed-form, Kraus, ODE) routes.
pub fn psd_tolerance_exact(dim: usize) -> f64 {
    1e-9 * dim as f64
}

/// PSD tolerance for quadrature-based routes.
pub fn psd_tolerance_quadrature(dim: usize) -> f64 {
    1e-6 * dim as f64
}
