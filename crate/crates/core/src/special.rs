//! Laguerre and two-variable Hermite polynomials, and the two complex
//! Gaussian integrals over the plane with measure `d²β/π`:
//!
//! ```text
//! ∫ β^n β*^m exp(ζ|β|² + ξβ + ηβ*)
//!     = e^{−ξη/ζ} Σ_k n! m! ξ^{m−k} η^{n−k} / (k! (n−k)! (m−k)! (−ζ)^{m+n−k+1})
//!
//! ∫ exp(ζ|z|² + ξz + ηz* + f z² + g z*²)
//!     = (ζ² − 4fg)^{−1/2} exp[(−ζξη + fη² + gξ²)/(ζ² − 4fg)]
//! ```
//!
//! Both closed forms are also used outside their convergence domain
//! (`Re ζ > 0`) as analytic continuations; callers must ask for that
//! explicitly with [`IntegralMode::AnalyticContinuation`].

use crate::{Complex64, Error, Result};

/// Largest polynomial degree accepted by [`laguerre`] and [`hermite2`].
pub const MAX_DEGREE: usize = 200;

/// Degrees up to this bound are summed with exact integer coefficients.
const EXACT_SUM_DEGREE: usize = 20;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn factorial_u128(n: usize) -> u128 {
    (1..=n as u128).product()
}

fn factorial_f64(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Laguerre polynomial `L_l(x) = Σ_k C(l, l−k) (−x)^k / k!`, evaluated by
/// the three-term recurrence.
///
/// The power sum is badly conditioned for real positive `x`: at `l = 20`,
/// `x = 5` its terms reach `2·10⁵` against a value near 2, which costs about
/// `3·10⁻¹⁰` in double precision. The recurrence does not cancel.
pub fn laguerre(l: usize, x: Complex64) -> Result<Complex64> {
    if l > MAX_DEGREE {
        return Err(Error::DegreeTooLarge {
            degree: l,
            max: MAX_DEGREE,
        });
    }
    let one = Complex64::new(1.0, 0.0);
    if l == 0 {
        return Ok(one);
    }
    let (mut prev, mut cur) = (one, one - x);
    for k in 1..l {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Power-series coefficients of `L_l`: entry `k` is `C(l,k) (−1)^k / k!`.
pub fn laguerre_coefficients(l: usize) -> Result<Vec<f64>> {
    if l > MAX_DEGREE {
        return Err(Error::DegreeTooLarge {
            degree: l,
            max: MAX_DEGREE,
        });
    }
    let mut out = Vec::with_capacity(l + 1);
    let mut c = 1.0;
    for k in 0..=l {
        out.push(c);
        // C(l,k+1)/(k+1)! = C(l,k)/k! · (l−k)/(k+1)²
        c *= -((l - k) as f64) / (((k + 1) * (k + 1)) as f64);
    }
    Ok(out)
}

/// Two-variable Hermite polynomial
/// `H_{m,n}(x,y) = Σ_l m! n! (−1)^l / (l! (m−l)! (n−l)!) x^{m−l} y^{n−l}`.
pub fn hermite2(m: usize, n: usize, x: Complex64, y: Complex64) -> Result<Complex64> {
    let degree = m.max(n);
    if degree > MAX_DEGREE {
        return Err(Error::DegreeTooLarge {
            degree,
            max: MAX_DEGREE,
        });
    }
    if degree <= EXACT_SUM_DEGREE {
        let mut acc = Complex64::new(0.0, 0.0);
        for l in 0..=m.min(n) {
            let coef = (binomial(m, l) * binomial(n, l) * factorial_u128(l)) as f64;
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            acc += x.powi((m - l) as i32) * y.powi((n - l) as i32) * (sign * coef);
        }
        return Ok(acc);
    }
    // H_{0,j} = y^j, H_{k+1,j} = x H_{k,j} − j H_{k,j−1}
    let mut row: Vec<Complex64> = (0..=n).map(|j| y.powi(j as i32)).collect();
    for _ in 0..m {
        let mut next = vec![Complex64::new(0.0, 0.0); n + 1];
        for j in 0..=n {
            next[j] = x * row[j];
            if j > 0 {
                next[j] -= row[j - 1] * j as f64;
            }
        }
        row = next;
    }
    Ok(row[n])
}

/// `|L_l(xy) − (−1)^l H_{l,l}(x,y) / l!|`.
pub fn laguerre_hermite_identity_residual(l: usize, x: Complex64, y: Complex64) -> Result<f64> {
    const MAX: usize = 50;
    if l > MAX {
        return Err(Error::DegreeTooLarge { degree: l, max: MAX });
    }
    let lhs = laguerre(l, x * y)?;
    let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
    let rhs = hermite2(l, l, x, y)? * (sign / factorial_f64(l));
    Ok((lhs - rhs).norm())
}

/// Whether a Gaussian closed form is used inside its convergence domain or
/// as an analytic continuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegralMode {
    Convergent,
    AnalyticContinuation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMomentParams {
    /// Power of β.
    pub n: usize,
    /// Power of β*.
    pub m: usize,
    pub zeta: Complex64,
    pub xi: Complex64,
    pub eta: Complex64,
}

/// `∫ d²β/π β^n β*^m exp(ζ|β|² + ξβ + ηβ*)`.
pub fn gaussian_moment_integral(p: &GaussianMomentParams, mode: IntegralMode) -> Result<Complex64> {
    if mode == IntegralMode::Convergent && p.zeta.re >= 0.0 {
        return Err(Error::DivergentWithoutContinuation);
    }
    let neg_zeta = -p.zeta;
    let mut sum = Complex64::new(0.0, 0.0);
    for k in 0..=p.n.min(p.m) {
        // n! m! / (k! (n−k)! (m−k)!) = C(n,k) C(m,k) k!
        let coef = binom_f64(p.n, k) * binom_f64(p.m, k) * factorial_f64(k);
        let term = p.xi.powi((p.m - k) as i32) * p.eta.powi((p.n - k) as i32)
            / neg_zeta.powi((p.m + p.n - k + 1) as i32);
        sum += term * coef;
    }
    Ok((-p.xi * p.eta / p.zeta).exp() * sum)
}

fn binom_f64(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianQuadraticParams {
    pub zeta: Complex64,
    pub xi: Complex64,
    pub eta: Complex64,
    /// Coefficient of z².
    pub f: Complex64,
    /// Coefficient of z*².
    pub g: Complex64,
}

impl GaussianQuadraticParams {
    /// Whether `Re(ζ|z|² + f z² + g z*²)` is negative definite in (Re z, Im z).
    pub fn is_convergent(&self) -> bool {
        let s = self.f + self.g;
        let a = self.zeta.re + s.re;
        let b = self.zeta.re - s.re;
        let c = self.g.im - self.f.im;
        a < 0.0 && a * b - c * c > 0.0
    }
}

const SINGULAR_DENOMINATOR: f64 = 1e-14;

/// Both continuation branches of the quadratic Gaussian integral:
/// `[principal, −principal]`, where "principal" takes the principal square
/// root of `ζ² − 4fg`.
pub fn gaussian_quadratic_integral_branches(p: &GaussianQuadraticParams) -> Result<[Complex64; 2]> {
    let denom = p.zeta * p.zeta - p.f * p.g * 4.0;
    if denom.norm() < SINGULAR_DENOMINATOR {
        return Err(Error::SingularDenominator { value: denom.norm() });
    }
    let exponent = (-p.zeta * p.xi * p.eta + p.f * p.eta * p.eta + p.g * p.xi * p.xi) / denom;
    let principal = exponent.exp() / denom.sqrt();
    Ok([principal, -principal])
}

/// `∫ d²z/π exp(ζ|z|² + ξz + ηz* + f z² + g z*²)` on the principal branch.
///
/// Inside the convergence domain the principal branch is the value of the
/// integral. Under continuation the overall sign is branch dependent; see
/// [`gaussian_quadratic_integral_branches`].
pub fn gaussian_quadratic_integral(p: &GaussianQuadraticParams, mode: IntegralMode) -> Result<Complex64> {
    if mode == IntegralMode::Convergent && !p.is_convergent() {
        return Err(Error::DivergentWithoutContinuation);
    }
    Ok(gaussian_quadratic_integral_branches(p)?[0])
}
