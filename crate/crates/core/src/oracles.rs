//! Closed-form reference solutions: the heat kernel, the whole-line
//! Gaussian Green's function, the Brownian-bridge Dirichlet ratio, the
//! Ornstein-Uhlenbeck kernel and defect, and the linear Hamilton-Jacobi
//! solution `q_linear`. These are the exact oracles the solvers are
//! checked against.

use crate::coeffs::{CoeffError, CoefficientTable};

/// Ornstein-Uhlenbeck parameters for `b(y) = -gamma y`.
///
/// The OU family is kept as its own parameterization because its offset is
/// `c = 0`; the general pipeline reproduces it with a constant drift
/// `A = -gamma` (see [`crate::drift::DriftModel::ornstein_uhlenbeck`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    pub gamma: f64,
    pub epsilon: f64,
}

impl OuParams {
    pub fn new(gamma: f64, epsilon: f64) -> Result<Self, CoeffError> {
        if !(gamma.is_finite() && gamma > 0.0 && epsilon.is_finite() && epsilon > 0.0) {
            return Err(CoeffError::InvalidDrift(format!(
                "OU parameters must be finite and positive (gamma={gamma}, eps={epsilon})"
            )));
        }
        Ok(Self { gamma, epsilon })
    }

    /// Mean factor `m(T) = exp(-gamma T)`.
    pub fn mean_factor(&self, big_t: f64) -> f64 {
        (-self.gamma * big_t).exp()
    }

    /// Variance factor `sigma2(T) = (1 - exp(-2 gamma T)) / (2 gamma)`.
    pub fn var_factor(&self, big_t: f64) -> f64 {
        -f64::exp_m1(-2.0 * self.gamma * big_t) / (2.0 * self.gamma)
    }
}

/// Gaussian density with mean 0 and variance `t`.
pub fn gaussian_kernel(x: f64, t: f64) -> Result<f64, CoeffError> {
    if !(t.is_finite() && t > 0.0) {
        return Err(CoeffError::SingularPoint { s: t });
    }
    Ok((-x * x / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).sqrt())
}

/// Whole-line Green's function `G_eps(x, y, 0, T)`: Gaussian in `x` with
/// mean `m1(T) y - m2(T)` and variance `eps * sigma2(T)`.
pub fn whole_line_green(
    tbl: &CoefficientTable,
    x: f64,
    y: f64,
    big_t: f64,
    eps: f64,
) -> Result<f64, CoeffError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(CoeffError::NonFinite);
    }
    let mean = tbl.m1(0.0, big_t)? * y - tbl.m2(0.0, big_t)?;
    gaussian_kernel(x - mean, eps * tbl.sigma2(0.0, big_t)?)
}

/// Dirichlet-to-whole-line ratio for the Brownian bridge:
/// `1 - exp(-2 x y / (eps T))`.
pub fn bb_dirichlet_ratio(x: f64, y: f64, big_t: f64, eps: f64) -> f64 {
    -f64::exp_m1(-2.0 * x * y / (eps * big_t))
}

/// Defect of the zero-drift case: `q = 2 x y / T`, independent of `eps`.
pub fn bb_q(x: f64, y: f64, big_t: f64) -> f64 {
    2.0 * x * y / big_t
}

/// OU defect `q(x, y, T) = a(T) x y` with `a(T) = 2 gamma / sinh(gamma T)`;
/// independent of `eps`.
pub fn ou_q(p: &OuParams, x: f64, y: f64, big_t: f64) -> f64 {
    2.0 * p.gamma / (p.gamma * big_t).sinh() * x * y
}

/// OU whole-line kernel: Gaussian with mean `exp(-gamma T) y` and variance
/// `eps (1 - exp(-2 gamma T)) / (2 gamma)`.
pub fn ou_green(p: &OuParams, x: f64, y: f64, big_t: f64) -> Result<f64, CoeffError> {
    gaussian_kernel(x - p.mean_factor(big_t) * y, p.epsilon * p.var_factor(big_t))
}

/// The linear solution of the Hamilton-Jacobi equation,
/// `q_linear(x,y,T) = (2 y / sigma2(T)) [ m1 m2 + c sigma2 + m1 x ]`,
/// which upper-bounds `q_eps` for non-negative `A`. Identical to
/// `[alpha1(0,T) x + beta1(0,T)] y`.
pub fn q_linear(tbl: &CoefficientTable, x: f64, y: f64, big_t: f64) -> Result<f64, CoeffError> {
    let m1 = tbl.m1(0.0, big_t)?;
    let m2 = tbl.m2(0.0, big_t)?;
    let sig2 = tbl.sigma2(0.0, big_t)?;
    if sig2 == 0.0 {
        return Err(CoeffError::SingularPoint { s: big_t });
    }
    Ok(2.0 * y / sig2 * (m1 * m2 + tbl.offset_c() * sig2 + m1 * x))
}
