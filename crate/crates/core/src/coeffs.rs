//! Coefficient cache for the drift `b(y, t) = A(t) y + c`.
//!
//! Everything the theory builds from `A(.)` reduces to three cumulative
//! integrals on the horizon `[0, t_max]`:
//!
//! ```text
//! I(t)  = ∫_0^t A(s) ds
//! E1(t) = ∫_0^t (-c) exp(-I(s)) ds
//! E2(t) = ∫_0^t exp(-2 I(s)) ds
//! ```
//!
//! from which, for any `t <= T`,
//!
//! ```text
//! m1(t,T)     = exp(I(T) - I(t))
//! m2(t,T)     = exp(I(T)) * (E1(T) - E1(t))
//! sigma2(t,T) = exp(2 I(T)) * (E2(T) - E2(t))
//! ```
//!
//! The cumulatives are tabulated once by composite Simpson on a uniform
//! grid (Richardson-checked against a doubled grid) and interpolated with
//! piecewise-cubic Hermite polynomials whose endpoint slopes are the exact
//! integrands. Differences over short intervals are re-quadratured locally
//! so that `sigma2(t, T)` keeps full relative accuracy as `T -> t`.
//!
//! The `g`-functions only involve ratios of `E1`/`E2` differences, e.g.
//! `g3(s,T) = 1/E2(s) - 1/E2(T)`, so they extend verbatim to `s > T`
//! (the negative-`x` branch). Past `t_max` the drift is continued with the
//! constant value `A(t_max)`; that continuation is reserved for the
//! documented `tau > T` evaluation paths and the cumulatives there have
//! closed forms.

use crate::drift::{DriftModel, TIME_CLAMP_SLACK};
use crate::numeric::phi_exp;
use thiserror::Error;

/// Default number of grid intervals for the cumulative tables.
pub const DEFAULT_GRID: usize = 4096;

/// Default relative tolerance enforced by the Richardson self-check.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CoeffError {
    #[error("time {t} outside validity horizon [0, {t_max}]")]
    OutOfHorizon { t: f64, t_max: f64 },
    #[error("times out of order: need t <= T, got t = {t}, T = {big_t}")]
    TimeOrder { t: f64, big_t: f64 },
    #[error("coefficient function singular at s = {s}")]
    SingularPoint { s: f64 },
    #[error("invalid drift: {0}")]
    InvalidDrift(String),
    #[error("quadrature self-check failed: grid doubling moved values by {err:.3e} (tol {tol:.3e})")]
    QuadratureCheck { err: f64, tol: f64 },
    #[error("non-finite input")]
    NonFinite,
}

/// The concrete `alpha_1`, `beta_1`, `beta_2` constants of the linear
/// bounds on `q_eps`. With the generalized offset `c` these are
/// `alpha1 = 2 m1/sigma2`, `beta1 = 2[m1 m2/sigma2 + c]`,
/// `beta2 = 2[-c - m2/sigma2]`; at `c = -1` they reduce to the familiar
/// `2[m1 m2/sigma2 - 1]` and `2[1 - m2/sigma2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub alpha1: f64,
    pub beta1: f64,
    pub beta2: f64,
}

#[derive(Debug, Clone)]
struct CumTable {
    /// Node step.
    h: f64,
    /// Cumulative values at nodes (len n+1 each).
    i_cum: Vec<f64>,
    e1_cum: Vec<f64>,
    e2_cum: Vec<f64>,
    /// Exact node derivatives for Hermite interpolation.
    d_i: Vec<f64>,
    d_e1: Vec<f64>,
    d_e2: Vec<f64>,
}

/// Immutable cache of the drift cumulatives; all evaluation methods are
/// pure and safe to share across threads.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    drift: DriftModel,
    n_grid: usize,
    tol: f64,
    tab: CumTable,
    richardson_err: f64,
    /// Continuation data past `t_max`.
    a_end: f64,
    i_end: f64,
    e1_end: f64,
    e2_end: f64,
}

#[derive(Clone, Copy)]
enum Integrand {
    DriftA,
    E1,
    E2,
}

impl CoefficientTable {
    pub fn new(drift: DriftModel) -> Result<Self, CoeffError> {
        Self::with_resolution(drift, DEFAULT_GRID, DEFAULT_TOL)
    }

    pub fn with_resolution(drift: DriftModel, n_grid: usize, tol: f64) -> Result<Self, CoeffError> {
        if n_grid < 16 {
            return Err(CoeffError::InvalidDrift(
                "coefficient grid needs at least 16 intervals".into(),
            ));
        }
        let tab = build_table(&drift, n_grid);
        let check = build_table(&drift, 2 * n_grid);
        let richardson_err = compare_tables(&drift, &tab, &check);
        if richardson_err > tol {
            return Err(CoeffError::QuadratureCheck {
                err: richardson_err,
                tol,
            });
        }
        let n = n_grid;
        let table = Self {
            a_end: drift.a_end(),
            i_end: tab.i_cum[n],
            e1_end: tab.e1_cum[n],
            e2_end: tab.e2_cum[n],
            drift,
            n_grid,
            tol,
            tab,
            richardson_err,
        };
        Ok(table)
    }

    pub fn drift(&self) -> &DriftModel {
        &self.drift
    }

    pub fn t_max(&self) -> f64 {
        self.drift.t_max()
    }

    pub fn offset_c(&self) -> f64 {
        self.drift.offset_c()
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Maximum relative deviation observed in the grid-doubling self-check.
    pub fn richardson_error(&self) -> f64 {
        self.richardson_err
    }

    // ------------------------------------------------------------------
    // raw cumulative access (crate-internal; `t` may exceed t_max)
    // ------------------------------------------------------------------

    fn horizon_clamp(&self, t: f64) -> Result<f64, CoeffError> {
        if !t.is_finite() {
            return Err(CoeffError::NonFinite);
        }
        let t_max = self.t_max();
        if t < -TIME_CLAMP_SLACK || t > t_max + TIME_CLAMP_SLACK {
            return Err(CoeffError::OutOfHorizon { t, t_max });
        }
        Ok(t.clamp(0.0, t_max))
    }

    /// Drift coefficient with the constant continuation past the horizon.
    pub(crate) fn a_ext(&self, t: f64) -> f64 {
        if t > self.t_max() {
            self.a_end
        } else {
            self.drift.a_clamped(t)
        }
    }

    fn hermite(&self, vals: &[f64], ders: &[f64], t: f64) -> f64 {
        let h = self.tab.h;
        let j = locate_uniform(t, h, self.n_grid);
        let u = (t - j as f64 * h) / h;
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        vals[j] * h00 + h * ders[j] * h10 + vals[j + 1] * h01 + h * ders[j + 1] * h11
    }

    /// `I(t)`, extended past the horizon with the constant drift value.
    pub(crate) fn i_ext(&self, t: f64) -> f64 {
        let tm = self.t_max();
        if t >= tm {
            self.i_end + self.a_end * (t - tm)
        } else {
            self.hermite(&self.tab.i_cum, &self.tab.d_i, t.max(0.0))
        }
    }

    pub(crate) fn e1_ext(&self, t: f64) -> f64 {
        let tm = self.t_max();
        if t >= tm {
            let c = self.offset_c();
            self.e1_end + (-c) * (-self.i_end).exp() * phi_exp(self.a_end, t - tm)
        } else {
            self.hermite(&self.tab.e1_cum, &self.tab.d_e1, t.max(0.0))
        }
    }

    pub(crate) fn e2_ext(&self, t: f64) -> f64 {
        let tm = self.t_max();
        if t >= tm {
            self.e2_end + (-2.0 * self.i_end).exp() * phi_exp(2.0 * self.a_end, t - tm)
        } else {
            self.hermite(&self.tab.e2_cum, &self.tab.d_e2, t.max(0.0))
        }
    }

    fn integrand(&self, which: Integrand, t: f64) -> f64 {
        match which {
            Integrand::DriftA => self.a_ext(t),
            Integrand::E1 => -self.offset_c() * (-self.i_ext(t)).exp(),
            Integrand::E2 => (-2.0 * self.i_ext(t)).exp(),
        }
    }

    fn cumulative(&self, which: Integrand, t: f64) -> f64 {
        match which {
            Integrand::DriftA => self.i_ext(t),
            Integrand::E1 => self.e1_ext(t),
            Integrand::E2 => self.e2_ext(t),
        }
    }

    /// Signed `∫_a^b` of the chosen integrand, with a local re-quadrature
    /// for short intervals so the difference keeps full relative accuracy.
    fn delta(&self, which: Integrand, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        if b < a {
            return -self.delta(which, b, a);
        }
        let h = self.tab.h;
        let gap = b - a;
        let tm = self.t_max();
        // Tail segments have closed forms; split at the horizon.
        if b > tm {
            if a >= tm {
                return self.tail_integral(which, a, b);
            }
            return self.delta(which, a, tm) + self.tail_integral(which, tm, b);
        }
        if gap <= 8.0 * h {
            let n = ((2.0 * gap / h).ceil() as usize).clamp(2, 32);
            let step = gap / n as f64;
            let mut acc = 0.0;
            for k in 0..n {
                let x0 = a + k as f64 * step;
                let x1 = x0 + step;
                let xm = 0.5 * (x0 + x1);
                acc += (step / 6.0)
                    * (self.integrand(which, x0)
                        + 4.0 * self.integrand(which, xm)
                        + self.integrand(which, x1));
            }
            acc
        } else {
            self.cumulative(which, b) - self.cumulative(which, a)
        }
    }

    fn tail_integral(&self, which: Integrand, u: f64, v: f64) -> f64 {
        let tm = self.t_max();
        debug_assert!(u >= tm && v >= u);
        let a = self.a_end;
        match which {
            Integrand::DriftA => a * (v - u),
            Integrand::E1 => {
                let iu = self.i_end + a * (u - tm);
                -self.offset_c() * (-iu).exp() * phi_exp(a, v - u)
            }
            Integrand::E2 => {
                let iu = self.i_end + a * (u - tm);
                (-2.0 * iu).exp() * phi_exp(2.0 * a, v - u)
            }
        }
    }

    pub(crate) fn delta_i(&self, a: f64, b: f64) -> f64 {
        self.delta(Integrand::DriftA, a, b)
    }

    pub(crate) fn delta_e1(&self, a: f64, b: f64) -> f64 {
        self.delta(Integrand::E1, a, b)
    }

    pub(crate) fn delta_e2(&self, a: f64, b: f64) -> f64 {
        self.delta(Integrand::E2, a, b)
    }

    // ------------------------------------------------------------------
    // growth / drift-accumulation / variance coefficients
    // ------------------------------------------------------------------

    fn ordered_pair(&self, t: f64, big_t: f64) -> Result<(f64, f64), CoeffError> {
        let t = self.horizon_clamp(t)?;
        let big_t = self.horizon_clamp(big_t)?;
        if t > big_t {
            return Err(CoeffError::TimeOrder { t, big_t });
        }
        Ok((t, big_t))
    }

    /// `m1(t,T) = exp(∫_t^T A)`; `m1(t,t) = 1`.
    pub fn m1(&self, t: f64, big_t: f64) -> Result<f64, CoeffError> {
        let (t, big_t) = self.ordered_pair(t, big_t)?;
        Ok(self.delta_i(t, big_t).exp())
    }

    /// `m2(t,T) = ∫_t^T (-c) exp(∫_s^T A) ds`, the drift-accumulation integral.
    pub fn m2(&self, t: f64, big_t: f64) -> Result<f64, CoeffError> {
        let (t, big_t) = self.ordered_pair(t, big_t)?;
        Ok(self.i_ext(big_t).exp() * self.delta_e1(t, big_t))
    }

    /// `sigma2(t,T) = ∫_t^T exp(2 ∫_s^T A) ds`.
    pub fn sigma2(&self, t: f64, big_t: f64) -> Result<f64, CoeffError> {
        let (t, big_t) = self.ordered_pair(t, big_t)?;
        Ok((2.0 * self.i_ext(big_t)).exp() * self.delta_e2(t, big_t))
    }

    // extended (crate-internal) variants: any order, s may pass t_max
    pub(crate) fn m1_ext(&self, t: f64, big_t: f64) -> f64 {
        self.delta_i(t, big_t).exp()
    }

    pub(crate) fn m2_ext(&self, t: f64, big_t: f64) -> f64 {
        self.i_ext(big_t).exp() * self.delta_e1(t, big_t)
    }

    pub(crate) fn sigma2_ext(&self, t: f64, big_t: f64) -> f64 {
        (2.0 * self.i_ext(big_t)).exp() * self.delta_e2(t, big_t)
    }

    // ------------------------------------------------------------------
    // g-functions
    // ------------------------------------------------------------------

    fn g_domain(&self, s: f64, big_t: f64) -> Result<(f64, f64), CoeffError> {
        if !(s.is_finite() && big_t.is_finite()) {
            return Err(CoeffError::NonFinite);
        }
        let big_t = self.horizon_clamp(big_t)?;
        if s <= 0.0 {
            return Err(CoeffError::OutOfHorizon {
                t: s,
                t_max: self.t_max(),
            });
        }
        Ok((s, big_t))
    }

    /// `g1(s,T) = m1(s,T) sigma2(s) / (m1(s) sigma2(s,T))`; negative for
    /// `s > T`, singular at `s = T`.
    pub fn g1(&self, s: f64, big_t: f64) -> Result<f64, CoeffError> {
        let (s, big_t) = self.g_domain(s, big_t)?;
        let de2 = self.delta_e2(s, big_t);
        if de2 == 0.0 {
            return Err(CoeffError::SingularPoint { s });
        }
        Ok(self.delta_e2(0.0, s) / (self.m1_ext(0.0, big_t) * de2))
    }

    /// `g2(s,T)` in the cancellation-free form
    /// `[E2(T)·ΔE1(s,T) − E1(T)·ΔE2(s,T)] / ΔE2(s,T)`; at `s = T` the
    /// limit `g2(T,T) = [(-c) sigma2(T) - m2(T)] / m1(T)` is returned.
    pub fn g2(&self, s: f64, big_t: f64) -> Result<f64, CoeffError> {
        let (s, big_t) = self.g_domain(s, big_t)?;
        let de2 = self.delta_e2(s, big_t);
        if de2 == 0.0 {
            return self.g2_diag(big_t);
        }
        let e2_t = self.delta_e2(0.0, big_t);
        let e1_t = self.delta_e1(0.0, big_t);
        Ok((e2_t * self.delta_e1(s, big_t) - e1_t * de2) / de2)
    }

    /// Diagonal limit `g2(t,t) = [(-c) sigma2(t) - m2(t)] / m1(t)`.
    pub fn g2_diag(&self, t: f64) -> Result<f64, CoeffError> {
        if !t.is_finite() {
            return Err(CoeffError::NonFinite);
        }
        if t < -TIME_CLAMP_SLACK {
            return Err(CoeffError::OutOfHorizon {
                t,
                t_max: self.t_max(),
            });
        }
        let t = t.max(0.0);
        let c = self.offset_c();
        Ok((-c) * self.i_ext(t).exp() * self.e2_ext(t) - self.e1_ext(t))
    }

    /// `g3(s,T) = m1(s)^2 sigma2(s,T) / (sigma2(T) sigma2(s))`, equal to
    /// `1/E2(s) - 1/E2(T)`; negative for `s > T`.
    pub fn g3(&self, s: f64, big_t: f64) -> Result<f64, CoeffError> {
        let (s, big_t) = self.g_domain(s, big_t)?;
        Ok(self.delta_e2(s, big_t) / (self.delta_e2(0.0, big_t) * self.delta_e2(0.0, s)))
    }

    /// `∂g1/∂s = sigma2(T) m1(s,T)^2 / (m1(T) sigma2(s,T)^2)`.
    pub fn dg1_ds(&self, s: f64, big_t: f64) -> Result<f64, CoeffError> {
        let (s, big_t) = self.g_domain(s, big_t)?;
        let de2 = self.delta_e2(s, big_t);
        if de2 == 0.0 {
            return Err(CoeffError::SingularPoint { s });
        }
        let expo = (-self.i_ext(big_t) - 2.0 * self.i_ext(s)).exp();
        Ok(expo * self.delta_e2(0.0, big_t) / (de2 * de2))
    }

    /// `∂g2/∂s = sigma2(T) [m1(s,T) m2(s,T) - sigma2(s,T)] / (m1(s) sigma2(s,T)^2)`.
    pub fn dg2_ds(&self, s: f64, big_t: f64) -> Result<f64, CoeffError> {
        let (s, big_t) = self.g_domain(s, big_t)?;
        let de2 = self.delta_e2(s, big_t);
        if de2 == 0.0 {
            return Err(CoeffError::SingularPoint { s });
        }
        let i_s = self.i_ext(s);
        let bracket = (-i_s).exp() * self.delta_e1(s, big_t) - de2;
        Ok(self.delta_e2(0.0, big_t) * bracket / ((i_s).exp() * de2 * de2))
    }

    // ------------------------------------------------------------------
    // bridge quantities
    // ------------------------------------------------------------------

    /// Drift of the backward bridge SDE:
    /// `lambda(x,y,s) = [A(s) + 1/sigma2(s)] x + c + m2(s)/sigma2(s) - m1(s) y / sigma2(s)`.
    /// Singular at `s = 0`.
    pub fn lambda_drift(&self, x: f64, y: f64, s: f64) -> Result<f64, CoeffError> {
        let (slope, icpt) = self.lambda_coeffs(y, s)?;
        Ok(slope * x + icpt)
    }

    /// `(slope, intercept)` of `x -> lambda(x, y, s)`.
    pub(crate) fn lambda_coeffs(&self, y: f64, s: f64) -> Result<(f64, f64), CoeffError> {
        let s = self.horizon_clamp(s)?;
        if s <= 0.0 {
            return Err(CoeffError::SingularPoint { s });
        }
        let sig2 = self.sigma2_ext(0.0, s);
        let m1 = self.m1_ext(0.0, s);
        let m2 = self.m2_ext(0.0, s);
        let a = self.drift.a_clamped(s);
        Ok((
            a + 1.0 / sig2,
            self.offset_c() + m2 / sig2 - m1 * y / sig2,
        ))
    }

    /// Mean of the conditioned bridge at time `s` (pinned to `y` at 0 and
    /// `x` at `T`).
    pub fn y_class(&self, x: f64, y: f64, s: f64, big_t: f64) -> Result<f64, CoeffError> {
        let (s, big_t) = self.ordered_pair(s, big_t)?;
        let sig_t = self.sigma2_ext(0.0, big_t);
        let m1_st = self.m1_ext(s, big_t);
        let sig_s = self.sigma2_ext(0.0, s);
        let sig_st = self.sigma2_ext(s, big_t);
        let m1_s = self.m1_ext(0.0, s);
        let m2_st = self.m2_ext(s, big_t);
        let m2_s = self.m2_ext(0.0, s);
        Ok((x * m1_st * sig_s + y * m1_s * sig_st + m1_st * m2_st * sig_s - m2_s * sig_st) / sig_t)
    }

    /// `eps`-independent covariance factor of the conditioned bridge:
    /// `Gamma(s1,s2) = m1(s1,s2) sigma2(s1) sigma2(s2,T) / sigma2(T)` for
    /// `s1 <= s2`; symmetric, zero when either argument pins an endpoint.
    pub fn bridge_cov(&self, s1: f64, s2: f64, big_t: f64) -> Result<f64, CoeffError> {
        let big_t = self.horizon_clamp(big_t)?;
        let a = self.horizon_clamp(s1)?.min(big_t);
        let b = self.horizon_clamp(s2)?.min(big_t);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let sig_t = self.sigma2_ext(0.0, big_t);
        Ok(self.m1_ext(lo, hi) * self.sigma2_ext(0.0, lo) * self.sigma2_ext(hi, big_t) / sig_t)
    }

    /// The bound constants `alpha1`, `beta1`, `beta2` at `(t, T)`.
    pub fn bounds(&self, t: f64, big_t: f64) -> Result<BoundConstants, CoeffError> {
        let (t, big_t) = self.ordered_pair(t, big_t)?;
        if t == big_t {
            return Err(CoeffError::SingularPoint { s: t });
        }
        let c = self.offset_c();
        let m1 = self.m1_ext(t, big_t);
        let m2 = self.m2_ext(t, big_t);
        let sig2 = self.sigma2_ext(t, big_t);
        Ok(BoundConstants {
            alpha1: 2.0 * m1 / sig2,
            beta1: 2.0 * (m1 * m2 / sig2 + c),
            beta2: 2.0 * (-c - m2 / sig2),
        })
    }
}

fn locate_uniform(t: f64, h: f64, n: usize) -> usize {
    ((t / h) as usize).min(n - 1)
}

/// Cumulative Simpson construction. `I` is first accumulated on a 4x
/// refined grid so that the `E1`/`E2` integrands are exact at the Simpson
/// midpoints of the storage grid.
fn build_table(drift: &DriftModel, n: usize) -> CumTable {
    let t_max = drift.t_max();
    let h = t_max / n as f64;
    let c = drift.offset_c();

    // I on the quarter grid (step h/4), Simpson per quarter interval.
    let nq = 4 * n;
    let hq = h / 4.0;
    let mut i_q = vec![0.0; nq + 1];
    for j in 0..nq {
        let x0 = j as f64 * hq;
        let x1 = x0 + hq;
        let xm = 0.5 * (x0 + x1);
        i_q[j + 1] = i_q[j]
            + (hq / 6.0)
                * (drift.a_clamped(x0) + 4.0 * drift.a_clamped(xm) + drift.a_clamped(x1));
    }

    let e1_integrand = |iq: f64| -c * (-iq).exp();
    let e2_integrand = |iq: f64| (-2.0 * iq).exp();

    let mut i_cum = vec![0.0; n + 1];
    let mut e1_cum = vec![0.0; n + 1];
    let mut e2_cum = vec![0.0; n + 1];
    let mut d_i = vec![0.0; n + 1];
    let mut d_e1 = vec![0.0; n + 1];
    let mut d_e2 = vec![0.0; n + 1];
    for k in 0..=n {
        let iq = i_q[4 * k];
        i_cum[k] = iq;
        d_i[k] = drift.a_clamped(k as f64 * h);
        d_e1[k] = e1_integrand(iq);
        d_e2[k] = e2_integrand(iq);
    }
    for k in 0..n {
        let i0 = i_q[4 * k];
        let im = i_q[4 * k + 2];
        let i1 = i_q[4 * k + 4];
        e1_cum[k + 1] = e1_cum[k]
            + (h / 6.0) * (e1_integrand(i0) + 4.0 * e1_integrand(im) + e1_integrand(i1));
        e2_cum[k + 1] = e2_cum[k]
            + (h / 6.0) * (e2_integrand(i0) + 4.0 * e2_integrand(im) + e2_integrand(i1));
    }

    CumTable {
        h,
        i_cum,
        e1_cum,
        e2_cum,
        d_i,
        d_e1,
        d_e2,
    }
}

/// Max relative deviation of the three cumulatives between a table and its
/// grid-doubled refinement, probed at the coarse nodes.
fn compare_tables(drift: &DriftModel, coarse: &CumTable, fine: &CumTable) -> f64 {
    let n = coarse.i_cum.len() - 1;
    let scale_i = 1.0_f64.max(coarse.i_cum[n].abs());
    let scale_e1 = 1.0_f64.max(coarse.e1_cum[n].abs());
    let scale_e2 = coarse.e2_cum[n].max(drift.t_max() * f64::MIN_POSITIVE.sqrt());
    let mut worst: f64 = 0.0;
    for k in 0..=n {
        worst = worst
            .max((coarse.i_cum[k] - fine.i_cum[2 * k]).abs() / scale_i)
            .max((coarse.e1_cum[k] - fine.e1_cum[2 * k]).abs() / scale_e1)
            .max((coarse.e2_cum[k] - fine.e2_cum[2 * k]).abs() / scale_e2);
    }
    worst
}
