//! Zero-noise defect `q_0` by direct one-dimensional minimization over the
//! boundary hitting time `tau`.
//!
//! The infinite-dimensional action reduces to
//!
//! ```text
//! q_0(x,y,T) = min_{0 < tau < T}  g3(tau,T)/2 [ y + g1(tau,T) x + g2(tau,T) ]^2     (x > 0)
//! q_0(x,y,T) = -min_{tau > T}   |g3(tau,T)|/2 [ y + g1(tau,T) x + g2(tau,T) ]^2     (x < 0)
//! ```
//!
//! where on the negative branch the infimum may only be attained as
//! `tau -> ∞` (reported through `at_infinity`). The minimization is
//! global-by-grid followed by golden-section refinement, since the
//! functional need not be convex in `tau` for general drifts.

use crate::coeffs::{CoeffError, CoefficientTable};
use crate::numeric::golden_min;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VarError {
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error("hitting time tau = {tau} on the wrong side of T = {big_t} for x = {x}")]
    WrongBranch { tau: f64, big_t: f64, x: f64 },
    #[error("functional singular at tau = T = {0}")]
    SingularTau(f64),
    #[error("non-finite input")]
    NonFinite,
    #[error("characteristics fold at tau = {fold_at}; no classical inverse")]
    CharacteristicFold { fold_at: f64 },
    #[error("x = {x} outside the range reachable by characteristics ({lo}, {hi})")]
    OutsideRange { x: f64, lo: f64, hi: f64 },
    #[error("curvature denominator vanished along the characteristic (launch tau = {tau})")]
    CurvatureBlowup { tau: f64 },
    #[error("inversion failed to reach requested accuracy (residual {residual:.3e})")]
    NoConvergence { residual: f64 },
}

/// Which construction produced a [`VariationalSolution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    GridRefine,
    Characteristic,
}

/// Result of a `q_0` computation.
#[derive(Debug, Clone, Serialize)]
pub struct VariationalSolution {
    pub q0: f64,
    /// Minimizing hitting time; `+∞` when the negative branch attains its
    /// infimum only in the limit.
    pub tau_star: f64,
    pub x: f64,
    pub y: f64,
    pub big_t: f64,
    pub method: Method,
    /// All refined local minima `(tau, F0)` found on the probed branch.
    pub local_minima: Vec<(f64, f64)>,
    pub at_infinity: bool,
}

/// Knobs of the grid-plus-refine minimizer.
#[derive(Debug, Clone, Copy)]
pub struct MinimizeOpts {
    /// Grid density on the probed branch.
    pub grid_points: usize,
    /// Half-width of the logit grid `tau = T / (1 + e^u)`, `u ∈ [-span, span]`.
    pub u_span: f64,
    /// Negative branch cap: probe `tau ∈ (T, cap_factor * T]`.
    pub tau_cap_factor: f64,
    /// Golden-section bracket target `|Δtau| < refine_rel * T`.
    pub refine_rel: f64,
}

impl Default for MinimizeOpts {
    fn default() -> Self {
        Self {
            grid_points: 512,
            u_span: 30.0,
            tau_cap_factor: 1e6,
            refine_rel: 1e-10,
        }
    }
}

/// Reduced action at fixed hitting time: signed
/// `±|g3(tau,T)|/2 [y + g1 x + g2]^2` (positive branch `tau < T` for
/// `x > 0`, negative branch `tau > T` for `x < 0`).
pub fn f0(
    tbl: &CoefficientTable,
    x: f64,
    y: f64,
    tau: f64,
    big_t: f64,
) -> Result<f64, VarError> {
    if ![x, y, tau, big_t].iter().all(|v| v.is_finite()) {
        return Err(VarError::NonFinite);
    }
    if tau == big_t {
        return Err(VarError::SingularTau(tau));
    }
    if (x > 0.0 && tau > big_t) || (x < 0.0 && tau < big_t) {
        return Err(VarError::WrongBranch { tau, big_t, x });
    }
    f0_unchecked(tbl, x, y, tau, big_t)
}

/// `F0` without the branch guard; the signed `g3` makes the formula carry
/// the correct sign on both branches.
fn f0_unchecked(
    tbl: &CoefficientTable,
    x: f64,
    y: f64,
    tau: f64,
    big_t: f64,
) -> Result<f64, VarError> {
    let g1 = tbl.g1(tau, big_t)?;
    let g2 = tbl.g2(tau, big_t)?;
    let g3 = tbl.g3(tau, big_t)?;
    let bracket = y + g1 * x + g2;
    Ok(0.5 * g3 * bracket * bracket)
}

/// `F0` in the limit `tau -> ∞` on the negative branch, from the analytic
/// limits of the `g`-functions under the constant drift continuation.
pub(crate) fn f0_tail(
    tbl: &CoefficientTable,
    x: f64,
    y: f64,
    big_t: f64,
) -> Result<f64, VarError> {
    let e2_t = tbl.e2_ext(0.0);
    debug_assert_eq!(e2_t, 0.0);
    let e2_big_t = tbl.delta_e2(0.0, big_t);
    let m1_t = tbl.m1_ext(0.0, big_t);
    let a_end = tbl.a_ext(tbl.t_max() + 1.0);
    // Limits of E2 and E1/E2 as tau -> ∞ depend on the sign of the
    // continuation value of A.
    let (g1_inf, g3_inf, ratio_e1_e2) = if a_end > 0.0 {
        let e2_inf = tbl.e2_ext(f64::INFINITY.min(tbl.t_max()))
            + (-2.0 * tbl.i_ext(tbl.t_max())).exp() / (2.0 * a_end);
        let e1_inf = tbl.e1_ext(tbl.t_max())
            + (-tbl.offset_c()) * (-tbl.i_ext(tbl.t_max())).exp() / a_end;
        (
            e2_inf / (m1_t * (e2_big_t - e2_inf)),
            1.0 / e2_inf - 1.0 / e2_big_t,
            e1_inf / e2_inf,
        )
    } else if a_end == 0.0 {
        // E1, E2 both grow linearly: E1/E2 -> (-c) e^{I(t_max)}.
        (
            -1.0 / m1_t,
            -1.0 / e2_big_t,
            (-tbl.offset_c()) * tbl.i_ext(tbl.t_max()).exp(),
        )
    } else {
        // E2 outruns E1 exponentially: E1/E2 -> 0.
        (-1.0 / m1_t, -1.0 / e2_big_t, 0.0)
    };
    // g2 = g1 * (g2/g1) with (g2/g1)(∞) = m2(T) - m1(T) E2(T) * lim(E1/E2).
    let g2_over_g1 = tbl.m2_ext(0.0, big_t) - m1_t * e2_big_t * ratio_e1_e2;
    let bracket = y + g1_inf * (x + g2_over_g1);
    Ok(0.5 * g3_inf * bracket * bracket)
}

/// Global minimization of the reduced action over the branch matching the
/// sign of `x`. For `x = 0` the defect is identically zero.
pub fn minimize_q0(
    tbl: &CoefficientTable,
    x: f64,
    y: f64,
    big_t: f64,
    opts: &MinimizeOpts,
) -> Result<VariationalSolution, VarError> {
    if ![x, y, big_t].iter().all(|v| v.is_finite()) || y <= 0.0 || big_t <= 0.0 {
        return Err(VarError::NonFinite);
    }
    if x == 0.0 {
        return Ok(VariationalSolution {
            q0: 0.0,
            tau_star: big_t,
            x,
            y,
            big_t,
            method: Method::GridRefine,
            local_minima: Vec::new(),
            at_infinity: false,
        });
    }
    if x > 0.0 {
        minimize_positive(tbl, x, y, big_t, opts)
    } else {
        minimize_negative(tbl, x, y, big_t, opts)
    }
}

fn minimize_positive(
    tbl: &CoefficientTable,
    x: f64,
    y: f64,
    big_t: f64,
    opts: &MinimizeOpts,
) -> Result<VariationalSolution, VarError> {
    let n = opts.grid_points.max(8);
    // tau = T / (1 + e^u): ascending u sweeps tau from near T down to near 0;
    // the logit map resolves the singular endpoints where F0 diverges.
    let taus: Vec<f64> = (0..n)
        .map(|k| {
            let u = -opts.u_span + 2.0 * opts.u_span * k as f64 / (n - 1) as f64;
            big_t / (1.0 + u.exp())
        })
        .collect();
    let vals: Vec<f64> = taus
        .iter()
        .map(|&tau| f0_unchecked(tbl, x, y, tau, big_t))
        .collect::<Result<_, _>>()?;

    let mut minima: Vec<(f64, f64)> = Vec::new();
    for k in 0..n {
        let left_up = k == 0 || vals[k] <= vals[k - 1];
        let right_up = k == n - 1 || vals[k] <= vals[k + 1];
        if left_up && right_up {
            // taus descend with k, so the bracket is (tau[k+1], tau[k-1]).
            let lo = if k + 1 < n { taus[k + 1] } else { taus[k] };
            let hi = if k > 0 { taus[k - 1] } else { taus[k] };
            let f = |tau: f64| f0_unchecked(tbl, x, y, tau, big_t).unwrap_or(f64::INFINITY);
            let (tau_m, f_m) = golden_min(f, lo, hi, opts.refine_rel * big_t);
            minima.push((tau_m, f_m));
        }
    }
    finish_minimum(x, y, big_t, minima, None)
}

fn minimize_negative(
    tbl: &CoefficientTable,
    x: f64,
    y: f64,
    big_t: f64,
    opts: &MinimizeOpts,
) -> Result<VariationalSolution, VarError> {
    // Log grid in tau - T; capped before E1/E2 overflow when the drift
    // continuation is negative with c != 0.
    let a_end = tbl.a_ext(tbl.t_max() + 1.0);
    let mut cap = big_t * opts.tau_cap_factor;
    if a_end < 0.0 && tbl.offset_c() != 0.0 {
        cap = cap.min(tbl.t_max() + 300.0 / a_end.abs());
    }
    let n = opts.grid_points.max(8);
    let g_lo: f64 = 1e-8 * big_t;
    let g_hi = cap - big_t;
    let ratio = (g_hi / g_lo).powf(1.0 / (n - 1) as f64);
    let taus: Vec<f64> = (0..n)
        .map(|k| big_t + g_lo * ratio.powi(k as i32))
        .collect();
    let vals: Vec<f64> = taus
        .iter()
        .map(|&tau| f0_unchecked(tbl, x, y, tau, big_t).map(|v| -v))
        .collect::<Result<_, _>>()?; // minimize G = -F0 = |F0|

    let mut minima: Vec<(f64, f64)> = Vec::new();
    for k in 0..n {
        let left_up = k == 0 || vals[k] <= vals[k - 1];
        let right_up = k == n - 1 || vals[k] <= vals[k + 1];
        if left_up && right_up {
            let lo = if k > 0 { taus[k - 1] } else { taus[k] };
            let hi = if k + 1 < n { taus[k + 1] } else { taus[k] };
            let f = |tau: f64| {
                f0_unchecked(tbl, x, y, tau, big_t)
                    .map(|v| -v)
                    .unwrap_or(f64::INFINITY)
            };
            let (tau_m, g_m) = golden_min(f, lo, hi, opts.refine_rel * big_t);
            minima.push((tau_m, -g_m)); // store as F0
        }
    }
    let tail = f0_tail(tbl, x, y, big_t)?;
    finish_minimum(x, y, big_t, minima, Some(tail))
}

fn finish_minimum(
    x: f64,
    y: f64,
    big_t: f64,
    mut minima: Vec<(f64, f64)>,
    tail_f0: Option<f64>,
) -> Result<VariationalSolution, VarError> {
    // On the positive branch q0 = min F0; on the negative branch
    // q0 = -min |F0| = max F0, so compare magnitudes uniformly.
    let key = |f: f64| if x > 0.0 { f } else { -f };
    minima.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut best: Option<(f64, f64)> = None;
    for &(tau, f) in &minima {
        let better = match best {
            None => true,
            // ties within 1e-12 resolve to the smallest tau (list order)
            Some((_, fb)) => key(f) < key(fb) - 1e-12 * (1.0 + fb.abs()),
        };
        if better {
            best = Some((tau, f));
        }
    }
    let mut at_infinity = false;
    let mut sol = match best {
        Some((tau, f)) => (tau, f),
        None => (f64::INFINITY, f64::NEG_INFINITY),
    };
    if let Some(tail) = tail_f0 {
        let beats = match best {
            None => true,
            Some((_, fb)) => key(tail) < key(fb) - 1e-12 * (1.0 + fb.abs()),
        };
        if beats {
            at_infinity = true;
            sol = (f64::INFINITY, tail);
        }
    }
    if !sol.1.is_finite() {
        return Err(VarError::NoConvergence { residual: f64::NAN });
    }
    Ok(VariationalSolution {
        q0: sol.1,
        tau_star: sol.0,
        x,
        y,
        big_t,
        method: Method::GridRefine,
        local_minima: minima,
        at_infinity,
    })
}
