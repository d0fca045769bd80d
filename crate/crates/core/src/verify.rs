//! Machine checks of every bound, identity, limit and convergence claim,
//! at desk scale, with margins reported per probed point.
//!
//! Margins are signed with *positive = satisfied with slack*; a check
//! passes when its worst margin stays above `-tol`. Inequalities whose
//! constants are existential are handled as two-part checks: the constant
//! is fitted from the data and reported, and where a scaling law pins the
//! residual (`1/x²` decay, `eps`-halving, `delta`-halving) the scaling is
//! asserted directly. Degenerate cases — drifts for which the inequality
//! is an identity and the residual is pure solver noise — are detected
//! with a noise floor and recorded as notes instead of spurious failures.

use crate::coeffs::{CoeffError, CoefficientTable};
use crate::drift::DriftModel;
use crate::mc::{estimate_survival, McConfig};
use crate::oracles;
use crate::pde::{delta_continuation, solve_qeps, PdeConfig, PdeError, PdeSolution};
use crate::variational::{minimize_q0, MinimizeOpts, VarError};
use crate::{characteristics, drift::DriftKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Var(#[from] VarError),
    #[error(transparent)]
    Mc(#[from] crate::mc::McError),
    #[error("check precondition: {0}")]
    Precondition(String),
}

/// Residual below which a margin is considered pure numerical noise (used
/// to mute scaling/monotonicity sub-checks on equality-case drifts).
pub const NOISE_FLOOR: f64 = 1e-4;

/// One recorded violation.
#[derive(Debug, Clone, Serialize)]
pub struct CheckFailure {
    pub point: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

/// Machine-readable outcome of one check.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub drift: String,
    pub n_points: usize,
    /// Most negative margin seen (positive = everything had slack).
    pub worst_margin: f64,
    pub failures: Vec<CheckFailure>,
    pub tolerance: f64,
    pub fitted: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub pass: bool,
    /// All `(point, margin)` pairs, for the margins CSV.
    pub margins: Vec<(String, f64)>,
}

impl BoundReport {
    fn new(name: &str, drift: &str, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            drift: drift.into(),
            n_points: 0,
            worst_margin: f64::INFINITY,
            failures: Vec::new(),
            tolerance,
            fitted: BTreeMap::new(),
            notes: Vec::new(),
            pass: false,
            margins: Vec::new(),
        }
    }

    /// Record the inequality `lhs <= rhs` with tolerance `tol`.
    fn require_le(&mut self, point: String, lhs: f64, rhs: f64, tol: f64) {
        let margin = rhs - lhs;
        self.n_points += 1;
        self.worst_margin = self.worst_margin.min(margin);
        self.margins.push((point.clone(), margin));
        if margin < -tol {
            self.failures.push(CheckFailure {
                point,
                lhs,
                rhs,
                margin,
            });
        }
    }

    fn fit(&mut self, key: &str, value: f64) {
        self.fitted.insert(key.into(), value);
    }

    fn note(&mut self, msg: String) {
        self.notes.push(msg);
    }

    fn finish(mut self) -> Self {
        if self.n_points == 0 {
            self.worst_margin = 0.0;
        }
        self.pass = self.failures.is_empty();
        self
    }
}

/// Resolution knobs for the verification PDE solves.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VerifySolver {
    pub nx: usize,
    pub nt: usize,
}

impl Default for VerifySolver {
    fn default() -> Self {
        Self { nx: 2400, nt: 16000 }
    }
}

/// One regularized solve recording all requested levels.
pub fn solve_levels(
    tbl: &CoefficientTable,
    y: f64,
    eps: f64,
    t_list: &[f64],
    solver: VerifySolver,
) -> Result<PdeSolution, VerifyError> {
    let t_end = t_list.iter().cloned().fold(f64::MIN, f64::max);
    let mut cfg = PdeConfig::auto(tbl, y, t_end, eps)?;
    cfg.nx = solver.nx;
    cfg.nt = solver.nt;
    cfg.delta = t_list.iter().cloned().fold(f64::MAX, f64::min) / 128.0;
    cfg.record_levels = t_list.to_vec();
    Ok(solve_qeps(tbl, y, t_end, eps, &cfg)?)
}

fn grid_slope(sol: &PdeSolution, row: &[f64], i: usize) -> f64 {
    let dx = sol.x_grid[1] - sol.x_grid[0];
    if i == 0 {
        (4.0 * row[1] - row[2] - 3.0 * row[0]) / (2.0 * dx)
    } else if i + 1 == row.len() {
        (3.0 * row[i] - 4.0 * row[i - 1] + row[i - 2]) / (2.0 * dx)
    } else {
        (row[i + 1] - row[i - 1]) / (2.0 * dx)
    }
}

fn nearest_index(xs: &[f64], x: f64) -> usize {
    let dx = xs[1] - xs[0];
    ((x / dx).round() as usize).clamp(1, xs.len() - 2)
}

// ---------------------------------------------------------------------
// Two-sided linear envelope, wedge, slope bracket, asymptote, concavity
// ---------------------------------------------------------------------

pub fn check_linear_envelope(
    tbl: &CoefficientTable,
    eps: f64,
    y: f64,
    t_list: &[f64],
    x_grid: &[f64],
    solver: VerifySolver,
) -> Result<BoundReport, VerifyError> {
    let sol = solve_levels(tbl, y, eps, t_list, solver)?;
    check_linear_envelope_with(tbl, &sol, eps, y, t_list, x_grid)
}

pub fn check_linear_envelope_with(
    tbl: &CoefficientTable,
    sol: &PdeSolution,
    eps: f64,
    y: f64,
    t_list: &[f64],
    x_grid: &[f64],
) -> Result<BoundReport, VerifyError> {
    if !tbl.drift().nonneg_certified() {
        return Err(VerifyError::Precondition(
            "envelope bounds require a drift certified non-negative".into(),
        ));
    }
    let mut rep = BoundReport::new("linear_envelope", &tbl.drift().label(), 1e-6);
    for &t in t_list {
        let row = sol.level_values(t)?;
        let bc = tbl.bounds(0.0, t)?;
        for &x in x_grid {
            let i = nearest_index(&sol.x_grid, x);
            let xg = sol.x_grid[i];
            let q = row[i];
            let tol = 1e-6 * q.abs().max(1.0);
            let tag = format!("y={y} eps={eps} T={t} x={xg:.4}");
            rep.require_le(format!("line.lower {tag}"), bc.alpha1 * xg * y, q, tol);
            rep.require_le(
                format!("line.upper {tag}"),
                q,
                (bc.alpha1 * xg + bc.beta1) * y,
                tol,
            );
            rep.require_le(
                format!("origin-wedge {tag}"),
                q,
                (bc.alpha1 * y + bc.beta2) * xg,
                tol,
            );
            let qx = grid_slope(sol, row, i);
            let tol_s = 1e-6 * (bc.alpha1 * y + bc.beta2).abs().max(1.0);
            rep.require_le(format!("slope.lower {tag}"), bc.alpha1 * y, qx, tol_s);
            rep.require_le(
                format!("slope.upper {tag}"),
                qx,
                bc.alpha1 * y + bc.beta2,
                tol_s,
            );
        }
        // (M1)/(P1): the gap to the asymptote line decreases toward the far field
        let l = *sol.x_grid.last().unwrap();
        let mut far: Vec<f64> = x_grid.to_vec();
        far.push(0.5 * l);
        far.push(0.75 * l);
        far.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let gap_at = |x: f64| -> Result<f64, VerifyError> {
            let i = nearest_index(&sol.x_grid, x);
            Ok((bc.alpha1 * sol.x_grid[i] + bc.beta1) * y - row[i])
        };
        let slope_gap_at = |x: f64| -> f64 {
            let i = nearest_index(&sol.x_grid, x);
            grid_slope(sol, row, i) - bc.alpha1 * y
        };
        for w in far.windows(2) {
            let g0 = gap_at(w[0])?;
            let g1 = gap_at(w[1])?;
            let tol = 1e-6 * g0.abs().max(1.0);
            rep.require_le(
                format!("gap-decrease y={y} eps={eps} T={t} x={:.3}->{:.3}", w[0], w[1]),
                g1,
                g0,
                tol,
            );
            let s0 = slope_gap_at(w[0]);
            let s1 = slope_gap_at(w[1]);
            rep.require_le(
                format!("slope-gap-decrease y={y} eps={eps} T={t} x={:.3}->{:.3}", w[0], w[1]),
                s1,
                s0,
                1e-5 * s0.abs().max(1.0),
            );
        }
        // (Q1): concavity across the entire stored row
        for i in 1..row.len() - 1 {
            let second = row[i + 1] - 2.0 * row[i] + row[i - 1];
            let tol = 1e-6 * row[i].abs().max(1.0);
            if second > tol {
                rep.require_le(
                    format!("concavity y={y} eps={eps} T={t} i={i}"),
                    second,
                    0.0,
                    tol,
                );
            }
        }
        rep.n_points += row.len() - 2;
    }
    Ok(rep.finish())
}

// ---------------------------------------------------------------------
// |q - alpha1 x y| <= C T y with a fitted, x-flat, T-stable constant
// ---------------------------------------------------------------------

pub fn check_origin_line_gap(
    tbl: &CoefficientTable,
    eps: f64,
    y: f64,
    t_list: &[f64],
    x_grid: &[f64],
    solver: VerifySolver,
) -> Result<BoundReport, VerifyError> {
    let sol = solve_levels(tbl, y, eps, t_list, solver)?;
    check_origin_line_gap_with(tbl, &sol, eps, y, t_list, x_grid)
}

pub fn check_origin_line_gap_with(
    tbl: &CoefficientTable,
    sol: &PdeSolution,
    eps: f64,
    y: f64,
    t_list: &[f64],
    x_grid: &[f64],
) -> Result<BoundReport, VerifyError> {
    let mut rep = BoundReport::new("origin_line_gap", &tbl.drift().label(), 1e-6);
    let l = *sol.x_grid.last().unwrap();
    let mut c_by_level: Vec<(f64, f64)> = Vec::new();
    for &t in t_list {
        let row = sol.level_values(t)?;
        let bc = tbl.bounds(0.0, t)?;
        let mut c_fit: f64 = 0.0;
        for &x in x_grid {
            let i = nearest_index(&sol.x_grid, x);
            let resid = (row[i] - bc.alpha1 * sol.x_grid[i] * y).abs();
            c_fit = c_fit.max(resid / (t * y));
        }
        // flatness of C(x) over the far field where the residual plateaus
        let far = [0.4 * l, 0.55 * l, 0.7 * l];
        let cs: Vec<f64> = far
            .iter()
            .map(|&x| {
                let i = nearest_index(&sol.x_grid, x);
                (row[i] - bc.alpha1 * sol.x_grid[i] * y).abs() / (t * y)
            })
            .collect();
        let c_hi = cs.iter().cloned().fold(f64::MIN, f64::max);
        let c_lo = cs.iter().cloned().fold(f64::MAX, f64::min);
        c_fit = c_fit.max(c_hi);
        if c_hi > NOISE_FLOOR {
            rep.require_le(
                format!("gap-flat-in-x y={y} eps={eps} T={t}"),
                (c_hi - c_lo) / c_hi,
                0.2,
                1e-9,
            );
        } else {
            rep.note(format!(
                "origin-line residual below noise floor at T={t}; equality-case drift"
            ));
        }
        rep.fit(&format!("C_fit[T={t}]"), c_fit);
        c_by_level.push((t, c_fit));
    }
    // stability across T-halving pairs
    c_by_level.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for pair in c_by_level.windows(2) {
        let (t0, c0) = pair[0];
        let (t1, c1) = pair[1];
        if (t1 - 2.0 * t0).abs() < 1e-9 && c0.max(c1) > NOISE_FLOOR {
            let ratio = c1.max(1e-300) / c0.max(1e-300);
            rep.require_le(format!("gap-T-stability {t0}->{t1} hi"), ratio, 3.0, 1e-9);
            rep.require_le(format!("gap-T-stability {t0}->{t1} lo"), 1.0 / 3.0, ratio, 1e-9);
        }
    }
    Ok(rep.finish())
}

// ---------------------------------------------------------------------
// Wedge bounds, slope bracket, and far-field excess fits for q_eps
// ---------------------------------------------------------------------

pub fn check_wedge_and_slope_bounds(
    tbl: &CoefficientTable,
    eps: f64,
    y: f64,
    t_list: &[f64],
    x_grid: &[f64],
    solver: VerifySolver,
    c_region: f64,
) -> Result<BoundReport, VerifyError> {
    let sol = solve_levels(tbl, y, eps, t_list, solver)?;
    check_wedge_and_slope_bounds_with(tbl, &sol, eps, y, t_list, x_grid, c_region)
}

/// `c_region` is the region constant (fitted upstream by the `q_0`
/// sandwich check) entering the `x >= max{2y, C T^2}` filters.
pub fn check_wedge_and_slope_bounds_with(
    tbl: &CoefficientTable,
    sol: &PdeSolution,
    eps: f64,
    y: f64,
    t_list: &[f64],
    x_grid: &[f64],
    c_region: f64,
) -> Result<BoundReport, VerifyError> {
    let mut rep = BoundReport::new("wedge_and_slope_bounds", &tbl.drift().label(), 1e-6);
    let l = *sol.x_grid.last().unwrap();
    for &t in t_list {
        let row = sol.level_values(t)?;
        let bc = tbl.bounds(0.0, t)?;
        let lam0 = tbl.lambda_drift(0.0, y, t)?;
        let mut c_linear_gap: f64 = 0.0;
        let mut c_origin_excess: f64 = 0.0;
        let mut c_slope_excess: f64 = 0.0;
        for &x in x_grid {
            let i = nearest_index(&sol.x_grid, x);
            let xg = sol.x_grid[i];
            let q = row[i];
            let tol = 1e-6 * q.abs().max(1.0);
            let tag = format!("y={y} eps={eps} T={t} x={xg:.4}");
            // two-sided envelope
            let q_lin = oracles::q_linear(tbl, xg, y, t)?;
            rep.require_le(format!("envelope.lower {tag}"), bc.alpha1 * xg * y, q, tol);
            rep.require_le(format!("envelope.upper {tag}"), q, q_lin, tol);
            // wedge through the origin with the boundary slope
            rep.require_le(format!("boundary-wedge {tag}"), q, -2.0 * lam0 * xg, tol);
            // slope bracket
            let qx = grid_slope(sol, row, i);
            let tol_s = 1e-6 * (bc.alpha1 * y + bc.beta2).abs().max(1.0);
            rep.require_le(format!("slope-bracket.lower {tag}"), bc.alpha1 * y, qx, tol_s);
            rep.require_le(format!("slope-bracket.upper {tag}"), qx, bc.alpha1 * y + bc.beta2, tol_s);
            // origin-line excess: q - alpha1 x y <= C T x, fit C
            if xg > 0.0 {
                c_origin_excess = c_origin_excess.max((q - bc.alpha1 * xg * y) / (t * xg));
            }
        }
        // Region-filtered far-field excess fits with the required scaling.
        let x_min = (2.0 * y).max(c_region * t * t);
        let region: Vec<f64> = (0..24)
            .map(|k| x_min * (1.0 + 0.25 * k as f64))
            .filter(|&x| x * y >= eps * t && x <= 0.85 * l)
            .collect();
        for &x in &region {
            let i = nearest_index(&sol.x_grid, x);
            let xg = sol.x_grid[i];
            let q = row[i];
            let q_lin = oracles::q_linear(tbl, xg, y, t)?;
            c_linear_gap = c_linear_gap.max((q_lin - q) * xg / (t * y * y));
            let qx = grid_slope(sol, row, i);
            c_slope_excess = c_slope_excess.max((qx - bc.alpha1 * y) * xg * xg / (t * y * y));
        }
        // Slope-excess scaling: x-doubling divides the residual by
        // ~2^p with p = 2 generically; drifts with A(0) = 0 have
        // g2(tau,tau) ~ tau^3 and decay one power faster. The probes must
        // sit deep in the tau << 1 regime (x >> sigma2(T) y / m1(T)); when
        // the truncated domain cannot reach it, the zero-noise route is
        // probed instead (the eps-part is subordinate on xy >= eps T).
        let a0 = tbl.a_ext(0.0);
        let expected = if a0 > 1e-9 { 4.0 } else { 8.0 };
        // the pure power law emerges only once the launch time tau(x) is
        // deep below the horizon: tau ~ sigma2(T) y / (m1(T) x) <= ~0.05
        let scale_tau = tbl.sigma2_ext(0.0, t) / tbl.m1_ext(0.0, t) * y;
        let x0 = x_min.max(20.0 * scale_tau);
        let measured = if 2.0 * x0 <= 0.85 * l {
            let probe = |x: f64| {
                let i = nearest_index(&sol.x_grid, x);
                grid_slope(sol, row, i) - bc.alpha1 * y
            };
            Some((probe(x0), probe(2.0 * x0), "pde"))
        } else {
            let char_res = |x: f64| -> Option<f64> {
                let st = characteristics::invert_characteristic(tbl, x, y, t).ok()?;
                Some(characteristics::dq0_dx(&st, t) - bc.alpha1 * y)
            };
            match (char_res(x0), char_res(2.0 * x0)) {
                (Some(a), Some(b)) => Some((a, b, "char")),
                _ => None,
            }
        };
        match measured {
            Some((r0, r1, route)) if r0 > NOISE_FLOOR * 0.1 => {
                let ratio = r0 / r1.max(1e-300);
                rep.fit(&format!("slope_excess_ratio[{route},T={t}]"), ratio);
                rep.require_le(
                    format!("slope-excess.x2-ratio hi y={y} eps={eps} T={t} ({route})"),
                    ratio,
                    1.25 * expected,
                    1e-9,
                );
                rep.require_le(
                    format!("slope-excess.x2-ratio lo y={y} eps={eps} T={t} ({route})"),
                    0.75 * expected,
                    ratio,
                    1e-9,
                );
            }
            Some(_) => rep.note(format!("slope-excess residual below noise floor at T={t}")),
            None => rep.note(format!("slope-excess scaling probe unreachable at T={t} (fold)")),
        }
        rep.fit(&format!("C_linear_gap[T={t}]"), c_linear_gap);
        rep.fit(&format!("C_origin_excess[T={t}]"), c_origin_excess);
        rep.fit(&format!("C_slope_excess[T={t}]"), c_slope_excess);
    }
    Ok(rep.finish())
}

// ---------------------------------------------------------------------
// q0 sandwiched between the origin line and the linear solution
// ---------------------------------------------------------------------

pub fn check_q0_sandwich(
    tbl: &CoefficientTable,
    y: f64,
    t_list: &[f64],
    x_grid: &[f64],
) -> Result<BoundReport, VerifyError> {
    let mut rep = BoundReport::new("q0_sandwich", &tbl.drift().label(), 1e-6);
    let opts = MinimizeOpts::default();
    let mut c_upper_global: f64 = 0.0;
    for &t in t_list {
        let bc = tbl.bounds(0.0, t)?;
        let mut c_upper: f64 = 0.0;
        let mut c_lower: f64 = 0.0;
        // (K4) holds for all x > 0; (J4) on x >= max{2y, T^2}.
        for &x in x_grid {
            let q0 = minimize_q0(tbl, x, y, t, &opts)?.q0;
            let tol = 1e-6 * q0.abs().max(1.0);
            let tag = format!("y={y} T={t} x={x:.4}");
            rep.require_le(format!("sandwich.lower {tag}"), bc.alpha1 * x * y, q0, tol);
            c_lower = c_lower.max((q0 - bc.alpha1 * x * y) / (t * x));
        }
        let x_min = (2.0 * y).max(t * t);
        for k in 0..8 {
            let x = x_min * (1.0 + 0.5 * k as f64);
            let q0 = minimize_q0(tbl, x, y, t, &opts)?.q0;
            let q_lin = oracles::q_linear(tbl, x, y, t)?;
            let tol = 1e-6 * q0.abs().max(1.0);
            rep.require_le(format!("sandwich.upper y={y} T={t} x={x:.3}"), q0, q_lin, tol);
            c_upper = c_upper.max((q_lin - q0) * x / (t * y * y));
        }
        rep.fit(&format!("C_upper_gap[T={t}]"), c_upper);
        rep.fit(&format!("C_lower_excess[T={t}]"), c_lower);
        c_upper_global = c_upper_global.max(c_upper);
    }
    rep.fit("C_sandwich", c_upper_global.max(1.0));
    Ok(rep.finish())
}

// ---------------------------------------------------------------------
// Derivative decay along characteristics
// ---------------------------------------------------------------------

pub fn check_q0_derivative_decay(
    tbl: &CoefficientTable,
    y: f64,
    t_list: &[f64],
    _x_grid: &[f64],
) -> Result<BoundReport, VerifyError> {
    let mut rep = BoundReport::new("q0_derivative_decay", &tbl.drift().label(), 1e-6);
    for &t in t_list {
        let bc = tbl.bounds(0.0, t)?;
        // start deep enough that the launch time tau(x) is already small
        let scale_tau = tbl.sigma2(0.0, t)? / tbl.m1(0.0, t)? * y;
        let x_min = (2.0 * (2.0 * y).max(t * t)).max(6.0 * scale_tau);
        let xs: Vec<f64> = (0..10).map(|k| x_min * 2f64.powf(k as f64 / 3.0)).collect();
        let mut c_slope: f64 = 0.0;
        let mut c_curv: f64 = 0.0;
        let mut logs: Vec<(f64, f64)> = Vec::new();
        for &x in &xs {
            let st = match characteristics::invert_characteristic(tbl, x, y, t) {
                Ok(st) => st,
                Err(VarError::CharacteristicFold { fold_at }) => {
                    rep.note(format!("fold at tau={fold_at} for x={x}, T={t}; skipped"));
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let slope = characteristics::dq0_dx(&st, t);
            let curv = characteristics::d2q0_dx2(&st, t)?;
            let tag = format!("y={y} T={t} x={x:.3}");
            let resid = slope - bc.alpha1 * y;
            let tol = 1e-6 * (bc.alpha1 * y).max(1.0);
            rep.require_le(format!("decay.slope-lower {tag}"), 0.0, resid, tol);
            rep.require_le(format!("decay.curv-upper {tag}"), curv, 0.0, tol);
            // global (BG4) versions
            rep.require_le(format!("global.slope {tag}"), resid, c_bg4(tbl, t)? * t, 1e-9);
            rep.require_le(format!("global.curv {tag}"), -c_bg4(tbl, t)? * t / y, curv, 1e-9);
            c_slope = c_slope.max(resid * x * x / (t * y * y));
            c_curv = c_curv.max(-curv * x * x * x / (t * y * y));
            if resid > 1e-13 {
                logs.push((x.ln(), resid.ln()));
            }
        }
        rep.fit(&format!("C_decay_slope[T={t}]"), c_slope);
        rep.fit(&format!("C_decay_curv[T={t}]"), c_curv);
        // log-log decay exponent of the slope residual: -2 generically,
        // -3 for drifts with A(0) = 0 (the leading g2(tau,tau) term
        // vanishes one order faster).
        let expected = if tbl.a_ext(0.0) > 1e-9 { -2.0 } else { -3.0 };
        if logs.len() >= 4 && logs.iter().any(|&(_, r)| r.exp() > NOISE_FLOOR * 1e-2) {
            let n = logs.len() as f64;
            let sx: f64 = logs.iter().map(|p| p.0).sum();
            let sy: f64 = logs.iter().map(|p| p.1).sum();
            let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
            let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
            let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
            rep.fit(&format!("loglog_exponent[T={t}]"), slope);
            rep.require_le(format!("decay.loglog hi T={t}"), slope, expected + 0.6, 1e-9);
            rep.require_le(format!("decay.loglog lo T={t}"), expected - 0.6, slope, 1e-9);
        } else {
            rep.note(format!("decay residual at noise floor for T={t}"));
        }
    }
    Ok(rep.finish())
}

/// A generous drift-dependent constant for the global (BG4) lines: the
/// inequality is existential, so the check uses the slope bound
/// `beta2(0,T)/T` scale plus 1.
fn c_bg4(tbl: &CoefficientTable, t: f64) -> Result<f64, VerifyError> {
    let bc = tbl.bounds(0.0, t)?;
    Ok(1.0 + bc.beta2 / t)
}

// ---------------------------------------------------------------------
// q_eps -> q0 along the eps-ladder
// ---------------------------------------------------------------------

pub fn check_convergence_eps(
    tbl: &CoefficientTable,
    x: f64,
    y: f64,
    big_t: f64,
    eps_ladder: &[f64],
    solver: VerifySolver,
) -> Result<BoundReport, VerifyError> {
    let mut rep = BoundReport::new("convergence_eps", &tbl.drift().label(), 1e-9);
    let q0 = minimize_q0(tbl, x, y, big_t, &MinimizeOpts::default())?.q0;
    let gaps: Vec<(f64, f64)> = eps_ladder
        .par_iter()
        .map(|&eps| -> Result<(f64, f64), VerifyError> {
            let sol = solve_levels(tbl, y, eps, &[big_t], solver)?;
            Ok((eps, (sol.query_q(x, big_t)? - q0).abs()))
        })
        .collect::<Result<_, _>>()?;
    let scale = q0.abs().max(1.0);
    let all_above = gaps.iter().all(|&(_, g)| g > NOISE_FLOOR * scale);
    if all_above {
        for w in gaps.windows(2) {
            let (e0, g0) = w[0];
            let (e1, g1) = w[1];
            rep.require_le(
                format!("gap decrease eps {e0}->{e1} (x={x},y={y},T={big_t})"),
                g1,
                g0,
                1e-9 * scale,
            );
        }
        let normalized: Vec<f64> = gaps
            .iter()
            .map(|&(e, g)| g / (e * e.ln().abs()))
            .collect();
        let hi = normalized.iter().cloned().fold(f64::MIN, f64::max);
        let lo = normalized.iter().cloned().fold(f64::MAX, f64::min);
        rep.fit("gap_over_eps_log_eps_max", hi);
        rep.fit("gap_over_eps_log_eps_min", lo);
        rep.require_le("rate spread".into(), hi / lo, 10.0, 1e-9);
    } else {
        // q_eps = q0 exactly for this drift: the measured gap is solver
        // noise. Assert only that it is small.
        for &(e, g) in &gaps {
            rep.require_le(
                format!("noise-floor gap eps={e}"),
                g,
                0.01 * scale,
                1e-9,
            );
        }
        rep.note("gaps below noise floor; eps-exact drift, monotonicity not applicable".into());
    }
    for &(e, g) in &gaps {
        rep.fit(&format!("gap[eps={e}]"), g);
    }
    Ok(rep.finish())
}

// ---------------------------------------------------------------------
// Boundary-derivative convergence in eps
// ---------------------------------------------------------------------

pub fn check_derivative_convergence(
    tbl: &CoefficientTable,
    y_list: &[f64],
    big_t: f64,
    eps_ladder: &[f64],
    solver: VerifySolver,
) -> Result<BoundReport, VerifyError> {
    let mut rep = BoundReport::new("derivative_convergence", &tbl.drift().label(), 1e-9);
    let mut deltas: Vec<(f64, f64, f64)> = Vec::new(); // (y, eps, Delta)
    let jobs: Vec<(f64, f64)> = y_list
        .iter()
        .flat_map(|&y| eps_ladder.iter().map(move |&e| (y, e)))
        .filter(|&(y, e)| y >= big_t * big_t && e * big_t <= y * y)
        .collect();
    if jobs.is_empty() {
        rep.note("no (y, eps) pair satisfies the regime filters".into());
        return Ok(rep.finish());
    }
    // The wall slope develops a boundary layer of width ~2 eps / q_x(0);
    // the grid must resolve it at the smallest eps, and the domain is held
    // fixed across the ladder so discretization bias cancels in ratios.
    let eps_min = eps_ladder.iter().cloned().fold(f64::MAX, f64::min);
    let eps_max = eps_ladder.iter().cloned().fold(f64::MIN, f64::max);
    let results: Vec<(f64, f64, f64)> = jobs
        .par_iter()
        .map(|&(y, eps)| -> Result<(f64, f64, f64), VerifyError> {
            let bc = tbl.bounds(0.0, big_t)?;
            let slope0 = bc.alpha1 * y + bc.beta2;
            let mut cfg = PdeConfig::auto(tbl, y, big_t, eps_max)?;
            let layer = 2.0 * eps_min / slope0;
            cfg.nx = ((cfg.domain_l / (layer / 5.0)).ceil() as usize)
                .clamp(solver.nx, 14_000);
            cfg.nt = solver.nt.min(8_000);
            let sol = solve_qeps(tbl, y, big_t, eps, &cfg)?;
            let delta = (sol.dqdx_at_zero(big_t)? - slope0).abs();
            Ok((y, eps, delta))
        })
        .collect::<Result<_, _>>()?;
    deltas.extend(results);

    for &y in y_list {
        let mut ladder: Vec<(f64, f64)> = deltas
            .iter()
            .filter(|&&(yy, _, _)| yy == y)
            .map(|&(_, e, d)| (e, d))
            .collect();
        ladder.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        for w in ladder.windows(2) {
            let (e0, d0) = w[0];
            let (e1, d1) = w[1];
            if (e0 - 2.0 * e1).abs() < 1e-12 && d0.max(d1) > NOISE_FLOOR * 1e-1 {
                let ratio = d0 / d1.max(1e-300);
                rep.fit(&format!("ratio[y={y},eps={e0}->{e1}]"), ratio);
                rep.require_le(format!("slope-halving hi y={y} eps={e0}->{e1}"), ratio, 2.4, 1e-9);
                rep.require_le(format!("slope-halving lo y={y} eps={e0}->{e1}"), 1.6, ratio, 1e-9);
            } else if d0.max(d1) <= NOISE_FLOOR * 1e-1 {
                rep.note(format!(
                    "Delta below noise floor for y={y}; slope is eps-exact here"
                ));
            }
        }
    }
    // decreasing in y at fixed eps
    for &eps in eps_ladder {
        let mut by_y: Vec<(f64, f64)> = deltas
            .iter()
            .filter(|&&(_, e, _)| e == eps)
            .map(|&(y, _, d)| (y, d))
            .collect();
        by_y.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in by_y.windows(2) {
            let (y0, d0) = w[0];
            let (y1, d1) = w[1];
            if d0.max(d1) > NOISE_FLOOR * 1e-1 {
                rep.require_le(
                    format!("y-monotone eps={eps} y {y0}->{y1}"),
                    d1,
                    d0,
                    1e-9,
                );
            }
        }
    }
    for &(y, e, d) in &deltas {
        rep.fit(&format!("Delta[y={y},eps={e}]"), d);
    }
    Ok(rep.finish())
}

// ---------------------------------------------------------------------
// Characteristics vs grid minimization
// ---------------------------------------------------------------------

pub fn check_char_vs_grid(
    tbl: &CoefficientTable,
    y: f64,
    big_t: f64,
) -> Result<BoundReport, VerifyError> {
    let mut rep = BoundReport::new("char_vs_grid", &tbl.drift().label(), 1e-8);
    let opts = MinimizeOpts::default();
    let mut folds = 0usize;
    let mut compare = |rep: &mut BoundReport, x: f64, region: &str| -> Result<(), VerifyError> {
        let grid = minimize_q0(tbl, x, y, big_t, &opts)?;
        match characteristics::invert_characteristic(tbl, x, y, big_t) {
            Ok(st) => {
                let ch = characteristics::q0_via_characteristics(tbl, x, y, big_t)?;
                let scale = grid.q0.abs().max(1.0);
                let diff = (ch.q0 - grid.q0).abs() / scale;
                if let (Some(fold), true) = (st.fold_at, diff > 1e-8) {
                    // folded landscape: the classical branch exists here but
                    // is no longer the minimizer; the grid value stands
                    folds += 1;
                    rep.note(format!(
                        "{region} x={x:.4}: folded landscape (fold at tau={fold:.4}), classical branch {:.6} vs min {:.6}; grid value used",
                        ch.q0,
                        grid.q0
                    ));
                } else {
                    rep.require_le(
                        format!("{region} x={x:.4} y={y} T={big_t}"),
                        diff,
                        1e-8,
                        0.0,
                    );
                }
            }
            Err(VarError::CharacteristicFold { fold_at }) => {
                folds += 1;
                rep.note(format!(
                    "{region} x={x:.4}: fold at tau={fold_at:.4}, fell back to grid q0={:.6}",
                    grid.q0
                ));
            }
            Err(VarError::OutsideRange { .. }) => {
                rep.note(format!("{region} x={x:.4}: beyond characteristic reach"));
            }
            Err(e) => return Err(e.into()),
        }
        Ok(())
    };
    // small-x region
    for k in 1..=6 {
        compare(&mut rep, 0.03 * k as f64 * y, "small-x")?;
    }
    // large-x region
    let m = (2.0 * y).max(big_t * big_t);
    for k in 0..5 {
        compare(&mut rep, 4.0 * m * 2f64.powi(k), "large-x")?;
    }
    // negative-x region, inside the characteristic reach
    for k in 1..=5 {
        compare(&mut rep, -0.12 * k as f64 * y, "negative-x")?;
    }
    if folds > 0 {
        rep.fit("folds", folds as f64);
    }
    Ok(rep.finish())
}

// ---------------------------------------------------------------------
// Cross-method triangle: PDE vs MC
// ---------------------------------------------------------------------

/// `points` are `(x, y, T)`; the diffusion strength per point is scaled
/// so the bridge-hit probability stays resolvable at the configured path
/// count (`eps = clamp(q_linear/6, 0.2, 1)` keeps `p >= e^-6`), since `q`
/// itself is what the two routes must agree on.
pub fn check_cross_method_triangle(
    tbl: &CoefficientTable,
    points: &[(f64, f64, f64)],
    solver: VerifySolver,
    mc: &McConfig,
) -> Result<BoundReport, VerifyError> {
    let mut rep = BoundReport::new("cross_method_triangle", &tbl.drift().label(), 0.0);
    let results: Vec<(f64, f64, f64, f64, f64, f64, f64)> = points
        .par_iter()
        .map(|&(x, y, t)| -> Result<_, VerifyError> {
            let eps = (oracles::q_linear(tbl, x, y, t)? / 6.0).clamp(0.2, 1.0);
            let mut cfg = PdeConfig::auto(tbl, y, t, eps)?;
            cfg.nx = solver.nx;
            cfg.nt = solver.nt;
            let (sol, ladder) = delta_continuation(tbl, y, t, eps, &cfg)?;
            let q_pde = sol.query_q(x, t)?;
            let est = estimate_survival(tbl, x, y, t, eps, mc)?;
            let pde_err = ladder.gap.max(1e-3);
            Ok((x, y, t, eps, q_pde, est.q_hat, est.q_stderr.hypot(pde_err)))
        })
        .collect::<Result<_, _>>()?;
    for (x, y, t, eps, q_pde, q_mc, err) in results {
        if !q_mc.is_finite() {
            rep.require_le(
                format!("triangle x={x} y={y} T={t} eps={eps} (no hits)"),
                f64::INFINITY,
                3.0 * err,
                0.0,
            );
            continue;
        }
        rep.require_le(
            format!("triangle x={x} y={y} T={t} eps={eps}"),
            (q_pde - q_mc).abs(),
            3.0 * err,
            0.0,
        );
    }
    Ok(rep.finish())
}

// ---------------------------------------------------------------------
// Panel runner
// ---------------------------------------------------------------------

/// Verification panel: drifts and parameter lists, plus solver resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyPanel {
    pub drifts: Vec<DriftModel>,
    pub y_list: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub t_list: Vec<f64>,
    pub x_grid: Vec<f64>,
    #[serde(default)]
    pub solver: Option<VerifySolver>,
    /// Monte Carlo paths for the triangle check (0 disables it).
    #[serde(default = "default_triangle_paths")]
    pub triangle_paths: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_triangle_paths() -> usize {
    30_000
}

impl VerifyPanel {
    /// The default panel: drifts `{0, 1, t, 1 + sin²(pi t)}` on horizon 2,
    /// `y ∈ {0.5, 1, 2}`, `eps ∈ {0.05, 0.2}`.
    pub fn default_panel() -> Self {
        let t0 = 2.0;
        let ramp = DriftModel::new(
            DriftKind::PiecewiseLinear(vec![(0.0, 0.0), (t0, t0)]),
            -1.0,
            t0,
            true,
        )
        .unwrap();
        let n = 512;
        let sin2: Vec<(f64, f64)> = (0..=n)
            .map(|k| {
                let t = t0 * k as f64 / n as f64;
                (t, 1.0 + (std::f64::consts::PI * t).sin().powi(2))
            })
            .collect();
        let sin2 = DriftModel::new(DriftKind::Tabulated(sin2), -1.0, t0, true).unwrap();
        Self {
            drifts: vec![
                DriftModel::zero(t0),
                DriftModel::constant(1.0, t0).unwrap(),
                ramp,
                sin2,
            ],
            y_list: vec![0.5, 1.0, 2.0],
            eps_list: vec![0.05, 0.2],
            t_list: vec![0.5, 1.0, 2.0],
            x_grid: vec![0.2, 0.35, 0.5, 0.75, 1.0, 1.4, 1.8, 2.2, 2.6, 3.0],
            solver: None,
            triangle_paths: default_triangle_paths(),
            seed: 1,
        }
    }
}

/// Aggregate outcome of a panel run.
#[derive(Debug, Serialize)]
pub struct VerifyOutcome {
    pub reports: Vec<BoundReport>,
    pub pass: bool,
}

impl VerifyOutcome {
    /// CSV dump of every recorded margin.
    pub fn margins_csv(&self) -> String {
        let mut out = String::from("check,drift,point,margin\n");
        for rep in &self.reports {
            for (point, margin) in &rep.margins {
                out.push_str(&format!(
                    "{},{},{},{margin:.6e}\n",
                    rep.name,
                    rep.drift,
                    point.replace(',', ";")
                ));
            }
        }
        out
    }
}

/// Run every check of the suite over the panel. Jobs are independent and
/// scheduled in parallel; the report order is deterministic.
pub fn run_panel(panel: &VerifyPanel) -> Result<VerifyOutcome, VerifyError> {
    let solver = panel.solver.unwrap_or_default();
    let eps_ladder = [0.4, 0.2, 0.1, 0.05, 0.025];

    enum Job {
        BoundsFor { d: usize, y: f64, eps: f64 },
        Sandwich { d: usize, y: f64 },
        Convergence { d: usize },
        DerivConv { d: usize },
        CharGrid { d: usize, y: f64 },
        Triangle { d: usize },
    }

    let tables: Vec<CoefficientTable> = panel
        .drifts
        .par_iter()
        .map(|d| CoefficientTable::new(d.clone()))
        .collect::<Result<_, _>>()?;

    let mut jobs: Vec<Job> = Vec::new();
    for (d, drift) in panel.drifts.iter().enumerate() {
        let nonneg = drift.nonneg_certified();
        for &y in &panel.y_list {
            if nonneg {
                for &eps in &panel.eps_list {
                    jobs.push(Job::BoundsFor { d, y, eps });
                }
                jobs.push(Job::Sandwich { d, y });
            }
            jobs.push(Job::CharGrid { d, y });
        }
        jobs.push(Job::Convergence { d });
        if nonneg {
            jobs.push(Job::DerivConv { d });
        }
        if panel.triangle_paths > 0 && matches!(drift.kind(), DriftKind::Constant(a) if *a > 0.0) {
            jobs.push(Job::Triangle { d });
        }
    }

    let reports: Vec<Vec<BoundReport>> = jobs
        .par_iter()
        .map(|job| -> Result<Vec<BoundReport>, VerifyError> {
            match *job {
                Job::BoundsFor { d, y, eps } => {
                    let tbl = &tables[d];
                    let sol = solve_levels(tbl, y, eps, &panel.t_list, solver)?;
                    let c41 = check_q0_sandwich(tbl, y, &panel.t_list, &panel.x_grid)?;
                    let c_region = c41.fitted.get("C_sandwich").copied().unwrap_or(1.0);
                    Ok(vec![
                        check_linear_envelope_with(tbl, &sol, eps, y, &panel.t_list, &panel.x_grid)?,
                        check_origin_line_gap_with(tbl, &sol, eps, y, &panel.t_list, &panel.x_grid)?,
                        check_wedge_and_slope_bounds_with(
                            tbl,
                            &sol,
                            eps,
                            y,
                            &panel.t_list,
                            &panel.x_grid,
                            c_region,
                        )?,
                    ])
                }
                Job::Sandwich { d, y } => {
                    let tbl = &tables[d];
                    Ok(vec![
                        check_q0_sandwich(tbl, y, &panel.t_list, &panel.x_grid)?,
                        check_q0_derivative_decay(tbl, y, &panel.t_list, &panel.x_grid)?,
                    ])
                }
                Job::Convergence { d } => Ok(vec![check_convergence_eps(
                    &tables[d],
                    1.0,
                    1.0,
                    1.0,
                    &eps_ladder,
                    solver,
                )?]),
                Job::DerivConv { d } => Ok(vec![check_derivative_convergence(
                    &tables[d],
                    &[1.0, 2.0, 4.0],
                    1.0,
                    &[0.2, 0.1, 0.05],
                    solver,
                )?]),
                Job::CharGrid { d, y } => Ok(vec![check_char_vs_grid(&tables[d], y, 1.0)?]),
                Job::Triangle { d } => {
                    let mc = McConfig {
                        n_paths: panel.triangle_paths,
                        n_steps: 128,
                        seed: panel.seed,
                        ..Default::default()
                    };
                    let pts: Vec<(f64, f64, f64)> = vec![
                        (0.5, 1.0, 1.0),
                        (1.0, 1.0, 1.0),
                        (1.5, 1.0, 1.0),
                        (1.0, 0.5, 1.0),
                        (1.0, 2.0, 1.0),
                        (0.5, 1.0, 0.5),
                        (1.0, 1.0, 0.5),
                        (1.0, 1.0, 2.0),
                        (2.0, 1.0, 2.0),
                        (0.7, 0.7, 1.0),
                        (1.2, 1.2, 1.0),
                        (0.8, 1.5, 1.5),
                    ];
                    Ok(vec![check_cross_method_triangle(
                        &tables[d], &pts, solver, &mc,
                    )?])
                }
            }
        })
        .collect::<Result<_, _>>()?;

    let mut reports: Vec<BoundReport> = reports.into_iter().flatten().collect();
    reports.sort_by_key(|r| (r.name.clone(), r.drift.clone()));
    let pass = reports.iter().all(|r| r.pass);
    Ok(VerifyOutcome { reports, pass })
}
