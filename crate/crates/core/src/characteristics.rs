//! `q_0` by the method of characteristics.
//!
//! A characteristic is launched from the boundary `x = 0` at time `tau`;
//! along it the position, the momentum `p = ∂q_0/∂x` and the curvature
//! `∂²q_0/∂x²` all have closed forms in the drift cumulatives. Inverting
//! `tau -> x(tau, T)` at a target `(x, T)` recovers the classical solution,
//! its exact first two x-derivatives, and — where neighboring
//! characteristics cross (`D_tau x = 0`) — a fold diagnostic that callers
//! use to fall back to direct minimization.
//!
//! The launch time runs backwards for `x < 0` (`tau > T`), covering the
//! negative half line up to the characteristic reach.

use crate::coeffs::CoefficientTable;
use crate::variational::{Method, VarError, VariationalSolution};

/// State of one launched characteristic; all evaluators are closed-form.
#[derive(Debug, Clone, Copy)]
pub struct CharacteristicState<'a> {
    tbl: &'a CoefficientTable,
    /// Launch time (`x(tau, tau) = 0`).
    pub tau: f64,
    /// Bridge start value the family is conditioned on.
    pub y: f64,
    /// Cached `g2(tau, tau)`.
    pub g2_tt: f64,
    /// Curvature strength `K(tau)`.
    pub kappa: f64,
    /// Where the first variation `D_tau x(., T)` vanished, if anywhere.
    pub fold_at: Option<f64>,
    e2_tau: f64,
    i_tau: f64,
}

impl<'a> CharacteristicState<'a> {
    /// Launch a characteristic at `tau` (which may exceed `t_max` on the
    /// negative branch).
    pub fn launch(tbl: &'a CoefficientTable, y: f64, tau: f64) -> Result<Self, VarError> {
        if !(tau.is_finite() && tau > 0.0 && y.is_finite() && y > 0.0) {
            return Err(VarError::NonFinite);
        }
        let g2_tt = tbl.g2_diag(tau)?;
        let i_tau = tbl.i_ext(tau);
        let e2_tau = tbl.e2_ext(tau);
        let c = tbl.offset_c();
        let a_tau = tbl.a_ext(tau);
        // K(tau) = -2 c A(tau) sigma2(tau)^3 / (m1(tau)^3 [y + g2(tau,tau)])
        let kappa = -2.0 * c * a_tau * (3.0 * i_tau).exp() * e2_tau.powi(3) / (y + g2_tt);
        Ok(Self {
            tbl,
            tau,
            y,
            g2_tt,
            kappa,
            fold_at: None,
            e2_tau,
            i_tau,
        })
    }

    /// Position `x(tau, s)`, exact at the launch point (`x(tau, tau) = 0`).
    pub fn x_at(&self, s: f64) -> f64 {
        let tbl = self.tbl;
        let de2 = tbl.delta_e2(self.tau, s);
        let de1 = tbl.delta_e1(self.tau, s);
        let m1_s = tbl.i_ext(s).exp();
        m1_s * ((self.y + self.g2_tt) * de2 / self.e2_tau + self.i_tau.exp() * de2 - de1)
    }

    /// Momentum `p(tau, s) = ∂q_0/∂x` along the characteristic:
    /// `2 m1(s) [y + g2(tau,tau)] / sigma2(s)`.
    pub fn momentum(&self, s: f64) -> f64 {
        let tbl = self.tbl;
        2.0 * (-tbl.i_ext(s)).exp() * (self.y + self.g2_tt) / tbl.e2_ext(s)
    }

    /// Curvature `∂²q_0/∂x²` along the characteristic.
    pub fn curvature(&self, s: f64) -> Result<f64, VarError> {
        let tbl = self.tbl;
        let e2_s = tbl.e2_ext(s);
        let dg3 = tbl.delta_e2(self.tau, s) / (self.e2_tau * e2_s); // ∫ m1²/σ⁴
        let denom = 1.0 - self.kappa * dg3;
        if denom <= 1e-12 {
            return Err(VarError::CurvatureBlowup { tau: self.tau });
        }
        let m1_over_sig2_sq = (-2.0 * tbl.i_ext(s)).exp() / (e2_s * e2_s);
        Ok(-self.kappa * m1_over_sig2_sq / denom)
    }

    /// First variation `D_tau x(tau, s)` of the characteristic family;
    /// a zero signals a fold (neighboring characteristics crossing).
    pub fn dtau_x(&self, s: f64) -> f64 {
        let tbl = self.tbl;
        let c = tbl.offset_c();
        let a_tau = tbl.a_ext(self.tau);
        let e2_s = tbl.e2_ext(s);
        let dg3 = tbl.delta_e2(self.tau, s) / (self.e2_tau * e2_s);
        let lead = -(-2.0 * self.i_tau).exp() * (self.y + self.g2_tt) / (self.e2_tau * self.e2_tau);
        let drive = 2.0 * (-c) * a_tau * self.i_tau.exp() * self.e2_tau * dg3;
        tbl.i_ext(s).exp() * e2_s * (lead + drive)
    }
}

/// Find the launch time whose characteristic passes through `(x, T)`.
///
/// For `x > 0` the admissible launches are `tau < T`; the scan stops at the
/// first fold of `D_tau x(., T)` below `T` and reports it if `x` lies beyond
/// the folded reach. For `x < 0` the launches are `tau > T`, bounded by the
/// characteristic reach `x(∞, T)`.
pub fn invert_characteristic<'a>(
    tbl: &'a CoefficientTable,
    x: f64,
    y: f64,
    big_t: f64,
) -> Result<CharacteristicState<'a>, VarError> {
    if ![x, y, big_t].iter().all(|v| v.is_finite()) || y <= 0.0 || big_t <= 0.0 {
        return Err(VarError::NonFinite);
    }
    if x == 0.0 {
        return CharacteristicState::launch(tbl, y, big_t);
    }
    let f_tol = 1e-10 * x.abs().max(1.0);
    if x > 0.0 {
        // Scan tau downward from T on the logit grid used by the minimizer.
        let n = 512;
        let mut tau_lo = big_t * 1e-13;
        let mut fold_at = None;
        let mut prev_tau = big_t;
        for k in 0..n {
            let u = -30.0 + 60.0 * k as f64 / (n - 1) as f64;
            let tau = big_t / (1.0 + u.exp()); // descends from ~T to ~0
            let st = CharacteristicState::launch(tbl, y, tau)?;
            if st.dtau_x(big_t) >= 0.0 {
                // refine the sign change between tau and prev_tau
                let mut a = tau;
                let mut b = prev_tau;
                for _ in 0..100 {
                    let m = 0.5 * (a + b);
                    let st = CharacteristicState::launch(tbl, y, m)?;
                    if st.dtau_x(big_t) >= 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                fold_at = Some(0.5 * (a + b));
                tau_lo = b;
                break;
            }
            prev_tau = tau;
        }
        if let Some(fold) = fold_at {
            let reach = CharacteristicState::launch(tbl, y, tau_lo)?.x_at(big_t);
            if x >= reach {
                return Err(VarError::CharacteristicFold { fold_at: fold });
            }
        } else {
            let reach = CharacteristicState::launch(tbl, y, tau_lo)?.x_at(big_t);
            if x >= reach {
                return Err(VarError::OutsideRange {
                    x,
                    lo: 0.0,
                    hi: reach,
                });
            }
        }
        // x(tau, T) decreases in tau on (tau_lo, T): bisect.
        let mut a = tau_lo;
        let mut b = big_t;
        let mut best = (a, f64::INFINITY);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let st = CharacteristicState::launch(tbl, y, m)?;
            let resid = st.x_at(big_t) - x;
            if resid.abs() < best.1 {
                best = (m, resid.abs());
            }
            if resid.abs() < f_tol {
                let mut st = st;
                st.fold_at = fold_at;
                return Ok(st);
            }
            if resid > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        if best.1 < 1e-6 * x.abs().max(1.0) {
            let mut st = CharacteristicState::launch(tbl, y, best.0)?;
            st.fold_at = fold_at;
            return Ok(st);
        }
        Err(VarError::NoConvergence { residual: best.1 })
    } else {
        // tau > T: expand a bracket by doubling the gap; x(tau, T) decreases.
        let mut cap = big_t * 1e7;
        let a_end = tbl.a_ext(tbl.t_max() + 1.0);
        if a_end < 0.0 && tbl.offset_c() != 0.0 {
            cap = cap.min(tbl.t_max() + 300.0 / a_end.abs());
        }
        let mut gap = 1e-8 * big_t;
        let mut lo_tau = big_t;
        let mut hi_tau = None;
        while big_t + gap <= cap {
            let tau = big_t + gap;
            let st = CharacteristicState::launch(tbl, y, tau)?;
            if st.dtau_x(big_t) >= 0.0 {
                return Err(VarError::CharacteristicFold { fold_at: tau });
            }
            let xv = st.x_at(big_t);
            if xv <= x {
                hi_tau = Some(tau);
                break;
            }
            lo_tau = tau;
            gap *= 2.0;
        }
        let Some(hi) = hi_tau else {
            let reach = CharacteristicState::launch(tbl, y, cap)?.x_at(big_t);
            return Err(VarError::OutsideRange {
                x,
                lo: reach,
                hi: 0.0,
            });
        };
        let mut a = lo_tau;
        let mut b = hi;
        let mut best = (a, f64::INFINITY);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let st = CharacteristicState::launch(tbl, y, m)?;
            let resid = st.x_at(big_t) - x;
            if resid.abs() < best.1 {
                best = (m, resid.abs());
            }
            if resid.abs() < f_tol {
                return Ok(st);
            }
            if resid > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        if best.1 < 1e-6 * x.abs().max(1.0) {
            return CharacteristicState::launch(tbl, y, best.0);
        }
        Err(VarError::NoConvergence { residual: best.1 })
    }
}

/// `q_0` through the characteristic passing by `(x, T)`:
/// `g3(tau,T)/2 [y + g1 x + g2]²` with `tau` from the inversion. The signed
/// `g3` carries the negative branch automatically.
pub fn q0_via_characteristics(
    tbl: &CoefficientTable,
    x: f64,
    y: f64,
    big_t: f64,
) -> Result<VariationalSolution, VarError> {
    if x == 0.0 {
        return Ok(VariationalSolution {
            q0: 0.0,
            tau_star: big_t,
            x,
            y,
            big_t,
            method: Method::Characteristic,
            local_minima: Vec::new(),
            at_infinity: false,
        });
    }
    let st = invert_characteristic(tbl, x, y, big_t)?;
    let tau = st.tau;
    let g1 = tbl.g1(tau, big_t)?;
    let g2 = tbl.g2(tau, big_t)?;
    let g3 = tbl.g3(tau, big_t)?;
    let bracket = y + g1 * x + g2;
    Ok(VariationalSolution {
        q0: 0.5 * g3 * bracket * bracket,
        tau_star: tau,
        x,
        y,
        big_t,
        method: Method::Characteristic,
        local_minima: Vec::new(),
        at_infinity: false,
    })
}

/// `∂q_0/∂x` at `(x(tau,s), s)` — the momentum along the characteristic.
pub fn dq0_dx(state: &CharacteristicState, s: f64) -> f64 {
    state.momentum(s)
}

/// `∂²q_0/∂x²` at `(x(tau,s), s)`.
pub fn d2q0_dx2(state: &CharacteristicState, s: f64) -> Result<f64, VarError> {
    state.curvature(s)
}

/// Boundary slope `∂q_0/∂x|_{x=0} = 2 m1(T) [y + g2(T,T)] / sigma2(T)`,
/// identical to `alpha1(0,T) y + beta2(0,T)`.
pub fn dq0_dx_at_zero(tbl: &CoefficientTable, y: f64, big_t: f64) -> Result<f64, VarError> {
    let g2_tt = tbl.g2_diag(big_t)?;
    Ok(2.0 * (-tbl.i_ext(big_t)).exp() * (y + g2_tt) / tbl.e2_ext(big_t))
}

/// Boundary curvature
/// `∂²q_0/∂x²|_{x=0} = 2 c A(T) sigma2(T) / (m1(T) [y + g2(T,T)])`
/// (`= -2 A(T) sigma2(T)/(m1(T)[y+g2(T,T)])` at the standard offset).
pub fn d2q0_dx2_at_zero(tbl: &CoefficientTable, y: f64, big_t: f64) -> Result<f64, VarError> {
    let g2_tt = tbl.g2_diag(big_t)?;
    let a_t = tbl.a_ext(big_t);
    let sig2 = tbl.sigma2_ext(0.0, big_t);
    let m1 = tbl.m1_ext(0.0, big_t);
    Ok(2.0 * tbl.offset_c() * a_t * sig2 / (m1 * (y + g2_tt)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{DriftKind, DriftModel};
    use crate::variational::{minimize_q0, MinimizeOpts};

    fn tbl_zero() -> CoefficientTable {
        CoefficientTable::new(DriftModel::zero(4.0)).unwrap()
    }

    fn tbl_const(a: f64, t_max: f64) -> CoefficientTable {
        CoefficientTable::new(DriftModel::constant(a, t_max).unwrap()).unwrap()
    }

    /// Drift with a steep ramp supported just below the horizon; strong
    /// late growth makes neighboring characteristics cross. The steep
    /// integrands need a finer cumulative grid to pass the Richardson gate.
    fn tbl_fold() -> CoefficientTable {
        let m = DriftModel::new(
            DriftKind::PiecewiseLinear(vec![(0.0, 0.0), (0.9, 0.0), (1.0, 60.0)]),
            -1.0,
            1.0,
            true,
        )
        .unwrap();
        CoefficientTable::with_resolution(m, 16384, 1e-8).unwrap()
    }

    #[test]
    fn zero_drift_path_and_variation() {
        let t = tbl_zero();
        let st = CharacteristicState::launch(&t, 1.0, 0.5).unwrap();
        // x(tau, s) = (s/tau - 1) y
        assert!((st.x_at(1.0) - 1.0).abs() < 1e-11);
        assert!(st.x_at(0.5).abs() < 1e-10, "launch pin");
        // D_tau x = -y s / tau^2
        for &s in &[0.6, 1.0, 2.0] {
            assert!((st.dtau_x(s) + s / 0.25).abs() < 1e-9);
        }
        // momentum * sigma2/m1 is conserved: 2 [y + g2(tau,tau)]
        for &s in &[0.51, 0.8, 1.5] {
            let normalized = st.momentum(s) * t.sigma2(0.0, s).unwrap() / t.m1(0.0, s).unwrap();
            assert!((normalized - 2.0).abs() < 1e-10);
        }
        // no curvature when A ≡ 0
        assert!(st.curvature(1.0).unwrap().abs() < 1e-14);
    }

    #[test]
    fn zero_drift_inversion_never_folds() {
        let t = tbl_zero();
        for &(x, y, big_t) in &[(1.0, 1.0, 1.0), (5.0, 0.3, 2.0), (0.01, 2.0, 0.5)] {
            let st = invert_characteristic(&t, x, y, big_t).unwrap();
            let tau_expect = y * big_t / (x + y);
            assert!((st.tau - tau_expect).abs() < 1e-8, "tau {} vs {tau_expect}", st.tau);
            assert!(st.fold_at.is_none());
        }
    }

    #[test]
    fn characteristic_matches_rk4_integration_of_the_ode() {
        // Independent oracle: integrate dx/ds = [A + 1/sigma2] x
        //   + m1/sigma2 [y + 2 g2(tau,tau) - g2(s,s)] with RK4.
        let t = tbl_const(1.0, 2.0);
        let (y, tau) = (1.0, 0.5);
        let st = CharacteristicState::launch(&t, y, tau).unwrap();
        let rhs = |s: f64, x: f64| {
            let sig2 = t.sigma2(0.0, s).unwrap();
            let m1 = t.m1(0.0, s).unwrap();
            let g2ss = t.g2_diag(s).unwrap();
            (1.0 + 1.0 / sig2) * x + m1 / sig2 * (y + 2.0 * st.g2_tt - g2ss)
        };
        let mut x = 0.0;
        let mut s = tau;
        let n = 4000;
        let h = (1.0 - tau) / n as f64;
        for _ in 0..n {
            let k1 = rhs(s, x);
            let k2 = rhs(s + 0.5 * h, x + 0.5 * h * k1);
            let k3 = rhs(s + 0.5 * h, x + 0.5 * h * k2);
            let k4 = rhs(s + h, x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            s += h;
        }
        let closed = st.x_at(1.0);
        assert!((closed - x).abs() < 1e-8, "closed {closed} vs rk4 {x}");
    }

    #[test]
    fn q0_route_agreement_positive_and_negative_x() {
        let opts = MinimizeOpts::default();
        for t in [tbl_zero(), tbl_const(1.0, 2.0)] {
            for &(x, y, big_t) in &[
                (1.0, 1.0, 1.0),
                (0.05, 1.0, 0.5),
                (-0.5, 1.0, 1.0),
                (-0.1, 0.7, 1.3),
            ] {
                let via_char = q0_via_characteristics(&t, x, y, big_t).unwrap();
                let via_grid = minimize_q0(&t, x, y, big_t, &opts).unwrap();
                let scale = via_grid.q0.abs().max(1.0);
                assert!(
                    (via_char.q0 - via_grid.q0).abs() / scale < 1e-8,
                    "x={x}: char {} vs grid {}",
                    via_char.q0,
                    via_grid.q0
                );
            }
        }
    }

    #[test]
    fn zero_drift_negative_examples() {
        let t = tbl_zero();
        let sol = q0_via_characteristics(&t, -0.5, 1.0, 1.0).unwrap();
        assert!((sol.q0 + 1.0).abs() < 1e-9);
        // x <= -y is beyond the reach of the launched family
        let err = q0_via_characteristics(&t, -2.0, 1.0, 1.0);
        assert!(matches!(err, Err(VarError::OutsideRange { .. })));
    }

    #[test]
    fn derivatives_match_finite_differences_of_q0() {
        let t = tbl_const(1.0, 2.0);
        let (y, big_t) = (1.0, 1.0);
        for &x in &[0.2, 0.6, 1.0] {
            let st = invert_characteristic(&t, x, y, big_t).unwrap();
            let h = 1e-4 * x.abs().max(1.0);
            let qp = q0_via_characteristics(&t, x + h, y, big_t).unwrap().q0;
            let qm = q0_via_characteristics(&t, x - h, y, big_t).unwrap().q0;
            let q0 = q0_via_characteristics(&t, x, y, big_t).unwrap().q0;
            let fd1 = (qp - qm) / (2.0 * h);
            let an1 = dq0_dx(&st, big_t);
            assert!((fd1 - an1).abs() / an1.abs() < 1e-4, "slope at x={x}");
            let fd2 = (qp - 2.0 * q0 + qm) / (h * h);
            let an2 = d2q0_dx2(&st, big_t).unwrap();
            assert!(
                (fd2 - an2).abs() / an2.abs().max(1e-3) < 1e-3,
                "curvature at x={x}: fd {fd2} vs {an2}"
            );
            assert!(an2 <= 0.0, "concavity for A >= 0");
        }
    }

    #[test]
    fn boundary_derivatives() {
        let t = tbl_zero();
        assert!((dq0_dx_at_zero(&t, 1.0, 1.0).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(d2q0_dx2_at_zero(&t, 1.0, 1.0).unwrap(), 0.0);
        let t = tbl_const(1.0, 2.0);
        let (y, big_t) = (1.0, 1.0);
        // equals alpha1(0,T) y + beta2(0,T)
        let bc = t.bounds(0.0, big_t).unwrap();
        let slope = dq0_dx_at_zero(&t, y, big_t).unwrap();
        assert!((slope - (bc.alpha1 * y + bc.beta2)).abs() < 1e-11);
        // analytic curvature -2 A sigma2 / (m1 [y + g2(T,T)])
        let sig = t.sigma2(0.0, big_t).unwrap();
        let m1 = t.m1(0.0, big_t).unwrap();
        let g2tt = t.g2_diag(big_t).unwrap();
        let expect = -2.0 * sig / (m1 * (y + g2tt));
        let got = d2q0_dx2_at_zero(&t, y, big_t).unwrap();
        assert!((got - expect).abs() / expect.abs() < 1e-11);
        // consistency with the characteristic limit tau -> T
        let mut prev_gap = f64::INFINITY;
        for &dx in &[0.1, 0.05, 0.025] {
            let st = invert_characteristic(&t, dx, y, big_t).unwrap();
            let gap = (dq0_dx(&st, big_t) - slope).abs();
            assert!(gap < prev_gap);
            prev_gap = gap;
        }
    }

    #[test]
    fn late_ramp_drift_folds_and_fallback_agrees() {
        let t = tbl_fold();
        let y = 0.1;
        let big_t = 1.0;
        // some moderate x must report a fold
        let mut folded_at = None;
        for &x in &[0.2, 0.5, 1.0, 2.0, 4.0] {
            match q0_via_characteristics(&t, x, y, big_t) {
                Err(VarError::CharacteristicFold { fold_at }) => {
                    folded_at = Some((x, fold_at));
                    break;
                }
                Ok(_) => {}
                Err(e) => panic!("unexpected error at x={x}: {e}"),
            }
        }
        let (x, fold_at) = folded_at.expect("late-ramp drift should fold");
        assert!(fold_at > 0.85 && fold_at < 1.0, "fold at {fold_at}");
        // the grid minimizer still produces the value
        let sol = minimize_q0(&t, x, y, big_t, &MinimizeOpts::default()).unwrap();
        assert!(sol.q0.is_finite() && sol.q0 > 0.0);
    }

    #[test]
    fn nonpositive_curvature_on_grid_for_certified_drift() {
        let t = tbl_const(1.0, 2.0);
        for k in 1..20 {
            let x = 0.15 * k as f64;
            if let Ok(st) = invert_characteristic(&t, x, 1.0, 1.0) {
                assert!(d2q0_dx2(&st, 1.0).unwrap() <= 1e-14);
            }
        }
    }
}
