//! Shared helpers for the integration suites: an adaptive Simpson oracle
//! that is independent of the library's quadrature cache, and drift
//! constructors for the standard test panel.

use bridge_green::drift::{DriftKind, DriftModel};
use bridge_green::CoefficientTable;

/// Adaptive Simpson with Richardson acceptance; the independent quadrature
/// oracle used to freeze expected values.
#[allow(dead_code)]
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn simp<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
        let m = 0.5 * (a + b);
        (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
    }
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = simp(f, a, m);
        let right = simp(f, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            rec(f, a, m, left, tol / 2.0, depth - 1) + rec(f, m, b, right, tol / 2.0, depth - 1)
        }
    }
    rec(&f, a, b, simp(&f, a, b), tol, 32)
}

#[allow(dead_code)]
pub fn tbl_zero(t_max: f64) -> CoefficientTable {
    CoefficientTable::new(DriftModel::zero(t_max)).unwrap()
}

#[allow(dead_code)]
pub fn tbl_const(a: f64, t_max: f64) -> CoefficientTable {
    CoefficientTable::new(DriftModel::constant(a, t_max).unwrap()).unwrap()
}

#[allow(dead_code)]
pub fn tbl_ou(gamma: f64, t_max: f64) -> CoefficientTable {
    CoefficientTable::new(DriftModel::ornstein_uhlenbeck(gamma, t_max).unwrap()).unwrap()
}

#[allow(dead_code)]
pub fn tbl_ramp(t_max: f64) -> CoefficientTable {
    let m = DriftModel::new(
        DriftKind::PiecewiseLinear(vec![(0.0, 0.0), (t_max, t_max)]),
        -1.0,
        t_max,
        true,
    )
    .unwrap();
    CoefficientTable::new(m).unwrap()
}

#[allow(dead_code)]
pub fn tbl_sin2(t_max: f64) -> CoefficientTable {
    let n = 2048;
    let samples: Vec<(f64, f64)> = (0..=n)
        .map(|k| {
            let t = t_max * k as f64 / n as f64;
            (t, 1.0 + (std::f64::consts::PI * t).sin().powi(2))
        })
        .collect();
    let m = DriftModel::new(DriftKind::Tabulated(samples), -1.0, t_max, true).unwrap();
    CoefficientTable::new(m).unwrap()
}

/// The steep late-ramp drift whose characteristics fold.
#[allow(dead_code)]
pub fn tbl_late_ramp(amp: f64) -> CoefficientTable {
    let m = DriftModel::new(
        DriftKind::PiecewiseLinear(vec![(0.0, 0.0), (0.9, 0.0), (1.0, amp)]),
        -1.0,
        1.0,
        true,
    )
    .unwrap();
    CoefficientTable::with_resolution(m, 16384, 1e-8).unwrap()
}
