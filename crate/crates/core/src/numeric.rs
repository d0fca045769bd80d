//! Small numerical building blocks shared across the crate: composite
//! Simpson panels, golden-section refinement, a Thomas tridiagonal solve
//! and local polynomial interpolation.

/// Golden ratio minus one, the interior-point fraction of golden search.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Composite Simpson rule with `n` panels (integrand evaluated at panel
/// endpoints and midpoints, so `2n + 1` evaluations).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n.max(1);
    let h = (b - a) / n as f64;
    let mut acc = 0.0;
    for k in 0..n {
        let x0 = a + k as f64 * h;
        let x1 = x0 + h;
        let xm = 0.5 * (x0 + x1);
        acc += (h / 6.0) * (f(x0) + 4.0 * f(xm) + f(x1));
    }
    acc
}

/// Golden-section search for a local minimum of `f` on the bracket `[a, b]`.
/// Shrinks the bracket until its width is below `xtol` (floored at a few
/// ulps of the endpoints, so over-tight tolerances terminate), returning
/// the midpoint and the function value there.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, xtol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..256 {
        let floor = 4.0 * f64::EPSILON * (a.abs() + b.abs());
        if (b - a).abs() <= xtol.max(floor) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let xm = 0.5 * (a + b);
    (xm, f(xm))
}

/// Thomas algorithm for a tridiagonal system. `lower[0]` and
/// `upper[n-1]` are ignored. Diagonals are consumed as scratch.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &mut [f64],
    upper: &[f64],
    rhs: &mut [f64],
) -> Vec<f64> {
    let n = diag.len();
    assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    for i in 1..n {
        let w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    let mut x = vec![0.0; n];
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (rhs[i] - upper[i] * x[i + 1]) / diag[i];
    }
    x
}

/// Cubic (4-point Lagrange) interpolation on a uniform grid.
/// `xs` must be uniform ascending; near the ends the stencil is shifted.
pub fn interp_cubic(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    assert!(n >= 2 && ys.len() == n);
    if n < 4 {
        // fall back to linear
        let j = locate(xs, x);
        let t = (x - xs[j]) / (xs[j + 1] - xs[j]);
        return ys[j] * (1.0 - t) + ys[j + 1] * t;
    }
    let j = locate(xs, x);
    let i0 = j.saturating_sub(1).min(n - 4);
    let (x0, x1, x2, x3) = (xs[i0], xs[i0 + 1], xs[i0 + 2], xs[i0 + 3]);
    let l0 = ((x - x1) * (x - x2) * (x - x3)) / ((x0 - x1) * (x0 - x2) * (x0 - x3));
    let l1 = ((x - x0) * (x - x2) * (x - x3)) / ((x1 - x0) * (x1 - x2) * (x1 - x3));
    let l2 = ((x - x0) * (x - x1) * (x - x3)) / ((x2 - x0) * (x2 - x1) * (x2 - x3));
    let l3 = ((x - x0) * (x - x1) * (x - x2)) / ((x3 - x0) * (x3 - x1) * (x3 - x2));
    ys[i0] * l0 + ys[i0 + 1] * l1 + ys[i0 + 2] * l2 + ys[i0 + 3] * l3
}

/// Index `j` with `xs[j] <= x < xs[j+1]` (clamped to the valid range).
pub fn locate(xs: &[f64], x: f64) -> usize {
    let n = xs.len();
    if x <= xs[0] {
        return 0;
    }
    if x >= xs[n - 1] {
        return n - 2;
    }
    let mut lo = 0usize;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if xs[mid] <= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Chebyshev nodes mapped to `[a, b]`, ascending.
pub fn chebyshev_nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let theta = std::f64::consts::PI * (2.0 * k as f64 + 1.0) / (2.0 * n as f64);
        out.push(0.5 * (a + b) - 0.5 * (b - a) * theta.cos());
    }
    out.reverse();
    out
}

/// `(1 - exp(-a u)) / a`, the exponential-decay accumulation factor,
/// continuous through `a = 0` where it equals `u`.
pub fn phi_exp(a: f64, u: f64) -> f64 {
    if a.abs() * u.abs() < 1e-12 {
        u * (1.0 - 0.5 * a * u)
    } else {
        -f64::exp_m1(-a * u) / a
    }
}
