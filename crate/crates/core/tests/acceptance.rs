//! Acceptance suite: one test per release criterion, each printing a
//! `ACCEPTANCE <n> <name>: PASS` line (visible with `--nocapture`) and
//! failing loudly otherwise. The heavy bound/convergence panel is run once
//! and shared by the criteria that read from it.

mod common;

use bridge_green::mc::{estimate_survival, McConfig};
use bridge_green::oracles::{self, OuParams};
use bridge_green::pde::{solve_qeps, PdeConfig};
use bridge_green::variational::{minimize_q0, MinimizeOpts};
use bridge_green::verify::{self, VerifyOutcome, VerifyPanel};
use bridge_green::CoefficientTable;
use common::*;
use std::sync::OnceLock;
use std::time::Instant;

fn panel_outcome() -> &'static VerifyOutcome {
    static OUTCOME: OnceLock<VerifyOutcome> = OnceLock::new();
    OUTCOME.get_or_init(|| {
        let started = Instant::now();
        let outcome = verify::run_panel(&VerifyPanel::default_panel()).expect("panel runs");
        let secs = started.elapsed().as_secs_f64();
        println!("         (panel wall time {secs:.1} s)");
        assert!(
            secs < 900.0,
            "bound suite must finish within 15 minutes, took {secs:.0} s"
        );
        outcome
    })
}

fn reports_named<'a>(outcome: &'a VerifyOutcome, name: &str) -> Vec<&'a verify::BoundReport> {
    outcome.reports.iter().filter(|r| r.name == name).collect()
}

#[test]
fn acceptance_01_brownian_bridge_exactness() {
    let tbl = tbl_zero(2.0);
    let y = 1.0;
    let mut worst: f64 = 0.0;
    for &big_t in &[0.25, 0.5, 1.0, 2.0] {
        for &eps in &[0.05, 0.2] {
            let mut cfg = PdeConfig::auto(&tbl, y, big_t, eps).unwrap();
            cfg.nx = 2000;
            cfg.nt = 4000;
            let started = Instant::now();
            let sol = solve_qeps(&tbl, y, big_t, eps, &cfg).unwrap();
            let secs = started.elapsed().as_secs_f64();
            assert!(secs < 10.0, "solve took {secs:.2} s (limit 10 s)");
            for k in 0..=14 {
                let x = 0.2 + (3.0 - 0.2) * k as f64 / 14.0;
                let got = sol.query_q(x, big_t).unwrap();
                let expect = oracles::bb_q(x, y, big_t);
                let rel = (got - expect).abs() / expect;
                worst = worst.max(rel);
                assert!(
                    rel <= 0.01,
                    "T={big_t} eps={eps} x={x}: q={got} vs {expect} (rel {rel:.2e})"
                );
            }
        }
    }
    // refinement invariant: halving dx and dt cuts the error by >= 3x
    let (big_t, eps) = (1.0, 0.2);
    let err_at = |nx: usize, nt: usize| -> f64 {
        let mut cfg = PdeConfig::auto(&tbl, y, big_t, eps).unwrap();
        cfg.nx = nx;
        cfg.nt = nt;
        let sol = solve_qeps(&tbl, y, big_t, eps, &cfg).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..=10 {
            let x = 0.2 + 2.8 * k as f64 / 10.0;
            let e = (sol.query_q(x, big_t).unwrap() - oracles::bb_q(x, y, big_t)).abs()
                / oracles::bb_q(x, y, big_t);
            worst = worst.max(e);
        }
        worst
    };
    let coarse = err_at(1000, 2000);
    let fine = err_at(2000, 4000);
    assert!(
        coarse / fine >= 3.0,
        "refinement gain {:.2} (coarse {coarse:.2e}, fine {fine:.2e})",
        coarse / fine
    );
    println!(
        "ACCEPTANCE 1 brownian-bridge-exactness: PASS (worst rel err {worst:.2e}, refinement gain {:.1}x)",
        coarse / fine
    );
}

#[test]
fn acceptance_02_ou_closed_form() {
    // Join the heavy shared panel first: its long-running jobs occupy the
    // global rayon pool and would otherwise starve the timed MC points.
    let _ = panel_outcome();
    let mut worst_pde: f64 = 0.0;
    let mut worst_sigmas: f64 = 0.0;
    for &gamma in &[0.5, 1.0, 2.0] {
        let tbl = tbl_ou(gamma, 1.0);
        for &big_t in &[0.5, 1.0] {
            // PDE route at a fixed eps (q is eps-independent)
            let eps_pde = 0.2;
            let mut cfg = PdeConfig::auto(&tbl, 1.0, big_t, eps_pde).unwrap();
            cfg.nx = 2000;
            cfg.nt = 4000;
            let p = OuParams::new(gamma, eps_pde).unwrap();
            for &xy in &[0.5, 1.0] {
                let mut cfg_y = cfg.clone();
                cfg_y.domain_l = cfg.domain_l.max(5.0 * (xy + big_t + 1.0));
                let sol = solve_qeps(&tbl, xy, big_t, eps_pde, &cfg_y).unwrap();
                let got = sol.query_q(xy, big_t).unwrap();
                let expect = oracles::ou_q(&p, xy, xy, big_t);
                let rel = (got - expect).abs() / expect;
                worst_pde = worst_pde.max(rel);
                assert!(
                    rel <= 0.01,
                    "PDE gamma={gamma} T={big_t} x=y={xy}: {got} vs {expect}"
                );
                // MC route: eps chosen so the hit probability is resolvable
                let eps_mc = (expect / 6.0).max(0.2);
                let started = Instant::now();
                let est = estimate_survival(
                    &tbl,
                    xy,
                    xy,
                    big_t,
                    eps_mc,
                    &McConfig {
                        n_paths: 100_000,
                        n_steps: 128,
                        seed: 42,
                        ..Default::default()
                    },
                )
                .unwrap();
                let secs = started.elapsed().as_secs_f64();
                assert!(secs < 30.0, "MC point took {secs:.1} s (limit 30 s)");
                let err = est.q_stderr.max(1e-4);
                let sigmas = (est.q_hat - expect).abs() / (3.0 * err);
                worst_sigmas = worst_sigmas.max(3.0 * sigmas);
                assert!(
                    (est.q_hat - expect).abs() <= 3.0 * err,
                    "MC gamma={gamma} T={big_t} x=y={xy}: {} vs {expect} (stderr {err:.2e})",
                    est.q_hat
                );
            }
        }
    }
    println!(
        "ACCEPTANCE 2 ou-closed-form: PASS (PDE worst rel {worst_pde:.2e}, MC worst {worst_sigmas:.2} sigma)"
    );
}

#[test]
fn acceptance_03_mc_bridge_oracle() {
    let tbl = tbl_zero(2.0);
    let panel = [
        (0.5, 0.5, 0.5),
        (0.5, 1.0, 1.0),
        (0.5, 2.0, 2.0),
        (1.0, 0.5, 1.0),
        (1.0, 1.0, 0.5),
        (1.0, 2.0, 1.0),
        (2.0, 0.5, 2.0),
        (2.0, 1.0, 2.0),
        (2.0, 2.0, 1.0),
    ];
    let mut worst: f64 = 0.0;
    for &(x, y, big_t) in &panel {
        // eps scaled so the exact hit probability is e^-5
        let eps = 2.0 * x * y / (5.0 * big_t);
        let est = estimate_survival(
            &tbl,
            x,
            y,
            big_t,
            eps,
            &McConfig {
                n_paths: 100_000,
                n_steps: 128,
                seed: 7,
                ..Default::default()
            },
        )
        .unwrap();
        let exact = (-2.0 * x * y / (eps * big_t)).exp();
        let dev = (est.p_hit - exact).abs() / est.stderr;
        worst = worst.max(dev);
        assert!(
            dev <= 3.0,
            "(x,y,T)=({x},{y},{big_t}): p {} vs {exact} is {dev:.2} stderr off",
            est.p_hit
        );
    }
    println!("ACCEPTANCE 3 mc-bridge-oracle: PASS (worst deviation {worst:.2} stderr)");
}

#[test]
fn acceptance_04_variational_oracle() {
    let tbl = tbl_zero(4.0);
    let opts = MinimizeOpts::default();
    let xs = [0.25, 0.5, 1.0, 2.0, 4.0];
    let ys = [0.5, 0.8, 1.0, 1.7, 2.5];
    let ts = [0.5, 1.0, 2.0];
    let mut worst_tau: f64 = 0.0;
    let mut worst_q: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            let big_t = ts[(i + j) % 3];
            let sol = minimize_q0(&tbl, x, y, big_t, &opts).unwrap();
            let q_expect = 2.0 * x * y / big_t;
            let tau_expect = y * big_t / (x + y);
            let dq = (sol.q0 - q_expect).abs() / q_expect;
            let dt = (sol.tau_star - tau_expect).abs();
            worst_q = worst_q.max(dq);
            worst_tau = worst_tau.max(dt);
            assert!(dq <= 1e-8, "q0({x},{y},{big_t}) rel err {dq:.2e}");
            assert!(dt <= 1e-6, "tau*({x},{y},{big_t}) abs err {dt:.2e}");
        }
    }
    // negative-x branch against the two closed forms
    for &(x, y, big_t) in &[
        (-0.25, 1.0, 1.0),
        (-0.5, 1.0, 1.0),
        (-0.99, 1.0, 1.0),
        (-1.5, 1.0, 1.0),
        (-3.0, 1.0, 1.0),
        (-0.3, 0.7, 2.0),
        (-2.0, 0.7, 0.5),
    ] {
        let sol = minimize_q0(&tbl, x, y, big_t, &opts).unwrap();
        let expect = if x > -y {
            2.0 * x * y / big_t
        } else {
            -(x - y) * (x - y) / (2.0 * big_t)
        };
        let rel = (sol.q0 - expect).abs() / expect.abs();
        worst_q = worst_q.max(rel);
        assert!(rel <= 1e-8, "q0({x},{y},{big_t}) = {} vs {expect}", sol.q0);
        if x < -y {
            assert!(sol.at_infinity, "infimum at tau=inf expected for x < -y");
        }
    }
    println!(
        "ACCEPTANCE 4 variational-oracle: PASS (worst q0 rel {worst_q:.2e}, worst tau abs {worst_tau:.2e})"
    );
}

#[test]
fn acceptance_05_identity_suite() {
    let tables = [tbl_zero(2.0), tbl_const(1.0, 2.0), tbl_ramp(2.0), tbl_sin2(2.0)];
    let mut worst: f64 = 0.0;
    for tbl in &tables {
        let big_t = 1.7;
        let expect = tbl.m1(0.0, big_t).unwrap() / tbl.sigma2(0.0, big_t).unwrap();
        for k in 1..100 {
            let tau = big_t * k as f64 / 100.0;
            let prod = tbl.g3(tau, big_t).unwrap() * tbl.g1(tau, big_t).unwrap();
            let rel = (prod - expect).abs() / expect;
            worst = worst.max(rel);
            assert!(rel <= 1e-10, "g3*g1 identity off by {rel:.2e} at tau={tau}");
        }
        // Richardson self-consistency of the coefficient tables
        assert!(
            tbl.richardson_error() <= 1e-10,
            "quadrature self-check {:.2e}",
            tbl.richardson_error()
        );
        let refined =
            CoefficientTable::with_resolution(tbl.drift().clone(), 2 * tbl.n_grid(), 1e-9)
                .unwrap();
        for &(a, b) in &[(0.0, 2.0), (0.3, 1.1), (0.9, 1.0)] {
            let r = (tbl.sigma2(a, b).unwrap() - refined.sigma2(a, b).unwrap()).abs()
                / refined.sigma2(a, b).unwrap();
            worst = worst.max(r);
            assert!(r <= 1e-10, "sigma2({a},{b}) moved {r:.2e} under doubling");
        }
    }
    println!("ACCEPTANCE 5 identity-suite: PASS (worst relative defect {worst:.2e})");
}

#[test]
fn acceptance_06_bound_suite() {
    let outcome = panel_outcome();
    let mut worst = f64::INFINITY;
    let mut failed = Vec::new();
    for rep in &outcome.reports {
        worst = worst.min(rep.worst_margin);
        if !rep.pass {
            failed.push(format!(
                "{} [{}]: {:?}",
                rep.name,
                rep.drift,
                rep.failures.first()
            ));
        }
    }
    assert!(
        failed.is_empty(),
        "bound suite failures:\n{}",
        failed.join("\n")
    );
    assert!(worst >= -1e-6, "worst margin {worst:.3e}");
    println!(
        "ACCEPTANCE 6 bound-suite: PASS ({} checks, worst margin {worst:+.3e})",
        outcome.reports.len()
    );
}

#[test]
fn acceptance_07_eps_convergence() {
    let outcome = panel_outcome();
    let reps = reports_named(outcome, "convergence_eps");
    assert_eq!(reps.len(), 4, "one convergence report per panel drift");
    for rep in &reps {
        assert!(rep.pass, "{} failed: {:?}", rep.drift, rep.failures);
    }
    // the nontrivial drifts must have genuinely decreasing gaps
    let nontrivial = reps
        .iter()
        .filter(|r| r.notes.is_empty())
        .count();
    assert!(
        nontrivial >= 3,
        "expected at least 3 drifts with measurable eps-gaps"
    );
    println!("ACCEPTANCE 7 eps-convergence: PASS ({nontrivial} drifts with measurable gaps)");
}

#[test]
fn acceptance_08_derivative_convergence() {
    let outcome = panel_outcome();
    let reps = reports_named(outcome, "derivative_convergence");
    assert!(!reps.is_empty());
    for rep in &reps {
        assert!(rep.pass, "{} failed: {:?}", rep.drift, rep.failures);
    }
    // the unit drift must show the eps-halving ratios in window
    let unit = reps
        .iter()
        .find(|r| r.drift.contains("const(a=1"))
        .expect("unit drift report");
    let ratios: Vec<(&String, &f64)> = unit
        .fitted
        .iter()
        .filter(|(k, _)| k.starts_with("ratio["))
        .collect();
    assert!(
        ratios.len() >= 6,
        "expected halving ratios for y in {{1,2,4}}: {:?}",
        unit.fitted
    );
    for (k, &r) in &ratios {
        assert!((1.6..=2.4).contains(&r), "{k} = {r}");
    }
    println!(
        "ACCEPTANCE 8 derivative-convergence: PASS ({} halving ratios in [1.6, 2.4])",
        ratios.len()
    );
}

#[test]
fn acceptance_09_characteristics_vs_minimization() {
    let outcome = panel_outcome();
    let reps = reports_named(outcome, "char_vs_grid");
    assert_eq!(reps.len(), 12, "4 drifts x 3 y");
    for rep in &reps {
        assert!(rep.pass, "{} failed: {:?}", rep.drift, rep.failures);
    }
    // the late-ramp drift must fold and fall back
    let tbl = tbl_late_ramp(60.0);
    let rep = verify::check_char_vs_grid(&tbl, 0.1, 1.0).unwrap();
    assert!(rep.pass, "fold drift: {:?}", rep.failures);
    assert!(
        rep.fitted.get("folds").copied().unwrap_or(0.0) >= 1.0,
        "fold fallback expected, notes: {:?}",
        rep.notes
    );
    println!(
        "ACCEPTANCE 9 characteristics-vs-minimization: PASS (12 region reports, {} folds handled)",
        rep.fitted.get("folds").copied().unwrap_or(0.0)
    );
}
