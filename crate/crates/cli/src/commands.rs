//! Subcommand implementations.

use crate::output::{emit, Csv, CsvField};
use crate::Failure;
use bridge_green::mc::{estimate_survival, McConfig};
use bridge_green::oracles::{self, OuParams};
use bridge_green::pde::{delta_continuation, PdeConfig};
use bridge_green::variational::{minimize_q0, MinimizeOpts};
use bridge_green::verify::{run_panel, VerifyPanel};
use bridge_green::{characteristics, CoefficientTable, DriftModel};
use clap::Args;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

fn load_drift(path: &Path) -> Result<CoefficientTable, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read drift file {}: {e}", path.display())))?;
    let drift = DriftModel::from_json_str(&text).map_err(|e| Failure::usage(e.to_string()))?;
    CoefficientTable::new(drift).map_err(|e| Failure::numeric(e.to_string()))
}

fn json_usage_error(path: &Path, e: serde_json::Error) -> Failure {
    Failure::usage(format!(
        "{}: line {}, column {}: {e}",
        path.display(),
        e.line(),
        e.column()
    ))
}

// ---------------------------------------------------------------- coeffs

#[derive(Args)]
pub struct CoeffsArgs {
    /// Drift specification JSON file.
    #[arg(long)]
    drift: PathBuf,
    /// Lower times t (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "0.0")]
    t: Vec<f64>,
    /// Upper times T (comma separated).
    #[arg(long = "T", value_delimiter = ',')]
    big_t: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run_coeffs(args: CoeffsArgs) -> Result<u8, Failure> {
    let tbl = load_drift(&args.drift)?;
    let config = format!(
        "coeffs drift={} t={:?} T={:?}",
        tbl.drift().to_json_string(),
        args.t,
        args.big_t
    );
    let mut csv = Csv::new("t,T,m1,m2,sigma2,g1,g2,g3", &config);
    let mut rows = 0;
    for &t in &args.t {
        for &big_t in &args.big_t {
            if t >= big_t {
                continue;
            }
            let m1 = tbl.m1(t, big_t).map_err(|e| Failure::numeric(e.to_string()))?;
            let m2 = tbl.m2(t, big_t).map_err(|e| Failure::numeric(e.to_string()))?;
            let s2 = tbl
                .sigma2(t, big_t)
                .map_err(|e| Failure::numeric(e.to_string()))?;
            let (g1, g2, g3) = if t > 0.0 {
                (
                    tbl.g1(t, big_t).map_err(|e| Failure::numeric(e.to_string()))?,
                    tbl.g2(t, big_t).map_err(|e| Failure::numeric(e.to_string()))?,
                    tbl.g3(t, big_t).map_err(|e| Failure::numeric(e.to_string()))?,
                )
            } else {
                (0.0, 0.0, f64::INFINITY)
            };
            csv.row(&[
                CsvField::Num(t),
                CsvField::Num(big_t),
                CsvField::Num(m1),
                CsvField::Num(m2),
                CsvField::Num(s2),
                CsvField::Num(g1),
                CsvField::Num(g2),
                CsvField::Num(g3),
            ]);
            rows += 1;
        }
    }
    emit(args.out.as_deref(), &csv.into_string())
        .map_err(|e| Failure::numeric(e.to_string()))?;
    eprintln!("coeffs: wrote {rows} rows");
    Ok(0)
}

// ---------------------------------------------------------------- oracle

#[derive(Args)]
pub struct OracleArgs {
    /// Which oracle: gaussian | whole-line | bb-ratio | bb-q | ou-q | ou-green | q-linear.
    #[arg(long)]
    which: String,
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    x: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    y: Vec<f64>,
    #[arg(long = "T", value_delimiter = ',', default_value = "1.0")]
    big_t: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.2")]
    eps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    gamma: Vec<f64>,
    /// Drift JSON (needed for whole-line and q-linear).
    #[arg(long)]
    drift: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run_oracle(args: OracleArgs) -> Result<u8, Failure> {
    let tbl = match &args.drift {
        Some(p) => Some(load_drift(p)?),
        None => None,
    };
    let need_tbl = || {
        tbl.as_ref().ok_or_else(|| {
            Failure::usage(format!("oracle {:?} requires --drift", args.which))
        })
    };
    let config = format!(
        "oracle which={} x={:?} y={:?} T={:?} eps={:?} gamma={:?}",
        args.which, args.x, args.y, args.big_t, args.eps, args.gamma
    );
    let mut csv = Csv::new("which,x,y,T,eps,gamma,value", &config);
    let mut rows = 0;
    for &x in &args.x {
        for &y in &args.y {
            for &big_t in &args.big_t {
                for &eps in &args.eps {
                    for &gamma in &args.gamma {
                        let value = match args.which.as_str() {
                            "gaussian" => oracles::gaussian_kernel(x, big_t)
                                .map_err(|e| Failure::numeric(e.to_string()))?,
                            "whole-line" => oracles::whole_line_green(need_tbl()?, x, y, big_t, eps)
                                .map_err(|e| Failure::numeric(e.to_string()))?,
                            "bb-ratio" => oracles::bb_dirichlet_ratio(x, y, big_t, eps),
                            "bb-q" => oracles::bb_q(x, y, big_t),
                            "ou-q" => {
                                let p = OuParams::new(gamma, eps)
                                    .map_err(|e| Failure::usage(e.to_string()))?;
                                oracles::ou_q(&p, x, y, big_t)
                            }
                            "ou-green" => {
                                let p = OuParams::new(gamma, eps)
                                    .map_err(|e| Failure::usage(e.to_string()))?;
                                oracles::ou_green(&p, x, y, big_t)
                                    .map_err(|e| Failure::numeric(e.to_string()))?
                            }
                            "q-linear" => oracles::q_linear(need_tbl()?, x, y, big_t)
                                .map_err(|e| Failure::numeric(e.to_string()))?,
                            other => {
                                return Err(Failure::usage(format!("unknown oracle {other:?}")))
                            }
                        };
                        csv.row(&[
                            CsvField::Str(args.which.clone()),
                            CsvField::Num(x),
                            CsvField::Num(y),
                            CsvField::Num(big_t),
                            CsvField::Num(eps),
                            CsvField::Num(gamma),
                            CsvField::Num(value),
                        ]);
                        rows += 1;
                    }
                }
            }
        }
    }
    emit(args.out.as_deref(), &csv.into_string())
        .map_err(|e| Failure::numeric(e.to_string()))?;
    eprintln!("oracle: wrote {rows} rows");
    Ok(0)
}

// ---------------------------------------------------------------- q0

#[derive(Args)]
pub struct Q0Args {
    #[arg(long)]
    drift: PathBuf,
    #[arg(long, value_delimiter = ',')]
    x: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    y: Vec<f64>,
    #[arg(long = "T", value_delimiter = ',')]
    big_t: Vec<f64>,
    /// grid | char | both
    #[arg(long, default_value = "both")]
    method: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run_q0(args: Q0Args) -> Result<u8, Failure> {
    let tbl = load_drift(&args.drift)?;
    let methods: Vec<&str> = match args.method.as_str() {
        "grid" => vec!["grid"],
        "char" => vec!["char"],
        "both" => vec!["grid", "char"],
        other => return Err(Failure::usage(format!("unknown method {other:?}"))),
    };
    let config = format!(
        "q0 drift={} x={:?} y={:?} T={:?} method={}",
        tbl.drift().to_json_string(),
        args.x,
        args.y,
        args.big_t,
        args.method
    );
    let mut csv = Csv::new("x,y,T,q0,tau_star,method,dq0dx,d2q0dx2,fold", &config);
    let opts = MinimizeOpts::default();
    let mut summary = None;
    for &method in &methods {
        for &x in &args.x {
            for &y in &args.y {
                for &big_t in &args.big_t {
                    let (q0, tau, dq, d2q, fold) = match method {
                        "grid" => {
                            let sol = minimize_q0(&tbl, x, y, big_t, &opts)
                                .map_err(|e| Failure::numeric(e.to_string()))?;
                            (sol.q0, sol.tau_star, None, None, String::new())
                        }
                        _ => match characteristics::q0_via_characteristics(&tbl, x, y, big_t) {
                            Ok(sol) => {
                                let st =
                                    characteristics::invert_characteristic(&tbl, x, y, big_t)
                                        .map_err(|e| Failure::numeric(e.to_string()))?;
                                let dq = characteristics::dq0_dx(&st, big_t);
                                let d2q = characteristics::d2q0_dx2(&st, big_t).ok();
                                (sol.q0, sol.tau_star, Some(dq), d2q, String::new())
                            }
                            Err(bridge_green::VarError::CharacteristicFold { fold_at }) => {
                                let sol = minimize_q0(&tbl, x, y, big_t, &opts)
                                    .map_err(|e| Failure::numeric(e.to_string()))?;
                                (
                                    sol.q0,
                                    sol.tau_star,
                                    None,
                                    None,
                                    format!("fold@{fold_at:.6}"),
                                )
                            }
                            Err(e) => return Err(Failure::numeric(e.to_string())),
                        },
                    };
                    summary.get_or_insert((q0, tau));
                    csv.row(&[
                        CsvField::Num(x),
                        CsvField::Num(y),
                        CsvField::Num(big_t),
                        CsvField::Num(q0),
                        CsvField::Num(tau),
                        CsvField::Str(method.into()),
                        dq.map_or(CsvField::Empty, CsvField::Num),
                        d2q.map_or(CsvField::Empty, CsvField::Num),
                        CsvField::Str(fold),
                    ]);
                }
            }
        }
    }
    emit(args.out.as_deref(), &csv.into_string())
        .map_err(|e| Failure::numeric(e.to_string()))?;
    if let Some((q0, tau)) = summary {
        eprintln!("q0={q0:.10} tau={tau:.10}");
    }
    Ok(0)
}

// ---------------------------------------------------------------- qeps-pde

#[derive(Args)]
pub struct QepsPdeArgs {
    #[arg(long)]
    drift: PathBuf,
    #[arg(long)]
    y: f64,
    #[arg(long = "T")]
    big_t: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 2000)]
    nx: usize,
    #[arg(long, default_value_t = 4000)]
    nt: usize,
    /// Regularization start; defaults to T/128.
    #[arg(long)]
    delta: Option<f64>,
    /// Domain truncation; defaults to 5 (y + T + sqrt(eps sigma2(T))).
    #[arg(long = "L")]
    domain_l: Option<f64>,
    /// Number of x samples in the CSV.
    #[arg(long, default_value_t = 65)]
    x_samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run_qeps_pde(args: QepsPdeArgs) -> Result<u8, Failure> {
    let tbl = load_drift(&args.drift)?;
    let mut cfg = PdeConfig::auto(&tbl, args.y, args.big_t, args.eps)
        .map_err(|e| Failure::numeric(e.to_string()))?;
    cfg.nx = args.nx;
    cfg.nt = args.nt;
    if let Some(d) = args.delta {
        cfg.delta = d;
    }
    if let Some(l) = args.domain_l {
        cfg.domain_l = l;
    }
    let (sol, ladder) = delta_continuation(&tbl, args.y, args.big_t, args.eps, &cfg)
        .map_err(|e| Failure::numeric(e.to_string()))?;
    let config = format!(
        "qeps-pde drift={} y={} T={} eps={} nx={} nt={} delta={} L={}",
        tbl.drift().to_json_string(),
        args.y,
        args.big_t,
        args.eps,
        cfg.nx,
        cfg.nt,
        cfg.delta,
        cfg.domain_l
    );
    let mut csv = Csv::new("x,T,q,dqdx0,d2qdx20,delta_gap", &config);
    let dqdx0 = sol
        .dqdx_at_zero(args.big_t)
        .map_err(|e| Failure::numeric(e.to_string()))?;
    let d2qdx20 = sol
        .d2qdx2_at_zero(args.big_t)
        .map_err(|e| Failure::numeric(e.to_string()))?;
    let l = cfg.domain_l;
    for k in 0..args.x_samples {
        let x = l * k as f64 / (args.x_samples.max(2) - 1) as f64;
        let q = sol
            .query_q(x.min(l), args.big_t)
            .map_err(|e| Failure::numeric(e.to_string()))?;
        csv.row(&[
            CsvField::Num(x),
            CsvField::Num(args.big_t),
            CsvField::Num(q),
            CsvField::Num(dqdx0),
            CsvField::Num(d2qdx20),
            CsvField::Num(ladder.gap),
        ]);
    }
    emit(args.out.as_deref(), &csv.into_string())
        .map_err(|e| Failure::numeric(e.to_string()))?;
    eprintln!(
        "qeps-pde: q(y,T)={:.8} dqdx0={dqdx0:.8} delta_gap={:.3e}",
        sol.query_q(args.y.min(l), args.big_t).unwrap_or(f64::NAN),
        ladder.gap
    );
    Ok(0)
}

// ---------------------------------------------------------------- qeps-mc

#[derive(Args)]
pub struct QepsMcArgs {
    #[arg(long)]
    drift: PathBuf,
    #[arg(long)]
    x: f64,
    #[arg(long)]
    y: f64,
    #[arg(long = "T")]
    big_t: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 128)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    batch: usize,
    /// Disable the per-interval crossing correction.
    #[arg(long)]
    no_correction: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run_qeps_mc(args: QepsMcArgs) -> Result<u8, Failure> {
    let tbl = load_drift(&args.drift)?;
    let cfg = McConfig {
        n_paths: args.paths,
        n_steps: args.steps,
        seed: args.seed,
        crossing_correction: !args.no_correction,
        batch_size: args.batch,
    };
    let est = estimate_survival(&tbl, args.x, args.y, args.big_t, args.eps, &cfg)
        .map_err(|e| Failure::numeric(e.to_string()))?;
    let config = format!(
        "qeps-mc drift={} x={} y={} T={} eps={} paths={} steps={} seed={} correction={}",
        tbl.drift().to_json_string(),
        args.x,
        args.y,
        args.big_t,
        args.eps,
        args.paths,
        args.steps,
        args.seed,
        !args.no_correction
    );
    let mut csv = Csv::new("x,y,T,eps,p_hit,stderr,q_hat,q_stderr", &config);
    csv.row(&[
        CsvField::Num(args.x),
        CsvField::Num(args.y),
        CsvField::Num(args.big_t),
        CsvField::Num(args.eps),
        CsvField::Num(est.p_hit),
        CsvField::Num(est.stderr),
        CsvField::Num(est.q_hat),
        CsvField::Num(est.q_stderr),
    ]);
    emit(args.out.as_deref(), &csv.into_string())
        .map_err(|e| Failure::numeric(e.to_string()))?;
    eprintln!(
        "qeps-mc: p_hit={:.6e} q_hat={:.8} ± {:.2e}",
        est.p_hit, est.q_hat, est.q_stderr
    );
    Ok(0)
}

// ---------------------------------------------------------------- sweep

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    drift: DriftModel,
    #[serde(default)]
    x: GridSpec,
    #[serde(default)]
    y: GridSpec,
    #[serde(default)]
    t: GridSpec,
    #[serde(default)]
    eps: GridSpec,
    methods: Vec<String>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_paths")]
    paths: usize,
    #[serde(default = "default_steps")]
    steps: usize,
    #[serde(default = "default_nx")]
    nx: usize,
    #[serde(default = "default_nt")]
    nt: usize,
    #[serde(default)]
    out: Option<PathBuf>,
}

fn default_paths() -> usize {
    20_000
}
fn default_steps() -> usize {
    64
}
fn default_nx() -> usize {
    1200
}
fn default_nt() -> usize {
    4000
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum GridSpec {
    List(Vec<f64>),
    Linspace { min: f64, max: f64, n: usize },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::List(vec![1.0])
    }
}

impl GridSpec {
    fn values(&self) -> Vec<f64> {
        match self {
            GridSpec::List(v) => v.clone(),
            GridSpec::Linspace { min, max, n } => {
                if *n == 0 {
                    Vec::new()
                } else if *n == 1 {
                    vec![*min]
                } else {
                    (0..*n)
                        .map(|k| min + (max - min) * k as f64 / (*n as f64 - 1.0))
                        .collect()
                }
            }
        }
    }
}

pub fn run_sweep(args: SweepArgs) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", args.config.display())))?;
    let cfg: SweepConfig =
        serde_json::from_str(&text).map_err(|e| json_usage_error(&args.config, e))?;
    let tbl = CoefficientTable::new(cfg.drift.clone())
        .map_err(|e| Failure::numeric(e.to_string()))?;
    let xs = cfg.x.values();
    let ys = cfg.y.values();
    let ts = cfg.t.values();
    let epss = cfg.eps.values();
    let total = xs.len() * ys.len() * ts.len() * epss.len() * cfg.methods.len();
    if total > 200_000 {
        return Err(Failure::usage(format!(
            "sweep budget exceeded: {total} rows requested (max 200000)"
        )));
    }
    let canonical = format!("sweep {}", text.trim());
    let mut csv = Csv::new("x,y,T,eps,method,value,tau_star,stderr,second_diff_x", &canonical);
    let opts = MinimizeOpts::default();
    // PDE solutions cached per (y, T, eps)
    let mut pde_cache: BTreeMap<(u64, u64, u64), bridge_green::PdeSolution> = BTreeMap::new();
    for method in &cfg.methods {
        for &y in &ys {
            for &t in &ts {
                for &eps in &epss {
                    // gather values along x to add the second-difference column
                    let mut vals: Vec<(f64, f64, f64, f64)> = Vec::new(); // x, value, tau, stderr
                    for &x in &xs {
                        let (v, tau, se) = match method.as_str() {
                            "q0-grid" => {
                                let s = minimize_q0(&tbl, x, y, t, &opts)
                                    .map_err(|e| Failure::numeric(e.to_string()))?;
                                (s.q0, s.tau_star, f64::NAN)
                            }
                            "q0-char" => match characteristics::q0_via_characteristics(
                                &tbl, x, y, t,
                            ) {
                                Ok(s) => (s.q0, s.tau_star, f64::NAN),
                                Err(bridge_green::VarError::CharacteristicFold { .. }) => {
                                    let s = minimize_q0(&tbl, x, y, t, &opts)
                                        .map_err(|e| Failure::numeric(e.to_string()))?;
                                    (s.q0, s.tau_star, f64::NAN)
                                }
                                Err(e) => return Err(Failure::numeric(e.to_string())),
                            },
                            "pde" => {
                                let key = (y.to_bits(), t.to_bits(), eps.to_bits());
                                let sol = match pde_cache.entry(key) {
                                    std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                                    std::collections::btree_map::Entry::Vacant(v) => {
                                        let mut pcfg = PdeConfig::auto(&tbl, y, t, eps)
                                            .map_err(|e| Failure::numeric(e.to_string()))?;
                                        pcfg.nx = cfg.nx;
                                        pcfg.nt = cfg.nt;
                                        let sol =
                                            bridge_green::pde::solve_qeps(&tbl, y, t, eps, &pcfg)
                                                .map_err(|e| Failure::numeric(e.to_string()))?;
                                        v.insert(sol)
                                    }
                                };
                                let v = sol
                                    .query_q(x, t)
                                    .map_err(|e| Failure::numeric(e.to_string()))?;
                                (v, f64::NAN, f64::NAN)
                            }
                            "mc" => {
                                let mcfg = McConfig {
                                    n_paths: cfg.paths,
                                    n_steps: cfg.steps,
                                    seed: cfg.seed,
                                    ..Default::default()
                                };
                                let est = estimate_survival(&tbl, x, y, t, eps, &mcfg)
                                    .map_err(|e| Failure::numeric(e.to_string()))?;
                                (est.q_hat, f64::NAN, est.q_stderr)
                            }
                            other => {
                                return Err(Failure::usage(format!(
                                    "unknown sweep method {other:?} (expected q0-grid, q0-char, pde, mc)"
                                )))
                            }
                        };
                        vals.push((x, v, tau, se));
                    }
                    for (i, &(x, v, tau, se)) in vals.iter().enumerate() {
                        let second = if i > 0 && i + 1 < vals.len() {
                            Some(vals[i + 1].1 - 2.0 * v + vals[i - 1].1)
                        } else {
                            None
                        };
                        csv.row(&[
                            CsvField::Num(x),
                            CsvField::Num(y),
                            CsvField::Num(t),
                            CsvField::Num(eps),
                            CsvField::Str(method.clone()),
                            CsvField::Num(v),
                            if tau.is_nan() {
                                CsvField::Empty
                            } else {
                                CsvField::Num(tau)
                            },
                            if se.is_nan() {
                                CsvField::Empty
                            } else {
                                CsvField::Num(se)
                            },
                            second.map_or(CsvField::Empty, CsvField::Num),
                        ]);
                    }
                }
            }
        }
    }
    let out = args.out.or(cfg.out);
    emit(out.as_deref(), &csv.into_string()).map_err(|e| Failure::numeric(e.to_string()))?;
    eprintln!("sweep: {total} rows");
    Ok(0)
}

// ---------------------------------------------------------------- verify

#[derive(Args)]
pub struct VerifyArgs {
    /// Panel JSON; the built-in default panel when omitted.
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the CSV margin dump here.
    #[arg(long)]
    margins: Option<PathBuf>,
}

pub fn run_verify(args: VerifyArgs) -> Result<u8, Failure> {
    let panel = match &args.panel {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<VerifyPanel>(&text)
                .map_err(|e| json_usage_error(path, e))?
        }
        None => VerifyPanel::default_panel(),
    };
    let outcome = run_panel(&panel).map_err(|e| Failure::numeric(e.to_string()))?;
    for rep in &outcome.reports {
        println!(
            "{} {:<24} {:<28} worst_margin={:+.3e} points={}{}",
            if rep.pass { "PASS" } else { "FAIL" },
            rep.name,
            rep.drift,
            rep.worst_margin,
            rep.n_points,
            if rep.notes.is_empty() {
                String::new()
            } else {
                format!(" notes={}", rep.notes.len())
            }
        );
    }
    if let Some(path) = &args.report {
        let json = serde_json::to_string_pretty(&outcome)
            .map_err(|e| Failure::numeric(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Failure::numeric(e.to_string()))?;
    }
    if let Some(path) = &args.margins {
        std::fs::write(path, outcome.margins_csv())
            .map_err(|e| Failure::numeric(e.to_string()))?;
    }
    let pass = outcome.pass;
    println!(
        "verify: {} / {} checks passed",
        outcome.reports.iter().filter(|r| r.pass).count(),
        outcome.reports.len()
    );
    Ok(if pass { 0 } else { 1 })
}
