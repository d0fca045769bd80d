//! The drift model `b(y, t) = A(t) y + c` and its JSON wire format.

use crate::coeffs::CoeffError;
use serde::{Deserialize, Serialize};

/// Slack applied when clamping time queries onto `[0, t_max]`.
pub const TIME_CLAMP_SLACK: f64 = 1e-12;

/// Shape of the time-dependent coefficient `A(.)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftKind {
    /// `A(t) = 0`.
    Zero,
    /// `A(t) = a`.
    Constant(f64),
    /// Linear interpolation through strictly increasing `(t, A)` knots.
    PiecewiseLinear(Vec<(f64, f64)>),
    /// Tabulated samples, interpolated linearly between entries.
    Tabulated(Vec<(f64, f64)>),
}

/// Drift `b(y, t) = A(t) y + c` on the validity horizon `[0, t_max]`.
///
/// `offset_c` defaults to the conventional `-1`; the Ornstein-Uhlenbeck
/// family uses `A = const = -gamma` with `offset_c = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftModel {
    kind: DriftKind,
    offset_c: f64,
    t_max: f64,
    nonneg_certified: bool,
}

impl DriftModel {
    pub fn new(
        kind: DriftKind,
        offset_c: f64,
        t_max: f64,
        nonneg_certified: bool,
    ) -> Result<Self, CoeffError> {
        if !(offset_c.is_finite() && t_max.is_finite() && t_max > 0.0) {
            return Err(CoeffError::InvalidDrift(format!(
                "offset_c and t_max must be finite with t_max > 0 (got c={offset_c}, t_max={t_max})"
            )));
        }
        match &kind {
            DriftKind::Zero | DriftKind::Constant(_) => {}
            DriftKind::PiecewiseLinear(knots) | DriftKind::Tabulated(knots) => {
                if knots.len() < 2 {
                    return Err(CoeffError::InvalidDrift(
                        "need at least two (t, A) knots".into(),
                    ));
                }
                if knots.iter().any(|&(t, a)| !t.is_finite() || !a.is_finite()) {
                    return Err(CoeffError::InvalidDrift("non-finite knot".into()));
                }
                for w in knots.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(CoeffError::InvalidDrift(format!(
                            "knot times must be strictly increasing (got {} then {})",
                            w[0].0, w[1].0
                        )));
                    }
                }
                if knots[0].0 > TIME_CLAMP_SLACK {
                    return Err(CoeffError::InvalidDrift(format!(
                        "first knot must sit at t = 0 (got {})",
                        knots[0].0
                    )));
                }
                let last = knots.last().unwrap().0;
                if last < t_max - TIME_CLAMP_SLACK {
                    return Err(CoeffError::InvalidDrift(format!(
                        "knots end at t = {last} but t_max = {t_max}"
                    )));
                }
            }
        }
        if let DriftKind::Constant(a) = kind {
            if !a.is_finite() {
                return Err(CoeffError::InvalidDrift("non-finite constant drift".into()));
            }
        }
        let model = Self {
            kind,
            offset_c,
            t_max,
            nonneg_certified,
        };
        if nonneg_certified {
            let n = 4096;
            for k in 0..=n {
                let t = t_max * k as f64 / n as f64;
                let a = model.a_clamped(t);
                if a < 0.0 {
                    return Err(CoeffError::InvalidDrift(format!(
                        "drift certified non-negative but A({t}) = {a}"
                    )));
                }
            }
        }
        Ok(model)
    }

    /// `A(t) = 0`, `c = -1`: the Brownian-bridge reference drift.
    pub fn zero(t_max: f64) -> Self {
        Self::new(DriftKind::Zero, -1.0, t_max, true).unwrap()
    }

    /// Constant `A(t) = a` with the default offset `c = -1`.
    pub fn constant(a: f64, t_max: f64) -> Result<Self, CoeffError> {
        Self::new(DriftKind::Constant(a), -1.0, t_max, a >= 0.0)
    }

    /// Ornstein-Uhlenbeck drift `b(y) = -gamma y` (`A = -gamma`, `c = 0`).
    pub fn ornstein_uhlenbeck(gamma: f64, t_max: f64) -> Result<Self, CoeffError> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(CoeffError::InvalidDrift(format!(
                "OU rate must be positive (got {gamma})"
            )));
        }
        Self::new(DriftKind::Constant(-gamma), 0.0, t_max, false)
    }

    pub fn kind(&self) -> &DriftKind {
        &self.kind
    }

    pub fn offset_c(&self) -> f64 {
        self.offset_c
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn nonneg_certified(&self) -> bool {
        self.nonneg_certified
    }

    /// `A(t)` for `t` in `[0, t_max]` (clamped within [`TIME_CLAMP_SLACK`]).
    pub fn a(&self, t: f64) -> Result<f64, CoeffError> {
        if !t.is_finite() || t < -TIME_CLAMP_SLACK || t > self.t_max + TIME_CLAMP_SLACK {
            return Err(CoeffError::OutOfHorizon {
                t,
                t_max: self.t_max,
            });
        }
        Ok(self.a_clamped(t))
    }

    /// `A` evaluated with clamping; `t > t_max` continues with `A(t_max)`.
    /// The continuation is reserved for the documented `tau > T` paths.
    pub(crate) fn a_clamped(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.t_max);
        match &self.kind {
            DriftKind::Zero => 0.0,
            DriftKind::Constant(a) => *a,
            DriftKind::PiecewiseLinear(knots) | DriftKind::Tabulated(knots) => {
                let n = knots.len();
                if t <= knots[0].0 {
                    return knots[0].1;
                }
                if t >= knots[n - 1].0 {
                    return knots[n - 1].1;
                }
                let mut lo = 0;
                let mut hi = n - 1;
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if knots[mid].0 <= t {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let (t0, a0) = knots[lo];
                let (t1, a1) = knots[lo + 1];
                a0 + (a1 - a0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Continuation value used past the horizon on the `tau > T` branch.
    pub(crate) fn a_end(&self) -> f64 {
        self.a_clamped(self.t_max)
    }

    /// Short human-readable descriptor for reports and CSV headers.
    pub fn label(&self) -> String {
        match &self.kind {
            DriftKind::Zero => format!("zero(c={})", self.offset_c),
            DriftKind::Constant(a) => format!("const(a={}, c={})", a, self.offset_c),
            DriftKind::PiecewiseLinear(k) => {
                format!("pwlinear({} knots, c={})", k.len(), self.offset_c)
            }
            DriftKind::Tabulated(k) => format!("tabulated({} pts, c={})", k.len(), self.offset_c),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self, CoeffError> {
        let raw: DriftJson = serde_json::from_str(s)
            .map_err(|e| CoeffError::InvalidDrift(format!("drift JSON: {e}")))?;
        raw.try_into()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&DriftJson::from(self)).expect("drift serializes")
    }
}

fn default_c() -> f64 {
    -1.0
}

/// Wire format: `{"kind":"constant","a":1.0,"c":-1.0,"t_max":2.0,"nonneg":true}`
/// and the analogous shapes for `zero`, `piecewise_linear` (knots) and
/// `tabulated` (samples). Unknown keys are rejected.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DriftJson {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    knots: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    samples: Option<Vec<(f64, f64)>>,
    #[serde(default = "default_c")]
    c: f64,
    t_max: f64,
    #[serde(default)]
    nonneg: bool,
}

impl TryFrom<DriftJson> for DriftModel {
    type Error = CoeffError;

    fn try_from(raw: DriftJson) -> Result<Self, CoeffError> {
        let bad = |msg: &str| Err(CoeffError::InvalidDrift(msg.into()));
        let kind = match raw.kind.as_str() {
            "zero" => {
                if raw.a.is_some() || raw.knots.is_some() || raw.samples.is_some() {
                    return bad("kind \"zero\" takes no a/knots/samples");
                }
                DriftKind::Zero
            }
            "constant" => match (raw.a, &raw.knots, &raw.samples) {
                (Some(a), None, None) => DriftKind::Constant(a),
                _ => return bad("kind \"constant\" needs exactly the field \"a\""),
            },
            "piecewise_linear" => match (raw.a, raw.knots, &raw.samples) {
                (None, Some(k), None) => DriftKind::PiecewiseLinear(k),
                _ => return bad("kind \"piecewise_linear\" needs exactly the field \"knots\""),
            },
            "tabulated" => match (raw.a, &raw.knots, raw.samples) {
                (None, None, Some(s)) => DriftKind::Tabulated(s),
                _ => return bad("kind \"tabulated\" needs exactly the field \"samples\""),
            },
            other => {
                return Err(CoeffError::InvalidDrift(format!(
                    "unknown drift kind {other:?}"
                )))
            }
        };
        DriftModel::new(kind, raw.c, raw.t_max, raw.nonneg)
    }
}

impl From<&DriftModel> for DriftJson {
    fn from(m: &DriftModel) -> Self {
        let (kind, a, knots, samples) = match &m.kind {
            DriftKind::Zero => ("zero", None, None, None),
            DriftKind::Constant(a) => ("constant", Some(*a), None, None),
            DriftKind::PiecewiseLinear(k) => ("piecewise_linear", None, Some(k.clone()), None),
            DriftKind::Tabulated(s) => ("tabulated", None, None, Some(s.clone())),
        };
        DriftJson {
            kind: kind.into(),
            a,
            knots,
            samples,
            c: m.offset_c,
            t_max: m.t_max,
            nonneg: m.nonneg_certified,
        }
    }
}

impl Serialize for DriftModel {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        DriftJson::from(self).serialize(ser)
    }
}

impl<'de> Deserialize<'de> for DriftModel {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let raw = DriftJson::deserialize(de)?;
        raw.try_into().map_err(serde::de::Error::custom)
    }
}
