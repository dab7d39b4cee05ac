//! Response functions `h(x, p)`, the Bernoulli KL divergence and the
//! separation index `f(x) = d(h(x, p) | h(x, u))` with its derivative and peak.
//!
//! Two structured families are supported out of the box:
//!
//! - `Ratio`: `h(x, p) = g(p) / (g(p) + k(x))` for strictly increasing `g`, `k`.
//! - `Logit`: `h(x, p) = e^{bp} / (e^{bp} + e^{ax + c})`.
//!
//! The logit model is the ratio model with `g(p) = e^{bp}` and
//! `k(x) = e^{ax + c}`, so both share the closed-form peak and the analytic
//! derivative of `f`. Arbitrary response functions can be plugged in through
//! [`ResponseModel::custom`]; they go through numeric fallbacks everywhere.

mod assumptions;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::QuestionBank;
use crate::error::{Error, Result};
use crate::optimize::{bisect, maximize_unimodal};

pub use assumptions::{check_assumptions, AssumptionCheck, AssumptionReport, Witness};

/// Probabilities are kept inside `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Relative step of the central differences used for non-structured models.
pub const FD_REL_STEP: f64 = 1e-6;

/// Kullback-Leibler divergence `d(q | r)` between Bernoulli(q) and Bernoulli(r).
///
/// Uses `0 ln 0 = 0` for `q` in `{0, 1}`.
pub fn kl_bernoulli(q: f64, r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidProbability(q));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::DegenerateAlternative(r));
    }
    Ok(kl_unchecked(q, r))
}

#[inline]
pub(crate) fn kl_unchecked(q: f64, r: f64) -> f64 {
    let r = r.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let mut d = 0.0;
    if q > 0.0 {
        d += q * ((q - r) / r).ln_1p();
    }
    if q < 1.0 {
        d += (1.0 - q) * ((r - q) / (1.0 - r)).ln_1p();
    }
    d.max(0.0)
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type ResponseFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// User-supplied strictly increasing map with an optional inverse.
#[derive(Clone)]
pub struct CustomMap {
    name: String,
    forward: ScalarFn,
    inverse: Option<ScalarFn>,
}

/// Strictly increasing positive map used for `g` (ability) and `k` (difficulty).
#[derive(Clone, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MonotoneMap {
    #[default]
    Identity,
    /// `v^exponent`, `exponent > 0`.
    Power { exponent: f64 },
    /// `e^{rate v}`, `rate > 0`.
    Exp { rate: f64 },
    /// `factor * v`, `factor > 0`.
    Scale { factor: f64 },
    #[serde(skip)]
    Custom(CustomMap),
}

impl fmt::Debug for MonotoneMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MonotoneMap::Identity => write!(f, "Identity"),
            MonotoneMap::Power { exponent } => write!(f, "Power({exponent})"),
            MonotoneMap::Exp { rate } => write!(f, "Exp({rate})"),
            MonotoneMap::Scale { factor } => write!(f, "Scale({factor})"),
            MonotoneMap::Custom(c) => write!(f, "Custom({})", c.name),
        }
    }
}

impl MonotoneMap {
    /// Wraps a user map. Monotonicity, positivity and (when given) the
    /// inverse are checked on 257 samples of `sample_range`.
    pub fn custom(
        name: impl Into<String>,
        forward: impl Fn(f64) -> f64 + Send + Sync + 'static,
        inverse: Option<ScalarFn>,
        sample_range: (f64, f64),
    ) -> Result<Self> {
        let name = name.into();
        let (lo, hi) = sample_range;
        if !(lo < hi) {
            return Err(Error::InvalidModel(format!("map {name}: empty sample range")));
        }
        let samples = crate::optimize::linspace(lo, hi, 257);
        let values: Vec<f64> = samples.iter().map(|&v| forward(v)).collect();
        if let Some(i) = values.iter().position(|y| !(y.is_finite() && *y > 0.0)) {
            return Err(Error::InvalidModel(format!("map {name} is not finite and positive at {}", samples[i])));
        }
        if let Some(i) = values.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidModel(format!("map {name} is not strictly increasing near {}", samples[i])));
        }
        if let Some(inv) = &inverse {
            for (&v, &y) in samples.iter().zip(&values) {
                if (inv(y) - v).abs() > 1e-8 * (1.0 + v.abs()) {
                    return Err(Error::InvalidModel(format!(
                        "map {name}: inverse does not invert the forward map at {v}"
                    )));
                }
            }
        }
        Ok(MonotoneMap::Custom(CustomMap { name, forward: Arc::new(forward), inverse }))
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidModel(format!("{what} must be positive and finite, got {v}")));
        match *self {
            MonotoneMap::Power { exponent } if !(exponent > 0.0 && exponent.is_finite()) => {
                bad("power exponent", exponent)
            }
            MonotoneMap::Exp { rate } if !(rate > 0.0 && rate.is_finite()) => bad("exp rate", rate),
            MonotoneMap::Scale { factor } if !(factor > 0.0 && factor.is_finite()) => bad("scale factor", factor),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        match self {
            MonotoneMap::Identity => v,
            MonotoneMap::Power { exponent } => v.powf(*exponent),
            MonotoneMap::Exp { rate } => (rate * v).exp(),
            MonotoneMap::Scale { factor } => factor * v,
            MonotoneMap::Custom(c) => (c.forward)(v),
        }
    }

    #[inline]
    pub fn ln_apply(&self, v: f64) -> f64 {
        match self {
            MonotoneMap::Identity => v.ln(),
            MonotoneMap::Power { exponent } => exponent * v.ln(),
            MonotoneMap::Exp { rate } => rate * v,
            MonotoneMap::Scale { factor } => (factor * v).ln(),
            MonotoneMap::Custom(c) => (c.forward)(v).ln(),
        }
    }

    /// Derivative of `ln(map(v))`.
    pub fn dln(&self, v: f64) -> f64 {
        match self {
            MonotoneMap::Identity | MonotoneMap::Scale { .. } => 1.0 / v,
            MonotoneMap::Power { exponent } => exponent / v,
            MonotoneMap::Exp { rate } => *rate,
            MonotoneMap::Custom(_) => {
                let s = FD_REL_STEP * v.abs().max(1e-3);
                (self.ln_apply(v + s) - self.ln_apply(v - s)) / (2.0 * s)
            }
        }
    }

    /// Preimage of `y`, when an inverse is available.
    pub fn invert(&self, y: f64) -> Option<f64> {
        let v = match self {
            MonotoneMap::Identity => y,
            MonotoneMap::Power { exponent } => y.powf(exponent.recip()),
            MonotoneMap::Exp { rate } => y.ln() / rate,
            MonotoneMap::Scale { factor } => y / factor,
            MonotoneMap::Custom(c) => (c.inverse.as_ref()?)(y),
        };
        v.is_finite().then_some(v)
    }

    fn is_serializable(&self) -> bool {
        !matches!(self, MonotoneMap::Custom(_))
    }
}

/// Serializable description of a structured response model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Ratio {
        #[serde(default)]
        g: MonotoneMap,
        #[serde(default)]
        k: MonotoneMap,
    },
    Logit {
        a: f64,
        b: f64,
        #[serde(default)]
        c: f64,
    },
}

/// Arbitrary user response function, evaluated as a black box.
#[derive(Clone)]
pub struct CustomResponse {
    name: String,
    h: ResponseFn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ratio,
    Logit,
    Custom,
}

/// Probability `h(x, p)` that a candidate of ability `p` answers a question
/// of difficulty `x` correctly.
#[derive(Clone)]
pub enum ResponseModel {
    Ratio { g: MonotoneMap, k: MonotoneMap },
    Logit { a: f64, b: f64, c: f64 },
    Custom(CustomResponse),
}

impl fmt::Debug for ResponseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResponseModel::Ratio { g, k } => write!(f, "Ratio {{ g: {g:?}, k: {k:?} }}"),
            ResponseModel::Logit { a, b, c } => write!(f, "Logit {{ a: {a}, b: {b}, c: {c} }}"),
            ResponseModel::Custom(c) => write!(f, "Custom({})", c.name),
        }
    }
}

#[inline]
fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `k(x*) / g(p)` at the peak of `f`, as a function of `t = ln(g(u) / g(p))`:
/// `(e^t t - e^t + 1) / (e^t - 1 - t)`. Series near `t = 0` avoid the 0/0.
fn peak_ratio(t: f64) -> f64 {
    if t.abs() < 1e-2 {
        let num = 0.5 + t * (1.0 / 3.0 + t * (1.0 / 8.0 + t * (1.0 / 30.0 + t * (1.0 / 144.0 + t * (1.0 / 840.0)))));
        let den = 0.5 + t * (1.0 / 6.0 + t * (1.0 / 24.0 + t * (1.0 / 120.0 + t * (1.0 / 720.0 + t * (1.0 / 5040.0)))));
        num / den
    } else {
        let z = t.exp();
        (z * t - z + 1.0) / (z - 1.0 - t)
    }
}

impl ResponseModel {
    /// `h(x, p) = g(p) / (g(p) + k(x))`.
    pub fn ratio(g: MonotoneMap, k: MonotoneMap) -> Result<Self> {
        g.validate()?;
        k.validate()?;
        Ok(ResponseModel::Ratio { g, k })
    }

    /// `h(x, p) = p / (p + x)`.
    pub fn identity_ratio() -> Self {
        ResponseModel::Ratio { g: MonotoneMap::Identity, k: MonotoneMap::Identity }
    }

    /// `h(x, p) = e^{bp} / (e^{bp} + e^{ax + c})`; `a` and `b` must be positive
    /// for `h` to be strictly monotone in both arguments.
    pub fn logit(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::InvalidModel(format!("logit needs a > 0, b > 0 and finite c, got a={a}, b={b}, c={c}")));
        }
        Ok(ResponseModel::Logit { a, b, c })
    }

    pub fn custom(name: impl Into<String>, h: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        ResponseModel::Custom(CustomResponse { name: name.into(), h: Arc::new(h) })
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        match spec {
            ModelSpec::Ratio { g, k } => Self::ratio(g.clone(), k.clone()),
            ModelSpec::Logit { a, b, c } => Self::logit(*a, *b, *c),
        }
    }

    /// Serializable description; `None` for custom functions.
    pub fn spec(&self) -> Option<ModelSpec> {
        match self {
            ResponseModel::Ratio { g, k } if g.is_serializable() && k.is_serializable() => {
                Some(ModelSpec::Ratio { g: g.clone(), k: k.clone() })
            }
            ResponseModel::Logit { a, b, c } => Some(ModelSpec::Logit { a: *a, b: *b, c: *c }),
            _ => None,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ResponseModel::Ratio { .. } => ModelKind::Ratio,
            ResponseModel::Logit { .. } => ModelKind::Logit,
            ResponseModel::Custom(_) => ModelKind::Custom,
        }
    }

    /// True for models of the form `g(p) / (g(p) + k(x))`, logit included.
    pub fn is_ratio_family(&self) -> bool {
        !matches!(self, ResponseModel::Custom(_))
    }

    #[inline]
    pub fn h(&self, x: f64, p: f64) -> f64 {
        match self {
            ResponseModel::Ratio { g, k } => {
                let (gp, kx) = (g.apply(p), k.apply(x));
                gp / (gp + kx)
            }
            ResponseModel::Logit { a, b, c } => logistic(b * p - a * x - c),
            ResponseModel::Custom(m) => (m.h)(x, p),
        }
    }

    /// `(h, 1 - h)` with the complement computed without cancellation.
    #[inline]
    pub fn response_pair(&self, x: f64, p: f64) -> (f64, f64) {
        match self {
            ResponseModel::Ratio { g, k } => {
                let (gp, kx) = (g.apply(p), k.apply(x));
                let s = gp + kx;
                (gp / s, kx / s)
            }
            ResponseModel::Logit { a, b, c } => {
                let z = b * p - a * x - c;
                (logistic(z), logistic(-z))
            }
            ResponseModel::Custom(m) => {
                let h = (m.h)(x, p);
                (h, 1.0 - h)
            }
        }
    }

    /// `dh/dp`.
    pub fn dh_dp(&self, x: f64, p: f64) -> f64 {
        match self {
            ResponseModel::Ratio { g, .. } => {
                let (h, q) = self.response_pair(x, p);
                h * q * g.dln(p)
            }
            ResponseModel::Logit { b, .. } => {
                let (h, q) = self.response_pair(x, p);
                b * h * q
            }
            ResponseModel::Custom(m) => {
                let s = FD_REL_STEP * p.abs().max(1e-3);
                ((m.h)(x, p + s) - (m.h)(x, p - s)) / (2.0 * s)
            }
        }
    }

    /// `ln g(p)` for the ratio family (`bp` for logit).
    fn ln_g(&self, p: f64) -> f64 {
        match self {
            ResponseModel::Ratio { g, .. } => g.ln_apply(p),
            ResponseModel::Logit { b, .. } => b * p,
            ResponseModel::Custom(_) => unreachable!("ln_g is only defined for the ratio family"),
        }
    }

    /// `d ln k(x) / dx` for the ratio family.
    fn dln_k(&self, x: f64) -> f64 {
        match self {
            ResponseModel::Ratio { k, .. } => k.dln(x),
            ResponseModel::Logit { a, .. } => *a,
            ResponseModel::Custom(_) => unreachable!("dln_k is only defined for the ratio family"),
        }
    }

    /// Separation index `f(x) = d(h(x, p) | h(x, u))`.
    pub fn f(&self, x: f64, p: f64, u: f64) -> Result<f64> {
        if p == u {
            return Err(Error::ZeroSeparation { p });
        }
        Ok(kl_unchecked(self.h(x, p), self.h(x, u)))
    }

    /// `df/dx`. Analytic for the ratio family:
    /// `(k'(x)/k(x)) [h_p - h_u + h_p (1 - h_p) ln(g(u)/g(p))]`;
    /// central differences with step `1e-6 x` otherwise.
    pub fn f_prime(&self, x: f64, p: f64, u: f64) -> Result<f64> {
        if p == u {
            return Err(Error::ZeroSeparation { p });
        }
        if self.is_ratio_family() {
            let (hp, qp) = self.response_pair(x, p);
            let hu = self.h(x, u);
            let lz = self.ln_g(u) - self.ln_g(p);
            Ok(self.dln_k(x) * (hp - hu + hp * qp * lz))
        } else {
            let s = FD_REL_STEP * x.abs().max(1e-3);
            Ok((self.f(x + s, p, u)? - self.f(x - s, p, u)?) / (2.0 * s))
        }
    }

    /// Unconstrained peak of `f` from the closed form, when `k` is invertible.
    pub fn peak_closed_form(&self, p: f64, u: f64) -> Option<f64> {
        if !self.is_ratio_family() || p == u {
            return None;
        }
        let lz = self.ln_g(u) - self.ln_g(p);
        let ln_k_star = self.ln_g(p) + peak_ratio(lz).ln();
        let x = match self {
            ResponseModel::Ratio { k, .. } => k.invert(ln_k_star.exp())?,
            ResponseModel::Logit { a, c, .. } => (ln_k_star - c) / a,
            ResponseModel::Custom(_) => return None,
        };
        x.is_finite().then_some(x)
    }

    /// Maximizer `x*(p, u)` of `f` over the bank.
    ///
    /// Closed form clamped to the bank for the ratio family (the better of the
    /// two neighbouring levels for finite banks); numeric maximization
    /// otherwise.
    pub fn x_star(&self, p: f64, u: f64, bank: &QuestionBank) -> Result<f64> {
        if p == u {
            return Err(Error::ZeroSeparation { p });
        }
        let f = |x: f64| kl_unchecked(self.h(x, p), self.h(x, u));
        let closed = self.peak_closed_form(p, u);
        Ok(match (bank, closed) {
            (QuestionBank::Interval { lo, hi }, Some(x)) => x.clamp(*lo, *hi),
            (QuestionBank::Interval { lo, hi }, None) => maximize_unimodal(f, *lo, *hi, 1e-12 * hi.abs().max(1.0)),
            (QuestionBank::Finite { levels }, Some(x)) => {
                let idx = levels.partition_point(|&l| l < x);
                let below = levels[idx.saturating_sub(1)];
                let above = levels[idx.min(levels.len() - 1)];
                if f(above) > f(below) {
                    above
                } else {
                    below
                }
            }
            (QuestionBank::Finite { levels }, None) => {
                levels
                    .iter()
                    .copied()
                    .fold((levels[0], f64::NEG_INFINITY), |acc, x| {
                        let v = f(x);
                        if v > acc.1 {
                            (x, v)
                        } else {
                            acc
                        }
                    })
                    .0
            }
        })
    }

    /// Bank level where `h(x, p) = 1/2`, the `u -> p` limit of `x*(p, u)`.
    pub fn median_level(&self, p: f64, bank: &QuestionBank) -> f64 {
        let (lo, hi) = (bank.lo(), bank.hi());
        let g = |x: f64| self.h(x, p) - 0.5;
        let x = if g(lo) <= 0.0 {
            lo
        } else if g(hi) >= 0.0 {
            hi
        } else {
            bisect(g, lo, hi, 1e-12, 200).0
        };
        bank.snap(x)
    }
}
