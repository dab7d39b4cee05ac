//! Response histories and maximum-likelihood ability estimates.

use serde::{Deserialize, Serialize};

use crate::domain::AbilityDomain;
use crate::error::{Error, Result};
use crate::optimize::{bisect, golden_section_max};
use crate::response_models::{ResponseModel, PROB_CLAMP};

/// Estimates are kept this far inside the ability domain.
pub const BOUNDARY_EPS: f64 = 1e-9;
/// Absolute tolerance of the ability searches.
pub const MLE_TOL: f64 = 1e-10;
/// Bracket width at which golden section hands over to the score bisection.
const GOLDEN_HANDOVER: f64 = 1e-5;

/// One asked question and its outcome (1 = correct).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub level: f64,
    pub outcome: u8,
}

/// Per-level counts: `n` questions asked at `level`, `s` answered correctly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelTally {
    pub level: f64,
    pub n: u64,
    pub s: u64,
}

/// Ordered question/response history with per-level aggregates.
///
/// Serializes as its step sequence; aggregates are rebuilt on load.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Step>", into = "Vec<Step>")]
pub struct History {
    steps: Vec<Step>,
    /// Sorted by level.
    tallies: Vec<LevelTally>,
    successes: u64,
}

impl TryFrom<Vec<Step>> for History {
    type Error = Error;

    fn try_from(steps: Vec<Step>) -> Result<Self> {
        let mut h = History::new();
        for s in steps {
            h.push(s.level, s.outcome)?;
        }
        Ok(h)
    }
}

impl From<History> for Vec<Step> {
    fn from(h: History) -> Self {
        h.steps
    }
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, level: f64, outcome: u8) -> Result<()> {
        if outcome > 1 {
            return Err(Error::InvalidOutcome(outcome));
        }
        if !level.is_finite() {
            return Err(Error::InvalidBank(format!("question level {level} is not finite")));
        }
        self.steps.push(Step { level, outcome });
        let s = u64::from(outcome);
        self.successes += s;
        match self.tallies.binary_search_by(|t| t.level.total_cmp(&level)) {
            Ok(i) => {
                self.tallies[i].n += 1;
                self.tallies[i].s += s;
            }
            Err(i) => self.tallies.insert(i, LevelTally { level, n: 1, s }),
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Distinct levels with their counts, sorted by level.
    pub fn tallies(&self) -> &[LevelTally] {
        &self.tallies
    }

    pub fn successes(&self) -> u64 {
        self.successes
    }
}

/// `sum_j I_j ln h(X_j, p) + (1 - I_j) ln(1 - h(X_j, p))`, evaluated over the
/// per-level aggregates.
pub fn log_likelihood(model: &ResponseModel, history: &History, p: f64) -> f64 {
    history
        .tallies()
        .iter()
        .map(|t| {
            let (h, q) = model.response_pair(t.level, p);
            let mut ll = 0.0;
            if t.s > 0 {
                ll += t.s as f64 * h.max(PROB_CLAMP).ln();
            }
            if t.n > t.s {
                ll += (t.n - t.s) as f64 * q.max(PROB_CLAMP).ln();
            }
            ll
        })
        .sum()
}

/// `d/dp` of the log-likelihood.
pub fn score(model: &ResponseModel, history: &History, p: f64) -> f64 {
    history
        .tallies()
        .iter()
        .map(|t| {
            let (h, q) = model.response_pair(t.level, p);
            let dh = model.dh_dp(t.level, p);
            dh * (t.s as f64 / h.max(PROB_CLAMP) - (t.n - t.s) as f64 / q.max(PROB_CLAMP))
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Lower,
    Upper,
}

/// MLE together with a flag telling whether it was clamped to the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleEstimate {
    pub value: f64,
    pub boundary: Option<Boundary>,
}

fn search_range(domain: &AbilityDomain) -> (f64, f64) {
    (domain.lo() + BOUNDARY_EPS, domain.hi() - BOUNDARY_EPS)
}

/// Maximum-likelihood ability over the domain.
///
/// For the ratio family the likelihood equation reduces to
/// `sum_j I_j = sum_j h(X_j, p)`, whose right side increases in `p`; it is
/// solved by bisection. Other models go through [`mle_generic`].
pub fn mle(model: &ResponseModel, history: &History, domain: &AbilityDomain) -> Result<MleEstimate> {
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    if !model.is_ratio_family() {
        return mle_generic(model, history, domain);
    }
    let (lo, hi) = search_range(domain);
    let target = history.successes() as f64;
    let excess =
        |p: f64| -> f64 { target - history.tallies().iter().map(|t| t.n as f64 * model.h(t.level, p)).sum::<f64>() };
    if excess(lo) <= 0.0 {
        return Ok(MleEstimate { value: lo, boundary: Some(Boundary::Lower) });
    }
    if excess(hi) >= 0.0 {
        return Ok(MleEstimate { value: hi, boundary: Some(Boundary::Upper) });
    }
    let (value, _) = bisect(excess, lo, hi, MLE_TOL, 200);
    Ok(MleEstimate { value, boundary: None })
}

/// MLE for any model with a quasi-concave likelihood: golden section on the
/// log-likelihood, finished by bisection on the sign of the score.
pub fn mle_generic(model: &ResponseModel, history: &History, domain: &AbilityDomain) -> Result<MleEstimate> {
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let (lo, hi) = search_range(domain);
    let d = |p: f64| score(model, history, p);
    if d(lo) <= 0.0 {
        return Ok(MleEstimate { value: lo, boundary: Some(Boundary::Lower) });
    }
    if d(hi) >= 0.0 {
        return Ok(MleEstimate { value: hi, boundary: Some(Boundary::Upper) });
    }
    let (a, b) = golden_section_max(|p| log_likelihood(model, history, p), lo, hi, GOLDEN_HANDOVER);
    let (a, b) = (a.max(lo), b.min(hi));
    // the score changes sign once on [lo, hi]; fall back to that bracket if
    // rounding kept the maximizer out of the golden-section one
    let (a, b) = if d(a) > 0.0 && d(b) < 0.0 { (a, b) } else { (lo, hi) };
    let value = bisect(d, a, b, MLE_TOL, 200).0;
    Ok(MleEstimate { value, boundary: None })
}

/// The ability `p` solving `h(level, p) = s / n`, clamped to the domain.
pub fn per_level_mle(model: &ResponseModel, level: f64, s: u64, n: u64, domain: &AbilityDomain) -> Result<f64> {
    if n == 0 || s > n {
        return Err(Error::InvalidConfig(format!("need 0 <= s <= n and n >= 1, got s={s}, n={n}")));
    }
    let (lo, hi) = search_range(domain);
    let q = s as f64 / n as f64;
    if s == 0 {
        return Ok(lo);
    }
    if s == n {
        return Ok(hi);
    }
    let g = |p: f64| model.h(level, p) - q;
    if g(lo) >= 0.0 {
        return Ok(lo);
    }
    if g(hi) <= 0.0 {
        return Ok(hi);
    }
    Ok(bisect(g, lo, hi, 0.0, 200).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn domain() -> AbilityDomain {
        AbilityDomain::new(1.0, 13.0).unwrap()
    }

    fn history(level: f64, s: u64, n: u64) -> History {
        let mut h = History::new();
        for i in 0..n {
            h.push(level, u8::from(i < s)).unwrap();
        }
        h
    }

    #[test]
    fn likelihood_single_term() {
        let m = ResponseModel::identity_ratio();
        let h = history(5.0, 1, 1);
        assert!((log_likelihood(&m, &h, 5.0) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn aggregates_track_steps() {
        let mut h = History::new();
        for (x, o) in [(3.0, 1), (5.0, 0), (3.0, 0), (4.0, 1)] {
            h.push(x, o).unwrap();
        }
        let levels: Vec<f64> = h.tallies().iter().map(|t| t.level).collect();
        assert_eq!(levels, [3.0, 4.0, 5.0]);
        assert_eq!((h.tallies()[0].n, h.tallies()[0].s), (2, 1));
        assert_eq!(h.successes(), 2);
        assert_eq!(h.push(1.0, 2), Err(Error::InvalidOutcome(2)));
        let json = serde_json::to_string(&h).unwrap();
        let back: History = serde_json::from_str(&json).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn mle_examples() {
        let m = ResponseModel::identity_ratio();
        let e = mle(&m, &history(5.0, 5, 10), &domain()).unwrap();
        assert!((e.value - 5.0).abs() < 1e-9 && e.boundary.is_none());
        let e = mle(&m, &history(4.0, 3, 4), &domain()).unwrap();
        assert!((e.value - 12.0).abs() < 1e-9);
        let e = mle(&m, &history(4.0, 4, 4), &domain()).unwrap();
        assert_eq!(e, MleEstimate { value: 13.0 - BOUNDARY_EPS, boundary: Some(Boundary::Upper) });
        let e = mle(&m, &history(4.0, 0, 4), &domain()).unwrap();
        assert_eq!(e.boundary, Some(Boundary::Lower));
        assert_eq!(mle(&m, &History::new(), &domain()), Err(Error::EmptyHistory));
    }

    #[test]
    fn generic_agrees_on_mixed_history() {
        let m = ResponseModel::identity_ratio();
        let mut h = history(3.0, 2, 5);
        for i in 0..7 {
            h.push(8.0, u8::from(i % 3 == 0)).unwrap();
        }
        let a = mle(&m, &h, &domain()).unwrap().value;
        let b = mle_generic(&m, &h, &domain()).unwrap().value;
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        assert!(log_likelihood(&m, &h, a) >= log_likelihood(&m, &h, a + 1e-4));
        assert!(log_likelihood(&m, &h, a) >= log_likelihood(&m, &h, a - 1e-4));
    }

    #[test]
    fn per_level_examples() {
        let m = ResponseModel::identity_ratio();
        assert!((per_level_mle(&m, 5.0, 5, 10, &domain()).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(per_level_mle(&m, 5.0, 0, 10, &domain()).unwrap(), 1.0 + BOUNDARY_EPS);
        let p = per_level_mle(&m, 5.0, 3, 10, &domain()).unwrap();
        assert!((m.h(5.0, p) - 0.3).abs() < 1e-10);
        // the unconstrained root 45 exceeds the domain
        assert_eq!(per_level_mle(&m, 5.0, 9, 10, &domain()).unwrap(), 13.0 - BOUNDARY_EPS);
    }
}
