//! Grid-based numeric verification of the structural assumptions on `h`.

use serde::Serialize;

use super::ResponseModel;
use crate::domain::{AbilityDomain, QuestionBank};
use crate::optimize::linspace;

const X_POINTS: usize = 41;
const P_POINTS: usize = 25;
const PAIR_POINTS: usize = 9;
const F_PRIME_POINTS: usize = 257;
/// Mixed partials below `-MIXED_TOL` count as violations; smaller negatives
/// are finite-difference noise.
const MIXED_TOL: f64 = 1e-7;

/// Grid point at which a check failed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Witness {
    pub x: f64,
    pub p: f64,
    /// Alternative ability, for checks on `f`.
    pub u: Option<f64>,
    /// Offending value (probability, difference or derivative).
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &'static str, witness: Option<Witness>) -> AssumptionCheck {
    AssumptionCheck { name, passed: witness.is_none(), witness }
}

fn x_grid(bank: &QuestionBank, count: usize) -> Vec<f64> {
    match bank {
        QuestionBank::Finite { levels } if levels.len() >= 2 => levels.clone(),
        _ if bank.lo() == bank.hi() => vec![bank.lo()],
        _ => linspace(bank.lo(), bank.hi(), count),
    }
}

/// Central-difference estimate of `d^2 F / dx dp`.
fn mixed_partial(f: impl Fn(f64, f64) -> f64, x: f64, p: f64) -> f64 {
    let s = 1e-4 * x.abs().max(1.0);
    let t = 1e-4 * p.abs().max(1.0);
    (f(x + s, p + t) - f(x + s, p - t) - f(x - s, p + t) + f(x - s, p - t)) / (4.0 * s * t)
}

/// Checks, on grids over `bank` and `domain`:
///
/// - `h_in_unit_interval`: `0 < h < 1`;
/// - `h_decreasing_in_x`, `h_increasing_in_p`: strict monotonicity between
///   neighbouring grid points;
/// - `log_h_supermodular`, `log_one_minus_h_supermodular`: nonnegative mixed
///   partials of `ln h` and `ln(1 - h)`;
/// - `f_prime_single_sign_change`: for every pair `p != u`, `f'` changes sign
///   at most once, from positive to negative.
///
/// Failures carry the first witnessing grid point.
pub fn check_assumptions(model: &ResponseModel, bank: &QuestionBank, domain: &AbilityDomain) -> AssumptionReport {
    let xs = x_grid(bank, X_POINTS);
    let ps = linspace(domain.lo(), domain.hi(), P_POINTS);
    let grid = || xs.iter().flat_map(|&x| ps.iter().map(move |&p| (x, p)));

    let range = grid().find_map(|(x, p)| {
        let h = model.h(x, p);
        (!(h > 0.0 && h < 1.0)).then_some(Witness { x, p, u: None, value: h })
    });

    let dec_x = ps.iter().find_map(|&p| {
        xs.windows(2).find_map(|w| {
            let d = model.h(w[1], p) - model.h(w[0], p);
            (d >= 0.0).then_some(Witness { x: w[0], p, u: None, value: d })
        })
    });

    let inc_p = xs.iter().find_map(|&x| {
        ps.windows(2).find_map(|w| {
            let d = model.h(x, w[1]) - model.h(x, w[0]);
            (d <= 0.0).then_some(Witness { x, p: w[0], u: None, value: d })
        })
    });

    let supermod = |lnf: &dyn Fn(f64, f64) -> f64| {
        grid().find_map(|(x, p)| {
            let v = mixed_partial(lnf, x, p);
            (!(v >= -MIXED_TOL)).then_some(Witness { x, p, u: None, value: v })
        })
    };
    let log_h = supermod(&|x, p| model.response_pair(x, p).0.ln());
    let log_q = supermod(&|x, p| model.response_pair(x, p).1.ln());

    let fx = x_grid(bank, F_PRIME_POINTS);
    let pair_grid = linspace(domain.lo(), domain.hi(), PAIR_POINTS);
    let single_peak = pair_grid.iter().find_map(|&p| {
        pair_grid.iter().filter(|&&u| u != p).find_map(|&u| {
            let mut seen_negative = false;
            fx.iter().find_map(|&x| {
                let d = model.f_prime(x, p, u).ok()?;
                // derivatives at the level of rounding noise carry no sign
                if d.abs() < 1e-13 {
                    return None;
                }
                if d < 0.0 {
                    seen_negative = true;
                    None
                } else if seen_negative {
                    Some(Witness { x, p, u: Some(u), value: d })
                } else {
                    None
                }
            })
        })
    });

    AssumptionReport {
        checks: vec![
            check("h_in_unit_interval", range),
            check("h_decreasing_in_x", dec_x),
            check("h_increasing_in_p", inc_p),
            check("log_h_supermodular", log_h),
            check("log_one_minus_h_supermodular", log_q),
            check("f_prime_single_sign_change", single_peak),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response_models::MonotoneMap;

    fn bank() -> QuestionBank {
        QuestionBank::interval(2.0, 10.0).unwrap()
    }

    fn domain() -> AbilityDomain {
        AbilityDomain::new(1.0, 13.0).unwrap()
    }

    #[test]
    fn structured_models_pass() {
        for m in [
            ResponseModel::identity_ratio(),
            ResponseModel::logit(1.0, 1.0, 0.0).unwrap(),
            ResponseModel::ratio(MonotoneMap::Power { exponent: 2.0 }, MonotoneMap::Identity).unwrap(),
        ] {
            let report = check_assumptions(&m, &bank(), &domain());
            assert!(report.all_passed(), "{m:?}: {report:?}");
        }
    }

    #[test]
    fn non_monotone_model_fails_with_witness() {
        let m = ResponseModel::custom("wavy", |x: f64, p: f64| 0.5 + 0.3 * (x - p).sin());
        let report = check_assumptions(&m, &bank(), &domain());
        let c = report.get("h_decreasing_in_x").unwrap();
        assert!(!c.passed);
        let w = c.witness.unwrap();
        assert!(model_rises(&m, w));
        assert!(!report.all_passed());
    }

    fn model_rises(m: &ResponseModel, w: Witness) -> bool {
        w.value >= 0.0 && bank().lo() <= w.x && w.x <= bank().hi() && m.h(w.x, w.p).is_finite()
    }

    #[test]
    fn out_of_range_model_is_reported() {
        let m = ResponseModel::custom("flat", |_x, _p| 1.0);
        let report = check_assumptions(&m, &bank(), &domain());
        assert!(!report.get("h_in_unit_interval").unwrap().passed);
    }

    #[test]
    fn finite_bank_uses_its_levels() {
        let b = QuestionBank::finite(vec![2.0, 4.0, 9.0]).unwrap();
        assert!(check_assumptions(&ResponseModel::identity_ratio(), &b, &domain()).all_passed());
    }
}
