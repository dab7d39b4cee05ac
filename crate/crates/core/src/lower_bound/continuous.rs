//! Interval banks: case analysis on the peaks of the two separations.

use log::warn;
use serde::{Deserialize, Serialize};

use super::{bracket_thresholds, solve_finite, LowerBoundSolution, SolutionCase, SolveMode};
use crate::domain::{GradeScheme, QuestionBank};
use crate::error::{Error, Result};
use crate::optimize::linspace;
use crate::response_models::ResponseModel;

/// Coarse grid size of the two-level fallback.
pub const FALLBACK_GRID_POINTS: usize = 512;
/// Points in each refinement window of the fallback.
pub const REFINE_POINTS: usize = 128;
const MONOTONE_CHECK_POINTS: usize = 256;
const CROSSING_REL_TOL: f64 = 1e-10;
const CROSSING_MAX_ITER: usize = 200;

/// The separations of `p` from the thresholds bounding its bracket:
/// `f1` against `u_lo`, `f2` against `u_hi`.
#[derive(Debug, Clone, Copy)]
pub struct SeparationPair<'a> {
    pub model: &'a ResponseModel,
    pub p: f64,
    pub u_lo: f64,
    pub u_hi: f64,
}

impl<'a> SeparationPair<'a> {
    pub fn new(model: &'a ResponseModel, p: f64, u_lo: f64, u_hi: f64) -> Result<Self> {
        if !(u_lo < p && p < u_hi) {
            return Err(Error::InvalidConstraint(format!("need u_lo < p < u_hi, got {u_lo} < {p} < {u_hi}")));
        }
        Ok(Self { model, p, u_lo, u_hi })
    }

    pub fn f1(&self, x: f64) -> f64 {
        self.model.f(x, self.p, self.u_lo).expect("p differs from u_lo")
    }

    pub fn f2(&self, x: f64) -> f64 {
        self.model.f(x, self.p, self.u_hi).expect("p differs from u_hi")
    }

    pub fn f1_prime(&self, x: f64) -> f64 {
        self.model.f_prime(x, self.p, self.u_lo).expect("p differs from u_lo")
    }

    pub fn f2_prime(&self, x: f64) -> f64 {
        self.model.f_prime(x, self.p, self.u_hi).expect("p differs from u_hi")
    }

    /// Peaks `(x1*, x2*)` of `f1` and `f2` over the bank.
    pub fn peaks(&self, bank: &QuestionBank) -> Result<(f64, f64)> {
        Ok((self.model.x_star(self.p, self.u_lo, bank)?, self.model.x_star(self.p, self.u_hi, bank)?))
    }

    /// Dual weight making `lambda f1' + (1 - lambda) f2'` vanish at `x`.
    fn crossing_lambda(&self, x: f64) -> f64 {
        let (d1, d2) = (self.f1_prime(x), self.f2_prime(x));
        let den = d2 - d1;
        if den == 0.0 {
            0.5
        } else {
            (d2 / den).clamp(0.0, 1.0)
        }
    }

    /// Whether `f1'/f2'` is strictly decreasing on a sample of `(lo, hi)`.
    fn derivative_ratio_decreasing(&self, lo: f64, hi: f64) -> bool {
        let xs = linspace(lo, hi, MONOTONE_CHECK_POINTS + 2);
        let ratios: Vec<f64> =
            xs[1..=MONOTONE_CHECK_POINTS].iter().map(|&x| self.f1_prime(x) / self.f2_prime(x)).collect();
        ratios.iter().all(|r| r.is_finite()) && ratios.windows(2).all(|w| w[1] < w[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseKind {
    C1,
    C2,
    C3,
}

fn classify(pair: &SeparationPair, x1s: f64, x2s: f64) -> CaseKind {
    if pair.f1(x2s) >= pair.f2(x2s) {
        CaseKind::C1
    } else if pair.f2(x1s) >= pair.f1(x1s) {
        CaseKind::C2
    } else {
        CaseKind::C3
    }
}

/// C1 if `f1(x2*) >= f2(x2*)`, C2 if `f2(x1*) >= f1(x1*)`, C3 otherwise.
pub fn classify_case(model: &ResponseModel, p: f64, u_lo: f64, u_hi: f64, bank: &QuestionBank) -> Result<CaseKind> {
    let pair = SeparationPair::new(model, p, u_lo, u_hi)?;
    let (x1s, x2s) = pair.peaks(bank)?;
    Ok(classify(&pair, x1s, x2s))
}

fn crossing(pair: &SeparationPair, x1s: f64, x2s: f64) -> Result<f64> {
    let gap = |x: f64| pair.f1(x) - pair.f2(x);
    if !(gap(x1s) > 0.0 && gap(x2s) < 0.0) {
        return Err(Error::CaseMismatch { lo: x1s, hi: x2s });
    }
    let (mut lo, mut hi) = (x1s, x2s);
    for _ in 0..CROSSING_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let (a, b) = (pair.f1(mid), pair.f2(mid));
        if (a - b).abs() <= CROSSING_REL_TOL * a.max(b) || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if a > b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    warn!("crossing search hit its iteration budget on [{lo}, {hi}]");
    Ok(0.5 * (lo + hi))
}

/// Level `x` in `(x1*, x2*)` where `f1(x) = f2(x)`, the single-question
/// optimum in case C3.
pub fn solve_single_question(model: &ResponseModel, p: f64, u_lo: f64, u_hi: f64, bank: &QuestionBank) -> Result<f64> {
    let pair = SeparationPair::new(model, p, u_lo, u_hi)?;
    let (x1s, x2s) = pair.peaks(bank)?;
    crossing(&pair, x1s, x2s)
}

/// Result of the grid LP used when a single question cannot be certified.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFallback {
    pub solution: LowerBoundSolution,
    /// The refined grid the final LP was solved on.
    pub grid: Vec<f64>,
}

/// LP on an equispaced grid over `[lo, hi]`, refined once in windows of one
/// grid spacing around the chosen levels.
pub fn solve_grid_fallback(pair: &SeparationPair, lo: f64, hi: f64) -> Result<GridFallback> {
    let lp = |grid: &[f64]| {
        let f1: Vec<f64> = grid.iter().map(|&x| pair.f1(x)).collect();
        let f2: Vec<f64> = grid.iter().map(|&x| pair.f2(x)).collect();
        solve_finite(grid, &f1, &f2)
    };
    let coarse = linspace(lo, hi, FALLBACK_GRID_POINTS);
    let first = lp(&coarse)?;
    let spacing = (hi - lo) / (FALLBACK_GRID_POINTS - 1) as f64;
    let mut grid = coarse;
    for x in [first.x1, first.x2] {
        grid.extend(linspace((x - spacing).max(lo), (x + spacing).min(hi), REFINE_POINTS));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut solution = lp(&grid)?;
    solution.case = SolutionCase::C3TwoLevel;
    Ok(GridFallback { solution, grid })
}

/// Solves the program on an interval bank.
///
/// - C1: one level at `x2*`, `lambda = 0`;
/// - C2: one level at `x1*`, `lambda = 1`;
/// - C3 with `f1'/f2'` decreasing (always so for the ratio family): one level
///   at the crossing of `f1` and `f2`;
/// - C3 otherwise: the grid LP of [`solve_grid_fallback`] on `[x1*, x2*]`.
///
/// In [`SolveMode::RestrictedSingle`] the plan is always the maximizer of
/// `min(f1, f2)` and `restricted_gap` records its excess over the exact `m*`.
pub fn solve_continuous(
    model: &ResponseModel,
    p: f64,
    grades: &GradeScheme,
    bank: &QuestionBank,
    mode: SolveMode,
) -> Result<LowerBoundSolution> {
    if let QuestionBank::Finite { levels } = bank {
        return super::solve_on_levels(model, p, grades, levels);
    }
    let (u_lo, u_hi) = match bracket_thresholds(p, grades)? {
        (Some(lo), Some(hi)) => (lo, hi),
        (None, Some(hi)) => {
            let x = model.x_star(p, hi, bank)?;
            return Ok(LowerBoundSolution::single(x, 1.0 / model.f(x, p, hi)?, 0.0, SolutionCase::C1));
        }
        (Some(lo), None) => {
            let x = model.x_star(p, lo, bank)?;
            return Ok(LowerBoundSolution::single(x, 1.0 / model.f(x, p, lo)?, 1.0, SolutionCase::C2));
        }
        (None, None) => unreachable!("bracket_thresholds rejects schemes without thresholds"),
    };
    let pair = SeparationPair::new(model, p, u_lo, u_hi)?;
    let (x1s, x2s) = pair.peaks(bank)?;
    match classify(&pair, x1s, x2s) {
        CaseKind::C1 => Ok(LowerBoundSolution::single(x2s, 1.0 / pair.f2(x2s), 0.0, SolutionCase::C1)),
        CaseKind::C2 => Ok(LowerBoundSolution::single(x1s, 1.0 / pair.f1(x1s), 1.0, SolutionCase::C2)),
        CaseKind::C3 => {
            let xb = crossing(&pair, x1s, x2s)?;
            let single_optimal = model.is_ratio_family() || pair.derivative_ratio_decreasing(x1s, x2s);
            let lambda = pair.crossing_lambda(xb);
            let m_single = 1.0 / pair.f1(xb).min(pair.f2(xb));
            if single_optimal {
                return Ok(LowerBoundSolution::single(xb, m_single, lambda, SolutionCase::C3Single));
            }
            let exact = solve_grid_fallback(&pair, x1s, x2s)?.solution;
            Ok(match mode {
                SolveMode::Exact => exact,
                SolveMode::RestrictedSingle => {
                    let mut s = LowerBoundSolution::single(xb, m_single, lambda, SolutionCase::C3Single);
                    s.restricted_gap = (m_single - exact.m_star).max(0.0);
                    s
                }
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AbilityDomain;

    fn bank() -> QuestionBank {
        QuestionBank::interval(2.0, 10.0).unwrap()
    }

    fn wide() -> QuestionBank {
        QuestionBank::interval(0.01, 1000.0).unwrap()
    }

    fn grades() -> GradeScheme {
        GradeScheme::new(vec![4.0, 7.0, 10.0], AbilityDomain::new(1.0, 13.0).unwrap()).unwrap()
    }

    #[test]
    fn classification_examples() {
        let m = ResponseModel::identity_ratio();
        assert_eq!(classify_case(&m, 5.5, 4.0, 7.0, &bank()).unwrap(), CaseKind::C1);
        assert_eq!(classify_case(&m, 4.2, 4.0, 7.0, &bank()).unwrap(), CaseKind::C2);
        assert_eq!(classify_case(&m, 8.5, 1.0, 100.0, &wide()).unwrap(), CaseKind::C3);
        assert!(classify_case(&m, 4.0, 4.0, 7.0, &bank()).is_err());
    }

    #[test]
    fn reference_instance() {
        let m = ResponseModel::identity_ratio();
        let s = solve_continuous(&m, 5.5, &grades(), &bank(), SolveMode::Exact).unwrap();
        assert_eq!(s.case, SolutionCase::C1);
        assert!((s.x1 - 5.96).abs() < 0.01);
        assert!((s.m_star - 137.66).abs() < 0.05, "{}", s.m_star);
        assert_eq!((s.w, s.lambda, s.restricted_gap), (1.0, 0.0, 0.0));
        let r = solve_continuous(&m, 5.5, &grades(), &bank(), SolveMode::RestrictedSingle).unwrap();
        assert_eq!(r, s);
    }

    #[test]
    fn crossing_in_c3() {
        let m = ResponseModel::identity_ratio();
        let pair = SeparationPair::new(&m, 8.5, 1.0, 100.0).unwrap();
        let (x1s, x2s) = pair.peaks(&wide()).unwrap();
        let xb = solve_single_question(&m, 8.5, 1.0, 100.0, &wide()).unwrap();
        assert!(x1s < xb && xb < x2s);
        let (a, b) = (pair.f1(xb), pair.f2(xb));
        assert!((a - b).abs() <= 1e-10 * a.max(b));
        assert!(matches!(solve_single_question(&m, 5.5, 4.0, 7.0, &bank()), Err(Error::CaseMismatch { .. })));
    }
}
