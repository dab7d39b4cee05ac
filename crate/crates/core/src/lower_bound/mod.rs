//! The sample-complexity lower bound.
//!
//! For an ability `p` in the grade bracket `[u_lo, u_hi)`, let
//! `f1(x) = d(h(x,p) | h(x,u_lo))` and `f2(x) = d(h(x,p) | h(x,u_hi))`. Any
//! δ-correct test needs on average at least `m* ln(1/(2.4δ))` questions, where
//!
//! ```text
//! 1/m* = max over plans w of  min_j  E_w[f_j(X)]
//! ```
//!
//! and the maximizing plan puts its mass on at most two levels. This module
//! solves that program for finite banks (as a two-constraint LP) and for
//! interval banks (via the case analysis on the peaks of `f1` and `f2`).

mod continuous;
mod envelope;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{GradeScheme, QuestionBank};
use crate::error::{Error, Result};
use crate::response_models::ResponseModel;

pub use continuous::{
    classify_case, solve_continuous, solve_grid_fallback, solve_single_question, CaseKind, GridFallback,
    SeparationPair, FALLBACK_GRID_POINTS, REFINE_POINTS,
};
pub use envelope::{lower_envelope, solve_two_constraint_lp, EnvelopePoint, LpSolution, MIN_SEPARATION};

/// Relative distance to a grade threshold below which an ability is treated
/// as sitting on the threshold.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Which structural case produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolutionCase {
    /// The upper constraint binds alone: one level at the peak of `f2`.
    C1,
    /// The lower constraint binds alone: one level at the peak of `f1`.
    C2,
    /// Both bind at a single crossing level.
    #[serde(rename = "C3_single")]
    C3Single,
    /// Both bind and the optimal plan mixes two levels.
    #[serde(rename = "C3_two_level")]
    C3TwoLevel,
    /// Solved as an LP over a finite set of levels.
    #[serde(rename = "FiniteLP")]
    FiniteLp,
}

/// Optimal question plan and the value of the lower-bound program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundSolution {
    /// `m*`, the optimal number of questions per unit of `ln(1/(2.4δ))`.
    pub m_star: f64,
    pub x1: f64,
    pub x2: f64,
    /// Probability of asking `x1`; `x1 == x2` and `w == 1` for single-level plans.
    pub w: f64,
    /// Dual weight on the lower-threshold constraint.
    pub lambda: f64,
    pub case: SolutionCase,
    /// Excess of the single-question value over the exact value; zero unless
    /// the plan was solved in restricted mode.
    pub restricted_gap: f64,
}

impl LowerBoundSolution {
    pub(crate) fn single(x: f64, m_star: f64, lambda: f64, case: SolutionCase) -> Self {
        Self { m_star, x1: x, x2: x, w: 1.0, lambda, case, restricted_gap: 0.0 }
    }

    pub fn is_single_level(&self) -> bool {
        self.w >= 1.0 || self.x1 == self.x2
    }

    /// Draws a level from the plan. Single-level plans consume no randomness.
    pub fn sample_level<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.w >= 1.0 {
            self.x1
        } else if self.w <= 0.0 {
            self.x2
        } else if rng.gen::<f64>() < self.w {
            self.x1
        } else {
            self.x2
        }
    }

    /// Primal value `min_j E_w[f_j]` of the plan, given the two separations.
    pub fn plan_value(&self, f1: impl Fn(f64) -> f64, f2: impl Fn(f64) -> f64) -> f64 {
        let mix = |f: &dyn Fn(f64) -> f64| self.w * f(self.x1) + (1.0 - self.w) * f(self.x2);
        mix(&f1).min(mix(&f2))
    }
}

/// Single-question versus exact solving of the continuous program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    #[default]
    Exact,
    /// Restrict the plan to one level, the maximizer of `min(f1, f2)`.
    RestrictedSingle,
}

/// `m*` together with the scaled bound on the expected number of questions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub m_star: f64,
    pub delta: f64,
    /// `m* ln(1/(2.4δ))`, floored at zero for very large δ.
    pub expected_questions: f64,
}

pub fn report(solution: &LowerBoundSolution, delta: f64) -> LowerBoundReport {
    LowerBoundReport {
        m_star: solution.m_star,
        delta,
        expected_questions: solution.m_star * (1.0 / (2.4 * delta)).ln().max(0.0),
    }
}

/// Grade thresholds adjacent to `p`: `(u_lo, u_hi)`, `None` on the extreme
/// brackets where only one alternative exists.
pub fn bracket_thresholds(p: f64, grades: &GradeScheme) -> Result<(Option<f64>, Option<f64>)> {
    let domain = grades.domain();
    if !domain.contains(p) {
        return Err(Error::AbilityOutOfDomain { p, lo: domain.lo(), hi: domain.hi() });
    }
    if grades.thresholds().is_empty() {
        return Err(Error::InvalidGrades("at least one grade threshold is needed".into()));
    }
    if let Some(u) = grades.nearest_threshold(p) {
        if (p - u).abs() <= DEGENERACY_TOL * u.abs().max(1.0) {
            return Err(Error::DegenerateAbility { p, threshold: u });
        }
    }
    let b = grades.bracket_of(p);
    let t = grades.thresholds();
    let lo = (b.index > 0).then(|| t[b.index - 1]);
    let hi = t.get(b.index).copied();
    Ok((lo, hi))
}

/// Solves the lower-bound program over a finite set of levels.
///
/// Levels where either separation is below [`MIN_SEPARATION`] are dropped;
/// if none remain the instance is infeasible.
pub fn solve_finite(levels: &[f64], f1: &[f64], f2: &[f64]) -> Result<LowerBoundSolution> {
    if levels.len() != f1.len() || levels.len() != f2.len() {
        return Err(Error::InvalidConstraint("levels and separations differ in length".into()));
    }
    let keep: Vec<usize> = (0..levels.len()).filter(|&i| f1[i] >= MIN_SEPARATION && f2[i] >= MIN_SEPARATION).collect();
    if keep.is_empty() {
        return Err(Error::InfeasibleSeparation);
    }
    let a: Vec<f64> = keep.iter().map(|&i| f1[i]).collect();
    let b: Vec<f64> = keep.iter().map(|&i| f2[i]).collect();
    let lp = solve_two_constraint_lp(&a, &b)?;
    let mut plan: Vec<(f64, f64)> = lp.plan.iter().map(|&(k, t)| (levels[keep[k]], t)).collect();
    plan.sort_by(|x, y| x.0.total_cmp(&y.0));
    let total: f64 = plan.iter().map(|p| p.1).sum();
    let (x1, x2, w) = match plan.as_slice() {
        [(x, _)] => (*x, *x, 1.0),
        [(x1, t1), (x2, _)] => (*x1, *x2, t1 / total),
        _ => return Err(Error::InfeasibleSeparation),
    };
    Ok(LowerBoundSolution {
        m_star: lp.value,
        x1,
        x2,
        w,
        lambda: lp.y1 / lp.value,
        case: SolutionCase::FiniteLp,
        restricted_gap: 0.0,
    })
}

/// Solves the program at ability `p` for any bank: the LP over the levels of
/// a finite bank, or [`solve_continuous`] for an interval.
pub fn solve(
    model: &ResponseModel,
    p: f64,
    grades: &GradeScheme,
    bank: &QuestionBank,
    mode: SolveMode,
) -> Result<LowerBoundSolution> {
    match bank {
        QuestionBank::Interval { .. } => solve_continuous(model, p, grades, bank, mode),
        QuestionBank::Finite { levels } => solve_on_levels(model, p, grades, levels),
    }
}

/// LP over an explicit set of levels (a finite bank or a grid).
pub fn solve_on_levels(
    model: &ResponseModel,
    p: f64,
    grades: &GradeScheme,
    levels: &[f64],
) -> Result<LowerBoundSolution> {
    let (lo, hi) = bracket_thresholds(p, grades)?;
    let sep = |u: f64| -> Result<Vec<f64>> { levels.iter().map(|&x| model.f(x, p, u)).collect() };
    match (lo, hi) {
        (Some(lo), Some(hi)) => solve_finite(levels, &sep(lo)?, &sep(hi)?),
        (only_lo, only_hi) => {
            // a single alternative: ask the level separating it best
            let u = only_lo.or(only_hi).expect("at least one threshold");
            let f = sep(u)?;
            let (i, best) =
                f.iter()
                    .copied()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
            if best < MIN_SEPARATION {
                return Err(Error::InfeasibleSeparation);
            }
            let lambda = if only_lo.is_some() { 1.0 } else { 0.0 };
            Ok(LowerBoundSolution::single(levels[i], 1.0 / best, lambda, SolutionCase::FiniteLp))
        }
    }
}

/// `m*` at ability `p`.
pub fn m_star(model: &ResponseModel, p: f64, grades: &GradeScheme, bank: &QuestionBank) -> Result<f64> {
    Ok(solve(model, p, grades, bank, SolveMode::Exact)?.m_star)
}
