//! The sequential grading test.
//!
//! Each step the engine estimates the ability by maximum likelihood, solves
//! the lower-bound program at the estimate and draws the next question from
//! the resulting plan. It stops as soon as the generalized likelihood ratio
//! against the nearest grade boundary exceeds `β(t, δ)` and announces the
//! bracket holding the estimate.

use std::f64::consts::PI;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{GradeScheme, QuestionBank};
use crate::error::{Error, Result};
use crate::estimation::{log_likelihood, mle, Boundary, History};
use crate::lower_bound::{self, LowerBoundSolution, SolutionCase, SolveMode};
use crate::optimize::linspace;
use crate::response_models::ResponseModel;

fn default_alpha() -> f64 {
    2.0
}

fn default_c() -> f64 {
    PI * PI / 3.0
}

fn default_t_max() -> u64 {
    1_000_000
}

/// Parameters of the stopping threshold `β(t, δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingConfig {
    pub delta: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    /// Number of distinct question levels; derived from the bank when absent.
    #[serde(default)]
    pub m: Option<usize>,
    /// Sessions reaching this many questions stop as inconclusive.
    #[serde(default = "default_t_max")]
    pub t_max: u64,
}

impl StoppingConfig {
    pub fn new(delta: f64) -> Self {
        Self { delta, alpha: default_alpha(), c: default_c(), m: None, t_max: default_t_max() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidConfig(format!("c must be positive, got {}", self.c)));
        }
        if self.m == Some(0) {
            return Err(Error::InvalidConfig("m must be at least 1".into()));
        }
        if self.t_max == 0 {
            return Err(Error::InvalidConfig("t_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// `β(t, δ) = ln(c t^α / δ) + (3m + 1) ln(ln(t + 1) ln(1/δ))`.
pub fn beta_threshold(t: u64, delta: f64, alpha: f64, c: f64, m: usize) -> f64 {
    let t = t as f64;
    (c / delta).ln() + alpha * t.ln() + (3 * m + 1) as f64 * ((t + 1.0).ln() * (1.0 / delta).ln()).ln()
}

/// Equispaced grid on `[lo, hi]` with spacing `ln(1/δ)^{-1/2}`: the
/// discretization of an interval bank used for the sample-complexity
/// guarantee.
pub fn build_grid(lo: f64, hi: f64, delta: f64) -> Result<QuestionBank> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(format!("delta must lie in (0, 1), got {delta}")));
    }
    if lo == hi {
        return QuestionBank::finite(vec![lo]);
    }
    let spacing = (1.0 / delta).ln().powf(-0.5);
    let count = (((hi - lo) / spacing).floor() as usize + 1).max(2);
    QuestionBank::finite(linspace(lo, hi, count))
}

/// `min_u [LL(p_hat) - LL(u)]` over the two edges of the bracket holding
/// `p_hat`; the domain bounds serve as edges of the extreme brackets.
pub fn glr_statistic(model: &ResponseModel, history: &History, p_hat: f64, grades: &GradeScheme) -> f64 {
    let b = grades.bracket_of(p_hat);
    let ll = log_likelihood(model, history, p_hat);
    let lower = ll - log_likelihood(model, history, b.lower);
    let upper = ll - log_likelihood(model, history, b.upper);
    lower.min(upper).max(0.0)
}

/// The lower-bound plan at the true ability: the non-adaptive benchmark.
pub fn oracle_plan(
    model: &ResponseModel,
    p_true: f64,
    grades: &GradeScheme,
    bank: &QuestionBank,
) -> Result<LowerBoundSolution> {
    lower_bound::solve(model, p_true, grades, bank, SolveMode::Exact)
}

/// Which level set plans are solved over when the bank is an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelPolicy {
    /// Continuous for the ratio family, the δ-grid otherwise.
    #[default]
    Auto,
    /// The grid of [`build_grid`].
    Grid,
    /// The whole interval.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineOptions {
    #[serde(default)]
    pub policy: LevelPolicy,
    #[serde(default)]
    pub mode: SolveMode,
    /// First question level; the easiest level when absent.
    #[serde(default)]
    pub first_level: Option<f64>,
}

/// Immutable test definition shared by any number of sessions.
#[derive(Debug, Clone)]
pub struct Engine {
    model: ResponseModel,
    grades: GradeScheme,
    bank: QuestionBank,
    stopping: StoppingConfig,
    options: EngineOptions,
    /// Levels plans are solved over; the bank itself in continuous mode.
    active: QuestionBank,
    m: usize,
}

impl Engine {
    pub fn new(
        model: ResponseModel,
        grades: GradeScheme,
        bank: QuestionBank,
        stopping: StoppingConfig,
        options: EngineOptions,
    ) -> Result<Self> {
        stopping.validate()?;
        if grades.thresholds().is_empty() {
            return Err(Error::InvalidGrades("at least one grade threshold is needed".into()));
        }
        let grid_size = match &bank {
            QuestionBank::Finite { levels } => levels.len(),
            QuestionBank::Interval { lo, hi } => build_grid(*lo, *hi, stopping.delta)?.levels().map_or(1, <[f64]>::len),
        };
        let continuous = match options.policy {
            LevelPolicy::Auto => model.is_ratio_family(),
            LevelPolicy::Grid => false,
            LevelPolicy::Continuous => true,
        };
        let active = match &bank {
            QuestionBank::Interval { lo, hi } if !continuous => build_grid(*lo, *hi, stopping.delta)?,
            _ => bank.clone(),
        };
        let m = stopping.m.unwrap_or(grid_size);
        Ok(Self { model, grades, bank, stopping, options, active, m })
    }

    pub fn model(&self) -> &ResponseModel {
        &self.model
    }

    pub fn grades(&self) -> &GradeScheme {
        &self.grades
    }

    pub fn bank(&self) -> &QuestionBank {
        &self.bank
    }

    pub fn stopping(&self) -> &StoppingConfig {
        &self.stopping
    }

    pub fn options(&self) -> &EngineOptions {
        &self.options
    }

    /// The level set questions are drawn from.
    pub fn active_levels(&self) -> &QuestionBank {
        &self.active
    }

    /// `m` in the stopping threshold.
    pub fn level_count(&self) -> usize {
        self.m
    }

    pub fn beta(&self, t: u64) -> f64 {
        beta_threshold(t, self.stopping.delta, self.stopping.alpha, self.stopping.c, self.m)
    }

    pub fn first_level(&self) -> f64 {
        self.active.snap(self.options.first_level.unwrap_or_else(|| self.bank.lo()))
    }

    /// Plug-in plan at ability `p`.
    ///
    /// When `p` sits on a grade threshold or no level separates it from its
    /// alternatives, the engine asks the level that best separates `p` from
    /// the nearest threshold instead (the median level when `p` is on it).
    pub fn plan_at(&self, p: f64) -> Result<LowerBoundSolution> {
        let solved = match &self.active {
            QuestionBank::Finite { levels } => lower_bound::solve_on_levels(&self.model, p, &self.grades, levels),
            QuestionBank::Interval { .. } => {
                lower_bound::solve_continuous(&self.model, p, &self.grades, &self.active, self.options.mode)
            }
        };
        match solved {
            Err(Error::DegenerateAbility { .. } | Error::InfeasibleSeparation | Error::ZeroSeparation { .. }) => {
                let u = self.grades.nearest_threshold(p).expect("engine requires a threshold");
                let x = if (p - u).abs() <= lower_bound::DEGENERACY_TOL * u.abs().max(1.0) {
                    self.model.median_level(p, &self.active)
                } else {
                    self.active.snap(self.model.x_star(p, u, &self.active)?)
                };
                debug!("degenerate plan at p={p}; asking level {x} next to threshold {u}");
                let f = if p == u { 0.0 } else { self.model.f(x, p, u)? };
                let m_star = if f > 0.0 { 1.0 / f } else { f64::MAX };
                let case = if u >= p { SolutionCase::C1 } else { SolutionCase::C2 };
                let lambda = if u >= p { 0.0 } else { 1.0 };
                Ok(LowerBoundSolution { m_star, x1: x, x2: x, w: 1.0, lambda, case, restricted_gap: 0.0 })
            }
            other => other,
        }
    }

    /// New session whose level draws are seeded with `seed`.
    pub fn session(&self, seed: u64) -> Session<'_> {
        Session {
            engine: self,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: SessionState {
                history: History::new(),
                p_hat: None,
                boundary: None,
                bracket: None,
                glr: 0.0,
                beta: None,
                stopped: false,
                verdict: None,
                inconclusive: false,
                rng_seed: seed,
                plan: None,
            },
        }
    }
}

/// Everything a session knows after its latest response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub history: History,
    pub p_hat: Option<f64>,
    /// Set when the estimate was clamped to the ability domain.
    pub boundary: Option<Boundary>,
    /// Index of the grade bracket holding `p_hat`.
    pub bracket: Option<usize>,
    pub glr: f64,
    /// Threshold the statistic was last compared against.
    pub beta: Option<f64>,
    pub stopped: bool,
    /// Announced bracket, set exactly when the session has stopped.
    pub verdict: Option<usize>,
    /// Stopped by the question cap rather than the stopping rule.
    pub inconclusive: bool,
    pub rng_seed: u64,
    /// Plan the latest question was drawn from.
    pub plan: Option<LowerBoundSolution>,
}

impl SessionState {
    pub fn t(&self) -> u64 {
        self.history.len() as u64
    }
}

/// One running test.
pub struct Session<'e> {
    engine: &'e Engine,
    rng: ChaCha8Rng,
    state: SessionState,
}

impl<'e> Session<'e> {
    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn into_state(self) -> SessionState {
        self.state
    }

    pub fn engine(&self) -> &'e Engine {
        self.engine
    }

    /// Level of the next question: the configured first level, then draws
    /// from the plan at the current estimate.
    pub fn next_question(&mut self) -> Result<f64> {
        if self.state.stopped {
            return Err(Error::SessionStopped);
        }
        let Some(p_hat) = self.state.p_hat else {
            return Ok(self.engine.first_level());
        };
        let plan = self.engine.plan_at(p_hat)?;
        let level = plan.sample_level(&mut self.rng);
        self.state.plan = Some(plan);
        Ok(level)
    }

    /// Feeds the response to a question at `level` and applies the stopping
    /// rule.
    pub fn record_response(&mut self, level: f64, outcome: u8) -> Result<StepRecord> {
        if self.state.stopped {
            return Err(Error::SessionStopped);
        }
        if outcome > 1 {
            return Err(Error::InvalidOutcome(outcome));
        }
        let engine = self.engine;
        let st = &mut self.state;
        st.history.push(level, outcome)?;
        let est = mle(&engine.model, &st.history, engine.grades.domain())?;
        st.p_hat = Some(est.value);
        st.boundary = est.boundary;
        st.bracket = Some(engine.grades.bracket_of(est.value).index);
        st.glr = glr_statistic(&engine.model, &st.history, est.value, &engine.grades);
        let t = st.t();
        let beta = engine.beta(t);
        st.beta = Some(beta);
        if st.glr > beta {
            st.stopped = true;
            st.verdict = st.bracket;
        } else if t >= engine.stopping.t_max {
            st.stopped = true;
            st.inconclusive = true;
            st.verdict = st.bracket;
        }
        Ok(StepRecord { t, level, outcome, p_hat: est.value, glr: st.glr, beta })
    }

    /// Ends the session early (for instance on end of input) as inconclusive.
    pub fn abort(&mut self) {
        if !self.state.stopped {
            self.state.stopped = true;
            self.state.inconclusive = true;
            self.state.verdict = self.state.bracket;
        }
    }

    pub fn final_record(&self) -> Option<FinalRecord> {
        let st = &self.state;
        st.stopped.then(|| {
            let b = st.verdict.map(|i| self.engine.grades.bracket(i));
            FinalRecord {
                tau: st.t(),
                verdict: st.verdict,
                inconclusive: st.inconclusive,
                lower: b.map(|b| b.lower),
                upper: b.map(|b| b.upper),
            }
        })
    }
}

/// Transcript line for one answered question.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub level: f64,
    pub outcome: u8,
    pub p_hat: f64,
    pub glr: f64,
    pub beta: f64,
}

/// Closing transcript line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    pub tau: u64,
    pub verdict: Option<usize>,
    pub inconclusive: bool,
    /// Bounds of the announced bracket.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Step(StepRecord),
    Final(FinalRecord),
}

/// Session transcript, stored as JSON lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    pub steps: Vec<StepRecord>,
    pub end: Option<FinalRecord>,
}

impl Transcript {
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        let lines = self.steps.iter().map(|s| Line::Step(*s)).chain(self.end.map(Line::Final));
        for line in lines {
            out.push_str(&serde_json::to_string(&line).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_json_lines(text: &str) -> Result<Self> {
        let mut t = Transcript::default();
        for (i, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let line: Line = serde_json::from_str(raw)
                .map_err(|e| Error::InvalidConfig(format!("transcript line {}: {e}", i + 1)))?;
            match line {
                Line::Step(s) if t.end.is_none() => t.steps.push(s),
                Line::Final(f) if t.end.is_none() => t.end = Some(f),
                _ => {
                    return Err(Error::InvalidConfig(format!("transcript line {}: record after the final one", i + 1)))
                }
            }
        }
        Ok(t)
    }
}

/// Outcome of replaying a transcript through a fresh session.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub state: SessionState,
    /// Whether every recorded level is the one the session would ask.
    pub levels_match: bool,
    /// Whether every recorded estimate, statistic and threshold is reproduced.
    pub records_match: bool,
}

/// Re-runs the recorded outcomes through a session seeded with `seed`.
pub fn replay(engine: &Engine, seed: u64, transcript: &Transcript) -> Result<Replay> {
    let mut session = engine.session(seed);
    let mut levels_match = true;
    let mut records_match = true;
    for rec in &transcript.steps {
        let asked = session.next_question()?;
        levels_match &= asked == rec.level;
        let again = session.record_response(rec.level, rec.outcome)?;
        records_match &= again == *rec;
    }
    if transcript.end.is_some() && !session.state().stopped {
        session.abort();
    }
    records_match &= session.final_record() == transcript.end;
    Ok(Replay { state: session.into_state(), levels_match, records_match })
}
