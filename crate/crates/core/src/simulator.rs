//! Simulated candidates and Monte Carlo experiments.
//!
//! Every replication gets its own seed, derived from the master seed and the
//! replication index, so results do not depend on how replications are
//! scheduled across threads. Within a replication the question policy and the
//! simulated answers draw from two independent streams of the same seed.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::domain::{GradeScheme, QuestionBank};
use crate::engine::{oracle_plan, Engine, EngineOptions, StoppingConfig, Transcript};
use crate::error::{Error, Result};
use crate::estimation::LevelTally;
use crate::response_models::ResponseModel;

/// Confidence level of the reported upper bound on the error rate.
pub const ERROR_BOUND_CONFIDENCE: f64 = 0.99;

/// Stream of the candidate's answers within a replication seed.
const RESPONSE_STREAM: u64 = 1;

/// Level of the first question.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPolicy {
    /// The easiest level of the bank.
    #[default]
    Easy,
    /// The level the oracle plan (true ability known) would ask.
    Oracle,
    /// The hardest level of the bank.
    Hard,
    Level(f64),
}

/// A batch of simulated sessions against one candidate.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub model: ResponseModel,
    pub grades: GradeScheme,
    pub bank: QuestionBank,
    pub stopping: StoppingConfig,
    /// Level policy and solve mode; `first_level` is set from `start`.
    pub options: EngineOptions,
    pub p_true: f64,
    pub replications: usize,
    pub seed: u64,
    pub start: StartPolicy,
    /// Number of leading steps kept for the mean hardness path.
    pub path_len: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        let d = self.grades.domain();
        if !d.contains(self.p_true) {
            return Err(Error::AbilityOutOfDomain { p: self.p_true, lo: d.lo(), hi: d.hi() });
        }
        if self.grades.thresholds().contains(&self.p_true) {
            return Err(Error::DegenerateAbility { p: self.p_true, threshold: self.p_true });
        }
        Ok(())
    }

    /// First question level implied by the start policy.
    pub fn start_level(&self) -> Result<f64> {
        Ok(match self.start {
            StartPolicy::Easy => self.bank.lo(),
            StartPolicy::Hard => self.bank.hi(),
            StartPolicy::Level(x) => x,
            StartPolicy::Oracle => {
                let plan = oracle_plan(&self.model, self.p_true, &self.grades, &self.bank)?;
                if plan.w >= 0.5 {
                    plan.x1
                } else {
                    plan.x2
                }
            }
        })
    }

    pub fn engine(&self) -> Result<Engine> {
        let options = EngineOptions { first_level: Some(self.start_level()?), ..self.options };
        Engine::new(self.model.clone(), self.grades.clone(), self.bank.clone(), self.stopping, options)
    }
}

/// `index`-th output of a SplitMix64 generator started at `master`.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A Bernoulli(`h(level, p_true)`) answer.
pub fn simulate_response<R: Rng + ?Sized>(model: &ResponseModel, p_true: f64, level: f64, rng: &mut R) -> u8 {
    u8::from(rng.gen::<f64>() < model.h(level, p_true))
}

/// Summary of one simulated session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionRun {
    pub seed: u64,
    pub tau: u64,
    pub verdict: Option<usize>,
    pub correct: bool,
    pub inconclusive: bool,
    /// Levels of the first `path_len` questions.
    pub path: Vec<f64>,
    pub allocation: Vec<LevelTally>,
    /// Full transcript, when requested.
    pub transcript: Option<Transcript>,
}

/// Runs one session to termination against a candidate of ability `p_true`.
pub fn run_session(engine: &Engine, p_true: f64, seed: u64, path_len: usize, record: bool) -> Result<SessionRun> {
    let mut responses = ChaCha8Rng::seed_from_u64(seed);
    responses.set_stream(RESPONSE_STREAM);
    let mut session = engine.session(seed);
    let mut path = Vec::with_capacity(path_len.min(1 << 16));
    let mut transcript = record.then(Transcript::default);
    while !session.state().stopped {
        let level = session.next_question()?;
        let outcome = simulate_response(engine.model(), p_true, level, &mut responses);
        let rec = session.record_response(level, outcome)?;
        if path.len() < path_len {
            path.push(level);
        }
        if let Some(t) = transcript.as_mut() {
            t.steps.push(rec);
        }
    }
    if let Some(t) = transcript.as_mut() {
        t.end = session.final_record();
    }
    let truth = engine.grades().bracket_of(p_true).index;
    let st = session.into_state();
    Ok(SessionRun {
        seed,
        tau: st.t(),
        verdict: st.verdict,
        correct: st.verdict == Some(truth),
        inconclusive: st.inconclusive,
        path,
        allocation: st.history.tallies().to_vec(),
        transcript,
    })
}

/// Mean of `values` summed in sorted order, so the result does not depend on
/// the order the values were produced in.
fn stable_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// One-sided Clopper-Pearson upper confidence bound for a binomial rate.
pub fn binomial_upper_bound(failures: usize, trials: usize, confidence: f64) -> f64 {
    if failures >= trials {
        return 1.0;
    }
    let beta = Beta::new(failures as f64 + 1.0, (trials - failures) as f64).expect("positive shape parameters");
    beta.inverse_cdf(confidence)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SessionRow {
    pub replication: usize,
    pub seed: u64,
    pub tau: u64,
    pub verdict: Option<usize>,
    pub correct: bool,
    pub inconclusive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathRow {
    pub step: usize,
    pub mean_level: f64,
    /// Sessions still running at this step.
    pub active: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AllocationRow {
    pub level: f64,
    pub count: u64,
}

/// Scalar results of a Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub p_true: f64,
    pub delta: f64,
    pub replications: usize,
    pub seed: u64,
    pub start_level: f64,
    pub errors: usize,
    pub error_rate: f64,
    /// 99% upper confidence bound on the error probability.
    pub error_rate_upper: f64,
    pub inconclusive: usize,
    pub mean_tau: f64,
    pub median_tau: f64,
    pub sd_tau: f64,
    /// `mean(tau) / ln(1/(2.4δ))`, the empirical counterpart of `m*`.
    pub tau_ratio: f64,
    pub m_star: f64,
    /// `m* ln(1/(2.4δ))`.
    pub lower_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub summary: ExperimentSummary,
    pub sessions: Vec<SessionRow>,
    pub path: Vec<PathRow>,
    pub allocation: Vec<AllocationRow>,
}

fn csv_error(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()
}

impl ExperimentResult {
    /// Columns `replication,seed,tau,verdict,correct,inconclusive`.
    pub fn write_sessions_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_rows(out, &self.sessions)
    }

    /// Columns `step,mean_level,active`.
    pub fn write_path_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_rows(out, &self.path)
    }

    /// Columns `level,count`.
    pub fn write_allocation_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_rows(out, &self.allocation)
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

/// Runs the replications (in parallel) and returns them in replication order.
pub fn run_replications(spec: &ExperimentSpec) -> Result<Vec<SessionRun>> {
    spec.validate()?;
    let engine = spec.engine()?;
    (0..spec.replications)
        .into_par_iter()
        .map(|i| run_session(&engine, spec.p_true, replication_seed(spec.seed, i as u64), spec.path_len, false))
        .collect()
}

/// Aggregates finished runs into an experiment result.
pub fn summarize(spec: &ExperimentSpec, runs: &[SessionRun]) -> Result<ExperimentResult> {
    let n = runs.len();
    if n == 0 {
        return Err(Error::InvalidConfig("no replications to summarize".into()));
    }
    let delta = spec.stopping.delta;
    let errors = runs.iter().filter(|r| !r.correct).count();
    let mut taus: Vec<f64> = runs.iter().map(|r| r.tau as f64).collect();
    let mean_tau = stable_mean(&mut taus);
    let median_tau = if n % 2 == 1 { taus[n / 2] } else { 0.5 * (taus[n / 2 - 1] + taus[n / 2]) };
    let mut sq: Vec<f64> = taus.iter().map(|t| (t - mean_tau).powi(2)).collect();
    let sd_tau = if n > 1 { (stable_mean(&mut sq) * n as f64 / (n - 1) as f64).sqrt() } else { 0.0 };
    let log_factor = (1.0 / (2.4 * delta)).ln();
    let m_star = oracle_plan(&spec.model, spec.p_true, &spec.grades, &spec.bank)?.m_star;

    let longest = runs.iter().map(|r| r.path.len()).max().unwrap_or(0);
    let path = (0..longest)
        .map(|step| {
            let mut levels: Vec<f64> = runs.iter().filter_map(|r| r.path.get(step).copied()).collect();
            PathRow { step: step + 1, active: levels.len(), mean_level: stable_mean(&mut levels) }
        })
        .collect();

    // positive finite levels order like their bit patterns
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for t in runs.iter().flat_map(|r| &r.allocation) {
        *counts.entry(t.level.to_bits()).or_default() += t.n;
    }
    let allocation =
        counts.into_iter().map(|(bits, count)| AllocationRow { level: f64::from_bits(bits), count }).collect();

    let sessions = runs
        .iter()
        .enumerate()
        .map(|(i, r)| SessionRow {
            replication: i,
            seed: r.seed,
            tau: r.tau,
            verdict: r.verdict,
            correct: r.correct,
            inconclusive: r.inconclusive,
        })
        .collect();

    Ok(ExperimentResult {
        summary: ExperimentSummary {
            p_true: spec.p_true,
            delta,
            replications: n,
            seed: spec.seed,
            start_level: spec.start_level()?,
            errors,
            error_rate: errors as f64 / n as f64,
            error_rate_upper: binomial_upper_bound(errors, n, ERROR_BOUND_CONFIDENCE),
            inconclusive: runs.iter().filter(|r| r.inconclusive).count(),
            mean_tau,
            median_tau,
            sd_tau,
            tau_ratio: mean_tau / log_factor,
            m_star,
            lower_bound: m_star * log_factor.max(0.0),
        },
        sessions,
        path,
        allocation,
    })
}

pub fn run_monte_carlo(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    summarize(spec, &run_replications(spec)?)
}

/// Runs the experiment once per δ.
pub fn run_delta_sweep(spec: &ExperimentSpec, deltas: &[f64]) -> Result<Vec<ExperimentResult>> {
    deltas
        .iter()
        .map(|&delta| {
            run_monte_carlo(&ExperimentSpec { stopping: StoppingConfig { delta, ..spec.stopping }, ..spec.clone() })
        })
        .collect()
}

/// Mean hardness paths of the easy, oracle and hard starts.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationResult {
    pub delta: f64,
    /// First levels of the easy, oracle and hard arms.
    pub start_levels: [f64; 3],
    /// `paths[arm][step]`.
    pub paths: [Vec<f64>; 3],
}

impl ExplorationResult {
    /// Columns `step,easy_start,optimal_start,hard_start`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "easy_start", "optimal_start", "hard_start"]).map_err(csv_error)?;
        let len = self.paths.iter().map(Vec::len).min().unwrap_or(0);
        for step in 0..len {
            let row = [step + 1].map(|s| s.to_string());
            let vals = self.paths.iter().map(|p| p[step].to_string());
            w.write_record(row.into_iter().chain(vals)).map_err(csv_error)?;
        }
        w.flush()
    }

    /// Largest distance between two arms' mean levels at `step` (1-based).
    pub fn max_gap_at(&self, step: usize) -> f64 {
        let v: Vec<f64> = self.paths.iter().map(|p| p[step - 1]).collect();
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    }
}

/// Runs the three start policies on `base` for `horizon` questions each.
///
/// Sessions are capped at the horizon. The arms share replication seeds, so
/// they differ only through their first question.
pub fn run_exploration_experiment(base: &ExperimentSpec, horizon: u64) -> Result<ExplorationResult> {
    let arm = |start: StartPolicy| -> Result<(f64, Vec<f64>)> {
        let spec = ExperimentSpec {
            start,
            path_len: horizon as usize,
            stopping: StoppingConfig { t_max: horizon, ..base.stopping },
            ..base.clone()
        };
        let runs = run_replications(&spec)?;
        let mut path = Vec::with_capacity(horizon as usize);
        for step in 0..horizon as usize {
            let mut levels: Vec<f64> = runs.iter().filter_map(|r| r.path.get(step).copied()).collect();
            if levels.is_empty() {
                break;
            }
            path.push(stable_mean(&mut levels));
        }
        Ok((spec.start_level()?, path))
    };
    let (e, o, h) = (arm(StartPolicy::Easy)?, arm(StartPolicy::Oracle)?, arm(StartPolicy::Hard)?);
    Ok(ExplorationResult { delta: base.stopping.delta, start_levels: [e.0, o.0, h.0], paths: [e.1, o.1, h.1] })
}
