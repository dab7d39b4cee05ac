use adaptive_grading::engine::{replay, Engine, EngineOptions, LevelPolicy, SessionState, StoppingConfig, Transcript};
use adaptive_grading::lower_bound::{m_star, SolveMode};
use adaptive_grading::simulator::{
    run_monte_carlo, run_replications, run_session, simulate_response, summarize, ExperimentSpec, StartPolicy,
};
use adaptive_grading::{AbilityDomain, GradeScheme, QuestionBank, ResponseModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grades() -> GradeScheme {
    GradeScheme::new(vec![4.0, 7.0, 10.0], AbilityDomain::new(1.0, 13.0).unwrap()).unwrap()
}

fn spec(delta: f64, p_true: f64, replications: usize) -> ExperimentSpec {
    ExperimentSpec {
        model: ResponseModel::identity_ratio(),
        grades: grades(),
        bank: QuestionBank::interval(2.0, 10.0).unwrap(),
        stopping: StoppingConfig::new(delta),
        options: EngineOptions { policy: LevelPolicy::Grid, ..Default::default() },
        p_true,
        replications,
        seed: 11,
        start: StartPolicy::Easy,
        path_len: 50,
    }
}

/// Drives a session for `steps` questions against ability `p_true`, ignoring
/// the stopping rule.
fn drive(engine: &Engine, p_true: f64, seed: u64, steps: usize) -> SessionState {
    let mut responses = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut session = engine.session(seed);
    for _ in 0..steps {
        let x = session.next_question().unwrap();
        let o = simulate_response(engine.model(), p_true, x, &mut responses);
        session.record_response(x, o).unwrap();
    }
    session.into_state()
}

fn long_engine() -> Engine {
    let mut stopping = StoppingConfig::new(1e-300);
    stopping.t_max = 1_000_000_000;
    Engine::new(
        ResponseModel::identity_ratio(),
        grades(),
        QuestionBank::interval(2.0, 10.0).unwrap(),
        stopping,
        EngineOptions { policy: LevelPolicy::Grid, ..Default::default() },
    )
    .unwrap()
}

#[test]
fn easy_instance_is_graded_correctly() {
    let s = run_monte_carlo(&spec(0.1, 2.5, 60)).unwrap().summary;
    assert_eq!(s.inconclusive, 0);
    assert!(s.error_rate <= 0.2, "{s:?}");
}

#[test]
fn statistic_grows_at_the_optimal_rate() {
    let engine = long_engine();
    let target = m_star(engine.model(), 5.5, engine.grades(), engine.active_levels()).unwrap();
    let t = 40_000;
    let state = drive(&engine, 5.5, 3, t);
    let slope = state.glr / t as f64;
    assert!((slope * target - 1.0).abs() < 0.25, "slope {slope} vs 1/m* {}", 1.0 / target);
    // questions concentrate near the optimal level
    let near = state.history.tallies().iter().filter(|l| (l.level - 5.96).abs() <= 0.5).map(|l| l.n).sum::<u64>();
    assert!(near as f64 >= 0.8 * t as f64, "{near} of {t} questions near the optimum");
}

#[test]
fn asked_level_rises_with_the_estimate() {
    let engine = long_engine();
    let mut prev = f64::MIN;
    for i in 0..60 {
        let p = 1.2 + 11.6 * i as f64 / 59.0;
        if let Ok(plan) = engine.plan_at(p) {
            assert!(plan.x1 >= prev, "plan level fell at p={p}");
            prev = plan.x1;
        }
    }
}

#[test]
fn replay_reproduces_a_session() {
    let engine = spec(0.1, 5.5, 1).engine().unwrap();
    let run = run_session(&engine, 5.5, 99, 0, true).unwrap();
    let transcript = run.transcript.unwrap();
    let text = transcript.to_json_lines();
    let parsed = Transcript::from_json_lines(&text).unwrap();
    assert_eq!(parsed, transcript);
    let r = replay(&engine, 99, &parsed).unwrap();
    assert!(r.levels_match && r.records_match);
    assert!(r.state.stopped);
    assert_eq!(r.state.verdict, run.verdict);
    let json = serde_json::to_string(&r.state).unwrap();
    assert_eq!(serde_json::from_str::<SessionState>(&json).unwrap(), r.state);
}

#[test]
fn sessions_are_deterministic() {
    let engine = spec(0.05, 8.3, 1).engine().unwrap();
    let a = run_session(&engine, 8.3, 5, 100, true).unwrap();
    let b = run_session(&engine, 8.3, 5, 100, true).unwrap();
    assert_eq!(a, b);
}

#[test]
fn summary_ignores_replication_order() {
    let s = spec(0.1, 2.5, 12);
    let runs = run_replications(&s).unwrap();
    let mut reversed = runs.clone();
    reversed.reverse();
    let a = summarize(&s, &runs).unwrap().summary;
    let b = summarize(&s, &reversed).unwrap().summary;
    assert_eq!(a, b);
}

#[test]
fn restricted_mode_matches_exact_for_ratio_models() {
    let exact = spec(0.1, 5.5, 1).engine().unwrap();
    let mut s = spec(0.1, 5.5, 1);
    s.options.mode = SolveMode::RestrictedSingle;
    let restricted = s.engine().unwrap();
    let a = run_session(&exact, 5.5, 21, 0, true).unwrap();
    let b = run_session(&restricted, 5.5, 21, 0, true).unwrap();
    assert_eq!(a.transcript, b.transcript);
}
