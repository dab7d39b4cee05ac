use adaptive_grading::estimation::{log_likelihood, mle, History};
use adaptive_grading::simulator::simulate_response;
use adaptive_grading::{AbilityDomain, ResponseModel};
use proptest::collection::vec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn estimate_maximizes_the_likelihood(steps in vec((1.0f64..12.0, 0u8..=1), 1..120), logit in any::<bool>()) {
        let model = if logit { ResponseModel::logit(0.7, 0.9, 0.3).unwrap() } else { ResponseModel::identity_ratio() };
        let domain = AbilityDomain::new(0.5, 15.0).unwrap();
        let mut h = History::new();
        for (x, o) in steps {
            h.push(x, o).unwrap();
        }
        let e = mle(&model, &h, &domain).unwrap();
        let best = log_likelihood(&model, &h, e.value);
        for i in 0..=200 {
            let p = 0.5 + 14.5 * i as f64 / 200.0;
            prop_assert!(log_likelihood(&model, &h, p) <= best + 1e-9 * best.abs().max(1.0));
        }
    }
}

#[test]
fn estimate_concentrates_at_the_true_ability() {
    let model = ResponseModel::identity_ratio();
    let domain = AbilityDomain::new(0.5, 10.0).unwrap();
    let reps = 200;
    let close = (0..reps)
        .filter(|&r| {
            let mut rng = ChaCha8Rng::seed_from_u64(r);
            let mut h = History::new();
            for _ in 0..10_000 {
                h.push(2.0, simulate_response(&model, 2.0, 2.0, &mut rng)).unwrap();
            }
            (mle(&model, &h, &domain).unwrap().value - 2.0).abs() <= 0.1
        })
        .count();
    assert!(close as f64 >= 0.95 * reps as f64, "{close} of {reps} estimates within 0.1");
}
