use adaptive_grading::optimize::linspace;
use adaptive_grading::response_models::check_assumptions;
use adaptive_grading::{kl_bernoulli, AbilityDomain, MonotoneMap, QuestionBank, ResponseModel};
use proptest::prelude::*;

fn models() -> Vec<ResponseModel> {
    vec![
        ResponseModel::identity_ratio(),
        ResponseModel::ratio(MonotoneMap::Power { exponent: 1.7 }, MonotoneMap::Identity).unwrap(),
        ResponseModel::ratio(MonotoneMap::Identity, MonotoneMap::Exp { rate: 0.4 }).unwrap(),
        ResponseModel::logit(0.8, 1.3, -0.5).unwrap(),
    ]
}

proptest! {
    #[test]
    fn kl_is_nonnegative_and_vanishes_on_the_diagonal(q in 0.0f64..=1.0, r in 0.0f64..=1.0) {
        let d = kl_bernoulli(q, r).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!(kl_bernoulli(q, q).unwrap().abs() < 1e-12);
    }

    #[test]
    fn separation_is_quasi_concave_on_a_grid(idx in 0usize..4, p in 1.5f64..12.0, du in 0.3f64..5.0, above in any::<bool>()) {
        let m = &models()[idx];
        let u = if above { p + du } else { p - du };
        prop_assume!(u > 0.2);
        let vals: Vec<f64> = linspace(0.05, 40.0, 400).iter().map(|&x| m.f(x, p, u).unwrap()).collect();
        let peak = vals.iter().copied().enumerate().fold((0, f64::MIN), |a, (i, v)| if v > a.1 { (i, v) } else { a }).0;
        let tol = 1e-12;
        prop_assert!(vals[..=peak].windows(2).all(|w| w[1] >= w[0] - tol));
        prop_assert!(vals[peak..].windows(2).all(|w| w[1] <= w[0] + tol));
    }

    #[test]
    fn peak_level_beats_a_dense_grid(idx in 0usize..4, p in 1.5f64..12.0, du in 0.3f64..5.0, above in any::<bool>()) {
        let m = &models()[idx];
        let u = if above { p + du } else { p - du };
        prop_assume!(u > 0.2);
        let bank = QuestionBank::interval(0.5, 30.0).unwrap();
        let x = m.x_star(p, u, &bank).unwrap();
        let best = linspace(0.5, 30.0, 20_001).iter().map(|&y| m.f(y, p, u).unwrap()).fold(f64::MIN, f64::max);
        prop_assert!(m.f(x, p, u).unwrap() >= best - 1e-9 * best.max(1e-300));
    }
}

#[test]
fn peak_level_is_monotone_in_ability_and_threshold() {
    let bank = QuestionBank::interval(0.5, 30.0).unwrap();
    for m in models() {
        let grid = linspace(1.0, 12.0, 20);
        for &u in &grid {
            let mut prev = f64::MIN;
            for &p in grid.iter().filter(|&&p| p != u) {
                let x = m.x_star(p, u, &bank).unwrap();
                assert!(x >= prev - 1e-9, "x* decreased in p at p={p}, u={u}");
                prev = x;
            }
        }
        for &p in &grid {
            let mut prev = f64::MIN;
            for &u in grid.iter().filter(|&&u| u != p) {
                let x = m.x_star(p, u, &bank).unwrap();
                assert!(x >= prev - 1e-9, "x* decreased in u at p={p}, u={u}");
                prev = x;
            }
        }
    }
}

#[test]
fn finite_bank_peak_is_the_best_level() {
    let m = ResponseModel::identity_ratio();
    let bank = QuestionBank::finite(vec![1.0, 2.5, 4.0, 6.0, 9.0]).unwrap();
    let x = m.x_star(5.5, 4.0, &bank).unwrap();
    let best = bank
        .levels()
        .unwrap()
        .iter()
        .copied()
        .max_by(|a, b| m.f(*a, 5.5, 4.0).unwrap().total_cmp(&m.f(*b, 5.5, 4.0).unwrap()));
    assert_eq!(Some(x), best);
}

#[test]
fn standard_models_satisfy_the_structural_assumptions() {
    let bank = QuestionBank::interval(2.0, 10.0).unwrap();
    let domain = AbilityDomain::new(1.0, 13.0).unwrap();
    for m in models() {
        let report = check_assumptions(&m, &bank, &domain);
        assert!(report.all_passed(), "{report:?}");
    }
}

#[test]
fn evaluation_is_deterministic() {
    for m in models() {
        let a: Vec<f64> = linspace(0.5, 20.0, 50).iter().map(|&x| m.f(x, 5.5, 7.0).unwrap()).collect();
        let b: Vec<f64> = linspace(0.5, 20.0, 50).iter().map(|&x| m.f(x, 5.5, 7.0).unwrap()).collect();
        assert_eq!(a, b);
    }
}
