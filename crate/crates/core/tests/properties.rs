use proptest::prelude::*;

use rmdp_synth::coupling::check_lifting;
use rmdp_synth::imdp::{read_explicit, robust_expectation_lower, robust_value_iteration, write_explicit, ImdpBuilder, IntervalMdp};
use rmdp_synth::instances::{random_quotient_instance, QuotientLimits};
use rmdp_synth::model::{one_step_label_distribution, FiniteDistribution, LabelSet, StateRelation};
use rmdp_synth::{Horizon, ReachAvoidSpec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dist(support: Vec<usize>, weights: Vec<f64>) -> FiniteDistribution<f64> {
    let total: f64 = weights.iter().sum();
    FiniteDistribution::from_pairs(support.into_iter().zip(weights.into_iter().map(|w| w / total))).unwrap()
}

prop_compose! {
    fn lifting_case()(n1 in 1usize..7, n2 in 1usize..7)
        (pairs in proptest::collection::vec((0..n1, 0..n2), 0..20),
         w1 in proptest::collection::vec(0.01f64..1.0, n1),
         w2 in proptest::collection::vec(0.01f64..1.0, n2),
         n1 in Just(n1), n2 in Just(n2))
        -> (StateRelation, FiniteDistribution<f64>, FiniteDistribution<f64>) {
        let rel = StateRelation::new(n1, n2, pairs).unwrap();
        (rel, dist((0..n1).collect(), w1), dist((0..n2).collect(), w2))
    }
}

prop_compose! {
    /// Row with a feasible interval around a random distribution, plus values.
    fn interval_row()(n in 1usize..7)
        (weights in proptest::collection::vec(0.01f64..1.0, n),
         below in proptest::collection::vec(0.0f64..1.0, n),
         above in proptest::collection::vec(0.0f64..0.5, n),
         values in proptest::collection::vec(0.0f64..1.0, n))
        -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let total: f64 = weights.iter().sum();
        let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let lo = p.iter().zip(&below).map(|(p, b)| p * (1.0 - b)).collect();
        let hi = p.iter().zip(&above).map(|(p, a)| (p + a).min(1.0)).collect();
        (values, lo, hi)
    }
}

/// Random IMDP whose rows all contain a known distribution. State 0 is the
/// goal, state 1 is unsafe.
fn random_imdp(seed: u64, n: usize) -> IntervalMdp<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = ImdpBuilder::new(n, vec!["goal".into(), "unsafe".into()]);
    b.set_label(0, LabelSet::single(0));
    b.set_label(1, LabelSet::single(1));
    b.set_initial(n - 1);
    for s in 0..n {
        for a in 0..rng.random_range(1..=3u32) {
            let succ: Vec<u32> = (0..n as u32).filter(|_| rng.random_bool(0.6)).collect();
            let succ = if succ.is_empty() { vec![rng.random_range(0..n as u32)] } else { succ };
            let w: Vec<f64> = succ.iter().map(|_| rng.random_range(0.05..1.0)).collect();
            let t: f64 = w.iter().sum();
            let row: Vec<(u32, f64, f64)> = succ
                .iter()
                .zip(&w)
                .map(|(&t2, &wi)| {
                    let p = wi / t;
                    (t2, p * rng.random_range(0.5..1.0), (p + rng.random_range(0.0..0.3)).min(1.0))
                })
                .collect();
            b.push_row(s, a, row).unwrap();
        }
    }
    b.build().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lifting_is_symmetric_under_swap((rel, delta, theta) in lifting_case()) {
        let forward = check_lifting(&delta, &theta, &rel).unwrap().is_feasible();
        let backward = check_lifting(&theta, &delta, &rel.inverse()).unwrap().is_feasible();
        prop_assert_eq!(forward, backward);
    }

    #[test]
    fn label_distributions_sum_to_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_quotient_instance(&mut rng, QuotientLimits::default());
        for m in [&inst.m1, &inst.m2] {
            for x in 0..m.n_states() {
                for u in 0..m.n_actions() {
                    for v in 0..m.n_disturbances() {
                        let total: f64 = one_step_label_distribution(m, x, u, v).unwrap().values().sum();
                        prop_assert!((total - 1.0).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn inner_problem_ignores_entry_order((values, lo, hi) in interval_row(), rot in 0usize..6) {
        let n = values.len();
        let k = rot % n;
        let r = |v: &Vec<f64>| { let mut v = v.clone(); v.rotate_left(k); v };
        let (a, _) = robust_expectation_lower(&values, &lo, &hi).unwrap();
        let (b, _) = robust_expectation_lower(&r(&values), &r(&lo), &r(&hi)).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn tightening_never_lowers_the_inner_value((values, lo, hi) in interval_row(), t in 0.0f64..1.0) {
        // shrink toward the fill point, which stays feasible
        let slo: f64 = lo.iter().sum();
        let gap: f64 = lo.iter().zip(&hi).map(|(l, h)| h - l).sum();
        let p: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| if gap > 0.0 { l + (1.0 - slo) * (h - l) / gap } else { *l }).collect();
        let lo2: Vec<f64> = lo.iter().zip(&p).map(|(l, p)| l + t * (p - l)).collect();
        let hi2: Vec<f64> = hi.iter().zip(&p).map(|(h, p)| h - t * (h - p)).collect();
        let (wide, _) = robust_expectation_lower(&values, &lo, &hi).unwrap();
        let (tight, _) = robust_expectation_lower(&values, &lo2, &hi2).unwrap();
        prop_assert!(tight >= wide - 1e-12);
    }

    #[test]
    fn values_are_bounded_and_grow_with_the_horizon(seed in any::<u64>(), n in 3usize..8, k in 0usize..8) {
        let m = random_imdp(seed, n);
        let short = robust_value_iteration(&m, &ReachAvoidSpec::new("goal", "unsafe", Horizon::Finite(k))).unwrap();
        let long = robust_value_iteration(&m, &ReachAvoidSpec::new("goal", "unsafe", Horizon::Finite(k + 1))).unwrap();
        for s in 0..n {
            prop_assert!((0.0..=1.0).contains(&short.values[s]));
            prop_assert!(long.values[s] >= short.values[s] - 1e-12);
        }
        prop_assert_eq!(long.values[0], 1.0);
        prop_assert_eq!(long.values[1], 0.0);
    }

    #[test]
    fn single_precision_agrees_with_double(seed in any::<u64>(), n in 3usize..8) {
        let m = random_imdp(seed, n);
        let m32: IntervalMdp<f32> = {
            let mut text = Vec::new();
            write_explicit(&m, &mut text).unwrap();
            read_explicit(text.as_slice()).unwrap()
        };
        let spec = ReachAvoidSpec::new("goal", "unsafe", Horizon::Finite(10));
        let a = robust_value_iteration(&m, &spec).unwrap();
        let b = robust_value_iteration(&m32, &spec).unwrap();
        for s in 0..n {
            prop_assert!((a.values[s] - b.values[s] as f64).abs() < 1e-4);
        }
    }

    #[test]
    fn explicit_format_round_trips(seed in any::<u64>(), n in 2usize..8) {
        let m = random_imdp(seed, n);
        let mut text = Vec::new();
        write_explicit(&m, &mut text).unwrap();
        let back: IntervalMdp<f64> = read_explicit(text.as_slice()).unwrap();
        prop_assert_eq!(back, m);
    }
}
