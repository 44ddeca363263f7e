mod common;

use common::{evaluate_parts, gradient, naive_loglik, random_instance, Lcg};
use proptest::prelude::*;
use zib_core::{log_likelihood, observed_information, score, LinkPair};

fn links(logit: bool) -> LinkPair {
    if logit {
        LinkPair::LOGIT
    } else {
        LinkPair::PROBIT
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loglik_matches_direct_formula(seed in any::<u64>(), logit in any::<bool>(), n in 5usize..40) {
        let mut rng = Lcg(seed);
        let (data, theta) = random_instance(&mut rng, n, 2, 2);
        let l = links(logit);
        let ours = log_likelihood(&theta, &data, l).unwrap();
        let oracle = naive_loglik(&theta.to_stacked(), 2, &data, l.zero, l.count);
        prop_assert!((ours - oracle).abs() < 1e-10 * oracle.abs().max(1.0));
    }

    #[test]
    fn score_matches_finite_differences(seed in any::<u64>(), logit in any::<bool>(), n in 5usize..50,
                                        p in 1usize..4, q in 1usize..4) {
        let mut rng = Lcg(seed);
        let (data, theta) = random_instance(&mut rng, n, p, q);
        let l = links(logit);
        let g = score(&theta, &data, l).unwrap().score;
        let fd = gradient(|v| naive_loglik(v, p, &data, l.zero, l.count), &theta.to_stacked(), 1e-5);
        for (a, b) in g.iter().zip(&fd) {
            prop_assert!((a - b).abs() / b.abs().max(1.0) < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn information_is_symmetric(seed in any::<u64>(), logit in any::<bool>()) {
        let mut rng = Lcg(seed);
        let (data, theta) = random_instance(&mut rng, 30, 3, 2);
        let info = observed_information(&theta, &data, links(logit)).unwrap();
        prop_assert_eq!(info.matrix.clone(), info.matrix.transpose());
    }
}

#[test]
fn additive_over_concatenation() {
    let mut rng = Lcg(5);
    let (a, theta) = random_instance(&mut rng, 23, 2, 3);
    let (b, _) = random_instance(&mut rng, 17, 2, 3);
    let both = a.concat(&b).unwrap();
    let l = LinkPair::PROBIT;
    let (ea, eb, e) = (evaluate_parts(&theta, &a, l), evaluate_parts(&theta, &b, l), evaluate_parts(&theta, &both, l));
    assert!((e.0 - (ea.0 + eb.0)).abs() < 1e-12 * e.0.abs());
    for j in 0..e.1.len() {
        assert!((e.1[j] - (ea.1[j] + eb.1[j])).abs() < 1e-12 * e.1[j].abs().max(1.0));
    }
    let sum = &ea.2 + &eb.2;
    assert!((&e.2 - &sum).abs().max() < 1e-12 * sum.abs().max());
}

#[test]
fn invariant_under_row_permutation() {
    let mut rng = Lcg(9);
    let (data, theta) = random_instance(&mut rng, 50, 3, 3);
    let mut rows = data.observations().to_vec();
    rows.reverse();
    rows.rotate_left(13);
    let shuffled = data.with_observations(rows).unwrap();
    let l = LinkPair::LOGIT;
    let (a, b) = (evaluate_parts(&theta, &data, l), evaluate_parts(&theta, &shuffled, l));
    assert!((a.0 - b.0).abs() < 1e-10);
    assert!(a.1.iter().zip(&b.1).all(|(x, y)| (x - y).abs() < 1e-10));
    assert!((&a.2 - &b.2).abs().max() < 1e-10);
}
