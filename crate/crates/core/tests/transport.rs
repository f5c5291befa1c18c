mod support;

use proptest::prelude::*;
use support::{brute_force_transport, random_measure};
use tailspec_core::sampling::RngStream;
use tailspec_core::transport::{wasserstein_p, wasserstein_pp};
use tailspec_core::DiscreteMeasure;

fn tv(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let mut atoms: Vec<&Vec<f64>> = mu.atoms().iter().chain(nu.atoms()).collect();
    atoms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    atoms.dedup();
    let mass = |m: &DiscreteMeasure, x: &Vec<f64>| -> f64 {
        m.atoms().iter().zip(m.weights()).filter(|(a, _)| *a == x).map(|(_, w)| *w).sum()
    };
    0.5 * atoms.iter().map(|x| (mass(mu, x) - mass(nu, x)).abs()).sum::<f64>()
}

#[test]
fn matches_vertex_enumeration_on_small_measures() {
    let mut rng = RngStream::new(7, 0);
    for trial in 0..300 {
        let dim = 2 + trial % 3;
        let mu = random_measure(&mut rng, dim, 3);
        let nu = random_measure(&mut rng, dim, 3);
        for p in [1.0, 2.0] {
            let (got, _) = wasserstein_pp(&mu, &nu, p).unwrap();
            let want = brute_force_transport(&mu, &nu, p);
            assert!((got - want).abs() < 1e-8, "trial {trial} p {p}: {got} vs {want}");
        }
    }
}

#[test]
fn plan_has_the_right_marginals() {
    let mut rng = RngStream::new(11, 0);
    for _ in 0..100 {
        let mu = random_measure(&mut rng, 3, 6);
        let nu = random_measure(&mut rng, 3, 6);
        let (cost, plan) = wasserstein_pp(&mu, &nu, 1.0).unwrap();
        for (a, b) in plan.row_sums().iter().zip(mu.weights()) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in plan.col_sums().iter().zip(nu.weights()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(plan.gamma.iter().all(|&g| g >= -1e-12));
        assert_eq!(plan.cost, cost);
    }
}

#[test]
fn larger_instances_stay_consistent_with_the_tv_bound() {
    // on the simplex the l1 diameter is 2, so W1 <= 2 TV
    let mut rng = RngStream::new(13, 0);
    for _ in 0..20 {
        let mu = random_measure(&mut rng, 4, 40);
        let nu = random_measure(&mut rng, 4, 40);
        let w = wasserstein_p(&mu, &nu, 1.0).unwrap();
        assert!(w <= 2.0 * tv(&mu, &nu) + 1e-9);
        assert!(w >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn metric_axioms(seed in any::<u64>(), dim in 2usize..5, p in prop::sample::select(vec![1.0, 2.0, 3.0])) {
        let mut rng = RngStream::new(seed, 1);
        let mu = random_measure(&mut rng, dim, 5);
        let nu = random_measure(&mut rng, dim, 5);
        let rho = random_measure(&mut rng, dim, 5);
        let d_mn = wasserstein_p(&mu, &nu, p).unwrap();
        let d_nm = wasserstein_p(&nu, &mu, p).unwrap();
        let d_nr = wasserstein_p(&nu, &rho, p).unwrap();
        let d_mr = wasserstein_p(&mu, &rho, p).unwrap();
        prop_assert!(d_mn >= 0.0);
        prop_assert!(wasserstein_p(&mu, &mu, p).unwrap().abs() < 1e-12);
        prop_assert!((d_mn - d_nm).abs() < 1e-10);
        prop_assert!(d_mr <= d_mn + d_nr + 1e-10);
    }

    #[test]
    fn w1_is_bounded_by_twice_tv(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 2);
        let mu = random_measure(&mut rng, 3, 6);
        let nu = random_measure(&mut rng, 3, 6);
        prop_assert!(wasserstein_p(&mu, &nu, 1.0).unwrap() <= 2.0 * tv(&mu, &nu) + 1e-9);
    }
}
