//! Brute-force oracle checks that pin every closed form against an
//! independent computation route.

mod common;

use common::{random_instance, random_simplex, rng};
use prefopt::{
    conjugate_sup_oracle, dpo_loss, dr_dpo_loss, finite_diff, gibbs_weights, grad_loss,
    loss_value, penalized_objective, penalized_optimum, relative_gradient_error,
    simplex_search_oracle, worst_case_distribution, DiscreteDistribution, GridSpec, LossSpec,
    PhiFamily,
};
use rand::Rng;

#[test]
fn analytic_gradients_match_finite_differences_across_losses() {
    let mut rng = rng(101);
    for trial in 0..40 {
        let inst = random_instance(&mut rng);
        let spec = match trial % 5 {
            0 => LossSpec::dpo(inst.beta),
            1 => LossSpec::drdpo(inst.beta, rng.random_range(0.05..5.0)),
            2 => LossSpec::cdpo(inst.beta, rng.random_range(0.0..0.45)),
            3 => LossSpec::ipo(inst.beta, rng.random_range(0.1..2.0)),
            _ => LossSpec::rdpo(inst.beta, rng.random_range(0.0..0.45)),
        };
        let analytic = grad_loss(&inst.policy, &inst.reference, &inst.dataset, &spec).unwrap();
        let numeric = finite_diff(
            |p| loss_value(p, &inst.reference, &inst.dataset, &spec),
            &inst.policy,
            1e-5,
        )
        .unwrap();
        let err = relative_gradient_error(&analytic, &numeric).unwrap();
        assert!(
            err < 1e-5,
            "trial {trial} ({}): relative error {err}",
            spec.kind
        );
    }
}

#[test]
fn gibbs_closed_form_beats_the_simplex_search() {
    let mut rng = rng(202);
    for trial in 0..30 {
        let len = rng.random_range(2..=5usize);
        let h: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..0.0)).collect();
        let beta_prime = rng.random_range(0.1..10.0f64);
        let base = DiscreteDistribution::new(random_simplex(&mut rng, len)).unwrap();

        let closed = worst_case_distribution(&h, beta_prime, &base).unwrap();
        let closed_obj = penalized_objective(&closed, &h, beta_prime, &base).unwrap();
        let optimum = penalized_optimum(&h, beta_prime, &base).unwrap();
        assert!(
            (closed_obj - optimum).abs() < 1e-10,
            "trial {trial}: objective at maximizer {closed_obj} vs closed value {optimum}"
        );

        let searched = simplex_search_oracle(&h, beta_prime, &base, 20_000).unwrap();
        let searched_obj = penalized_objective(&searched, &h, beta_prime, &base).unwrap();
        assert!(
            closed_obj >= searched_obj - 1e-6,
            "trial {trial}: search found {searched_obj}, closed form {closed_obj}"
        );
        assert!(
            (closed_obj - searched_obj).abs() < 1e-6,
            "trial {trial}: search gap {}",
            closed_obj - searched_obj
        );
    }
}

#[test]
fn worst_case_distribution_dominates_random_simplex_points() {
    let mut rng = rng(303);
    for _ in 0..10 {
        let len = rng.random_range(2..=5usize);
        let h: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..0.0)).collect();
        let beta_prime = rng.random_range(0.1..5.0f64);
        let base = DiscreteDistribution::new(random_simplex(&mut rng, len)).unwrap();
        let best = worst_case_distribution(&h, beta_prime, &base).unwrap();
        let best_obj = penalized_objective(&best, &h, beta_prime, &base).unwrap();
        for _ in 0..1_000 {
            let q = DiscreteDistribution::new(random_simplex(&mut rng, len)).unwrap();
            let obj = penalized_objective(&q, &h, beta_prime, &base).unwrap();
            assert!(best_obj >= obj - 1e-10, "{best_obj} < {obj}");
        }
    }
}

#[test]
fn penalized_optimum_is_the_negated_tilted_loss_on_uniform_base() {
    let mut rng = rng(404);
    for _ in 0..20 {
        let inst = random_instance(&mut rng);
        let beta_prime = rng.random_range(0.05..5.0f64);
        let h = prefopt::h_values(&inst.policy, &inst.reference, &inst.dataset, inst.beta).unwrap();
        let base = DiscreteDistribution::uniform(h.len()).unwrap();
        let optimum = penalized_optimum(&h, beta_prime, &base).unwrap();
        let loss = dr_dpo_loss(
            &inst.policy,
            &inst.reference,
            &inst.dataset,
            inst.beta,
            beta_prime,
        )
        .unwrap();
        assert!((optimum + loss).abs() < 1e-10, "{optimum} vs {}", -loss);
    }
}

#[test]
fn kl_conjugate_matches_sup_oracle_across_s() {
    let grid = GridSpec {
        t_min: 1e-6,
        t_max: 200.0,
        points: 1_000_000,
    };
    let mut s = -5.0f64;
    while s <= 5.0 {
        let closed: f64 = PhiFamily::Kl.conjugate(s).unwrap();
        let oracle = conjugate_sup_oracle(&PhiFamily::Kl, s, &grid).unwrap();
        assert!(
            (closed - oracle).abs() < 1e-4,
            "s={s}: closed {closed} vs oracle {oracle}"
        );
        s += 0.5;
    }
}

#[test]
fn alpha_conjugate_matches_sup_oracle() {
    let grid = GridSpec {
        t_min: 1e-6,
        t_max: 400.0,
        points: 2_000_000,
    };
    for alpha in [0.3, 0.5, 0.7] {
        let family = PhiFamily::alpha(alpha).unwrap();
        let sup = family.conjugate_domain_sup().unwrap();
        // Near the domain boundary the maximizer escapes any fixed grid, so
        // stop one unit short of it.
        let mut s = -5.0f64;
        while s < sup - 1.0 {
            let closed: f64 = family.conjugate(s).unwrap();
            let oracle = conjugate_sup_oracle(&family, s, &grid).unwrap();
            assert!(
                (closed - oracle).abs() < 1e-4,
                "alpha={alpha}, s={s}: closed {closed} vs oracle {oracle}"
            );
            s += 0.3;
        }
    }
}

#[test]
fn tilted_loss_interpolates_between_max_and_mean() {
    let mut rng = rng(505);
    for _ in 0..20 {
        let inst = random_instance(&mut rng);
        let h = prefopt::h_values(&inst.policy, &inst.reference, &inst.dataset, inst.beta).unwrap();
        let dpo = dpo_loss(&inst.policy, &inst.reference, &inst.dataset, inst.beta).unwrap();
        let bp = 1e-6;
        let small =
            dr_dpo_loss(&inst.policy, &inst.reference, &inst.dataset, inst.beta, bp).unwrap();
        let large = dr_dpo_loss(&inst.policy, &inst.reference, &inst.dataset, inst.beta, 1e8)
            .unwrap();
        let max_h = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // -max h <= loss <= -max h + beta' ln N at small beta'.
        let envelope = bp * (h.len() as f64).ln();
        assert!(
            small + max_h >= -1e-12 && small + max_h <= envelope + 1e-12,
            "{small} vs {} (envelope {envelope})",
            -max_h
        );
        assert!((large - dpo).abs() < 1e-6);
    }
}

#[test]
fn gibbs_weights_recover_the_worst_case_distribution() {
    // w_i / N equals the worst-case mass on a uniform base.
    let mut rng = rng(606);
    for _ in 0..20 {
        let len = rng.random_range(2..=8usize);
        let h: Vec<f64> = (0..len).map(|_| rng.random_range(-4.0..0.0)).collect();
        let beta_prime = rng.random_range(0.05..5.0f64);
        let w = gibbs_weights(&h, beta_prime).unwrap();
        let base = DiscreteDistribution::uniform(len).unwrap();
        let q = worst_case_distribution(&h, beta_prime, &base).unwrap();
        for i in 0..len {
            assert!((w.weights()[i] / len as f64 - q.probs()[i]).abs() < 1e-12);
        }
    }
}
