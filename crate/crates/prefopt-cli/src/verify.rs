//! `prefopt verify`: run every closed form against its brute-force oracle
//! and print one line per check.

use anyhow::Result;
use clap::Args;
use prefopt::{
    beta_star, conjugate_sup_oracle, dr_dpo_loss, finite_diff, generalization_bound,
    gibbs_weights, grad_loss, loss_value, penalized_objective, penalized_optimum,
    relative_gradient_error, reward_variance_under_ref, simplex_search_oracle,
    worst_case_distribution, BoundInputs, DiscreteDistribution, GridSpec, LossSpec, PhiFamily,
    Policy64, PreferenceDataset, PreferencePair, PromptSpace, RewardTable, TabularPolicy,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Tolerance for the two-pair toy reproduction.
    #[arg(long, default_value_t = 2e-3)]
    pub toy_tol: f64,
    /// Tolerance for the simplex-search objective gap.
    #[arg(long, default_value_t = 1e-6)]
    pub gibbs_tol: f64,
    /// Tolerance for closed-form objective identities.
    #[arg(long, default_value_t = 1e-10)]
    pub identity_tol: f64,
    /// Tolerance for analytic-vs-numeric gradient comparison.
    #[arg(long, default_value_t = 1e-5)]
    pub fd_tol: f64,
    /// Number of random gradient-check instances.
    #[arg(long, default_value_t = 100)]
    pub fd_instances: usize,
    /// Tolerance for conjugate closed forms vs the grid-sup oracle.
    #[arg(long, default_value_t = 1e-4)]
    pub conjugate_tol: f64,
    /// Tolerance for the deviation-bound formula identity.
    #[arg(long, default_value_t = 1e-12)]
    pub bound_tol: f64,
    /// Tolerance for the beta*(eta) dual-variable identity.
    #[arg(long, default_value_t = 1e-12)]
    pub beta_star_tol: f64,
    /// Extra phi families (`kl`, `jsd`, `alpha:<value>`) whose conjugates
    /// get checked against the grid-sup oracle in addition to the built-in
    /// set.
    #[arg(long = "phi", value_parser = parse_phi)]
    pub phi: Vec<PhiFamily>,
    /// Testing hook: offset added to one analytic gradient entry; any
    /// nonzero value must make the gradient check fail.
    #[arg(long, default_value_t = 0.0)]
    pub perturb_gradient: f64,
}

fn parse_phi(s: &str) -> Result<PhiFamily, String> {
    s.parse::<PhiFamily>().map_err(|e| e.to_string())
}

impl Default for VerifyArgs {
    fn default() -> Self {
        Self {
            toy_tol: 2e-3,
            gibbs_tol: 1e-6,
            identity_tol: 1e-10,
            fd_tol: 1e-5,
            fd_instances: 100,
            conjugate_tol: 1e-4,
            bound_tol: 1e-12,
            beta_star_tol: 1e-12,
            phi: Vec::new(),
            perturb_gradient: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn measure(name: &'static str, error: f64, tolerance: f64) -> Self {
        Self {
            name,
            error,
            tolerance,
            passed: error.is_finite() && error <= tolerance,
        }
    }
}

struct Instance {
    policy: Policy64,
    reference: Policy64,
    dataset: PreferenceDataset,
    beta: f64,
}

fn random_instance(rng: &mut ChaCha12Rng) -> Instance {
    let prompts = rng.random_range(1..=4);
    let k = rng.random_range(2..=5);
    let space = PromptSpace::new(prompts, k).unwrap();
    let logits = |rng: &mut ChaCha12Rng| -> Vec<f64> {
        (0..space.total()).map(|_| rng.random_range(-2.0..2.0)).collect()
    };
    let policy = TabularPolicy::new(space, logits(rng)).unwrap();
    let reference = TabularPolicy::new(space, logits(rng)).unwrap();
    let n = rng.random_range(2..=20);
    let pairs = (0..n)
        .map(|_| {
            let prompt = rng.random_range(0..prompts);
            let chosen = rng.random_range(0..k);
            let mut rejected = rng.random_range(0..k - 1);
            if rejected >= chosen {
                rejected += 1;
            }
            PreferencePair::new(prompt, chosen, rejected)
        })
        .collect();
    Instance {
        policy,
        reference,
        dataset: PreferenceDataset::new(space, pairs).unwrap(),
        beta: rng.random_range(0.05..1.0),
    }
}

fn random_simplex(rng: &mut ChaCha12Rng, len: usize) -> DiscreteDistribution<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    DiscreteDistribution::from_weights(&raw).unwrap()
}

fn toy_checks(args: &VerifyArgs, out: &mut Vec<CheckResult>) -> Result<()> {
    let h = [-0.1f64, -1.0];
    let w = gibbs_weights(&h, 0.1)?;
    out.push(CheckResult::measure(
        "toy_weight_first",
        (w.weights()[0] - 2.0).abs(),
        args.toy_tol,
    ));
    out.push(CheckResult::measure(
        "toy_weight_second",
        w.weights()[1],
        1e-3f64.max(args.toy_tol / 2.0),
    ));
    let weighted_sum: f64 = w.weights().iter().zip(&h).map(|(&wi, &hi)| wi * hi).sum();
    out.push(CheckResult::measure(
        "toy_weighted_sum",
        (weighted_sum + 0.2).abs(),
        1e-3f64.max(args.toy_tol / 2.0),
    ));
    // Tilted value of the same two pairs against its direct formula.
    let direct_loss = -0.1 * (((-0.1f64 / 0.1).exp() + (-1.0f64 / 0.1).exp()) / 2.0).ln();
    let base = DiscreteDistribution::uniform(2)?;
    let optimum = penalized_optimum(&h, 0.1, &base)?;
    out.push(CheckResult::measure(
        "toy_tilted_value",
        (optimum + direct_loss).abs(),
        args.identity_tol,
    ));
    Ok(())
}

fn gibbs_checks(args: &VerifyArgs, out: &mut Vec<CheckResult>) -> Result<()> {
    let mut rng = ChaCha12Rng::seed_from_u64(9001);
    let mut worst_gap = 0.0f64;
    let mut worst_identity = 0.0f64;
    for _ in 0..50 {
        let len = rng.random_range(2..=5usize);
        let h: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..0.0)).collect();
        let beta_prime: f64 = rng.random_range(0.1..10.0);
        let base = random_simplex(&mut rng, len);

        let searched = simplex_search_oracle(&h, beta_prime, &base, 20_000)?;
        let searched_obj = penalized_objective(&searched, &h, beta_prime, &base)?;
        let closed = worst_case_distribution(&h, beta_prime, &base)?;
        let closed_obj = penalized_objective(&closed, &h, beta_prime, &base)?;
        let optimum = penalized_optimum(&h, beta_prime, &base)?;

        worst_gap = worst_gap.max(searched_obj - closed_obj).max(closed_obj - searched_obj);
        worst_identity = worst_identity.max((closed_obj - optimum).abs());
    }
    out.push(CheckResult::measure(
        "gibbs_vs_simplex_search",
        worst_gap,
        args.gibbs_tol,
    ));
    out.push(CheckResult::measure(
        "gibbs_objective_identity",
        worst_identity,
        args.identity_tol,
    ));
    Ok(())
}

fn gradient_checks(args: &VerifyArgs, out: &mut Vec<CheckResult>) -> Result<()> {
    let mut rng = ChaCha12Rng::seed_from_u64(9002);
    let mut worst = 0.0f64;
    for trial in 0..args.fd_instances {
        let inst = random_instance(&mut rng);
        let spec = match trial % 5 {
            0 => LossSpec::dpo(inst.beta),
            1 => LossSpec::drdpo(inst.beta, rng.random_range(0.05..5.0)),
            2 => LossSpec::cdpo(inst.beta, rng.random_range(0.0..0.45)),
            3 => LossSpec::ipo(inst.beta, rng.random_range(0.1..2.0)),
            _ => LossSpec::rdpo(inst.beta, rng.random_range(0.0..0.45)),
        };
        let mut analytic = grad_loss(&inst.policy, &inst.reference, &inst.dataset, &spec)?;
        if args.perturb_gradient != 0.0 {
            // Negative control: corrupt one analytic entry.
            let mut values = analytic.values().to_vec();
            values[0] += args.perturb_gradient;
            analytic = prefopt::GradientTable::new(analytic.space(), values)?;
        }
        let numeric = finite_diff(
            |p| loss_value(p, &inst.reference, &inst.dataset, &spec),
            &inst.policy,
            1e-5,
        )?;
        worst = worst.max(relative_gradient_error(&analytic, &numeric)?);
    }
    out.push(CheckResult::measure("fd_gradients", worst, args.fd_tol));
    Ok(())
}

fn conjugate_checks(args: &VerifyArgs, out: &mut Vec<CheckResult>) -> Result<()> {
    let kl_grid = GridSpec {
        t_min: 1e-6,
        t_max: 200.0,
        points: 1_000_000,
    };
    let mut worst_kl = 0.0f64;
    let mut s = -5.0;
    while s <= 5.0 {
        let closed: f64 = PhiFamily::Kl.conjugate(s)?;
        let oracle = conjugate_sup_oracle(&PhiFamily::Kl, s, &kl_grid)?;
        worst_kl = worst_kl.max((closed - oracle).abs());
        s += 0.5;
    }
    out.push(CheckResult::measure(
        "conjugate_kl",
        worst_kl,
        args.conjugate_tol,
    ));

    let mut worst_jsd = 0.0f64;
    let jsd_grid = GridSpec {
        t_min: 1e-6,
        t_max: 50.0,
        points: 400_000,
    };
    let mut s = -5.0;
    while s < 0.55 {
        let closed: f64 = PhiFamily::Jsd.conjugate(s)?;
        let oracle = conjugate_sup_oracle(&PhiFamily::Jsd, s, &jsd_grid)?;
        worst_jsd = worst_jsd.max((closed - oracle).abs());
        s += 0.25;
    }
    out.push(CheckResult::measure(
        "conjugate_jsd",
        worst_jsd,
        args.conjugate_tol,
    ));

    let alpha_grid = GridSpec {
        t_min: 1e-6,
        t_max: 400.0,
        points: 2_000_000,
    };
    let mut worst_alpha = 0.0f64;
    for alpha in [0.3, 0.5, 0.7] {
        let family = PhiFamily::alpha(alpha)?;
        let sup = family.conjugate_domain_sup().unwrap();
        let mut s = -5.0;
        while s < sup - 1.0 {
            let closed: f64 = family.conjugate(s)?;
            let oracle = conjugate_sup_oracle(&family, s, &alpha_grid)?;
            worst_alpha = worst_alpha.max((closed - oracle).abs());
            s += 0.3;
        }
    }
    out.push(CheckResult::measure(
        "conjugate_alpha",
        worst_alpha,
        args.conjugate_tol,
    ));

    // Requested families get the same closed-form-vs-oracle treatment. The
    // generator shape is validated first so a malformed family fails loudly.
    if !args.phi.is_empty() {
        let grid = GridSpec {
            t_min: 1e-6,
            t_max: 200.0,
            points: 1_000_000,
        };
        let mut worst = 0.0f64;
        for family in &args.phi {
            family.check_generator_shape()?;
            let sup = family.conjugate_domain_sup();
            let mut s = -5.0;
            loop {
                match sup {
                    Some(v) if s >= v - 1.0 => break,
                    None if s > 5.0 => break,
                    _ => {}
                }
                let closed: f64 = family.conjugate(s)?;
                let oracle = conjugate_sup_oracle(family, s, &grid)?;
                worst = worst.max((closed - oracle).abs());
                s += 0.5;
            }
        }
        out.push(CheckResult::measure(
            "conjugate_requested_phi",
            worst,
            args.conjugate_tol,
        ));
    }

    // Fenchel-Young: s*t <= phi(t) + phi*(s) everywhere in domain.
    let mut rng = ChaCha12Rng::seed_from_u64(9003);
    let families = [
        PhiFamily::Kl,
        PhiFamily::Jsd,
        PhiFamily::alpha(0.3)?,
        PhiFamily::alpha(0.7)?,
    ];
    let mut worst_violation = 0.0f64;
    for _ in 0..10_000 {
        let family = families[rng.random_range(0..families.len())];
        let t: f64 = rng.random_range(0.01..10.0);
        let raw_s: f64 = rng.random_range(-5.0..5.0);
        let s = match family.conjugate_domain_sup() {
            Some(sup) => raw_s.min(sup - 1e-3),
            None => raw_s,
        };
        let violation = s * t - family.value(t)? - family.conjugate(s)?;
        worst_violation = worst_violation.max(violation);
    }
    out.push(CheckResult::measure(
        "fenchel_young",
        worst_violation,
        1e-10,
    ));
    Ok(())
}

fn bound_checks(args: &VerifyArgs, out: &mut Vec<CheckResult>) -> Result<()> {
    // Identity against the formula evaluated the printed way.
    let mut rng = ChaCha12Rng::seed_from_u64(9004);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let b: f64 = rng.random_range(0.0..1.5);
        let a = b - rng.random_range(0.0..3.0);
        let inputs = BoundInputs::new(
            rng.random_range(0.01..0.9),
            rng.random_range(2..1_000_000),
            rng.random_range(0.1..10.0),
            a,
            b,
        )?;
        let stable = generalization_bound(&inputs);
        let x = ((inputs.b - inputs.a) / inputs.beta_prime).exp();
        let n = inputs.n as f64;
        let naive = 2.0 * inputs.b * x / (n - 1.0 + x)
            * (n / 2.0 * (1.0 / inputs.delta).ln()).sqrt();
        worst = worst.max((stable - naive).abs() / naive.abs().max(1.0));
    }
    out.push(CheckResult::measure("bound_identity", worst, args.bound_tol));

    // Decay in N: strictly decreasing tail, and negligible by N = 1e8.
    let bound_at = |n: u64| {
        generalization_bound(&BoundInputs::new(0.05, n, 1.0, 0.0, 1.0).unwrap())
    };
    let mut tail_violation = 0.0f64;
    let mut prev = bound_at(1_000);
    for k in 4..=8u32 {
        let next = bound_at(10u64.pow(k));
        tail_violation = tail_violation.max(next - prev);
        prev = next;
    }
    out.push(CheckResult::measure("bound_n_decay_tail", tail_violation, 0.0));
    out.push(CheckResult::measure(
        "bound_n_decay_ratio",
        bound_at(100_000_000) / bound_at(100),
        1e-2,
    ));

    // Growth as beta' shrinks.
    let mut worst_growth = 0.0f64;
    let mut prev = f64::NEG_INFINITY;
    for bp in [10.0, 1.0, 0.5, 0.2, 0.1] {
        let v = generalization_bound(&BoundInputs::new(0.05, 1000, bp, -2.0, 0.5)?);
        worst_growth = worst_growth.max(prev - v);
        prev = v;
    }
    out.push(CheckResult::measure(
        "bound_beta_prime_growth",
        worst_growth,
        0.0,
    ));
    Ok(())
}

fn beta_star_checks(args: &VerifyArgs, out: &mut Vec<CheckResult>) -> Result<()> {
    let mut worst = 0.0f64;
    let mut monotone_violation = 0.0f64;
    for v in [0.0f64, 0.25, 1.0, 2.0, 5.0, 10.0] {
        let mut prev = f64::INFINITY;
        for eta in [0.1, 0.25, 1.0, 4.0, 10.0] {
            let b = beta_star(eta, v)?;
            worst = worst.max((b * b * 2.0 * eta - v).abs());
            if v > 0.0 {
                monotone_violation = monotone_violation.max(b - prev);
            }
            prev = b;
        }
    }
    out.push(CheckResult::measure("beta_star_identity", worst, args.beta_star_tol));
    out.push(CheckResult::measure(
        "beta_star_monotone",
        monotone_violation,
        0.0,
    ));

    // Reward variance under the reference feeding the identity.
    let space = PromptSpace::new(1, 2)?;
    let reference = Policy64::uniform(space);
    let reward = RewardTable::new(space, vec![0.0, 2.0])?;
    let v = reward_variance_under_ref(&reward, &reference, 0)?;
    out.push(CheckResult::measure(
        "reward_variance_example",
        (v - 1.0).abs(),
        args.beta_star_tol,
    ));
    Ok(())
}

fn tilted_consistency_check(args: &VerifyArgs, out: &mut Vec<CheckResult>) -> Result<()> {
    // The penalized optimum on a uniform base equals the negated tilted loss.
    let mut rng = ChaCha12Rng::seed_from_u64(9005);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let inst = random_instance(&mut rng);
        let beta_prime = rng.random_range(0.05..5.0);
        let h = prefopt::h_values(&inst.policy, &inst.reference, &inst.dataset, inst.beta)?;
        let base = DiscreteDistribution::uniform(h.len())?;
        let optimum = penalized_optimum(&h, beta_prime, &base)?;
        let loss = dr_dpo_loss(
            &inst.policy,
            &inst.reference,
            &inst.dataset,
            inst.beta,
            beta_prime,
        )?;
        worst = worst.max((optimum + loss).abs());
    }
    out.push(CheckResult::measure(
        "tilted_loss_duality",
        worst,
        args.identity_tol,
    ));
    Ok(())
}

/// Runs the whole suite; the bool is `true` iff every check passed.
pub fn run_verify(args: &VerifyArgs) -> Result<(Vec<CheckResult>, bool)> {
    let mut results = Vec::new();
    toy_checks(args, &mut results)?;
    gibbs_checks(args, &mut results)?;
    gradient_checks(args, &mut results)?;
    conjugate_checks(args, &mut results)?;
    bound_checks(args, &mut results)?;
    beta_star_checks(args, &mut results)?;
    tilted_consistency_check(args, &mut results)?;
    let all_passed = results.iter().all(|r| r.passed);
    Ok((results, all_passed))
}

pub fn run(args: &VerifyArgs) -> Result<()> {
    let (results, all_passed) = run_verify(args)?;
    for r in &results {
        println!(
            "check {:<28} error={:<12.3e} tol={:<9.1e} {}",
            r.name,
            r.error,
            r.tolerance,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    if !all_passed {
        let failing: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
        anyhow::bail!("verification failed: {}", failing.join(", "));
    }
    println!("all {} checks passed", results.len());
    Ok(())
}
