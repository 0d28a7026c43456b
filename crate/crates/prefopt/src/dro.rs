//! Closed forms for the KL-penalized worst-case reweighting problem
//! `max_q E_q[h] - beta' * KL(q, base)` and its relatives: Gibbs pair
//! weights, the worst-case distribution, dual variables, the general-phi
//! optimal reward, and the finite-sample bound. A brute-force simplex search
//! independently certifies the maximizer.

use crate::divergence::{DiscreteDistribution, PhiFamily};
use crate::error::{Error, Result};
use crate::policy::{RewardTable, TabularPolicy};
use crate::scalar::Real;

/// Per-pair weights normalized to mean one, aligned with dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T> {
    weights: Vec<T>,
}

impl<T: Real> WeightVector<T> {
    /// Validates positivity and unit mean (within 1e-12).
    pub fn new(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidConfig("empty weight vector".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < T::zero() {
                return Err(Error::Domain(format!("weight {i} is {w}")));
            }
        }
        let n = T::of(weights.len() as f64);
        let mean = weights.iter().fold(T::zero(), |acc, &w| acc + w) / n;
        if (mean - T::one()).abs() > T::of(1e-12) {
            return Err(Error::Domain(format!(
                "weights have mean {mean}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gibbs weights `w_i = exp(h_i / beta') / mean_j exp(h_j / beta')`.
///
/// Exponentials are max-subtracted before normalization, so the weights are
/// finite for any `h` and strictly increasing in `h_i`. These are the
/// effective per-pair weights the tilted loss applies in its gradient.
pub fn gibbs_weights<T: Real>(h_values: &[T], beta_prime: T) -> Result<WeightVector<T>> {
    if h_values.is_empty() {
        return Err(Error::InvalidConfig("empty h vector".into()));
    }
    check_beta_prime(beta_prime)?;
    let max = h_values
        .iter()
        .fold(T::neg_infinity(), |acc, &v| acc.max(v));
    let exps: Vec<T> = h_values
        .iter()
        .map(|&v| ((v - max) / beta_prime).exp())
        .collect();
    let mean = exps.iter().fold(T::zero(), |acc, &e| acc + e) / T::of(exps.len() as f64);
    Ok(WeightVector {
        weights: exps.into_iter().map(|e| e / mean).collect(),
    })
}

/// Maximizer of `E_q[h] - beta' * KL(q, base)`: `q*_i ∝ base_i exp(h_i/beta')`.
pub fn worst_case_distribution<T: Real>(
    h_values: &[T],
    beta_prime: T,
    base: &DiscreteDistribution<T>,
) -> Result<DiscreteDistribution<T>> {
    check_beta_prime(beta_prime)?;
    check_lengths(h_values.len(), base.len())?;
    check_base_positive(base)?;
    let max = h_values
        .iter()
        .fold(T::neg_infinity(), |acc, &v| acc.max(v));
    let weights: Vec<T> = h_values
        .iter()
        .zip(base.probs())
        .map(|(&h, &b)| b * ((h - max) / beta_prime).exp())
        .collect();
    DiscreteDistribution::from_weights(&weights)
}

/// The soft-penalized objective `E_q[h] - beta' * KL(q, base)`.
pub fn penalized_objective<T: Real>(
    q: &DiscreteDistribution<T>,
    h_values: &[T],
    beta_prime: T,
    base: &DiscreteDistribution<T>,
) -> Result<T> {
    check_beta_prime(beta_prime)?;
    check_lengths(h_values.len(), q.len())?;
    check_lengths(h_values.len(), base.len())?;
    check_base_positive(base)?;
    let mut expectation = T::zero();
    let mut kl = T::zero();
    for ((&qi, &hi), &bi) in q.probs().iter().zip(h_values).zip(base.probs()) {
        expectation += qi * hi;
        if qi > T::zero() {
            kl += qi * (qi / bi).ln();
        }
    }
    Ok(expectation - beta_prime * kl)
}

/// Value of the penalized objective at its maximizer:
/// `beta' * log E_base[exp(h / beta')]`, max-subtracted.
pub fn penalized_optimum<T: Real>(
    h_values: &[T],
    beta_prime: T,
    base: &DiscreteDistribution<T>,
) -> Result<T> {
    check_beta_prime(beta_prime)?;
    check_lengths(h_values.len(), base.len())?;
    check_base_positive(base)?;
    let max = h_values
        .iter()
        .fold(T::neg_infinity(), |acc, &v| acc.max(v));
    let sum = h_values
        .iter()
        .zip(base.probs())
        .fold(T::zero(), |acc, (&h, &b)| {
            acc + b * ((h - max) / beta_prime).exp()
        });
    Ok(beta_prime * (max / beta_prime + sum.ln()))
}

/// Euclidean projection onto the probability simplex.
fn project_to_simplex<T: Real>(v: &[T]) -> Vec<T> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite values"));
    let mut cumsum = T::zero();
    // The largest element always satisfies the support condition, so tau is
    // set on the first pass.
    let mut tau = T::zero();
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - T::one()) / T::of((j + 1) as f64);
        if u - candidate > T::zero() {
            tau = candidate;
        }
    }
    v.iter().map(|&x| (x - tau).max(T::zero())).collect()
}

/// Brute-force maximization of [`penalized_objective`], independent of the
/// Gibbs closed form.
///
/// Length <= 3 starts from an exhaustive simplex grid (step 1e-3); every run
/// finishes with projected gradient ascent and a backtracking line search.
/// Fails with the best iterate when the optimality certificate still shows
/// more than 1e-7 of reachable improvement after `iterations` rounds.
pub fn simplex_search_oracle<T: Real>(
    h_values: &[T],
    beta_prime: T,
    base: &DiscreteDistribution<T>,
    iterations: usize,
) -> Result<DiscreteDistribution<T>> {
    check_beta_prime(beta_prime)?;
    check_lengths(h_values.len(), base.len())?;
    check_base_positive(base)?;
    if iterations == 0 {
        return Err(Error::InvalidConfig("iterations must be >= 1".into()));
    }

    let n = h_values.len();
    let objective = |q: &[T]| -> T {
        let mut acc = T::zero();
        for i in 0..n {
            let qi = q[i];
            acc += qi * h_values[i];
            if qi > T::zero() {
                acc -= beta_prime * qi * (qi / base.probs()[i]).ln();
            }
        }
        acc
    };

    let mut q: Vec<T> = match n {
        1 => vec![T::one()],
        2 | 3 => grid_start(h_values, &objective),
        _ => base.probs().to_vec(),
    };
    // Pull the start strictly inside the simplex; the gradient needs q > 0.
    let blend = T::of(1e-3);
    for (x, &b) in q.iter_mut().zip(base.probs()) {
        *x = (T::one() - blend) * *x + blend * b;
    }

    // The iterate stays strictly positive (floored far below f64 resolution
    // of the sum) so the gradient is finite and the optimality certificate
    // sees every escape direction.
    let tiny = T::of(1e-300);
    let floor = |q: &mut Vec<T>| {
        for x in q.iter_mut() {
            *x = x.max(tiny);
        }
    };
    let gradient = |q: &[T]| -> Vec<T> {
        (0..n)
            .map(|i| h_values[i] - beta_prime * ((q[i] / base.probs()[i]).ln() + T::one()))
            .collect()
    };
    // Exact optimality certificate: the objective is beta'-strongly concave
    // in KL geometry, with f(p) = f(q) + (p - q).g - beta' KL(p || q), so the
    // remaining improvement is exactly
    //   max_p f(p) - f(q) = beta' ln sum_i q_i exp((g_i - q.g) / beta').
    let value_gap = |q: &[T], g: &[T]| -> T {
        let inner = (0..n).fold(T::zero(), |acc, i| acc + q[i] * g[i]);
        let max = g.iter().fold(T::neg_infinity(), |acc, &v| acc.max(v));
        let sum = (0..n).fold(T::zero(), |acc, i| {
            acc + q[i] * ((g[i] - max) / beta_prime).exp()
        });
        beta_prime * sum.ln() + max - inner
    };

    let tol = T::of(1e-10);
    floor(&mut q);
    let mut obj = objective(&q);
    let mut step_init = T::one();
    let mut stalls = 0u32;
    let mut gap = T::infinity();
    for _ in 0..iterations {
        let g = gradient(&q);
        gap = value_gap(&q, &g);
        if gap <= tol {
            break;
        }
        let mut step = step_init;
        let mut accepted = false;
        for _ in 0..80 {
            let trial: Vec<T> = (0..n).map(|i| q[i] + step * g[i]).collect();
            let mut candidate = project_to_simplex(&trial);
            floor(&mut candidate);
            let cand_obj = objective(&candidate);
            if cand_obj > obj {
                q = candidate;
                obj = cand_obj;
                step_init = (step * T::of(4.0)).min(T::of(1e3));
                accepted = true;
                break;
            }
            step *= T::of(0.5);
        }
        if !accepted {
            stalls += 1;
            step_init = T::one();
            if stalls >= 8 {
                break;
            }
        } else {
            stalls = 0;
        }
    }

    if gap > T::of(1e-7) {
        return Err(Error::NoConvergence(format!(
            "simplex search stalled {:e} below the optimum, objective {}, best iterate {:?}",
            gap.as_f64(),
            obj.as_f64(),
            q.iter().map(|&x| x.as_f64()).collect::<Vec<_>>()
        )));
    }
    DiscreteDistribution::new(q.iter().map(|&x| x.max(T::zero())).collect()).or_else(|_| {
        // Projection rounding can leave the sum 1 +/- a few ulp; renormalize.
        DiscreteDistribution::from_weights(&q)
    })
}

fn grid_start<T: Real>(h_values: &[T], objective: &impl Fn(&[T]) -> T) -> Vec<T> {
    let steps = 1000usize;
    let unit = T::one() / T::of(steps as f64);
    let mut best_obj = T::neg_infinity();
    let mut best = vec![T::zero(); h_values.len()];
    if h_values.len() == 2 {
        for i in 0..=steps {
            let a = unit * T::of(i as f64);
            let q = [a, T::one() - a];
            let o = objective(&q);
            if o > best_obj {
                best_obj = o;
                best = q.to_vec();
            }
        }
    } else {
        for i in 0..=steps {
            let a = unit * T::of(i as f64);
            for j in 0..=(steps - i) {
                let b = unit * T::of(j as f64);
                let q = [a, b, T::one() - a - b];
                let o = objective(&q);
                if o > best_obj {
                    best_obj = o;
                    best = q.to_vec();
                }
            }
        }
    }
    best
}

/// Optimal dual shift `alpha* = -beta * log E_ref[exp(r / beta)]`.
///
/// The expectation here runs jointly over the sampled contexts and the
/// reference completions; the per-context normalizer lives in
/// [`optimal_likelihood_ratio`]. The two differ by where the context average
/// sits, and both are exposed deliberately.
pub fn optimal_alpha<T: Real>(
    reward_values: &[T],
    ref_probs: &DiscreteDistribution<T>,
    beta: T,
) -> Result<T> {
    check_beta(beta)?;
    check_lengths(reward_values.len(), ref_probs.len())?;
    let max = reward_values
        .iter()
        .fold(T::neg_infinity(), |acc, &v| acc.max(v));
    let sum = reward_values
        .iter()
        .zip(ref_probs.probs())
        .fold(T::zero(), |acc, (&r, &p)| acc + p * ((r - max) / beta).exp());
    Ok(-beta * (max / beta + sum.ln()))
}

/// Optimal likelihood ratios `L*_i = exp(r_i / beta) / E_ref[exp(r / beta)]`.
/// Satisfies `E_ref[L*] = 1`.
pub fn optimal_likelihood_ratio<T: Real>(
    reward_values: &[T],
    ref_probs: &DiscreteDistribution<T>,
    beta: T,
) -> Result<Vec<T>> {
    check_beta(beta)?;
    check_lengths(reward_values.len(), ref_probs.len())?;
    let max = reward_values
        .iter()
        .fold(T::neg_infinity(), |acc, &v| acc.max(v));
    let exps: Vec<T> = reward_values
        .iter()
        .map(|&r| ((r - max) / beta).exp())
        .collect();
    let z = exps
        .iter()
        .zip(ref_probs.probs())
        .fold(T::zero(), |acc, (&e, &p)| acc + p * e);
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// Optimal reward under a general phi constraint: `beta * phi'(ratio)`, the
/// constant dual shift omitted. KL recovers `beta * ln(ratio)`.
pub fn optimal_reward_general_phi<T: Real>(
    family: &PhiFamily,
    ratio: T,
    beta: T,
) -> Result<T> {
    check_beta(beta)?;
    if ratio <= T::zero() {
        return Err(Error::Domain(format!(
            "likelihood ratio must be > 0, got {ratio}"
        )));
    }
    Ok(beta * family.derivative(ratio)?)
}

/// Optimal regularization strength for a robustness radius `eta`:
/// `beta*(eta) = sqrt(V / (2 eta))` where `V` is the reward variance under
/// the reference. Decreasing in `eta`, increasing in `V`.
pub fn beta_star<T: Real>(eta: T, reward_variance: T) -> Result<T> {
    if eta <= T::zero() || !eta.is_finite() {
        return Err(Error::InvalidConfig(format!("eta must be > 0, got {eta}")));
    }
    if reward_variance < T::zero() || !reward_variance.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "variance must be >= 0, got {reward_variance}"
        )));
    }
    Ok((reward_variance / (T::of(2.0) * eta)).sqrt())
}

/// Variance of one reward row under the reference policy's distribution for
/// that prompt.
pub fn reward_variance_under_ref<T: Real>(
    reward: &RewardTable<T>,
    reference: &TabularPolicy<T>,
    prompt: usize,
) -> Result<T> {
    reward.space().check_matches(&reference.space())?;
    let probs = reference.probabilities(prompt)?;
    let row = reward.row(prompt)?;
    let mean = probs
        .iter()
        .zip(row)
        .fold(T::zero(), |acc, (&p, &r)| acc + p * r);
    Ok(probs.iter().zip(row).fold(T::zero(), |acc, (&p, &r)| {
        let d = r - mean;
        acc + p * d * d
    }))
}

/// Inputs for the finite-sample deviation bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub delta: f64,
    pub n: u64,
    pub beta_prime: f64,
    pub a: f64,
    pub b: f64,
}

impl BoundInputs {
    pub fn new(delta: f64, n: u64, beta_prime: f64, a: f64, b: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidConfig("n must be >= 1".into()));
        }
        if !(beta_prime > 0.0 && beta_prime.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "beta_prime must be > 0, got {beta_prime}"
            )));
        }
        if !(a.is_finite() && b.is_finite() && a <= b) {
            return Err(Error::InvalidConfig(format!(
                "need finite a <= b, got [{a}, {b}]"
            )));
        }
        Ok(Self {
            delta,
            n,
            beta_prime,
            a,
            b,
        })
    }

    /// Estimates the `[a, b]` range from observed per-pair log-likelihoods:
    /// `a` is the observed minimum clamped at `floor`, `b` is 0 (h is never
    /// positive). The clamp is explicit because h is unbounded below.
    pub fn from_observed_h(
        h_values: &[f64],
        floor: f64,
        delta: f64,
        beta_prime: f64,
    ) -> Result<Self> {
        if h_values.is_empty() {
            return Err(Error::InvalidConfig("empty h vector".into()));
        }
        if !(floor.is_finite() && floor <= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "floor must be finite and <= 0, got {floor}"
            )));
        }
        let min = h_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let a = min.max(floor).min(0.0);
        Self::new(delta, h_values.len() as u64, beta_prime, a, 0.0)
    }
}

/// Deviation bound
/// `B = 2 b e^x / (N - 1 + e^x) * sqrt(N/2 * ln(1/delta))`, `x = (b-a)/beta'`.
///
/// Evaluated as `2b / ((N-1) e^{-x} + 1) * sqrt(...)` so that small
/// `beta_prime` (huge `e^x`) cannot overflow. Grows as `beta_prime` shrinks
/// and vanishes as `N -> inf`.
pub fn generalization_bound(inputs: &BoundInputs) -> f64 {
    let x = (inputs.b - inputs.a) / inputs.beta_prime;
    let n = inputs.n as f64;
    let ratio = 2.0 * inputs.b / ((n - 1.0) * (-x).exp() + 1.0);
    ratio * (n / 2.0 * (1.0 / inputs.delta).ln()).sqrt()
}

fn check_beta<T: Real>(beta: T) -> Result<()> {
    if beta <= T::zero() || !beta.is_finite() {
        return Err(Error::InvalidConfig(format!("beta must be > 0, got {beta}")));
    }
    Ok(())
}

fn check_beta_prime<T: Real>(beta_prime: T) -> Result<()> {
    if beta_prime <= T::zero() || !beta_prime.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "beta_prime must be > 0, got {beta_prime}"
        )));
    }
    Ok(())
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("lengths differ: {a} vs {b}")));
    }
    Ok(())
}

fn check_base_positive<T: Real>(base: &DiscreteDistribution<T>) -> Result<()> {
    for (i, &p) in base.probs().iter().enumerate() {
        if p <= T::zero() {
            return Err(Error::Domain(format!(
                "base distribution is degenerate: entry {i} is {p}"
            )));
        }
    }
    Ok(())
}
