//! The phi-divergence family: generator values, derivatives, convex
//! conjugates, and divergences between discrete distributions.
//!
//! Each family is a convex generator `phi` with `phi(1) = 0`. Conjugates
//! `phi*(s) = sup_t { s*t - phi(t) }` have closed forms here; an independent
//! grid-sup oracle ([`conjugate_sup_oracle`]) cross-checks them.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A phi-divergence generator.
///
/// Values at `t = 0` are the continuity limits: `1` for KL, `ln 2` for JSD,
/// `1/alpha` for the alpha family. Ratios of degenerate distributions can hit
/// zero, so the limits are part of the contract.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhiFamily {
    /// `phi(t) = t ln t - t + 1`; conjugate `e^s - 1` on all of R.
    Kl,
    /// `phi(t) = t ln t - (1+t) ln((1+t)/2)`; conjugate `-ln(2 - e^s)` for
    /// `s < ln 2`.
    Jsd,
    /// `phi(t) = (t^a - a t + a - 1) / (a (a - 1))` for `a` in (0,1);
    /// conjugate defined for `s < 1/(1-a)`.
    Alpha { alpha: f64 },
}

impl PhiFamily {
    pub fn alpha(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        Ok(Self::Alpha { alpha })
    }

    /// Generator value `phi(t)` for `t >= 0`.
    pub fn value<T: Real>(&self, t: T) -> Result<T> {
        if t < T::zero() {
            return Err(Error::Domain(format!("phi requires t >= 0, got {t}")));
        }
        Ok(match *self {
            PhiFamily::Kl => {
                if t == T::zero() {
                    T::one()
                } else {
                    t * t.ln() - t + T::one()
                }
            }
            PhiFamily::Jsd => {
                let two = T::of(2.0);
                if t == T::zero() {
                    two.ln()
                } else {
                    t * t.ln() - (T::one() + t) * ((T::one() + t) / two).ln()
                }
            }
            PhiFamily::Alpha { alpha } => {
                let a = T::of(alpha);
                if t == T::zero() {
                    T::one() / a
                } else {
                    (t.powf(a) - a * t + a - T::one()) / (a * (a - T::one()))
                }
            }
        })
    }

    /// Derivative `phi'(t)` for `t > 0`.
    pub fn derivative<T: Real>(&self, t: T) -> Result<T> {
        if t <= T::zero() {
            return Err(Error::Domain(format!("phi' requires t > 0, got {t}")));
        }
        Ok(match *self {
            PhiFamily::Kl => t.ln(),
            PhiFamily::Jsd => (T::of(2.0) * t / (T::one() + t)).ln(),
            PhiFamily::Alpha { alpha } => {
                let a = T::of(alpha);
                (t.powf(a - T::one()) - T::one()) / (a - T::one())
            }
        })
    }

    /// Exclusive upper end of the conjugate domain, if bounded.
    pub fn conjugate_domain_sup(&self) -> Option<f64> {
        match *self {
            PhiFamily::Kl => None,
            PhiFamily::Jsd => Some(2f64.ln()),
            PhiFamily::Alpha { alpha } => Some(1.0 / (1.0 - alpha)),
        }
    }

    /// Convex conjugate `phi*(s) = sup_t { s*t - phi(t) }` in closed form.
    ///
    /// Outside the finite domain the supremum diverges and a domain error is
    /// returned; the boundary values were pinned against [`conjugate_sup_oracle`].
    pub fn conjugate<T: Real>(&self, s: T) -> Result<T> {
        if let Some(sup) = self.conjugate_domain_sup() {
            if s >= T::of(sup) {
                return Err(Error::Domain(format!(
                    "conjugate of {self} diverges for s >= {sup}, got {s}"
                )));
            }
        }
        Ok(match *self {
            PhiFamily::Kl => s.exp() - T::one(),
            PhiFamily::Jsd => -(T::of(2.0) - s.exp()).ln(),
            PhiFamily::Alpha { alpha } => {
                let a = T::of(alpha);
                let one = T::one();
                // Stationary point of t -> s*t - phi(t).
                let t_star = (one - s * (one - a)).powf(one / (a - one));
                s * t_star - self.value(t_star)?
            }
        })
    }

    /// Numerically confirms convexity and `phi(1) = 0` on a grid.
    pub fn check_generator_shape(&self) -> Result<()> {
        let at_one: f64 = self.value(1.0)?;
        if at_one.abs() > 1e-12 {
            return Err(Error::Domain(format!("phi(1) = {at_one}, expected 0")));
        }
        let grid: Vec<f64> = (1..=400).map(|i| i as f64 * 0.025).collect();
        for w in grid.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let lhs: f64 = self.value(mid)?;
            let rhs = 0.5 * self.value(w[0])? + 0.5 * self.value(w[1])?;
            if lhs > rhs + 1e-12 {
                return Err(Error::Domain(format!(
                    "midpoint convexity fails at [{}, {}]",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for PhiFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PhiFamily::Kl => write!(f, "kl"),
            PhiFamily::Jsd => write!(f, "jsd"),
            PhiFamily::Alpha { alpha } => write!(f, "alpha:{alpha}"),
        }
    }
}

impl FromStr for PhiFamily {
    type Err = Error;

    /// Parses `"kl"`, `"jsd"`, or `"alpha:<value>"`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" => Ok(PhiFamily::Kl),
            "jsd" => Ok(PhiFamily::Jsd),
            other => {
                if let Some(raw) = other.strip_prefix("alpha:") {
                    let alpha: f64 = raw.parse().map_err(|_| {
                        Error::InvalidConfig(format!("bad alpha value: {raw:?}"))
                    })?;
                    PhiFamily::alpha(alpha)
                } else {
                    Err(Error::InvalidConfig(format!(
                        "unknown phi family {other:?}; expected kl, jsd, or alpha:<value>"
                    )))
                }
            }
        }
    }
}

/// Uniform evaluation grid for the conjugate sup oracle.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn new(t_min: f64, t_max: f64, points: usize) -> Result<Self> {
        if points == 0 {
            return Err(Error::InvalidConfig("grid needs at least one point".into()));
        }
        if !(t_min > 0.0 && t_max > t_min) {
            return Err(Error::InvalidConfig(format!(
                "grid bounds must satisfy 0 < t_min < t_max, got [{t_min}, {t_max}]"
            )));
        }
        Ok(Self {
            t_min,
            t_max,
            points,
        })
    }

    /// Dense default: `[1e-6, t_max]` with 200k points.
    pub fn dense(t_max: f64) -> Self {
        Self {
            t_min: 1e-6,
            t_max,
            points: 200_000,
        }
    }
}

/// Brute-force lower bound on `phi*(s)`: max of `s*t - phi(t)` over the grid.
///
/// Stays independent of [`PhiFamily::conjugate`] so the pair forms a
/// two-route check; it converges to the true sup as the grid refines
/// (provided the grid covers the maximizer).
pub fn conjugate_sup_oracle<T: Real>(family: &PhiFamily, s: T, grid: &GridSpec) -> Result<T> {
    if grid.points == 0 {
        return Err(Error::InvalidConfig("empty grid".into()));
    }
    let step = if grid.points == 1 {
        0.0
    } else {
        (grid.t_max - grid.t_min) / (grid.points - 1) as f64
    };
    let mut best = T::neg_infinity();
    for i in 0..grid.points {
        let t = T::of(grid.t_min + step * i as f64);
        let candidate = s * t - family.value(t)?;
        if candidate > best {
            best = candidate;
        }
    }
    Ok(best)
}

/// A probability vector: non-negative entries summing to one within 1e-10.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution<T> {
    probs: Vec<T>,
}

impl<T: Real> DiscreteDistribution<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidConfig("empty distribution".into()));
        }
        let mut sum = T::zero();
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < T::zero() {
                return Err(Error::Domain(format!("probability {i} is {p}")));
            }
            sum += p;
        }
        if (sum - T::one()).abs() > T::of(1e-10) {
            return Err(Error::Domain(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidConfig("empty distribution".into()));
        }
        let p = T::one() / T::of(len as f64);
        Ok(Self {
            probs: vec![p; len],
        })
    }

    /// Normalizes non-negative weights with positive total mass.
    pub fn from_weights(weights: &[T]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidConfig("empty weight vector".into()));
        }
        let mut total = T::zero();
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < T::zero() {
                return Err(Error::Domain(format!("weight {i} is {w}")));
            }
            total += w;
        }
        if total <= T::zero() {
            return Err(Error::Domain("weights have zero total mass".into()));
        }
        Ok(Self {
            probs: weights.iter().map(|&w| w / total).collect(),
        })
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// `D_phi(q, q0) = sum_i q0_i phi(q_i / q0_i)`.
///
/// Zero mass in `q0` where `q` carries mass makes the divergence infinite,
/// reported as a dedicated error rather than an `inf` value.
pub fn phi_divergence<T: Real>(
    family: &PhiFamily,
    q: &DiscreteDistribution<T>,
    q0: &DiscreteDistribution<T>,
) -> Result<T> {
    if q.len() != q0.len() {
        return Err(Error::ShapeMismatch(format!(
            "distribution lengths differ: {} vs {}",
            q.len(),
            q0.len()
        )));
    }
    let mut total = T::zero();
    for i in 0..q.len() {
        let qi = q.probs[i];
        let bi = q0.probs[i];
        if bi == T::zero() {
            if qi > T::zero() {
                return Err(Error::InfiniteDivergence(format!(
                    "q0[{i}] = 0 but q[{i}] = {qi}"
                )));
            }
            continue;
        }
        total += bi * family.value(qi / bi)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FAMILIES: [PhiFamily; 4] = [
        PhiFamily::Kl,
        PhiFamily::Jsd,
        PhiFamily::Alpha { alpha: 0.3 },
        PhiFamily::Alpha { alpha: 0.7 },
    ];

    #[test]
    fn generator_vanishes_at_one() {
        for family in FAMILIES {
            let v: f64 = family.value(1.0).unwrap();
            assert!(v.abs() < 1e-14, "{family}: phi(1) = {v}");
        }
    }

    #[test]
    fn kl_value_at_e_is_one() {
        let v: f64 = PhiFamily::Kl.value(std::f64::consts::E).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn value_rejects_negative_t() {
        for family in FAMILIES {
            assert!(matches!(
                family.value(-0.5f64),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn value_at_zero_takes_continuity_limits() {
        assert_eq!(PhiFamily::Kl.value(0.0f64).unwrap(), 1.0);
        assert!((PhiFamily::Jsd.value(0.0f64).unwrap() - 2f64.ln()).abs() < 1e-15);
        let alpha = PhiFamily::alpha(0.25).unwrap();
        assert!((alpha.value(0.0f64).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_known_points() {
        assert_eq!(PhiFamily::Kl.derivative(1.0f64).unwrap(), 0.0);
        let at_e: f64 = PhiFamily::Kl.derivative(std::f64::consts::E).unwrap();
        assert!((at_e - 1.0).abs() < 1e-12);
        assert!(matches!(
            PhiFamily::Jsd.derivative(0.0f64),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn derivative_matches_central_differences() {
        let step = 1e-6;
        for family in FAMILIES {
            for i in 1..=100 {
                let t = 0.1 + 0.099 * i as f64;
                let fd: f64 =
                    (family.value(t + step).unwrap() - family.value(t - step).unwrap())
                        / (2.0 * step);
                let analytic = family.derivative(t).unwrap();
                let denom = analytic.abs().max(1.0);
                assert!(
                    ((analytic - fd) / denom).abs() < 1e-5,
                    "{family} at t={t}: analytic {analytic} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn kl_conjugate_closed_form() {
        assert_eq!(PhiFamily::Kl.conjugate(0.0f64).unwrap(), 0.0);
        let at_one: f64 = PhiFamily::Kl.conjugate(1.0).unwrap();
        assert!((at_one - (std::f64::consts::E - 1.0)).abs() < 1e-12);
        assert!((at_one - 1.718281828459045).abs() < 1e-12);
    }

    #[test]
    fn conjugate_rejects_out_of_domain_arguments() {
        assert!(matches!(
            PhiFamily::Jsd.conjugate(2f64.ln()),
            Err(Error::Domain(_))
        ));
        let alpha = PhiFamily::alpha(0.5).unwrap();
        assert!(matches!(alpha.conjugate(2.0f64), Err(Error::Domain(_))));
        assert!(alpha.conjugate(1.9f64).is_ok());
    }

    #[test]
    fn sup_oracle_matches_kl_closed_form() {
        let grid = GridSpec::dense(10.0);
        let near_zero: f64 = conjugate_sup_oracle(&PhiFamily::Kl, 0.0, &grid).unwrap();
        assert!(near_zero.abs() < 1e-8);
        let at_one: f64 = conjugate_sup_oracle(&PhiFamily::Kl, 1.0, &grid).unwrap();
        assert!((at_one - 1.7182818).abs() < 1e-4);
    }

    #[test]
    fn sup_oracle_alpha_at_zero_is_zero() {
        let family = PhiFamily::alpha(0.5).unwrap();
        let v: f64 = conjugate_sup_oracle(&family, 0.0, &GridSpec::dense(10.0)).unwrap();
        assert!(v.abs() < 1e-8);
    }

    #[test]
    fn sup_oracle_rejects_empty_grid() {
        assert!(GridSpec::new(1e-6, 10.0, 0).is_err());
    }

    #[test]
    fn jsd_conjugate_matches_sup_oracle_on_grid() {
        let grid = GridSpec {
            t_min: 1e-6,
            t_max: 50.0,
            points: 400_000,
        };
        let mut s = -5.0f64;
        while s < 0.55 {
            let closed: f64 = PhiFamily::Jsd.conjugate(s).unwrap();
            let oracle = conjugate_sup_oracle(&PhiFamily::Jsd, s, &grid).unwrap();
            assert!(
                (closed - oracle).abs() < 1e-4,
                "s={s}: closed {closed} vs oracle {oracle}"
            );
            s += 0.25;
        }
    }

    #[test]
    fn divergence_zero_iff_equal() {
        let q = DiscreteDistribution::new(vec![0.25f64, 0.5, 0.25]).unwrap();
        for family in FAMILIES {
            assert!(phi_divergence(&family, &q, &q).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn kl_divergence_point_mass_vs_uniform() {
        let q = DiscreteDistribution::new(vec![1.0f64, 0.0]).unwrap();
        let base = DiscreteDistribution::uniform(2).unwrap();
        let got = phi_divergence(&PhiFamily::Kl, &q, &base).unwrap();
        // 0.5 phi(2) + 0.5 phi(0) = ln 2.
        assert!((got - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn jsd_divergence_is_symmetric() {
        let q = DiscreteDistribution::new(vec![0.7f64, 0.2, 0.1]).unwrap();
        let q0 = DiscreteDistribution::new(vec![0.2f64, 0.3, 0.5]).unwrap();
        let a = phi_divergence(&PhiFamily::Jsd, &q, &q0).unwrap();
        let b = phi_divergence(&PhiFamily::Jsd, &q0, &q).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn divergence_signals_absolute_continuity_failure() {
        let q = DiscreteDistribution::new(vec![0.5f64, 0.5]).unwrap();
        let q0 = DiscreteDistribution::new(vec![1.0f64, 0.0]).unwrap();
        assert!(matches!(
            phi_divergence(&PhiFamily::Kl, &q, &q0),
            Err(Error::InfiniteDivergence(_))
        ));
    }

    #[test]
    fn family_parsing_round_trips() {
        assert_eq!("kl".parse::<PhiFamily>().unwrap(), PhiFamily::Kl);
        assert_eq!("jsd".parse::<PhiFamily>().unwrap(), PhiFamily::Jsd);
        assert_eq!(
            "alpha:0.5".parse::<PhiFamily>().unwrap(),
            PhiFamily::Alpha { alpha: 0.5 }
        );
        assert!("alpha:1.5".parse::<PhiFamily>().is_err());
        assert!("hellinger".parse::<PhiFamily>().is_err());
    }

    #[test]
    fn generator_shape_check_accepts_all_families() {
        for family in FAMILIES {
            family.check_generator_shape().unwrap();
        }
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistribution::new(vec![0.5f64, 0.4]).is_err());
        assert!(DiscreteDistribution::new(vec![-0.1f64, 1.1]).is_err());
        assert!(DiscreteDistribution::<f64>::new(vec![]).is_err());
        assert!(DiscreteDistribution::from_weights(&[0.0f64, 0.0]).is_err());
        let d = DiscreteDistribution::from_weights(&[1.0f64, 3.0]).unwrap();
        assert_eq!(d.probs(), &[0.25, 0.75]);
    }
}
