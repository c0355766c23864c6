//! Tail bounds for discounted sums of i.i.d. negative-drift variables.
//!
//! For `Z` with negative mean and some positive support, the probability that
//! `Σ_{t=1}^n δ^t Z_t` ever reaches `c` is at most `exp(-r*·c)`, where `r*` is
//! the positive root of `E[exp(rZ)] = 1`. This module finds `r*` and checks
//! the bound by Monte Carlo.

use crate::rng;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Replications below this count are refused by [`mc_tail_probability`].
pub const MIN_TAIL_REPS: usize = 1000;
/// Post-horizon reachable mass must stay below this fraction of `max(c, 1)`.
pub const TRUNCATION_FRACTION: f64 = 1e-6;
const PROB_SUM_TOL: f64 = 1e-12;
const GAMMA_TOL: f64 = 1e-12;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ConcentrationError {
    #[error("invalid distribution: {0}")]
    InvalidDist(String),
    #[error("mean must be negative, got {0}")]
    NonNegativeMean(f64),
    #[error("distribution has no positive support value")]
    NoPositiveSupport,
    #[error("delta must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("threshold must be finite and nonnegative, got {0}")]
    BadThreshold(f64),
    #[error("need at least {min} replications, got {found}")]
    TooFewReps { min: usize, found: usize },
    #[error("horizon {given} too short; truncation needs at least {required}")]
    HorizonTooShort { given: usize, required: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
}

/// A finitely supported real distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Atom>", into = "Vec<Atom>")]
pub struct FiniteDist {
    atoms: Vec<Atom>,
}

impl TryFrom<Vec<Atom>> for FiniteDist {
    type Error = ConcentrationError;

    fn try_from(atoms: Vec<Atom>) -> Result<Self, Self::Error> {
        Self::new(atoms.into_iter().map(|a| (a.value, a.prob)).collect())
    }
}

impl From<FiniteDist> for Vec<Atom> {
    fn from(d: FiniteDist) -> Self {
        d.atoms
    }
}

impl FiniteDist {
    /// Validates positive probabilities summing to one and distinct finite
    /// values.
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self, ConcentrationError> {
        let invalid = |m: &str| Err(ConcentrationError::InvalidDist(m.to_string()));
        if pairs.is_empty() {
            return invalid("empty support");
        }
        if pairs
            .iter()
            .any(|&(v, p)| !v.is_finite() || !p.is_finite() || p <= 0.0)
        {
            return invalid("values must be finite and probabilities positive");
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return invalid(&format!("probabilities sum to {total}"));
        }
        for (i, a) in pairs.iter().enumerate() {
            if pairs[..i].iter().any(|b| b.0 == a.0) {
                return invalid(&format!("duplicate value {}", a.0));
            }
        }
        Ok(Self {
            atoms: pairs
                .into_iter()
                .map(|(value, prob)| Atom { value, prob })
                .collect(),
        })
    }

    /// Build from possibly repeated values: values within `merge_tol` are
    /// merged, zero-probability atoms dropped, and probabilities renormalised.
    pub fn merged(pairs: &[(f64, f64)], merge_tol: f64) -> Result<Self, ConcentrationError> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for &(v, p) in pairs {
            if p <= 0.0 {
                continue;
            }
            match out.iter_mut().find(|(w, _)| (w - v).abs() <= merge_tol) {
                Some(slot) => slot.1 += p,
                None => out.push((v, p)),
            }
        }
        let total: f64 = out.iter().map(|p| p.1).sum();
        if total > 0.0 {
            for slot in &mut out {
                slot.1 /= total;
            }
        }
        Self::new(out)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.value * a.prob).sum()
    }

    pub fn max_value(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.value)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `E[exp(rZ)] - 1`, computed without cancellation near `r = 0`.
    pub fn mgf_minus_one(&self, r: f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.prob * (r * a.value).exp_m1())
            .sum()
    }

    /// Scale every value by `k`.
    pub fn scaled(&self, k: f64) -> Result<Self, ConcentrationError> {
        Self::new(self.atoms.iter().map(|a| (a.value * k, a.prob)).collect())
    }

    /// Draw one value using a uniform draw from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for a in &self.atoms {
            acc += a.prob;
            if u < acc {
                return a.value;
            }
        }
        self.atoms[self.atoms.len() - 1].value
    }
}

/// The positive root of `E[exp(rZ)] = 1`.
pub fn r_star(dist: &FiniteDist) -> Result<f64, ConcentrationError> {
    let mean = dist.mean();
    if mean >= 0.0 {
        return Err(ConcentrationError::NonNegativeMean(mean));
    }
    if dist.max_value() <= 0.0 {
        return Err(ConcentrationError::NoPositiveSupport);
    }
    // γ is convex with γ(0) = 0 and γ'(0) < 0, so it is negative on (0, r*).
    let mut hi = 1.0;
    while dist.mgf_minus_one(hi) <= 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if dist.mgf_minus_one(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = if dist.mgf_minus_one(hi).abs() < dist.mgf_minus_one(lo).abs() {
        hi
    } else {
        lo
    };
    debug_assert!(dist.mgf_minus_one(r).abs() <= GAMMA_TOL * (1.0 + r));
    Ok(r)
}

/// Shortest horizon after which no path can move the discounted sum by more
/// than the truncation allowance.
pub fn min_horizon(dist: &FiniteDist, delta: f64, c: f64) -> Result<usize, ConcentrationError> {
    check_delta(delta)?;
    let zmax = dist.max_value().max(0.0);
    if zmax == 0.0 {
        return Ok(1);
    }
    let allowance = TRUNCATION_FRACTION * c.max(1.0);
    // δ^{H+1}/(1-δ)·zmax < allowance
    let h = ((allowance * (1.0 - delta) / zmax).ln() / delta.ln() - 1.0).ceil();
    Ok(h.max(1.0) as usize)
}

fn check_delta(delta: f64) -> Result<(), ConcentrationError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ConcentrationError::BadDelta(delta));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub r_star: f64,
    pub c: f64,
    pub delta: f64,
    pub horizon: usize,
    pub analytic_bound: f64,
    pub empirical: f64,
    pub reps: usize,
    pub std_error: f64,
}

impl TailReport {
    /// Empirical frequency within three standard errors of the bound.
    pub fn within_bound(&self) -> bool {
        self.empirical <= self.analytic_bound + 3.0 * self.std_error
    }
}

/// Does one path's discounted sum reach `c` within `horizon` periods?
fn path_reaches<R: Rng>(
    dist: &FiniteDist,
    delta: f64,
    c: f64,
    horizon: usize,
    rng: &mut R,
) -> bool {
    let zmax = dist.max_value().max(0.0);
    let tail_factor = delta / (1.0 - delta) * zmax;
    let mut sum = 0.0;
    let mut weight = 1.0;
    for _ in 0..horizon {
        weight *= delta;
        sum += weight * dist.sample(rng);
        if sum >= c {
            return true;
        }
        // the most the remaining periods could add is δ^{n+1}/(1-δ)·max Z
        if sum + weight * tail_factor < c {
            return false;
        }
    }
    false
}

/// Monte Carlo estimate of `Pr[sup_n Σ_{t=1}^n δ^t Z_t ≥ c]` next to the
/// analytic bound. The horizon defaults to [`min_horizon`].
pub fn mc_tail_probability(
    dist: &FiniteDist,
    delta: f64,
    c: f64,
    horizon: Option<usize>,
    reps: usize,
    seed: u64,
) -> Result<TailReport, ConcentrationError> {
    check_delta(delta)?;
    if !c.is_finite() || c < 0.0 {
        return Err(ConcentrationError::BadThreshold(c));
    }
    if reps < MIN_TAIL_REPS {
        return Err(ConcentrationError::TooFewReps {
            min: MIN_TAIL_REPS,
            found: reps,
        });
    }
    let r = r_star(dist)?;
    let required = min_horizon(dist, delta, c)?;
    let horizon = horizon.unwrap_or(required);
    if horizon < required {
        return Err(ConcentrationError::HorizonTooShort {
            given: horizon,
            required,
        });
    }
    let hits: usize = (0..reps as u64)
        .into_par_iter()
        .map(|i| path_reaches(dist, delta, c, horizon, &mut rng::stream(seed, i)) as usize)
        .sum();
    let p = hits as f64 / reps as f64;
    Ok(TailReport {
        r_star: r,
        c,
        delta,
        horizon,
        analytic_bound: (-r * c).exp(),
        empirical: p,
        reps,
        std_error: (p * (1.0 - p) / reps as f64).sqrt(),
    })
}
