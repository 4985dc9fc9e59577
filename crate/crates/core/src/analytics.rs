//! Potential-outcome schedules and the closed-form Neyman analytics.
//!
//! All variances here are *normalized*, i.e. multiplied by the horizon `T`,
//! which keeps them `O(1)` as the population grows.

use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, Error, Result};

/// The fixed table of potential outcomes `(y_t(1), y_t(0))` for `t = 1..T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSchedule {
    y1: Vec<f64>,
    y0: Vec<f64>,
}

impl OutcomeSchedule {
    pub fn new(y1: Vec<f64>, y0: Vec<f64>) -> Result<Self> {
        if y1.len() != y0.len() {
            return Err(Error::LengthMismatch {
                expected: y1.len(),
                found: y0.len(),
            });
        }
        if y1.is_empty() {
            return Err(Error::EmptySchedule);
        }
        for (what, arm) in [("y1", &y1), ("y0", &y0)] {
            if let Some(index) = arm.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what, index });
            }
        }
        Ok(Self { y1, y0 })
    }

    /// Builds a schedule from `(y1, y0)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let (y1, y0) = pairs.iter().copied().unzip();
        Self::new(y1, y0)
    }

    pub fn horizon(&self) -> usize {
        self.y1.len()
    }

    pub fn treated(&self) -> &[f64] {
        &self.y1
    }

    pub fn control(&self) -> &[f64] {
        &self.y0
    }

    /// Outcome revealed when unit `t` (0-based) receives assignment `treated`.
    pub fn observe(&self, t: usize, treated: bool) -> f64 {
        if treated {
            self.y1[t]
        } else {
            self.y0[t]
        }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.y1.iter().copied().zip(self.y0.iter().copied())
    }

    /// Individual effects `y_t(1) - y_t(0)`.
    pub fn effects(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs().map(|(a, b)| a - b)
    }

    /// Average treatment effect.
    pub fn ate(&self) -> f64 {
        self.effects().sum::<f64>() / self.horizon() as f64
    }

    /// The first `horizon` units.
    pub fn truncate(&self, horizon: usize) -> Result<Self> {
        if horizon > self.horizon() {
            return Err(Error::HorizonExceedsData {
                horizon,
                available: self.horizon(),
            });
        }
        Self::new(self.y1[..horizon].to_vec(), self.y0[..horizon].to_vec())
    }

    pub fn into_arms(self) -> (Vec<f64>, Vec<f64>) {
        (self.y1, self.y0)
    }
}

/// Finite-population second moments of a schedule.
///
/// `rho` is the cosine similarity of the two outcome vectors; it is `None`
/// when either vector is identically zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteStats {
    pub horizon: usize,
    pub s1: f64,
    pub s0: f64,
    pub rho: Option<f64>,
    pub tau: f64,
}

impl FiniteStats {
    /// `(1/T) Σ y_t(1) y_t(0)`, well defined even when `rho` is not.
    pub fn cross_moment(&self) -> f64 {
        self.rho.map_or(0.0, |rho| rho * self.s1 * self.s0)
    }

    fn check_arms(&self) -> Result<()> {
        if self.s1 > 0.0 && self.s0 > 0.0 {
            Ok(())
        } else {
            Err(Error::DegenerateArm)
        }
    }
}

pub fn finite_stats(outcomes: &OutcomeSchedule) -> FiniteStats {
    let n = outcomes.horizon() as f64;
    let (mut sq1, mut sq0, mut cross, mut effect) = (0.0, 0.0, 0.0, 0.0);
    for (a, b) in outcomes.pairs() {
        sq1 += a * a;
        sq0 += b * b;
        cross += a * b;
        effect += a - b;
    }
    let s1 = (sq1 / n).sqrt();
    let s0 = (sq0 / n).sqrt();
    let rho = (s1 > 0.0 && s0 > 0.0).then(|| (cross / n / (s1 * s0)).clamp(-1.0, 1.0));
    FiniteStats {
        horizon: outcomes.horizon(),
        s1,
        s0,
        rho,
        tau: effect / n,
    }
}

/// Neyman probability together with the normalized Neyman variance and the
/// estimable variance bound `4 S(1) S(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeymanSummary {
    pub p_star: f64,
    pub normalized_neyman_variance: f64,
    pub normalized_variance_bound: f64,
}

pub fn neyman_summary(stats: &FiniteStats) -> Result<NeymanSummary> {
    stats.check_arms()?;
    let product = stats.s1 * stats.s0;
    Ok(NeymanSummary {
        p_star: neyman_probability(stats.s1, stats.s0),
        normalized_neyman_variance: 2.0 * (product + stats.cross_moment()),
        normalized_variance_bound: 4.0 * product,
    })
}

/// `(1 + S(0)/S(1))^{-1}`, written as `S(1) / (S(1) + S(0))`.
pub(crate) fn neyman_probability(s1: f64, s0: f64) -> f64 {
    s1 / (s1 + s0)
}

/// Normalized variance `T·V_p` of the Horvitz–Thompson estimator under the
/// Bernoulli design with constant probability `p`.
pub fn bernoulli_variance(stats: &FiniteStats, p: f64) -> Result<f64> {
    check_open_unit(p)?;
    let s1sq = stats.s1 * stats.s1;
    let s0sq = stats.s0 * stats.s0;
    Ok(s1sq * (1.0 / p - 1.0) + s0sq * (1.0 / (1.0 - p) - 1.0) + 2.0 * stats.cross_moment())
}

/// `V_N / V_p`; equals one at the Neyman probability.
pub fn relative_efficiency(stats: &FiniteStats, p: f64) -> Result<f64> {
    let neyman = neyman_summary(stats)?;
    let bernoulli = bernoulli_variance(stats, p)?;
    Ok(neyman.normalized_neyman_variance / bernoulli)
}

/// Per-round cost `f_t(p) = y_t(1)^2 / p + y_t(0)^2 / (1 - p)`.
pub fn cost(y1: f64, y0: f64, p: f64) -> Result<f64> {
    check_open_unit(p)?;
    Ok(cost_unchecked(y1, y0, p))
}

#[inline]
pub(crate) fn cost_unchecked(y1: f64, y0: f64, p: f64) -> f64 {
    y1 * y1 / p + y0 * y0 / (1.0 - p)
}

/// `min_p Σ_t f_t(p) = T (S(1) + S(0))^2`.
///
/// With a zero arm the minimum is not attained inside `(0, 1)`; the value is
/// then the infimum, which is what regret is measured against.
pub fn regret_benchmark(stats: &FiniteStats) -> f64 {
    let s = stats.s1 + stats.s0;
    stats.horizon as f64 * s * s
}

/// Neyman regret `Σ f_t(P_t) - min_p Σ f_t(p)` of a realised probability
/// sequence. Reported signed, without clamping.
pub fn neyman_regret(outcomes: &OutcomeSchedule, probs: &[f64]) -> Result<f64> {
    if probs.len() != outcomes.horizon() {
        return Err(Error::LengthMismatch {
            expected: outcomes.horizon(),
            found: probs.len(),
        });
    }
    let mut total = 0.0;
    for ((a, b), &p) in outcomes.pairs().zip(probs) {
        total += cost(a, b, p)?;
    }
    Ok(total - regret_benchmark(&finite_stats(outcomes)))
}

/// Neyman ratio `κ = (V - V_N) / V_N`.
pub fn neyman_ratio(
    adaptive_normalized_variance: f64,
    neyman_normalized_variance: f64,
) -> Result<f64> {
    if neyman_normalized_variance == 0.0 || !neyman_normalized_variance.is_finite() {
        return Err(Error::invalid(
            "neyman_normalized_variance",
            "must be finite and nonzero",
        ));
    }
    Ok((adaptive_normalized_variance - neyman_normalized_variance) / neyman_normalized_variance)
}

/// Known bounds `c <= C` on the second moments of the outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentBounds {
    lower: f64,
    upper: f64,
}

impl MomentBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower > 0.0 && lower <= 1.0) {
            return Err(Error::invalid("c", format!("need 0 < c <= 1, got {lower}")));
        }
        if !(upper >= lower && upper.is_finite()) {
            return Err(Error::invalid(
                "C",
                format!("need finite C >= c, got {upper}"),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// `a = 1 + C / c`.
    pub fn a(&self) -> f64 {
        1.0 + self.upper / self.lower
    }
}
