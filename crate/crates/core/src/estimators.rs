//! Design-based inference from one realised experiment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// One realised experiment: the probability each unit was assigned with, the
/// assignment drawn, and the outcome revealed.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    p: Vec<f64>,
    z: Vec<bool>,
    y: Vec<f64>,
}

impl Trace {
    pub fn new(p: Vec<f64>, z: Vec<bool>, y: Vec<f64>) -> Result<Self> {
        for len in [z.len(), y.len()] {
            if len != p.len() {
                return Err(Error::LengthMismatch {
                    expected: p.len(),
                    found: len,
                });
            }
        }
        if p.is_empty() {
            return Err(Error::EmptySchedule);
        }
        if let Some(round) = p.iter().position(|&q| !(q > 0.0 && q < 1.0)) {
            return Err(Error::PositivityViolated {
                round: round + 1,
                p: p[round],
            });
        }
        if let Some(index) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "y", index });
        }
        Ok(Self { p, z, y })
    }

    pub(crate) fn with_capacity(n: usize) -> Self {
        Self {
            p: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
        }
    }

    /// Caller guarantees `p` is interior and `y` finite.
    pub(crate) fn push(&mut self, p: f64, z: bool, y: f64) {
        self.p.push(p);
        self.z.push(z);
        self.y.push(y);
    }

    pub fn horizon(&self) -> usize {
        self.p.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn assignments(&self) -> &[bool] {
        &self.z
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.y
    }

    pub fn rounds(&self) -> impl Iterator<Item = (f64, bool, f64)> + '_ {
        self.p
            .iter()
            .zip(&self.z)
            .zip(&self.y)
            .map(|((&p, &z), &y)| (p, z, y))
    }
}

/// Adaptive Horvitz–Thompson estimate of the average treatment effect.
pub fn adaptive_ht(trace: &Trace) -> f64 {
    ht_sum(trace.rounds()) / trace.horizon() as f64
}

/// `Σ Y_t (1{Z_t=1}/P_t - 1{Z_t=0}/(1-P_t))`.
pub(crate) fn ht_sum(rounds: impl Iterator<Item = (f64, bool, f64)>) -> f64 {
    rounds
        .map(|(p, z, y)| if z { y / p } else { -y / (1.0 - p) })
        .sum()
}

/// Point estimate plus the plug-in estimate of the variance bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub tau_hat: f64,
    /// Unbiased estimate of `S(1)^2`.
    pub a1_hat: f64,
    /// Unbiased estimate of `S(0)^2`.
    pub a0_hat: f64,
    /// `T · VB̂ = 4 √(Â1 Â0)`.
    pub t_vb_hat: f64,
}

/// `(Â1, Â0, T·VB̂)`. Zero when one arm was never sampled.
pub fn variance_bound_estimate(trace: &Trace) -> (f64, f64, f64) {
    let (mut a1, mut a0) = (0.0, 0.0);
    for (p, z, y) in trace.rounds() {
        if z {
            a1 += y * y / p;
        } else {
            a0 += y * y / (1.0 - p);
        }
    }
    let n = trace.horizon() as f64;
    let (a1, a0) = (a1 / n, a0 / n);
    (a1, a0, 4.0 * (a1 * a0).sqrt())
}

impl EffectEstimate {
    pub fn from_trace(trace: &Trace) -> Self {
        let (a1_hat, a0_hat, t_vb_hat) = variance_bound_estimate(trace);
        Self {
            tau_hat: adaptive_ht(trace),
            a1_hat,
            a0_hat,
            t_vb_hat,
        }
    }

    pub fn chebyshev(&self, horizon: usize, level: f64) -> Result<IntervalEstimate> {
        chebyshev_interval(self.tau_hat, self.t_vb_hat, horizon, level)
    }

    pub fn wald(&self, horizon: usize, level: f64) -> Result<IntervalEstimate> {
        wald_interval(self.tau_hat, self.t_vb_hat, horizon, level)
    }

    pub fn interval(
        &self,
        kind: IntervalKind,
        horizon: usize,
        level: f64,
    ) -> Result<IntervalEstimate> {
        match kind {
            IntervalKind::Chebyshev => self.chebyshev(horizon, level),
            IntervalKind::Wald => self.wald(horizon, level),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalKind {
    Chebyshev,
    /// Normal-quantile interval; its validity rests on an unproven CLT.
    Wald,
}

impl IntervalKind {
    pub const ALL: [IntervalKind; 2] = [IntervalKind::Chebyshev, IntervalKind::Wald];
}

/// `τ̂ ± half_width`, where `level` is the miscoverage `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub kind: IntervalKind,
    pub conjectural: bool,
}

impl IntervalEstimate {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }
}

fn centered(tau_hat: f64, half_width: f64, level: f64, kind: IntervalKind) -> IntervalEstimate {
    IntervalEstimate {
        lo: tau_hat - half_width,
        hi: tau_hat + half_width,
        level,
        kind,
        conjectural: kind == IntervalKind::Wald,
    }
}

fn vb_sqrt(t_vb_hat: f64, horizon: usize) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::EmptySchedule);
    }
    if t_vb_hat.is_nan() || t_vb_hat < 0.0 {
        return Err(Error::invalid(
            "t_vb_hat",
            format!("must be >= 0, got {t_vb_hat}"),
        ));
    }
    Ok((t_vb_hat / horizon as f64).sqrt())
}

/// `τ̂ ± α^{-1/2} √VB̂` for `α ∈ (0, 1]`.
pub fn chebyshev_interval(
    tau_hat: f64,
    t_vb_hat: f64,
    horizon: usize,
    level: f64,
) -> Result<IntervalEstimate> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let sd = vb_sqrt(t_vb_hat, horizon)?;
    Ok(centered(
        tau_hat,
        sd / level.sqrt(),
        level,
        IntervalKind::Chebyshev,
    ))
}

/// `τ̂ ± Φ^{-1}(1 - α/2) √VB̂` for `α ∈ (0, 1)`. Flagged conjectural.
pub fn wald_interval(
    tau_hat: f64,
    t_vb_hat: f64,
    horizon: usize,
    level: f64,
) -> Result<IntervalEstimate> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let sd = vb_sqrt(t_vb_hat, horizon)?;
    let z = normal::quantile(1.0 - level / 2.0);
    Ok(centered(tau_hat, z * sd, level, IntervalKind::Wald))
}
