//! Exact evaluation of a policy on a short schedule.
//!
//! Walks the full binary assignment tree depth-first. At every node the
//! policy is asked for `P_t` given the history so far, both children are
//! visited with weights `P_t` and `1 - P_t`, and leaves see the complete
//! path. Policies are history dependent, so nothing is memoised.

use serde::{Deserialize, Serialize};

use crate::analytics::{
    cost_unchecked, finite_stats, neyman_summary, regret_benchmark, OutcomeSchedule,
};
use crate::designs::Design;
use crate::error::{Error, Result};
use crate::estimators::ht_sum;

/// Largest horizon accepted by the enumerator (`2^20` leaves).
pub const ENUMERATION_CAP: usize = 20;

/// One round along an assignment path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStep {
    pub p: f64,
    pub z: bool,
    pub y: f64,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Calls `visit(weight, path)` once for every one of the `2^T` complete
/// assignment paths, where `weight = Π P_t^{z_t} (1 - P_t)^{1 - z_t}`.
pub fn for_each_path<D, F>(outcomes: &OutcomeSchedule, policy: &D, mut visit: F) -> Result<()>
where
    D: Design + Clone,
    F: FnMut(f64, &[PathStep]),
{
    let horizon = outcomes.horizon();
    if horizon > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            horizon,
            cap: ENUMERATION_CAP,
        });
    }
    let mut history = Vec::with_capacity(horizon);
    descend(outcomes, policy.clone(), 1.0, &mut history, &mut visit)
}

fn descend<D, F>(
    outcomes: &OutcomeSchedule,
    state: D,
    weight: f64,
    history: &mut Vec<PathStep>,
    visit: &mut F,
) -> Result<()>
where
    D: Design + Clone,
    F: FnMut(f64, &[PathStep]),
{
    let t = history.len();
    if t == outcomes.horizon() {
        visit(weight, history);
        return Ok(());
    }
    let p = state.next_prob();
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::PositivityViolated { round: t + 1, p });
    }
    for (z, mut branch, w) in [(true, state.clone(), p), (false, state, 1.0 - p)] {
        let y = outcomes.observe(t, z);
        branch.observe(z, y);
        history.push(PathStep { p, z, y });
        descend(outcomes, branch, weight * w, history, visit)?;
        history.pop();
    }
    Ok(())
}

/// Exact moments of a policy's estimator and regret.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactResults {
    pub mean_tau_hat: f64,
    pub var_tau_hat: f64,
    pub expected_regret: f64,
    /// `E[1 / P_t]` for `t = 1..T`.
    pub inv_p_means: Vec<f64>,
    /// `E[1 / (1 - P_t)]` for `t = 1..T`.
    pub inv_q_means: Vec<f64>,
    pub path_count: u64,
    pub total_probability: f64,
}

impl ExactResults {
    /// `T · Var(τ̂)`.
    pub fn normalized_variance(&self) -> f64 {
        self.inv_p_means.len() as f64 * self.var_tau_hat
    }
}

pub fn enumerate_exact<D: Design + Clone>(
    outcomes: &OutcomeSchedule,
    policy: &D,
) -> Result<ExactResults> {
    let horizon = outcomes.horizon();
    let n = horizon as f64;
    let tau = outcomes.ate();
    let benchmark = regret_benchmark(&finite_stats(outcomes));

    let mut total = CompensatedSum::default();
    let mut first = CompensatedSum::default();
    let mut centered_sq = CompensatedSum::default();
    let mut regret = CompensatedSum::default();
    let mut inv_p = vec![CompensatedSum::default(); horizon];
    let mut inv_q = vec![CompensatedSum::default(); horizon];
    let mut paths = 0u64;

    for_each_path(outcomes, policy, |w, path| {
        paths += 1;
        total.add(w);
        let tau_hat = ht_sum(path.iter().map(|s| (s.p, s.z, s.y))) / n;
        first.add(w * tau_hat);
        let dev = tau_hat - tau;
        centered_sq.add(w * dev * dev);
        let mut cost = 0.0;
        for (t, (step, (y1, y0))) in path.iter().zip(outcomes.pairs()).enumerate() {
            inv_p[t].add(w / step.p);
            inv_q[t].add(w / (1.0 - step.p));
            cost += cost_unchecked(y1, y0, step.p);
        }
        regret.add(w * (cost - benchmark));
    })?;

    let mean_tau_hat = first.value();
    let bias = mean_tau_hat - tau;
    Ok(ExactResults {
        mean_tau_hat,
        // E[(τ̂ - τ)^2] - (E τ̂ - τ)^2
        var_tau_hat: centered_sq.value() - bias * bias,
        expected_regret: regret.value(),
        inv_p_means: inv_p.iter().map(CompensatedSum::value).collect(),
        inv_q_means: inv_q.iter().map(CompensatedSum::value).collect(),
        path_count: paths,
        total_probability: total.value(),
    })
}

/// Normalized variance assembled from the exact per-round inverse
/// probability moments:
/// `(1/T) Σ_t [y_t(1)^2 E[1/P_t] + y_t(0)^2 E[1/(1-P_t)]] - (1/T) Σ_t τ_t^2`.
pub fn variance_from_inverse_moments(outcomes: &OutcomeSchedule, exact: &ExactResults) -> f64 {
    let n = outcomes.horizon() as f64;
    let mut acc = CompensatedSum::default();
    for (((y1, y0), ip), iq) in outcomes
        .pairs()
        .zip(&exact.inv_p_means)
        .zip(&exact.inv_q_means)
    {
        let effect = y1 - y0;
        acc.add(y1 * y1 * ip + y0 * y0 * iq - effect * effect);
    }
    acc.value() / n
}

/// Both sides of `T·V - T·V_N = E[R_T] / T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretIdentity {
    pub lhs: f64,
    pub rhs: f64,
}

impl RegretIdentity {
    pub fn holds(&self, rel_tol: f64) -> bool {
        (self.lhs - self.rhs).abs() <= rel_tol * self.lhs.abs().max(1.0)
    }
}

pub fn regret_identity(outcomes: &OutcomeSchedule, exact: &ExactResults) -> Result<RegretIdentity> {
    let neyman = neyman_summary(&finite_stats(outcomes))?;
    let n = outcomes.horizon() as f64;
    Ok(RegretIdentity {
        lhs: n * exact.var_tau_hat - neyman.normalized_neyman_variance,
        rhs: exact.expected_regret / n,
    })
}

pub fn exact_regret_ratio_check<D: Design + Clone>(
    outcomes: &OutcomeSchedule,
    policy: &D,
) -> Result<RegretIdentity> {
    // fail fast on degenerate arms before paying for the enumeration
    neyman_summary(&finite_stats(outcomes))?;
    let exact = enumerate_exact(outcomes, policy)?;
    regret_identity(outcomes, &exact)
}
