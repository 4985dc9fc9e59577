//! Seeded Monte Carlo replications of a design on a fixed schedule.
//!
//! Replication `r` draws its assignments from [`Stream::new(seed, r)`], so
//! its result depends on nothing but `(seed, r)`. Replications run on a
//! rayon pool and are reduced in index order, which makes summaries
//! bit-identical for any thread count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{
    bernoulli_variance, finite_stats, neyman_regret, neyman_summary, OutcomeSchedule,
};
use crate::designs::{Design, Policy, PolicySpec, ResolvedDesign};
use crate::error::{Error, Result};
use crate::estimators::{EffectEstimate, IntervalEstimate, IntervalKind, Trace};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub replications: usize,
    pub seed: u64,
    /// Miscoverage levels `α` at which both interval kinds are evaluated.
    pub coverage_levels: Vec<f64>,
    /// Worker threads; `None` uses the global rayon pool.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl SimConfig {
    pub fn new(replications: usize, seed: u64) -> Self {
        Self {
            replications,
            seed,
            coverage_levels: vec![0.05, 0.1],
            threads: None,
        }
    }

    pub fn with_levels(mut self, levels: Vec<f64>) -> Self {
        self.coverage_levels = levels;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::invalid("replications", "must be at least 1"));
        }
        if let Some(&bad) = self
            .coverage_levels
            .iter()
            .find(|&&l| !(l > 0.0 && l < 1.0))
        {
            return Err(Error::InvalidLevel(bad));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads", "must be at least 1"));
        }
        Ok(())
    }

    fn install<T: Send>(&self, job: impl FnOnce() -> T + Send) -> Result<T> {
        match self.threads {
            None => Ok(job()),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map(|pool| pool.install(job))
                .map_err(|e| Error::invalid("threads", e.to_string())),
        }
    }
}

/// Runs one experiment: query `P_t`, draw `Z_t ~ Bernoulli(P_t)`, reveal
/// `Y_t`, feed it back.
pub fn run_experiment<D: Design>(
    outcomes: &OutcomeSchedule,
    policy: &mut D,
    stream: &mut Stream,
) -> Result<Trace> {
    let horizon = outcomes.horizon();
    let mut trace = Trace::with_capacity(horizon);
    for t in 0..horizon {
        let p = policy.next_prob();
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::PositivityViolated { round: t + 1, p });
        }
        let z = stream.bernoulli(p);
        let y = outcomes.observe(t, z);
        policy.observe(z, y);
        trace.push(p, z, y);
    }
    Ok(trace)
}

/// Everything retained from one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: u64,
    pub estimate: EffectEstimate,
    pub regret: f64,
    /// One interval per `(kind, level)`, kinds outermost.
    pub intervals: Vec<IntervalEstimate>,
}

/// Replication `index` of `prototype` on `outcomes`.
pub fn run_replication(
    outcomes: &OutcomeSchedule,
    prototype: &Policy,
    seed: u64,
    index: u64,
    levels: &[f64],
) -> Result<Replication> {
    let mut policy = prototype.clone();
    let mut stream = Stream::new(seed, index);
    let trace = run_experiment(outcomes, &mut policy, &mut stream)?;
    let estimate = EffectEstimate::from_trace(&trace);
    let horizon = trace.horizon();
    let mut intervals = Vec::with_capacity(2 * levels.len());
    for kind in IntervalKind::ALL {
        for &level in levels {
            intervals.push(estimate.interval(kind, horizon, level)?);
        }
    }
    Ok(Replication {
        index,
        estimate,
        regret: neyman_regret(outcomes, trace.probs())?,
        intervals,
    })
}

/// All replications, in index order.
pub fn replications(
    outcomes: &OutcomeSchedule,
    spec: &PolicySpec,
    config: &SimConfig,
) -> Result<Vec<Replication>> {
    config.validate()?;
    let prototype = spec.build(outcomes)?;
    replications_of(outcomes, &prototype, config)
}

fn replications_of(
    outcomes: &OutcomeSchedule,
    prototype: &Policy,
    config: &SimConfig,
) -> Result<Vec<Replication>> {
    config.install(|| {
        (0..config.replications as u64)
            .into_par_iter()
            .map(|r| run_replication(outcomes, prototype, config.seed, r, &config.coverage_levels))
            .collect::<Result<Vec<_>>>()
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub kind: IntervalKind,
    pub level: f64,
    pub coverage: f64,
    pub mean_width: f64,
    pub conjectural: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub design: String,
    pub resolved: ResolvedDesign,
    pub horizon: usize,
    pub rep_count: usize,
    pub true_tau: f64,
    pub mean_tau_hat: f64,
    pub empirical_var_tau_hat: f64,
    /// `T · Var(τ̂)` over replications.
    pub normalized_var_tau_hat: f64,
    /// Set when fewer than two replications make the variance meaningless.
    pub variance_degenerate: bool,
    pub mean_regret: f64,
    pub mean_t_vb_hat: f64,
    /// Exact `T·V_N`; absent when an arm is identically zero.
    pub normalized_neyman_variance: Option<f64>,
    /// Exact `T·VB = 4 S(1) S(0)`.
    pub normalized_variance_bound: f64,
    /// Exact `T·V_{1/2}` of the uniform Bernoulli design.
    pub normalized_bernoulli_variance: f64,
    pub intervals: Vec<CoverageSummary>,
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sum::<f64>() / n
}

/// Aggregates replications in the order given.
pub fn summarize(
    outcomes: &OutcomeSchedule,
    spec: &PolicySpec,
    resolved: ResolvedDesign,
    reps: &[Replication],
    levels: &[f64],
) -> SimSummary {
    let stats = finite_stats(outcomes);
    let horizon = outcomes.horizon();
    let true_tau = stats.tau;
    let count = reps.len();
    let mean_tau_hat = mean(reps.iter().map(|r| r.estimate.tau_hat));
    let empirical_var_tau_hat = if count > 1 {
        reps.iter()
            .map(|r| (r.estimate.tau_hat - mean_tau_hat).powi(2))
            .sum::<f64>()
            / (count - 1) as f64
    } else {
        0.0
    };
    let mut intervals = Vec::with_capacity(2 * levels.len());
    let mut slot = 0;
    for kind in IntervalKind::ALL {
        for &level in levels {
            let covered = reps
                .iter()
                .filter(|r| r.intervals[slot].contains(true_tau))
                .count();
            intervals.push(CoverageSummary {
                kind,
                level,
                coverage: covered as f64 / count as f64,
                mean_width: mean(reps.iter().map(|r| r.intervals[slot].width())),
                conjectural: kind == IntervalKind::Wald,
            });
            slot += 1;
        }
    }
    SimSummary {
        design: spec.to_string(),
        resolved,
        horizon,
        rep_count: count,
        true_tau,
        mean_tau_hat,
        empirical_var_tau_hat,
        normalized_var_tau_hat: horizon as f64 * empirical_var_tau_hat,
        variance_degenerate: count < 2,
        mean_regret: mean(reps.iter().map(|r| r.regret)),
        mean_t_vb_hat: mean(reps.iter().map(|r| r.estimate.t_vb_hat)),
        normalized_neyman_variance: neyman_summary(&stats)
            .ok()
            .map(|n| n.normalized_neyman_variance),
        normalized_variance_bound: 4.0 * stats.s1 * stats.s0,
        normalized_bernoulli_variance: bernoulli_variance(&stats, 0.5).expect("1/2 is interior"),
        intervals,
    }
}

pub fn monte_carlo(
    outcomes: &OutcomeSchedule,
    spec: &PolicySpec,
    config: &SimConfig,
) -> Result<SimSummary> {
    config.validate()?;
    let prototype = spec.build(outcomes)?;
    let reps = replications_of(outcomes, &prototype, config)?;
    Ok(summarize(
        outcomes,
        spec,
        prototype.resolved(),
        &reps,
        &config.coverage_levels,
    ))
}

/// One point of a variance curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub horizon: usize,
    pub design: String,
    pub normalized_empirical_variance: f64,
    pub normalized_neyman_variance: f64,
    pub normalized_bernoulli_variance: f64,
    pub mean_regret: f64,
    pub reps: usize,
}

/// For each horizon `T'` in `t_grid`, restricts the population to the first
/// `T'` units and simulates every design on it.
pub fn variance_curve(
    outcomes: &OutcomeSchedule,
    specs: &[PolicySpec],
    t_grid: &[usize],
    config: &SimConfig,
) -> Result<Vec<CurveRow>> {
    config.validate()?;
    let mut rows = Vec::with_capacity(specs.len() * t_grid.len());
    for &horizon in t_grid {
        if horizon == 0 {
            return Err(Error::EmptySchedule);
        }
        let prefix = outcomes.truncate(horizon)?;
        let stats = finite_stats(&prefix);
        let neyman = neyman_summary(&stats)?.normalized_neyman_variance;
        let bernoulli = bernoulli_variance(&stats, 0.5)?;
        for spec in specs {
            let summary = monte_carlo(&prefix, spec, config)?;
            rows.push(CurveRow {
                horizon,
                design: spec.to_string(),
                normalized_empirical_variance: summary.normalized_var_tau_hat,
                normalized_neyman_variance: neyman,
                normalized_bernoulli_variance: bernoulli,
                mean_regret: summary.mean_regret,
                reps: summary.rep_count,
            });
        }
    }
    Ok(rows)
}

/// Writes curve rows as CSV with a header line.
pub fn write_curve_csv<W: Write>(rows: &[CurveRow], out: W) -> std::result::Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
