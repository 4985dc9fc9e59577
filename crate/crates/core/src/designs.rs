//! Sequential treatment-probability policies.
//!
//! A policy is a deterministic state machine: [`Design::next_prob`] reports
//! the probability `P_t` for the upcoming round, the caller samples `Z_t`,
//! reveals `Y_t`, and hands both back through [`Design::observe`]. Identical
//! histories always give bit-identical probabilities, which is what lets the
//! [`oracle`](crate::oracle) enumerate assignment paths exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytics::{finite_stats, neyman_probability, MomentBounds, OutcomeSchedule};
use crate::error::{check_open_unit, Error, Result};

pub trait Design {
    /// Treatment probability for the next round, strictly inside `(0, 1)`.
    fn next_prob(&self) -> f64;

    /// Records the assignment and observed outcome of the current round.
    fn observe(&mut self, treated: bool, outcome: f64);
}

/// Step size and decay parameter of Clip-OGD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipOgdParams {
    pub eta: f64,
    pub alpha: f64,
}

/// `η = 1/√T`, `α = √(5 ln T)`.
pub fn clip_ogd_default_params(horizon: usize) -> Result<ClipOgdParams> {
    if horizon < 2 {
        return Err(Error::HorizonTooShort(horizon));
    }
    let t = horizon as f64;
    Ok(ClipOgdParams {
        eta: 1.0 / t.sqrt(),
        alpha: (5.0 * t.ln()).sqrt(),
    })
}

/// Step size `η = √(e^α / T^{1 + 5/α})` valid for any decay `α >= 2`.
pub fn clip_ogd_general_alpha_step(horizon: usize, alpha: f64) -> Result<f64> {
    if !alpha.is_finite() || alpha < 2.0 {
        return Err(Error::invalid(
            "alpha",
            format!("need alpha >= 2, got {alpha}"),
        ));
    }
    if horizon == 0 {
        return Err(Error::EmptySchedule);
    }
    let t = horizon as f64;
    // exp/ln form avoids overflow of e^α for large α
    Ok((0.5 * (alpha - (1.0 + 5.0 / alpha) * t.ln())).exp())
}

/// Step size when the outcome moment bounds `c <= C` are known:
/// `η = e^{(1 + C/c)/4} / (2√2 C²) · 1/√T`.
pub fn clip_ogd_moment_informed_step(horizon: usize, bounds: &MomentBounds) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::EmptySchedule);
    }
    let upper = bounds.upper();
    Ok((bounds.a() / 4.0).exp()
        / (2.0 * std::f64::consts::SQRT_2 * upper * upper)
        / (horizon as f64).sqrt())
}

/// Clip half-width `δ_t = t^{-1/α} / 2` for 1-based round `t`.
pub fn projection_parameter(round: usize, alpha: f64) -> f64 {
    0.5 * (round as f64).powf(-1.0 / alpha)
}

/// `Π_δ[x] = max(δ, min(x, 1 - δ))`.
pub fn project(x: f64, delta: f64) -> f64 {
    x.min(1.0 - delta).max(delta)
}

/// One-sample estimate of `f_t'(P_t)`:
/// `Y² (-1{Z=1}/P³ + 1{Z=0}/(1-P)³)`.
pub fn gradient_estimate(outcome: f64, treated: bool, p: f64) -> Result<f64> {
    check_open_unit(p)?;
    Ok(gradient_unchecked(outcome, treated, p))
}

#[inline]
fn gradient_unchecked(outcome: f64, treated: bool, p: f64) -> f64 {
    let ysq = outcome * outcome;
    if treated {
        -ysq / (p * p * p)
    } else {
        let q = 1.0 - p;
        ysq / (q * q * q)
    }
}

/// Projected online gradient descent on the Neyman costs with a shrinking
/// clip interval `[δ_t, 1 - δ_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipOgd {
    params: ClipOgdParams,
    round: usize,
    p_prev: f64,
    g_prev: f64,
}

impl ClipOgd {
    pub fn new(params: ClipOgdParams) -> Result<Self> {
        if !(params.eta > 0.0 && params.eta.is_finite()) {
            return Err(Error::invalid(
                "eta",
                format!("need eta > 0, got {}", params.eta),
            ));
        }
        if !(params.alpha > 0.0 && params.alpha.is_finite()) {
            return Err(Error::invalid(
                "alpha",
                format!("need alpha > 0, got {}", params.alpha),
            ));
        }
        Ok(Self {
            params,
            round: 1,
            p_prev: 0.5,
            g_prev: 0.0,
        })
    }

    pub fn params(&self) -> ClipOgdParams {
        self.params
    }

    /// 1-based index of the round `next_prob` applies to.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn delta(&self) -> f64 {
        projection_parameter(self.round, self.params.alpha)
    }
}

impl Design for ClipOgd {
    fn next_prob(&self) -> f64 {
        project(self.p_prev - self.params.eta * self.g_prev, self.delta())
    }

    fn observe(&mut self, treated: bool, outcome: f64) {
        let p = self.next_prob();
        self.g_prev = gradient_unchecked(outcome, treated, p);
        self.p_prev = p;
        self.round += 1;
    }
}

/// Constant-probability design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bernoulli {
    p: f64,
}

impl Bernoulli {
    pub fn new(p: f64) -> Result<Self> {
        check_open_unit(p)?;
        Ok(Self { p })
    }
}

impl Design for Bernoulli {
    fn next_prob(&self) -> f64 {
        self.p
    }

    fn observe(&mut self, _treated: bool, _outcome: f64) {}
}

/// The infeasible benchmark: Bernoulli at the true Neyman probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeymanOracle {
    p_star: f64,
}

impl NeymanOracle {
    pub fn new(outcomes: &OutcomeSchedule) -> Result<Self> {
        let stats = finite_stats(outcomes);
        if !(stats.s1 > 0.0 && stats.s0 > 0.0) {
            return Err(Error::DegenerateArm);
        }
        Ok(Self {
            p_star: neyman_probability(stats.s1, stats.s0),
        })
    }

    pub fn p_star(&self) -> f64 {
        self.p_star
    }
}

impl Design for NeymanOracle {
    fn next_prob(&self) -> f64 {
        self.p_star
    }

    fn observe(&mut self, _treated: bool, _outcome: f64) {}
}

/// Clip applied to the committed probability of Explore-then-Commit.
pub const ETC_MIN_PROB: f64 = 0.01;

/// Explore with `p = 1/2` for `T0` rounds, then commit to a plug-in estimate
/// of the exploration-phase Neyman probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ExploreThenCommit {
    explore_len: usize,
    round: usize,
    weighted_sq_treated: f64,
    weighted_sq_control: f64,
    committed: Option<f64>,
}

impl ExploreThenCommit {
    pub fn new(explore_len: usize) -> Result<Self> {
        if explore_len == 0 {
            return Err(Error::invalid("t0", "exploration length must be positive"));
        }
        Ok(Self {
            explore_len,
            round: 1,
            weighted_sq_treated: 0.0,
            weighted_sq_control: 0.0,
            committed: None,
        })
    }

    pub fn explore_len(&self) -> usize {
        self.explore_len
    }

    pub fn committed(&self) -> Option<f64> {
        self.committed
    }

    fn commit(&self) -> f64 {
        let n = self.explore_len as f64;
        let a1 = self.weighted_sq_treated / n;
        let a0 = self.weighted_sq_control / n;
        if a1 > 0.0 && a0 > 0.0 {
            (1.0 / (1.0 + (a0 / a1).sqrt())).clamp(ETC_MIN_PROB, 1.0 - ETC_MIN_PROB)
        } else {
            0.5
        }
    }
}

impl Design for ExploreThenCommit {
    fn next_prob(&self) -> f64 {
        if self.round <= self.explore_len {
            0.5
        } else {
            self.committed.unwrap_or(0.5)
        }
    }

    fn observe(&mut self, treated: bool, outcome: f64) {
        if self.round <= self.explore_len {
            // Horvitz–Thompson weight 1 / (1/2)
            let w = 2.0 * outcome * outcome;
            if treated {
                self.weighted_sq_treated += w;
            } else {
                self.weighted_sq_control += w;
            }
            if self.round == self.explore_len {
                self.committed = Some(self.commit());
            }
        }
        self.round += 1;
    }
}

/// A concrete policy, ready to run on one schedule.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Bernoulli(Bernoulli),
    ClipOgd(ClipOgd),
    ExploreThenCommit(ExploreThenCommit),
    NeymanOracle(NeymanOracle),
}

impl Design for Policy {
    fn next_prob(&self) -> f64 {
        match self {
            Policy::Bernoulli(d) => d.next_prob(),
            Policy::ClipOgd(d) => d.next_prob(),
            Policy::ExploreThenCommit(d) => d.next_prob(),
            Policy::NeymanOracle(d) => d.next_prob(),
        }
    }

    fn observe(&mut self, treated: bool, outcome: f64) {
        match self {
            Policy::Bernoulli(d) => d.observe(treated, outcome),
            Policy::ClipOgd(d) => d.observe(treated, outcome),
            Policy::ExploreThenCommit(d) => d.observe(treated, outcome),
            Policy::NeymanOracle(d) => d.observe(treated, outcome),
        }
    }
}

impl Policy {
    /// Parameters after resolving horizon-dependent defaults.
    pub fn resolved(&self) -> ResolvedDesign {
        match self {
            Policy::Bernoulli(d) => ResolvedDesign::Bernoulli { p: d.p },
            Policy::ClipOgd(d) => ResolvedDesign::ClipOgd {
                eta: d.params.eta,
                alpha: d.params.alpha,
            },
            Policy::ExploreThenCommit(d) => ResolvedDesign::Etc {
                t0: d.explore_len,
                min_prob: ETC_MIN_PROB,
            },
            Policy::NeymanOracle(d) => ResolvedDesign::NeymanOracle { p_star: d.p_star },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "kebab-case")]
pub enum ResolvedDesign {
    Bernoulli { p: f64 },
    ClipOgd { eta: f64, alpha: f64 },
    Etc { t0: usize, min_prob: f64 },
    NeymanOracle { p_star: f64 },
}

/// How Clip-OGD's step size is chosen when building for a horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `1/√T`, or the general-α rule when `α` is overridden.
    Default,
    Fixed(f64),
    /// `c / √T`.
    Scaled(f64),
    MomentInformed(MomentBounds),
}

/// Exploration length of Explore-then-Commit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExploreLen {
    Fixed(usize),
    /// `⌈T^{1/3}⌉`.
    CubeRoot,
}

impl ExploreLen {
    pub fn resolve(self, horizon: usize) -> usize {
        match self {
            ExploreLen::Fixed(n) => n,
            ExploreLen::CubeRoot => ceil_cbrt(horizon),
        }
    }
}

/// Smallest `n` with `n³ >= t`.
fn ceil_cbrt(t: usize) -> usize {
    let mut n = (t as f64).cbrt().round() as usize;
    while n.saturating_mul(n).saturating_mul(n) < t {
        n += 1;
    }
    while n > 1 && (n - 1) * (n - 1) * (n - 1) >= t {
        n -= 1;
    }
    n.max(1)
}

/// A horizon-independent policy description, as written on the command line:
///
/// ```text
/// bernoulli:<p>
/// clip-ogd
/// clip-ogd:eta=<v>,alpha=<v>      (either key may be omitted)
/// clip-ogd:scale=<c>              (η = c/√T)
/// clip-ogd:c=<c>,C=<C>            (moment-informed step)
/// etc:t0=<n>  |  etc:t0=cbrt
/// neyman-oracle
/// ```
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Bernoulli(f64),
    ClipOgd { step: StepRule, alpha: Option<f64> },
    Etc(ExploreLen),
    NeymanOracle,
}

impl PolicySpec {
    pub fn clip_ogd_default() -> Self {
        PolicySpec::ClipOgd {
            step: StepRule::Default,
            alpha: None,
        }
    }

    /// Resolves horizon- and data-dependent parameters for `outcomes`.
    pub fn build(&self, outcomes: &OutcomeSchedule) -> Result<Policy> {
        let horizon = outcomes.horizon();
        Ok(match *self {
            PolicySpec::Bernoulli(p) => Policy::Bernoulli(Bernoulli::new(p)?),
            PolicySpec::NeymanOracle => Policy::NeymanOracle(NeymanOracle::new(outcomes)?),
            PolicySpec::Etc(len) => {
                Policy::ExploreThenCommit(ExploreThenCommit::new(len.resolve(horizon))?)
            }
            PolicySpec::ClipOgd { step, alpha } => {
                let alpha = match alpha {
                    Some(a) => a,
                    None => clip_ogd_default_params(horizon)?.alpha,
                };
                let root_t = (horizon as f64).sqrt();
                let eta = match step {
                    StepRule::Fixed(eta) => eta,
                    StepRule::Scaled(c) => c / root_t,
                    StepRule::MomentInformed(bounds) => {
                        clip_ogd_moment_informed_step(horizon, &bounds)?
                    }
                    StepRule::Default if self.overrides_alpha() => {
                        clip_ogd_general_alpha_step(horizon, alpha)?
                    }
                    StepRule::Default => clip_ogd_default_params(horizon)?.eta,
                };
                Policy::ClipOgd(ClipOgd::new(ClipOgdParams { eta, alpha })?)
            }
        })
    }

    fn overrides_alpha(&self) -> bool {
        matches!(self, PolicySpec::ClipOgd { alpha: Some(_), .. })
    }
}

fn spec_err(spec: &str, reason: impl Into<String>) -> Error {
    Error::DesignSpec {
        spec: spec.to_string(),
        reason: reason.into(),
    }
}

fn parse_f64(spec: &str, key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| spec_err(spec, format!("`{key}` expects a number, got `{value}`")))
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spec = s.trim();
        let (name, args) = match spec.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (spec, None),
        };
        let pairs = |args: &str| -> Result<Vec<(String, String)>> {
            args.split(',')
                .map(|kv| {
                    kv.split_once('=')
                        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                        .ok_or_else(|| spec_err(spec, format!("expected key=value, got `{kv}`")))
                })
                .collect()
        };
        match (name, args) {
            ("bernoulli", Some(p)) => {
                let p = parse_f64(spec, "p", p.trim())?;
                if !(p > 0.0 && p < 1.0) {
                    return Err(spec_err(spec, "p must lie strictly inside (0, 1)"));
                }
                Ok(PolicySpec::Bernoulli(p))
            }
            ("bernoulli", None) => Err(spec_err(spec, "missing probability, e.g. bernoulli:0.5")),
            ("neyman-oracle", None) => Ok(PolicySpec::NeymanOracle),
            ("clip-ogd", None) => Ok(PolicySpec::clip_ogd_default()),
            ("clip-ogd", Some(args)) => {
                let (mut eta, mut scale, mut alpha, mut lower, mut upper) =
                    (None, None, None, None, None);
                for (k, v) in pairs(args)? {
                    let slot = match k.as_str() {
                        "eta" => &mut eta,
                        "scale" => &mut scale,
                        "alpha" => &mut alpha,
                        "c" => &mut lower,
                        "C" => &mut upper,
                        _ => return Err(spec_err(spec, format!("unknown clip-ogd key `{k}`"))),
                    };
                    if slot.replace(parse_f64(spec, &k, &v)?).is_some() {
                        return Err(spec_err(spec, format!("duplicate key `{k}`")));
                    }
                }
                let step = match (eta, scale, lower, upper) {
                    (None, None, None, None) => StepRule::Default,
                    (Some(e), None, None, None) => StepRule::Fixed(e),
                    (None, Some(c), None, None) => StepRule::Scaled(c),
                    (None, None, Some(c), Some(big_c)) => StepRule::MomentInformed(
                        MomentBounds::new(c, big_c).map_err(|e| spec_err(spec, e.to_string()))?,
                    ),
                    (None, None, _, _) => {
                        return Err(spec_err(spec, "moment bounds need both `c` and `C`"))
                    }
                    _ => return Err(spec_err(spec, "choose one step rule: eta, scale, or c/C")),
                };
                if let Some(a) = alpha {
                    if a.is_nan() || a <= 0.0 {
                        return Err(spec_err(spec, "alpha must be positive"));
                    }
                }
                if let StepRule::Fixed(e) | StepRule::Scaled(e) = step {
                    if e.is_nan() || e <= 0.0 {
                        return Err(spec_err(spec, "step size must be positive"));
                    }
                }
                Ok(PolicySpec::ClipOgd { step, alpha })
            }
            ("etc", Some(args)) => {
                let kv = pairs(args)?;
                match kv.as_slice() {
                    [(k, v)] if k == "t0" => {
                        if v == "cbrt" {
                            Ok(PolicySpec::Etc(ExploreLen::CubeRoot))
                        } else {
                            match v.parse::<usize>() {
                                Ok(n) if n > 0 => Ok(PolicySpec::Etc(ExploreLen::Fixed(n))),
                                _ => Err(spec_err(spec, "t0 must be a positive integer or `cbrt`")),
                            }
                        }
                    }
                    _ => Err(spec_err(spec, "expected etc:t0=<n> or etc:t0=cbrt")),
                }
            }
            ("etc", None) => Err(spec_err(
                spec,
                "missing exploration length, e.g. etc:t0=cbrt",
            )),
            ("neyman-oracle", Some(_)) => Err(spec_err(spec, "neyman-oracle takes no arguments")),
            _ => Err(spec_err(spec, format!("unknown design `{name}`"))),
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Bernoulli(p) => write!(f, "bernoulli:{p}"),
            PolicySpec::NeymanOracle => f.write_str("neyman-oracle"),
            PolicySpec::Etc(ExploreLen::CubeRoot) => f.write_str("etc:t0=cbrt"),
            PolicySpec::Etc(ExploreLen::Fixed(n)) => write!(f, "etc:t0={n}"),
            PolicySpec::ClipOgd { step, alpha } => {
                let mut args = Vec::new();
                match step {
                    StepRule::Default => {}
                    StepRule::Fixed(e) => args.push(format!("eta={e}")),
                    StepRule::Scaled(c) => args.push(format!("scale={c}")),
                    StepRule::MomentInformed(b) => {
                        args.push(format!("c={}", b.lower()));
                        args.push(format!("C={}", b.upper()));
                    }
                }
                if let Some(a) = alpha {
                    args.push(format!("alpha={a}"));
                }
                if args.is_empty() {
                    f.write_str("clip-ogd")
                } else {
                    write!(f, "clip-ogd:{}", args.join(","))
                }
            }
        }
    }
}

/// Splits a comma-separated list of design specs. A token of the form
/// `key=value` without a design name continues the previous spec, so
/// `clip-ogd:eta=0.1,alpha=3,bernoulli:0.5` yields two specs.
pub fn parse_spec_list(list: &str) -> Result<Vec<PolicySpec>> {
    let mut raw: Vec<String> = Vec::new();
    for token in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match raw.last_mut() {
            Some(prev) if !token.contains(':') && token.contains('=') => {
                prev.push(',');
                prev.push_str(token);
            }
            _ => raw.push(token.to_string()),
        }
    }
    if raw.is_empty() {
        return Err(spec_err(list, "no designs given"));
    }
    raw.iter().map(|s| s.parse()).collect()
}
