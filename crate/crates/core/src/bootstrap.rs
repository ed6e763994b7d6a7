//! Bootstrapping before any reputation exists.
//!
//! Servers run a fixed round-robin schedule of committees. Corrupted servers
//! turn faulty within `λ` rounds; a committee containing a faulty member
//! exposes one corrupted member and the phase restarts without it. Once an
//! iteration completes `λ` rounds, detected servers count as nature's zero
//! draws, players are rewarded as in the perfect-information game, and the
//! recorded profile is decoded to pick the first committee.

use rand::Rng;
use rayon::prelude::*;

use crate::decoder::{count_inversions, decode};
use crate::error::{Error, Result};
use crate::game::{
    bipartite_utility, realized_utilities, NatureOutcome, StrategyProfile, TRepGame,
};
use crate::numfmt::g17;
use crate::pagerank::ReputationScores;
use crate::repgraph::{Config, TrustVector};
use crate::rng::{purpose, substream};

/// When a corrupted server starts misbehaving, counted in rounds from the
/// start of an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultyRound {
    /// Uniform on `[1, λ]`.
    Uniform,
    /// Always round `λ`.
    Latest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub lambda: usize,
    pub committee_size: usize,
    pub ell: usize,
    pub selection_fraction: f64,
    pub faulty_round: FaultyRound,
}

impl BootstrapConfig {
    pub fn new(lambda: usize, committee_size: usize, ell: usize, selection_fraction: f64) -> Self {
        BootstrapConfig {
            lambda,
            committee_size,
            ell,
            selection_fraction,
            faulty_round: FaultyRound::Uniform,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.lambda < 1 {
            return Err(Error::InvalidConfig("lambda must be at least 1".into()));
        }
        if self.committee_size < 1 || self.committee_size > m {
            return Err(Error::InvalidConfig(format!(
                "committee size {} out of [1, {m}]",
                self.committee_size
            )));
        }
        if self.ell < 1 || self.ell > m {
            return Err(Error::InvalidConfig(format!(
                "ell {} out of [1, {m}]",
                self.ell
            )));
        }
        if !(self.selection_fraction > 0.0 && self.selection_fraction <= 1.0) {
            return Err(Error::InvalidConfig(
                "selection fraction out of (0,1]".into(),
            ));
        }
        Ok(())
    }
}

/// One committee slot. Ids are 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundEvent {
    pub iteration: usize,
    pub round: usize,
    pub committee: Vec<usize>,
    pub fault: Option<usize>,
    pub detect: Option<usize>,
    pub restart: bool,
}

impl RoundEvent {
    /// `round <t> committee <ids> fault <id|none> detect <id|none> restart <bool>`
    /// with 1-based ids.
    pub fn to_line(&self) -> String {
        let ids: Vec<String> = self.committee.iter().map(|j| (j + 1).to_string()).collect();
        let opt = |x: Option<usize>| x.map_or("none".to_string(), |j| (j + 1).to_string());
        format!(
            "round {} committee {} fault {} detect {} restart {}",
            self.round,
            ids.join(","),
            opt(self.fault),
            opt(self.detect),
            self.restart
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapTrace {
    pub events: Vec<RoundEvent>,
    /// Ground truth drawn up front.
    pub corrupted: Vec<bool>,
    pub faulty_round: Vec<Option<usize>>,
    /// In detection order.
    pub detected: Vec<usize>,
    pub restarts: usize,
    pub final_outcome: NatureOutcome,
    pub final_rho: ReputationScores,
    pub final_committee: Vec<usize>,
}

impl BootstrapTrace {
    pub fn event_log(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    /// Per-server table, then a metrics block. `rewards` adds a per-player block.
    pub fn summary_csv(&self, trust: &TrustVector, rewards: Option<&[f64]>) -> String {
        let mut out = String::from("server_index,trust,corrupted,faulty_round,detected,rho\n");
        for j in 0..self.corrupted.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                j + 1,
                g17(trust.as_slice()[j]),
                self.corrupted[j],
                self.faulty_round[j].map_or("none".to_string(), |t| t.to_string()),
                !self.final_outcome.0[j],
                g17(self.final_rho.as_slice()[j])
            ));
        }
        let (majority, margin) = honest_majority_check(&self.final_committee, &self.corrupted);
        let committee: Vec<String> = self
            .final_committee
            .iter()
            .map(|j| (j + 1).to_string())
            .collect();
        out.push_str("\nmetric,value\n");
        out.push_str(&format!("restarts,{}\n", self.restarts));
        out.push_str(&format!("slots,{}\n", self.events.len()));
        out.push_str(&format!(
            "inversions,{}\n",
            count_inversions(&self.final_rho, trust)
        ));
        out.push_str(&format!("committee,{}\n", committee.join(" ")));
        out.push_str(&format!("honest_majority,{majority}\n"));
        out.push_str(&format!("majority_margin,{margin}\n"));
        if let Some(r) = rewards {
            out.push_str("\nplayer_index,reward\n");
            for (i, x) in r.iter().enumerate() {
                out.push_str(&format!("{},{}\n", i + 1, g17(*x)));
            }
        }
        out
    }
}

fn validate_inputs(
    game: &TRepGame,
    profile: &StrategyProfile,
    bcfg: &BootstrapConfig,
) -> Result<()> {
    if profile.m() != game.m || profile.n() != game.n {
        return Err(Error::Dimension("profile does not match the game".into()));
    }
    bcfg.validate(game.m)
}

pub fn run_bootstrap<R: Rng + ?Sized>(
    game: &TRepGame,
    profile: &StrategyProfile,
    bcfg: &BootstrapConfig,
    rng: &mut R,
) -> Result<BootstrapTrace> {
    validate_inputs(game, profile, bcfg)?;
    let rho = decode(profile, &game.config, None)?.rho;
    simulate(&game.trust, &rho, bcfg, rng)
}

fn simulate<R: Rng + ?Sized>(
    trust: &TrustVector,
    rho: &ReputationScores,
    bcfg: &BootstrapConfig,
    rng: &mut R,
) -> Result<BootstrapTrace> {
    let m = trust.len();
    let corrupted: Vec<bool> = trust
        .as_slice()
        .iter()
        .map(|&r| rng.random::<f64>() >= r)
        .collect();
    let faulty_round: Vec<Option<usize>> = corrupted
        .iter()
        .map(|&c| {
            c.then(|| match bcfg.faulty_round {
                FaultyRound::Uniform => rng.random_range(1..=bcfg.lambda),
                FaultyRound::Latest => bcfg.lambda,
            })
        })
        .collect();

    let cap = m + 1;
    let mut excluded = vec![false; m];
    let mut detected = Vec::new();
    let mut events = Vec::new();
    let mut restarts = 0;
    'phase: loop {
        let active: Vec<usize> = (0..m).filter(|&j| !excluded[j]).collect();
        for round in 1..=bcfg.lambda {
            for committee in active.chunks(bcfg.committee_size) {
                let fault = committee
                    .iter()
                    .copied()
                    .find(|&j| faulty_round[j].is_some_and(|t| round >= t));
                events.push(RoundEvent {
                    iteration: restarts,
                    round,
                    committee: committee.to_vec(),
                    fault,
                    detect: fault,
                    restart: fault.is_some(),
                });
                if let Some(j) = fault {
                    excluded[j] = true;
                    detected.push(j);
                    restarts += 1;
                    if restarts > cap {
                        return Err(Error::RestartCap { cap });
                    }
                    continue 'phase;
                }
            }
        }
        break;
    }

    let final_outcome = NatureOutcome(excluded.iter().map(|&d| !d).collect());
    let final_committee = select_committee(rho, bcfg.ell, bcfg.selection_fraction)?;
    Ok(BootstrapTrace {
        events,
        corrupted,
        faulty_round,
        detected,
        restarts,
        final_outcome,
        final_rho: rho.clone(),
        final_committee,
    })
}

/// Rewards under the perfect-information game with detected servers as
/// nature's zero draws.
pub fn distribute_rewards(
    trace: &BootstrapTrace,
    profile: &StrategyProfile,
    config: &Config,
) -> Result<Vec<f64>> {
    realized_utilities(profile, &trace.final_outcome, config)
}

/// Top `ceil(fraction·ell)` servers by `ρ`, ties by index. 0-based.
pub fn select_committee(rho: &ReputationScores, ell: usize, fraction: f64) -> Result<Vec<usize>> {
    let m = rho.len();
    if ell > m {
        return Err(Error::InvalidInput(format!(
            "ell {ell} exceeds server count {m}"
        )));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(
            "selection fraction out of (0,1]".into(),
        ));
    }
    let r = rho.as_slice();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| r[b].total_cmp(&r[a]).then(a.cmp(&b)));
    let size = ((fraction * ell as f64).ceil() as usize).min(ell);
    order.truncate(size);
    Ok(order)
}

/// Strict honest majority and `honest − corrupted`.
pub fn honest_majority_check(committee: &[usize], corrupted: &[bool]) -> (bool, i64) {
    let bad = committee.iter().filter(|&&j| corrupted[j]).count() as i64;
    let good = committee.len() as i64 - bad;
    (good > bad, good - bad)
}

/// Aggregates over independent bootstrap runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub runs: usize,
    /// Per server, runs in which it was not detected.
    pub kept: Vec<usize>,
    pub total_restarts: usize,
    pub max_restarts: usize,
    pub honest_majority_runs: usize,
    /// Runs whose rewards differ from `realized_utilities` on the final outcome.
    pub reward_mismatches: usize,
}

impl MonteCarloSummary {
    pub fn kept_rate(&self, j: usize) -> f64 {
        self.kept[j] as f64 / self.runs as f64
    }

    /// Whether every server's survival rate is within `k` binomial standard
    /// deviations of its trust.
    pub fn within_sigma(&self, trust: &TrustVector, k: f64) -> bool {
        trust.as_slice().iter().enumerate().all(|(j, &r)| {
            let sd = (r * (1.0 - r) / self.runs as f64).sqrt();
            (self.kept_rate(j) - r).abs() <= k * sd
        })
    }

    pub fn to_csv(&self, trust: &TrustVector) -> String {
        let mut out = String::from("server_index,trust,kept_rate,sigma\n");
        for (j, &r) in trust.as_slice().iter().enumerate() {
            let sd = (r * (1.0 - r) / self.runs as f64).sqrt();
            out.push_str(&format!(
                "{},{},{},{}\n",
                j + 1,
                g17(r),
                g17(self.kept_rate(j)),
                g17(sd)
            ));
        }
        out.push_str("\nmetric,value\n");
        out.push_str(&format!("runs,{}\n", self.runs));
        out.push_str(&format!("total_restarts,{}\n", self.total_restarts));
        out.push_str(&format!("max_restarts,{}\n", self.max_restarts));
        out.push_str(&format!(
            "honest_majority_runs,{}\n",
            self.honest_majority_runs
        ));
        out.push_str(&format!("reward_mismatches,{}\n", self.reward_mismatches));
        out
    }
}

/// Runs `runs` independent bootstraps, run `r` drawing from
/// `substream(seed, BOOTSTRAP, r)`. Rewards are recomputed per run and
/// compared against `realized_utilities`.
pub fn monte_carlo(
    game: &TRepGame,
    profile: &StrategyProfile,
    bcfg: &BootstrapConfig,
    seed: u64,
    runs: usize,
) -> Result<MonteCarloSummary> {
    validate_inputs(game, profile, bcfg)?;
    let rho = decode(profile, &game.config, None)?.rho;
    let per_run: Vec<(Vec<bool>, usize, bool, bool)> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, purpose::BOOTSTRAP, r as u64);
            let trace = simulate(&game.trust, &rho, bcfg, &mut rng)?;
            let rewards = distribute_rewards(&trace, profile, &game.config)?;
            let reference = realized_utilities(profile, &trace.final_outcome, &game.config)?;
            let (majority, _) = honest_majority_check(&trace.final_committee, &trace.corrupted);
            Ok((
                trace.final_outcome.0,
                trace.restarts,
                majority,
                rewards != reference,
            ))
        })
        .collect::<Result<_>>()?;

    let mut kept = vec![0; game.m];
    let mut summary = MonteCarloSummary {
        runs,
        kept: Vec::new(),
        total_restarts: 0,
        max_restarts: 0,
        honest_majority_runs: 0,
        reward_mismatches: 0,
    };
    for (outcome, restarts, majority, mismatch) in per_run {
        for (k, h) in kept.iter_mut().zip(outcome) {
            *k += h as usize;
        }
        summary.total_restarts += restarts;
        summary.max_restarts = summary.max_restarts.max(restarts);
        summary.honest_majority_runs += majority as usize;
        summary.reward_mismatches += mismatch as usize;
    }
    summary.kept = kept;
    Ok(summary)
}

/// Truth-telling against bootstrap rewards: the largest gain any probed
/// server-only deviation earns over `N(R)` when opponents play `N(R)` and
/// nature is replaced by the empirical survival rates.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardCheck {
    pub max_gain: f64,
    /// `Σ_j 3σ_j`; bounds the gain any deviation can pick up from sampling error.
    pub sampling_slack: f64,
}

pub fn bootstrap_reward_check(
    trust: &TrustVector,
    n: usize,
    summary: &MonteCarloSummary,
    probes: usize,
    seed: u64,
) -> RewardCheck {
    let m = trust.len();
    let rates: Vec<f64> = (0..m).map(|j| summary.kept_rate(j)).collect();
    let nr = trust.normalized();
    let opponents: Vec<f64> = nr.iter().map(|x| x * (n - 1) as f64).collect();
    let base = bipartite_utility(&nr, &opponents, &rates);
    let max_gain = (0..probes)
        .map(|p| {
            let mut rng = substream(seed, purpose::PROBE, p as u64);
            let raw: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let sum: f64 = raw.iter().sum();
            let x: Vec<f64> = raw.iter().map(|v| v / sum).collect();
            bipartite_utility(&x, &opponents, &rates) - base
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let sampling_slack = trust
        .as_slice()
        .iter()
        .map(|&r| 3.0 * (r * (1.0 - r) / summary.runs as f64).sqrt())
        .sum();
    RewardCheck {
        max_gain,
        sampling_slack,
    }
}
