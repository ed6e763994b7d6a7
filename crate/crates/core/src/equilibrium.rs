//! Best responses and equilibrium checks.
//!
//! A player who deviates only over server actions faces an objective of the
//! form `Σ_j R_j x_j / (γ x_j + e_j)`: `e_j` is everyone else's contribution
//! mass on server `j` and `γ ≥ 1` accounts for users whose walks pass
//! through the deviating player. In a bipartite profile `γ = 1` and
//! `e_j = s^(-i)_j`. The objective is separable and concave, and it is
//! maximized over the simplex by bisection on the budget multiplier.

use rand::Rng;
use rayon::prelude::*;

use crate::decoder::NoiseModel;
use crate::error::{Error, Result};
use crate::game::{bipartite_utility, expected_utilities, BeliefVector, StrategyProfile};
use crate::pagerank::{personalized_all, StationaryDistribution};
use crate::repgraph::{Config, TrustVector};
use crate::rng::{purpose, substream};
use crate::{l1_normalize, linf};

/// Mass placed on a server nobody else endorses. The supremum of the
/// objective puts an infinitesimal amount there; this gets within `R_j·1e-12`.
pub const UNCONTESTED_MASS: f64 = 1e-12;

/// Relative size below which another user's contribution to a server is
/// treated as zero.
pub const CANCELLATION_TOL: f64 = 1e-10;

/// Largest acceptable `|Σx − 1|` before the final rescale.
pub const BUDGET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Perfect,
    /// The first `k` players are perfectly informed.
    Hierarchy {
        k: usize,
    },
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMask {
    /// Every action in `[m + n]`.
    All,
    /// Only actions endorsing players.
    PlayersOnly,
}

#[derive(Debug, Clone)]
pub struct GameScenario {
    pub kind: ScenarioKind,
    pub trust: TrustVector,
    pub n: usize,
    pub beliefs: Vec<BeliefVector>,
    pub action_mask: Vec<ActionMask>,
    /// Fresh players' distributions over the `k` perfect players
    /// (hierarchy only); uniform when absent.
    pub fresh_strategies: Option<Vec<Vec<f64>>>,
}

impl GameScenario {
    pub fn perfect(trust: TrustVector, n: usize) -> Result<Self> {
        let b = BeliefVector::perfect(&trust);
        Self::checked(GameScenario {
            kind: ScenarioKind::Perfect,
            n,
            beliefs: vec![b; n],
            action_mask: vec![ActionMask::All; n],
            trust,
            fresh_strategies: None,
        })
    }

    pub fn hierarchy(trust: TrustVector, n: usize, k: usize) -> Result<Self> {
        let m = trust.len();
        let informed = BeliefVector::perfect(&trust);
        let uninformed = BeliefVector {
            t: vec![0.5; m],
            epsilon: 1.0,
            p: 1.0,
        };
        let beliefs = (0..n)
            .map(|i| {
                if i < k {
                    informed.clone()
                } else {
                    uninformed.clone()
                }
            })
            .collect();
        let action_mask = (0..n)
            .map(|i| {
                if i < k {
                    ActionMask::All
                } else {
                    ActionMask::PlayersOnly
                }
            })
            .collect();
        Self::checked(GameScenario {
            kind: ScenarioKind::Hierarchy { k },
            n,
            beliefs,
            action_mask,
            trust,
            fresh_strategies: None,
        })
    }

    pub fn noisy(trust: TrustVector, belief: BeliefVector, n: usize) -> Result<Self> {
        Self::checked(GameScenario {
            kind: ScenarioKind::Noisy,
            n,
            beliefs: vec![belief; n],
            action_mask: vec![ActionMask::All; n],
            trust,
            fresh_strategies: None,
        })
    }

    /// Sets the fresh players' endorsement distributions over the perfect players.
    pub fn with_fresh_strategies(mut self, strategies: Vec<Vec<f64>>) -> Result<Self> {
        self.fresh_strategies = Some(strategies);
        Self::checked(self)
    }

    fn checked(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n, self.trust.len());
        if n < 2 || m < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 players and 2 servers, got n={n}, m={m}"
            )));
        }
        if self.beliefs.len() != n || self.action_mask.len() != n {
            return Err(Error::Dimension(
                "one belief and one action mask per player".into(),
            ));
        }
        if self.beliefs.iter().any(|b| b.len() != m) {
            return Err(Error::Dimension(
                "every belief must have one entry per server".into(),
            ));
        }
        match self.kind {
            ScenarioKind::Perfect => {
                if self.beliefs.iter().any(|b| b.t != self.trust.as_slice()) {
                    return Err(Error::InvalidInput(
                        "perfect scenario needs beliefs equal to trust".into(),
                    ));
                }
            }
            ScenarioKind::Noisy => {
                if self.beliefs.iter().any(|b| b.t != self.beliefs[0].t) {
                    return Err(Error::InvalidInput(
                        "noisy scenario needs identical beliefs".into(),
                    ));
                }
            }
            ScenarioKind::Hierarchy { k } => {
                if k == 0 || k >= n {
                    return Err(Error::InvalidInput(format!(
                        "hierarchy needs 1 <= k < n, got k={k}, n={n}"
                    )));
                }
                for i in 0..n {
                    let want = if i < k {
                        ActionMask::All
                    } else {
                        ActionMask::PlayersOnly
                    };
                    if self.action_mask[i] != want {
                        return Err(Error::InvalidInput(format!(
                            "player {} has the wrong action set for a hierarchy",
                            i + 1
                        )));
                    }
                }
                if let Some(fs) = &self.fresh_strategies {
                    if fs.len() != n - k {
                        return Err(Error::Dimension(format!(
                            "expected {} fresh strategies, got {}",
                            n - k,
                            fs.len()
                        )));
                    }
                    for q in fs {
                        let s: f64 = q.iter().sum();
                        if q.len() != k || q.iter().any(|x| *x < 0.0) || (s - 1.0).abs() > 1e-12 {
                            return Err(Error::InvalidInput(
                                "fresh strategies must be distributions over the perfect players"
                                    .into(),
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.trust.len()
    }

    /// Noise half-width shared by the players' beliefs.
    pub fn epsilon(&self) -> f64 {
        self.beliefs.iter().map(|b| b.epsilon).fold(0.0, f64::max)
    }
}

/// Everyone plays `N(belief)`; in a hierarchy the fresh players endorse the
/// perfect players only.
pub fn truth_telling_profile(scenario: &GameScenario) -> Result<StrategyProfile> {
    scenario.validate()?;
    let (n, m) = (scenario.n, scenario.m());
    let mut strategies = Vec::with_capacity(n);
    match scenario.kind {
        ScenarioKind::Perfect | ScenarioKind::Noisy => {
            for b in &scenario.beliefs {
                let mut s = b.normalized().ok_or(Error::DegenerateBelief)?;
                s.resize(m + n, 0.0);
                strategies.push(s);
            }
        }
        ScenarioKind::Hierarchy { k } => {
            let mut informed = scenario.trust.normalized();
            informed.resize(m + n, 0.0);
            strategies.extend(std::iter::repeat_n(informed, k));
            for f in 0..n - k {
                let mut s = vec![0.0; m + n];
                match &scenario.fresh_strategies {
                    Some(fs) => s[m..m + k].copy_from_slice(&fs[f]),
                    None => s[m..m + k].iter_mut().for_each(|x| *x = 1.0 / k as f64),
                }
                strategies.push(s);
            }
        }
    }
    StrategyProfile::new(m, strategies)
}

/// `x*_j = n·√(R_j R'_j)/Σ_k √(R_k R'_k) − (n−1)·N(R')_j`, before any clamping.
pub fn best_response_closed_form_raw(
    trust: &TrustVector,
    belief: &BeliefVector,
    n: usize,
) -> Result<Vec<f64>> {
    if belief.len() != trust.len() {
        return Err(Error::Dimension("belief and trust lengths differ".into()));
    }
    let roots: Vec<f64> = trust
        .as_slice()
        .iter()
        .zip(&belief.t)
        .map(|(r, b)| (r * b).sqrt())
        .collect();
    let root_sum: f64 = roots.iter().sum();
    if !(root_sum > 0.0) {
        return Err(Error::DegenerateBelief);
    }
    let nb = belief.normalized().ok_or(Error::DegenerateBelief)?;
    let nf = n as f64;
    Ok(roots
        .iter()
        .zip(&nb)
        .map(|(r, b)| nf * r / root_sum - (nf - 1.0) * b)
        .collect())
}

/// Closed-form best response against `n − 1` opponents playing `N(R')`,
/// clamped to the simplex.
pub fn best_response_closed_form(
    trust: &TrustVector,
    belief: &BeliefVector,
    n: usize,
) -> Result<Vec<f64>> {
    let raw = best_response_closed_form_raw(trust, belief, n)?;
    if raw.iter().all(|x| *x >= 0.0) {
        return Ok(raw);
    }
    let clamped: Vec<f64> = raw.iter().map(|x| x.max(0.0)).collect();
    l1_normalize(&clamped).ok_or(Error::DegenerateBelief)
}

/// `Σ_j R_j x_j / (γ x_j + e_j)` with `0/0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationObjective {
    pub trust: Vec<f64>,
    pub gamma: f64,
    pub others: Vec<f64>,
}

impl DeviationObjective {
    pub fn bipartite(opponents: &[f64], trust: &[f64]) -> Self {
        DeviationObjective {
            trust: trust.to_vec(),
            gamma: 1.0,
            others: opponents.to_vec(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.others)
            .zip(&self.trust)
            .map(|((&x, &e), &r)| {
                if x > 0.0 {
                    r * x / (self.gamma * x + e)
                } else {
                    0.0
                }
            })
            .sum()
    }

    fn coordinate(&self, j: usize, mu: f64) -> f64 {
        let (r, e) = (self.trust[j], self.others[j]);
        (((r * e / mu).sqrt() - e) / self.gamma).max(0.0)
    }

    /// Maximizer over the simplex and its value.
    pub fn maximize(&self) -> Result<(Vec<f64>, f64)> {
        let m = self.trust.len();
        let mut x = vec![0.0; m];
        let uncontested: Vec<usize> = (0..m)
            .filter(|&j| self.trust[j] > 0.0 && self.others[j] == 0.0)
            .collect();
        let interior: Vec<usize> = (0..m)
            .filter(|&j| self.trust[j] > 0.0 && self.others[j] > 0.0)
            .collect();

        if interior.is_empty() {
            if uncontested.is_empty() {
                // Nothing can earn anything; every strategy is optimal.
                x.iter_mut().for_each(|v| *v = 1.0 / m as f64);
            } else {
                let share = 1.0 / uncontested.len() as f64;
                uncontested.iter().for_each(|&j| x[j] = share);
            }
            let v = self.value(&x);
            return Ok((x, v));
        }

        for &j in &uncontested {
            x[j] = UNCONTESTED_MASS;
        }
        let budget = 1.0 - UNCONTESTED_MASS * uncontested.len() as f64;
        let mass = |mu: f64| {
            interior
                .iter()
                .map(|&j| self.coordinate(j, mu))
                .sum::<f64>()
        };

        // Marginal value at zero bounds the multiplier from above.
        let mut hi = interior
            .iter()
            .map(|&j| self.trust[j] / self.others[j])
            .fold(0.0, f64::max);
        let mut lo = hi;
        while mass(lo) < budget {
            lo /= 4.0;
            if lo < f64::MIN_POSITIVE {
                return Err(Error::OptimizerNonConvergence {
                    achieved: budget - mass(lo),
                });
            }
        }
        for _ in 0..400 {
            let mid = (lo * hi).sqrt();
            if !(mid > lo && mid < hi) {
                break;
            }
            if mass(mid) >= budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        for &j in &interior {
            x[j] = self.coordinate(j, lo);
        }
        let total: f64 = interior.iter().map(|&j| x[j]).sum();
        let achieved = (total - budget).abs();
        if achieved > BUDGET_TOL || !(total > 0.0) {
            return Err(Error::OptimizerNonConvergence { achieved });
        }
        for &j in &interior {
            x[j] *= budget / total;
        }
        let v = self.value(&x);
        Ok((x, v))
    }
}

/// A maximizer over server-only strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    /// Full action vector (length `m + n`, zero on player actions).
    pub strategy: Vec<f64>,
    pub value: f64,
    /// Utility of the player's current strategy under the same objective.
    pub current_value: f64,
}

impl BestResponse {
    pub fn gain(&self) -> f64 {
        self.value - self.current_value
    }
}

fn server_only(s: &[f64], m: usize) -> bool {
    s[m..].iter().all(|&x| x == 0.0)
}

/// Objective faced by `player` when deviating over servers. `runs` are the
/// personalized distributions of the profile, required unless the profile
/// is bipartite.
fn deviation_objective(
    profile: &StrategyProfile,
    trust: &TrustVector,
    player: usize,
    config: &Config,
    runs: Option<&[StationaryDistribution]>,
) -> Result<DeviationObjective> {
    if profile.is_bipartite() {
        return Ok(DeviationObjective::bipartite(
            &profile.opponents_server_mass(player),
            trust.as_slice(),
        ));
    }
    let (n, m) = (profile.n(), profile.m());
    // Walks of other users visit `player` at a rate independent of where
    // its server mass goes, provided it endorses no users. Swap in a
    // server-only strategy when needed.
    let owned;
    let (profile, runs) = if server_only(profile.strategy(player), m) {
        match runs {
            Some(r) => (profile, r),
            None => {
                owned = personalized_all(&profile.to_graph()?, config)?;
                (profile, owned.as_slice())
            }
        }
    } else {
        let mut uniform = vec![1.0 / m as f64; m];
        uniform.resize(m + n, 0.0);
        let swapped = profile.with_strategy(player, uniform)?;
        owned = personalized_all(&swapped.to_graph()?, config)?;
        return objective_from_runs(&swapped, trust, player, config, &owned);
    };
    objective_from_runs(profile, trust, player, config, runs)
}

fn objective_from_runs(
    profile: &StrategyProfile,
    trust: &TrustVector,
    player: usize,
    config: &Config,
    runs: &[StationaryDistribution],
) -> Result<DeviationObjective> {
    let (n, m) = (profile.n(), profile.m());
    let keep = 1.0 - config.alpha;
    let own = profile.server_part(player);
    let self_rate = keep * runs[player].users()[player];
    let mut through = 0.0;
    let mut others = vec![0.0; m];
    for (u, run) in runs.iter().enumerate().take(n) {
        if u == player {
            continue;
        }
        let visits = keep * run.users()[player];
        through += visits;
        for j in 0..m {
            others[j] += run.servers()[j] - visits * own[j];
        }
    }
    // The subtraction cancels exactly for servers reached only through
    // `player`; anything under the walk's accuracy is such a server.
    let total: f64 = runs
        .iter()
        .take(n)
        .map(|r| r.servers().iter().sum::<f64>())
        .sum();
    let floor = CANCELLATION_TOL * total.max(config.tol);
    Ok(DeviationObjective {
        trust: trust.as_slice().to_vec(),
        gamma: 1.0 + through / self_rate,
        others: others
            .iter()
            .map(|&e| if e <= floor { 0.0 } else { e / self_rate })
            .collect(),
    })
}

/// Numerical best response of `player` over server-only strategies.
pub fn best_response_numeric(
    profile: &StrategyProfile,
    trust: &TrustVector,
    player: usize,
    config: &Config,
) -> Result<BestResponse> {
    if player >= profile.n() || trust.len() != profile.m() {
        return Err(Error::Dimension(
            "player index or trust length out of range".into(),
        ));
    }
    let objective = deviation_objective(profile, trust, player, config, None)?;
    best_response_for(profile, player, &objective)
}

fn best_response_for(
    profile: &StrategyProfile,
    player: usize,
    objective: &DeviationObjective,
) -> Result<BestResponse> {
    let (x, value) = objective.maximize()?;
    let mut strategy = x;
    strategy.resize(profile.m() + profile.n(), 0.0);
    let current_value = objective.value(profile.server_part(player));
    Ok(BestResponse {
        strategy,
        value,
        current_value,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub profile: StrategyProfile,
    /// `None` for players who cannot endorse servers.
    pub best_responses: Vec<Option<Vec<f64>>>,
    pub profile_utilities: Vec<Option<f64>>,
    pub gains: Vec<Option<f64>>,
    /// Largest gain over the evaluated players.
    pub epsilon_prime: f64,
    /// L∞ distance between the numerical and the closed-form best response.
    pub closed_form_deviation: Vec<Option<f64>>,
    /// `(m²(n−1)/n²)·(1+ε)/(1−ε)` for noisy scenarios.
    pub bound: Option<f64>,
}

/// `ε′ ≤ (m²(n−1)/n²)·(1+ε)/(1−ε)`.
pub fn epsilon_prime_bound(m: usize, n: usize, epsilon: f64) -> f64 {
    let (m, n) = (m as f64, n as f64);
    m * m * (n - 1.0) / (n * n) * (1.0 + epsilon) / (1.0 - epsilon)
}

/// Gains of every server-capable player in `profile`, measured under the
/// true trust. Players whose strategies coincide share one computation.
pub fn equilibrium_report(
    profile: &StrategyProfile,
    trust: &TrustVector,
    mask: &[ActionMask],
    closed_form: Option<(&[BeliefVector], usize)>,
    config: &Config,
) -> Result<EquilibriumReport> {
    let n = profile.n();
    let runs = if profile.is_bipartite() {
        None
    } else {
        Some(personalized_all(&profile.to_graph()?, config)?)
    };

    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..n {
        if mask[i] != ActionMask::All {
            continue;
        }
        let key = profile.strategy(i);
        let same_belief = |a: usize| match closed_form {
            Some((b, _)) => b[a].t == b[i].t,
            None => true,
        };
        match groups
            .iter_mut()
            .find(|(rep, _)| profile.strategy(*rep) == key && same_belief(*rep))
        {
            Some((_, members)) => members.push(i),
            None => groups.push((i, vec![i])),
        }
    }

    let evaluated: Vec<(BestResponse, Option<f64>)> = groups
        .par_iter()
        .map(|(rep, _)| {
            let objective = deviation_objective(profile, trust, *rep, config, runs.as_deref())?;
            let br = best_response_for(profile, *rep, &objective)?;
            let dev = match closed_form {
                Some((beliefs, players)) => {
                    let cf = best_response_closed_form(trust, &beliefs[*rep], players)?;
                    Some(linf(&cf, &br.strategy[..profile.m()]))
                }
                None => None,
            };
            Ok((br, dev))
        })
        .collect::<Result<_>>()?;

    let mut best_responses = vec![None; n];
    let mut profile_utilities = vec![None; n];
    let mut gains = vec![None; n];
    let mut closed_form_deviation = vec![None; n];
    for ((_, members), (br, dev)) in groups.iter().zip(&evaluated) {
        for &i in members {
            best_responses[i] = Some(br.strategy.clone());
            profile_utilities[i] = Some(br.current_value);
            gains[i] = Some(br.gain());
            closed_form_deviation[i] = *dev;
        }
    }
    let epsilon_prime = gains
        .iter()
        .flatten()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(EquilibriumReport {
        profile: profile.clone(),
        best_responses,
        profile_utilities,
        gains,
        epsilon_prime,
        closed_form_deviation,
        bound: None,
    })
}

/// Perfect-information check at `s* = (N(R), …, N(R))`.
#[derive(Debug, Clone, PartialEq)]
pub struct NashReport {
    pub report: EquilibriumReport,
    /// `L = ΣR_j / n`.
    pub guarantee: f64,
    /// Game utilities at `s*` from the contribution PageRank.
    pub utilities: Vec<f64>,
    /// `max_i |u_i(s*) − L|`.
    pub utility_error: f64,
    pub probes: usize,
    /// Smallest utility of an `N(R)` player against the probed opponents.
    pub probe_min: f64,
    /// Opponent sums `(n−1)N(R)` for every player force `s*`.
    pub linear_system_check: bool,
}

impl NashReport {
    pub fn passes(&self, gain_tol: f64, utility_tol: f64, probe_tol: f64) -> bool {
        self.report.epsilon_prime <= gain_tol
            && self.utility_error <= utility_tol
            && self.probe_min >= self.guarantee - probe_tol
            && self.linear_system_check
    }
}

/// Random opponent profile over servers; some entries are zeroed so probes
/// also cover opponents that ignore servers.
fn random_opponents<R: Rng + ?Sized>(m: usize, players: usize, rng: &mut R) -> Vec<f64> {
    let mut total = vec![0.0; m];
    for _ in 0..players {
        let mut s: Vec<f64> = (0..m)
            .map(|_| {
                if rng.random::<f64>() < 0.2 {
                    0.0
                } else {
                    -rng.random::<f64>().max(f64::MIN_POSITIVE).ln()
                }
            })
            .collect();
        if s.iter().all(|&x| x == 0.0) {
            s[rng.random_range(0..m)] = 1.0;
        }
        let sum: f64 = s.iter().sum();
        for (t, x) in total.iter_mut().zip(&s) {
            *t += x / sum;
        }
    }
    total
}

/// Solves `s^(i) = (Σ_k c^(k))/(n−1) − c^(i)` from the opponent sums `c^(i)`.
pub fn profile_from_opponent_sums(sums: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = sums.len() as f64;
    let m = sums.first().map_or(0, |s| s.len());
    let total: Vec<f64> = (0..m)
        .map(|j| sums.iter().map(|c| c[j]).sum::<f64>() / (n - 1.0))
        .collect();
    sums.iter()
        .map(|c| total.iter().zip(c).map(|(t, x)| t - x).collect())
        .collect()
}

pub fn verify_unique_nash(
    trust: &TrustVector,
    n: usize,
    probes: usize,
    config: &Config,
) -> Result<NashReport> {
    let scenario = GameScenario::perfect(trust.clone(), n)?;
    let profile = truth_telling_profile(&scenario)?;
    let mut report = equilibrium_report(
        &profile,
        trust,
        &scenario.action_mask,
        Some((&scenario.beliefs, n)),
        config,
    )?;
    report.bound = None;

    let guarantee = trust.l1() / n as f64;
    let utilities = expected_utilities(&profile, trust, config)?;
    let utility_error = utilities
        .iter()
        .map(|u| (u - guarantee).abs())
        .fold(0.0, f64::max);

    let nr = trust.normalized();
    let m = trust.len();
    let probe_min = (0..probes)
        .into_par_iter()
        .map(|p| {
            let mut rng = substream(config.seed, purpose::PROBE, p as u64);
            let opponents = random_opponents(m, n - 1, &mut rng);
            bipartite_utility(&nr, &opponents, trust.as_slice())
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min);

    let sums: Vec<Vec<f64>> = (0..n).map(|i| profile.opponents_server_mass(i)).collect();
    let recovered = profile_from_opponent_sums(&sums);
    let linear_system_check = recovered.iter().all(|s| linf(s, &nr) <= 1e-12);

    Ok(NashReport {
        report,
        guarantee,
        utilities,
        utility_error,
        probes,
        probe_min,
        linear_system_check,
    })
}

/// `ε′` of the truth-telling profile: the largest gain any server-capable
/// player gets from a best response, measured under the true trust.
pub fn measure_epsilon_prime(
    scenario: &GameScenario,
    config: &Config,
) -> Result<EquilibriumReport> {
    let profile = truth_telling_profile(scenario)?;
    let closed_form = match scenario.kind {
        ScenarioKind::Perfect | ScenarioKind::Noisy => {
            Some((scenario.beliefs.as_slice(), scenario.n))
        }
        ScenarioKind::Hierarchy { .. } => None,
    };
    let mut report = equilibrium_report(
        &profile,
        &scenario.trust,
        &scenario.action_mask,
        closed_form,
        config,
    )?;
    if scenario.kind == ScenarioKind::Noisy {
        report.bound = Some(epsilon_prime_bound(
            scenario.m(),
            scenario.n,
            scenario.epsilon(),
        ));
    }
    Ok(report)
}

/// Largest `ε′` over `trials` noisy belief draws; draw `t` uses
/// `substream(config.seed, BELIEF, t)`, the same beliefs `f2_check` samples.
pub fn max_epsilon_prime(
    trust: &TrustVector,
    n: usize,
    epsilon: f64,
    model: NoiseModel,
    trials: usize,
    config: &Config,
) -> Result<f64> {
    let gains = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(config.seed, purpose::BELIEF, t as u64);
            let belief = model.sample(trust, epsilon, &mut rng);
            let scenario = GameScenario::noisy(trust.clone(), belief, n)?;
            Ok(measure_epsilon_prime(&scenario, config)?.epsilon_prime)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(gains.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Uniform point of the `k`-simplex.
pub fn random_simplex<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|x| x / sum).collect()
}

/// Outcome of one fresh-strategy draw in a hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyDraw {
    pub rho: Vec<f64>,
    /// `‖ρ − N(R)‖∞`.
    pub linf_error: f64,
    /// Largest best-response gain among the perfect players.
    pub max_gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyReport {
    pub k: usize,
    pub draws: Vec<HierarchyDraw>,
    /// Largest L∞ distance between any draw's `ρ` and the first draw's.
    pub decode_spread: f64,
    /// Largest minus smallest `max_gain` across draws.
    pub gain_spread: f64,
}

/// Decodes and measures perfect players' gains under `draws` random fresh
/// strategies; draw `d` uses `substream(config.seed, FRESH, d)`.
pub fn hierarchy_invariance(
    trust: &TrustVector,
    n: usize,
    k: usize,
    draws: usize,
    config: &Config,
) -> Result<HierarchyReport> {
    if draws == 0 {
        return Err(Error::InvalidInput(
            "need at least one fresh-strategy draw".into(),
        ));
    }
    let base = GameScenario::hierarchy(trust.clone(), n, k)?;
    let target = trust.normalized();
    let results = (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = substream(config.seed, purpose::FRESH, d as u64);
            let fresh = (0..n - k).map(|_| random_simplex(k, &mut rng)).collect();
            let scenario = base.clone().with_fresh_strategies(fresh)?;
            let report = measure_epsilon_prime(&scenario, config)?;
            let rho = crate::decoder::decode(&report.profile, config, None)?.rho;
            Ok(HierarchyDraw {
                linf_error: linf(rho.as_slice(), &target),
                rho: rho.as_slice().to_vec(),
                max_gain: report.epsilon_prime,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let decode_spread = results
        .iter()
        .map(|d| linf(&d.rho, &results[0].rho))
        .fold(0.0, f64::max);
    let (lo, hi) = results
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
            (lo.min(d.max_gain), hi.max(d.max_gain))
        });
    Ok(HierarchyReport {
        k,
        draws: results,
        decode_spread,
        gain_spread: hi - lo,
    })
}
