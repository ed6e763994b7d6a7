//! TRep games: strategy profiles, nature's coin flips and the
//! contribution-based utilities.

use rand::Rng;

use crate::error::{Error, Result};
use crate::pagerank::{contribution_matrix, ContributionMatrix};
use crate::repgraph::{Config, RepGraph, TrustVector};

const STRATEGY_SUM_TOL: f64 = 1e-12;

/// A player's belief about nature together with the noise guarantee it
/// was drawn under (`|t_j − R_j| ≤ epsilon` except with probability `p`).
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefVector {
    pub t: Vec<f64>,
    pub epsilon: f64,
    pub p: f64,
}

impl BeliefVector {
    pub fn new(t: Vec<f64>, epsilon: f64, p: f64) -> Result<Self> {
        if t.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidInput(
                "belief entries must lie in [0,1]".into(),
            ));
        }
        if !(epsilon >= 0.0) || !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(
                "epsilon must be >= 0 and p in [0,1]".into(),
            ));
        }
        Ok(BeliefVector { t, epsilon, p })
    }

    /// The exact belief `t = R`.
    pub fn perfect(trust: &TrustVector) -> Self {
        BeliefVector {
            t: trust.as_slice().to_vec(),
            epsilon: 0.0,
            p: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// `N(t)`; `None` for the zero vector.
    pub fn normalized(&self) -> Option<Vec<f64>> {
        let s: f64 = self.t.iter().sum();
        (s > 0.0).then(|| self.t.iter().map(|x| x / s).collect())
    }
}

/// One mixed strategy per player over the `m + n` actions: `0..m` endorse a
/// server, `m + k` endorses player `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile {
    m: usize,
    strategies: Vec<Vec<f64>>,
}

impl StrategyProfile {
    pub fn new(m: usize, strategies: Vec<Vec<f64>>) -> Result<Self> {
        let n = strategies.len();
        for (i, s) in strategies.iter().enumerate() {
            if s.len() != m + n {
                return Err(Error::Dimension(format!(
                    "strategy {} has {} actions, expected {}",
                    i + 1,
                    s.len(),
                    m + n
                )));
            }
            if s.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "strategy {} has a negative or non-finite entry",
                    i + 1
                )));
            }
            let sum: f64 = s.iter().sum();
            if (sum - 1.0).abs() > STRATEGY_SUM_TOL {
                return Err(Error::InvalidInput(format!(
                    "strategy {} sums to {sum}",
                    i + 1
                )));
            }
        }
        Ok(StrategyProfile { m, strategies })
    }

    /// Every one of `n` players plays `servers` (a distribution over servers).
    pub fn symmetric(servers: &[f64], n: usize) -> Result<Self> {
        let m = servers.len();
        let mut s = servers.to_vec();
        s.resize(m + n, 0.0);
        Self::new(m, vec![s; n])
    }

    /// Reads a profile back from a graph's rows.
    pub fn from_graph(graph: &RepGraph) -> Result<Self> {
        Self::new(graph.m(), graph.rows().to_vec())
    }

    pub fn n(&self) -> usize {
        self.strategies.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn strategies(&self) -> &[Vec<f64>] {
        &self.strategies
    }

    pub fn strategy(&self, i: usize) -> &[f64] {
        &self.strategies[i]
    }

    pub fn server_part(&self, i: usize) -> &[f64] {
        &self.strategies[i][..self.m]
    }

    /// `s^(-i)_j`: everyone else's probability on server `j`.
    pub fn opponents_server_mass(&self, i: usize) -> Vec<f64> {
        let mut acc = vec![0.0; self.m];
        for (k, s) in self.strategies.iter().enumerate() {
            if k == i {
                continue;
            }
            for (a, x) in acc.iter_mut().zip(&s[..self.m]) {
                *a += x;
            }
        }
        acc
    }

    /// True when no player endorses another player.
    pub fn is_bipartite(&self) -> bool {
        self.strategies
            .iter()
            .all(|s| s[self.m..].iter().all(|&x| x == 0.0))
    }

    /// Copy with player `i`'s strategy replaced.
    pub fn with_strategy(&self, i: usize, strategy: Vec<f64>) -> Result<Self> {
        let mut strategies = self.strategies.clone();
        strategies[i] = strategy;
        Self::new(self.m, strategies)
    }

    pub fn to_graph(&self) -> Result<RepGraph> {
        RepGraph::from_strategies(self, self.m, self.n())
    }
}

/// One draw of nature: `h[j]` is true when server `j` behaved correctly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NatureOutcome(pub Vec<bool>);

impl NatureOutcome {
    pub fn all(m: usize, value: bool) -> Self {
        NatureOutcome(vec![value; m])
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn count_correct(&self) -> usize {
        self.0.iter().filter(|&&h| h).count()
    }
}

/// A TRep game: players' types, nature's private state and the numerical
/// configuration.
#[derive(Debug, Clone)]
pub struct TRepGame {
    pub n: usize,
    pub m: usize,
    pub type_profile: Vec<BeliefVector>,
    pub trust: TrustVector,
    pub config: Config,
}

impl TRepGame {
    pub fn new(
        trust: TrustVector,
        type_profile: Vec<BeliefVector>,
        config: Config,
    ) -> Result<Self> {
        let (n, m) = (type_profile.len(), trust.len());
        if n < 2 || m < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 players and 2 servers, got n={n}, m={m}"
            )));
        }
        if type_profile.iter().any(|b| b.len() != m) {
            return Err(Error::Dimension(
                "every belief must have one entry per server".into(),
            ));
        }
        config.validate()?;
        Ok(TRepGame {
            n,
            m,
            type_profile,
            trust,
            config,
        })
    }

    /// Every player knows `R` exactly.
    pub fn perfect(trust: TrustVector, n: usize, config: Config) -> Result<Self> {
        let b = BeliefVector::perfect(&trust);
        Self::new(trust, vec![b; n], config)
    }
}

/// Independent Bernoulli(`R_j`) draws.
pub fn sample_nature<R: Rng + ?Sized>(trust: &TrustVector, rng: &mut R) -> NatureOutcome {
    NatureOutcome(
        trust
            .as_slice()
            .iter()
            .map(|&r| rng.random::<f64>() < r)
            .collect(),
    )
}

/// `u_i = Σ_{j: h_j} ω[i][j]`.
pub fn utilities_from_contributions(cm: &ContributionMatrix, outcome: &NatureOutcome) -> Vec<f64> {
    cm.omega
        .iter()
        .map(|row| {
            row.iter()
                .zip(outcome.as_slice())
                .filter(|(_, &h)| h)
                .map(|(w, _)| w)
                .sum()
        })
        .collect()
}

/// `u_i = Σ_j R_j ω[i][j]`.
pub fn expected_from_contributions(cm: &ContributionMatrix, trust: &TrustVector) -> Vec<f64> {
    cm.omega
        .iter()
        .map(|row| row.iter().zip(trust.as_slice()).map(|(w, r)| w * r).sum())
        .collect()
}

pub fn realized_utilities(
    profile: &StrategyProfile,
    outcome: &NatureOutcome,
    config: &Config,
) -> Result<Vec<f64>> {
    if outcome.0.len() != profile.m() {
        return Err(Error::Dimension(
            "outcome length differs from server count".into(),
        ));
    }
    let cm = contribution_matrix(&profile.to_graph()?, config)?;
    Ok(utilities_from_contributions(&cm, outcome))
}

pub fn expected_utilities(
    profile: &StrategyProfile,
    trust: &TrustVector,
    config: &Config,
) -> Result<Vec<f64>> {
    if trust.len() != profile.m() {
        return Err(Error::Dimension(
            "trust length differs from server count".into(),
        ));
    }
    let cm = contribution_matrix(&profile.to_graph()?, config)?;
    Ok(expected_from_contributions(&cm, trust))
}

/// Expected utility in a bipartite profile:
/// `Σ_j R_j · x_j / (x_j + s^(-i)_j)`, with `0/0 = 0`.
pub fn bipartite_utility(own: &[f64], opponents: &[f64], trust: &[f64]) -> f64 {
    own.iter()
        .zip(opponents)
        .zip(trust)
        .map(|((&x, &c), &r)| if x > 0.0 { r * x / (x + c) } else { 0.0 })
        .sum()
}
