//! Designated PageRank and its personalized/contribution variants.
//!
//! Chains are dense `(n+m)×(n+m)` matrices with the users in rows/columns
//! `0..n` and the servers in `n..n+m`. Restart mass only ever lands on users,
//! and servers (which have no out-edges) jump according to the same restart
//! distribution. With a uniform restart this is the Designated PageRank
//! chain; with a point-mass restart it is the personalized chain of one user.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::repgraph::{Config, RepGraph};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Largest chain the dense elimination oracle accepts.
pub const ORACLE_MAX_STATES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n_users: usize,
    m_servers: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    /// Wraps an arbitrary row-stochastic matrix. All states count as users.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        let mut data = Vec::with_capacity(size * size);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(Error::Dimension(format!(
                    "row {} has {} entries, expected {size}",
                    i + 1,
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        let t = TransitionMatrix {
            n_users: size,
            m_servers: 0,
            data,
        };
        t.check_stochastic()?;
        Ok(t)
    }

    /// The plain random walk `W_out^{-1} M` of a weighted adjacency matrix.
    pub fn row_normalized(adjacency: &[Vec<f64>]) -> Result<Self> {
        let rows = adjacency
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let out: f64 = row.iter().sum();
                if !(out > 0.0) || row.iter().any(|w| *w < 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "vertex {} is dangling or has negative weights",
                        i + 1
                    )));
                }
                Ok(row.iter().map(|w| w / out).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Self::from_rows(&rows)
    }

    /// Standard weighted PageRank chain `(1-α) W_out^{-1} M + (α/N) 1`.
    pub fn weighted_pagerank(adjacency: &[Vec<f64>], alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidConfig("alpha out of (0,1)".into()));
        }
        let walk = Self::row_normalized(adjacency)?;
        let size = walk.size();
        let teleport = alpha / size as f64;
        let data = walk
            .data
            .iter()
            .map(|p| (1.0 - alpha) * p + teleport)
            .collect();
        Ok(TransitionMatrix {
            n_users: size,
            m_servers: 0,
            data,
        })
    }

    pub fn size(&self) -> usize {
        self.n_users + self.m_servers
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn m_servers(&self) -> usize {
        self.m_servers
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.size() + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        let s = self.size();
        &self.data[from * s..(from + 1) * s]
    }

    /// Column index of user `i`.
    pub fn user(&self, i: usize) -> usize {
        i
    }

    /// Column index of server `j`.
    pub fn server(&self, j: usize) -> usize {
        self.n_users + j
    }

    fn check_stochastic(&self) -> Result<()> {
        for i in 0..self.size() {
            let row = self.row(i);
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "row {} has a negative or non-finite entry",
                    i + 1
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidInput(format!("row {} sums to {s}", i + 1)));
            }
        }
        Ok(())
    }

    /// One step `π ↦ πM`.
    fn step(&self, pi: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (i, &p) in pi.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, &t) in out.iter_mut().zip(self.row(i)) {
                *o += p * t;
            }
        }
    }
}

/// Stationary distribution of a chain plus convergence diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub pi: Vec<f64>,
    pub iterations: usize,
    /// Final L1 step size for power iteration, `‖πM − π‖₁` for the oracle.
    pub residual: f64,
    n_users: usize,
}

impl StationaryDistribution {
    pub fn users(&self) -> &[f64] {
        &self.pi[..self.n_users]
    }

    pub fn servers(&self) -> &[f64] {
        &self.pi[self.n_users..]
    }
}

/// Reputation scores `ρ`, L1-normalized over servers.
#[derive(Debug, Clone, PartialEq)]
pub struct ReputationScores(Vec<f64>);

impl ReputationScores {
    pub fn new(rho: Vec<f64>) -> Result<Self> {
        if rho.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidInput(
                "scores must be finite and nonnegative".into(),
            ));
        }
        let s: f64 = rho.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "scores sum to {s}, expected 1"
            )));
        }
        Ok(ReputationScores(rho))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Restricted relative contributions of users to servers.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionMatrix {
    /// `omega[i][j]`: share of user `i` in server `j`'s contribution column.
    pub omega: Vec<Vec<f64>>,
    /// `raw[i][j] = π⁻¹_{server j}(v_i) = π_{v_i}(server j)`.
    pub raw: Vec<Vec<f64>>,
}

impl ContributionMatrix {
    pub fn n(&self) -> usize {
        self.omega.len()
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        self.omega.iter().map(|row| row[j]).sum()
    }
}

/// Restart target for a personalized run.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    User(usize),
    /// Distribution over users (length `n`).
    Distribution(Vec<f64>),
}

/// Chain that restarts (and leaves servers) according to `restart`, a
/// distribution over users.
pub fn build_chain(graph: &RepGraph, alpha: f64, restart: &[f64]) -> Result<TransitionMatrix> {
    let report = graph.validate();
    if !report.is_valid() {
        return Err(Error::InvalidGraph(report.to_string()));
    }
    let (n, m) = (graph.n(), graph.m());
    if restart.len() != n {
        return Err(Error::Dimension(format!(
            "restart vector has {} entries, expected {n}",
            restart.len()
        )));
    }
    let size = n + m;
    let mut data = vec![0.0; size * size];
    for i in 0..n {
        let row = &mut data[i * size..(i + 1) * size];
        for (k, &w) in graph.user_weights(i).iter().enumerate() {
            row[k] = (1.0 - alpha) * w + alpha * restart[k];
        }
        for (j, &w) in graph.server_weights(i).iter().enumerate() {
            row[n + j] = (1.0 - alpha) * w;
        }
    }
    for j in 0..m {
        let row = &mut data[(n + j) * size..(n + j + 1) * size];
        row[..n].copy_from_slice(restart);
    }
    Ok(TransitionMatrix {
        n_users: n,
        m_servers: m,
        data,
    })
}

/// The Designated PageRank chain: uniform restart over users, servers
/// jump uniformly to users.
pub fn build_designated_chain(graph: &RepGraph, config: &Config) -> Result<TransitionMatrix> {
    config.validate()?;
    let n = graph.n();
    build_chain(graph, config.alpha, &vec![1.0 / n as f64; n])
}

/// Power iteration from the uniform distribution over users.
pub fn stationary(chain: &TransitionMatrix, config: &Config) -> Result<StationaryDistribution> {
    config.validate()?;
    let size = chain.size();
    let mut pi = vec![0.0; size];
    let seeds = chain.n_users().max(1);
    pi[..seeds].iter_mut().for_each(|p| *p = 1.0 / seeds as f64);
    let mut next = vec![0.0; size];
    let mut residual = f64::INFINITY;
    for it in 1..=config.max_iters {
        chain.step(&pi, &mut next);
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        residual = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if residual <= config.tol {
            return Ok(StationaryDistribution {
                pi,
                iterations: it,
                residual,
                n_users: chain.n_users(),
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: config.max_iters,
        residual,
    })
}

/// Exact stationary distribution by Gaussian elimination on
/// `(Mᵀ − I)π = 0` with one equation replaced by `Σπ = 1`.
pub fn stationary_oracle(chain: &TransitionMatrix) -> Result<StationaryDistribution> {
    let size = chain.size();
    if size > ORACLE_MAX_STATES {
        return Err(Error::InvalidInput(format!(
            "oracle accepts at most {ORACLE_MAX_STATES} states, got {size}"
        )));
    }
    // a[r][c] = M[c][r] - δ; last equation is normalization.
    let mut a = vec![vec![0.0; size + 1]; size];
    for (r, eq) in a.iter_mut().enumerate().take(size - 1) {
        for c in 0..size {
            eq[c] = chain.get(c, r) - if r == c { 1.0 } else { 0.0 };
        }
    }
    a[size - 1][..size].iter_mut().for_each(|x| *x = 1.0);
    a[size - 1][size] = 1.0;

    for col in 0..size {
        let pivot_row = (col..size)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("non-empty range");
        let pivot = a[pivot_row][col];
        if pivot.abs() < 1e-13 {
            return Err(Error::Singular { column: col, pivot });
        }
        a.swap(col, pivot_row);
        for r in 0..size {
            if r == col {
                continue;
            }
            let factor = a[r][col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..=size {
                a[r][c] -= factor * a[col][c];
            }
        }
    }
    let mut pi: Vec<f64> = (0..size).map(|i| (a[i][size] / a[i][i]).max(0.0)).collect();
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);

    let mut step = vec![0.0; size];
    chain.step(&pi, &mut step);
    let residual = pi.iter().zip(&step).map(|(a, b)| (a - b).abs()).sum();
    Ok(StationaryDistribution {
        pi,
        iterations: 0,
        residual,
        n_users: chain.n_users(),
    })
}

/// `ρ_j ∝ Σ_i Pr[v_i → server j] · π(v_i)`. The `(1-α)` factor cancels.
pub fn reputation_from_ranks(graph: &RepGraph, user_ranks: &[f64]) -> Result<ReputationScores> {
    let mut num = vec![0.0; graph.m()];
    for (i, &p) in user_ranks.iter().enumerate() {
        for (acc, &w) in num.iter_mut().zip(graph.server_weights(i)) {
            *acc += w * p;
        }
    }
    let total: f64 = num.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AllServersUntrusted);
    }
    num.iter_mut().for_each(|x| *x /= total);
    Ok(ReputationScores(num))
}

pub fn reputation_scores(graph: &RepGraph, config: &Config) -> Result<ReputationScores> {
    if graph.server_in_weight().iter().all(|&w| w == 0.0) {
        return Err(Error::AllServersUntrusted);
    }
    let chain = build_designated_chain(graph, config)?;
    let pi = stationary(&chain, config)?;
    reputation_from_ranks(graph, pi.users())
}

/// Personalized PageRank restarting at `source`.
pub fn personalized(
    graph: &RepGraph,
    config: &Config,
    source: &Source,
) -> Result<StationaryDistribution> {
    config.validate()?;
    let n = graph.n();
    let restart = match source {
        Source::User(i) => {
            if *i >= n {
                return Err(Error::InvalidInput(format!(
                    "source user {} out of range",
                    i + 1
                )));
            }
            let mut e = vec![0.0; n];
            e[*i] = 1.0;
            e
        }
        Source::Distribution(d) => {
            let s: f64 = d.iter().sum();
            if d.len() != n || d.iter().any(|x| *x < 0.0) || (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidInput(
                    "source must be a distribution over users".into(),
                ));
            }
            d.clone()
        }
    };
    let chain = build_chain(graph, config.alpha, &restart)?;
    stationary(&chain, config)
}

/// Personalized distributions of every user, in user order.
pub fn personalized_all(graph: &RepGraph, config: &Config) -> Result<Vec<StationaryDistribution>> {
    (0..graph.n())
        .into_par_iter()
        .map(|i| personalized(graph, config, &Source::User(i)))
        .collect()
}

/// Contribution matrix from the personalized runs of every user.
pub fn contribution_matrix(graph: &RepGraph, config: &Config) -> Result<ContributionMatrix> {
    let runs = personalized_all(graph, config)?;
    Ok(contributions_from_runs(&runs, graph.m()))
}

pub(crate) fn contributions_from_runs(
    runs: &[StationaryDistribution],
    m: usize,
) -> ContributionMatrix {
    let raw: Vec<Vec<f64>> = runs.iter().map(|r| r.servers().to_vec()).collect();
    let mut omega = vec![vec![0.0; m]; raw.len()];
    for j in 0..m {
        let col: f64 = raw.iter().map(|row| row[j]).sum();
        if col > 0.0 {
            for (o, r) in omega.iter_mut().zip(&raw) {
                o[j] = r[j] / col;
            }
        }
    }
    ContributionMatrix { omega, raw }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(alpha: f64) -> Config {
        Config::with_alpha(alpha).unwrap()
    }

    fn two_users_one_server_plus() -> RepGraph {
        // m must be >= 2; the second server is never endorsed.
        RepGraph::new(
            2,
            2,
            vec![vec![1.0, 0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0]],
            None,
        )
        .unwrap()
    }

    #[test]
    fn designated_chain_entries() {
        let g = two_users_one_server_plus();
        let t = build_designated_chain(&g, &cfg(0.2)).unwrap();
        let (s, u1, u2) = (t.server(0), t.user(0), t.user(1));
        for u in [u1, u2] {
            assert!((t.get(u, s) - 0.8).abs() < 1e-15);
            assert!((t.get(u, u1) - 0.1).abs() < 1e-15);
            assert!((t.get(u, u2) - 0.1).abs() < 1e-15);
            assert_eq!(t.get(u, t.server(1)), 0.0);
        }
        assert_eq!(t.get(s, u1), 0.5);
        assert_eq!(t.get(s, u2), 0.5);
        assert_eq!(t.get(s, t.server(1)), 0.0);
        t.check_stochastic().unwrap();
    }

    #[test]
    fn user_to_user_edge() {
        let g = RepGraph::new(
            3,
            2,
            vec![
                vec![0.0, 0.0, 0.0, 1.0, 0.0],
                vec![0.5, 0.5, 0.0, 0.0, 0.0],
                vec![0.5, 0.5, 0.0, 0.0, 0.0],
            ],
            None,
        )
        .unwrap();
        let a = 0.15;
        let t = build_designated_chain(&g, &cfg(a)).unwrap();
        assert!((t.get(0, 1) - ((1.0 - a) + a / 3.0)).abs() < 1e-15);
        t.check_stochastic().unwrap();
    }

    #[test]
    fn two_state_flip_chain() {
        let t = TransitionMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let o = stationary_oracle(&t).unwrap();
        assert_eq!(o.pi, vec![0.5, 0.5]);
        let p = stationary(&t, &Config::default()).unwrap();
        assert_eq!(p.pi, vec![0.5, 0.5]);
    }

    #[test]
    fn untrusted_server_has_zero_mass() {
        let g = two_users_one_server_plus();
        let c = Config::default();
        let pi = stationary(&build_designated_chain(&g, &c).unwrap(), &c).unwrap();
        assert!(pi.servers()[1] <= c.tol);
        let rho = reputation_scores(&g, &c).unwrap();
        assert_eq!(rho.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn symmetric_users_get_equal_rank() {
        let g = RepGraph::new(3, 2, vec![vec![0.25, 0.75, 0.0, 0.0, 0.0]; 3], None).unwrap();
        let c = Config::default();
        let pi = stationary(&build_designated_chain(&g, &c).unwrap(), &c).unwrap();
        let u = pi.users();
        assert!((u[0] - u[1]).abs() < 1e-14 && (u[1] - u[2]).abs() < 1e-14);
    }

    #[test]
    fn all_servers_untrusted() {
        let g = RepGraph::new(
            2,
            2,
            vec![vec![0.0, 0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0, 0.0]],
            None,
        )
        .unwrap();
        assert!(matches!(
            reputation_scores(&g, &Config::default()),
            Err(Error::AllServersUntrusted)
        ));
    }

    #[test]
    fn split_endorsement_symmetry() {
        let g = RepGraph::new(
            2,
            2,
            vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]],
            None,
        )
        .unwrap();
        let rho = reputation_scores(&g, &Config::default()).unwrap();
        assert!((rho.as_slice()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn non_convergence_reports_residual() {
        let g = RepGraph::new(2, 2, vec![vec![0.3, 0.2, 0.0, 0.5]; 2], None).unwrap();
        let c = Config {
            max_iters: 1,
            ..Config::default()
        };
        let err = stationary(&build_designated_chain(&g, &c).unwrap(), &c).unwrap_err();
        match err {
            Error::NonConvergence {
                iterations,
                residual,
            } => {
                assert_eq!(iterations, 1);
                assert!(residual > c.tol);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn oracle_size_limit() {
        let big = vec![vec![1.0 / 201.0; 201]; 201];
        let t = TransitionMatrix::from_rows(&big);
        // 201 copies of 1/201 may not sum to exactly 1; either way the oracle refuses.
        if let Ok(t) = t {
            assert!(matches!(stationary_oracle(&t), Err(Error::InvalidInput(_))));
        }
    }

    #[test]
    fn indirect_endorser_shares_column() {
        let g = RepGraph::new(
            2,
            2,
            vec![vec![0.5, 0.5, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]],
            None,
        )
        .unwrap();
        let cm = contribution_matrix(&g, &Config::default()).unwrap();
        // User 2 reaches the servers only through user 1. Per-server mass
        // from user 1 is 0.425/1.85; from user 2 it is 0.85·0.425/2.5725.
        let direct = 0.425 / 1.85;
        let indirect = 0.36125 / 2.5725;
        let share = direct / (direct + indirect);
        for j in 0..2 {
            assert!((cm.omega[0][j] - share).abs() < 1e-12);
            assert!((cm.omega[1][j] - (1.0 - share)).abs() < 1e-12);
        }
    }

    #[test]
    fn contribution_rows_are_distributions() {
        let g = RepGraph::new(
            3,
            2,
            vec![
                vec![0.2, 0.3, 0.0, 0.5, 0.0],
                vec![0.6, 0.1, 0.1, 0.0, 0.2],
                vec![0.0, 0.5, 0.25, 0.25, 0.0],
            ],
            None,
        )
        .unwrap();
        let c = Config::default();
        for run in personalized_all(&g, &c).unwrap() {
            assert!((run.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let cm = contribution_matrix(&g, &c).unwrap();
        for j in 0..2 {
            assert!((cm.column_sum(j) - 1.0).abs() < 1e-12);
        }
    }
}
