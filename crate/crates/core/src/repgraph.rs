//! TRep graphs: users endorsing servers (and each other) with probability
//! weights, plus the `trep v1` scenario file format.
//!
//! Targets of a user's row are laid out the way actions are numbered in the
//! game: positions `0..m` are servers, positions `m..m+n` are users. Files
//! use 1-based indices; everything past the parser is 0-based.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::game::StrategyProfile;

/// Tolerance on the sum of a user's outgoing weights.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Rows whose sum misses 1 by less than this are renormalized by the loader.
pub const RENORMALIZE_TOL: f64 = 1e-9;

/// Nature's private state: `r[j]` is the probability server `j` behaves correctly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustVector(Vec<f64>);

impl TrustVector {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if let Some(v) = trust_violations(&r).into_iter().next() {
            return Err(Error::InvalidInput(v.to_string()));
        }
        Ok(TrustVector(r))
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

    pub fn l1(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `N(R)`.
    pub fn normalized(&self) -> Vec<f64> {
        let s = self.l1();
        self.0.iter().map(|r| r / s).collect()
    }
}

fn trust_violations(r: &[f64]) -> Vec<Violation> {
    let mut out = Vec::new();
    for (j, &v) in r.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            out.push(Violation::TrustOutOfRange {
                server: j,
                value: v,
            });
        }
    }
    if out.is_empty() && !r.iter().any(|&v| v > 0.0) {
        out.push(Violation::TrustAllZero);
    }
    out
}

/// Numerical parameters shared by every PageRank computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Config {
    /// Restart probability.
    pub alpha: f64,
    /// L1 step size at which power iteration stops.
    pub tol: f64,
    pub max_iters: usize,
    /// Master seed for all randomness.
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            alpha: 0.15,
            tol: 1e-12,
            max_iters: 100_000,
            seed: 0,
        }
    }
}

impl Config {
    pub fn with_alpha(alpha: f64) -> Result<Self> {
        let c = Config {
            alpha,
            ..Config::default()
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig("alpha out of (0,1)".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// A single broken invariant, located by 0-based user/target/server index.
/// `Display` reports indices 1-based, as in the file format.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewUsers(usize),
    TooFewServers(usize),
    RowCount {
        expected: usize,
        found: usize,
    },
    RowLength {
        user: usize,
        expected: usize,
        found: usize,
    },
    NonFinite {
        user: usize,
        target: usize,
    },
    NegativeWeight {
        user: usize,
        target: usize,
        weight: f64,
    },
    ZeroRow {
        user: usize,
    },
    RowSum {
        user: usize,
        sum: f64,
    },
    TrustLength {
        expected: usize,
        found: usize,
    },
    TrustOutOfRange {
        server: usize,
        value: f64,
    },
    TrustAllZero,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::TooFewUsers(n) => write!(f, "need at least 2 users, got {n}"),
            Violation::TooFewServers(m) => write!(f, "need at least 2 servers, got {m}"),
            Violation::RowCount { expected, found } => {
                write!(f, "expected {expected} user rows, found {found}")
            }
            Violation::RowLength {
                user,
                expected,
                found,
            } => write!(
                f,
                "row {} has {found} entries, expected {expected}",
                user + 1
            ),
            Violation::NonFinite { user, target } => {
                write!(
                    f,
                    "non-finite weight on edge {} -> {}",
                    user + 1,
                    target + 1
                )
            }
            Violation::NegativeWeight {
                user,
                target,
                weight,
            } => write!(
                f,
                "negative weight {weight} on edge {} -> {}",
                user + 1,
                target + 1
            ),
            Violation::ZeroRow { user } => {
                write!(
                    f,
                    "user {} has no outgoing endorsement (dangling)",
                    user + 1
                )
            }
            Violation::RowSum { user, sum } => write!(f, "row {} sums to {sum}", user + 1),
            Violation::TrustLength { expected, found } => {
                write!(f, "trust has {found} entries, expected {expected}")
            }
            Violation::TrustOutOfRange { server, value } => {
                write!(
                    f,
                    "trust of server {} is {value}, outside [0,1]",
                    server + 1
                )
            }
            Violation::TrustAllZero => write!(f, "every trust entry is zero"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&msgs.join("; "))
    }
}

/// Users, servers and weighted endorsements. Servers are sinks: only users
/// own rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RepGraph {
    n: usize,
    m: usize,
    rows: Vec<Vec<f64>>,
    trust: Option<TrustVector>,
}

impl RepGraph {
    /// Builds a graph and rejects it if any invariant fails.
    pub fn new(n: usize, m: usize, rows: Vec<Vec<f64>>, trust: Option<Vec<f64>>) -> Result<Self> {
        let g = Self::unvalidated(n, m, rows, trust);
        let report = g.validate();
        if !report.is_valid() {
            return Err(Error::InvalidGraph(report.to_string()));
        }
        Ok(g)
    }

    /// Builds a graph without checking it; pair with [`RepGraph::validate`].
    pub fn unvalidated(n: usize, m: usize, rows: Vec<Vec<f64>>, trust: Option<Vec<f64>>) -> Self {
        RepGraph {
            n,
            m,
            rows,
            trust: trust.map(TrustVector),
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let (n, m) = (self.n, self.m);
        if n < 2 {
            violations.push(Violation::TooFewUsers(n));
        }
        if m < 2 {
            violations.push(Violation::TooFewServers(m));
        }
        if self.rows.len() != n {
            violations.push(Violation::RowCount {
                expected: n,
                found: self.rows.len(),
            });
        }
        for (user, row) in self.rows.iter().enumerate() {
            if row.len() != m + n {
                violations.push(Violation::RowLength {
                    user,
                    expected: m + n,
                    found: row.len(),
                });
                continue;
            }
            let mut bad = false;
            for (target, &w) in row.iter().enumerate() {
                if !w.is_finite() {
                    violations.push(Violation::NonFinite { user, target });
                    bad = true;
                } else if w < 0.0 {
                    violations.push(Violation::NegativeWeight {
                        user,
                        target,
                        weight: w,
                    });
                    bad = true;
                }
            }
            if bad {
                continue;
            }
            let sum: f64 = row.iter().sum();
            if sum == 0.0 {
                violations.push(Violation::ZeroRow { user });
            } else if (sum - 1.0).abs() > ROW_SUM_TOL {
                violations.push(Violation::RowSum { user, sum });
            }
        }
        if let Some(t) = &self.trust {
            if t.len() != m {
                violations.push(Violation::TrustLength {
                    expected: m,
                    found: t.len(),
                });
            }
            violations.extend(trust_violations(t.as_slice()));
        }
        ValidationReport { violations }
    }

    /// The graph induced by a strategy profile: user `i`'s row is player
    /// `i`'s mixed strategy.
    pub fn from_strategies(profile: &StrategyProfile, m: usize, n: usize) -> Result<Self> {
        if profile.n() != n || profile.m() != m {
            return Err(Error::Dimension(format!(
                "profile is {} players over {} servers, expected {n} over {m}",
                profile.n(),
                profile.m()
            )));
        }
        Self::new(n, m, profile.strategies().to_vec(), None)
    }

    pub fn with_trust(mut self, trust: TrustVector) -> Result<Self> {
        if trust.len() != self.m {
            return Err(Error::Dimension(format!(
                "trust has {} entries, graph has {} servers",
                trust.len(),
                self.m
            )));
        }
        self.trust = Some(trust);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Full outgoing row of user `i` (servers first, then users).
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// `Pr[v_i -> server j]` for every server.
    pub fn server_weights(&self, i: usize) -> &[f64] {
        &self.rows[i][..self.m]
    }

    /// `Pr[v_i -> v_k]` for every user `k`.
    pub fn user_weights(&self, i: usize) -> &[f64] {
        &self.rows[i][self.m..]
    }

    pub fn trust(&self) -> Option<&TrustVector> {
        self.trust.as_ref()
    }

    /// True when no user endorses another user.
    pub fn is_bipartite(&self) -> bool {
        (0..self.n).all(|i| self.user_weights(i).iter().all(|&w| w == 0.0))
    }

    /// Total incoming user weight per server.
    pub fn server_in_weight(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.m];
        for i in 0..self.n {
            for (a, w) in acc.iter_mut().zip(self.server_weights(i)) {
                *a += w;
            }
        }
        acc
    }
}

/// A parsed scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub graph: RepGraph,
    pub config: Config,
}

pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
    parse(&read_text(path.as_ref())?)
}

/// Reads a file, naming it in any I/O error.
pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

pub fn save(graph: &RepGraph, config: &Config, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render(graph, config))?;
    Ok(())
}

/// Canonical text form. Weights are written in shortest round-trip form so
/// `parse(render(g))` reproduces every bit.
pub fn render(graph: &RepGraph, config: &Config) -> String {
    let mut out = String::from("trep v1\n");
    out.push_str(&format!("users {}\n", graph.n));
    out.push_str(&format!("servers {}\n", graph.m));
    out.push_str(&format!("alpha {}\n", config.alpha));
    if let Some(t) = &graph.trust {
        out.push_str("trust");
        for r in t.as_slice() {
            out.push_str(&format!(" {r}"));
        }
        out.push('\n');
    }
    for (i, row) in graph.rows.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            if w != 0.0 {
                out.push_str(&format!("edge {} {} {w}\n", i + 1, j + 1));
            }
        }
    }
    out
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_field<T: std::str::FromStr>(line: usize, key: &str, tok: Option<&str>) -> Result<T> {
    let tok = tok.ok_or_else(|| perr(line, format!("`{key}` needs a value")))?;
    tok.parse()
        .map_err(|_| perr(line, format!("`{key}`: cannot parse `{tok}`")))
}

pub fn parse(text: &str) -> Result<Scenario> {
    let mut header_seen = false;
    let mut users: Option<(usize, usize)> = None;
    let mut servers: Option<(usize, usize)> = None;
    let mut alpha: Option<(usize, f64)> = None;
    let mut trust: Option<(usize, Vec<f64>)> = None;
    let mut edges: Vec<(usize, usize, usize, f64)> = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = content.split_whitespace();
        let Some(key) = toks.next() else { continue };
        if !header_seen {
            if key == "trep" && toks.next() == Some("v1") && toks.next().is_none() {
                header_seen = true;
                continue;
            }
            return Err(perr(lineno, "expected header `trep v1`"));
        }
        match key {
            "users" | "servers" => {
                let v: usize = parse_field(lineno, key, toks.next())?;
                let slot = if key == "users" {
                    &mut users
                } else {
                    &mut servers
                };
                if slot.is_some() {
                    return Err(perr(lineno, format!("duplicate `{key}`")));
                }
                *slot = Some((lineno, v));
            }
            "alpha" => {
                let v: f64 = parse_field(lineno, key, toks.next())?;
                if alpha.is_some() {
                    return Err(perr(lineno, "duplicate `alpha`"));
                }
                if !(v > 0.0 && v < 1.0) {
                    return Err(perr(lineno, "alpha out of (0,1)"));
                }
                alpha = Some((lineno, v));
            }
            "trust" => {
                if trust.is_some() {
                    return Err(perr(lineno, "duplicate `trust`"));
                }
                let vals = toks
                    .by_ref()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| perr(lineno, format!("`trust`: cannot parse `{t}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                trust = Some((lineno, vals));
            }
            "edge" => {
                let i: usize = parse_field(lineno, "edge", toks.next())?;
                let j: usize = parse_field(lineno, "edge", toks.next())?;
                let w: f64 = parse_field(lineno, "edge", toks.next())?;
                edges.push((lineno, i, j, w));
            }
            other => return Err(perr(lineno, format!("unknown key `{other}`"))),
        }
        if key != "trust" && toks.next().is_some() {
            return Err(perr(lineno, format!("trailing tokens after `{key}`")));
        }
    }

    if !header_seen {
        return Err(perr(last_line.max(1), "missing header `trep v1`"));
    }
    let (_, n) = users.ok_or_else(|| perr(last_line, "missing `users`"))?;
    let (_, m) = servers.ok_or_else(|| perr(last_line, "missing `servers`"))?;
    let (_, alpha) = alpha.ok_or_else(|| perr(last_line, "missing `alpha`"))?;

    let mut rows = vec![vec![0.0; m + n]; n];
    let mut seen = vec![vec![false; m + n]; n];
    for &(line, i, j, w) in &edges {
        if i == 0 || i > n {
            return Err(perr(
                line,
                format!("edge source {i} is not a user (1..{n})"),
            ));
        }
        if j == 0 || j > m + n {
            return Err(perr(
                line,
                format!("edge target {j} out of range 1..{}", m + n),
            ));
        }
        if seen[i - 1][j - 1] {
            return Err(perr(line, format!("duplicate edge {i} {j}")));
        }
        seen[i - 1][j - 1] = true;
        rows[i - 1][j - 1] = w;
    }

    // Absorb decimal rounding; anything larger is left for validation to reject.
    for row in rows.iter_mut() {
        if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
            continue;
        }
        let sum: f64 = row.iter().sum();
        let dev = (sum - 1.0).abs();
        if dev > ROW_SUM_TOL && dev < RENORMALIZE_TOL {
            row.iter_mut().for_each(|w| *w /= sum);
        }
    }

    if let Some((line, t)) = &trust {
        if t.len() != m {
            return Err(perr(
                *line,
                format!("trust has {} entries, expected {m}", t.len()),
            ));
        }
        if let Some(v) = trust_violations(t).into_iter().next() {
            return Err(perr(*line, v.to_string()));
        }
    }

    let graph = RepGraph::new(n, m, rows, trust.map(|(_, t)| t))?;
    let config = Config {
        alpha,
        ..Config::default()
    };
    Ok(Scenario { graph, config })
}
