//! The PageRank decoder, the target functions it is measured against, and
//! the noisy-belief machinery used to check approximate decodability.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::{BeliefVector, StrategyProfile};
use crate::numfmt::g17;
use crate::pagerank::{self, ReputationScores};
use crate::repgraph::{Config, RepGraph, TrustVector};
use crate::rng::{purpose, substream};
use crate::{l1_normalize, linf};

/// Relative gap under which two scores count as tied.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub rho: ReputationScores,
    /// `ratio_matrix[i][j] = ρ_i / ρ_j`; `+∞` when `ρ_j = 0`.
    pub ratio_matrix: Vec<Vec<f64>>,
    pub inversions: Option<usize>,
    /// `‖ρ − N(R)‖∞`.
    pub linf_error: Option<f64>,
}

impl DecodeResult {
    fn build(rho: ReputationScores, trust: Option<&TrustVector>) -> Result<Self> {
        let r = rho.as_slice();
        let ratio_matrix = r
            .iter()
            .map(|a| {
                r.iter()
                    .map(|&b| if b > 0.0 { a / b } else { f64::INFINITY })
                    .collect()
            })
            .collect();
        let (inversions, linf_error) = match trust {
            Some(t) => {
                if t.len() != r.len() {
                    return Err(Error::Dimension(
                        "trust length differs from server count".into(),
                    ));
                }
                (
                    Some(count_inversions(&rho, t)),
                    Some(linf(r, &t.normalized())),
                )
            }
            None => (None, None),
        };
        Ok(DecodeResult {
            rho,
            ratio_matrix,
            inversions,
            linf_error,
        })
    }

    /// Per-server rows followed by a metrics block; metrics read `n/a`
    /// without ground truth.
    pub fn to_csv(&self, trust: Option<&TrustVector>) -> String {
        let mut out = String::new();
        match trust {
            Some(t) => {
                out.push_str("server_index,rho,trust\n");
                for (j, (r, t)) in self.rho.as_slice().iter().zip(t.as_slice()).enumerate() {
                    out.push_str(&format!("{},{},{}\n", j + 1, g17(*r), g17(*t)));
                }
            }
            None => {
                out.push_str("server_index,rho\n");
                for (j, r) in self.rho.as_slice().iter().enumerate() {
                    out.push_str(&format!("{},{}\n", j + 1, g17(*r)));
                }
            }
        }
        out.push_str("\nmetric,value\n");
        match self.inversions {
            Some(k) => out.push_str(&format!("inversions,{k}\n")),
            None => out.push_str("inversions,n/a\n"),
        }
        match self.linf_error {
            Some(e) => out.push_str(&format!("linf_error,{}\n", g17(e))),
            None => out.push_str("linf_error,n/a\n"),
        }
        out
    }
}

/// `D_PR`: reputation scores of the graph a profile induces.
pub fn decode(
    profile: &StrategyProfile,
    config: &Config,
    trust: Option<&TrustVector>,
) -> Result<DecodeResult> {
    decode_graph(&profile.to_graph()?, config, trust)
}

pub fn decode_graph(
    graph: &RepGraph,
    config: &Config,
    trust: Option<&TrustVector>,
) -> Result<DecodeResult> {
    let rho = pagerank::reputation_scores(graph, config)?;
    DecodeResult::build(rho, trust.or(graph.trust()))
}

/// `f₁ = N`, the L1 normalization.
pub fn f1(u: &[f64]) -> Result<Vec<f64>> {
    if u.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::InvalidInput("f1 needs nonnegative entries".into()));
    }
    l1_normalize(u).ok_or_else(|| Error::InvalidInput("f1 of the zero vector".into()))
}

/// Pairs ordered strictly by trust but oppositely by `rho`. Trust ties
/// never count; a score tie against a strict trust order counts as half an
/// inversion, and the half-count is rounded up.
pub fn count_inversions(rho: &ReputationScores, trust: &TrustVector) -> usize {
    let (r, t) = (rho.as_slice(), trust.as_slice());
    let mut full = 0;
    let mut ties: usize = 0;
    for i in 0..r.len() {
        for j in 0..r.len() {
            if t[i] <= t[j] {
                continue;
            }
            let scale = r[i].abs().max(r[j].abs());
            if (r[i] - r[j]).abs() <= TIE_TOL * scale {
                ties += 1;
            } else if r[i] < r[j] {
                full += 1;
            }
        }
    }
    full + ties.div_ceil(2)
}

/// Generators for noisy beliefs `R'_j = clamp(R_j + Z_j, 0, 1)` with
/// symmetric mean-zero `Z_j` and `|Z_j| ≤ ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseModel {
    /// Gaussian with σ = ε/2 truncated at ±2σ.
    TruncatedGaussian,
    /// `Z_j = ±ε` with equal probability.
    TwoPoint,
}

impl NoiseModel {
    /// Certified per-coordinate `Pr[|R'_j − R_j| > ε]`. Both models are
    /// supported on `[−ε, ε]`.
    pub fn tail_probability(&self) -> f64 {
        0.0
    }

    /// Rejects trust vectors where clamping would bias `E[R'_j]`.
    pub fn certify(&self, trust: &TrustVector, epsilon: f64) -> Result<()> {
        if let Some(j) = trust
            .as_slice()
            .iter()
            .position(|&r| r < epsilon || r > 1.0 - epsilon)
        {
            return Err(Error::InvalidInput(format!(
                "trust of server {} lies within epsilon of 0 or 1",
                j + 1
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        trust: &TrustVector,
        epsilon: f64,
        rng: &mut R,
    ) -> BeliefVector {
        let t = trust
            .as_slice()
            .iter()
            .map(|&r| (r + self.draw(epsilon, rng)).clamp(0.0, 1.0))
            .collect();
        BeliefVector {
            t,
            epsilon,
            p: self.tail_probability(),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, epsilon: f64, rng: &mut R) -> f64 {
        if epsilon == 0.0 {
            return 0.0;
        }
        match self {
            NoiseModel::TwoPoint => {
                if rng.random::<bool>() {
                    epsilon
                } else {
                    -epsilon
                }
            }
            NoiseModel::TruncatedGaussian => {
                let normal = Normal::new(0.0, epsilon / 2.0).expect("positive sigma");
                loop {
                    let z = normal.sample(rng);
                    if z.abs() <= epsilon {
                        return z;
                    }
                }
            }
        }
    }
}

/// `q = exp(−δ² / (4ε²m))`, the concentration bound on `|‖R'‖₁ − ‖R‖₁| ≥ δ`.
pub fn hoeffding_q(delta: f64, epsilon: f64, m: usize) -> f64 {
    if epsilon == 0.0 {
        return 0.0;
    }
    (-(delta * delta) / (4.0 * epsilon * epsilon * m as f64)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F2Params {
    pub epsilon: f64,
    pub delta: f64,
    pub trials: usize,
    /// Players in each sampled truth-telling profile.
    pub n_players: usize,
    pub model: NoiseModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F2Report {
    pub trials: usize,
    pub successes: usize,
    /// Fraction of trials with `‖decode(s_tt) − N(R)‖∞` within the threshold.
    pub empirical_prob: f64,
    /// `1 − mp − q`.
    pub bound: f64,
    pub q: f64,
    pub p: f64,
    /// Trials inside the good event `E ∩ H`.
    pub good_event_trials: usize,
    /// Mean L∞ error over all trials.
    pub mean_linf_error: f64,
    /// Mean L∞ error over trials inside `E ∩ H`.
    pub conditional_mean_error: f64,
    /// Trials with `|‖R'‖₁ − ‖R‖₁| ≥ δ`.
    pub hoeffding_exceed: usize,
    pub hoeffding_rate: f64,
    pub mean_l1: f64,
    /// Sample standard deviation of `‖R'‖₁`.
    pub sd_l1: f64,
}

struct F2Trial {
    success: bool,
    good_event: bool,
    linf_error: f64,
    l1: f64,
}

/// Error threshold for one trial: `ε/‖R‖₁` plus the slack from
/// `|‖R'‖₁ − ‖R‖₁| ≤ δ`, which bounds `R'_j·|1/‖R'‖₁ − 1/‖R‖₁|`.
pub fn f2_threshold(trust_l1: f64, belief_max: f64, epsilon: f64, delta: f64) -> f64 {
    epsilon / trust_l1 + delta * belief_max / (trust_l1 * (trust_l1 - delta))
}

/// Samples noisy beliefs, decodes the truth-telling profile they induce and
/// compares with `N(R)`.
pub fn f2_check(trust: &TrustVector, params: &F2Params, config: &Config) -> Result<F2Report> {
    params.model.certify(trust, params.epsilon)?;
    let l1 = trust.l1();
    if !(params.delta > 0.0) || l1 <= params.delta {
        return Err(Error::InvalidInput(
            "delta must be positive and below ‖R‖₁".into(),
        ));
    }
    if params.trials == 0 || params.n_players < 2 {
        return Err(Error::InvalidInput(
            "need trials >= 1 and at least 2 players".into(),
        ));
    }
    let target = trust.normalized();
    let m = trust.len();
    let trials: Vec<F2Trial> = (0..params.trials)
        .into_par_iter()
        .map(|idx| {
            let mut rng = substream(config.seed, purpose::BELIEF, idx as u64);
            let belief = params.model.sample(trust, params.epsilon, &mut rng);
            let b = &belief.t;
            let belief_l1: f64 = b.iter().sum();
            let in_band = b
                .iter()
                .zip(trust.as_slice())
                .all(|(x, r)| (x - r).abs() <= params.epsilon);
            let good_event = in_band && (belief_l1 - l1).abs() <= params.delta;
            let linf_error = match belief.normalized() {
                Some(tt) => {
                    let profile = StrategyProfile::symmetric(&tt, params.n_players)?;
                    let rho = decode(&profile, config, None)?.rho;
                    linf(rho.as_slice(), &target)
                }
                None => f64::INFINITY,
            };
            let max_b = b.iter().cloned().fold(0.0, f64::max);
            let threshold = f2_threshold(l1, max_b, params.epsilon, params.delta) + 1e-12;
            Ok(F2Trial {
                success: linf_error <= threshold,
                good_event,
                linf_error,
                l1: belief_l1,
            })
        })
        .collect::<Result<_>>()?;

    let count = trials.len() as f64;
    let successes = trials.iter().filter(|t| t.success).count();
    let good: Vec<&F2Trial> = trials.iter().filter(|t| t.good_event).collect();
    let hoeffding_exceed = trials
        .iter()
        .filter(|t| (t.l1 - l1).abs() >= params.delta)
        .count();
    let mean_l1 = trials.iter().map(|t| t.l1).sum::<f64>() / count;
    let var_l1 = if trials.len() > 1 {
        trials.iter().map(|t| (t.l1 - mean_l1).powi(2)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    let q = hoeffding_q(params.delta, params.epsilon, m);
    let p = params.model.tail_probability();
    Ok(F2Report {
        trials: trials.len(),
        successes,
        empirical_prob: successes as f64 / count,
        bound: 1.0 - m as f64 * p - q,
        q,
        p,
        good_event_trials: good.len(),
        mean_linf_error: trials.iter().map(|t| t.linf_error).sum::<f64>() / count,
        conditional_mean_error: if good.is_empty() {
            f64::NAN
        } else {
            good.iter().map(|t| t.linf_error).sum::<f64>() / good.len() as f64
        },
        hoeffding_exceed,
        hoeffding_rate: hoeffding_exceed as f64 / count,
        mean_l1,
        sd_l1: var_l1.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rho(v: Vec<f64>) -> ReputationScores {
        ReputationScores::new(v).unwrap()
    }

    #[test]
    fn f1_cases() {
        assert_eq!(f1(&[0.5, 0.25, 0.25]).unwrap(), vec![0.5, 0.25, 0.25]);
        assert_eq!(f1(&[0.9, 0.3]).unwrap(), vec![0.75, 0.25]);
        assert!(f1(&[0.0, 0.0]).is_err());
        assert!(f1(&[-1.0, 2.0]).is_err());
    }

    #[test]
    fn inversions() {
        let t = TrustVector::new(vec![0.9, 0.5, 0.1]).unwrap();
        assert_eq!(count_inversions(&rho(t.normalized()), &t), 0);
        assert_eq!(count_inversions(&rho(vec![0.1, 0.3, 0.6]), &t), 3);
        // one tie against strict order rounds up to one inversion
        assert_eq!(count_inversions(&rho(vec![0.4, 0.4, 0.2]), &t), 1);
        // two ties count as one
        assert_eq!(count_inversions(&rho(vec![1.0 / 3.0; 3]), &t), 2);
        // trust ties never count
        let flat = TrustVector::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(count_inversions(&rho(vec![0.9, 0.1]), &flat), 0);
    }

    #[test]
    fn decode_symmetric_profile() {
        let t = TrustVector::new(vec![0.9, 0.3]).unwrap();
        let p = StrategyProfile::symmetric(&t.normalized(), 3).unwrap();
        let d = decode(&p, &Config::default(), Some(&t)).unwrap();
        assert!(d.linf_error.unwrap() < 1e-12);
        assert_eq!(d.inversions, Some(0));
        assert!((d.ratio_matrix[0][1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let t = TrustVector::new(vec![0.9, 0.3]).unwrap();
        let p = StrategyProfile::symmetric(&[0.75, 0.25], 2).unwrap();
        let d = decode(&p, &Config::default(), None).unwrap();
        let csv = d.to_csv(None);
        assert!(csv.starts_with("server_index,rho\n1,"));
        assert!(csv.contains("inversions,n/a") && csv.contains("linf_error,n/a"));
        let d = decode(&p, &Config::default(), Some(&t)).unwrap();
        assert!(d.to_csv(Some(&t)).contains("inversions,0"));
    }

    #[test]
    fn zero_noise_is_exact() {
        let t = TrustVector::new(vec![0.8, 0.4, 0.6]).unwrap();
        let params = F2Params {
            epsilon: 0.0,
            delta: 0.05,
            trials: 20,
            n_players: 2,
            model: NoiseModel::TruncatedGaussian,
        };
        let r = f2_check(&t, &params, &Config::default()).unwrap();
        assert_eq!(r.empirical_prob, 1.0);
        assert_eq!(r.q, 0.0);
    }

    #[test]
    fn generators_stay_in_band() {
        let t = TrustVector::new(vec![0.3, 0.5, 0.7]).unwrap();
        let mut rng = substream(3, purpose::BELIEF, 0);
        for model in [NoiseModel::TruncatedGaussian, NoiseModel::TwoPoint] {
            model.certify(&t, 0.02).unwrap();
            for _ in 0..1000 {
                let b = model.sample(&t, 0.02, &mut rng);
                for (x, r) in b.t.iter().zip(t.as_slice()) {
                    assert!((x - r).abs() <= 0.02 + 1e-15);
                }
            }
        }
        let edge = TrustVector::new(vec![0.01, 0.5]).unwrap();
        assert!(NoiseModel::TwoPoint.certify(&edge, 0.02).is_err());
    }

    #[test]
    fn q_formula() {
        let q = hoeffding_q(0.05, 0.02, 20);
        assert!((q - (-0.0025f64 / (4.0 * 0.0004 * 20.0)).exp()).abs() < 1e-15);
    }
}
