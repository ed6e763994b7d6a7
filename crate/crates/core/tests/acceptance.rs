//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::fs;
use std::time::{Duration, Instant};

use clap::Parser;
use rand::Rng;
use rayon::prelude::*;

use trep::bootstrap::{
    self, bootstrap_reward_check, distribute_rewards, run_bootstrap, select_committee,
    BootstrapConfig,
};
use trep::cli::{self, Cli};
use trep::decoder::{count_inversions, decode, f2_check, F2Params, NoiseModel};
use trep::equilibrium::{
    epsilon_prime_bound, hierarchy_invariance, measure_epsilon_prime, truth_telling_profile,
    verify_unique_nash, GameScenario,
};
use trep::game::realized_utilities;
use trep::pagerank::{
    build_designated_chain, reputation_scores, stationary, stationary_oracle, TransitionMatrix,
};
use trep::rng::{purpose, substream};
use trep::{BeliefVector, Config, RepGraph, StrategyProfile, TRepGame, TrustVector};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn trust_in<R: Rng>(m: usize, lo: f64, hi: f64, rng: &mut R) -> TrustVector {
    TrustVector::new((0..m).map(|_| rng.random_range(lo..=hi)).collect()).unwrap()
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest `|(a_i/a_j) / (r_i/r_j) − 1|`.
fn ratio_error(a: &[f64], r: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            worst = worst.max(((a[i] / a[j]) / (r[i] / r[j]) - 1.0).abs());
        }
    }
    worst
}

/// Random designated graph: rows with sparse random weights over servers
/// and other users, at least one server entry positive.
fn random_graph<R: Rng>(n: usize, m: usize, rng: &mut R) -> RepGraph {
    let rows = (0..n)
        .map(|i| {
            let mut r: Vec<f64> = (0..m + n)
                .map(|k| {
                    if k == m + i || rng.random::<f64>() < 0.4 {
                        0.0
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect();
            r[rng.random_range(0..m)] += 0.05;
            let s: f64 = r.iter().sum();
            r.iter().map(|w| w / s).collect()
        })
        .collect();
    RepGraph::new(n, m, rows, None).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = substream(1, purpose::SCENARIO, 0);
    let alphas = [0.05, 0.15, 0.5];
    let mut worst: f64 = 0.0;
    for t in 0..200 {
        let total = rng.random_range(4..=50);
        let m = rng.random_range(2..=total - 2);
        let g = random_graph(total - m, m, &mut rng);
        let c = Config::with_alpha(alphas[t % 3]).unwrap();
        let chain = build_designated_chain(&g, &c).unwrap();
        let a = stationary(&chain, &c).unwrap();
        let b = stationary_oracle(&chain).unwrap();
        worst = worst.max(linf(&a.pi, &b.pi));
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-10 && elapsed < Duration::from_secs(10),
        format!(
            "200 graphs, max linf {worst:.3e} (<= 1e-10), {:.2}s (< 10s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = substream(2, purpose::SCENARIO, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = rng.random_range(2..=20);
        let r = trust_in(m, 0.05, 1.0, &mut rng);
        let row = r.normalized();
        let chain = TransitionMatrix::row_normalized(&vec![row; m]).unwrap();
        let pi = stationary(&chain, &Config::default()).unwrap();
        worst = worst.max(ratio_error(&pi.pi, r.as_slice()));
        let exact = stationary_oracle(&chain).unwrap();
        worst = worst.max(ratio_error(&exact.pi, r.as_slice()));
    }
    outcome(
        worst <= 1e-9,
        format!("100 cliques, max relative ratio error {worst:.3e} (<= 1e-9)"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = substream(3, purpose::SCENARIO, 0);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for m in 2..=10 {
        for _ in 0..10 {
            let n = rng.random_range(3..=100);
            let r = trust_in(m, 0.05, 1.0, &mut rng);
            let nr = r.normalized();
            // Every user with server mass splits it as N(R); some also
            // endorse other users.
            let rows = (0..n)
                .map(|i| {
                    let keep = if i % 3 == 2 {
                        rng.random_range(0.2..1.0)
                    } else {
                        1.0
                    };
                    let mut row: Vec<f64> = nr.iter().map(|x| x * keep).collect();
                    row.resize(m + n, 0.0);
                    if keep < 1.0 {
                        row[m + (i + 1) % n] = 1.0 - keep;
                    }
                    row
                })
                .collect();
            let g = RepGraph::new(n, m, rows, None).unwrap();
            let rho = reputation_scores(&g, &Config::default()).unwrap();
            worst = worst.max(ratio_error(rho.as_slice(), r.as_slice()));
            count += 1;
        }
    }
    outcome(
        worst <= 1e-9,
        format!("{count} designated graphs, max relative ratio error {worst:.3e} (<= 1e-9)"),
    )
}

struct NashInstance {
    trust: TrustVector,
    n: usize,
}

fn nash_instances() -> Vec<NashInstance> {
    let mut rng = substream(4, purpose::SCENARIO, 0);
    (0..100)
        .map(|_| {
            let m = rng.random_range(2..=10);
            NashInstance {
                trust: trust_in(m, 0.05, 1.0, &mut rng),
                n: rng.random_range(2..=20),
            }
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let c = Config {
        seed: 4,
        ..Config::default()
    };
    let reports: Vec<_> = nash_instances()
        .par_iter()
        .map(|inst| verify_unique_nash(&inst.trust, inst.n, 100, &c).unwrap())
        .collect();
    let util = reports.iter().map(|r| r.utility_error).fold(0.0, f64::max);
    let gain = reports
        .iter()
        .map(|r| r.report.epsilon_prime)
        .fold(f64::NEG_INFINITY, f64::max);
    let probe = reports
        .iter()
        .map(|r| r.probe_min - r.guarantee)
        .fold(f64::INFINITY, f64::min);
    let linear = reports.iter().all(|r| r.linear_system_check);
    outcome(
        util <= 1e-10 && gain <= 1e-8 && probe >= -1e-8 && linear,
        format!(
            "100 instances: max |u-L| {util:.3e} (<= 1e-10), max gain {gain:.3e} (<= 1e-8), \
             min probe margin {probe:.3e} (>= -1e-8), linear system {linear}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let c = Config::default();
    let worst = nash_instances()
        .par_iter()
        .map(|inst| {
            let s = GameScenario::perfect(inst.trust.clone(), inst.n).unwrap();
            let p = truth_telling_profile(&s).unwrap();
            decode(&p, &c, Some(&inst.trust))
                .unwrap()
                .linf_error
                .unwrap()
        })
        .reduce(|| 0.0, f64::max);
    outcome(
        worst <= 1e-10,
        format!("100 instances, max linf {worst:.3e} (<= 1e-10)"),
    )
}

fn criterion_6() -> Outcome {
    let c = Config {
        seed: 6,
        ..Config::default()
    };
    let mut rng = substream(6, purpose::SCENARIO, 0);
    let mut decode_spread: f64 = 0.0;
    let mut gain_spread: f64 = 0.0;
    let mut max_gain = f64::NEG_INFINITY;
    let mut cases = 0;
    for (n, m) in [(3, 2), (4, 3), (5, 4), (6, 3), (8, 5)] {
        let r = trust_in(m, 0.05, 1.0, &mut rng);
        for k in 1..n {
            let rep = hierarchy_invariance(&r, n, k, 50, &c).unwrap();
            decode_spread = decode_spread.max(rep.decode_spread);
            gain_spread = gain_spread.max(rep.gain_spread);
            max_gain = rep
                .draws
                .iter()
                .map(|d| d.max_gain)
                .fold(max_gain, f64::max);
            cases += 1;
        }
    }
    outcome(
        decode_spread <= 1e-9 && gain_spread <= 1e-8,
        format!(
            "{cases} (n,k) cases x 50 draws: decode spread {decode_spread:.3e} (<= 1e-9), \
             gain spread {gain_spread:.3e} (<= 1e-8), max gain {max_gain:.3e}"
        ),
    )
}

fn criterion_7() -> Outcome {
    let c = Config::default();
    let mut worst_ratio: f64 = 0.0;
    let mut all = true;
    let mut cells = Vec::new();
    for m in [2, 3, 5] {
        for n in [50, 100, 500] {
            let eps = 1.0 / (2.0 * n as f64);
            let bound = epsilon_prime_bound(m, n, eps);
            let gains: Vec<f64> = (0..500)
                .into_par_iter()
                .map(|t| {
                    let mut rng = substream(7, purpose::SCENARIO, (m * 1000 + n) as u64 * 1000 + t);
                    let r = trust_in(m, 0.2, 1.0, &mut rng);
                    let model = if t % 2 == 0 {
                        NoiseModel::TwoPoint
                    } else {
                        NoiseModel::TruncatedGaussian
                    };
                    let b = model.sample(&r, eps, &mut rng);
                    let s = GameScenario::noisy(r, b, n).unwrap();
                    measure_epsilon_prime(&s, &c).unwrap().epsilon_prime
                })
                .collect();
            let worst = gains.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            all &= gains.iter().all(|&g| g <= bound);
            worst_ratio = worst_ratio.max(worst / bound);
            cells.push(format!("m={m},n={n}: {worst:.2e}/{bound:.2e}"));
        }
    }
    let mut zero: f64 = f64::NEG_INFINITY;
    let mut rng = substream(7, purpose::SCENARIO, u64::MAX);
    for m in [2, 3, 5] {
        for n in [50, 100, 500] {
            let r = trust_in(m, 0.2, 1.0, &mut rng);
            let s = GameScenario::noisy(r.clone(), BeliefVector::perfect(&r), n).unwrap();
            zero = zero.max(measure_epsilon_prime(&s, &c).unwrap().epsilon_prime);
        }
    }
    outcome(
        all && zero <= 1e-8,
        format!(
            "9 cells x 500 trials all within bound (worst eps'/bound {worst_ratio:.3e}); \
             eps'(eps=0) {zero:.3e} (<= 1e-8); {}",
            cells.join(" ")
        ),
    )
}

struct GridCell {
    m: usize,
    epsilon: f64,
    model: NoiseModel,
    trust: TrustVector,
}

fn f2_grid() -> Vec<GridCell> {
    let mut cells = Vec::new();
    for m in [5, 10, 20] {
        for epsilon in [0.01, 0.02] {
            for model in [NoiseModel::TruncatedGaussian, NoiseModel::TwoPoint] {
                let mut rng = substream(8, purpose::SCENARIO, m as u64);
                cells.push(GridCell {
                    m,
                    epsilon,
                    model,
                    trust: trust_in(m, 0.2, 0.8, &mut rng),
                });
            }
        }
    }
    cells
}

fn model_name(m: NoiseModel) -> &'static str {
    match m {
        NoiseModel::TruncatedGaussian => "gaussian",
        NoiseModel::TwoPoint => "two-point",
    }
}

fn criteria_8_9() -> (Outcome, Outcome) {
    let c = Config {
        seed: 8,
        ..Config::default()
    };
    let (mut pass8, mut pass9) = (true, true);
    let (mut d8, mut d9) = (Vec::new(), Vec::new());
    for cell in f2_grid() {
        let start = Instant::now();
        let params = F2Params {
            epsilon: cell.epsilon,
            delta: 0.05,
            trials: 10_000,
            n_players: 10,
            model: cell.model,
        };
        cell.model.certify(&cell.trust, cell.epsilon).unwrap();
        let r = f2_check(&cell.trust, &params, &c).unwrap();
        let elapsed = start.elapsed();
        let ok8 = r.empirical_prob >= r.bound && elapsed < Duration::from_secs(300);
        let ok9 = r.hoeffding_rate <= r.q;
        pass8 &= ok8;
        pass9 &= ok9;
        let tag = format!(
            "m={},eps={},{}",
            cell.m,
            cell.epsilon,
            model_name(cell.model)
        );
        d8.push(format!(
            "{tag}: {:.4}>={:.4} {:.1}s",
            r.empirical_prob,
            r.bound,
            elapsed.as_secs_f64()
        ));
        d9.push(format!("{tag}: {:.4}<={:.4}", r.hoeffding_rate, r.q));
    }
    (
        outcome(pass8, format!("12 cells x 1e4 trials; {}", d8.join("; "))),
        outcome(pass9, format!("12 cells x 1e4 trials; {}", d9.join("; "))),
    )
}

fn criterion_10() -> Outcome {
    let c = Config::default();
    let runs = 10_000;

    // Survival rates against trust.
    let mut rng = substream(10, purpose::SCENARIO, 0);
    let r = trust_in(8, 0.05, 0.95, &mut rng);
    let n = 5;
    let game = TRepGame::perfect(r.clone(), n, c).unwrap();
    let profile = StrategyProfile::symmetric(&r.normalized(), n).unwrap();
    let bcfg = BootstrapConfig::new(3, 3, 4, 0.9);
    let mc = bootstrap::monte_carlo(&game, &profile, &bcfg, 10, runs).unwrap();
    let sigma_ok = mc.within_sigma(&r, 3.0);
    let worst_z = (0..r.len())
        .map(|j| {
            let p = r.as_slice()[j];
            (mc.kept_rate(j) - p).abs() / (p * (1.0 - p) / runs as f64).sqrt()
        })
        .fold(0.0, f64::max);
    let check = bootstrap_reward_check(&r, n, &mc, 200, 10);
    let corollary_ok = check.max_gain <= 1e-6 + check.sampling_slack;

    // Gapped trust: ordering and committee per run, rewards against the game.
    let gapped = TrustVector::new(vec![0.9, 0.35, 0.6, 0.15, 0.8, 0.45, 0.7, 0.25]).unwrap();
    let game = TRepGame::perfect(gapped.clone(), n, c).unwrap();
    let profile = StrategyProfile::symmetric(&gapped.normalized(), n).unwrap();
    let bcfg = BootstrapConfig::new(3, 2, 5, 0.9);
    let mut truth: Vec<usize> = (0..8).collect();
    truth.sort_by(|&a, &b| gapped.as_slice()[b].total_cmp(&gapped.as_slice()[a]));
    truth.truncate(5);
    let per_run: Vec<(bool, bool, bool)> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(11, purpose::BOOTSTRAP, i as u64);
            let tr = run_bootstrap(&game, &profile, &bcfg, &mut rng).unwrap();
            let rewards = distribute_rewards(&tr, &profile, &c).unwrap();
            let reference = realized_utilities(&profile, &tr.final_outcome, &c).unwrap();
            let committee = select_committee(&tr.final_rho, 5, 1.0).unwrap();
            (
                rewards == reference,
                count_inversions(&tr.final_rho, &gapped) == 0,
                committee == truth,
            )
        })
        .collect();
    let rewards_ok = mc.reward_mismatches == 0 && per_run.iter().all(|x| x.0);
    let order_ok = per_run.iter().all(|x| x.1);
    let top_ok = per_run.iter().all(|x| x.2);
    outcome(
        sigma_ok && rewards_ok && order_ok && top_ok && corollary_ok,
        format!(
            "1e4 runs: within 3 sigma {sigma_ok} (max z {worst_z:.2}), rewards exact {rewards_ok}, \
             0 inversions {order_ok}, top set {top_ok}, reward deviation gain {:.3e} <= {:.3e}",
            check.max_gain,
            1e-6 + check.sampling_slack
        ),
    )
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.trep");
    let mut rng = substream(12, purpose::SCENARIO, 0);
    let g = random_graph(6, 4, &mut rng)
        .with_trust(TrustVector::new(vec![0.9, 0.4, 0.7, 0.2]).unwrap())
        .unwrap();
    trep::repgraph::save(&g, &Config::default(), &scenario).unwrap();
    let s = scenario.to_str().unwrap();
    let commands: Vec<Vec<&str>> = vec![
        vec!["decode", s],
        vec!["nash", "--m", "5", "--n", "8"],
        vec![
            "hierarchy",
            "--m",
            "4",
            "--n",
            "5",
            "--k",
            "2",
            "--trials",
            "20",
        ],
        vec![
            "noisy",
            "--m",
            "6",
            "--n",
            "20",
            "--epsilon",
            "0.005,0.01,0.02",
            "--trials",
            "2000",
        ],
        vec![
            "noisy",
            "--m",
            "6",
            "--n",
            "20",
            "--epsilon",
            "0.01",
            "--trials",
            "1000",
            "--model",
            "two-point",
        ],
        vec!["bootstrap", "--m", "8", "--n", "5", "--trials", "3000"],
    ];
    let mut same = true;
    let mut files = 0;
    for (idx, args) in commands.iter().enumerate() {
        let mut outputs = Vec::new();
        for parallel in ["1", "8", "1", "8"] {
            let out_dir = dir.path().join(format!("run{idx}_{}", outputs.len()));
            let mut argv = vec!["trep", "--seed", "42", "--parallel", parallel, "--out"];
            let o = out_dir.to_str().unwrap().to_string();
            argv.push(&o);
            argv.extend(args.iter().copied());
            let parsed = Cli::try_parse_from(&argv).unwrap();
            let out = cli::run(&parsed).unwrap();
            let on_disk: Vec<Vec<u8>> = out
                .files
                .iter()
                .map(|(name, _)| fs::read(out_dir.join(name)).unwrap())
                .collect();
            outputs.push((out, on_disk));
        }
        files += outputs[0].1.len();
        same &= outputs.windows(2).all(|w| w[0] == w[1]);
    }
    outcome(
        same,
        format!(
            "{} commands x (parallel 1, 8, 1, 8): {files} files byte-identical {same}",
            commands.len()
        ),
    )
}

fn main() {
    let names = [
        "oracle equivalence",
        "clique ratio preservation",
        "designated ratio preservation",
        "unique Nash",
        "perfect decodability",
        "hierarchy invariance",
        "epsilon-prime bound",
        "f2 decodability",
        "Hoeffding concentration",
        "bootstrap consistency",
        "determinism",
    ];
    let mut results = Vec::new();
    let mut emit = |o: Outcome| {
        let i = results.len();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {:<30} {verdict}  {}",
            i + 1,
            names[i],
            o.detail
        );
        results.push(o.pass);
    };
    emit(criterion_1());
    emit(criterion_2());
    emit(criterion_3());
    emit(criterion_4());
    emit(criterion_5());
    emit(criterion_6());
    emit(criterion_7());
    let (c8, c9) = criteria_8_9();
    emit(c8);
    emit(c9);
    emit(criterion_10());
    emit(criterion_11());
    let failed = results.iter().filter(|&&p| !p).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
