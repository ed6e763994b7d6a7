//! Command-line front end.
//!
//! Every command builds its outputs in memory as `(file name, contents)`
//! pairs plus a short summary, so runs can be compared byte for byte.
//! Randomness comes from `--seed` alone: scenarios are drawn from the
//! `SCENARIO` substream, beliefs from `BELIEF`, probes from `PROBE`,
//! bootstrap runs from `BOOTSTRAP` and fresh strategies from `FRESH`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;

use crate::bootstrap::{self, BootstrapConfig};
use crate::decoder::{self, F2Params, NoiseModel};
use crate::equilibrium;
use crate::error::{Error, Result};
use crate::game::TRepGame;
use crate::numfmt::g17;
use crate::repgraph::{self, Config, Scenario, TrustVector};
use crate::rng::{purpose, substream};

#[derive(Debug, Clone, Parser)]
#[command(
    name = "trep",
    version,
    about = "Trustworthy reputation scoring and game checks"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Restart probability; overrides the scenario file.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// L1 residual at which power iteration stops.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long = "max-iters", global = true)]
    pub max_iters: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub parallel: usize,
}

#[derive(Debug, Clone, Args)]
pub struct InstanceArgs {
    /// Scenario file supplying trust and player count.
    pub scenario: Option<PathBuf>,
    /// Players; defaults to the scenario's user count, else 10.
    #[arg(long)]
    pub n: Option<usize>,
    /// Servers for a generated instance.
    #[arg(long, default_value_t = 5)]
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Gaussian,
    TwoPoint,
}

impl From<Model> for NoiseModel {
    fn from(m: Model) -> Self {
        match m {
            Model::Gaussian => NoiseModel::TruncatedGaussian,
            Model::TwoPoint => NoiseModel::TwoPoint,
        }
    }
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Check a scenario file and report every violation.
    Validate { scenario: PathBuf },
    /// Reputation scores of a scenario file.
    Decode { scenario: PathBuf },
    /// Equilibrium check at the truth-telling profile.
    Nash {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Random opponent profiles for the non-exploitability probe.
        #[arg(long, default_value_t = 100)]
        probes: usize,
    },
    /// Perfect players plus fresh players who endorse them.
    Hierarchy {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Perfectly informed players.
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Fresh-strategy draws.
        #[arg(long, default_value_t = 50)]
        trials: usize,
    },
    /// ε′ and decodability sweep over noise levels.
    Noisy {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Comma-separated noise half-widths.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.001, 0.005, 0.01])]
        epsilon: Vec<f64>,
        /// Claimed per-coordinate tail probability.
        #[arg(long, default_value_t = 0.0)]
        p: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = Model::Gaussian)]
        model: Model,
    },
    /// Round-robin bootstrap simulation.
    Bootstrap {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value_t = 3)]
        lambda: usize,
        /// Committee size during the phase.
        #[arg(long, default_value_t = 3)]
        committee: usize,
        /// Size of the selected committee before shrinking.
        #[arg(long)]
        ell: Option<usize>,
        #[arg(long, default_value_t = 0.9)]
        fraction: f64,
        /// Monte Carlo runs; the first one is logged in full.
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
}

/// Files to write and a human-readable summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub files: Vec<(String, String)>,
    pub summary: String,
}

/// Runs a parsed command on a pool of `--parallel` threads without touching
/// the filesystem except to read inputs.
pub fn execute(cli: &Cli) -> Result<Output> {
    if cli.common.parallel == 0 {
        return Err(Error::InvalidConfig("--parallel must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.parallel)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli))
}

/// Executes and writes outputs under `--out`.
pub fn run(cli: &Cli) -> Result<Output> {
    let output = execute(cli)?;
    write_outputs(&cli.common.out, &output)?;
    Ok(output)
}

pub fn write_outputs(dir: &Path, output: &Output) -> Result<()> {
    if output.files.is_empty() {
        return Ok(());
    }
    fs::create_dir_all(dir)?;
    for (name, contents) in &output.files {
        fs::write(dir.join(name), contents)?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<Output> {
    let c = &cli.common;
    match &cli.command {
        Command::Validate { scenario } => cmd_validate(scenario),
        Command::Decode { scenario } => cmd_decode(scenario, c),
        Command::Nash { instance, probes } => cmd_nash(instance, *probes, c),
        Command::Hierarchy {
            instance,
            k,
            trials,
        } => cmd_hierarchy(instance, *k, *trials, c),
        Command::Noisy {
            instance,
            epsilon,
            p,
            delta,
            trials,
            model,
        } => cmd_noisy(instance, epsilon, *p, *delta, *trials, (*model).into(), c),
        Command::Bootstrap {
            instance,
            lambda,
            committee,
            ell,
            fraction,
            trials,
        } => {
            let (trust, n, config) = instance_for(instance, c, (0.2, 1.0))?;
            let ell = ell.unwrap_or(trust.len().div_ceil(2));
            let bcfg = BootstrapConfig::new(*lambda, *committee, ell, *fraction);
            cmd_bootstrap(&trust, n, &bcfg, *trials, &config)
        }
    }
}

fn config_for(common: &CommonArgs, file_alpha: Option<f64>) -> Result<Config> {
    let mut config = Config {
        seed: common.seed,
        ..Config::default()
    };
    if let Some(a) = common.alpha.or(file_alpha) {
        config.alpha = a;
    }
    if let Some(t) = common.tol {
        config.tol = t;
    }
    if let Some(k) = common.max_iters {
        config.max_iters = k;
    }
    config.validate()?;
    if !(config.tol > 0.0) || config.max_iters == 0 {
        return Err(Error::InvalidConfig(
            "tol and max-iters must be positive".into(),
        ));
    }
    Ok(config)
}

/// Trust, player count and config for commands that take either a scenario
/// file or a generated instance with trust uniform on `range`.
fn instance_for(
    args: &InstanceArgs,
    common: &CommonArgs,
    range: (f64, f64),
) -> Result<(TrustVector, usize, Config)> {
    match &args.scenario {
        Some(path) => {
            let Scenario { graph, config } = repgraph::load(path)?;
            let trust = graph
                .trust()
                .cloned()
                .ok_or_else(|| Error::InvalidInput("scenario has no trust line".into()))?;
            let n = args.n.unwrap_or(graph.n());
            Ok((trust, n, config_for(common, Some(config.alpha))?))
        }
        None => {
            if args.m < 2 {
                return Err(Error::InvalidInput("--m must be at least 2".into()));
            }
            let mut rng = substream(common.seed, purpose::SCENARIO, 0);
            let r = (0..args.m)
                .map(|_| rng.random_range(range.0..=range.1))
                .collect();
            Ok((
                TrustVector::new(r)?,
                args.n.unwrap_or(10),
                config_for(common, None)?,
            ))
        }
    }
}

pub fn cmd_validate(path: &Path) -> Result<Output> {
    let text = repgraph::read_text(path)?;
    let scenario = repgraph::parse(&text)?;
    let summary = format!(
        "valid: {} users, {} servers, alpha {}",
        scenario.graph.n(),
        scenario.graph.m(),
        scenario.config.alpha
    );
    Ok(Output {
        files: Vec::new(),
        summary,
    })
}

pub fn cmd_decode(path: &Path, common: &CommonArgs) -> Result<Output> {
    let Scenario { graph, config } = repgraph::load(path)?;
    let config = config_for(common, Some(config.alpha))?;
    let result = decoder::decode_graph(&graph, &config, None)?;
    let trust = graph.trust();
    let mut summary = String::from("rho:");
    for r in result.rho.as_slice() {
        summary.push(' ');
        summary.push_str(&g17(*r));
    }
    summary.push_str(&format!(
        "\ninversions: {}\nlinf_error: {}",
        result.inversions.map_or("n/a".into(), |k| k.to_string()),
        result.linf_error.map_or("n/a".into(), g17)
    ));
    Ok(Output {
        files: vec![("decode.csv".into(), result.to_csv(trust))],
        summary,
    })
}

pub fn cmd_nash(args: &InstanceArgs, probes: usize, common: &CommonArgs) -> Result<Output> {
    let (trust, n, config) = instance_for(args, common, (0.05, 1.0))?;
    let r = equilibrium::verify_unique_nash(&trust, n, probes, &config)?;
    let scenario = equilibrium::GameScenario::perfect(trust.clone(), n)?;
    let decoded = decoder::decode(
        &equilibrium::truth_telling_profile(&scenario)?,
        &config,
        Some(&trust),
    )?;

    let mut csv = String::from("player_index,utility,gain,closed_form_deviation\n");
    for i in 0..n {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            i + 1,
            g17(r.utilities[i]),
            r.report.gains[i].map_or("n/a".into(), g17),
            r.report.closed_form_deviation[i].map_or("n/a".into(), g17)
        ));
    }
    let linf = decoded.linf_error.unwrap_or(f64::NAN);
    csv.push_str("\nmetric,value\n");
    csv.push_str(&format!("guarantee,{}\n", g17(r.guarantee)));
    csv.push_str(&format!("epsilon_prime,{}\n", g17(r.report.epsilon_prime)));
    csv.push_str(&format!("utility_error,{}\n", g17(r.utility_error)));
    csv.push_str(&format!("probes,{}\n", r.probes));
    csv.push_str(&format!("probe_min,{}\n", g17(r.probe_min)));
    csv.push_str(&format!("linear_system_check,{}\n", r.linear_system_check));
    csv.push_str(&format!("decode_linf_error,{}\n", g17(linf)));

    let summary = format!(
        "n={n} m={}\nguarantee L = {}\nepsilon_prime = {} (<= 1e-8: {})\nmax |u_i - L| = {}\nprobe minimum = {}\ndecode linf error = {}",
        trust.len(),
        g17(r.guarantee),
        g17(r.report.epsilon_prime),
        r.report.epsilon_prime <= 1e-8,
        g17(r.utility_error),
        g17(r.probe_min),
        g17(linf)
    );
    Ok(Output {
        files: vec![("nash.csv".into(), csv)],
        summary,
    })
}

pub fn cmd_hierarchy(
    args: &InstanceArgs,
    k: usize,
    trials: usize,
    common: &CommonArgs,
) -> Result<Output> {
    let (trust, n, config) = instance_for(args, common, (0.05, 1.0))?;
    let r = equilibrium::hierarchy_invariance(&trust, n, k, trials, &config)?;
    let mut csv = String::from("draw,linf_error,max_gain\n");
    for (d, draw) in r.draws.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{}\n",
            d + 1,
            g17(draw.linf_error),
            g17(draw.max_gain)
        ));
    }
    csv.push_str("\nmetric,value\n");
    csv.push_str(&format!("k,{k}\n"));
    csv.push_str(&format!("decode_spread,{}\n", g17(r.decode_spread)));
    csv.push_str(&format!("gain_spread,{}\n", g17(r.gain_spread)));
    let summary = format!(
        "n={n} m={} k={k} draws={trials}\ndecode spread = {}\ngain spread = {}",
        trust.len(),
        g17(r.decode_spread),
        g17(r.gain_spread)
    );
    Ok(Output {
        files: vec![("hierarchy.csv".into(), csv)],
        summary,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_noisy(
    args: &InstanceArgs,
    epsilons: &[f64],
    p: f64,
    delta: f64,
    trials: usize,
    model: NoiseModel,
    common: &CommonArgs,
) -> Result<Output> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput("--p out of [0,1]".into()));
    }
    if epsilons.is_empty() || epsilons.iter().any(|e| !(0.0..0.5).contains(e)) {
        return Err(Error::InvalidInput(
            "every epsilon must lie in [0, 0.5)".into(),
        ));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("--trials must be positive".into()));
    }
    let (trust, n, config) = instance_for(args, common, (0.2, 0.8))?;
    let m = trust.len();
    let p = p.max(model.tail_probability());

    let mut csv = String::from(
        "epsilon,epsilon_prime,bound,f2_rate,f2_bound,q,hoeffding_rate,conditional_mean_error\n",
    );
    let mut summary = format!("n={n} m={m} trials={trials}");
    for &eps in epsilons {
        let eps_prime = equilibrium::max_epsilon_prime(&trust, n, eps, model, trials, &config)?;
        let bound = equilibrium::epsilon_prime_bound(m, n, eps);
        let f2 = decoder::f2_check(
            &trust,
            &F2Params {
                epsilon: eps,
                delta,
                trials,
                n_players: n,
                model,
            },
            &config,
        )?;
        let f2_bound = 1.0 - m as f64 * p - f2.q;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            g17(eps),
            g17(eps_prime),
            g17(bound),
            g17(f2.empirical_prob),
            g17(f2_bound),
            g17(f2.q),
            g17(f2.hoeffding_rate),
            g17(f2.conditional_mean_error)
        ));
        summary.push_str(&format!(
            "\neps={}: epsilon_prime={} bound={} f2_rate={} (>= {})",
            g17(eps),
            g17(eps_prime),
            g17(bound),
            g17(f2.empirical_prob),
            g17(f2_bound)
        ));
    }
    Ok(Output {
        files: vec![("noisy.csv".into(), csv)],
        summary,
    })
}

pub fn cmd_bootstrap(
    trust: &TrustVector,
    n: usize,
    bcfg: &BootstrapConfig,
    trials: usize,
    config: &Config,
) -> Result<Output> {
    if trials == 0 {
        return Err(Error::InvalidInput("--trials must be positive".into()));
    }
    let game = TRepGame::perfect(trust.clone(), n, *config)?;
    let profile =
        equilibrium::truth_telling_profile(&equilibrium::GameScenario::perfect(trust.clone(), n)?)?;
    let mut rng = substream(config.seed, purpose::BOOTSTRAP, 0);
    let trace = bootstrap::run_bootstrap(&game, &profile, bcfg, &mut rng)?;
    let rewards = bootstrap::distribute_rewards(&trace, &profile, config)?;

    let committee: Vec<String> = trace
        .final_committee
        .iter()
        .map(|j| (j + 1).to_string())
        .collect();
    let mut summary = format!(
        "n={n} m={} lambda={} committee size={}\nrestarts: {}\ndetected: {:?}\nselected committee: {}",
        trust.len(),
        bcfg.lambda,
        bcfg.committee_size,
        trace.restarts,
        trace.detected.iter().map(|j| j + 1).collect::<Vec<_>>(),
        committee.join(" ")
    );
    let mut files = vec![
        ("bootstrap.log".to_string(), trace.event_log()),
        (
            "bootstrap.csv".to_string(),
            trace.summary_csv(trust, Some(&rewards)),
        ),
    ];
    if trials > 1 {
        let mc = bootstrap::monte_carlo(&game, &profile, bcfg, config.seed, trials)?;
        summary.push_str(&format!(
            "\nmonte carlo runs: {}\nwithin 3 sigma: {}\nhonest-majority committees: {}",
            trials,
            mc.within_sigma(trust, 3.0),
            mc.honest_majority_runs
        ));
        files.push(("bootstrap_mc.csv".to_string(), mc.to_csv(trust)));
    }
    Ok(Output { files, summary })
}
