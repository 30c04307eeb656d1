//! Experiment driver: `solve`, `train`, `evaluate`, and `duality-check`
//! subcommands over the environments, learners, and the exact oracle.
//!
//! Every command is a pure function of its flags and seed. Flags override an
//! optional JSON config file. Exit codes: 0 success, 2 usage error,
//! 3 resource limit.

use arrl_core::arrlc::{arrlc_run_with, LearnerConfig};
use arrl_core::envs::{build_fixed_adversary_cliff, EnvSpec};
use arrl_core::eval::{rollout_perturbed, PerturbKind, PerturbationSpec, RegretAccumulator};
use arrl_core::io::{load_policy, save_policy, save_solution};
use arrl_core::mdp::{DeterministicPolicy, RewardScale, TabularMdp};
use arrl_core::planner::{solve_robust_optimal, verify_perfect_duality, PlannerError};
use arrl_core::rng::stream;
use arrl_core::ucbh::ucbh_run_with;
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "arrl", about = "Action-robust tabular RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an environment exactly and write the solution JSON.
    Solve(SolveArgs),
    /// Train a learner and write a per-episode CSV plus the output policy.
    Train(TrainArgs),
    /// Evaluate a stored policy under perturbed execution.
    Evaluate(EvaluateArgs),
    /// Cross-check max-min against min-max by enumeration on a small instance.
    DualityCheck(DualityArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algorithm {
    Arrlc,
    ArUcbh,
}

impl Algorithm {
    fn name(self) -> &'static str {
        match self {
            Algorithm::Arrlc => "arrlc",
            Algorithm::ArUcbh => "ar-ucbh",
        }
    }
}

#[derive(Parser)]
struct SolveArgs {
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Parser)]
struct TrainArgs {
    #[arg(long, value_enum)]
    alg: Option<Algorithm>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, short = 'K')]
    episodes: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// Seed(s); multiple seeds fan out as independent runs.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    bonus_scale: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for multi-seed fan-out.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Skip the per-episode oracle columns.
    #[arg(long, default_value_t = false)]
    no_oracle: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Parser)]
struct EvaluateArgs {
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Policy JSON produced by `train` or `solve`.
    #[arg(long)]
    policy: PathBuf,
    /// Name recorded in the CSV; defaults to the policy file stem.
    #[arg(long)]
    policy_name: Option<String>,
    /// Perturbation probabilities.
    #[arg(long, value_delimiter = ',')]
    p: Vec<f64>,
    /// Perturbation kinds: fixed and/or random.
    #[arg(long, value_delimiter = ',')]
    kinds: Vec<String>,
    /// Trajectories per grid point.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fixed adversary policy JSON for non-cliff environments.
    #[arg(long)]
    adversary: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Parser)]
struct DualityArgs {
    #[arg(long)]
    env: String,
    #[arg(long)]
    rho: f64,
    #[arg(long, default_value_t = 100)]
    horizon: usize,
}

/// Optional JSON config; any present field acts as a default for the
/// corresponding flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    env: Option<String>,
    algorithm: Option<String>,
    episodes: Option<usize>,
    rho: Option<f64>,
    delta: Option<f64>,
    seed: Option<u64>,
    horizon: Option<usize>,
    bonus_scale: Option<f64>,
    out_dir: Option<PathBuf>,
    eval: Option<Vec<EvalPoint>>,
}

#[derive(Debug, Deserialize)]
struct EvalPoint {
    kind: String,
    p: f64,
}

enum CliError {
    Usage(String),
    Resource(String),
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Resource(_) => 3,
            CliError::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Resource(m) | CliError::Other(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<arrl_core::io::IoError> for CliError {
    fn from(e: arrl_core::io::IoError) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<PlannerError> for CliError {
    fn from(e: PlannerError) -> Self {
        CliError::Resource(e.to_string())
    }
}

fn load_file_config(path: &Option<PathBuf>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("bad config {}: {e}", p.display())))
        }
    }
}

fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T, CliError> {
    flag.or(file)
        .ok_or_else(|| CliError::Usage(format!("missing --{name} (flag or config file)")))
}

fn parse_env(spec: &str) -> Result<EnvSpec, CliError> {
    spec.parse::<EnvSpec>()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn raw_note(scale: Option<&RewardScale>, normalized: f64, horizon: usize) -> String {
    match scale {
        Some(s) => format!(" (raw {})", s.return_to_raw(normalized, horizon)),
        None => String::new(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::DualityCheck(args) => cmd_duality(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn cmd_solve(args: SolveArgs) -> Result<(), CliError> {
    let file = load_file_config(&args.config)?;
    let env_str = required(args.env, file.env, "env")?;
    let rho = required(args.rho, file.rho, "rho")?;
    let horizon = args.horizon.or(file.horizon).unwrap_or(100);
    let out = args
        .out
        .or(file.out_dir)
        .unwrap_or_else(|| PathBuf::from("."));

    let env = parse_env(&env_str)?;
    let (mdp, scale) = env.build(horizon);
    let solution = solve_robust_optimal(&mdp, rho);
    ensure_dir(&out)?;
    let path = out.join(format!("{}_rho{rho}_H{horizon}_solution.json", env.slug()));
    save_solution(&path, &solution)?;

    let value = solution.initial_value(&mdp);
    println!(
        "V*_1(s1) = {value}{} -> {}",
        raw_note(scale.as_ref(), value, horizon),
        path.display()
    );
    Ok(())
}

const TRAIN_CSV_HEADER: &str =
    "episode,cert_lo,cert_hi,epsilon,delta,true_value_pi_bar,regret_increment,cum_regret,seed";

struct TrainJob {
    alg: Algorithm,
    env: EnvSpec,
    horizon: usize,
    episodes: usize,
    rho: f64,
    delta: f64,
    bonus_scale: f64,
    seed: u64,
    out: PathBuf,
    oracle: bool,
}

fn run_train_job(job: &TrainJob) -> Result<(), CliError> {
    let (mdp, _) = job.env.build(job.horizon);
    let config = LearnerConfig::new(job.episodes, job.rho, job.delta, &mdp)
        .with_bonus_scale(job.bonus_scale);
    let mut accumulator = if job.oracle {
        Some(RegretAccumulator::new(&mdp, job.rho))
    } else {
        None
    };

    let base = format!(
        "{}_{}_rho{}_K{}_seed{}",
        job.alg.name(),
        job.env.slug(),
        job.rho,
        job.episodes,
        job.seed
    );
    let csv_path = job.out.join(format!("{base}.csv"));
    let policy_path = job.out.join(format!("{base}_policy.json"));
    let mut csv = BufWriter::new(fs::File::create(&csv_path)?);
    writeln!(csv, "{TRAIN_CSV_HEADER}")?;

    let mut write_row = |csv: &mut BufWriter<fs::File>,
                         episode: usize,
                         lower: f64,
                         upper: f64,
                         epsilon: f64,
                         delta: f64,
                         policy: &DeterministicPolicy|
     -> Result<(), CliError> {
        let oracle_cols = match accumulator.as_mut() {
            Some(acc) => {
                let record = acc.observe(policy);
                format!(
                    "{},{},{}",
                    record.v_pi_bar, record.increment, record.cumulative
                )
            }
            None => ",,".to_string(),
        };
        writeln!(
            csv,
            "{episode},{lower},{upper},{epsilon},{delta},{oracle_cols},{}",
            job.seed
        )?;
        // Flushed per episode so interrupted runs stay inspectable.
        csv.flush()?;
        Ok(())
    };

    let mut rng = stream(job.seed, "train");
    let pi_out = match job.alg {
        Algorithm::Arrlc => {
            let mut row_error = None;
            let (pi_out, _) = arrlc_run_with(&mdp, &config, &mut rng, |view| {
                if row_error.is_none() {
                    row_error = write_row(
                        &mut csv,
                        view.certificate.episode,
                        view.certificate.lower,
                        view.certificate.upper,
                        view.certificate.epsilon,
                        view.delta,
                        view.behavior_policy,
                    )
                    .err();
                }
            });
            if let Some(e) = row_error {
                return Err(e);
            }
            pi_out
        }
        Algorithm::ArUcbh => {
            let mut best_width = f64::INFINITY;
            let mut row_error = None;
            let (pi_out, _) = ucbh_run_with(&mdp, &config, &mut rng, |view| {
                best_width = best_width.min(view.certificate.epsilon);
                if row_error.is_none() {
                    row_error = write_row(
                        &mut csv,
                        view.certificate.episode,
                        view.certificate.lower,
                        view.certificate.upper,
                        view.certificate.epsilon,
                        best_width,
                        view.output_policy,
                    )
                    .err();
                }
            });
            if let Some(e) = row_error {
                return Err(e);
            }
            pi_out
        }
    };
    save_policy(&policy_path, &pi_out)?;
    println!("{} -> {}", csv_path.display(), policy_path.display());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let file = load_file_config(&args.config)?;
    let alg = match (args.alg, file.algorithm.as_deref()) {
        (Some(a), _) => a,
        (None, Some("arrlc")) => Algorithm::Arrlc,
        (None, Some("ar-ucbh")) | (None, Some("ar_ucbh")) => Algorithm::ArUcbh,
        (None, Some(other)) => return Err(CliError::Usage(format!("unknown algorithm '{other}'"))),
        (None, None) => return Err(CliError::Usage("missing --alg".into())),
    };
    let env_str = required(args.env, file.env, "env")?;
    let env = parse_env(&env_str)?;
    let rho = required(args.rho, file.rho, "rho")?;
    let episodes = required(args.episodes, file.episodes, "episodes")?;
    let delta = args.delta.or(file.delta).unwrap_or(0.05);
    let horizon = args.horizon.or(file.horizon).unwrap_or(100);
    let bonus_scale = args.bonus_scale.or(file.bonus_scale).unwrap_or(1.0);
    let out = args
        .out
        .or(file.out_dir)
        .unwrap_or_else(|| PathBuf::from("."));
    let seeds = if args.seed.is_empty() {
        vec![required(None, file.seed, "seed")?]
    } else {
        args.seed
    };
    ensure_dir(&out)?;

    let jobs: Vec<TrainJob> = seeds
        .iter()
        .map(|&seed| TrainJob {
            alg,
            env: env.clone(),
            horizon,
            episodes,
            rho,
            delta,
            bonus_scale,
            seed,
            out: out.clone(),
            oracle: !args.no_oracle,
        })
        .collect();

    if args.jobs > 1 && jobs.len() > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .map_err(|e| CliError::Other(e.to_string()))?;
        let results: Vec<Result<(), CliError>> =
            pool.install(|| jobs.par_iter().map(run_train_job).collect());
        for result in results {
            result?;
        }
        Ok(())
    } else {
        jobs.iter().try_for_each(run_train_job)
    }
}

const EVAL_CSV_HEADER: &str = "policy_name,perturb_kind,p,n,mean_raw,mean_norm,stderr";

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let file = load_file_config(&args.config)?;
    let env_str = required(args.env, file.env, "env")?;
    let env = parse_env(&env_str)?;
    let horizon = args.horizon.or(file.horizon).unwrap_or(100);
    let n = args.n.unwrap_or(100);
    let seed = required(args.seed, file.seed, "seed")?;
    let out = args
        .out
        .or(file.out_dir)
        .unwrap_or_else(|| PathBuf::from("."));

    let (mdp, scale) = env.build(horizon);
    let policy = load_policy(&args.policy)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.policy.display())))?;
    check_dims(&policy, &mdp, "policy")?;
    let policy_name = args.policy_name.unwrap_or_else(|| {
        args.policy
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "policy".into())
    });

    // The evaluation grid: explicit flags, then the config file, then the
    // default fixed/random x {0.1, 0.2}.
    let (kinds, ps) = if !args.kinds.is_empty() || !args.p.is_empty() {
        let kinds = if args.kinds.is_empty() {
            vec!["fixed".to_string(), "random".to_string()]
        } else {
            args.kinds
        };
        let ps = if args.p.is_empty() {
            vec![0.1, 0.2]
        } else {
            args.p
        };
        (kinds, ps)
    } else if let Some(points) = file.eval {
        let kinds = points.iter().map(|pt| pt.kind.clone()).collect();
        let ps = points.iter().map(|pt| pt.p).collect();
        (kinds, ps)
    } else {
        (vec!["fixed".into(), "random".into()], vec![0.1, 0.2])
    };

    let fixed_adversary: Option<DeterministicPolicy> = match &args.adversary {
        Some(path) => {
            let adversary = load_policy(path)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            check_dims(&adversary, &mdp, "adversary")?;
            Some(adversary)
        }
        None if env == EnvSpec::Cliff => Some(build_fixed_adversary_cliff(horizon)),
        None => None,
    };

    ensure_dir(&out)?;
    let csv_path = out.join(format!("{policy_name}_eval.csv"));
    let mut csv = BufWriter::new(fs::File::create(&csv_path)?);
    writeln!(csv, "{EVAL_CSV_HEADER}")?;
    println!("{EVAL_CSV_HEADER}");

    for kind_name in &kinds {
        for &p in &ps {
            let kind = match kind_name.as_str() {
                "random" => PerturbKind::UniformRandom,
                "none" => PerturbKind::None,
                "fixed" => match &fixed_adversary {
                    Some(adversary) => PerturbKind::FixedPolicy(adversary.clone()),
                    None => {
                        eprintln!(
                            "note: skipping kind 'fixed' (no adversary policy for this \
                             environment; pass --adversary)"
                        );
                        continue;
                    }
                },
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown perturbation kind '{other}'"
                    )))
                }
            };
            let spec = PerturbationSpec::new(kind, p);
            let mut rng = stream(seed, &format!("evaluate-{kind_name}-{p}"));
            let report = rollout_perturbed(&mdp, &policy, &spec, n, scale.as_ref(), &mut rng);
            let row = format!(
                "{policy_name},{kind_name},{p},{n},{},{},{}",
                report.mean_return_raw, report.mean_return_normalized, report.std_error
            );
            writeln!(csv, "{row}")?;
            println!("{row}");
        }
    }
    csv.flush()?;
    Ok(())
}

fn check_dims(policy: &DeterministicPolicy, mdp: &TabularMdp, what: &str) -> Result<(), CliError> {
    if !policy.is_valid_for(mdp) {
        return Err(CliError::Usage(format!(
            "{what} dimensions do not match the environment: expected H={} S={} A<{}, \
             found H={} S={}",
            mdp.horizon,
            mdp.num_states,
            mdp.num_actions,
            policy.horizon(),
            policy.num_states()
        )));
    }
    Ok(())
}

fn cmd_duality(args: DualityArgs) -> Result<(), CliError> {
    let env = parse_env(&args.env)?;
    let (mdp, _) = env.build(args.horizon);
    let report = verify_perfect_duality(&mdp, args.rho)?;
    println!(
        "max_min = {}, min_max = {}, gap = {}",
        report.max_min, report.min_max, report.gap
    );
    Ok(())
}
