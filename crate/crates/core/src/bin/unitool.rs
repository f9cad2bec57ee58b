use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use unitool::config::{load_config, parse_override, RuntimeConfig};
use unitool::curation::{curate, SampledInstance};
use unitool::eval::{
    attach_ground_truth, factory_for, read_jsonl_file, run_eval, score_trajectories, write_outputs,
    BackendMode, EvalOutcome, GroundTruth, Question,
};
use unitool::fault::{usage_report, usage_svg, FaultSchedule};
use unitool::protocol::{read_trajectories, write_jsonl, write_trajectories};
use unitool::rl_math::{score_group, GroupRecord};
use unitool::tools::MODEL_ROUTED_TOOLS;

#[derive(Parser)]
#[command(
    name = "unitool",
    version,
    about = "Parallel tool-orchestration runtime, rewards and data tools"
)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a field, e.g. `--set rewards.theta_tool=2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run k episodes per question and report mean@k.
    Run(RunArgs),
    /// Score trajectories against ground truth.
    Score {
        #[arg(long)]
        trajectories: PathBuf,
        /// JSONL with `id` and `answer` (and optionally `question`).
        #[arg(long)]
        ground_truth: PathBuf,
        /// Per-trajectory rewards; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Aggregate summary; stderr when omitted.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Advantages, ratios and surrogate value for each group in a JSONL file.
    GrpoScore {
        #[arg(long)]
        groups: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Filter RL instances and select balanced SFT trajectories.
    Curate {
        /// Sampled instances for the RL filter.
        #[arg(long)]
        rl_pool: PathBuf,
        /// Sampled instances for SFT selection; defaults to the RL pool.
        #[arg(long)]
        sft_pool: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print the merged configuration, or the first invalid field.
    ValidateConfig,
    /// Run episodes with a fault schedule and write a usage report.
    FaultRun {
        #[arg(long)]
        schedule: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Also write the usage report as an SVG bar chart.
        #[arg(long)]
        plot: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    questions: Option<PathBuf>,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Use the offline mock world (requires a seed).
    #[arg(long)]
    mock: bool,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        if let Some(p) = &self.questions {
            put("eval.questions_file", toml_string(p));
        }
        if let Some(p) = &self.ground_truth {
            put("eval.ground_truth_file", toml_string(p));
        }
        if let Some(p) = &self.output_dir {
            put("eval.output_dir", toml_string(p));
        }
        if let Some(k) = self.k {
            put("eval.k", k.to_string());
        }
        if let Some(n) = self.parallelism {
            put("eval.episode_parallelism", n.to_string());
        }
        if self.mock {
            put("eval.backend_mode", "\"mock\"".into());
        }
        if let Some(s) = self.seed {
            put("eval.seed", s.to_string());
        }
        out
    }
}

fn toml_string(p: &Path) -> String {
    toml::Value::String(p.display().to_string()).to_string()
}

type Failure = (u8, String);

fn config(cli: &Cli, extra: Vec<(String, String)>) -> Result<RuntimeConfig, Failure> {
    let mut overrides = cli
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| (2, e.to_string()))?;
    // Dedicated flags win over `--set`.
    overrides.extend(extra);
    load_config(cli.config.as_deref(), &overrides).map_err(|e| (2, e.to_string()))
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => {
            Box::new(BufWriter::new(File::create(p).map_err(|e| {
                (1, format!("cannot write `{}`: {e}", p.display()))
            })?))
        }
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn load_questions(cfg: &RuntimeConfig) -> Result<Vec<Question>, Failure> {
    let path = cfg.eval.questions_file.as_ref().ok_or_else(|| {
        (
            2,
            "eval.questions_file is not set (use --questions)".to_string(),
        )
    })?;
    let questions: Vec<Question> = read_jsonl_file(path).map_err(|e| (1, e.to_string()))?;
    let truth: Vec<GroundTruth> = match &cfg.eval.ground_truth_file {
        Some(p) => read_jsonl_file(p).map_err(|e| (1, e.to_string()))?,
        None => Vec::new(),
    };
    attach_ground_truth(questions, &truth).map_err(|e| (1, e.to_string()))
}

async fn episodes(
    cfg: &RuntimeConfig,
    schedule: Option<FaultSchedule>,
) -> Result<EvalOutcome, Failure> {
    let questions = load_questions(cfg)?;
    let factory = factory_for(cfg, schedule).map_err(|e| (2, e.to_string()))?;
    let outcome = run_eval(
        &questions,
        cfg.eval.k,
        cfg.eval.episode_parallelism,
        factory,
    )
    .await;
    write_outputs(&cfg.eval.output_dir, &outcome).map_err(|e| (1, e.to_string()))?;
    Ok(outcome)
}

fn report_run(cfg: &RuntimeConfig, outcome: &EvalOutcome) {
    let mode = match cfg.eval.backend_mode {
        BackendMode::Mock => "mock",
        BackendMode::Remote => "remote",
    };
    eprintln!(
        "{} questions x k={} ({mode}): mean@{} = {:.4}, {} failed episode(s); wrote {}",
        outcome.summary.questions,
        outcome.summary.k,
        outcome.summary.k,
        outcome.summary.mean_at_k,
        outcome.summary.failed_episodes,
        cfg.eval.output_dir.display()
    );
}

async fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run(args) => {
            let cfg = config(cli, args.overrides())?;
            let outcome = episodes(&cfg, None).await?;
            report_run(&cfg, &outcome);
        }
        Command::Score {
            trajectories,
            ground_truth,
            output,
            summary,
        } => {
            let cfg = config(cli, Vec::new())?;
            let file = File::open(trajectories)
                .map_err(|e| (1, format!("{}: {e}", trajectories.display())))?;
            let trajs = read_trajectories(BufReader::new(file))
                .map_err(|e| (1, format!("{}: {e}", trajectories.display())))?;
            let truth: Vec<Question> =
                read_jsonl_file(ground_truth).map_err(|e| (1, e.to_string()))?;
            let (records, agg) =
                score_trajectories(&trajs, &truth, &cfg.rewards).map_err(|e| (1, e.to_string()))?;
            let mut out = open_out(output.as_deref())?;
            write_jsonl(&mut out, &records).map_err(|e| (1, e.to_string()))?;
            out.flush().map_err(|e| (1, e.to_string()))?;
            let text = serde_json::to_string_pretty(&agg).expect("summary serializes");
            match summary {
                Some(p) => std::fs::write(p, text + "\n")
                    .map_err(|e| (1, format!("{}: {e}", p.display())))?,
                None => eprintln!("{text}"),
            }
        }
        Command::GrpoScore { groups, output } => {
            let cfg = config(cli, Vec::new())?;
            let records: Vec<GroupRecord> =
                read_jsonl_file(groups).map_err(|e| (1, e.to_string()))?;
            let scores = records
                .iter()
                .enumerate()
                .map(|(i, g)| {
                    score_group(g, &cfg.grpo).map_err(|e| (1, format!("group {}: {e}", i + 1)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut out = open_out(output.as_deref())?;
            write_jsonl(&mut out, &scores).map_err(|e| (1, e.to_string()))?;
            out.flush().map_err(|e| (1, e.to_string()))?;
        }
        Command::Curate {
            rl_pool,
            sft_pool,
            out_dir,
        } => {
            let cfg = config(cli, Vec::new())?;
            let rl: Vec<SampledInstance> =
                read_jsonl_file(rl_pool).map_err(|e| (1, e.to_string()))?;
            let sft: Vec<SampledInstance> = match sft_pool {
                Some(p) => read_jsonl_file(p).map_err(|e| (1, e.to_string()))?,
                None => rl.clone(),
            };
            let result = curate(&rl, &sft, &cfg.curation);
            let io = |p: &Path| {
                let p = p.display().to_string();
                move |e: std::io::Error| (1, format!("cannot write `{p}`: {e}"))
            };
            std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
            let sft_path = out_dir.join("sft.jsonl");
            write_trajectories(open_out(Some(&sft_path))?, &result.sft)
                .map_err(|e| (1, e.to_string()))?;
            let rl_path = out_dir.join("rl.jsonl");
            write_jsonl(open_out(Some(&rl_path))?, &result.rl).map_err(|e| (1, e.to_string()))?;
            let report_path = out_dir.join("report.json");
            let text = serde_json::to_string_pretty(&result.report).expect("report serializes");
            std::fs::write(&report_path, text + "\n").map_err(io(&report_path))?;
            eprintln!(
                "kept {} RL instance(s) and {} SFT trajectories; wrote {}",
                result.report.rl_kept,
                result.report.sft_kept,
                out_dir.display()
            );
        }
        Command::ValidateConfig => {
            let cfg = config(cli, Vec::new())?;
            print!("{}", cfg.to_toml());
        }
        Command::FaultRun {
            schedule,
            run,
            plot,
        } => {
            let cfg = config(cli, run.overrides())?;
            let text = std::fs::read_to_string(schedule)
                .map_err(|e| (1, format!("{}: {e}", schedule.display())))?;
            let sched = FaultSchedule::parse(&text)
                .map_err(|e| (2, format!("{}: {e}", schedule.display())))?;
            sched
                .validate(cfg.orchestrator.max_rounds, cfg.orchestrator.max_parallel)
                .map_err(|e| (2, format!("{}: {e}", schedule.display())))?;
            let outcome = episodes(&cfg, Some(sched)).await?;
            report_run(&cfg, &outcome);
            let report = usage_report(
                &outcome.trajectories,
                &MODEL_ROUTED_TOOLS,
                &cfg.models.default_model,
            )
            .ok_or_else(|| (1, "no trajectories to report on".to_string()))?;
            let usage_path = cfg.eval.output_dir.join("usage.json");
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            std::fs::write(&usage_path, text + "\n")
                .map_err(|e| (1, format!("{}: {e}", usage_path.display())))?;
            if *plot {
                let svg_path = cfg.eval.output_dir.join("usage.svg");
                std::fs::write(&svg_path, usage_svg(&report))
                    .map_err(|e| (1, format!("{}: {e}", svg_path.display())))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::FAILURE;
        }
    };
    match runtime.block_on(dispatch(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
