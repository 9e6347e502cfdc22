use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fistlab::imitator::{rows_to_csv, EvalConfig, EvalReport, PolicyKind};
use fistlab::maze::Region;
use fistlab::pipeline::{
    ablate_stage, eval_stage, finetune_stage, gen_data, run_logs, train_distance_stage, train_skills, write_report,
    ExperimentConfig, Run, StageLosses,
};
use fistlab::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "fistlab", version, about = "Few-shot skill imitation experiments on a point maze")]
struct Cli {
    /// Root directory for run directories.
    #[arg(long, env = "FISTLAB_OUT", default_value = "runs", global = true)]
    out: PathBuf,
    /// Run directory name under the output root, or an absolute path.
    #[arg(long, default_value = "default", global = true)]
    run: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the offline corpus and demonstrations; starts a run.
    GenData(GenArgs),
    /// Pretrain the skill models and BC policies on the corpus.
    TrainSkills,
    /// Train the contrastive distance encoder.
    TrainDistance,
    /// Fine-tune pretrained models on the demonstrations.
    Finetune,
    /// Evaluate policies and write the episode log and CSV report.
    Eval {
        /// Comma-separated policy names.
        #[arg(long, value_delimiter = ',', default_value = "fist,spirl,bc_ft")]
        policies: Vec<PolicyKind>,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Evaluate the ablation variants.
    Ablate {
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Summarize episode logs into report.csv and report.svg.
    Report {
        /// Run directories to read; defaults to the selected run.
        #[arg(long = "from", num_args = 1..)]
        runs: Vec<PathBuf>,
        /// Output directory; defaults to `<out>/report`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Full,
    Desk,
    Smoke,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    #[arg(long)]
    region: Option<Region>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    layout: Option<PathBuf>,
    #[arg(long)]
    transitions: Option<usize>,
    #[arg(long)]
    demos: Option<usize>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    finetune_epochs: Option<usize>,
    /// Also fit the distance encoder on demo pairs.
    #[arg(long)]
    finetune_distance: bool,
    #[arg(long)]
    distance_finetune_steps: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Worker threads for episodes.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    resample_period: Option<usize>,
    /// Use skill means instead of samples.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    eval_seed: Option<u64>,
}

impl EvalArgs {
    fn apply(&self, base: &EvalConfig) -> EvalConfig {
        let mut c = base.clone();
        c.repeats = self.repeats.unwrap_or(c.repeats);
        c.n_starts = self.starts.unwrap_or(c.n_starts);
        c.max_steps = self.max_steps.unwrap_or(c.max_steps);
        c.resample_period = self.resample_period.unwrap_or(c.resample_period);
        c.deterministic |= self.deterministic;
        c.seed = self.eval_seed.unwrap_or(c.seed);
        c
    }
}

fn resolve_config(args: &GenArgs) -> Result<ExperimentConfig> {
    let region = args.region.unwrap_or(Region::Left);
    let mut c = match &args.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => match args.preset {
            Preset::Full => ExperimentConfig::full(region),
            Preset::Desk => ExperimentConfig::desk(region),
            Preset::Smoke => ExperimentConfig::smoke(region),
        },
    };
    if let Some(r) = args.region {
        c.blocked = r;
    }
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(p) = &args.layout {
        c.layout = Some(p.clone());
    }
    if let Some(n) = args.transitions {
        c.data.n_transitions = n;
    }
    if let Some(m) = args.demos {
        c.n_demos = m;
    }
    if let Some(e) = args.pretrain_epochs {
        c.skills.pretrain_epochs = e;
        c.bc.pretrain_epochs = e;
    }
    if let Some(e) = args.finetune_epochs {
        c.skills.finetune_epochs = e;
        c.bc.finetune_epochs = e;
    }
    c.finetune_distance |= args.finetune_distance;
    if let Some(s) = args.distance_finetune_steps {
        c.distance_finetune_steps = s;
    }
    Ok(c)
}

fn print_losses(losses: &StageLosses) {
    for (ck, loss) in losses {
        println!("{}: final loss {loss:.6}", ck.dir());
    }
}

fn print_reports(reports: &[EvalReport]) {
    let rows: Vec<_> = reports.iter().map(|r| r.row.clone()).collect();
    print!("{}", rows_to_csv(&rows));
}

fn run(cli: Cli) -> Result<()> {
    let dir = cli.out.join(&cli.run);
    match cli.command {
        Command::GenData(args) => {
            let config = resolve_config(&args)?;
            let run = gen_data(&config, &dir)?;
            println!("wrote {} ({} files)", dir.display(), run.manifest.files.len());
        }
        Command::TrainSkills => print_losses(&train_skills(&mut Run::open(&dir)?)?),
        Command::TrainDistance => print_losses(&train_distance_stage(&mut Run::open(&dir)?)?),
        Command::Finetune => print_losses(&finetune_stage(&mut Run::open(&dir)?)?),
        Command::Eval { policies, eval } => {
            let mut run = Run::open(&dir)?;
            let config = eval.apply(&run.config.eval);
            print_reports(&eval_stage(&mut run, &policies, &config, eval.jobs)?);
        }
        Command::Ablate { eval } => {
            let mut run = Run::open(&dir)?;
            let config = eval.apply(&run.config.eval);
            print_reports(&ablate_stage(&mut run, &config, eval.jobs)?);
        }
        Command::Report { runs, output } => {
            let runs = if runs.is_empty() { vec![dir] } else { runs };
            let logs = run_logs(&runs);
            if logs.is_empty() {
                return Err(Error::MissingArtifact { name: "episode logs (run `eval` or `ablate` first)".into(), path: runs[0].clone() });
            }
            let refs: Vec<&Path> = logs.iter().map(PathBuf::as_path).collect();
            let output = output.unwrap_or_else(|| cli.out.join("report"));
            let rows = write_report(&refs, &output)?;
            print!("{}", rows_to_csv(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
