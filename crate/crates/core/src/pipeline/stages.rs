use std::fs;
use std::path::{Path, PathBuf};

use rand::RngCore;

use super::config::{ExperimentConfig, CONFIG_FILE};
use super::manifest::{unix_now, RunManifest};
use super::report::{EPISODES_FILE, REPORT_CSV};
use crate::datastore::{load_dataset, save_dataset, DemoSet, StateNorm, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::imitator::{
    evaluate_parallel, finetune_bc, pretrain_bc, records_to_jsonl, rows_to_csv, Artifacts, BcKind, BcPolicy,
    EvalConfig, EvalReport, PolicyKind,
};
use crate::maze::{generate_demos, generate_offline_data, stream_rng, MazeLayout, STATE_DIM};
use crate::metric::{fit_distance, train_distance, DistanceEncoder};
use crate::skillmodel::{finetune, pretrain, train_on_demos_only, PriorKind, SkillModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    GenData,
    TrainSkills,
    TrainDistance,
    Finetune,
    Eval,
    Ablate,
}

impl Stage {
    pub fn command(self) -> &'static str {
        match self {
            Stage::GenData => "gen-data",
            Stage::TrainSkills => "train-skills",
            Stage::TrainDistance => "train-distance",
            Stage::Finetune => "finetune",
            Stage::Eval => "eval",
            Stage::Ablate => "ablate",
        }
    }
}

pub const CORPUS_DIR: &str = "data/corpus";
pub const DEMOS_DIR: &str = "data/demos";
pub const EVAL_DIR: &str = "eval";
pub const ABLATE_DIR: &str = "ablate";

/// Checkpoints a run can hold, each under `models/<dir>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Checkpoint {
    SkillsPretrained,
    SpirlPretrained,
    BcPretrained,
    GoalBcPretrained,
    Distance,
    SkillsFinetuned,
    SpirlFinetuned,
    SkillsDemoOnly,
    BcFinetuned,
    GoalBcFinetuned,
}

impl Checkpoint {
    pub fn dir(self) -> &'static str {
        match self {
            Checkpoint::SkillsPretrained => "skills_pretrained",
            Checkpoint::SpirlPretrained => "spirl_pretrained",
            Checkpoint::BcPretrained => "bc_pretrained",
            Checkpoint::GoalBcPretrained => "goal_bc_pretrained",
            Checkpoint::Distance => "distance",
            Checkpoint::SkillsFinetuned => "skills_finetuned",
            Checkpoint::SpirlFinetuned => "spirl_finetuned",
            Checkpoint::SkillsDemoOnly => "skills_demo_only",
            Checkpoint::BcFinetuned => "bc_finetuned",
            Checkpoint::GoalBcFinetuned => "goal_bc_finetuned",
        }
    }

    /// The command that writes this checkpoint.
    pub fn stage(self) -> Stage {
        match self {
            Checkpoint::SkillsPretrained | Checkpoint::SpirlPretrained | Checkpoint::BcPretrained | Checkpoint::GoalBcPretrained => {
                Stage::TrainSkills
            }
            Checkpoint::Distance => Stage::TrainDistance,
            _ => Stage::Finetune,
        }
    }

    pub fn path(self, run: &Path) -> PathBuf {
        run.join("models").join(self.dir())
    }
}

/// Checkpoints each policy variant reads.
pub fn requirements(kind: PolicyKind) -> &'static [Checkpoint] {
    use Checkpoint::*;
    match kind {
        PolicyKind::Fist => &[SkillsFinetuned, Distance],
        PolicyKind::FistEuc | PolicyKind::FistOracle => &[SkillsFinetuned],
        PolicyKind::FistNoFt => &[SkillsPretrained, Distance],
        PolicyKind::FistNoPretrain => &[SkillsDemoOnly, Distance],
        PolicyKind::Spirl => &[SpirlFinetuned],
        PolicyKind::SpirlClosest | PolicyKind::SpirlHstep => &[SpirlFinetuned, Distance],
        PolicyKind::BcFt => &[BcFinetuned],
        PolicyKind::GoalBc => &[GoalBcFinetuned, Distance],
    }
}

/// Seed for stage-level item `k` of a run.
pub fn stage_seed(master: u64, k: u64) -> u64 {
    stream_rng(master, (1 << 40) | k).next_u64()
}

const SEED_CORPUS: u64 = 0;
const SEED_DEMOS: u64 = 1;
const SEED_SKILLS: u64 = 2;
const SEED_SPIRL: u64 = 3;
const SEED_BC: u64 = 4;
const SEED_GOAL_BC: u64 = 5;
const SEED_DISTANCE: u64 = 6;
const SEED_FINETUNE: u64 = 7;

/// An opened run directory whose config matches its manifest.
pub struct Run {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub layout: MazeLayout,
    pub manifest: RunManifest,
}

impl Run {
    pub fn open(dir: &Path) -> Result<Self> {
        let config = ExperimentConfig::load_run(dir)?;
        let manifest = RunManifest::load(dir)?;
        if manifest.config_hash != config.content_hash() {
            return Err(Error::malformed(format!(
                "{} was edited after gen-data; start a new run directory",
                dir.join(CONFIG_FILE).display()
            )));
        }
        let layout = config.load_layout()?;
        Ok(Self { dir: dir.to_path_buf(), config, layout, manifest })
    }

    fn require(&self, stages: &[Stage]) -> Result<()> {
        stages.iter().try_for_each(|s| self.manifest.verify_stage(&self.dir, s.command()))
    }

    fn finish(&mut self, stage: Stage, started: u64, outputs: &[PathBuf]) -> Result<()> {
        let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
        self.manifest.record(&self.dir, stage.command(), started, &refs)?;
        self.manifest.save(&self.dir)
    }

    pub fn norm(&self) -> StateNorm {
        StateNorm::for_maze(&self.layout, &self.config.data.env)
    }

    pub fn seed(&self, k: u64) -> u64 {
        stage_seed(self.config.seed, k)
    }

    pub fn corpus(&self) -> Result<TrajectoryDataset> {
        load_dataset(&self.dir.join(CORPUS_DIR))
    }

    pub fn demos(&self) -> Result<DemoSet> {
        DemoSet::from_dataset(load_dataset(&self.dir.join(DEMOS_DIR))?)
    }

    fn missing(&self, ckpt: Checkpoint) -> Error {
        Error::MissingArtifact {
            name: format!("{} checkpoint (run `{}` first)", ckpt.dir(), ckpt.stage().command()),
            path: ckpt.path(&self.dir),
        }
    }

    pub fn load_skills(&self, ckpt: Checkpoint) -> Result<SkillModel> {
        let p = ckpt.path(&self.dir);
        if !p.exists() {
            return Err(self.missing(ckpt));
        }
        SkillModel::load(&p, Some(self.config.skills.horizon))
    }

    pub fn load_bc(&self, ckpt: Checkpoint) -> Result<BcPolicy> {
        let p = ckpt.path(&self.dir);
        if !p.exists() {
            return Err(self.missing(ckpt));
        }
        BcPolicy::load(&p)
    }

    pub fn load_distance(&self) -> Result<DistanceEncoder> {
        let p = Checkpoint::Distance.path(&self.dir);
        if !p.exists() {
            return Err(self.missing(Checkpoint::Distance));
        }
        DistanceEncoder::load(&p)
    }

    /// Loads exactly the checkpoints the given policies read.
    pub fn artifacts(&self, policies: &[PolicyKind]) -> Result<Artifacts> {
        let c = &self.config.data;
        let mut art = Artifacts::new(self.layout.clone(), c.env, c.gains, self.demos()?);
        let mut needed: Vec<Checkpoint> = Vec::new();
        for k in policies {
            for &ck in requirements(*k) {
                if !needed.contains(&ck) {
                    needed.push(ck);
                }
            }
        }
        for ck in needed {
            match ck {
                Checkpoint::SkillsPretrained => art.skills_pretrained = Some(self.load_skills(ck)?),
                Checkpoint::SkillsFinetuned => art.skills_finetuned = Some(self.load_skills(ck)?),
                Checkpoint::SkillsDemoOnly => art.skills_demo_only = Some(self.load_skills(ck)?),
                Checkpoint::SpirlFinetuned => art.spirl_finetuned = Some(self.load_skills(ck)?),
                Checkpoint::Distance => art.distance = Some(self.load_distance()?),
                Checkpoint::BcFinetuned => art.bc = Some(self.load_bc(ck)?),
                Checkpoint::GoalBcFinetuned => art.goal_bc = Some(self.load_bc(ck)?),
                Checkpoint::SpirlPretrained | Checkpoint::BcPretrained | Checkpoint::GoalBcPretrained => {}
            }
        }
        Ok(art)
    }
}

/// Writes the config, offline corpus and demos into a fresh run directory.
pub fn gen_data(config: &ExperimentConfig, dir: &Path) -> Result<Run> {
    config.validate()?;
    let started = unix_now();
    let layout = config.load_layout()?;
    let mut config = config.clone();
    config.out_dir = dir.to_path_buf();
    let hash = config.content_hash();
    let corpus = generate_offline_data(&layout, Some(config.blocked), &config.data, stage_seed(config.seed, SEED_CORPUS), hash.clone())?;
    let demos = generate_demos(
        &layout,
        config.blocked,
        config.n_demos,
        stage_seed(config.seed, SEED_DEMOS),
        &config.data.env,
        config.data.gains,
    )?;
    if corpus.meta.state_dim != STATE_DIM {
        return Err(Error::config("corpus state dimension disagrees with the maze"));
    }
    if dir.join("models").exists() {
        fs::remove_dir_all(dir.join("models")).map_err(|e| Error::io(dir, e))?;
    }
    config.save(dir)?;
    save_dataset(&corpus, &dir.join(CORPUS_DIR))?;
    save_dataset(&demos.dataset, &dir.join(DEMOS_DIR))?;
    let mut run = Run { dir: dir.to_path_buf(), config, layout, manifest: RunManifest::new(hash) };
    run.finish(Stage::GenData, started, &[dir.join(CONFIG_FILE), dir.join("data")])?;
    Ok(run)
}

fn save_checkpoints(run: &Run, items: &[(Checkpoint, &dyn Fn(&Path) -> Result<()>)]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for (ck, save) in items {
        let p = ck.path(&run.dir);
        if p.exists() {
            fs::remove_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        save(&p)?;
        paths.push(p);
    }
    Ok(paths)
}

/// Final training losses of one stage, by checkpoint.
pub type StageLosses = Vec<(Checkpoint, f64)>;

fn last(xs: &[f64]) -> f64 {
    xs.last().copied().unwrap_or(f64::NAN)
}

fn last_total(log: &crate::skillmodel::TrainLog) -> f64 {
    log.epochs.last().map_or(f64::NAN, |t| t.total)
}

/// Pretrains the inverse-prior and state-prior skill models and both BC
/// policies on the offline corpus.
pub fn train_skills(run: &mut Run) -> Result<StageLosses> {
    run.require(&[Stage::GenData])?;
    let started = unix_now();
    let corpus = run.corpus()?;
    let c = &run.config;
    let (skills, slog) = pretrain(&corpus, &c.skills, run.norm(), run.seed(SEED_SKILLS))?;
    let state_only = c.skills.clone().with_prior(PriorKind::StateOnly);
    let (spirl, plog) = pretrain(&corpus, &state_only, run.norm(), run.seed(SEED_SPIRL))?;
    let (bc, blog) = pretrain_bc(BcKind::Plain, &corpus, &c.bc, run.norm(), run.seed(SEED_BC))?;
    let (gbc, glog) = pretrain_bc(BcKind::Goal, &corpus, &c.bc, run.norm(), run.seed(SEED_GOAL_BC))?;
    let paths = save_checkpoints(
        run,
        &[
            (Checkpoint::SkillsPretrained, &|p| skills.save(p)),
            (Checkpoint::SpirlPretrained, &|p| spirl.save(p)),
            (Checkpoint::BcPretrained, &|p| bc.save(p)),
            (Checkpoint::GoalBcPretrained, &|p| gbc.save(p)),
        ],
    )?;
    run.finish(Stage::TrainSkills, started, &paths)?;
    Ok(vec![
        (Checkpoint::SkillsPretrained, last_total(&slog)),
        (Checkpoint::SpirlPretrained, last_total(&plog)),
        (Checkpoint::BcPretrained, last(&blog)),
        (Checkpoint::GoalBcPretrained, last(&glog)),
    ])
}

/// Fits the contrastive encoder on the corpus, then optionally on demo pairs.
pub fn train_distance_stage(run: &mut Run) -> Result<StageLosses> {
    run.require(&[Stage::GenData])?;
    let started = unix_now();
    let corpus = run.corpus()?;
    let (mut enc, mut losses) = train_distance(&corpus, &run.config.distance, run.norm(), run.seed(SEED_DISTANCE))?;
    if run.config.finetune_distance && run.config.distance_finetune_steps > 0 {
        let demos = run.demos()?;
        let mut rng = stream_rng(run.seed(SEED_DISTANCE), 2);
        losses.extend(fit_distance(&mut enc, &demos.dataset, run.config.distance_finetune_steps, &mut rng)?);
    }
    let paths = save_checkpoints(run, &[(Checkpoint::Distance, &|p| enc.save(p))])?;
    run.finish(Stage::TrainDistance, started, &paths)?;
    Ok(vec![(Checkpoint::Distance, last(&losses))])
}

/// Fine-tunes every pretrained model on the demos and trains the demo-only skill model.
pub fn finetune_stage(run: &mut Run) -> Result<StageLosses> {
    run.require(&[Stage::GenData, Stage::TrainSkills])?;
    let started = unix_now();
    let demos = run.demos()?;
    let seed = run.seed(SEED_FINETUNE);
    let mut skills = run.load_skills(Checkpoint::SkillsPretrained)?;
    let slog = finetune(&mut skills, &demos.dataset, seed)?;
    let mut spirl = run.load_skills(Checkpoint::SpirlPretrained)?;
    let plog = finetune(&mut spirl, &demos.dataset, seed)?;
    let (scratch, dlog) = train_on_demos_only(&demos.dataset, &run.config.skills, run.norm(), seed)?;
    let mut bc = run.load_bc(Checkpoint::BcPretrained)?;
    let blog = finetune_bc(&mut bc, &demos.dataset, seed)?;
    let mut gbc = run.load_bc(Checkpoint::GoalBcPretrained)?;
    let glog = finetune_bc(&mut gbc, &demos.dataset, seed)?;
    let paths = save_checkpoints(
        run,
        &[
            (Checkpoint::SkillsFinetuned, &|p| skills.save(p)),
            (Checkpoint::SpirlFinetuned, &|p| spirl.save(p)),
            (Checkpoint::SkillsDemoOnly, &|p| scratch.save(p)),
            (Checkpoint::BcFinetuned, &|p| bc.save(p)),
            (Checkpoint::GoalBcFinetuned, &|p| gbc.save(p)),
        ],
    )?;
    run.finish(Stage::Finetune, started, &paths)?;
    Ok(vec![
        (Checkpoint::SkillsFinetuned, last_total(&slog)),
        (Checkpoint::SpirlFinetuned, last_total(&plog)),
        (Checkpoint::SkillsDemoOnly, last_total(&dlog)),
        (Checkpoint::BcFinetuned, last(&blog)),
        (Checkpoint::GoalBcFinetuned, last(&glog)),
    ])
}

/// One policy evaluation, labelled for the episode log.
#[derive(Clone, Debug)]
pub struct EvalSpec {
    pub kind: PolicyKind,
    pub label: String,
    pub resample_period: usize,
}

impl EvalSpec {
    pub fn plain(kind: PolicyKind, resample_period: usize) -> Self {
        Self { kind, label: kind.name().to_string(), resample_period }
    }
}

/// Variants covering the fine-tuning, pretraining, lookup, distance and
/// resampling ablations.
pub fn ablation_specs(horizon: usize) -> Vec<EvalSpec> {
    let mut specs: Vec<EvalSpec> = [
        PolicyKind::Fist,
        PolicyKind::FistNoFt,
        PolicyKind::FistNoPretrain,
        PolicyKind::FistOracle,
        PolicyKind::FistEuc,
        PolicyKind::Spirl,
        PolicyKind::SpirlClosest,
        PolicyKind::SpirlHstep,
    ]
    .into_iter()
    .map(|k| EvalSpec::plain(k, 1))
    .collect();
    specs.push(EvalSpec { kind: PolicyKind::Fist, label: format!("fist_t{horizon}"), resample_period: horizon });
    specs
}

fn run_evals(run: &mut Run, stage: Stage, out: &str, specs: &[EvalSpec], eval: &EvalConfig, jobs: usize) -> Result<Vec<EvalReport>> {
    run.require(&[Stage::GenData])?;
    if specs.is_empty() {
        return Err(Error::config("no policies to evaluate"));
    }
    let started = unix_now();
    let kinds: Vec<PolicyKind> = specs.iter().map(|s| s.kind).collect();
    let art = run.artifacts(&kinds)?;
    let mut reports = Vec::with_capacity(specs.len());
    for spec in specs {
        let config = EvalConfig { resample_period: spec.resample_period, ..eval.clone() };
        let mut report = evaluate_parallel(spec.kind, &art, &config, jobs)?;
        report.row.policy = spec.label.clone();
        reports.push(report);
    }
    let dir = run.dir.join(out);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let records: Vec<_> = reports.iter().flat_map(EvalReport::records).collect();
    let rows: Vec<_> = reports.iter().map(|r| r.row.clone()).collect();
    for (file, text) in [(EPISODES_FILE, records_to_jsonl(&records)), (REPORT_CSV, rows_to_csv(&rows))] {
        let p = dir.join(file);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    run.finish(stage, started, &[dir.join(EPISODES_FILE), dir.join(REPORT_CSV)])?;
    Ok(reports)
}

/// Evaluates the given policies and writes `eval/episodes.jsonl` and `eval/report.csv`.
pub fn eval_stage(run: &mut Run, policies: &[PolicyKind], eval: &EvalConfig, jobs: usize) -> Result<Vec<EvalReport>> {
    let specs: Vec<EvalSpec> = policies.iter().map(|&k| EvalSpec::plain(k, eval.resample_period)).collect();
    run_evals(run, Stage::Eval, EVAL_DIR, &specs, eval, jobs)
}

/// Runs [`ablation_specs`] into `ablate/`.
pub fn ablate_stage(run: &mut Run, eval: &EvalConfig, jobs: usize) -> Result<Vec<EvalReport>> {
    let specs = ablation_specs(run.config.skills.horizon);
    run_evals(run, Stage::Ablate, ABLATE_DIR, &specs, eval, jobs)
}

/// Every training stage in order.
pub fn train_all(config: &ExperimentConfig, dir: &Path) -> Result<Run> {
    let mut run = gen_data(config, dir)?;
    train_skills(&mut run)?;
    train_distance_stage(&mut run)?;
    finetune_stage(&mut run)?;
    Ok(run)
}

/// Episode logs present in the given run directories.
pub fn run_logs(runs: &[PathBuf]) -> Vec<PathBuf> {
    runs.iter()
        .flat_map(|r| [r.join(EVAL_DIR).join(EPISODES_FILE), r.join(ABLATE_DIR).join(EPISODES_FILE)])
        .filter(|p| p.exists())
        .collect()
}
