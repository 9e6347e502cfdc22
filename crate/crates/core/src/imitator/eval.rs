use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::bc::{BcKind, BcPolicy};
use super::episode::{run_episode, Agent, BcAgent, Conditioning, EpisodeResult, SkillAgent, Task};
use crate::datastore::DemoSet;
use crate::error::{Error, Result};
use crate::maze::{sample_start_cells, stream_rng, Cell, EnvConfig, Gains, MazeLayout, MazeState, Region};
use crate::metric::{DemoIndex, DistanceEncoder, StateMetric};
use crate::skillmodel::{PriorKind, SkillModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Fist,
    FistEuc,
    FistNoFt,
    FistNoPretrain,
    FistOracle,
    Spirl,
    SpirlClosest,
    SpirlHstep,
    BcFt,
    GoalBc,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 10] = [
        PolicyKind::Fist,
        PolicyKind::FistEuc,
        PolicyKind::FistNoFt,
        PolicyKind::FistNoPretrain,
        PolicyKind::FistOracle,
        PolicyKind::Spirl,
        PolicyKind::SpirlClosest,
        PolicyKind::SpirlHstep,
        PolicyKind::BcFt,
        PolicyKind::GoalBc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Fist => "fist",
            PolicyKind::FistEuc => "fist_euc",
            PolicyKind::FistNoFt => "fist_no_ft",
            PolicyKind::FistNoPretrain => "fist_no_pretrain",
            PolicyKind::FistOracle => "fist_oracle",
            PolicyKind::Spirl => "spirl",
            PolicyKind::SpirlClosest => "spirl_closest",
            PolicyKind::SpirlHstep => "spirl_hstep",
            PolicyKind::BcFt => "bc_ft",
            PolicyKind::GoalBc => "goal_bc",
        }
    }

    /// Whether the policy draws skills and so honors the resample period.
    pub fn uses_skills(self) -> bool {
        !matches!(self, PolicyKind::BcFt | PolicyKind::GoalBc)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        if key == "bc" {
            return Ok(PolicyKind::BcFt);
        }
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::config(format!("unknown policy `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub max_steps: usize,
    /// Steps between skill draws.
    pub resample_period: usize,
    pub n_starts: usize,
    /// Episodes per start.
    pub repeats: usize,
    /// Use the prior mean instead of sampling.
    pub deterministic: bool,
    pub seed: u64,
    #[serde(default)]
    pub record_traces: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { max_steps: 2000, resample_period: 1, n_starts: 10, repeats: 1, deterministic: false, seed: 0, record_traces: false }
    }
}

impl EvalConfig {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.resample_period == 0 || self.resample_period > horizon {
            return Err(Error::config(format!("resample period must be in 1..={horizon}, got {}", self.resample_period)));
        }
        if self.n_starts == 0 || self.repeats == 0 {
            return Err(Error::config("evaluation needs at least one start and one repeat"));
        }
        Ok(())
    }
}

/// `(max_length - length) / max_length`.
pub fn normalized_score(length: f64, max_length: f64) -> Result<f64> {
    if !(0.0..=max_length).contains(&length) || max_length <= 0.0 {
        return Err(Error::config(format!("episode length {length} outside [0, {max_length}]")));
    }
    Ok((max_length - length) / max_length)
}

/// Aggregate statistics for one (policy, task) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub policy: String,
    pub task: String,
    pub episodes: usize,
    pub max_steps: usize,
    pub mean_length: f64,
    pub std_length: f64,
    pub stderr_length: f64,
    pub success_rate: f64,
    pub success_std: f64,
    pub normalized_score: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ReportRow {
    /// Sample statistics over `(length, success)` pairs.
    pub fn from_episodes(policy: &str, task: &str, episodes: &[(usize, bool)], max_steps: usize) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::config(format!("no episodes for {policy} on {task}")));
        }
        let lengths: Vec<f64> = episodes.iter().map(|e| e.0 as f64).collect();
        let hits: Vec<f64> = episodes.iter().map(|e| if e.1 { 1.0 } else { 0.0 }).collect();
        let (mean_length, std_length) = mean_std(&lengths);
        let (success_rate, success_std) = mean_std(&hits);
        Ok(Self {
            policy: policy.into(),
            task: task.into(),
            episodes: episodes.len(),
            max_steps,
            mean_length,
            std_length,
            stderr_length: std_length / (episodes.len() as f64).sqrt(),
            success_rate,
            success_std,
            normalized_score: normalized_score(mean_length, max_steps as f64)?,
        })
    }
}

pub const CSV_HEADER: &str =
    "policy,task,episodes,max_steps,mean_length,std_length,stderr_length,success_rate,success_std,normalized_score";

impl ReportRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.policy,
            self.task,
            self.episodes,
            self.max_steps,
            self.mean_length,
            self.std_length,
            self.stderr_length,
            self.success_rate,
            self.success_std,
            self.normalized_score
        )
    }
}

pub fn rows_to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// One line of the raw episode log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub policy: String,
    pub task: String,
    pub start_id: usize,
    pub repeat: usize,
    pub start_cell: Cell,
    pub seed: u64,
    pub max_steps: usize,
    pub length: usize,
    pub success: bool,
}

pub fn records_to_jsonl(records: &[EpisodeRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
}

pub fn parse_jsonl(text: &str) -> Result<Vec<EpisodeRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::malformed(format!("episode log line {}: {e}", n + 1))))
        .collect()
}

/// Report rows for every (policy, task) pair in the log, in first-seen order.
pub fn summarize_records(records: &[EpisodeRecord]) -> Result<Vec<ReportRow>> {
    let mut groups: Vec<((String, String, usize), Vec<(usize, bool)>)> = Vec::new();
    for r in records {
        if r.length > r.max_steps {
            return Err(Error::malformed(format!("episode length {} exceeds max_steps {}", r.length, r.max_steps)));
        }
        let key = (r.policy.clone(), r.task.clone(), r.max_steps);
        match groups.iter_mut().find(|(k, _)| k.0 == key.0 && k.1 == key.1) {
            Some((k, eps)) if k.2 == key.2 => eps.push((r.length, r.success)),
            Some(_) => return Err(Error::malformed(format!("{} on {} mixes max_steps values", r.policy, r.task))),
            None => groups.push((key, vec![(r.length, r.success)])),
        }
    }
    groups.iter().map(|((p, t, m), eps)| ReportRow::from_episodes(p, t, eps, *m)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub row: ReportRow,
    pub resample_period: usize,
    pub starts: Vec<Cell>,
    pub repeats: usize,
    pub seed: u64,
    /// Start-major: all repeats of start 0, then start 1, ...
    pub episodes: Vec<EpisodeResult>,
}

impl EvalReport {
    pub fn records(&self) -> Vec<EpisodeRecord> {
        self.episodes
            .iter()
            .enumerate()
            .map(|(k, e)| EpisodeRecord {
                policy: self.row.policy.clone(),
                task: self.row.task.clone(),
                start_id: k / self.repeats,
                repeat: k % self.repeats,
                start_cell: self.starts[k / self.repeats],
                seed: self.seed,
                max_steps: self.row.max_steps,
                length: e.length,
                success: e.success,
            })
            .collect()
    }

    /// Mean episode length from each start, over its repeats.
    pub fn per_start_mean_length(&self) -> Vec<f64> {
        self.episodes.chunks(self.repeats).map(|c| c.iter().map(|e| e.length as f64).sum::<f64>() / c.len() as f64).collect()
    }
}

/// Everything a policy variant may need; absent pieces are reported by name.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub task: Task,
    pub region: Option<Region>,
    pub demos: DemoSet,
    pub skills_pretrained: Option<SkillModel>,
    pub skills_finetuned: Option<SkillModel>,
    pub skills_demo_only: Option<SkillModel>,
    pub spirl_finetuned: Option<SkillModel>,
    pub distance: Option<DistanceEncoder>,
    pub bc: Option<BcPolicy>,
    pub goal_bc: Option<BcPolicy>,
}

impl Artifacts {
    pub fn new(layout: MazeLayout, env: EnvConfig, gains: Gains, demos: DemoSet) -> Self {
        let task = Task { layout, env, gains, goal_cell: demos.goal.cell, goal: demos.goal.position };
        Self {
            task,
            region: demos.goal.region,
            demos,
            skills_pretrained: None,
            skills_finetuned: None,
            skills_demo_only: None,
            spirl_finetuned: None,
            distance: None,
            bc: None,
            goal_bc: None,
        }
    }

    pub fn task_name(&self) -> String {
        self.region.map_or_else(|| "custom".to_string(), |r| r.name().to_string())
    }
}

fn need<'a, T>(item: &'a Option<T>, what: &str, kind: PolicyKind) -> Result<&'a T> {
    item.as_ref().ok_or_else(|| Error::config(format!("policy {kind} needs the {what} artifact")))
}

/// Fixed evaluation starts drawn once from the master seed.
pub fn eval_starts(layout: &MazeLayout, region: Option<Region>, goal: Cell, n: usize, seed: u64) -> Result<Vec<Cell>> {
    sample_start_cells(layout, region, Some(goal), n, &mut stream_rng(seed, u64::MAX - 1))
}

/// Per-episode RNG, shared by every policy at the same `(start, repeat)`.
pub fn episode_rng(seed: u64, start_id: usize, repeat: usize) -> impl RngCore {
    stream_rng(seed ^ 0x9e37_79b9_7f4a_7c15, ((start_id as u64) << 32) | repeat as u64)
}

#[derive(Clone, Copy)]
enum Mode {
    Lookahead,
    Oracle,
    Live,
    Closest,
    HStep,
}

enum Prepared<'a> {
    Skill { model: &'a SkillModel, index: Option<DemoIndex>, mode: Mode },
    Bc { policy: &'a BcPolicy, index: Option<DemoIndex> },
}

fn prepare<'a>(kind: PolicyKind, art: &'a Artifacts) -> Result<Prepared<'a>> {
    let learned = || -> Result<DemoIndex> {
        let enc = need(&art.distance, "distance encoder", kind)?;
        Ok(DemoIndex::new(&art.demos.dataset, StateMetric::Learned(enc.clone())))
    };
    let inverse = |m: &'a Option<SkillModel>, what: &str| -> Result<&'a SkillModel> {
        let model = need(m, what, kind)?;
        if model.config.prior != PriorKind::Inverse {
            return Err(Error::config(format!("policy {kind} needs an inverse skill prior in the {what} artifact")));
        }
        Ok(model)
    };
    let spirl = || -> Result<&'a SkillModel> {
        let model = need(&art.spirl_finetuned, "fine-tuned state-only skill model", kind)?;
        if model.config.prior != PriorKind::StateOnly {
            return Err(Error::config(format!("policy {kind} needs a state-only skill prior")));
        }
        Ok(model)
    };
    let ft = "fine-tuned skill model";
    Ok(match kind {
        PolicyKind::Fist => Prepared::Skill { model: inverse(&art.skills_finetuned, ft)?, index: Some(learned()?), mode: Mode::Lookahead },
        PolicyKind::FistEuc => Prepared::Skill {
            model: inverse(&art.skills_finetuned, ft)?,
            index: Some(DemoIndex::new(&art.demos.dataset, StateMetric::Euclidean)),
            mode: Mode::Lookahead,
        },
        PolicyKind::FistNoFt => {
            Prepared::Skill { model: inverse(&art.skills_pretrained, "pretrained skill model")?, index: Some(learned()?), mode: Mode::Lookahead }
        }
        PolicyKind::FistNoPretrain => {
            Prepared::Skill { model: inverse(&art.skills_demo_only, "demo-only skill model")?, index: Some(learned()?), mode: Mode::Lookahead }
        }
        PolicyKind::FistOracle => Prepared::Skill { model: inverse(&art.skills_finetuned, ft)?, index: None, mode: Mode::Oracle },
        PolicyKind::Spirl => Prepared::Skill { model: spirl()?, index: None, mode: Mode::Live },
        PolicyKind::SpirlClosest => Prepared::Skill { model: spirl()?, index: Some(learned()?), mode: Mode::Closest },
        PolicyKind::SpirlHstep => Prepared::Skill { model: spirl()?, index: Some(learned()?), mode: Mode::HStep },
        PolicyKind::BcFt => {
            let policy = need(&art.bc, "BC policy", kind)?;
            if policy.kind != BcKind::Plain {
                return Err(Error::config("policy bc_ft needs a state-only BC policy"));
            }
            Prepared::Bc { policy, index: None }
        }
        PolicyKind::GoalBc => {
            let policy = need(&art.goal_bc, "goal-conditioned BC policy", kind)?;
            if policy.kind != BcKind::Goal {
                return Err(Error::config("policy goal_bc needs a goal-conditioned BC policy"));
            }
            Prepared::Bc { policy, index: Some(learned()?) }
        }
    })
}

fn run_prepared(prep: &Prepared<'_>, art: &Artifacts, config: &EvalConfig, start: Cell, rng: &mut dyn RngCore) -> Result<EpisodeResult> {
    let s0 = MazeState::at_rest(start.center());
    let mut agent: Box<dyn Agent + '_> = match prep {
        Prepared::Skill { model, index, mode } => {
            let conditioning = match (mode, index.as_ref()) {
                (Mode::Lookahead, Some(i)) => Conditioning::Lookahead(i),
                (Mode::Oracle, _) => Conditioning::Oracle,
                (Mode::Live, _) => Conditioning::Live,
                (Mode::Closest, Some(i)) => Conditioning::Closest(i),
                (Mode::HStep, Some(i)) => Conditioning::HStep(i),
                _ => unreachable!("prepared skill policy without its index"),
            };
            Box::new(SkillAgent::new(model, conditioning, &art.task, config.resample_period, config.deterministic))
        }
        Prepared::Bc { policy, index } => Box::new(BcAgent { policy, index: index.as_ref() }),
    };
    run_episode(agent.as_mut(), &art.task, s0, config.max_steps, config.record_traces, rng)
}

/// Runs `n_starts x repeats` episodes of one policy on `jobs` threads.
/// Results do not depend on `jobs`.
pub fn evaluate_parallel(kind: PolicyKind, art: &Artifacts, config: &EvalConfig, jobs: usize) -> Result<EvalReport> {
    let prep = prepare(kind, art)?;
    let horizon = match &prep {
        Prepared::Skill { model, .. } => model.horizon(),
        Prepared::Bc { policy, .. } => policy.config.horizon,
    };
    config.validate(if kind.uses_skills() { horizon } else { usize::MAX })?;
    let t = &art.task;
    let starts = eval_starts(&t.layout, art.region, t.goal_cell, config.n_starts, config.seed)?;
    let work: Vec<(usize, usize)> =
        (0..starts.len()).flat_map(|s| (0..config.repeats).map(move |r| (s, r))).collect();
    let run = |&(s, r): &(usize, usize)| run_prepared(&prep, art, config, starts[s], &mut episode_rng(config.seed, s, r));
    let jobs = jobs.clamp(1, work.len().max(1));
    let results: Vec<Result<EpisodeResult>> = if jobs == 1 {
        work.iter().map(run).collect()
    } else {
        let mut slots: Vec<Option<Result<EpisodeResult>>> = (0..work.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..jobs)
                .map(|w| {
                    let (work, run) = (&work, &run);
                    scope.spawn(move || work.iter().enumerate().skip(w).step_by(jobs).map(|(k, item)| (k, run(item))).collect::<Vec<_>>())
                })
                .collect();
            for h in handles {
                for (k, r) in h.join().expect("evaluation worker panicked") {
                    slots[k] = Some(r);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every episode ran")).collect()
    };
    let episodes = results.into_iter().collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, bool)> = episodes.iter().map(|e| (e.length, e.success)).collect();
    let row = ReportRow::from_episodes(kind.name(), &art.task_name(), &pairs, config.max_steps)?;
    Ok(EvalReport { row, resample_period: config.resample_period, starts, repeats: config.repeats, seed: config.seed, episodes })
}

pub fn evaluate(kind: PolicyKind, art: &Artifacts, config: &EvalConfig) -> Result<EvalReport> {
    evaluate_parallel(kind, art, config, 1)
}
