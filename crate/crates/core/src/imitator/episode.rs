use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::bc::BcPolicy;
use crate::error::{Error, Result};
use crate::maze::{step, Cell, EnvConfig, Gains, MazeAction, MazeLayout, MazeState, WaypointController};
use crate::metric::{oracle_lookahead, DemoIndex};
use crate::skillmodel::SkillModel;

/// The downstream environment an episode runs in.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub layout: MazeLayout,
    pub env: EnvConfig,
    pub gains: Gains,
    pub goal_cell: Cell,
    pub goal: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub length: usize,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<[f64; 4]>>,
}

/// Something that picks an action every step.
pub trait Agent {
    fn act(&mut self, s: MazeState, t: usize, rng: &mut dyn RngCore) -> Result<MazeAction>;
}

/// Runs until the goal radius is reached or `max_steps` actions were taken.
pub fn run_episode(
    agent: &mut dyn Agent,
    task: &Task,
    start: MazeState,
    max_steps: usize,
    record_trace: bool,
    rng: &mut dyn RngCore,
) -> Result<EpisodeResult> {
    let mut s = start;
    let mut trace = record_trace.then(|| vec![s.to_vec()]);
    for t in 0..max_steps {
        let a = agent.act(s, t, rng)?;
        s = step(s, a, &task.layout, &task.env);
        if let Some(tr) = trace.as_mut() {
            tr.push(s.to_vec());
        }
        if s.distance_to(task.goal) < task.env.goal_radius {
            return Ok(EpisodeResult { length: t + 1, success: true, trace });
        }
    }
    Ok(EpisodeResult { length: max_steps, success: false, trace })
}

/// How the skill prior's two inputs are chosen each time a skill is drawn.
#[derive(Clone, Copy, Debug)]
pub enum Conditioning<'a> {
    /// `(s, LookAhead(nearest(s)))`
    Lookahead(&'a DemoIndex),
    /// `(s, state the waypoint controller reaches after H-1 steps)`
    Oracle,
    /// `s` only.
    Live,
    /// The nearest demo state.
    Closest(&'a DemoIndex),
    /// The nearest demo state's lookahead.
    HStep(&'a DemoIndex),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpirlLookup {
    None,
    Closest,
    HStep,
}

/// Skill-space controller: draws `z` from the prior every `period` steps
/// and decodes one action per step.
pub struct SkillAgent<'a> {
    pub model: &'a SkillModel,
    pub conditioning: Conditioning<'a>,
    pub task: &'a Task,
    pub period: usize,
    pub deterministic: bool,
    /// Replaces prior draws: the skill drawn at step `t` is `injected[t]`.
    pub injected: Option<&'a [Vec<f64>]>,
    z: Vec<f64>,
    /// Expert tracking the agent, for oracle conditioning.
    expert: Option<WaypointController>,
}

impl<'a> SkillAgent<'a> {
    pub fn new(model: &'a SkillModel, conditioning: Conditioning<'a>, task: &'a Task, period: usize, deterministic: bool) -> Self {
        Self { model, conditioning, task, period: period.max(1), deterministic, injected: None, z: Vec::new(), expert: None }
    }

    fn prior_inputs(&self, s: MazeState) -> Result<(Vec<f64>, Vec<f64>)> {
        let now = s.to_vec().to_vec();
        let h = self.model.horizon();
        Ok(match self.conditioning {
            Conditioning::Lookahead(index) => {
                let (i, j) = index.nearest(&now)?;
                let target = index.lookahead(i, j, h).to_vec();
                (now, target)
            }
            Conditioning::Oracle => {
                let t = &self.task;
                let expert = self.expert.as_ref().expect("expert is synced before drawing");
                (now, oracle_lookahead(expert, &t.layout, s, h, &t.env).to_vec().to_vec())
            }
            Conditioning::Live => (now.clone(), now),
            Conditioning::Closest(index) => {
                let (i, j) = index.nearest(&now)?;
                let c = index.state(i, j).to_vec();
                (c.clone(), c)
            }
            Conditioning::HStep(index) => {
                let (i, j) = index.nearest(&now)?;
                let c = index.lookahead(i, j, h).to_vec();
                (c.clone(), c)
            }
        })
    }

    fn draw(&mut self, s: MazeState, t: usize, rng: &mut dyn RngCore) -> Result<()> {
        if let Some(seq) = self.injected {
            self.z = seq.get(t).cloned().ok_or_else(|| Error::config(format!("no injected skill for step {t}")))?;
            return Ok(());
        }
        let (a, b) = self.prior_inputs(s)?;
        let prior = self.model.infer_skill(&a, &b);
        self.z = if self.deterministic {
            prior.mean.clone()
        } else {
            let std = prior.std();
            prior
                .mean
                .iter()
                .zip(std)
                .map(|(m, sd)| {
                    let e: f64 = StandardNormal.sample(rng);
                    m + sd * e
                })
                .collect()
        };
        Ok(())
    }
}

impl Agent for SkillAgent<'_> {
    fn act(&mut self, s: MazeState, t: usize, rng: &mut dyn RngCore) -> Result<MazeAction> {
        if let Conditioning::Oracle = self.conditioning {
            let task = self.task;
            let mut expert = match self.expert.take() {
                Some(e) => e,
                None => WaypointController::plan(&task.layout, s, task.goal_cell, task.gains)?,
            };
            expert.act(s);
            self.expert = Some(expert);
        }
        if t.is_multiple_of(self.period) {
            self.draw(s, t, rng)?;
        }
        Ok(MazeAction::from_slice(&self.model.decode_action(&s.to_vec(), &self.z)))
    }
}

/// Atomic-action regressor; a goal-conditioned one looks its target up in
/// the demo index every step.
pub struct BcAgent<'a> {
    pub policy: &'a BcPolicy,
    pub index: Option<&'a DemoIndex>,
}

impl Agent for BcAgent<'_> {
    fn act(&mut self, s: MazeState, _t: usize, _rng: &mut dyn RngCore) -> Result<MazeAction> {
        let now = s.to_vec();
        let a = match self.index {
            Some(index) => {
                let (i, j) = index.nearest(&now)?;
                self.policy.act(&now, index.lookahead(i, j, self.policy.config.horizon))
            }
            None => self.policy.act(&now, &now),
        };
        Ok(MazeAction::from_slice(&a))
    }
}

/// FIST: nearest demo state, lookahead, inverse skill prior, decoder.
pub fn run_fist_episode(
    model: &SkillModel,
    index: &DemoIndex,
    task: &Task,
    start: MazeState,
    config: &super::EvalConfig,
    rng: &mut dyn RngCore,
) -> Result<EpisodeResult> {
    let mut agent = SkillAgent::new(model, Conditioning::Lookahead(index), task, config.resample_period, config.deterministic);
    run_episode(&mut agent, task, start, config.max_steps, config.record_traces, rng)
}

/// State-conditioned skill prior, optionally fed demo states.
pub fn run_spirl_episode(
    model: &SkillModel,
    index: Option<&DemoIndex>,
    task: &Task,
    start: MazeState,
    config: &super::EvalConfig,
    lookup: SpirlLookup,
    rng: &mut dyn RngCore,
) -> Result<EpisodeResult> {
    let need = || index.ok_or_else(|| Error::config(format!("SPiRL lookup {lookup:?} needs a demo index")));
    let conditioning = match lookup {
        SpirlLookup::None => Conditioning::Live,
        SpirlLookup::Closest => Conditioning::Closest(need()?),
        SpirlLookup::HStep => Conditioning::HStep(need()?),
    };
    let mut agent = SkillAgent::new(model, conditioning, task, config.resample_period, config.deterministic);
    run_episode(&mut agent, task, start, config.max_steps, config.record_traces, rng)
}
