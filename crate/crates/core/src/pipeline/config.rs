use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imitator::{BcConfig, EvalConfig};
use crate::maze::{MazeLayout, OfflineDataConfig, Region};
use crate::metric::DistanceConfig;
use crate::skillmodel::SkillModelConfig;

pub const CONFIG_FILE: &str = "config.json";

/// Everything one run depends on. Artifacts are a function of this and nothing else.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Text layout file; the built-in maze when absent.
    #[serde(default)]
    pub layout: Option<PathBuf>,
    pub blocked: Region,
    pub data: OfflineDataConfig,
    pub n_demos: usize,
    pub skills: SkillModelConfig,
    pub distance: DistanceConfig,
    #[serde(default)]
    pub finetune_distance: bool,
    /// Gradient steps on demo pairs when `finetune_distance` is set.
    #[serde(default)]
    pub distance_finetune_steps: usize,
    pub bc: BcConfig,
    pub eval: EvalConfig,
    pub seed: u64,
    /// Run directory; not part of the content hash and never written to disk.
    #[serde(default)]
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Full-size networks and training budget.
    pub fn full(blocked: Region) -> Self {
        let skills = SkillModelConfig::default();
        Self {
            layout: None,
            blocked,
            data: OfflineDataConfig::default(),
            n_demos: 10,
            bc: BcConfig::matching(&skills),
            skills,
            distance: DistanceConfig::default(),
            finetune_distance: false,
            distance_finetune_steps: 0,
            eval: EvalConfig::default(),
            seed: 0,
            out_dir: PathBuf::new(),
        }
    }

    /// Narrower networks and fewer pretraining epochs; about ten minutes per region on one core.
    pub fn desk(blocked: Region) -> Self {
        let skills = SkillModelConfig::desk();
        Self { bc: BcConfig::matching(&skills), skills, ..Self::full(blocked) }
    }

    /// 10k transitions and a handful of steps everywhere; for plumbing tests.
    pub fn smoke(blocked: Region) -> Self {
        let skills = SkillModelConfig {
            z_dim: 4,
            hidden: 16,
            decoder_layers: 2,
            prior_layers: 2,
            batch_size: 32,
            pretrain_epochs: 1,
            finetune_epochs: 2,
            finetune_epoch_cycle: 1,
            ..SkillModelConfig::desk()
        };
        let mut c = Self::desk(blocked);
        c.data.n_transitions = 10_000;
        c.bc = BcConfig::matching(&skills);
        c.skills = skills;
        c.distance = DistanceConfig { hidden: 16, embed_dim: 8, batch_size: 32, steps: 50, ..DistanceConfig::default() };
        c.eval = EvalConfig { max_steps: 200, n_starts: 3, ..EvalConfig::default() };
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.skills.validate()?;
        self.distance.validate()?;
        self.bc.validate()?;
        self.eval.validate(self.skills.horizon)?;
        if self.n_demos == 0 {
            return Err(Error::config("n_demos must be positive"));
        }
        if self.bc.horizon != self.skills.horizon || self.distance.horizon != self.skills.horizon {
            return Err(Error::config("skill, BC and distance horizons must agree"));
        }
        Ok(())
    }

    pub fn load_layout(&self) -> Result<MazeLayout> {
        match &self.layout {
            None => Ok(MazeLayout::default_layout()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse()
            }
        }
    }

    /// Hex sha256 of the canonical JSON with `out_dir` cleared.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::malformed(format!("experiment config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(CONFIG_FILE);
        let stored = Self { out_dir: PathBuf::new(), ..self.clone() };
        let text = serde_json::to_string_pretty(&stored).expect("config serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    /// The config a run directory was created with.
    pub fn load_run(dir: &Path) -> Result<Self> {
        let path = dir.join(CONFIG_FILE);
        if !path.exists() {
            return Err(Error::MissingArtifact { name: "run config (run gen-data first)".into(), path });
        }
        let mut c = Self::from_file(&path)?;
        c.out_dir = dir.to_path_buf();
        Ok(c)
    }
}
