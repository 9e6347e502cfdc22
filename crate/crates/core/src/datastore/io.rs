use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trajectory::{DatasetMeta, Trajectory, TrajectoryDataset};
use crate::error::{Error, Result};

pub const DATASET_VERSION: u32 = 1;
pub const STATES_FILE: &str = "states.bin";
pub const ACTIONS_FILE: &str = "actions.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub dtype: String,
    pub endianness: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub num_trajectories: usize,
    pub num_transitions: usize,
    pub lengths: Vec<usize>,
    pub states_crc32: u32,
    pub actions_crc32: u32,
    pub seed: u64,
    pub config_hash: String,
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl DatasetManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: DatasetManifest =
            serde_json::from_str(text).map_err(|e| Error::malformed(format!("dataset manifest: {e}")))?;
        if m.format_version != DATASET_VERSION {
            return Err(Error::VersionMismatch {
                path: MANIFEST_FILE.into(),
                found: m.format_version,
                expected: DATASET_VERSION,
            });
        }
        if m.dtype != "f32" || m.endianness != "little" {
            return Err(Error::malformed(format!("unsupported dataset encoding {}/{}", m.dtype, m.endianness)));
        }
        if m.state_dim == 0 || m.action_dim == 0 {
            return Err(Error::malformed("dataset dimensions must be positive"));
        }
        if m.lengths.len() != m.num_trajectories || m.lengths.contains(&0) {
            return Err(Error::malformed("trajectory lengths disagree with the declared count"));
        }
        let total = m.lengths.iter().try_fold(0usize, |acc, &l| acc.checked_add(l));
        if total != Some(m.num_transitions) {
            return Err(Error::malformed("trajectory lengths do not sum to num_transitions"));
        }
        m.num_transitions
            .checked_mul(m.state_dim.max(m.action_dim))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::malformed("dataset size overflows"))?;
        Ok(m)
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            extra: self.extra.clone(),
        }
    }
}

fn encode(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn decode_array(file: &str, bytes: &[u8], count: usize, crc: u32) -> Result<Vec<f32>> {
    let expected = count as u64 * 4;
    if bytes.len() as u64 != expected {
        return Err(Error::Truncated { path: file.into(), expected, found: bytes.len() as u64 });
    }
    let found = crc32fast::hash(bytes);
    if found != crc {
        return Err(Error::Checksum { path: file.into(), expected: crc, found });
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

/// Rebuilds a dataset from a validated manifest and the two raw arrays.
pub fn decode_dataset(manifest: &DatasetManifest, states: &[u8], actions: &[u8]) -> Result<TrajectoryDataset> {
    let n = manifest.num_transitions;
    let (sd, ad) = (manifest.state_dim, manifest.action_dim);
    let states = decode_array(STATES_FILE, states, n * sd, manifest.states_crc32)?;
    let actions = decode_array(ACTIONS_FILE, actions, n * ad, manifest.actions_crc32)?;
    let mut trajectories = Vec::with_capacity(manifest.lengths.len());
    let mut t0 = 0;
    for &len in &manifest.lengths {
        let s = states[t0 * sd..(t0 + len) * sd].to_vec();
        let a = actions[t0 * ad..(t0 + len) * ad].to_vec();
        trajectories.push(Trajectory::new(sd, ad, s, a).map_err(|e| Error::malformed(e.to_string()))?);
        t0 += len;
    }
    TrajectoryDataset::new(manifest.meta(), trajectories)
}

/// Serializes a dataset into `(manifest, states bytes, actions bytes)`.
pub fn encode_dataset(dataset: &TrajectoryDataset) -> (DatasetManifest, Vec<u8>, Vec<u8>) {
    let mut states = Vec::new();
    let mut actions = Vec::new();
    for t in dataset.trajectories() {
        states.extend_from_slice(t.states_raw());
        actions.extend_from_slice(t.actions_raw());
    }
    let (states, actions) = (encode(&states), encode(&actions));
    let meta = &dataset.meta;
    let manifest = DatasetManifest {
        format_version: DATASET_VERSION,
        dtype: "f32".into(),
        endianness: "little".into(),
        state_dim: meta.state_dim,
        action_dim: meta.action_dim,
        num_trajectories: dataset.len(),
        num_transitions: dataset.num_transitions(),
        lengths: dataset.trajectories().iter().map(Trajectory::len).collect(),
        states_crc32: crc32fast::hash(&states),
        actions_crc32: crc32fast::hash(&actions),
        seed: meta.seed,
        config_hash: meta.config_hash.clone(),
        extra: meta.extra.clone(),
    };
    (manifest, states, actions)
}

pub fn save_dataset(dataset: &TrajectoryDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (manifest, states, actions) = encode_dataset(dataset);
    for (file, bytes) in [(STATES_FILE, &states), (ACTIONS_FILE, &actions)] {
        let path = dir.join(file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn load_dataset(dir: &Path) -> Result<TrajectoryDataset> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::MissingArtifact { name: "dataset manifest".into(), path });
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest = DatasetManifest::parse(&text).map_err(|e| match e {
        Error::VersionMismatch { found, expected, .. } => Error::VersionMismatch { path: path.clone(), found, expected },
        other => other,
    })?;
    let read = |file: &str| {
        let p = dir.join(file);
        fs::read(&p).map_err(|e| Error::io(&p, e))
    };
    let (states, actions) = (read(STATES_FILE)?, read(ACTIONS_FILE)?);
    decode_dataset(&manifest, &states, &actions).map_err(|e| match e {
        Error::Truncated { path: p, expected, found } => Error::Truncated { path: dir.join(p), expected, found },
        Error::Checksum { path: p, expected, found } => Error::Checksum { path: dir.join(p), expected, found },
        other => other,
    })
}
