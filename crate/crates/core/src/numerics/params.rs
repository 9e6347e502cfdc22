use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }

    pub(crate) fn from_index(i: usize) -> Self {
        ParamId(i)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Param {
    name: String,
    value: Tensor,
    grad: Tensor,
}

/// Named parameters with gradient buffers of identical shape.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter `{name}`");
        let grad = Tensor::zeros(value.shape());
        self.params.push(Param { name, value, grad });
        ParamId(self.params.len() - 1)
    }

    /// Uniform in `±1/sqrt(fan_in)`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        self.add(name, Tensor::new(shape.to_vec(), data).expect("param shape"))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].grad
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }

    /// Rounds every value to the nearest `f32`, matching what a checkpoint stores.
    pub fn quantize_f32(&mut self) {
        for p in &mut self.params {
            for v in p.value.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Writes a checkpoint directory: `manifest.json` plus one little-endian
    /// `f32` file per parameter.
    pub fn save(&self, dir: &Path, metadata: serde_json::Value) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.params.len());
        for p in &self.params {
            let file = format!("{}.bin", p.name);
            let bytes: Vec<u8> = p.value.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
            let path = dir.join(&file);
            fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            entries.push(ParamEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                file,
                crc32: crc32fast::hash(&bytes),
            });
        }
        let manifest = CheckpointManifest {
            format_version: CHECKPOINT_VERSION,
            dtype: "f32".into(),
            endianness: "little".into(),
            params: entries,
            metadata,
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Loads a checkpoint, returning the parameters and the stored metadata.
    pub fn load(dir: &Path) -> Result<(Self, serde_json::Value)> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest = CheckpointManifest::parse(&text)?;
        let mut set = ParamSet::new();
        for entry in &manifest.params {
            let path = dir.join(&entry.file);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let values = decode_param(entry, &bytes).map_err(|e| match e {
                Error::Truncated { expected, found, .. } => Error::Truncated { path: path.clone(), expected, found },
                Error::Checksum { expected, found, .. } => Error::Checksum { path: path.clone(), expected, found },
                other => other,
            })?;
            set.add(entry.name.clone(), Tensor::new(entry.shape.clone(), values)?);
        }
        Ok((set, manifest.metadata))
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
    pub crc32: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub dtype: String,
    pub endianness: String,
    pub params: Vec<ParamEntry>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl CheckpointManifest {
    /// Parses and validates a manifest document.
    pub fn parse(text: &str) -> Result<Self> {
        let m: CheckpointManifest = serde_json::from_str(text)
            .map_err(|e| Error::malformed(format!("checkpoint manifest: {e}")))?;
        if m.format_version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                path: "manifest.json".into(),
                found: m.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        if m.dtype != "f32" || m.endianness != "little" {
            return Err(Error::malformed(format!(
                "unsupported checkpoint encoding {}/{}",
                m.dtype, m.endianness
            )));
        }
        for p in &m.params {
            if p.file.contains('/') || p.file.contains('\\') || p.file.starts_with('.') {
                return Err(Error::malformed(format!("parameter file name `{}`", p.file)));
            }
            p.shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::malformed(format!("shape overflow for `{}`", p.name)))?;
        }
        Ok(m)
    }
}

/// Decodes one raw parameter file against its manifest entry.
pub fn decode_param(entry: &ParamEntry, bytes: &[u8]) -> Result<Vec<f64>> {
    let n: usize = entry.shape.iter().product();
    let expected = n as u64 * 4;
    if bytes.len() as u64 != expected {
        return Err(Error::Truncated { path: entry.file.clone().into(), expected, found: bytes.len() as u64 });
    }
    let found = crc32fast::hash(bytes);
    if found != entry.crc32 {
        return Err(Error::Checksum { path: entry.file.clone().into(), expected: entry.crc32, found });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zeroing_gradients_is_idempotent() {
        let mut p = ParamSet::new();
        let id = p.add("w", Tensor::row(vec![1.0, 2.0]));
        p.grad_mut(id).data_mut()[0] = 3.0;
        p.zero_grads();
        let once = p.clone();
        p.zero_grads();
        assert_eq!(p, once);
        assert_eq!(p.grad(id).shape(), p.value(id).shape());
    }

    #[test]
    fn uniform_init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamSet::new();
        let id = p.add_uniform("w", &[16, 4], 16, &mut rng);
        assert!(p.value(id).data().iter().all(|v| v.abs() <= 0.25));
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = ParamSet::new();
        p.add_uniform("enc.w", &[3, 5], 3, &mut rng);
        p.add_uniform("enc.b", &[1, 5], 3, &mut rng);
        p.quantize_f32();
        p.save(dir.path(), serde_json::json!({"h": 10})).unwrap();
        let (q, meta) = ParamSet::load(dir.path()).unwrap();
        assert_eq!(p, q);
        assert_eq!(meta["h"], 10);

        let bin = dir.path().join("enc.w.bin");
        let mut bytes = std::fs::read(&bin).unwrap();
        *bytes.last_mut().unwrap() ^= 0x40;
        std::fs::write(&bin, &bytes).unwrap();
        assert!(matches!(ParamSet::load(dir.path()), Err(Error::Checksum { .. })));
        bytes.pop();
        std::fs::write(&bin, &bytes).unwrap();
        assert!(matches!(ParamSet::load(dir.path()), Err(Error::Truncated { .. })));
    }

    #[test]
    fn manifest_rejects_path_escapes_and_bad_versions() {
        let bad = r#"{"format_version":1,"dtype":"f32","endianness":"little",
            "params":[{"name":"w","shape":[1],"file":"../w.bin","crc32":0}]}"#;
        assert!(CheckpointManifest::parse(bad).is_err());
        let v2 = r#"{"format_version":2,"dtype":"f32","endianness":"little","params":[]}"#;
        assert!(matches!(CheckpointManifest::parse(v2), Err(Error::VersionMismatch { .. })));
    }
}
