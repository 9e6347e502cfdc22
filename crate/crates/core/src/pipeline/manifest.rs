use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const RUN_MANIFEST_FILE: &str = "run.json";
pub const RUN_MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
    /// Command that wrote the file.
    pub stage: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub command: String,
    pub started_unix: u64,
    pub finished_unix: u64,
}

/// Checksums of every file a run produced, keyed by path relative to the run directory.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub config_hash: String,
    pub files: BTreeMap<String, FileEntry>,
    pub lineage: Vec<StageRecord>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

fn collect_files(dir: &Path, out: &mut Vec<std::path::PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

impl RunManifest {
    pub fn new(config_hash: String) -> Self {
        Self { format_version: RUN_MANIFEST_VERSION, config_hash, files: BTreeMap::new(), lineage: Vec::new() }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let m: RunManifest = serde_json::from_str(text).map_err(|e| Error::malformed(format!("run manifest: {e}")))?;
        if m.format_version != RUN_MANIFEST_VERSION {
            return Err(Error::VersionMismatch {
                path: RUN_MANIFEST_FILE.into(),
                found: m.format_version,
                expected: RUN_MANIFEST_VERSION,
            });
        }
        Ok(m)
    }

    pub fn load(run: &Path) -> Result<Self> {
        let path = run.join(RUN_MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::MissingArtifact { name: "run manifest (run gen-data first)".into(), path });
        }
        Self::parse(&fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?)
    }

    pub fn save(&self, run: &Path) -> Result<()> {
        let path = run.join(RUN_MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Hashes every file under each of `outputs` (files or directories) and
    /// appends a lineage entry for `command`.
    pub fn record(&mut self, run: &Path, command: &str, started_unix: u64, outputs: &[&Path]) -> Result<()> {
        let mut paths = Vec::new();
        for out in outputs {
            if out.is_dir() {
                collect_files(out, &mut paths)?;
                let prefix = relative(run, out) + "/";
                self.files.retain(|k, _| !k.starts_with(&prefix));
            } else {
                paths.push(out.to_path_buf());
            }
        }
        for p in paths {
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            let entry = FileEntry { sha256: sha256_hex(&bytes), bytes: bytes.len() as u64, stage: command.to_string() };
            self.files.insert(relative(run, &p), entry);
        }
        self.lineage.push(StageRecord { command: command.to_string(), started_unix, finished_unix: unix_now() });
        Ok(())
    }

    pub fn has_stage(&self, command: &str) -> bool {
        self.lineage.iter().any(|s| s.command == command)
    }

    /// Confirms that the files written by `command` are unchanged on disk.
    pub fn verify_stage(&self, run: &Path, command: &str) -> Result<()> {
        if !self.has_stage(command) {
            return Err(Error::config(format!("run {} has no `{command}` output yet; run `{command}` first", run.display())));
        }
        for (rel, entry) in self.files.iter().filter(|(_, e)| e.stage == command) {
            let path = run.join(rel);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if sha256_hex(&bytes) != entry.sha256 {
                return Err(Error::malformed(format!("{} changed since `{command}` wrote it; rerun `{command}`", path.display())));
            }
        }
        Ok(())
    }
}
