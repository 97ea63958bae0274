//! On-disk transfer bundle: one JSON file per stage output plus a manifest
//! holding the config hash and a digest of every stage file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::sha256_hex;
use super::{PipelineError, Stage};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.json";
pub const BUNDLE_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    /// Digest of everything the stage read: config fields, input files and
    /// upstream outputs.
    pub key: String,
    pub seconds: f64,
    /// Output file name to SHA-256.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub no_rl: bool,
    pub workers: usize,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn completed(&self, stage: Stage) -> bool {
        self.stages.iter().any(|r| r.stage == stage)
    }

    /// Recorded SHA-256 of a stage output.
    pub fn digest(&self, file: &str) -> Option<&String> {
        self.stages.iter().rev().find_map(|r| r.files.get(file))
    }
}

#[derive(Debug)]
pub struct Bundle {
    dir: PathBuf,
    manifest: Manifest,
    pending: BTreeMap<String, String>,
    /// Config of the current run, written once the bundle first changes.
    pending_config: Option<String>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl Bundle {
    /// Starts an empty bundle in `dir`, replacing any previous manifest.
    pub fn create(
        dir: &Path,
        config_json: &str,
        seed: u64,
        no_rl: bool,
        workers: usize,
    ) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let mut bundle = Self {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                format: BUNDLE_FORMAT,
                version: env!("CARGO_PKG_VERSION").to_string(),
                config_sha256: String::new(),
                seed,
                no_rl,
                workers,
                stages: Vec::new(),
            },
            pending: BTreeMap::new(),
            pending_config: Some(config_json.to_string()),
        };
        bundle.commit()?;
        Ok(bundle)
    }

    /// Reopens the bundle in `dir` for a new run, keeping its stage records
    /// for reuse, or starts an empty one when there is none. Nothing on disk
    /// changes before the first [`Bundle::begin_stage`] or [`Bundle::commit`].
    pub fn reopen(
        dir: &Path,
        config_json: &str,
        seed: u64,
        no_rl: bool,
        workers: usize,
    ) -> Result<Self, PipelineError> {
        if !dir.join(MANIFEST).is_file() {
            return Self::create(dir, config_json, seed, no_rl, workers);
        }
        let mut b = Self::open_unchecked(dir)?;
        b.manifest.version = env!("CARGO_PKG_VERSION").to_string();
        b.manifest.seed = seed;
        b.manifest.no_rl = no_rl;
        b.manifest.workers = workers;
        b.pending_config = Some(config_json.to_string());
        Ok(b)
    }

    fn open_unchecked(dir: &Path) -> Result<Self, PipelineError> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(io(&path))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| PipelineError::Format {
                path: path.clone(),
                message: e.to_string(),
            })?;
        if manifest.format != BUNDLE_FORMAT {
            return Err(PipelineError::Format {
                path,
                message: format!("bundle format {} is not supported", manifest.format),
            });
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            pending: BTreeMap::new(),
            pending_config: None,
        })
    }

    /// Opens an existing bundle and checks its config digest.
    pub fn open(dir: &Path) -> Result<Self, PipelineError> {
        let b = Self::open_unchecked(dir)?;
        let config = dir.join(CONFIG);
        let bytes = std::fs::read(&config).map_err(io(&config))?;
        if sha256_hex(&bytes) != b.manifest.config_sha256 {
            return Err(PipelineError::Integrity {
                path: config,
                message: "config digest does not match the manifest".into(),
            });
        }
        Ok(b)
    }

    /// Writes the pending config and the manifest.
    pub fn commit(&mut self) -> Result<(), PipelineError> {
        if let Some(config) = self.pending_config.take() {
            let path = self.dir.join(CONFIG);
            std::fs::write(&path, &config).map_err(io(&path))?;
            self.manifest.config_sha256 = sha256_hex(config.as_bytes());
        }
        self.save_manifest()
    }

    /// Whether `stage` completed with input key `key` and its outputs on
    /// disk still match their digests.
    pub fn is_current(&self, stage: Stage, key: &str) -> bool {
        let Some(record) = self.manifest.stages.iter().find(|r| r.stage == stage) else {
            return false;
        };
        record.key == key
            && record.files.iter().all(|(name, sha)| {
                std::fs::read(self.dir.join(name)).is_ok_and(|b| sha256_hex(&b) == *sha)
            })
    }

    /// Forgets the records of `stage` and every later stage.
    pub fn begin_stage(&mut self, stage: Stage) -> Result<(), PipelineError> {
        self.pending.clear();
        self.manifest.stages.retain(|r| r.stage < stage);
        self.commit()
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn config_json(&self) -> Result<String, PipelineError> {
        let path = self.dir.join(CONFIG);
        std::fs::read_to_string(&path).map_err(io(&path))
    }

    fn save_manifest(&self) -> Result<(), PipelineError> {
        let path = self.dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&path, text).map_err(io(&path))
    }

    pub fn write_raw(&mut self, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(io(&path))?;
        self.pending.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        let bytes = serde_json::to_vec(value).expect("stage output serializes");
        self.write_raw(name, &bytes)
    }

    /// Records the files written since the last stage under `stage`.
    pub fn finish_stage(
        &mut self,
        stage: Stage,
        key: String,
        seconds: f64,
    ) -> Result<(), PipelineError> {
        let files = std::mem::take(&mut self.pending);
        self.manifest.stages.retain(|r| r.stage != stage);
        self.manifest.stages.push(StageRecord {
            stage,
            key,
            seconds,
            files,
        });
        self.save_manifest()
    }

    /// Reads a stage output after checking its digest against the manifest.
    pub fn read<T: DeserializeOwned>(&self, name: &str) -> Result<T, PipelineError> {
        let path = self.dir.join(name);
        let expected = self
            .manifest
            .digest(name)
            .ok_or_else(|| PipelineError::Incomplete(format!("{name} is not in the manifest")))?;
        let bytes = std::fs::read(&path).map_err(io(&path))?;
        if sha256_hex(&bytes) != *expected {
            return Err(PipelineError::Integrity {
                path,
                message: "file digest does not match the manifest".into(),
            });
        }
        serde_json::from_slice(&bytes).map_err(|e| PipelineError::Integrity {
            path,
            message: e.to_string(),
        })
    }
}
