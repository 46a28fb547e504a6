use std::path::{Path, PathBuf};
use std::time::Instant;

use aeromap::io::{write_atomic, PipelineConfig};
use aeromap::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// What a run read, wrote and how long each stage took. Everything except
/// the timings is a function of the inputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: PipelineConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timings: Vec<StageTiming>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(sha256_hex(&bytes))
}

pub struct Recorder {
    manifest: RunManifest,
    out_dir: PathBuf,
    stage_start: Instant,
}

impl Recorder {
    pub fn new(command: &str, config: &PipelineConfig, out_dir: &Path) -> Self {
        let json = config.to_json();
        Recorder {
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                seed: config.seed,
                config_sha256: sha256_hex(json.as_bytes()),
                config: config.clone(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                timings: Vec::new(),
            },
            out_dir: out_dir.to_path_buf(),
            stage_start: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha256 = digest_file(path)?;
        self.manifest.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    /// Records a written file, relative to the output directory when it
    /// lies inside it.
    pub fn output(&mut self, path: &Path) -> Result<()> {
        let sha256 = digest_file(path)?;
        let shown = path.strip_prefix(&self.out_dir).unwrap_or(path);
        self.manifest.outputs.push(FileDigest {
            path: shown.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.manifest.timings.push(StageTiming {
            stage: name.to_string(),
            seconds: (now - self.stage_start).as_secs_f64(),
        });
        eprintln!(
            "[{}] {name} done in {:.2}s",
            self.manifest.command,
            (now - self.stage_start).as_secs_f64()
        );
        self.stage_start = now;
    }

    pub fn finish(self) -> Result<PathBuf> {
        let path = self.out_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

/// Pretty JSON, written atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    write_atomic(path, text.as_bytes())
}
