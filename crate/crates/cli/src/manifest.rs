use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{write_error, CliError};

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    pub format: String,
}

/// Sidecar `<output>.manifest.json` describing one invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub arguments: Vec<String>,
    pub config: Option<serde_json::Value>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub wall_time_s: f64,
}

pub fn sha256_file(path: &Path) -> std::io::Result<(String, u64)> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((hex::encode(hasher.finalize()), total))
}

pub struct ManifestBuilder {
    started: Instant,
    manifest: RunManifest,
    outputs: Vec<(PathBuf, String)>,
    inputs: Vec<(PathBuf, String)>,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        Self {
            started: Instant::now(),
            manifest: RunManifest {
                tool: "timebin",
                version: env!("CARGO_PKG_VERSION"),
                command: command.into(),
                arguments: std::env::args().skip(1).collect(),
                config: None,
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                wall_time_s: 0.0,
            },
            outputs: Vec::new(),
            inputs: Vec::new(),
        }
    }

    pub fn config<T: Serialize>(&mut self, config: &T) {
        self.manifest.config = serde_json::to_value(config).ok();
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.manifest.seeds.insert(name.into(), seed);
    }

    pub fn input(&mut self, path: &Path, format: &str) {
        self.inputs.push((path.to_path_buf(), format.into()));
    }

    pub fn output(&mut self, path: &Path, format: &str) {
        self.outputs.push((path.to_path_buf(), format.into()));
    }

    /// Hashes every listed file and writes the manifest next to `primary`.
    pub fn write(mut self, primary: &Path) -> Result<PathBuf, CliError> {
        let entries = |list: &[(PathBuf, String)]| -> Result<Vec<FileEntry>, CliError> {
            list.iter()
                .map(|(p, fmt)| {
                    let (sha256, bytes) = sha256_file(p).map_err(|e| write_error(p, e))?;
                    Ok(FileEntry {
                        path: p.display().to_string(),
                        sha256,
                        bytes,
                        format: fmt.clone(),
                    })
                })
                .collect()
        };
        self.manifest.inputs = entries(&self.inputs)?;
        self.manifest.outputs = entries(&self.outputs)?;
        self.manifest.wall_time_s = self.started.elapsed().as_secs_f64();
        let path = manifest_path(primary);
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&path, json + "\n").map_err(|e| write_error(&path, e))?;
        Ok(path)
    }
}

pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut s = primary.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
