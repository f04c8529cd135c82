//! Artifact directory: CSV and JSON files plus a manifest.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{is_cap, CliError, Result};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStatus {
    pub task: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub code_version: String,
    pub config_digest: String,
    pub seed: u64,
    pub tasks: Vec<TaskStatus>,
    pub files: Vec<FileDigest>,
}

pub struct Artifacts {
    dir: PathBuf,
    command: String,
    files: Vec<FileDigest>,
    tasks: Vec<TaskStatus>,
    capped: bool,
}

impl Artifacts {
    pub fn create(dir: &Path, command: &str) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.into(),
            files: Vec::new(),
            tasks: Vec::new(),
            capped: false,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.files.push(FileDigest { name: name.into(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        self.write_bytes(name, &csv_bytes(rows)?)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn record<T>(&mut self, task: impl Into<String>, result: &critperc::Result<T>) {
        let error = result.as_ref().err().map(|e| {
            self.capped |= is_cap(e);
            e.to_string()
        });
        self.tasks.push(TaskStatus { task: task.into(), ok: error.is_none(), error });
    }

    /// Write the manifest; any failed task turns into an error.
    pub fn finish(self, config: &RunConfig) -> Result<Manifest> {
        let manifest = Manifest {
            command: self.command,
            code_version: CODE_VERSION.into(),
            config_digest: sha256_hex(config.to_text().as_bytes()),
            seed: config.seed,
            tasks: self.tasks,
            files: self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.dir.join("manifest.json"), text)?;
        let failed: Vec<&TaskStatus> = manifest.tasks.iter().filter(|t| !t.ok).collect();
        if let Some(first) = failed.first() {
            return Err(CliError::Tasks {
                failed: failed.len(),
                total: manifest.tasks.len(),
                capped: self.capped,
                first: format!("{}: {}", first.task, first.error.as_deref().unwrap_or("")),
            });
        }
        Ok(manifest)
    }
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

/// Run `f(0..count)` on `workers` threads; results come back in task order.
pub fn run_tasks<T, F>(count: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if workers <= 1 || count <= 1 {
        return (0..count).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.min(count) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let r = f(i);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|r| r.expect("every task ran")).collect()
}
