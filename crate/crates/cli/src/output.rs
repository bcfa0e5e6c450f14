//! Artifact directory: `manifest.json`, `valuegrid/`, `paths/`, `reports/`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Started,
    Passed,
    Inconclusive,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub fingerprint: String,
    pub seed: u64,
    pub subcommand: String,
    pub status: RunStatus,
    pub config: ExperimentConfig,
    /// Files written by the run with their hashes, sorted by path.
    pub files: Vec<FileEntry>,
}

/// Wraps any report body with the provenance fields every output carries.
#[derive(Debug, Serialize)]
struct Stamped<'a, T: Serialize> {
    fingerprint: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: &'a T,
}

pub struct ArtifactDir {
    root: PathBuf,
    manifest: Manifest,
}

impl ArtifactDir {
    /// Creates the layout and writes the manifest before anything runs.
    pub fn create(root: &Path, subcommand: &str, cfg: &ExperimentConfig) -> Result<Self> {
        for sub in ["valuegrid", "paths", "reports"] {
            fs::create_dir_all(root.join(sub)).with_context(|| format!("creating {}", root.join(sub).display()))?;
        }
        let dir = Self {
            root: root.to_path_buf(),
            manifest: Manifest {
                fingerprint: cfg.fingerprint(),
                seed: cfg.simulation.seed,
                subcommand: subcommand.to_string(),
                status: RunStatus::Started,
                config: cfg.clone(),
                files: Vec::new(),
            },
        };
        dir.write_manifest()?;
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn fingerprint(&self) -> &str {
        &self.manifest.fingerprint
    }

    pub fn seed(&self) -> u64 {
        self.manifest.seed
    }

    fn write_manifest(&self) -> Result<()> {
        write_json_file(&self.root.join("manifest.json"), &self.manifest)
    }

    /// Records a file written under the root.
    pub fn register(&mut self, rel: &str) -> Result<()> {
        let bytes = fs::read(self.root.join(rel)).with_context(|| format!("reading back {rel}"))?;
        let entry = FileEntry {
            path: rel.to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        };
        self.manifest.files.retain(|f| f.path != rel);
        self.manifest.files.push(entry);
        self.manifest.files.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(())
    }

    /// Writes `reports/<name>.json` stamped with fingerprint and seed.
    pub fn report<T: Serialize>(&mut self, name: &str, body: &T) -> Result<()> {
        let rel = format!("reports/{name}.json");
        let stamped = Stamped {
            fingerprint: &self.manifest.fingerprint,
            seed: self.manifest.seed,
            body,
        };
        write_json_file(&self.root.join(&rel), &stamped)?;
        self.register(&rel)
    }

    /// Writes a CSV under the root through `fill`.
    pub fn csv(&mut self, rel: &str, fill: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.root.join(rel)).with_context(|| format!("creating {rel}"))?);
        fill(&mut w)?;
        w.flush()?;
        self.register(rel)
    }

    pub fn finish(mut self, status: RunStatus) -> Result<()> {
        self.manifest.status = status;
        self.write_manifest()
    }
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(root.join("manifest.json"))
        .with_context(|| format!("reading {}", root.join("manifest.json").display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Refuses to combine artifacts produced under different configurations.
pub fn ensure_same_fingerprint(expected: &str, found: &str, what: &str) -> Result<()> {
    if expected != found {
        bail!("fingerprint mismatch for {what}: expected {expected}, found {found}");
    }
    Ok(())
}

/// CSV writer in the fixed dialect: comma, header row, LF endings.
pub fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}
