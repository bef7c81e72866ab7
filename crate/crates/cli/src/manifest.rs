use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Crate name → version.
    pub components: BTreeMap<String, String>,
    pub config_sha256: String,
    /// The fully resolved configuration, defaults included.
    pub config: String,
    pub seeds: Vec<u64>,
    pub method: Option<String>,
    /// Role → file read by the command.
    pub inputs: BTreeMap<String, FileRef>,
    /// File name (relative to the output directory) → SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

impl RunManifest {
    pub fn new(command: &str, config: &str) -> Self {
        let components = [
            ("rrc-storm".to_string(), rrc_storm::VERSION.to_string()),
            (
                "rrc-storm-cli".to_string(),
                env!("CARGO_PKG_VERSION").to_string(),
            ),
        ]
        .into();
        Self {
            command: command.into(),
            components,
            config_sha256: sha256_hex(config.as_bytes()),
            config: config.into(),
            seeds: Vec::new(),
            method: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            wall_clock_s: 0.0,
        }
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<String, CliError> {
        let sha256 = hash_file(path)?;
        self.inputs.insert(
            role.into(),
            FileRef {
                path: path.display().to_string(),
                sha256: sha256.clone(),
            },
        );
        Ok(sha256)
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Consistency(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Consistency(format!("{}: {e}", path.display())))
    }

    /// Checks that `file` in `dir` still has the hash this manifest recorded.
    pub fn verify_output(&self, dir: &Path, file: &str) -> Result<String, CliError> {
        let expected = self.outputs.get(file).ok_or_else(|| {
            CliError::Consistency(format!(
                "{} does not list {file}",
                dir.join(MANIFEST).display()
            ))
        })?;
        let got = hash_file(&dir.join(file))?;
        if &got != expected {
            return Err(CliError::Consistency(format!(
                "{} changed since its manifest was written",
                dir.join(file).display()
            )));
        }
        Ok(got)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    let mut f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Output directory that only ever shows complete files: each one is
/// written to a hidden temporary name and renamed into place.
pub struct OutDir {
    pub root: PathBuf,
    pub manifest: RunManifest,
}

impl OutDir {
    pub fn create(root: PathBuf, manifest: RunManifest) -> Result<Self, CliError> {
        fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(Self { root, manifest })
    }

    pub fn write<F>(&mut self, name: &str, fill: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    {
        let path = self.root.join(name);
        write_atomic(&path, fill)?;
        let sha = hash_file(&path)?;
        self.manifest.outputs.insert(name.into(), sha);
        Ok(())
    }

    pub fn finish(mut self, wall_clock_s: f64) -> Result<PathBuf, CliError> {
        self.manifest.wall_clock_s = wall_clock_s;
        let manifest = self.manifest;
        let path = self.root.join(MANIFEST);
        write_atomic(&path, |w| {
            rrc_storm::io::write_json_sorted(w, &manifest).map_err(CliError::from)
        })?;
        Ok(self.root)
    }
}

fn write_atomic<F>(path: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
{
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let result = (|| {
        let file = File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        fill(&mut w)?;
        w.flush().map_err(|e| CliError::io(&tmp, e))?;
        w.get_ref().sync_all().map_err(|e| CliError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}
