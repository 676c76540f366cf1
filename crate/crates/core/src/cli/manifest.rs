use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) })
    }

    #[cfg(test)]
    pub fn verify(&self) -> Result<bool> {
        Ok(Self::of(Path::new(&self.path))?.sha256 == self.sha256)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub elapsed_ms: u128,
}

/// Collects inputs and outputs of one command, then writes
/// `<out>/<command>.manifest.json`.
pub struct ManifestBuilder {
    command: String,
    argv: Vec<String>,
    seed: u64,
    config: serde_json::Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, argv: Vec<String>, seed: u64, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            argv,
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    /// Records a file, or every file below a directory.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.extend(expand(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    pub fn finish(self, out_dir: &Path) -> Result<PathBuf> {
        let digest = |paths: &[PathBuf]| paths.iter().map(|p| FileDigest::of(p)).collect::<Result<Vec<_>>>();
        let manifest = RunManifest {
            command: self.command.clone(),
            argv: self.argv,
            seed: self.seed,
            config: self.config,
            inputs: digest(&self.inputs)?,
            outputs: digest(&self.outputs)?,
            elapsed_ms: self.started.elapsed().as_millis(),
        };
        let path = out_dir.join(format!("{}.manifest.json", self.command));
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn expand(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| format!("listing {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    let mut out = Vec::new();
    for e in entries {
        out.extend(expand(&e)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_verify_on_reread() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        let output = dir.path().join("out.txt");
        std::fs::write(&input, "abc").unwrap();
        std::fs::write(&output, "xyz").unwrap();
        let mut b = ManifestBuilder::new("demo", vec!["srlp".into()], 7, serde_json::json!({"k": 1}));
        b.input(dir.path()).unwrap();
        b.output(output.clone());
        let path = b.finish(dir.path()).unwrap();
        let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(m.inputs.len(), 2);
        assert_eq!(m.inputs[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert!(m.inputs.iter().chain(&m.outputs).all(|d| d.verify().unwrap()));
        std::fs::write(&output, "changed").unwrap();
        assert!(!m.outputs[0].verify().unwrap());
    }
}
