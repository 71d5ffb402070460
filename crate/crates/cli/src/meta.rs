//! `metadata.json`: tool version, the run's configuration and a digest of
//! every input file. Nothing time-dependent goes in, so reruns are
//! byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{data, CliResult};

#[derive(Debug, Serialize)]
pub struct Metadata<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: C,
    /// Input path → sha256 of its content. Directories are expanded to
    /// their files.
    pub inputs: BTreeMap<String, String>,
}

fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)
        .with_context(|| format!("{}: cannot read", path.display()))
        .map_err(data)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digests of the given files and of the regular files directly inside the
/// given directories.
pub fn digest_inputs(paths: &[&Path]) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for path in paths {
        if path.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(path)
                .with_context(|| format!("{}: cannot list", path.display()))
                .map_err(data)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            for f in files {
                out.insert(f.display().to_string(), sha256_file(&f)?);
            }
        } else {
            out.insert(path.display().to_string(), sha256_file(path)?);
        }
    }
    Ok(out)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(data)? + "\n";
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("{}: cannot create", parent.display()))
            .map_err(data)?;
    }
    fs::write(path, text)
        .with_context(|| format!("{}: cannot write", path.display()))
        .map_err(data)
}

pub fn write_metadata<C: Serialize>(
    out_dir: &Path,
    command: &'static str,
    config: C,
    inputs: &[&Path],
) -> CliResult<()> {
    let meta = Metadata {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        inputs: digest_inputs(inputs)?,
    };
    write_json(&out_dir.join("metadata.json"), &meta)
}
