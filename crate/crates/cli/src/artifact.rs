//! Stamped JSON artifacts.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

pub const TOOL: &str = "ffm";

/// Provenance attached to every artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    /// SHA-256 of the JSON form of the parameters that produced the artifact.
    pub config_hash: String,
    pub seed: Option<u64>,
    /// Hash of the pipeline config when produced by `pipeline`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline_hash: Option<String>,
}

impl Stamp {
    pub fn new<C: Serialize>(config: &C, seed: Option<u64>, pipeline_hash: Option<&str>) -> Self {
        Stamp {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            core_version: ffm_core::VERSION.to_string(),
            config_hash: config_hash(config),
            seed,
            pipeline_hash: pipeline_hash.map(String::from),
        }
    }
}

pub fn config_hash<C: Serialize>(config: &C) -> String {
    let bytes = serde_json::to_vec(config).expect("configs serialize");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub kind: String,
    pub stamp: Stamp,
    pub data: T,
}

/// Artifact kinds.
pub mod kind {
    pub const SIMULATION: &str = "simulation";
    pub const ENVIRONMENT: &str = "environment";
    pub const CURVES: &str = "curves";
    pub const LAW: &str = "law";
    pub const COUPLING: &str = "coupling";
    pub const REPORT: &str = "report";
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::File { path: path.display().to_string(), source }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T, pretty: bool) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(file_err(dir))?;
    }
    let mut bytes = if pretty { serde_json::to_vec_pretty(value) } else { serde_json::to_vec(value) }
        .map_err(|source| CliError::Parse { path: path.display().to_string(), source })?;
    bytes.push(b'\n');
    let mut f = fs::File::create(path).map_err(file_err(path))?;
    f.write_all(&bytes).map_err(file_err(path))
}

pub fn write_artifact<T: Serialize>(path: &Path, kind: &str, stamp: Stamp, data: &T) -> CliResult<()> {
    #[derive(Serialize)]
    struct Out<'a, T> {
        kind: &'a str,
        stamp: Stamp,
        data: &'a T,
    }
    write_json(path, &Out { kind, stamp, data }, false)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let bytes = fs::read(path).map_err(file_err(path))?;
    serde_json::from_slice(&bytes).map_err(|source| CliError::Parse { path: path.display().to_string(), source })
}

/// Read an artifact and check its kind.
pub fn read_artifact<T: DeserializeOwned>(path: &Path, expected: &str) -> CliResult<Artifact<T>> {
    #[derive(Deserialize)]
    struct Head {
        kind: String,
    }
    let bytes = fs::read(path).map_err(file_err(path))?;
    let head: Head = serde_json::from_slice(&bytes)
        .map_err(|_| ffm_core::Error::SchemaMismatch(format!("{} is not a {expected} artifact", path.display())))?;
    if head.kind != expected {
        return Err(ffm_core::Error::SchemaMismatch(format!(
            "{} holds a {} artifact, expected {expected}",
            path.display(),
            head.kind
        ))
        .into());
    }
    serde_json::from_slice(&bytes)
        .map_err(|e| ffm_core::Error::SchemaMismatch(format!("{}: {e}", path.display())).into())
}

/// Metadata stored inside an environment file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvMeta {
    pub kind: String,
    pub stamp: Stamp,
}

pub fn save_env(path: &Path, env: &ffm_core::kinetics::Environment, stamp: Stamp) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(file_err(dir))?;
    }
    let meta = EnvMeta { kind: kind::ENVIRONMENT.to_string(), stamp };
    env.save_with_meta(path, Some(serde_json::to_value(meta).expect("stamp serializes")))?;
    Ok(())
}

pub fn load_env(path: &Path) -> CliResult<ffm_core::kinetics::Environment> {
    if !path.exists() {
        return Err(CliError::Usage(format!("{} does not exist", path.display())));
    }
    Ok(ffm_core::kinetics::Environment::load(path)?)
}

/// File name used to refer to an input artifact inside another artifact.
pub fn file_label(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}
