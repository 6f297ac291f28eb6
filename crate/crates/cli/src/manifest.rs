use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use unmix_core::io::KeyValues;
use unmix_core::solver::SolverConfig;
use unmix_core::{Error, Result};

pub const FILE_NAME: &str = "manifest.txt";

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    Ok(hex)
}

/// Manifest path for a run whose output is a single file.
pub fn beside(file: &Path) -> PathBuf {
    let mut name = file.as_os_str().to_owned();
    name.push(".manifest.txt");
    PathBuf::from(name)
}

/// Flat key-value record of one run: the subcommand, every resolved
/// setting, and a checksum per artifact.
pub struct Manifest {
    kv: KeyValues,
}

impl Manifest {
    pub fn new(subcommand: &str) -> Self {
        let mut kv = KeyValues::new();
        kv.set("subcommand", subcommand)
            .set("version", env!("CARGO_PKG_VERSION"));
        Self { kv }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.kv.set(key, value);
        self
    }

    pub fn path(&mut self, key: &str, value: &Path) -> &mut Self {
        self.set(key, value.display())
    }

    pub fn config(&mut self, cfg: &SolverConfig) -> &mut Self {
        for (k, v) in cfg.to_pairs() {
            self.kv.set(format!("config.{k}"), v);
        }
        self
    }

    pub fn checksum(&mut self, file: &Path) -> Result<&mut Self> {
        let name = file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let hex = sha256_hex(file)?;
        self.kv.set(format!("sha256.{name}"), hex);
        Ok(self)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.kv.write(path)
    }
}

/// Rebuilds the solver configuration stored under `config.*` keys.
pub fn config_from(kv: &KeyValues) -> Result<SolverConfig> {
    let mut cfg = SolverConfig::new(0);
    for (k, v) in kv.entries() {
        if let Some(field) = k.strip_prefix("config.") {
            cfg.set(field, v)?;
        }
    }
    Ok(cfg)
}
