//! Config resolution (defaults <- file <- --set overrides <- shorthands)
//! and run-directory management.

use std::path::{Path, PathBuf};

use mcr_core::config::RunConfig;
use mcr_core::{Error, Result};

use crate::ConfigArgs;

pub fn load(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for kv in &args.set {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.apply_override(key.trim(), value.trim())?;
    }
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(dir) = &args.out_dir {
        cfg.run.out_dir = dir.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Prepare an output directory: refuse to reuse a non-empty one without
/// `--force`, and hold a lock file for the duration of the command.
pub struct RunDir {
    pub path: PathBuf,
    lock: PathBuf,
}

impl RunDir {
    pub fn create(path: &Path, force: bool) -> Result<Self> {
        if path.exists() {
            let non_empty = std::fs::read_dir(path)?.next().is_some();
            if non_empty && !force {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::AlreadyExists,
                    format!(
                        "output directory {} exists and is not empty (use --force to overwrite)",
                        path.display()
                    ),
                )));
            }
        }
        std::fs::create_dir_all(path)?;
        let lock = path.join(".lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::WouldBlock,
                    format!("output directory {} is locked by another run", path.display()),
                )))
            }
            Err(e) => return Err(e.into()),
        }
        Ok(RunDir {
            path: path.to_path_buf(),
            lock,
        })
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.lock);
    }
}

/// Snapshot of what produced a run directory, written as run.json.
#[derive(serde::Serialize)]
pub struct RunManifest<'a> {
    pub run_id: String,
    pub command: &'a str,
    pub config_hash: String,
    pub input_manifest: Option<String>,
    pub out_dir: String,
    pub config: &'a RunConfig,
}

pub fn write_run_manifest(
    dir: &RunDir,
    command: &str,
    cfg: &RunConfig,
    input_manifest: Option<&Path>,
) -> Result<()> {
    let hash = hex(&cfg.model_hash());
    let m = RunManifest {
        run_id: format!("{command}-{:08x}", cfg.run.seed),
        command,
        config_hash: hash,
        input_manifest: input_manifest.map(|p| p.to_string_lossy().into_owned()),
        out_dir: dir.path.to_string_lossy().into_owned(),
        config: cfg,
    };
    std::fs::write(
        dir.join("run.json"),
        serde_json::to_string_pretty(&m).unwrap() + "\n",
    )?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
