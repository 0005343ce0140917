//! Run directory layout and atomic stage outputs.
//!
//! Every stage builds its output directory next to the target under a
//! `.partial` name, writes a `run-manifest.json`, and only then moves it into
//! place. An existing target with identical contents is left untouched; a
//! differing one is replaced only with `--force`. A failing stage leaves no
//! partial output behind.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use kbench_core::recon::ReconMethod;
use kbench_core::sampling::Track;
use serde::Serialize;

use crate::config::Config;

pub const MANIFEST_FILE: &str = "run-manifest.json";

/// Provenance of one stage output. Deliberately free of timestamps so that
/// re-running a stage reproduces it byte for byte.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub args: serde_json::Value,
    pub seed: u64,
    pub config_sha256: String,
    pub version: &'static str,
    /// The run's configuration with bearer tokens blanked out.
    pub config: Config,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageOutcome {
    Created,
    Unchanged,
    Replaced,
}

pub struct Context {
    pub out: PathBuf,
    pub config: Config,
    pub force: bool,
    pool: rayon::ThreadPool,
}

impl Context {
    /// `seed` overrides `[run] seed`; `jobs = 0` uses one thread per core.
    pub fn new(out: &Path, mut config: Config, seed: Option<u64>, jobs: usize, force: bool) -> Result<Self> {
        if let Some(s) = seed {
            config.run.seed = s;
        }
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
        Ok(Self {
            out: out.to_path_buf(),
            config,
            force,
            pool,
        })
    }

    pub fn seed(&self) -> u64 {
        self.config.run.seed
    }

    /// Runs `f` on the configured worker pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.out.join("dataset")
    }

    pub fn inputs_dir(&self) -> PathBuf {
        self.out.join("inputs")
    }

    pub fn recon_dir(&self, method: ReconMethod) -> PathBuf {
        self.out.join("recon").join(method.as_str())
    }

    pub fn scores_dir(&self, method: ReconMethod) -> PathBuf {
        self.out.join("scores").join(method.as_str())
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.out.join("eval")
    }

    pub fn study_dir(&self) -> PathBuf {
        self.out.join("study")
    }

    pub fn study_result_dir(&self, track: Track) -> PathBuf {
        self.study_dir().join(track.as_str()).join("result")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out.join("report")
    }

    pub fn manifest<'a>(&'a self, command: &'a str, args: serde_json::Value) -> RunManifest<'a> {
        RunManifest {
            command,
            args,
            seed: self.seed(),
            config_sha256: self.config.sha256(),
            version: env!("CARGO_PKG_VERSION"),
            config: self.config.redacted(),
        }
    }

    /// Builds `target` through `build`, which fills the staging directory it
    /// is given.
    pub fn stage(
        &self,
        target: &Path,
        manifest: RunManifest<'_>,
        build: impl FnOnce(&Path) -> Result<()>,
    ) -> Result<StageOutcome> {
        let parent = target.parent().context("stage target has no parent")?;
        let name = target
            .file_name()
            .context("stage target has no name")?
            .to_string_lossy();
        fs::create_dir_all(parent)?;
        let staging = parent.join(format!(".{name}.partial"));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        let built = build(&staging).and_then(|()| {
            let mut json = serde_json::to_vec_pretty(&manifest)?;
            json.push(b'\n');
            fs::write(staging.join(MANIFEST_FILE), json)?;
            Ok(())
        });
        if let Err(e) = built {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
        let outcome = if !target.exists() {
            StageOutcome::Created
        } else if same_tree(&staging, target)? {
            fs::remove_dir_all(&staging)?;
            return Ok(StageOutcome::Unchanged);
        } else if self.force {
            fs::remove_dir_all(target)?;
            StageOutcome::Replaced
        } else {
            fs::remove_dir_all(&staging)?;
            bail!(
                "refusing to overwrite {}: existing contents differ (rerun with --force to replace)",
                target.display()
            );
        };
        fs::rename(&staging, target)?;
        Ok(outcome)
    }
}

/// Relative paths of all files under `root`, sorted.
pub fn files_under(root: &Path) -> Result<Vec<PathBuf>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                out.push(path.strip_prefix(root)?.to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out)?;
    out.sort();
    Ok(out)
}

pub fn same_tree(a: &Path, b: &Path) -> Result<bool> {
    let files = files_under(a)?;
    if files != files_under(b)? {
        return Ok(false);
    }
    for f in &files {
        if fs::read(a.join(f))? != fs::read(b.join(f))? {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    if let Some(p) = path.parent() {
        fs::create_dir_all(p)?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn require_dir(path: &Path, produced_by: &str) -> Result<()> {
    if !path.is_dir() {
        bail!("{} does not exist; run `kbench {produced_by}` first", path.display());
    }
    Ok(())
}
