//! Run configuration: one TOML file, one section per pipeline module.
//!
//! Every tunable has a value in `configs/default.toml`; the built-in defaults
//! below are identical to that file and exist only so partial files stay short.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, ensure, Context as _, Result};
use chrono::{DateTime, Duration, TimeZone, Utc};
use kbench_core::kspace::Contrast;
use kbench_core::phantom::SimConfig;
use kbench_core::recon::{ReconConfig, ReconMethod};
use kbench_core::sampling::{Track, TrackConfig};
use kbench_eval::service::Clock;
use kbench_eval::split::SplitName;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub sim: SimSection,
    pub split: SplitSection,
    pub sampling: SamplingSection,
    pub recon: ReconSection,
    pub eval: EvalSection,
    pub study: StudySection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Root of every seeded stream in the run.
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 2019 }
    }
}

/// Phantom settings shared by all cases; case `i` is PD for even `i`, PDFS
/// for odd `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub n_cases: usize,
    pub nslices: usize,
    pub height: usize,
    pub width: usize,
    pub ncoils: usize,
    pub base_snr: f64,
    pub field_strength_tesla: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            n_cases: 24,
            nslices: 3,
            height: d.height,
            width: d.width,
            ncoils: d.ncoils,
            base_snr: d.base_snr,
            field_strength_tesla: d.field_strength_tesla,
        }
    }
}

impl SimSection {
    pub fn case_id(i: usize) -> String {
        format!("case{i:04}")
    }

    pub fn contrast(i: usize) -> Contrast {
        if i.is_multiple_of(2) {
            Contrast::PD
        } else {
            Contrast::PDFS
        }
    }

    pub fn case_config(&self, i: usize, seed: u64) -> SimConfig {
        SimConfig {
            case_id: Self::case_id(i),
            seed,
            nslices: self.nslices,
            height: self.height,
            width: self.width,
            ncoils: self.ncoils,
            contrast: Self::contrast(i),
            base_snr: self.base_snr,
            field_strength_tesla: self.field_strength_tesla,
        }
    }
}

/// Fraction of cases per split; the remainder, if any, is left unassigned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub training: f64,
    pub validation: f64,
    pub test_mc: f64,
    pub test_sc: f64,
    pub challenge_mc: f64,
    pub challenge_sc: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            training: 0.0625,
            validation: 0.0625,
            test_mc: 0.21875,
            test_sc: 0.21875,
            challenge_mc: 0.21875,
            challenge_sc: 0.21875,
        }
    }
}

impl SplitSection {
    pub fn fractions(&self) -> BTreeMap<SplitName, f64> {
        [
            (SplitName::Training, self.training),
            (SplitName::Validation, self.validation),
            (SplitName::TestMc, self.test_mc),
            (SplitName::TestSc, self.test_sc),
            (SplitName::ChallengeMc, self.challenge_mc),
            (SplitName::ChallengeSc, self.challenge_sc),
        ]
        .into()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub center_fraction_r4: f64,
    pub center_fraction_r8: f64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            center_fraction_r4: 0.08,
            center_fraction_r8: 0.04,
        }
    }
}

impl SamplingSection {
    pub fn track_config(&self, track: Track, accel: u32) -> Result<TrackConfig> {
        let cf = match accel {
            4 => self.center_fraction_r4,
            8 => self.center_fraction_r8,
            other => bail!("no center fraction configured for R={other}"),
        };
        Ok(TrackConfig::new(track.coil_mode(), accel, Some(cf))?)
    }
}

/// Methods to run plus one parameter table per method. A `method` key inside
/// a table, if given, must name that table's method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconSection {
    pub methods: Vec<ReconMethod>,
    pub zero_filled: ReconConfig,
    pub cg_sense: ReconConfig,
    pub cs_tv: ReconConfig,
}

impl Default for ReconSection {
    fn default() -> Self {
        Self {
            methods: vec![ReconMethod::ZeroFilled, ReconMethod::CgSense, ReconMethod::CsTv],
            zero_filled: explicit(ReconMethod::ZeroFilled),
            cg_sense: explicit(ReconMethod::CgSense),
            cs_tv: explicit(ReconMethod::CsTv),
        }
    }
}

/// Library defaults with the per-method fallbacks spelled out, so the config
/// file states every value a run uses.
fn explicit(method: ReconMethod) -> ReconConfig {
    let cfg = ReconConfig::new(method);
    ReconConfig {
        max_iters: Some(cfg.iterations()),
        step_size: Some(cfg.step()),
        ..cfg
    }
}

impl ReconSection {
    pub fn config(&self, method: ReconMethod) -> ReconConfig {
        let table = match method {
            ReconMethod::ZeroFilled => &self.zero_filled,
            ReconMethod::CgSense => &self.cg_sense,
            ReconMethod::CsTv => &self.cs_tv,
        };
        ReconConfig {
            method,
            ..table.clone()
        }
    }

    fn normalize(&mut self) -> Result<()> {
        for (method, table) in [
            (ReconMethod::ZeroFilled, &mut self.zero_filled),
            (ReconMethod::CgSense, &mut self.cg_sense),
            (ReconMethod::CsTv, &mut self.cs_tv),
        ] {
            // An absent key deserializes to the default method.
            ensure!(
                table.method == method || table.method == ReconMethod::ZeroFilled,
                "[recon.{method}] sets method = {:?}",
                table.method.as_str()
            );
            table.method = method;
            table.validate().with_context(|| format!("[recon.{method}]"))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    System,
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockSection {
    /// `fixed` starts at `start` and advances `step_minutes` per event, which
    /// makes a served session reproducible.
    pub mode: ClockMode,
    pub start: DateTime<Utc>,
    pub step_minutes: i64,
}

impl Default for ClockSection {
    fn default() -> Self {
        Self {
            mode: ClockMode::System,
            start: Utc.with_ymd_and_hms(2019, 9, 1, 0, 0, 0).unwrap(),
            step_minutes: 60,
        }
    }
}

impl ClockSection {
    pub fn clock(&self) -> Clock {
        match self.mode {
            ClockMode::System => Clock::System,
            ClockMode::Fixed => Clock::fixed(self.start, Duration::minutes(self.step_minutes)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Listen address of `kbench serve`; port 0 picks a free port.
    pub bind: String,
    /// Base URL used by `kbench submit` and `kbench close-window`.
    pub url: String,
    /// When set, closing the window requires this bearer token.
    pub admin_token: Option<String>,
    /// Bearer token → team id. Empty: any team id is accepted unauthenticated.
    pub teams: BTreeMap<String, String>,
    pub clock: ClockSection,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            url: "http://127.0.0.1:8080".into(),
            admin_token: None,
            teams: BTreeMap::new(),
            clock: ClockSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub finalists: usize,
    pub n_cases: usize,
    pub n_readers: usize,
    /// Acceleration whose reconstructions readers see, per track.
    pub multicoil_accel: u32,
    pub singlecoil_accel: u32,
    /// Slice indices to render; empty renders every slice.
    pub slices: Vec<usize>,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            finalists: kbench_eval::protocol::DEFAULT_FINALISTS,
            n_cases: kbench_eval::study::DEFAULT_STUDY_CASES,
            n_readers: kbench_eval::study::DEFAULT_READERS,
            multicoil_accel: 8,
            singlecoil_accel: 4,
            slices: Vec::new(),
        }
    }
}

impl StudySection {
    pub fn accel(&self, track: Track) -> u32 {
        match track {
            Track::Multicoil => self.multicoil_accel,
            Track::Singlecoil => self.singlecoil_accel,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text)?;
        cfg.recon.normalize()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.sim.n_cases > 0, "[sim] n_cases must be >= 1");
        self.sim.case_config(0, 0).validate().context("[sim]")?;
        let total: f64 = self.split.fractions().values().sum();
        ensure!(total <= 1.0 + 1e-9, "[split] fractions sum to {total} > 1");
        for track in Track::ALL {
            for &a in track.accelerations() {
                self.sampling.track_config(track, a).context("[sampling]")?;
            }
            let a = self.study.accel(track);
            ensure!(
                track.accelerations().contains(&a),
                "[study] {track} track has no R={a} reconstructions"
            );
        }
        ensure!(!self.recon.methods.is_empty(), "[recon] methods is empty");
        for m in &self.recon.methods {
            self.recon
                .config(*m)
                .validate()
                .with_context(|| format!("[recon.{m}]"))?;
        }
        ensure!(self.study.finalists > 0, "[study] finalists must be >= 1");
        ensure!(self.study.n_cases > 0, "[study] n_cases must be >= 1");
        ensure!(self.study.n_readers > 0, "[study] n_readers must be >= 1");
        ensure!(
            self.eval.clock.step_minutes >= 0,
            "[eval.clock] step_minutes must be >= 0"
        );
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, so formatting and key order in the
    /// file do not matter.
    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Copy safe to write next to outputs: tokens replaced by placeholders.
    pub fn redacted(&self) -> Self {
        let mut cfg = self.clone();
        if cfg.eval.admin_token.is_some() {
            cfg.eval.admin_token = Some("<redacted>".into());
        }
        cfg.eval.teams = cfg
            .eval
            .teams
            .values()
            .enumerate()
            .map(|(i, team)| (format!("<redacted-{i}>"), team.clone()))
            .collect();
        cfg
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
