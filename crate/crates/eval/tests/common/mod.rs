#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{Duration, TimeZone, Utc};
use kbench_core::container::{write_case, ArrayData, Container, NamedArray, RECONSTRUCTION};
use kbench_core::kspace::{CaseAttrs, Contrast, KSpaceVolume, MagnitudeVolume, C32};
use kbench_core::rng::SplitMix64;
use kbench_core::sampling::Track;
use kbench_eval::dataset::SPLITS_FILE;
use kbench_eval::service::{Clock, Service, ServiceConfig, SubmissionManifest};
use kbench_eval::split::{split_dataset, SplitManifest, SplitName};
use ndarray::{Array3, Array4};
use serde::Deserialize;

pub const SIDE: usize = 16;

pub fn contrast_of(i: usize) -> Contrast {
    if i.is_multiple_of(2) {
        Contrast::PD
    } else {
        Contrast::PDFS
    }
}

pub fn gt_volume(seed: u64) -> MagnitudeVolume {
    let mut rng = SplitMix64::new(seed);
    MagnitudeVolume::new(Array3::from_shape_fn((2, SIDE, SIDE), |_| rng.uniform(0.5, 1.5) as f32)).unwrap()
}

/// Small dataset: `per_board` cases in each leaderboard split plus a few training cases.
pub fn write_dataset(root: &Path, per_board: usize) -> SplitManifest {
    let n = 2 + 4 * per_board;
    let ids: Vec<String> = (0..n).map(|i| format!("case{i:03}")).collect();
    let f = per_board as f64 / n as f64;
    let fractions: BTreeMap<SplitName, f64> = [
        (SplitName::Training, 2.0 / n as f64),
        (SplitName::TestMc, f),
        (SplitName::TestSc, f),
        (SplitName::ChallengeMc, f),
        (SplitName::ChallengeSc, f),
    ]
    .into();
    let manifest = split_dataset(&ids, 11, &fractions).unwrap();
    fs::create_dir_all(root.join("cases")).unwrap();
    for (i, id) in ids.iter().enumerate() {
        let attrs = CaseAttrs::new(id.clone(), contrast_of(i), 3.0);
        let k = KSpaceVolume::new(Array4::from_elem((2, 1, SIDE, SIDE), C32::new(1.0, 0.0)), attrs).unwrap();
        write_case(
            &root.join("cases").join(format!("{id}.ksb")),
            &k,
            Some(&gt_volume(i as u64)),
        )
        .unwrap();
    }
    fs::write(root.join(SPLITS_FILE), serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    manifest
}

pub fn case_index(id: &str) -> usize {
    id.trim_start_matches("case").parse().unwrap()
}

/// Reconstruction container for `case` at `accel`: ground truth plus noise of
/// relative size `error`.
pub fn recon_blob(case: &str, accel: u32, error: f64, seed: u64) -> Vec<u8> {
    let i = case_index(case);
    let gt = gt_volume(i as u64);
    let mut rng = SplitMix64::new(seed ^ (accel as u64) << 32 ^ i as u64);
    let noisy = gt.view().mapv(|v| v + (error * rng.uniform(-1.0, 1.0)) as f32);
    let mut attrs = CaseAttrs::new(case, contrast_of(i), 3.0);
    attrs.extra.insert("accel".into(), accel.into());
    Container {
        attrs,
        arrays: vec![NamedArray {
            name: RECONSTRUCTION.into(),
            data: ArrayData::Real(noisy.into_dyn()),
        }],
    }
    .to_bytes()
    .unwrap()
}

pub fn submission_blobs(
    manifest: &SplitManifest,
    split: SplitName,
    track: Track,
    error: f64,
    seed: u64,
) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for c in manifest.cases(split) {
        for &a in track.accelerations() {
            out.push(recon_blob(c, a, error, seed));
        }
    }
    out
}

pub fn team(name: &str) -> SubmissionManifest {
    SubmissionManifest {
        team_id: name.into(),
        description: format!("{name} entry"),
        links: vec![],
    }
}

pub fn fixed_clock(step_minutes: i64) -> Clock {
    Clock::fixed(
        Utc.with_ymd_and_hms(2019, 9, 1, 0, 0, 0).unwrap(),
        Duration::minutes(step_minutes),
    )
}

pub fn open_service(root: &Path, step_minutes: i64) -> Service {
    Service::open(ServiceConfig {
        dataset_dir: root.join("dataset"),
        data_dir: root.join("eval"),
        study_dir: Some(root.join("study")),
        clock: fixed_clock(step_minutes),
        team_tokens: BTreeMap::new(),
        admin_token: None,
    })
    .unwrap()
}

#[derive(Debug, Deserialize)]
pub struct ExpectedTeam {
    pub avg_rank: String,
    pub rank_label: String,
    pub criteria: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
pub struct VoteScenario {
    pub name: String,
    pub teams: Vec<String>,
    /// Per reader, ranks in `teams` order.
    pub ranks: Vec<Vec<u8>>,
    /// Per criterion, per reader, scores in `teams` order.
    pub scores: BTreeMap<String, Vec<Vec<u8>>>,
    pub expected: BTreeMap<String, ExpectedTeam>,
}

#[derive(Debug, Deserialize)]
struct VoteFile {
    scenarios: Vec<VoteScenario>,
}

pub fn vote_scenarios() -> Vec<VoteScenario> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/reader_votes.json");
    serde_json::from_str::<VoteFile>(&fs::read_to_string(path).unwrap())
        .unwrap()
        .scenarios
}

pub fn vote_scenario(name: &str) -> VoteScenario {
    vote_scenarios().into_iter().find(|s| s.name == name).unwrap()
}

impl VoteScenario {
    pub fn responses(&self) -> Vec<kbench_eval::study::UnblindedResponse> {
        use kbench_eval::study::{CriterionScores, UnblindedResponse};
        (0..self.ranks.len())
            .map(|r| {
                let s = |c: &str, t: usize| self.scores[c][r][t];
                UnblindedResponse {
                    reader_id: format!("R{}", r + 1),
                    ranks: self.teams.iter().cloned().zip(self.ranks[r].iter().copied()).collect(),
                    scores: self
                        .teams
                        .iter()
                        .enumerate()
                        .map(|(t, team)| {
                            (
                                team.clone(),
                                CriterionScores {
                                    artifacts: s("artifacts", t),
                                    sharpness: s("sharpness", t),
                                    cnr: s("cnr", t),
                                    diagnostic_confidence: s("diagnostic_confidence", t),
                                },
                            )
                        })
                        .collect(),
                }
            })
            .collect()
    }
}
