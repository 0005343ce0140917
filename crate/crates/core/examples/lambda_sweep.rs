//! Sweeps the relative TV weight of `cs_tv` over simulated cases and prints
//! mean SSIM per weight, next to the zero-filled and CG-SENSE baselines.
//!
//! cargo run --release -p kbench-core --example lambda_sweep [ncases]

use kbench_core::kspace::{virtual_single_coil, Contrast};
use kbench_core::metrics::ssim;
use kbench_core::phantom::{simulate_case, SimConfig};
use kbench_core::recon::{
    cg_sense, cs_tv, estimate_sensitivities_cropped, zero_filled, ReconConfig, ReconMethod, DEFAULT_MAP_FLOOR,
};
use kbench_core::sampling::{apply_mask, CoilMode, TrackConfig};

const LAMBDAS: [f64; 6] = [1e-5, 3e-5, 1e-4, 2e-4, 3e-4, 1e-3];

fn main() -> kbench_core::Result<()> {
    let ncases: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let mc8 = TrackConfig::new(CoilMode::Multi, 8, None)?;
    let sc4 = TrackConfig::new(CoilMode::Single, 4, None)?;

    let mut zf = [0.0; 2];
    let mut cg = 0.0;
    let mut cs = vec![[0.0; 2]; LAMBDAS.len()];
    for i in 0..ncases {
        let cfg = SimConfig {
            case_id: format!("sweep{i:03}"),
            seed: 1000 + i as u64,
            contrast: if i % 2 == 0 { Contrast::PD } else { Contrast::PDFS },
            ..Default::default()
        };
        let case = simulate_case(&cfg)?;
        let gt = &case.ground_truth;

        let mc_mask = mc8.mask_for_case(cfg.width, &cfg.case_id, 7)?;
        let mc = apply_mask(&case.kspace, &mc_mask)?;
        let maps = estimate_sensitivities_cropped(&mc, mc_mask.center_fraction, DEFAULT_MAP_FLOOR)?;
        zf[0] += ssim(gt, &zero_filled(&mc)?)?;
        cg += ssim(
            gt,
            &cg_sense(&mc, &mc_mask, &maps, &ReconConfig::new(ReconMethod::CgSense))?.volume,
        )?;

        let (single, _) = virtual_single_coil(&case.kspace)?;
        let mask = sc4.mask_for_case(cfg.width, &cfg.case_id, 7)?;
        let sc = apply_mask(&single, &mask)?;
        zf[1] += ssim(gt, &zero_filled(&sc)?)?;

        for (j, &lambda_tv) in LAMBDAS.iter().enumerate() {
            let rc = ReconConfig {
                lambda_tv,
                ..ReconConfig::new(ReconMethod::CsTv)
            };
            cs[j][0] += ssim(gt, &cs_tv(&mc, &mc_mask, &rc, Some(&maps))?.volume)?;
            cs[j][1] += ssim(gt, &cs_tv(&sc, &mask, &rc, None)?.volume)?;
        }
        eprintln!("case {i} done");
    }
    let n = ncases as f64;
    println!("zero_filled  mc R=8 {:.4}  sc R=4 {:.4}", zf[0] / n, zf[1] / n);
    println!("cg_sense     mc R=8 {:.4}", cg / n);
    for (j, l) in LAMBDAS.iter().enumerate() {
        println!("cs_tv {l:>7.0e} mc R=8 {:.4}  sc R=4 {:.4}", cs[j][0] / n, cs[j][1] / n);
    }
    Ok(())
}
