//! Synthetic multi-coil cases with known ground truth.

use std::f64::consts::PI;

use ndarray::{Array2, Array3, Array4, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::kspace::{
    center_crop, rss_combine, CaseAttrs, CenteredFft2, CoilImages, Contrast, KSpaceVolume, MagnitudeVolume, C32, C64,
    CROP_SIZE,
};
use crate::rng::SplitMix64;

/// Simulation settings for one case. `base_snr = inf` disables noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub case_id: String,
    pub seed: u64,
    pub nslices: usize,
    pub height: usize,
    pub width: usize,
    pub ncoils: usize,
    pub contrast: Contrast,
    pub base_snr: f64,
    pub field_strength_tesla: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            case_id: "case000".into(),
            seed: 0,
            nslices: 1,
            height: 372,
            width: 372,
            ncoils: 15,
            contrast: Contrast::PD,
            base_snr: 600.0,
            field_strength_tesla: 3.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nslices == 0 {
            return Err(Error::InvalidConfig("nslices must be >= 1".into()));
        }
        if self.ncoils == 0 {
            return Err(Error::InvalidConfig("ncoils must be >= 1".into()));
        }
        if self.base_snr.is_nan() || self.base_snr <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "base_snr must be positive, got {}",
                self.base_snr
            )));
        }
        if self.height < CROP_SIZE || self.width < CROP_SIZE {
            return Err(Error::InvalidConfig(format!(
                "grid {}x{} is smaller than the {CROP_SIZE}x{CROP_SIZE} crop",
                self.height, self.width
            )));
        }
        crate::kspace::validate_field_strength(self.field_strength_tesla)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    /// SNR after the contrast penalty: fat suppression costs a factor of 4.
    pub fn effective_snr(&self) -> f64 {
        match self.contrast {
            Contrast::PD => self.base_snr,
            Contrast::PDFS => self.base_snr / 4.0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    angle: f64,
    /// Palette slot in [0, 1); mapped to an intensity per contrast.
    tone: f64,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64) -> bool {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let (s, c) = self.angle.sin_cos();
        let u = (dx * c + dy * s) / self.rx;
        let v = (-dx * s + dy * c) / self.ry;
        u * u + v * v <= 1.0
    }
}

/// Anatomy shared by every slice of a case.
struct Anatomy {
    body: Ellipse,
    features: Vec<Ellipse>,
    lesion: Ellipse,
    lesion_boost: f64,
}

fn anatomy(cfg: &SimConfig) -> Anatomy {
    let (h, w) = (cfg.height as f64, cfg.width as f64);
    let mut rng = SplitMix64::derived(cfg.seed, &[0xA7A7]);
    let body = Ellipse {
        cy: h / 2.0 + rng.uniform(-0.01, 0.01) * h,
        cx: w / 2.0 + rng.uniform(-0.01, 0.01) * w,
        ry: rng.uniform(0.36, 0.40) * h,
        rx: rng.uniform(0.30, 0.34) * w,
        angle: rng.uniform(-0.1, 0.1),
        tone: 0.0,
    };
    let n = 6 + rng.below(7) as usize;
    let side = h.min(w);
    let features = (0..n)
        .map(|_| {
            let r = 0.6 * rng.unit().sqrt();
            let t = rng.uniform(0.0, 2.0 * PI);
            Ellipse {
                cy: body.cy + r * body.ry * t.sin(),
                cx: body.cx + r * body.rx * t.cos(),
                ry: rng.uniform(0.03, 0.16) * side,
                rx: rng.uniform(0.03, 0.16) * side,
                angle: rng.uniform(0.0, PI),
                tone: rng.unit(),
            }
        })
        .collect();
    // Subtle finding: radius 2 px disk (5 px across), slightly brighter than its
    // surroundings, placed well inside the body.
    let r = 0.4 * rng.unit().sqrt();
    let t = rng.uniform(0.0, 2.0 * PI);
    let lesion = Ellipse {
        cy: (body.cy + r * body.ry * t.sin()).round(),
        cx: (body.cx + r * body.rx * t.cos()).round(),
        ry: 2.0,
        rx: 2.0,
        angle: 0.0,
        tone: 0.0,
    };
    Anatomy {
        body,
        features,
        lesion,
        lesion_boost: rng.uniform(0.06, 0.1),
    }
}

fn palette(contrast: Contrast, tone: f64) -> (f64, f64) {
    // (body background, feature intensity)
    match contrast {
        Contrast::PD => (0.55, 0.15 + 0.85 * tone),
        Contrast::PDFS => (0.30, 0.08 + 0.52 * tone),
    }
}

fn render(cfg: &SimConfig, anatomy: &Anatomy, slice_idx: usize, contrast: Contrast) -> Array2<f64> {
    // Features shrink towards the ends of the slab.
    let z = if cfg.nslices > 1 {
        (slice_idx as f64 / (cfg.nslices - 1) as f64) * 2.0 - 1.0
    } else {
        0.0
    };
    let shrink = 1.0 - 0.3 * z.abs();
    let (bg, _) = palette(contrast, 0.0);
    Array2::from_shape_fn((cfg.height, cfg.width), |(y, x)| {
        let (yf, xf) = (y as f64, x as f64);
        if !anatomy.body.contains(yf, xf) {
            return 0.0;
        }
        let mut v = bg;
        for f in &anatomy.features {
            let scaled = Ellipse {
                ry: f.ry * shrink,
                rx: f.rx * shrink,
                ..*f
            };
            if scaled.contains(yf, xf) {
                v = palette(contrast, f.tone).1;
            }
        }
        if anatomy.lesion.contains(yf, xf) {
            v += anatomy.lesion_boost;
        }
        v.clamp(0.0, 1.0)
    })
}

/// Piecewise-constant slice in `[0, 1]`, deterministic per `(seed, slice_idx)`.
pub fn make_phantom(cfg: &SimConfig, slice_idx: usize) -> Result<Array2<f64>> {
    cfg.validate()?;
    if slice_idx >= cfg.nslices {
        return Err(Error::InvalidConfig(format!(
            "slice {slice_idx} out of range for {} slices",
            cfg.nslices
        )));
    }
    Ok(render(cfg, &anatomy(cfg), slice_idx, cfg.contrast))
}

/// Pixels inside the body outline.
pub fn phantom_support(cfg: &SimConfig) -> Array2<bool> {
    let a = anatomy(cfg);
    Array2::from_shape_fn((cfg.height, cfg.width), |(y, x)| a.body.contains(y as f64, x as f64))
}

/// Coil sensitivities, `[ncoils, height, width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityMaps {
    maps: Array3<C64>,
}

impl SensitivityMaps {
    pub fn new(maps: Array3<C64>) -> Result<Self> {
        if maps.len_of(Axis(0)) == 0 {
            return Err(Error::InvalidData("no coil maps".into()));
        }
        Ok(Self { maps })
    }

    /// Unit map for single-channel data.
    pub fn identity(height: usize, width: usize) -> Self {
        Self {
            maps: Array3::from_elem((1, height, width), C64::new(1.0, 0.0)),
        }
    }

    pub fn ncoils(&self) -> usize {
        self.maps.len_of(Axis(0))
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.maps.dim()
    }

    pub fn view(&self) -> ndarray::ArrayView3<'_, C64> {
        self.maps.view()
    }

    pub fn rss(&self) -> Array2<f64> {
        rss_combine(&CoilImages::new(self.maps.clone()).expect("non-empty"))
    }
}

// Coil centres on a ring of this radius (fraction of the shorter side).
const RADIUS: f64 = 0.45;
// Loop-like falloff `(1 + d^2/d0^2)^-1.5` with `d0` as a fraction of the side.
const D0: f64 = 0.12;
// Phase ramp across the field of view, in cycles.
const CYC: f64 = 1.0;

/// Receive profiles of loops at equal angles on a ring around the object, each
/// with a linear phase ramp, normalized to unit RSS.
pub fn make_sensitivities(cfg: &SimConfig) -> Result<SensitivityMaps> {
    if cfg.ncoils == 0 {
        return Err(Error::InvalidConfig("ncoils must be >= 1".into()));
    }
    let (h, w) = (cfg.height as f64, cfg.width as f64);
    let nc = cfg.ncoils;
    let side = h.min(w);
    let radius = RADIUS * side;
    let d0 = D0 * side;
    let mut maps = Array3::from_shape_fn((nc, cfg.height, cfg.width), |(c, y, x)| {
        let theta = 2.0 * PI * c as f64 / nc as f64;
        let (cy, cx) = (h / 2.0 + radius * theta.sin(), w / 2.0 + radius * theta.cos());
        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
        let mag = (1.0 + (dy * dy + dx * dx) / (d0 * d0)).powf(-1.5);
        let phase =
            theta + 2.0 * PI * CYC * (theta.cos() * (x as f64 - w / 2.0) / w + theta.sin() * (y as f64 - h / 2.0) / h);
        C64::from_polar(mag, phase)
    });
    let rss = rss_combine(&CoilImages::new(maps.clone())?);
    for mut coil in maps.axis_iter_mut(Axis(0)) {
        coil.zip_mut_with(&rss, |m, &r| *m /= r);
    }
    SensitivityMaps::new(maps)
}

/// Standard deviation of `sqrt(sum_c |z_c|^2)` for `n` iid complex normals with
/// `E|z|^2 = 1`: `sqrt(n - (Gamma(n + 1/2) / Gamma(n))^2)`.
pub fn rss_noise_std_unit(n: usize) -> f64 {
    let n = n as f64;
    let ratio = (ln_gamma(n + 0.5) - ln_gamma(n)).exp();
    (n - ratio * ratio).sqrt()
}

/// Per-coil complex noise standard deviation for a case.
///
/// The noise floor (background standard deviation of the RSS image) is set to
/// `S / effective_snr`, where `S` is the mean in-body signal of the proton-density
/// rendering of the same anatomy. Referencing the PD signal makes the PDFS noise
/// exactly four times the PD noise at equal `base_snr`.
pub fn noise_sigma(cfg: &SimConfig) -> Result<f64> {
    cfg.validate()?;
    if cfg.base_snr.is_infinite() {
        return Ok(0.0);
    }
    let a = anatomy(cfg);
    let support = phantom_support(cfg);
    let n_support = support.iter().filter(|&&b| b).count() as f64 * cfg.nslices as f64;
    let mut total = 0.0;
    for s in 0..cfg.nslices {
        let img = render(cfg, &a, s, Contrast::PD);
        total += img
            .iter()
            .zip(support.iter())
            .filter(|(_, &inside)| inside)
            .map(|(v, _)| v)
            .sum::<f64>();
    }
    let reference = total / n_support;
    Ok(reference / (cfg.effective_snr() * rss_noise_std_unit(cfg.ncoils)))
}

/// A simulated case: noisy multi-coil k-space plus its RSS ground truth.
#[derive(Clone, Debug)]
pub struct SimulatedCase {
    pub kspace: KSpaceVolume,
    pub ground_truth: MagnitudeVolume,
    pub noise_sigma: f64,
}

/// Magnitude reference from coil k-space: ifft2c per coil, RSS, central crop.
pub fn rss_reference(ksp: &KSpaceVolume) -> Result<MagnitudeVolume> {
    let fft = CenteredFft2::new(ksp.height(), ksp.width());
    let slices = (0..ksp.nslices())
        .map(|s| {
            let imgs = crate::kspace::coil_images(&fft, &ksp.slice_f64(s));
            center_crop(rss_combine(&CoilImages::new(imgs)?).view(), CROP_SIZE, CROP_SIZE)
        })
        .collect::<Result<Vec<_>>>()?;
    MagnitudeVolume::from_slices(&slices)
}

/// Phantom times coil maps, transformed per coil, with complex white Gaussian
/// noise added in k-space. The ground truth is the RSS of the noisy data, so it
/// carries the same noise a fully sampled acquisition would.
pub fn simulate_case(cfg: &SimConfig) -> Result<SimulatedCase> {
    cfg.validate()?;
    let maps = make_sensitivities(cfg)?;
    let sigma = noise_sigma(cfg)?;
    let a = anatomy(cfg);
    let (h, w, nc) = (cfg.height, cfg.width, cfg.ncoils);
    let fft = CenteredFft2::new(h, w);
    let mut data = Array4::<C32>::zeros((cfg.nslices, nc, h, w));
    let per_component = sigma / 2f64.sqrt();
    for s in 0..cfg.nslices {
        let rho = render(cfg, &a, s, cfg.contrast);
        let mut rng = SplitMix64::derived(cfg.seed, &[0x4015E, s as u64]);
        for c in 0..nc {
            let mut k = Array2::from_shape_fn((h, w), |(y, x)| maps.maps[[c, y, x]] * rho[[y, x]]);
            fft.forward(k.view_mut());
            let mut out = data.index_axis_mut(Axis(0), s);
            let mut out = out.index_axis_mut(Axis(0), c);
            for (o, z) in out.iter_mut().zip(k.iter()) {
                let mut v = *z;
                if per_component > 0.0 {
                    let nr: f64 = StandardNormal.sample(&mut rng);
                    let ni: f64 = StandardNormal.sample(&mut rng);
                    v += C64::new(nr, ni) * per_component;
                }
                *o = C32::new(v.re as f32, v.im as f32);
            }
        }
    }
    let mut attrs = CaseAttrs::new(cfg.case_id.clone(), cfg.contrast, cfg.field_strength_tesla);
    attrs.extra.insert("sim_seed".into(), cfg.seed.into());
    attrs.extra.insert("noise_sigma".into(), serde_json::json!(sigma));
    let kspace = KSpaceVolume::new(data, attrs)?;
    let ground_truth = rss_reference(&kspace)?;
    Ok(SimulatedCase {
        kspace,
        ground_truth,
        noise_sigma: sigma,
    })
}
