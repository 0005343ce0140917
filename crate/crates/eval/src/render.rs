//! 8-bit grayscale PNG renders of magnitude slices.

use std::io::Cursor;

use image::{GrayImage, ImageFormat, Luma};
use kbench_core::kspace::MagnitudeVolume;
use ndarray::ArrayView2;

use crate::error::{EvalError, Result};

/// Slices shown on a scorecard: a quarter, half and three quarters through the volume.
pub fn thumbnail_slices(nslices: usize) -> [usize; 3] {
    [nslices / 4, nslices / 2, (3 * nslices) / 4].map(|s| s.min(nslices.saturating_sub(1)))
}

/// Maps `[0, white]` linearly onto `0..=255`, clamping above.
pub fn render_png(slice: ArrayView2<'_, f32>, white: f32) -> Result<Vec<u8>> {
    let (h, w) = slice.dim();
    let scale = if white > 0.0 { 255.0 / white } else { 0.0 };
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let v = slice[[y as usize, x as usize]] * scale;
        Luma([v.round().clamp(0.0, 255.0) as u8])
    });
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| EvalError::BadRequest(format!("png encoding failed: {e}")))?;
    Ok(out.into_inner())
}

pub fn volume_max(v: &MagnitudeVolume) -> f32 {
    v.view().iter().copied().fold(0.0, f32::max)
}

/// The three scorecard thumbnails of a volume, windowed to its own maximum.
pub fn thumbnails(v: &MagnitudeVolume) -> Result<Vec<Vec<u8>>> {
    let white = volume_max(v);
    thumbnail_slices(v.nslices())
        .iter()
        .map(|&s| render_png(v.slice(s), white))
        .collect()
}
