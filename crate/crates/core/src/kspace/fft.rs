use std::sync::Arc;

use ndarray::{Array2, ArrayViewMut2, Axis};
use rustfft::{Fft, FftPlanner};

use super::{ComplexImage, C64};
use crate::error::{Error, Result};

/// Planned centered, orthonormal 2-D transform for one image size.
///
/// Forward is `fftshift(fft2(ifftshift(x))) / sqrt(h * w)`; the inverse uses the
/// same shift pattern around `ifft2`. DC sits at index `(h / 2, w / 2)`.
#[derive(Clone)]
pub struct CenteredFft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for CenteredFft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CenteredFft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Inverse,
}

impl CenteredFft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
            scale: 1.0 / ((height * width) as f64).sqrt(),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn forward(&self, a: ArrayViewMut2<'_, C64>) {
        self.transform(a, Direction::Forward);
    }

    pub fn inverse(&self, a: ArrayViewMut2<'_, C64>) {
        self.transform(a, Direction::Inverse);
    }

    fn transform(&self, mut a: ArrayViewMut2<'_, C64>, dir: Direction) {
        assert_eq!(a.dim(), (self.height, self.width), "plan/image size mismatch");
        let (row_fft, col_fft) = match dir {
            Direction::Forward => (&self.row_fwd, &self.col_fwd),
            Direction::Inverse => (&self.row_inv, &self.col_inv),
        };
        let scratch_len = row_fft.get_inplace_scratch_len().max(col_fft.get_inplace_scratch_len());
        let mut scratch = vec![C64::default(); scratch_len];

        let mut buf = vec![C64::default(); self.width];
        for mut row in a.axis_iter_mut(Axis(0)) {
            for (b, v) in buf.iter_mut().zip(row.iter()) {
                *b = *v;
            }
            shifted_fft(&mut buf, row_fft.as_ref(), &mut scratch);
            for (v, b) in row.iter_mut().zip(buf.iter()) {
                *v = *b;
            }
        }

        let mut buf = vec![C64::default(); self.height];
        let scale = self.scale;
        for mut col in a.axis_iter_mut(Axis(1)) {
            for (b, v) in buf.iter_mut().zip(col.iter()) {
                *b = *v;
            }
            shifted_fft(&mut buf, col_fft.as_ref(), &mut scratch);
            for (v, b) in col.iter_mut().zip(buf.iter()) {
                *v = *b * scale;
            }
        }
    }
}

/// ifftshift, transform, fftshift on one line.
fn shifted_fft(buf: &mut [C64], fft: &dyn Fft<f64>, scratch: &mut [C64]) {
    let half = buf.len() / 2;
    buf.rotate_left(half);
    fft.process_with_scratch(buf, &mut scratch[..fft.get_inplace_scratch_len()]);
    buf.rotate_right(half);
}

fn check_finite(img: &ComplexImage) -> Result<()> {
    if img.view().iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidData("non-finite sample".into()))
    }
}

pub fn fft2c(img: &ComplexImage) -> Result<ComplexImage> {
    check_finite(img)?;
    let (h, w) = img.dim();
    let mut out: Array2<C64> = img.view().to_owned();
    CenteredFft2::new(h, w).forward(out.view_mut());
    ComplexImage::new(out)
}

pub fn ifft2c(ksp: &ComplexImage) -> Result<ComplexImage> {
    check_finite(ksp)?;
    let (h, w) = ksp.dim();
    let mut out: Array2<C64> = ksp.view().to_owned();
    CenteredFft2::new(h, w).inverse(out.view_mut());
    ComplexImage::new(out)
}
