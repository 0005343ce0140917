use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3};

use crate::error::{Error, Result};

/// Start index of a centered window: `floor((len - out) / 2)`, so an odd margin
/// loses its extra element on the high-index side.
pub fn crop_offset(len: usize, out: usize) -> usize {
    (len - out) / 2
}

pub fn center_crop<T: Clone>(img: ArrayView2<'_, T>, out_h: usize, out_w: usize) -> Result<Array2<T>> {
    let (h, w) = img.dim();
    if out_h > h || out_w > w || out_h == 0 || out_w == 0 {
        return Err(Error::InvalidCropSize {
            out_h,
            out_w,
            height: h,
            width: w,
        });
    }
    let y0 = crop_offset(h, out_h);
    let x0 = crop_offset(w, out_w);
    Ok(img.slice(s![y0..y0 + out_h, x0..x0 + out_w]).to_owned())
}

/// Crops every slice of a `[nslices, height, width]` stack.
pub fn center_crop_volume<T: Clone>(vol: ArrayView3<'_, T>, out_h: usize, out_w: usize) -> Result<Array3<T>> {
    let (_, h, w) = vol.dim();
    if out_h > h || out_w > w || out_h == 0 || out_w == 0 {
        return Err(Error::InvalidCropSize {
            out_h,
            out_w,
            height: h,
            width: w,
        });
    }
    let y0 = crop_offset(h, out_h);
    let x0 = crop_offset(w, out_w);
    Ok(vol.slice(s![.., y0..y0 + out_h, x0..x0 + out_w]).to_owned())
}
