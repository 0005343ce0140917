//! Direct, unoptimized reference implementations used to cross-check the
//! library. Deliberately written as plain loops with two-pass statistics.

#![allow(dead_code)]

use ndarray::Array3;

pub fn nmse(gt: &Array3<f32>, pred: &Array3<f32>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (g, p) in gt.iter().zip(pred.iter()) {
        let (g, p) = (*g as f64, *p as f64);
        num += (g - p) * (g - p);
        den += g * g;
    }
    num / den
}

pub fn psnr(gt: &Array3<f32>, pred: &Array3<f32>) -> f64 {
    let mut max = f64::MIN;
    let mut mse = 0.0;
    for (g, p) in gt.iter().zip(pred.iter()) {
        max = max.max(*g as f64);
        mse += (*g as f64 - *p as f64).powi(2);
    }
    mse /= gt.len() as f64;
    10.0 * (max * max / mse).log10()
}

/// Mean over slices of the mean SSIM of every fully contained 7x7 window.
pub fn ssim(gt: &Array3<f32>, pred: &Array3<f32>) -> f64 {
    let (ns, h, w) = gt.dim();
    let l = gt.iter().fold(f64::MIN, |m, &v| m.max(v as f64));
    let c1 = (0.01 * l).powi(2);
    let c2 = (0.03 * l).powi(2);
    let k = 7;
    let n = (k * k) as f64;
    let mut total = 0.0;
    for s in 0..ns {
        let mut acc = 0.0;
        let mut count = 0usize;
        for y0 in 0..=h - k {
            for x0 in 0..=w - k {
                let mut xs = Vec::with_capacity(k * k);
                let mut ys = Vec::with_capacity(k * k);
                for y in y0..y0 + k {
                    for x in x0..x0 + k {
                        xs.push(gt[[s, y, x]] as f64);
                        ys.push(pred[[s, y, x]] as f64);
                    }
                }
                let mx = xs.iter().sum::<f64>() / n;
                let my = ys.iter().sum::<f64>() / n;
                let vx = xs.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / (n - 1.0);
                let vy = ys.iter().map(|v| (v - my).powi(2)).sum::<f64>() / (n - 1.0);
                let cxy = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0);
                acc += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        total += acc / count as f64;
    }
    total / ns as f64
}
