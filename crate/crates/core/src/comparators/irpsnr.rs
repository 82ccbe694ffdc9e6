//! Inverse-reciprocal PSNR-style map of the blurred luminance difference.

use super::{joint_valid, ComparatorConfig};
use crate::error::Result;
use crate::image::{convolve_plane, gaussian_kernel, HeatMap, Image};

/// `log10(1 / (d² + 1))`: 0 where the blurred images agree, negative elsewhere.
#[inline]
pub fn irpsnr_raw(d: f64) -> f64 {
    (1.0 / (d * d + 1.0)).log10()
}

/// Gaussian blur restricted to `mask` (normalized convolution), so invalid
/// pixels neither leak into nor erode the valid region.
fn masked_blur(plane: &[f64], mask: &[bool], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    if mask.iter().all(|m| *m) {
        return convolve_plane(plane, w, h, kernel);
    }
    let masked: Vec<f64> = plane.iter().zip(mask).map(|(v, m)| if *m { *v } else { 0.0 }).collect();
    let weights: Vec<f64> = mask.iter().map(|m| f64::from(u8::from(*m))).collect();
    let num = convolve_plane(&masked, w, h, kernel);
    let den = convolve_plane(&weights, w, h, kernel);
    num.iter().zip(&den).map(|(n, d)| if *d > 0.0 { n / d } else { 0.0 }).collect()
}

/// Raw map (low = tampered) on luminance, blurred with `σ_G`.
pub fn thm_irpsnr(p: &Image, c: &Image, cfg: &ComparatorConfig) -> Result<HeatMap> {
    let valid = joint_valid(p, c)?;
    let (w, h) = (p.width(), p.height());
    let kernel = gaussian_kernel(cfg.sigma_g)?;
    let gp = masked_blur(p.luma()?.plane(0), &valid, w, h, &kernel);
    let gc = masked_blur(c.luma()?.plane(0), &valid, w, h, &kernel);
    let scores = gp
        .iter()
        .zip(&gc)
        .zip(&valid)
        .map(|((a, b), v)| if *v { irpsnr_raw(a - b) } else { 0.0 })
        .collect();
    HeatMap::new(w, h, scores, valid)
}
