//! Local structural similarity over a square box window.

use rayon::prelude::*;

use super::{joint_valid, ComparatorConfig, Integral};
use crate::error::Result;
use crate::image::{HeatMap, Image};

/// Declared dynamic range of luminance in `[0, 1]`.
const DYNAMIC_RANGE: f64 = 1.0;

/// Raw SSIM map (low = tampered). Statistics are population moments over the
/// jointly valid pixels of the `(2r + 1)²` window, clipped at the borders.
pub fn thm_ssim(p: &Image, c: &Image, cfg: &ComparatorConfig) -> Result<HeatMap> {
    let valid = joint_valid(p, c)?;
    let (w, h) = (p.width(), p.height());
    let lp = p.luma()?;
    let lc = c.luma()?;
    let (a, b) = (lp.plane(0), lc.plane(0));
    let m = |i: usize| f64::from(u8::from(valid[i]));
    let n = Integral::new((0..w * h).map(m), w, h);
    let sa = Integral::new((0..w * h).map(|i| m(i) * a[i]), w, h);
    let sb = Integral::new((0..w * h).map(|i| m(i) * b[i]), w, h);
    let saa = Integral::new((0..w * h).map(|i| m(i) * a[i] * a[i]), w, h);
    let sbb = Integral::new((0..w * h).map(|i| m(i) * b[i] * b[i]), w, h);
    let sab = Integral::new((0..w * h).map(|i| m(i) * a[i] * b[i]), w, h);

    let c1 = (0.01 * DYNAMIC_RANGE).powi(2);
    let c2 = (0.03 * DYNAMIC_RANGE).powi(2);
    let r = cfg.ssim_radius;
    let mut scores = vec![0.0; w * h];
    scores.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for (x, out) in row.iter_mut().enumerate() {
            if !valid[y * w + x] {
                continue;
            }
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let count = n.sum(x0, y0, x1, y1);
            let mu_a = sa.sum(x0, y0, x1, y1) / count;
            let mu_b = sb.sum(x0, y0, x1, y1) / count;
            // Each moment is formed the same way for both images, so swapping P
            // and C is bit-exact and P = C gives A = B.
            let var_a = saa.sum(x0, y0, x1, y1) / count - mu_a * mu_a;
            let var_b = sbb.sum(x0, y0, x1, y1) / count - mu_b * mu_b;
            let cov = sab.sum(x0, y0, x1, y1) / count - mu_a * mu_b;
            let num = (2.0 * (mu_a * mu_b) + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            *out = num / den;
        }
    });
    HeatMap::new(w, h, scores, valid)
}
