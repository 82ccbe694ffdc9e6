//! Sensor-noise consistency: block-wise normalized correlation of the wavelet
//! noise residuals of `P` and `C`.

use rayon::prelude::*;

use super::{grid_positions, joint_valid, wavelet, ComparatorConfig, Grid, Integral};
use crate::error::{Error, Result};
use crate::image::{HeatMap, Image};

/// Blocks with fewer valid pixels than this fraction of their area are skipped.
const MIN_BLOCK_COVERAGE: f64 = 0.5;

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// `x − W(x)` for a single-channel plane. Invalid pixels are filled with the
/// mean of the valid ones first, and the plane is mirror-padded up to a multiple
/// of `2^levels`.
pub fn noise_residual(
    plane: &[f64],
    valid: &[bool],
    width: usize,
    height: usize,
    levels: usize,
    sigma0: f64,
) -> Result<Vec<f64>> {
    let (sum, count) = plane
        .iter()
        .zip(valid)
        .filter(|(_, v)| **v)
        .fold((0.0, 0usize), |(s, n), (p, _)| (s + p, n + 1));
    let fill = if count > 0 { sum / count as f64 } else { 0.0 };
    let m = 1usize << levels;
    let (pw, ph) = (width.div_ceil(m) * m, height.div_ceil(m) * m);
    let mut padded = vec![0.0; pw * ph];
    for y in 0..ph {
        let sy = reflect(y as isize, height);
        for x in 0..pw {
            let sx = reflect(x as isize, width);
            let i = sy * width + sx;
            padded[y * pw + x] = if valid[i] { plane[i] } else { fill };
        }
    }
    let den = wavelet::wiener_denoise(&padded, pw, ph, levels, sigma0)?;
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = padded[y * pw + x] - den[y * pw + x];
        }
    }
    Ok(out)
}

/// NCC of two residual fields on `block × block` windows placed every `stride`
/// pixels, restricted to `valid`; each block's value sits at its centre and is
/// bilinearly upsampled to pixel resolution.
pub fn block_ncc(
    np: &[f64],
    nc: &[f64],
    valid: &[bool],
    width: usize,
    height: usize,
    block: usize,
    stride: usize,
) -> Result<HeatMap> {
    if width < block || height < block {
        return Err(Error::Comparator(format!(
            "{width}x{height} image is smaller than one {block}x{block} block"
        )));
    }
    let m = |i: usize| f64::from(u8::from(valid[i]));
    let n = width * height;
    let cnt = Integral::new((0..n).map(m), width, height);
    let sab = Integral::new((0..n).map(|i| m(i) * np[i] * nc[i]), width, height);
    let saa = Integral::new((0..n).map(|i| m(i) * np[i] * np[i]), width, height);
    let sbb = Integral::new((0..n).map(|i| m(i) * nc[i] * nc[i]), width, height);

    let xs = grid_positions(width - block, stride);
    let ys = grid_positions(height - block, stride);
    let min_count = MIN_BLOCK_COVERAGE * (block * block) as f64;
    let nodes: Vec<Option<f64>> = ys
        .par_iter()
        .flat_map_iter(|&y0| {
            let (cnt, sab, saa, sbb) = (&cnt, &sab, &saa, &sbb);
            xs.iter().map(move |&x0| {
                let (x1, y1) = (x0 + block, y0 + block);
                if cnt.sum(x0, y0, x1, y1) < min_count {
                    return None;
                }
                let (ab, aa, bb) = (sab.sum(x0, y0, x1, y1), saa.sum(x0, y0, x1, y1), sbb.sum(x0, y0, x1, y1));
                // aa and bb come from integral differences and can be slightly off;
                // a block with no residual energy has no defined correlation.
                if !(aa > 1e-18 && bb > 1e-18) {
                    return None;
                }
                Some((ab / (aa * bb).sqrt()).clamp(-1.0, 1.0))
            })
        })
        .collect();
    let centre = (block as f64 - 1.0) / 2.0;
    let grid = Grid {
        xs: xs.iter().map(|x| *x as f64 + centre).collect(),
        ys: ys.iter().map(|y| *y as f64 + centre).collect(),
        valid: nodes.iter().map(Option::is_some).collect(),
        values: nodes.iter().map(|v| v.unwrap_or(0.0)).collect(),
    };
    grid.upsample(width, height, valid)
}

/// Raw residual-correlation map (low = tampered) on luminance.
pub fn thm_prnu(p: &Image, c: &Image, cfg: &ComparatorConfig) -> Result<HeatMap> {
    let valid = joint_valid(p, c)?;
    let (w, h) = (p.width(), p.height());
    if w < cfg.prnu_block || h < cfg.prnu_block {
        return Err(Error::Comparator(format!(
            "{w}x{h} image is smaller than one {0}x{0} block",
            cfg.prnu_block
        )));
    }
    let lp = p.luma()?;
    let lc = c.luma()?;
    let (np, nc) = rayon::join(
        || noise_residual(lp.plane(0), &valid, w, h, cfg.prnu_wavelet_levels, cfg.prnu_sigma0),
        || noise_residual(lc.plane(0), &valid, w, h, cfg.prnu_wavelet_levels, cfg.prnu_sigma0),
    );
    block_ncc(&np?, &nc?, &valid, w, h, cfg.prnu_block, cfg.prnu_stride())
}
