//! Orthogonal Daubechies-4 (8-tap) wavelet transform with periodic extension,
//! and the local Wiener shrinkage used for noise-residual extraction.

use crate::error::{Error, Result};

/// db4 lowpass synthesis taps; they sum to √2 and have unit energy.
const LO: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

#[inline]
fn hi(n: usize) -> f64 {
    let v = LO[LO.len() - 1 - n];
    if n % 2 == 0 {
        v
    } else {
        -v
    }
}

/// One analysis step on a periodic signal of even length: `out[..n/2]` gets the
/// approximation, `out[n/2..]` the detail.
fn forward_1d(x: &[f64], out: &mut [f64]) {
    let n = x.len();
    let half = n / 2;
    for k in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for (t, lo) in LO.iter().enumerate() {
            let v = x[(2 * k + t) % n];
            a += lo * v;
            d += hi(t) * v;
        }
        out[k] = a;
        out[half + k] = d;
    }
}

/// Inverse of [`forward_1d`] (the transpose, as the transform is orthogonal).
fn inverse_1d(c: &[f64], out: &mut [f64]) {
    let n = c.len();
    let half = n / 2;
    out.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..half {
        let (a, d) = (c[k], c[half + k]);
        for (t, lo) in LO.iter().enumerate() {
            out[(2 * k + t) % n] += lo * a + hi(t) * d;
        }
    }
}

/// Multi-level 2-D decomposition stored in place (Mallat layout): after level
/// `l` the top-left `(w >> l) × (h >> l)` block holds the approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub width: usize,
    pub height: usize,
    pub levels: usize,
    pub coeffs: Vec<f64>,
}

fn check_dims(width: usize, height: usize, levels: usize) -> Result<()> {
    let m = 1usize << levels;
    if levels == 0 || width % m != 0 || height % m != 0 || (width >> levels) == 0 || (height >> levels) == 0 {
        return Err(Error::Parameter(format!(
            "{width}x{height} is not divisible by 2^{levels}"
        )));
    }
    Ok(())
}

pub fn dwt2(data: &[f64], width: usize, height: usize, levels: usize) -> Result<Decomposition> {
    check_dims(width, height, levels)?;
    let mut c = data.to_vec();
    let (mut w, mut h) = (width, height);
    for _ in 0..levels {
        let mut line = vec![0.0; w.max(h)];
        let mut out = vec![0.0; w.max(h)];
        for y in 0..h {
            line[..w].copy_from_slice(&c[y * width..y * width + w]);
            forward_1d(&line[..w], &mut out[..w]);
            c[y * width..y * width + w].copy_from_slice(&out[..w]);
        }
        for x in 0..w {
            for y in 0..h {
                line[y] = c[y * width + x];
            }
            forward_1d(&line[..h], &mut out[..h]);
            for y in 0..h {
                c[y * width + x] = out[y];
            }
        }
        w /= 2;
        h /= 2;
    }
    Ok(Decomposition {
        width,
        height,
        levels,
        coeffs: c,
    })
}

pub fn idwt2(d: &Decomposition) -> Vec<f64> {
    let width = d.width;
    let mut c = d.coeffs.clone();
    for level in (0..d.levels).rev() {
        let (w, h) = (d.width >> level, d.height >> level);
        let mut line = vec![0.0; w.max(h)];
        let mut out = vec![0.0; w.max(h)];
        for x in 0..w {
            for y in 0..h {
                line[y] = c[y * width + x];
            }
            inverse_1d(&line[..h], &mut out[..h]);
            for y in 0..h {
                c[y * width + x] = out[y];
            }
        }
        for y in 0..h {
            line[..w].copy_from_slice(&c[y * width..y * width + w]);
            inverse_1d(&line[..w], &mut out[..w]);
            c[y * width..y * width + w].copy_from_slice(&out[..w]);
        }
    }
    c
}

/// Window sizes for the local variance estimate.
const WIENER_WINDOWS: [usize; 4] = [3, 5, 7, 9];

/// Shrinks one detail subband in place: each coefficient is scaled by
/// `σ²/(σ² + σ0²)`, where `σ²` is the smallest over the windows of
/// `max(0, mean(coef²) − σ0²)`. Windows are clipped at the subband border.
fn wiener_subband(band: &mut [f64], w: usize, h: usize, sigma0_sq: f64) {
    let s = w + 1;
    let mut sq = vec![0.0; s * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += band[y * w + x] * band[y * w + x];
            sq[(y + 1) * s + x + 1] = sq[y * s + x + 1] + row;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let mut var = f64::INFINITY;
            for win in WIENER_WINDOWS {
                let r = win / 2;
                let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
                let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
                let total = sq[y1 * s + x1] - sq[y0 * s + x1] - sq[y1 * s + x0] + sq[y0 * s + x0];
                let n = ((x1 - x0) * (y1 - y0)) as f64;
                var = var.min((total / n - sigma0_sq).max(0.0));
            }
            band[y * w + x] *= var / (var + sigma0_sq);
        }
    }
}

/// Wavelet denoising: `levels`-level decomposition, Wiener shrinkage of every
/// detail subband, reconstruction. The approximation band is kept as is.
pub fn wiener_denoise(data: &[f64], width: usize, height: usize, levels: usize, sigma0: f64) -> Result<Vec<f64>> {
    let mut d = dwt2(data, width, height, levels)?;
    let sigma0_sq = sigma0 * sigma0;
    for level in 0..levels {
        let (w, h) = (width >> (level + 1), height >> (level + 1));
        // Three detail subbands at this level: (w..2w, 0..h), (0..w, h..2h), (w..2w, h..2h).
        for (ox, oy) in [(w, 0), (0, h), (w, h)] {
            let mut band = vec![0.0; w * h];
            for y in 0..h {
                band[y * w..(y + 1) * w].copy_from_slice(&d.coeffs[(oy + y) * width + ox..(oy + y) * width + ox + w]);
            }
            wiener_subband(&mut band, w, h, sigma0_sq);
            for y in 0..h {
                d.coeffs[(oy + y) * width + ox..(oy + y) * width + ox + w].copy_from_slice(&band[y * w..(y + 1) * w]);
            }
        }
    }
    Ok(idwt2(&d))
}
