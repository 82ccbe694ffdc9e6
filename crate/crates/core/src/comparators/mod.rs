//! Probe-vs-candidate comparison algorithms. Each turns a probe `P` and the
//! registered candidate `C` into a [`HeatMap`] where higher means more likely
//! tampered, computed over the pixels valid in both images.

mod irpsnr;
mod ks;
mod patchmatch;
mod prnu;
mod ssim;
pub mod wavelet;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use irpsnr::{irpsnr_raw, thm_irpsnr};
pub use ks::{ks_pvalue, ks_statistic, thm_hsv_ks};
pub use patchmatch::{patchmatch_nnf, thm_patchmatch, Nnf, PatchState};
pub use prnu::{block_ncc, noise_residual, thm_prnu};
pub use ssim::thm_ssim;

use crate::error::{Error, Result};
use crate::image::{HeatMap, Image};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComparatorConfig {
    pub sigma_g: f64,
    pub prnu_block: usize,
    pub ssim_radius: usize,
    pub hist_radius: usize,
    pub pm_patch: usize,
    pub pm_iters: usize,
    pub prnu_wavelet_levels: usize,
    pub prnu_sigma0: f64,
    /// Evaluate KS, PRNU and PatchMatch at every pixel instead of on strided grids.
    pub dense: bool,
    pub seed: u64,
}

impl Default for ComparatorConfig {
    fn default() -> Self {
        Self {
            sigma_g: 4.0,
            prnu_block: 64,
            ssim_radius: 32,
            hist_radius: 13,
            pm_patch: 8,
            pm_iters: 20,
            prnu_wavelet_levels: 4,
            prnu_sigma0: 3.0 / 255.0,
            dense: false,
            seed: 0,
        }
    }
}

impl ComparatorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.sigma_g > 0.0
            && self.prnu_block > 0
            && self.ssim_radius > 0
            && self.hist_radius > 0
            && self.pm_patch > 0
            && self.pm_iters > 0
            && self.prnu_wavelet_levels > 0
            && self.prnu_sigma0 > 0.0;
        if positive {
            Ok(())
        } else {
            Err(Error::Config(format!("comparator parameters must be positive: {self:?}")))
        }
    }

    pub(crate) fn ks_stride(&self) -> usize {
        if self.dense {
            1
        } else {
            4
        }
    }

    pub(crate) fn pm_stride(&self) -> usize {
        if self.dense {
            1
        } else {
            4
        }
    }

    pub(crate) fn prnu_stride(&self) -> usize {
        if self.dense {
            1
        } else {
            8
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Irpsnr,
    Prnu,
    Ssim,
    #[serde(rename = "hsvks")]
    HsvKs,
    #[serde(rename = "patchmatch")]
    PatchMatch,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Irpsnr, Method::Prnu, Method::Ssim, Method::HsvKs, Method::PatchMatch];

    pub fn name(self) -> &'static str {
        match self {
            Method::Irpsnr => "irpsnr",
            Method::Prnu => "prnu",
            Method::Ssim => "ssim",
            Method::HsvKs => "hsvks",
            Method::PatchMatch => "patchmatch",
        }
    }

    /// Whether low raw values indicate tampering.
    pub fn flips(self) -> bool {
        !matches!(self, Method::PatchMatch)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown comparator {s:?} (expected irpsnr, prnu, ssim, hsvks or patchmatch)")))
    }
}

/// The comparator's raw map, before polarity normalization.
pub fn raw_map(method: Method, p: &Image, c: &Image, cfg: &ComparatorConfig) -> Result<HeatMap> {
    cfg.validate()?;
    match method {
        Method::Irpsnr => thm_irpsnr(p, c, cfg),
        Method::Prnu => thm_prnu(p, c, cfg),
        Method::Ssim => thm_ssim(p, c, cfg),
        Method::HsvKs => thm_hsv_ks(p, c, cfg),
        Method::PatchMatch => thm_patchmatch(p, c, cfg),
    }
}

/// Normalized heat map in tamper-positive polarity.
pub fn compare(method: Method, p: &Image, c: &Image, cfg: &ComparatorConfig) -> Result<HeatMap> {
    normalize_polarity(&raw_map(method, p, c, cfg)?, method.flips())
}

/// Optional negation, then min-max rescaling of the valid pixels to `[0, 1]`.
/// A constant map becomes all 0.5. Invalid pixels are set to 0.
pub fn normalize_polarity(raw: &HeatMap, flip: bool) -> Result<HeatMap> {
    let sign = if flip { -1.0 } else { 1.0 };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in raw.valid_scores() {
        lo = lo.min(sign * s);
        hi = hi.max(sign * s);
    }
    if lo > hi {
        return Err(Error::Comparator("heat map has no valid pixels".into()));
    }
    let span = hi - lo;
    let scores = raw
        .scores
        .iter()
        .zip(&raw.valid)
        .map(|(s, v)| match (*v, span > 0.0) {
            (false, _) => 0.0,
            (true, true) => ((sign * s - lo) / span).clamp(0.0, 1.0),
            (true, false) => 0.5,
        })
        .collect();
    HeatMap::new(raw.width, raw.height, scores, raw.valid.clone())
}

/// Pixels valid in both images; errors on a dimension mismatch.
pub(crate) fn joint_valid(p: &Image, c: &Image) -> Result<Vec<bool>> {
    if !p.same_dims(c) {
        return Err(Error::Comparator(format!(
            "dimension mismatch: {}x{} vs {}x{}",
            p.width(),
            p.height(),
            c.width(),
            c.height()
        )));
    }
    let (a, b) = (p.valid_or_full(), c.valid_or_full());
    let joint: Vec<bool> = a.iter().zip(&b).map(|(x, y)| *x && *y).collect();
    if !joint.iter().any(|v| *v) {
        return Err(Error::Comparator("no pixel is valid in both images".into()));
    }
    Ok(joint)
}

/// Summed-area table of `values` (zero where `mask` is false), for masked
/// box statistics.
pub(crate) struct Integral {
    width: usize,
    sums: Vec<f64>,
}

impl Integral {
    pub(crate) fn new(values: impl Iterator<Item = f64>, width: usize, height: usize) -> Self {
        let s = width + 1;
        let mut sums = vec![0.0; s * (height + 1)];
        let mut it = values;
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += it.next().expect("integral input too short");
                sums[(y + 1) * s + x + 1] = sums[y * s + x + 1] + row;
            }
        }
        Self { width, sums }
    }

    /// Sum over `[x0, x1) × [y0, y1)`.
    #[inline]
    pub(crate) fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.width + 1;
        self.sums[y1 * s + x1] - self.sums[y0 * s + x1] - self.sums[y1 * s + x0] + self.sums[y0 * s + x0]
    }
}

/// Sample positions along one axis: `0, stride, 2·stride, …`, plus `last` so the
/// far edge is always covered.
pub(crate) fn grid_positions(last: usize, stride: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..=last).step_by(stride.max(1)).collect();
    if v.last() != Some(&last) {
        v.push(last);
    }
    v
}

/// Values on a rectilinear grid of pixel coordinates, upsampled bilinearly to full
/// resolution. Invalid nodes are left out of the interpolation weights; outside
/// the grid the nearest row/column of nodes is used.
pub(crate) struct Grid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl Grid {
    fn bracket(coords: &[f64], v: f64) -> (usize, usize, f64) {
        if coords.len() == 1 || v <= coords[0] {
            return (0, 0, 0.0);
        }
        let last = coords.len() - 1;
        if v >= coords[last] {
            return (last, last, 0.0);
        }
        let i = coords.partition_point(|c| *c <= v) - 1;
        let t = (v - coords[i]) / (coords[i + 1] - coords[i]);
        (i, i + 1, t)
    }

    pub(crate) fn upsample(&self, width: usize, height: usize, pixel_valid: &[bool]) -> Result<HeatMap> {
        let gw = self.xs.len();
        let xb: Vec<(usize, usize, f64)> = (0..width).map(|x| Self::bracket(&self.xs, x as f64)).collect();
        let mut scores = vec![0.0; width * height];
        let mut valid = vec![false; width * height];
        for y in 0..height {
            let (y0, y1, ty) = Self::bracket(&self.ys, y as f64);
            for x in 0..width {
                let i = y * width + x;
                if !pixel_valid[i] {
                    continue;
                }
                let (x0, x1, tx) = xb[x];
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for (gy, wy) in [(y0, 1.0 - ty), (y1, ty)] {
                    for (gx, wx) in [(x0, 1.0 - tx), (x1, tx)] {
                        let w = wx * wy;
                        let g = gy * gw + gx;
                        if w > 0.0 && self.valid[g] {
                            acc += w * self.values[g];
                            wsum += w;
                        }
                    }
                }
                if wsum > 0.0 {
                    scores[i] = acc / wsum;
                    valid[i] = true;
                }
            }
        }
        if !valid.iter().any(|v| *v) {
            return Err(Error::Comparator("no valid evaluation point in the overlap".into()));
        }
        HeatMap::new(width, height, scores, valid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(scores: Vec<f64>) -> HeatMap {
        let n = scores.len();
        HeatMap::new(n, 1, scores, vec![true; n]).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let out = normalize_polarity(&map(vec![0.0, -1.0, 0.0]), true).unwrap();
        assert_eq!(out.scores, vec![0.0, 1.0, 0.0]);
        let out = normalize_polarity(&map(vec![2.0; 4]), false).unwrap();
        assert_eq!(out.scores, vec![0.5; 4]);
        let raw = vec![0.3, -2.0, 5.0, 1.0, 0.31];
        let out = normalize_polarity(&map(raw.clone()), false).unwrap();
        for i in 0..raw.len() {
            for j in 0..raw.len() {
                assert_eq!(raw[i] < raw[j], out.scores[i] < out.scores[j]);
            }
        }
        let none = HeatMap::new(2, 1, vec![0.0, 0.0], vec![false, false]).unwrap();
        assert!(matches!(normalize_polarity(&none, true), Err(Error::Comparator(_))));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("psnr".parse::<Method>().is_err());
    }

    #[test]
    fn grid_positions_cover_edge() {
        assert_eq!(grid_positions(10, 4), vec![0, 4, 8, 10]);
        assert_eq!(grid_positions(8, 4), vec![0, 4, 8]);
        assert_eq!(grid_positions(0, 4), vec![0]);
    }

    #[test]
    fn grid_upsample_interpolates() {
        let g = Grid {
            xs: vec![0.0, 4.0],
            ys: vec![0.0],
            values: vec![0.0, 1.0],
            valid: vec![true, true],
        };
        let hm = g.upsample(5, 2, &[true; 10]).unwrap();
        assert_eq!(&hm.scores[..5], &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = Grid { valid: vec![false, true], ..g };
        let hm = g.upsample(5, 1, &[true; 5]).unwrap();
        assert_eq!(hm.valid, vec![false, true, true, true, true]);
        assert!(hm.scores[1..].iter().all(|v| *v == 1.0));
    }
}
