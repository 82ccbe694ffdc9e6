//! Raster types and the shared image primitives: color conversion, Gaussian
//! blur and affine warping.
//!
//! Samples are real values in `[0, 1]`, stored planar (one contiguous row-major
//! plane per channel). An optional validity mask marks pixels that carry no
//! information, e.g. the uncovered area after warping. Operations touching an
//! invalid pixel produce an invalid output pixel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::AffineTransform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColorSpace {
    Gray,
    Rgb,
    Hsv,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Gray => 1,
            ColorSpace::Rgb | ColorSpace::Hsv => 3,
        }
    }
}

impl std::fmt::Display for ColorSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ColorSpace::Gray => "Gray",
            ColorSpace::Rgb => "RGB",
            ColorSpace::Hsv => "HSV",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    colorspace: ColorSpace,
    data: Vec<f64>,
    valid: Option<Vec<bool>>,
}

impl Image {
    /// Wraps planar sample data. Fails if the length is wrong or any sample is
    /// outside `[0, 1]` (NaN included).
    pub fn new(width: usize, height: usize, colorspace: ColorSpace, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter("image dimensions must be nonzero".into()));
        }
        let expected = width * height * colorspace.channels();
        if data.len() != expected {
            return Err(Error::Parameter(format!(
                "sample count {} does not match {width}x{height}x{}",
                data.len(),
                colorspace.channels()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Parameter(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            colorspace,
            data,
            valid: None,
        })
    }

    /// Builds from planar data, clamping every sample into `[0, 1]`.
    pub fn from_planar_clamped(
        width: usize,
        height: usize,
        colorspace: ColorSpace,
        mut data: Vec<f64>,
    ) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(width, height, colorspace, data)
    }

    pub fn filled(width: usize, height: usize, colorspace: ColorSpace, value: f64) -> Result<Self> {
        Self::new(
            width,
            height,
            colorspace,
            vec![value; width * height * colorspace.channels()],
        )
    }

    /// `f(x, y, channel)`; results are clamped to `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        colorspace: ColorSpace,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * colorspace.channels());
        for c in 0..colorspace.channels() {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::from_planar_clamped(width, height, colorspace, data)
    }

    pub fn with_valid_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.width * self.height {
            return Err(Error::Parameter(format!(
                "mask length {} does not match {}x{}",
                mask.len(),
                self.width,
                self.height
            )));
        }
        self.valid = Some(mask);
        Ok(self)
    }

    pub fn without_valid_mask(mut self) -> Self {
        self.valid = None;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.colorspace.channels()
    }

    pub fn colorspace(&self) -> ColorSpace {
        self.colorspace
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[c * self.pixel_count() + y * self.width + x]
    }

    pub fn valid_mask(&self) -> Option<&[bool]> {
        self.valid.as_deref()
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid.as_ref().is_none_or(|m| m[y * self.width + x])
    }

    /// Mask with every pixel materialized (all `true` when no mask is set).
    pub fn valid_or_full(&self) -> Vec<bool> {
        self.valid
            .clone()
            .unwrap_or_else(|| vec![true; self.pixel_count()])
    }

    pub fn valid_count(&self) -> usize {
        self.valid
            .as_ref()
            .map_or(self.pixel_count(), |m| m.iter().filter(|v| **v).count())
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Grayscale view regardless of the source color space (HSV is converted back to
    /// RGB first).
    pub fn luma(&self) -> Result<Image> {
        match self.colorspace {
            ColorSpace::Gray => Ok(self.clone()),
            ColorSpace::Rgb => to_luma(self),
            ColorSpace::Hsv => to_luma(&hsv_to_rgb(self)?),
        }
    }

    pub fn rgb(&self) -> Result<Image> {
        match self.colorspace {
            ColorSpace::Rgb => Ok(self.clone()),
            ColorSpace::Hsv => hsv_to_rgb(self),
            ColorSpace::Gray => {
                let n = self.pixel_count();
                let mut data = Vec::with_capacity(3 * n);
                for _ in 0..3 {
                    data.extend_from_slice(&self.data);
                }
                Ok(Image {
                    width: self.width,
                    height: self.height,
                    colorspace: ColorSpace::Rgb,
                    data,
                    valid: self.valid.clone(),
                })
            }
        }
    }

    pub fn hsv(&self) -> Result<Image> {
        match self.colorspace {
            ColorSpace::Hsv => Ok(self.clone()),
            _ => rgb_to_hsv(&self.rgb()?),
        }
    }

    fn with_data(&self, colorspace: ColorSpace, data: Vec<f64>) -> Image {
        Image {
            width: self.width,
            height: self.height,
            colorspace,
            data,
            valid: self.valid.clone(),
        }
    }
}

/// Real-valued tamper evidence per pixel. Higher scores mean more likely tampered.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    pub width: usize,
    pub height: usize,
    pub scores: Vec<f64>,
    pub valid: Vec<bool>,
}

impl HeatMap {
    pub fn new(width: usize, height: usize, scores: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if scores.len() != width * height || valid.len() != width * height {
            return Err(Error::Parameter(format!(
                "heat map buffers do not match {width}x{height}"
            )));
        }
        if scores
            .iter()
            .zip(&valid)
            .any(|(s, v)| *v && !s.is_finite())
        {
            return Err(Error::Parameter("non-finite score on a valid pixel".into()));
        }
        Ok(Self {
            width,
            height,
            scores,
            valid,
        })
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Iterator over the scores of valid pixels.
    pub fn valid_scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.scores
            .iter()
            .zip(&self.valid)
            .filter(|(_, v)| **v)
            .map(|(s, _)| *s)
    }
}

fn require(img: &Image, cs: ColorSpace) -> Result<()> {
    if img.colorspace != cs {
        return Err(Error::Type {
            expected: cs.to_string(),
            actual: img.colorspace.to_string(),
        });
    }
    Ok(())
}

/// ITU-R BT.601 luma.
pub fn to_luma(img: &Image) -> Result<Image> {
    require(img, ColorSpace::Rgb)?;
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let data = r
        .iter()
        .zip(g)
        .zip(b)
        // Integer weights keep white at exactly 1.
        .map(|((r, g), b)| ((299.0 * r + 587.0 * g + 114.0 * b) / 1000.0).clamp(0.0, 1.0))
        .collect();
    Ok(img.with_data(ColorSpace::Gray, data))
}

/// Hexcone HSV of one pixel, all components in `[0, 1]` (hue as a fraction of a turn).
pub fn rgb_pixel_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta <= 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let h = (h / 6.0).rem_euclid(1.0);
    (h, s.clamp(0.0, 1.0), v)
}

pub fn hsv_pixel_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (v, v, v);
    }
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = (h6.floor() as usize) % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    (r.clamp(0.0, 1.0), g.clamp(0.0, 1.0), b.clamp(0.0, 1.0))
}

fn map_pixels3(img: &Image, cs: ColorSpace, f: fn(f64, f64, f64) -> (f64, f64, f64)) -> Image {
    let n = img.pixel_count();
    let mut data = vec![0.0; 3 * n];
    let (a, b, c) = (img.plane(0), img.plane(1), img.plane(2));
    for i in 0..n {
        let (x, y, z) = f(a[i], b[i], c[i]);
        data[i] = x;
        data[n + i] = y;
        data[2 * n + i] = z;
    }
    img.with_data(cs, data)
}

pub fn rgb_to_hsv(img: &Image) -> Result<Image> {
    require(img, ColorSpace::Rgb)?;
    Ok(map_pixels3(img, ColorSpace::Hsv, rgb_pixel_to_hsv))
}

pub fn hsv_to_rgb(img: &Image) -> Result<Image> {
    require(img, ColorSpace::Hsv)?;
    Ok(map_pixels3(img, ColorSpace::Rgb, hsv_pixel_to_rgb))
}

/// Normalized 1-D Gaussian taps over `[-ceil(3σ), ceil(3σ)]`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    Ok(k)
}

/// Separable convolution of one plane with edge replication.
pub(crate) fn convolve_plane(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;

    let mut tmp = vec![0.0; plane.len()];
    tmp.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        let src = &plane[y * width..(y + 1) * width];
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                acc += w * src[clamp(x as isize + k as isize - r, width)];
            }
            *out = acc;
        }
    });

    let mut out = vec![0.0; plane.len()];
    out.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        for (k, w) in kernel.iter().enumerate() {
            let sy = clamp(y as isize + k as isize - r, height);
            let src = &tmp[sy * width..(sy + 1) * width];
            for (o, s) in row.iter_mut().zip(src) {
                *o += w * s;
            }
        }
    });
    out
}

/// Erodes a validity mask with a square structuring element of the given radius.
/// Out-of-bounds neighbors do not invalidate (edge replication reads in-bounds pixels).
pub(crate) fn erode_mask(mask: &[bool], width: usize, height: usize, radius: usize) -> Vec<bool> {
    if radius == 0 || mask.iter().all(|v| *v) {
        return mask.to_vec();
    }
    // Horizontal then vertical running count of invalid pixels.
    let mut horiz = vec![true; mask.len()];
    for y in 0..height {
        let row = &mask[y * width..(y + 1) * width];
        let mut prefix = vec![0usize; width + 1];
        for x in 0..width {
            prefix[x + 1] = prefix[x] + usize::from(!row[x]);
        }
        for x in 0..width {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius + 1).min(width);
            horiz[y * width + x] = prefix[hi] == prefix[lo];
        }
    }
    let mut out = vec![true; mask.len()];
    for x in 0..width {
        let mut prefix = vec![0usize; height + 1];
        for y in 0..height {
            prefix[y + 1] = prefix[y] + usize::from(!horiz[y * width + x]);
        }
        for y in 0..height {
            let lo = y.saturating_sub(radius);
            let hi = (y + radius + 1).min(height);
            out[y * width + x] = prefix[hi] == prefix[lo];
        }
    }
    out
}

/// Separable Gaussian blur, kernel truncated at `ceil(3σ)` and renormalized, with
/// edge replication at the borders. Invalid pixels spread by the kernel radius.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    let kernel = gaussian_kernel(sigma)?;
    let (w, h) = (img.width, img.height);
    let mut data = Vec::with_capacity(img.data.len());
    for c in 0..img.channels() {
        data.extend(
            convolve_plane(img.plane(c), w, h, &kernel)
                .into_iter()
                .map(|v| v.clamp(0.0, 1.0)),
        );
    }
    let valid = img
        .valid
        .as_ref()
        .map(|m| erode_mask(m, w, h, kernel.len() / 2));
    Ok(Image {
        width: w,
        height: h,
        colorspace: img.colorspace,
        data,
        valid,
    })
}

/// Bilinear sample of one plane at `(x, y)` with coordinates clamped into the grid.
#[inline]
pub(crate) fn bilinear(plane: &[f64], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = plane[y0 * width + x0] * (1.0 - fx) + plane[y0 * width + x1] * fx;
    let bottom = plane[y1 * width + x0] * (1.0 - fx) + plane[y1 * width + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Preimages this far outside the sample grid still count as inside.
const WARP_EDGE_EPS: f64 = 0.01;

/// Warps `img` into an `out_width × out_height` frame, where `transform` maps
/// source coordinates to output coordinates. Each output pixel is pulled from its
/// preimage with bilinear interpolation; preimages that fall outside the source
/// (by more than [`WARP_EDGE_EPS`]) or touch an invalid source pixel are
/// marked invalid and set to 0.
pub fn warp_affine(
    img: &Image,
    transform: &AffineTransform,
    out_width: usize,
    out_height: usize,
) -> Result<Image> {
    if out_width == 0 || out_height == 0 {
        return Err(Error::Parameter("output size must be nonzero".into()));
    }
    let inv = transform.inverse()?;
    let (w, h) = (img.width, img.height);
    let n_out = out_width * out_height;
    let channels = img.channels();
    let src_mask = img.valid.as_deref();

    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..out_height)
        .into_par_iter()
        .map(|y| {
            let mut vals = vec![0.0; out_width * channels];
            let mut valid = vec![false; out_width];
            for x in 0..out_width {
                let (sx, sy) = inv.apply(x as f64, y as f64);
                if !(sx >= -WARP_EDGE_EPS
                    && sy >= -WARP_EDGE_EPS
                    && sx <= (w - 1) as f64 + WARP_EDGE_EPS
                    && sy <= (h - 1) as f64 + WARP_EDGE_EPS)
                {
                    continue;
                }
                if let Some(m) = src_mask {
                    let cx = sx.clamp(0.0, (w - 1) as f64);
                    let cy = sy.clamp(0.0, (h - 1) as f64);
                    let x0 = cx.floor() as usize;
                    let y0 = cy.floor() as usize;
                    let x1 = if cx > x0 as f64 { (x0 + 1).min(w - 1) } else { x0 };
                    let y1 = if cy > y0 as f64 { (y0 + 1).min(h - 1) } else { y0 };
                    if !(m[y0 * w + x0] && m[y0 * w + x1] && m[y1 * w + x0] && m[y1 * w + x1]) {
                        continue;
                    }
                }
                valid[x] = true;
                for c in 0..channels {
                    vals[c * out_width + x] = bilinear(img.plane(c), w, h, sx, sy).clamp(0.0, 1.0);
                }
            }
            (vals, valid)
        })
        .collect();

    let mut data = vec![0.0; n_out * channels];
    let mut mask = Vec::with_capacity(n_out);
    for (y, (vals, valid)) in rows.into_iter().enumerate() {
        for c in 0..channels {
            data[c * n_out + y * out_width..c * n_out + (y + 1) * out_width]
                .copy_from_slice(&vals[c * out_width..(c + 1) * out_width]);
        }
        mask.extend(valid);
    }
    Ok(Image {
        width: out_width,
        height: out_height,
        colorspace: img.colorspace,
        data,
        valid: Some(mask),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgb1(r: f64, g: f64, b: f64) -> Image {
        Image::new(1, 1, ColorSpace::Rgb, vec![r, g, b]).unwrap()
    }

    #[test]
    fn luma_examples() {
        assert_eq!(to_luma(&rgb1(1.0, 1.0, 1.0)).unwrap().data()[0], 1.0);
        assert_eq!(to_luma(&rgb1(0.0, 0.0, 0.0)).unwrap().data()[0], 0.0);
        assert!((to_luma(&rgb1(0.0, 1.0, 0.0)).unwrap().data()[0] - 0.587).abs() < 1e-15);
        let gray = Image::filled(2, 2, ColorSpace::Gray, 0.5).unwrap();
        assert!(matches!(to_luma(&gray), Err(Error::Type { .. })));
    }

    #[test]
    fn hsv_examples() {
        let hsv = |r, g, b| rgb_to_hsv(&rgb1(r, g, b)).unwrap().data().to_vec();
        assert_eq!(hsv(1.0, 0.0, 0.0), vec![0.0, 1.0, 1.0]);
        assert_eq!(hsv(0.5, 0.5, 0.5), vec![0.0, 0.0, 0.5]);
        let blue = hsv(0.0, 0.0, 1.0);
        assert!((blue[0] - 240.0 / 360.0).abs() < 1e-15);
        assert_eq!(&blue[1..], &[1.0, 1.0]);
    }

    #[test]
    fn hsv_round_trip() {
        for i in 0..1000 {
            let r = (i as f64 * 0.137).fract();
            let g = (i as f64 * 0.291).fract();
            let b = (i as f64 * 0.733).fract();
            let (h, s, v) = rgb_pixel_to_hsv(r, g, b);
            let (r2, g2, b2) = hsv_pixel_to_rgb(h, s, v);
            assert!((r - r2).abs() < 1e-12 && (g - g2).abs() < 1e-12 && (b - b2).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_rejects_nonpositive_sigma() {
        let img = Image::filled(4, 4, ColorSpace::Gray, 0.3).unwrap();
        assert!(matches!(gaussian_blur(&img, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(gaussian_blur(&img, -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn blur_preserves_constants() {
        let img = Image::filled(20, 17, ColorSpace::Rgb, 0.37).unwrap();
        let out = gaussian_blur(&img, 2.5).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn blur_impulse_center_is_squared_center_tap() {
        // Independent kernel: radius ceil(3σ) = 12 taps each side, renormalized.
        let sigma: f64 = 4.0;
        let taps: Vec<f64> = (-12i32..=12)
            .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
            .collect();
        let sum: f64 = taps.iter().sum();
        let center = taps[12] / sum;

        let n = 61;
        let img = Image::from_fn(n, n, ColorSpace::Gray, |x, y, _| {
            if x == n / 2 && y == n / 2 { 1.0 } else { 0.0 }
        })
        .unwrap();
        let out = gaussian_blur(&img, sigma).unwrap();
        assert!((out.get(n / 2, n / 2, 0) - center * center).abs() < 1e-15);
        let total: f64 = out.data().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blur_is_linear_on_interior() {
        let a = Image::from_fn(40, 30, ColorSpace::Gray, |x, y, _| ((x * 7 + y * 3) % 11) as f64 / 20.0).unwrap();
        let b = Image::from_fn(40, 30, ColorSpace::Gray, |x, y, _| ((x * y) % 13) as f64 / 30.0).unwrap();
        let (alpha, beta) = (0.7, 0.3);
        let mix = Image::from_fn(40, 30, ColorSpace::Gray, |x, y, _| {
            alpha * a.get(x, y, 0) + beta * b.get(x, y, 0)
        })
        .unwrap();
        let (ba, bb, bm) = (
            gaussian_blur(&a, 1.5).unwrap(),
            gaussian_blur(&b, 1.5).unwrap(),
            gaussian_blur(&mix, 1.5).unwrap(),
        );
        for y in 5..25 {
            for x in 5..35 {
                let lhs = bm.get(x, y, 0);
                let rhs = alpha * ba.get(x, y, 0) + beta * bb.get(x, y, 0);
                assert!((lhs - rhs).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn blur_spreads_invalidity() {
        let img = Image::filled(30, 30, ColorSpace::Gray, 0.5).unwrap();
        let mut mask = vec![true; 900];
        mask[15 * 30 + 15] = false;
        let out = gaussian_blur(&img.with_valid_mask(mask).unwrap(), 1.0).unwrap();
        let m = out.valid_mask().unwrap();
        assert!(!m[15 * 30 + 18]);
        assert!(m[15 * 30 + 19]);
    }

    #[test]
    fn warp_identity_is_exact() {
        let img = Image::from_fn(13, 9, ColorSpace::Rgb, |x, y, c| ((x + 2 * y + 5 * c) % 7) as f64 / 7.0).unwrap();
        let out = warp_affine(&img, &AffineTransform::identity(), 13, 9).unwrap();
        assert_eq!(out.data(), img.data());
        assert!(out.valid_mask().unwrap().iter().all(|v| *v));
    }

    #[test]
    fn warp_translation_invalidates_left_columns() {
        let (w, h) = (40, 20);
        let img = Image::filled(w, h, ColorSpace::Gray, 0.8).unwrap();
        let out = warp_affine(&img, &AffineTransform::translation(10.0, 0.0), w, h).unwrap();
        let m = out.valid_mask().unwrap();
        for y in 0..h {
            for x in 0..w {
                assert_eq!(m[y * w + x], x >= 10, "pixel ({x},{y})");
                if x < 10 {
                    assert_eq!(out.get(x, y, 0), 0.0);
                }
            }
        }
    }

    #[test]
    fn warp_quarter_turn_permutes_pattern() {
        // Rotation by +90° about (1, 1) sends (x, y) to (2 - y, x).
        let vals = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
        let img = Image::new(3, 3, ColorSpace::Gray, vals.to_vec()).unwrap();
        let rot = AffineTransform::rotation_about(std::f64::consts::FRAC_PI_2, 1.0, 1.0);
        let out = warp_affine(&img, &rot, 3, 3).unwrap();
        // Hand enumeration: output(2 - y, x) = input(x, y).
        let expected = [0.7, 0.4, 0.1, 0.8, 0.5, 0.2, 0.9, 0.6, 0.3];
        for (o, e) in out.data().iter().zip(expected) {
            assert!((o - e).abs() < 1e-12, "{:?}", out.data());
        }
        assert!(out.valid_mask().unwrap().iter().all(|v| *v));
    }

    #[test]
    fn warp_singular_is_error() {
        let img = Image::filled(4, 4, ColorSpace::Gray, 0.5).unwrap();
        let f = AffineTransform::from_params(1.0, 1.0, 0.0, 1.0, 1.0, 0.0);
        assert!(matches!(warp_affine(&img, &f, 4, 4), Err(Error::Transform(_))));
    }

    #[test]
    fn warp_round_trip_on_joint_valid_region() {
        let img = Image::from_fn(64, 48, ColorSpace::Gray, |x, y, _| {
            0.5 + 0.4 * ((x as f64 * 0.2).sin() * (y as f64 * 0.15).cos())
        })
        .unwrap();
        let f = AffineTransform::rotation_about(0.2, 32.0, 24.0).compose(&AffineTransform::translation(3.5, -2.0));
        let there = warp_affine(&img, &f, 64, 48).unwrap();
        let back = warp_affine(&there, &f.inverse().unwrap(), 64, 48).unwrap();
        let m = back.valid_mask().unwrap();
        let mut checked = 0;
        for y in 0..48 {
            for x in 0..64 {
                if m[y * 64 + x] {
                    assert!((back.get(x, y, 0) - img.get(x, y, 0)).abs() <= 2.0 / 255.0);
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn primitives_are_pure() {
        let img = Image::from_fn(32, 32, ColorSpace::Rgb, |x, y, c| ((x * 31 + y * 17 + c) % 23) as f64 / 23.0).unwrap();
        assert_eq!(gaussian_blur(&img, 1.3).unwrap(), gaussian_blur(&img, 1.3).unwrap());
        let f = AffineTransform::rotation_about(0.3, 10.0, 10.0);
        assert_eq!(warp_affine(&img, &f, 32, 32).unwrap(), warp_affine(&img, &f, 32, 32).unwrap());
        assert_eq!(rgb_to_hsv(&img).unwrap(), rgb_to_hsv(&img).unwrap());
    }
}
