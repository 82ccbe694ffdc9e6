//! Interest points and 64-dimensional descriptors (SURF construction).
//!
//! A fast-Hessian detector runs on box-filter approximations of the second-order
//! Gaussian derivatives evaluated on an integral image, over four octaves of
//! four filter sizes each. Maxima of the Hessian determinant are kept after
//! 3×3×3 non-maximum suppression and refined to sub-pixel / sub-scale precision.
//! Each keypoint then gets a dominant orientation and a 4×4 grid of Haar-wavelet
//! statistics `(Σdx, Σdy, Σ|dx|, Σ|dy|)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub const DESCRIPTOR_LEN: usize = 64;
/// Bytes per serialized descriptor record.
pub const RECORD_BYTES: usize = 8 + 5 * 4 + DESCRIPTOR_LEN * 4;
pub const MIN_IMAGE_SIDE: usize = 64;
const DEGENERATE_KEYPOINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    pub scale: f32,
    /// Radians in `[-π, π)`.
    pub orientation: f32,
    pub response: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub vector: [f32; DESCRIPTOR_LEN],
    pub keypoint: Keypoint,
    pub image_id: u64,
}

impl Descriptor {
    pub fn distance(&self, other: &Descriptor) -> f32 {
        l2(&self.vector, &other.vector)
    }

    /// Flat little-endian record: `image_id u64`, `x, y, scale, orientation,
    /// response` as f32, then the 64 f32 components.
    pub fn write_record(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.image_id.to_le_bytes());
        let k = &self.keypoint;
        for v in [k.x, k.y, k.scale, k.orientation, k.response] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.vector {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn read_record(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < RECORD_BYTES {
            return Err(Error::Format(format!(
                "descriptor record needs {RECORD_BYTES} bytes, got {}",
                bytes.len()
            )));
        }
        let f = |i: usize| f32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap());
        let image_id = u64::from_le_bytes(bytes[..8].try_into().unwrap());
        let keypoint = Keypoint {
            x: f(0),
            y: f(1),
            scale: f(2),
            orientation: f(3),
            response: f(4),
        };
        let mut vector = [0f32; DESCRIPTOR_LEN];
        for (i, v) in vector.iter_mut().enumerate() {
            *v = f(5 + i);
        }
        Ok(Self {
            vector,
            keypoint,
            image_id,
        })
    }
}

#[inline]
pub fn l2_sq(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn l2(a: &[f32], b: &[f32]) -> f32 {
    l2_sq(a, b).sqrt()
}

/// Anything that turns an image into a list of descriptors.
pub trait FeatureExtractor: Sync {
    fn extract(&self, img: &Image, image_id: u64) -> Result<Vec<Descriptor>>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SurfConfig {
    pub max_points: usize,
    /// Minimum Hessian determinant (images scaled to `[0, 1]`).
    pub threshold: f64,
    pub octaves: usize,
    /// Skip orientation assignment.
    pub upright: bool,
}

impl Default for SurfConfig {
    fn default() -> Self {
        Self {
            max_points: 500,
            threshold: 1e-4,
            octaves: 4,
            upright: false,
        }
    }
}

impl FeatureExtractor for SurfConfig {
    fn extract(&self, img: &Image, image_id: u64) -> Result<Vec<Descriptor>> {
        detect_and_describe(img, image_id, self)
    }
}

struct Integral {
    width: usize,
    height: usize,
    /// `(width + 1) × (height + 1)`; entry `(x, y)` sums pixels in `[0, x) × [0, y)`.
    sums: Vec<f64>,
}

impl Integral {
    fn new(img: &Image) -> Self {
        let (w, h) = (img.width(), img.height());
        let plane = img.plane(0);
        let stride = w + 1;
        let mut sums = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += plane[y * w + x];
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self {
            width: w,
            height: h,
            sums,
        }
    }

    /// Sum over rows `[row, row + rows)` and columns `[col, col + cols)`, clipped to
    /// the image.
    #[inline]
    fn box_sum(&self, row: i64, col: i64, rows: i64, cols: i64) -> f64 {
        let r0 = row.clamp(0, self.height as i64) as usize;
        let c0 = col.clamp(0, self.width as i64) as usize;
        let r1 = (row + rows).clamp(0, self.height as i64) as usize;
        let c1 = (col + cols).clamp(0, self.width as i64) as usize;
        if r1 <= r0 || c1 <= c0 {
            return 0.0;
        }
        let s = self.width + 1;
        self.sums[r1 * s + c1] - self.sums[r0 * s + c1] - self.sums[r1 * s + c0] + self.sums[r0 * s + c0]
    }

    #[inline]
    fn inside(&self, row: i64, col: i64, rows: i64, cols: i64) -> bool {
        row >= 0 && col >= 0 && row + rows <= self.height as i64 && col + cols <= self.width as i64
    }

    /// Horizontal Haar response (right half minus left half). Zero when the
    /// wavelet leaves the image.
    #[inline]
    fn haar_x(&self, row: i64, col: i64, size: i64) -> f64 {
        let half = size / 2;
        if !self.inside(row - half, col - half, size, 2 * half) {
            return 0.0;
        }
        self.box_sum(row - half, col, size, half) - self.box_sum(row - half, col - half, size, half)
    }

    #[inline]
    fn haar_y(&self, row: i64, col: i64, size: i64) -> f64 {
        let half = size / 2;
        if !self.inside(row - half, col - half, 2 * half, size) {
            return 0.0;
        }
        self.box_sum(row, col - half, half, size) - self.box_sum(row - half, col - half, half, size)
    }
}

struct ResponseLayer {
    width: usize,
    height: usize,
    step: usize,
    filter: usize,
    responses: Vec<f64>,
}

impl ResponseLayer {
    fn build(ii: &Integral, step: usize, filter: usize) -> Self {
        let width = ii.width / step;
        let height = ii.height / step;
        let b = ((filter - 1) / 2) as i64;
        let l = (filter / 3) as i64;
        let w = filter as i64;
        let inv_area = 1.0 / (w * w) as f64;
        let mut responses = vec![0.0; width * height];
        responses.par_chunks_mut(width.max(1)).enumerate().for_each(|(ar, row)| {
            let r = (ar * step) as i64;
            for (ac, out) in row.iter_mut().enumerate() {
                let c = (ac * step) as i64;
                let dxx = ii.box_sum(r - l + 1, c - b, 2 * l - 1, w)
                    - ii.box_sum(r - l + 1, c - l / 2, 2 * l - 1, l) * 3.0;
                let dyy = ii.box_sum(r - b, c - l + 1, w, 2 * l - 1)
                    - ii.box_sum(r - l / 2, c - l + 1, l, 2 * l - 1) * 3.0;
                let dxy = ii.box_sum(r - l, c + 1, l, l) + ii.box_sum(r + 1, c - l, l, l)
                    - ii.box_sum(r - l, c - l, l, l)
                    - ii.box_sum(r + 1, c + 1, l, l);
                let (dxx, dyy, dxy) = (dxx * inv_area, dyy * inv_area, dxy * inv_area);
                *out = dxx * dyy - 0.81 * dxy * dxy;
            }
        });
        Self {
            width,
            height,
            step,
            filter,
            responses,
        }
    }

    /// Response at `(row, col)` expressed in the grid of `src` (a layer whose step is
    /// a multiple of this one's).
    #[inline]
    fn at(&self, row: usize, col: usize, src: &ResponseLayer) -> f64 {
        let scale = self.width / src.width.max(1);
        let (r, c) = ((scale * row).min(self.height - 1), (scale * col).min(self.width - 1));
        self.responses[r * self.width + c]
    }
}

// Filter sizes per octave (four intervals each).
const FILTER_MAP: [[usize; 4]; 5] = [
    [0, 1, 2, 3],
    [1, 3, 4, 5],
    [3, 5, 6, 7],
    [5, 7, 8, 9],
    [7, 9, 10, 11],
];

fn filter_size(i: usize) -> usize {
    // 9, 15, 21, 27, 39, 51, 75, 99, 147, 195, 291, 387
    const SIZES: [usize; 12] = [9, 15, 21, 27, 39, 51, 75, 99, 147, 195, 291, 387];
    SIZES[i]
}

fn filter_step(i: usize) -> usize {
    const STEPS: [usize; 12] = [1, 1, 1, 1, 2, 2, 4, 4, 8, 8, 16, 16];
    STEPS[i]
}

struct Candidate {
    x: f64,
    y: f64,
    scale: f64,
    response: f64,
}

fn build_layers(ii: &Integral, octaves: usize) -> Vec<ResponseLayer> {
    // Distinct (filter index) set in use.
    let mut used: Vec<usize> = FILTER_MAP[..octaves].iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let max_index = used.iter().copied().max().unwrap_or(0);
    (0..=max_index)
        .map(|i| {
            if used.contains(&i) {
                ResponseLayer::build(ii, filter_step(i), filter_size(i))
            } else {
                ResponseLayer {
                    width: 0,
                    height: 0,
                    step: 1,
                    filter: 0,
                    responses: Vec::new(),
                }
            }
        })
        .collect()
}

fn solve3(h: [[f64; 3]; 3], rhs: [f64; 3]) -> Option<[f64; 3]> {
    let det = h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1])
        - h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0])
        + h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0]);
    if det.abs() < 1e-300 || !det.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut m = h;
        for r in 0..3 {
            m[r][k] = rhs[r];
        }
        let dk = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        *o = dk / det;
    }
    Some(out)
}

fn detect(ii: &Integral, cfg: &SurfConfig) -> Vec<Candidate> {
    let octaves = cfg.octaves.clamp(1, FILTER_MAP.len());
    let layers = build_layers(ii, octaves);
    let mut found = Vec::new();

    for octave in FILTER_MAP.iter().take(octaves) {
        for mid_i in 1..3 {
            let (b, m, t) = (&layers[octave[mid_i - 1]], &layers[octave[mid_i]], &layers[octave[mid_i + 1]]);
            if t.width < 3 || t.height < 3 {
                continue;
            }
            let border = (t.filter + 1) / (2 * t.step);
            for r in 0..t.height {
                for c in 0..t.width {
                    if r <= border || r + border >= t.height || c <= border || c + border >= t.width {
                        continue;
                    }
                    let candidate = m.at(r, c, t);
                    if candidate < cfg.threshold {
                        continue;
                    }
                    let mut is_max = true;
                    'nms: for rr in -1i64..=1 {
                        for cc in -1i64..=1 {
                            let (r2, c2) = ((r as i64 + rr) as usize, (c as i64 + cc) as usize);
                            if t.at(r2, c2, t) >= candidate
                                || b.at(r2, c2, t) >= candidate
                                || ((rr != 0 || cc != 0) && m.at(r2, c2, t) >= candidate)
                            {
                                is_max = false;
                                break 'nms;
                            }
                        }
                    }
                    if !is_max {
                        continue;
                    }
                    // Quadratic refinement in (x, y, scale).
                    let at = |layer: &ResponseLayer, dr: i64, dc: i64| {
                        layer.at((r as i64 + dr) as usize, (c as i64 + dc) as usize, t)
                    };
                    let v = candidate;
                    let dx = (at(m, 0, 1) - at(m, 0, -1)) / 2.0;
                    let dy = (at(m, 1, 0) - at(m, -1, 0)) / 2.0;
                    let ds = (at(t, 0, 0) - at(b, 0, 0)) / 2.0;
                    let dxx = at(m, 0, 1) + at(m, 0, -1) - 2.0 * v;
                    let dyy = at(m, 1, 0) + at(m, -1, 0) - 2.0 * v;
                    let dss = at(t, 0, 0) + at(b, 0, 0) - 2.0 * v;
                    let dxy = (at(m, 1, 1) - at(m, 1, -1) - at(m, -1, 1) + at(m, -1, -1)) / 4.0;
                    let dxs = (at(t, 0, 1) - at(t, 0, -1) - at(b, 0, 1) + at(b, 0, -1)) / 4.0;
                    let dys = (at(t, 1, 0) - at(t, -1, 0) - at(b, 1, 0) + at(b, -1, 0)) / 4.0;
                    let hess = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
                    let Some(off) = solve3(hess, [-dx, -dy, -ds]) else {
                        continue;
                    };
                    if off.iter().any(|o| o.abs() >= 0.5) {
                        continue;
                    }
                    let filter_step = (m.filter - b.filter) as f64;
                    let x = (c as f64 + off[0]) * t.step as f64;
                    let y = (r as f64 + off[1]) * t.step as f64;
                    if x < 0.0 || y < 0.0 || x > (ii.width - 1) as f64 || y > (ii.height - 1) as f64 {
                        continue;
                    }
                    found.push(Candidate {
                        x,
                        y,
                        scale: 0.1333 * (m.filter as f64 + off[2] * filter_step),
                        response: candidate,
                    });
                }
            }
        }
    }
    found
}

#[inline]
fn gaussian(x: f64, y: f64, sig: f64) -> f64 {
    (-(x * x + y * y) / (2.0 * sig * sig)).exp() / (2.0 * PI * sig * sig)
}

fn dominant_orientation(ii: &Integral, kp: &Candidate) -> f64 {
    let s = kp.scale.round().max(1.0) as i64;
    let r = kp.y.round() as i64;
    let c = kp.x.round() as i64;
    let mut samples: Vec<(f64, f64, f64)> = Vec::with_capacity(113);
    for i in -6i64..=6 {
        for j in -6i64..=6 {
            if i * i + j * j < 36 {
                let g = gaussian(i as f64, j as f64, 2.5);
                let rx = g * ii.haar_x(r + j * s, c + i * s, 4 * s);
                let ry = g * ii.haar_y(r + j * s, c + i * s, 4 * s);
                samples.push((rx, ry, ry.atan2(rx).rem_euclid(2.0 * PI)));
            }
        }
    }
    let mut best = (0.0, 0.0, -1.0);
    let mut start = 0.0f64;
    while start < 2.0 * PI {
        let end = start + PI / 3.0;
        let (mut sx, mut sy) = (0.0, 0.0);
        for &(rx, ry, ang) in &samples {
            let inside = if end > 2.0 * PI {
                ang >= start || ang < end - 2.0 * PI
            } else {
                ang >= start && ang < end
            };
            if inside {
                sx += rx;
                sy += ry;
            }
        }
        let mag = sx * sx + sy * sy;
        if mag > best.2 {
            best = (sx, sy, mag);
        }
        start += PI / 36.0;
    }
    let ang = best.1.atan2(best.0);
    if ang >= PI { ang - 2.0 * PI } else { ang }
}

fn describe(ii: &Integral, kp: &Candidate, orientation: f64) -> Option<[f32; DESCRIPTOR_LEN]> {
    let scale = kp.scale;
    let (si, co) = orientation.sin_cos();
    let haar_size = (2.0 * scale).round().max(2.0) as i64;
    let mut desc = [0f64; DESCRIPTOR_LEN];
    let mut k = 0;
    // 20s × 20s window: 4×4 subregions of 5×5 samples, spacing s.
    for sub_y in 0..4 {
        for sub_x in 0..4 {
            let (mut dx, mut dy, mut adx, mut ady) = (0.0, 0.0, 0.0, 0.0);
            for sy in 0..5 {
                for sx in 0..5 {
                    // Sample offset in the keypoint frame, in units of s.
                    let u = (sub_x * 5 + sx) as f64 - 9.5;
                    let v = (sub_y * 5 + sy) as f64 - 9.5;
                    let px = kp.x + scale * (u * co - v * si);
                    let py = kp.y + scale * (u * si + v * co);
                    let row = py.round() as i64;
                    let col = px.round() as i64;
                    let rx = ii.haar_x(row, col, haar_size);
                    let ry = ii.haar_y(row, col, haar_size);
                    let g = gaussian(u, v, 3.3);
                    // Rotate the response into the keypoint frame.
                    let tx = g * (rx * co + ry * si);
                    let ty = g * (-rx * si + ry * co);
                    dx += tx;
                    dy += ty;
                    adx += tx.abs();
                    ady += ty.abs();
                }
            }
            desc[k] = dx;
            desc[k + 1] = dy;
            desc[k + 2] = adx;
            desc[k + 3] = ady;
            k += 4;
        }
    }
    let norm = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 1e-12) {
        return None;
    }
    let mut out = [0f32; DESCRIPTOR_LEN];
    for (o, d) in out.iter_mut().zip(desc.iter()) {
        *o = (d / norm) as f32;
    }
    Some(out)
}

/// Detects up to `cfg.max_points` keypoints (strongest response first, ties broken
/// by `(y, x)`) and describes each one. Flat-patch descriptors are discarded.
pub fn detect_and_describe(img: &Image, image_id: u64, cfg: &SurfConfig) -> Result<Vec<Descriptor>> {
    if img.width() < MIN_IMAGE_SIDE || img.height() < MIN_IMAGE_SIDE {
        return Err(Error::Feature(format!(
            "image {}x{} smaller than {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}",
            img.width(),
            img.height()
        )));
    }
    let gray = img.luma()?;
    let ii = Integral::new(&gray);
    let mut candidates = detect(&ii, cfg);
    candidates.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    candidates.truncate(cfg.max_points);

    let out: Vec<Descriptor> = candidates
        .iter()
        .filter_map(|kp| {
            let orientation = if cfg.upright { 0.0 } else { dominant_orientation(&ii, kp) };
            let vector = describe(&ii, kp, orientation)?;
            Some(Descriptor {
                vector,
                keypoint: Keypoint {
                    x: kp.x as f32,
                    y: kp.y as f32,
                    scale: kp.scale as f32,
                    orientation: orientation as f32,
                    response: kp.response as f32,
                },
                image_id,
            })
        })
        .collect();
    if out.len() < DEGENERATE_KEYPOINTS {
        log::warn!(
            "image {image_id}: only {} keypoints found; retrieval will be weak",
            out.len()
        );
    }
    Ok(out)
}
