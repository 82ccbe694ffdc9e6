//! Desk-scale synthetic splice dataset.
//!
//! Scenes are procedural: a smooth two-color background with low-frequency
//! value noise, a few dozen anti-aliased shapes and textured patches, then a
//! per-image multiplicative sensor pattern plus read noise. A splice cuts a
//! random star-shaped polygon out of a donor scene (optionally scaled and
//! rotated) and alpha-blends it onto a host with a one-pixel feather.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{bilinear, ColorSpace, Image};
use crate::io;
use crate::seed;

const MIN_REGION_FRACTION: f64 = 0.01;
const MAX_REGION_FRACTION: f64 = 0.5;
const MAX_REGION_ATTEMPTS: usize = 100;

/// An indexable source of images.
pub trait Corpus: Sync {
    fn len(&self) -> usize;
    fn image(&self, index: usize) -> Result<Image>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Procedurally rendered scenes; image `i` depends only on `(seed, name, i)`.
#[derive(Debug, Clone)]
pub struct ProceduralCorpus {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub count: usize,
    pub seed: u64,
}

impl ProceduralCorpus {
    pub fn new(name: impl Into<String>, width: usize, height: usize, count: usize, seed: u64) -> Self {
        Self {
            name: name.into(),
            width,
            height,
            count,
            seed,
        }
    }
}

impl Corpus for ProceduralCorpus {
    fn len(&self) -> usize {
        self.count
    }

    fn image(&self, index: usize) -> Result<Image> {
        if index >= self.count {
            return Err(Error::Parameter(format!("corpus index {index} out of range")));
        }
        let mut rng = seed::rng(self.seed, &format!("scene/{}", self.name), index as u64);
        render_scene(self.width, self.height, &mut rng)
    }
}

/// Images read from disk, in the given order.
#[derive(Debug, Clone)]
pub struct FileCorpus {
    pub paths: Vec<PathBuf>,
}

impl Corpus for FileCorpus {
    fn len(&self) -> usize {
        self.paths.len()
    }

    fn image(&self, index: usize) -> Result<Image> {
        let p = self
            .paths
            .get(index)
            .ok_or_else(|| Error::Parameter(format!("corpus index {index} out of range")))?;
        io::load_image(p)?.rgb()
    }
}

fn random_color(rng: &mut seed::Rng) -> [f64; 3] {
    [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)]
}

/// Smooth value noise on a coarse lattice, bicubically smoothed by a smoothstep.
fn value_noise(width: usize, height: usize, cell: f64, rng: &mut seed::Rng) -> Vec<f64> {
    let gw = (width as f64 / cell).ceil() as usize + 2;
    let gh = (height as f64 / cell).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let fx = x as f64 / cell;
            let fy = y as f64 / cell;
            let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
            let s = |t: f64| t * t * (3.0 - 2.0 * t);
            let (tx, ty) = (s(fx - ix as f64), s(fy - iy as f64));
            let l = |i: usize, j: usize| lattice[j * gw + i];
            let top = l(ix, iy) * (1.0 - tx) + l(ix + 1, iy) * tx;
            let bot = l(ix, iy + 1) * (1.0 - tx) + l(ix + 1, iy + 1) * tx;
            out[y * width + x] = top * (1.0 - ty) + bot * ty;
        }
    }
    out
}

enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64, angle: f64 },
    Rect { cx: f64, cy: f64, hw: f64, hh: f64, angle: f64 },
    Triangle { pts: [(f64, f64); 3] },
    Stripes { cx: f64, cy: f64, radius: f64, period: f64, angle: f64 },
}

impl Shape {
    /// Coverage in `[0, 1]` at a pixel center, anti-aliased over about one pixel.
    fn coverage(&self, x: f64, y: f64) -> f64 {
        let aa = |d: f64| (0.5 - d).clamp(0.0, 1.0);
        match *self {
            Shape::Ellipse { cx, cy, rx, ry, angle } => {
                let (s, c) = angle.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let u = (c * dx + s * dy) / rx;
                let v = (-s * dx + c * dy) / ry;
                let r = (u * u + v * v).sqrt();
                aa((r - 1.0) * rx.min(ry))
            }
            Shape::Rect { cx, cy, hw, hh, angle } => {
                let (s, c) = angle.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let u = (c * dx + s * dy).abs() - hw;
                let v = (-s * dx + c * dy).abs() - hh;
                aa(u.max(v))
            }
            Shape::Triangle { pts } => {
                let mut d = f64::NEG_INFINITY;
                let area = (pts[1].0 - pts[0].0) * (pts[2].1 - pts[0].1)
                    - (pts[1].1 - pts[0].1) * (pts[2].0 - pts[0].0);
                let sign = area.signum();
                for i in 0..3 {
                    let (a, b) = (pts[i], pts[(i + 1) % 3]);
                    let (ex, ey) = (b.0 - a.0, b.1 - a.1);
                    let len = ex.hypot(ey).max(1e-9);
                    // Outward signed distance to the edge line.
                    let sd = -sign * (ex * (y - a.1) - ey * (x - a.0)) / len;
                    d = d.max(sd);
                }
                aa(d)
            }
            Shape::Stripes { cx, cy, radius, period, angle } => {
                let r = (x - cx).hypot(y - cy);
                if r > radius {
                    return 0.0;
                }
                let (s, c) = angle.sin_cos();
                let u = c * (x - cx) + s * (y - cy);
                if (u / period).rem_euclid(1.0) < 0.5 { aa(r - radius) } else { 0.0 }
            }
        }
    }
}

fn random_shape(width: f64, height: f64, rng: &mut seed::Rng) -> Shape {
    let side = width.min(height);
    let cx = rng.gen_range(0.0..width);
    let cy = rng.gen_range(0.0..height);
    match rng.gen_range(0..10) {
        0..=3 => Shape::Ellipse {
            cx,
            cy,
            rx: rng.gen_range(0.015..0.12) * side,
            ry: rng.gen_range(0.015..0.12) * side,
            angle: rng.gen_range(0.0..PI),
        },
        4..=6 => Shape::Rect {
            cx,
            cy,
            hw: rng.gen_range(0.015..0.1) * side,
            hh: rng.gen_range(0.015..0.1) * side,
            angle: rng.gen_range(0.0..PI),
        },
        7..=8 => {
            let r = rng.gen_range(0.03..0.12) * side;
            let mut pts = [(0.0, 0.0); 3];
            for p in &mut pts {
                let a = rng.gen_range(0.0..2.0 * PI);
                *p = (cx + r * a.cos(), cy + r * a.sin());
            }
            Shape::Triangle { pts }
        }
        _ => Shape::Stripes {
            cx,
            cy,
            radius: rng.gen_range(0.04..0.1) * side,
            period: rng.gen_range(3.0..9.0),
            angle: rng.gen_range(0.0..PI),
        },
    }
}

/// Renders one procedural RGB scene.
pub fn render_scene(width: usize, height: usize, rng: &mut seed::Rng) -> Result<Image> {
    let n = width * height;
    let (w, h) = (width as f64, height as f64);
    let c0 = random_color(rng);
    let c1 = random_color(rng);
    let grad_angle: f64 = rng.gen_range(0.0..2.0 * PI);
    let (gs, gc) = grad_angle.sin_cos();
    let noise = value_noise(width, height, rng.gen_range(16.0..48.0), rng);
    let mut planes = vec![0.0; 3 * n];
    for y in 0..height {
        for x in 0..width {
            let t = (((x as f64 - w / 2.0) * gc + (y as f64 - h / 2.0) * gs) / w.max(h) + 0.5).clamp(0.0, 1.0);
            let nv = 0.12 * noise[y * width + x];
            for c in 0..3 {
                planes[c * n + y * width + x] = c0[c] * (1.0 - t) + c1[c] * t + nv;
            }
        }
    }

    let shape_count = ((n as f64 / 2000.0) as usize).clamp(12, 60) + rng.gen_range(0..10);
    for _ in 0..shape_count {
        let shape = random_shape(w, h, rng);
        let color = random_color(rng);
        let opacity = rng.gen_range(0.6..1.0);
        for y in 0..height {
            for x in 0..width {
                let a = shape.coverage(x as f64, y as f64) * opacity;
                if a > 0.0 {
                    for c in 0..3 {
                        let p = &mut planes[c * n + y * width + x];
                        *p = *p * (1.0 - a) + color[c] * a;
                    }
                }
            }
        }
    }

    // Sensor pattern: fixed multiplicative noise plus read noise.
    let prnu = Normal::new(0.0, 0.03).unwrap();
    let read = Normal::new(0.0, 0.004).unwrap();
    for i in 0..n {
        let k = prnu.sample(rng);
        for c in 0..3 {
            let p = &mut planes[c * n + i];
            *p = *p * (1.0 + k) + read.sample(rng);
        }
    }
    Image::from_planar_clamped(width, height, ColorSpace::Rgb, planes)
}

/// One record of a splice manifest (JSON-lines). Paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpliceRecord {
    pub probe: String,
    pub mask: String,
    pub host_id: u64,
    pub donor_id: u64,
    #[serde(default)]
    pub perturbation: Option<String>,
    pub seed: u64,
}

/// A gallery entry of a gallery manifest (JSON-lines).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GalleryRecord {
    pub id: u64,
    pub path: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GallerySource {
    Host(usize),
    Distractor(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GalleryItem {
    pub id: u64,
    pub source: GallerySource,
}

#[derive(Debug, Clone)]
pub struct SpliceSample {
    pub probe: Image,
    /// `true` inside the alien region.
    pub mask: Vec<bool>,
    pub host_index: usize,
    pub host_id: u64,
    pub donor_index: usize,
    pub seed: u64,
}

impl SpliceSample {
    pub fn mask_fraction(&self) -> f64 {
        self.mask.iter().filter(|m| **m).count() as f64 / self.mask.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub count: usize,
    pub distractors: usize,
    pub seed: u64,
    /// Target polygon area as a fraction of the image.
    pub area_range: (f64, f64),
    pub vertex_range: (usize, usize),
    pub scale_range: (f64, f64),
    pub max_rotation_deg: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 200,
            distractors: 10_000,
            seed: 0,
            area_range: (0.02, 0.25),
            vertex_range: (5, 12),
            scale_range: (0.7, 1.3),
            max_rotation_deg: 20.0,
        }
    }
}

/// Splices plus the gallery they are searched against. Gallery images are
/// regenerated from their corpus on demand.
pub struct SpliceDataset<'a> {
    pub samples: Vec<SpliceSample>,
    pub gallery: Vec<GalleryItem>,
    pub hosts: &'a dyn Corpus,
    pub distractors: &'a dyn Corpus,
}

impl SpliceDataset<'_> {
    pub fn gallery_image(&self, item: &GalleryItem) -> Result<Image> {
        match item.source {
            GallerySource::Host(i) => self.hosts.image(i),
            GallerySource::Distractor(i) => self.distractors.image(i),
        }
    }

    pub fn item(&self, id: u64) -> Option<&GalleryItem> {
        self.gallery.iter().find(|g| g.id == id)
    }
}

/// Star-shaped polygon, vertices in angular order.
fn random_polygon(width: f64, height: f64, cfg: &SynthConfig, rng: &mut seed::Rng) -> Vec<(f64, f64)> {
    let area = rng.gen_range(cfg.area_range.0..cfg.area_range.1) * width * height;
    let r0 = (area / PI).sqrt();
    let vertices = rng.gen_range(cfg.vertex_range.0..=cfg.vertex_range.1);
    let margin_x = (r0 * 0.8).min(width / 2.0 - 1.0);
    let margin_y = (r0 * 0.8).min(height / 2.0 - 1.0);
    let cx = rng.gen_range(margin_x..width - margin_x);
    let cy = rng.gen_range(margin_y..height - margin_y);
    let step = 2.0 * PI / vertices as f64;
    let phase = rng.gen_range(0.0..2.0 * PI);
    (0..vertices)
        .map(|i| {
            let a = phase + step * (i as f64 + rng.gen_range(-0.3..0.3));
            let r = r0 * rng.gen_range(0.65..1.35);
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect()
}

fn point_in_polygon(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn distance_to_polygon(poly: &[(f64, f64)], x: f64, y: f64) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..poly.len() {
        let (ax, ay) = poly[i];
        let (bx, by) = poly[(i + 1) % poly.len()];
        let (ex, ey) = (bx - ax, by - ay);
        let t = (((x - ax) * ex + (y - ay) * ey) / (ex * ex + ey * ey).max(1e-12)).clamp(0.0, 1.0);
        best = best.min((x - ax - t * ex).hypot(y - ay - t * ey));
    }
    best
}

/// Rasterizes a polygon: hard mask of pixel centers inside, plus a feathered
/// alpha that ramps across one pixel at the boundary.
pub fn rasterize_polygon(poly: &[(f64, f64)], width: usize, height: usize) -> (Vec<bool>, Vec<f64>) {
    let mut mask = vec![false; width * height];
    let mut alpha = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (x as f64, y as f64);
            let inside = point_in_polygon(poly, px, py);
            let d = distance_to_polygon(poly, px, py);
            let sd = if inside { d } else { -d };
            mask[y * width + x] = inside;
            alpha[y * width + x] = (0.5 + sd).clamp(0.0, 1.0);
        }
    }
    (mask, alpha)
}

/// Composites one splice of `donor` onto `host`.
pub fn splice(host: &Image, donor: &Image, cfg: &SynthConfig, rng: &mut seed::Rng) -> Result<(Image, Vec<bool>)> {
    let host = host.rgb()?;
    let donor = donor.rgb()?;
    let (w, h) = (host.width(), host.height());
    let total = (w * h) as f64;
    for _ in 0..MAX_REGION_ATTEMPTS {
        let poly = random_polygon(w as f64, h as f64, cfg, rng);
        let (mask, alpha) = rasterize_polygon(&poly, w, h);
        let frac = mask.iter().filter(|m| **m).count() as f64 / total;
        if !(MIN_REGION_FRACTION..=MAX_REGION_FRACTION).contains(&frac) {
            continue;
        }
        // Region centroid, and where it comes from in the donor.
        let (mut mx, mut my, mut cnt) = (0.0, 0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                if mask[y * w + x] {
                    mx += x as f64;
                    my += y as f64;
                    cnt += 1.0;
                }
            }
        }
        let (mx, my) = (mx / cnt, my / cnt);
        let scale = rng.gen_range(cfg.scale_range.0..=cfg.scale_range.1);
        let theta = rng.gen_range(-cfg.max_rotation_deg..=cfg.max_rotation_deg).to_radians();
        let (dw, dh) = (donor.width() as f64, donor.height() as f64);
        let src_cx = rng.gen_range(dw * 0.3..dw * 0.7);
        let src_cy = rng.gen_range(dh * 0.3..dh * 0.7);
        let (s, c) = theta.sin_cos();

        let n = w * h;
        let mut data = host.data().to_vec();
        for y in 0..h {
            for x in 0..w {
                let a = alpha[y * w + x];
                if a <= 0.0 {
                    continue;
                }
                let (dx, dy) = (x as f64 - mx, y as f64 - my);
                let sx = src_cx + (c * dx - s * dy) / scale;
                let sy = src_cy + (s * dx + c * dy) / scale;
                for ch in 0..3 {
                    let d = bilinear(donor.plane(ch), donor.width(), donor.height(), sx, sy);
                    let p = &mut data[ch * n + y * w + x];
                    *p = (*p * (1.0 - a) + d * a).clamp(0.0, 1.0);
                }
            }
        }
        return Ok((Image::new(w, h, ColorSpace::Rgb, data)?, mask));
    }
    Err(Error::Parameter(format!(
        "no splice region within [{MIN_REGION_FRACTION}, {MAX_REGION_FRACTION}] of the image after {MAX_REGION_ATTEMPTS} attempts"
    )))
}

/// Generates `cfg.count` splices and a gallery of the untouched hosts plus
/// `cfg.distractors` unrelated images. Gallery ids are a seeded shuffle, so ids
/// carry no information about which entries are hosts.
pub fn synthesize_splices<'a>(
    hosts: &'a dyn Corpus,
    donors: &dyn Corpus,
    distractors: &'a dyn Corpus,
    cfg: &SynthConfig,
) -> Result<SpliceDataset<'a>> {
    if hosts.is_empty() || donors.is_empty() {
        return Err(Error::Parameter("host and donor corpora must be non-empty".into()));
    }
    if distractors.len() < cfg.distractors {
        return Err(Error::Parameter(format!(
            "distractor corpus has {} images, {} requested",
            distractors.len(),
            cfg.distractors
        )));
    }
    let mut order_rng = seed::rng(cfg.seed, "synth/order", 0);
    let mut host_order: Vec<usize> = (0..hosts.len()).collect();
    host_order.shuffle(&mut order_rng);
    let used_hosts: Vec<usize> = (0..cfg.count).map(|i| host_order[i % hosts.len()]).collect();
    let mut distinct_hosts = used_hosts.clone();
    distinct_hosts.sort_unstable();
    distinct_hosts.dedup();

    let gallery_len = distinct_hosts.len() + cfg.distractors;
    let mut ids: Vec<u64> = (0..gallery_len as u64).collect();
    ids.shuffle(&mut order_rng);
    let mut gallery: Vec<GalleryItem> = distinct_hosts
        .iter()
        .map(|&h| GallerySource::Host(h))
        .chain((0..cfg.distractors).map(GallerySource::Distractor))
        .zip(&ids)
        .map(|(source, &id)| GalleryItem { id, source })
        .collect();
    gallery.sort_by_key(|g| g.id);
    let host_id = |h: usize| {
        gallery
            .iter()
            .find(|g| g.source == GallerySource::Host(h))
            .map(|g| g.id)
            .expect("host registered")
    };

    let samples = used_hosts
        .par_iter()
        .enumerate()
        .map(|(i, &host_index)| {
            let sample_seed = seed::derive(cfg.seed, "synth/splice", i as u64);
            let mut rng = seed::rng(cfg.seed, "synth/splice", i as u64);
            let mut donor_index = rng.gen_range(0..donors.len());
            if donors.len() > 1 && std::ptr::addr_eq(donors, hosts) && donor_index == host_index {
                donor_index = (donor_index + 1) % donors.len();
            }
            let host = hosts.image(host_index)?;
            let donor = donors.image(donor_index)?;
            let (probe, mask) = splice(&host, &donor, cfg, &mut rng)?;
            Ok(SpliceSample {
                probe,
                mask,
                host_index,
                host_id: host_id(host_index),
                donor_index,
                seed: sample_seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SpliceDataset {
        samples,
        gallery,
        hosts,
        distractors,
    })
}

/// Writes probes, masks and gallery images plus `splices.jsonl` and
/// `gallery.jsonl` under `dir`.
pub fn write_dataset(dataset: &SpliceDataset<'_>, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    for sub in ["probes", "masks", "gallery"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }
    let mut splices = String::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        let probe = format!("probes/probe_{i:05}.png");
        let mask = format!("masks/mask_{i:05}.png");
        io::save_image(&s.probe, dir.join(&probe))?;
        io::save_mask(&s.mask, s.probe.width(), s.probe.height(), dir.join(&mask))?;
        let rec = SpliceRecord {
            probe,
            mask,
            host_id: s.host_id,
            donor_id: s.donor_index as u64,
            perturbation: None,
            seed: s.seed,
        };
        splices.push_str(&serde_json::to_string(&rec)?);
        splices.push('\n');
    }
    let lines: Vec<String> = dataset
        .gallery
        .par_iter()
        .map(|g| {
            let path = format!("gallery/img_{:06}.png", g.id);
            io::save_image(&dataset.gallery_image(g)?, dir.join(&path))?;
            Ok(serde_json::to_string(&GalleryRecord { id: g.id, path })?)
        })
        .collect::<Result<_>>()?;
    let splice_path = dir.join("splices.jsonl");
    let gallery_path = dir.join("gallery.jsonl");
    std::fs::write(&splice_path, splices)?;
    std::fs::write(&gallery_path, lines.join("\n") + "\n")?;
    Ok((splice_path, gallery_path))
}

/// Reads a JSON-lines file, skipping blank lines.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
