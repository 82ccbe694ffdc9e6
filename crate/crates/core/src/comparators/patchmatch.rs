//! Generalized PatchMatch: for every patch of `P`, the similarity-transformed
//! patch of `C` (translation, rotation, scale) that best reproduces it. Patches
//! that `C` cannot explain are likely tampered.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;

use super::{grid_positions, joint_valid, ComparatorConfig};
use crate::error::{Error, Result};
use crate::image::{HeatMap, Image};
use crate::seed;

pub const MIN_SCALE: f64 = 0.5;
pub const MAX_SCALE: f64 = 2.0;
/// A state whose transformed patch has more invalid samples than this is rejected.
const MAX_INVALID_FRACTION: f64 = 0.25;
/// Largest possible cost: three channels of squared difference in `[0, 1]`.
pub const COST_CAP: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchState {
    /// Offset of the patch centre in `C` relative to its centre in `P`.
    pub dx: f64,
    pub dy: f64,
    pub theta: f64,
    pub scale: f64,
}

impl PatchState {
    const IDENTITY: PatchState = PatchState {
        dx: 0.0,
        dy: 0.0,
        theta: 0.0,
        scale: 1.0,
    };
}

/// Final nearest-neighbour field. Patch `k` has its top-left corner at
/// `(xs[k % xs.len()], ys[k / xs.len()])`.
#[derive(Debug, Clone)]
pub struct Nnf {
    pub patch: usize,
    pub xs: Vec<usize>,
    pub ys: Vec<usize>,
    pub states: Vec<PatchState>,
    /// Mean squared colour distance per sample; `+inf` if no valid state was found.
    pub costs: Vec<f64>,
    /// Mean capped cost after initialization and after each iteration.
    pub mean_cost: Vec<f64>,
}

struct Ctx<'a> {
    p: &'a Image,
    c: &'a Image,
    c_valid: Option<&'a [bool]>,
    p_valid: Option<&'a [bool]>,
    w: usize,
    h: usize,
    patch: usize,
}

impl Ctx<'_> {
    fn cost(&self, px: usize, py: usize, s: &PatchState) -> f64 {
        let half = (self.patch as f64 - 1.0) / 2.0;
        let (cx, cy) = (px as f64 + half + s.dx, py as f64 + half + s.dy);
        let (sn, cs) = s.theta.sin_cos();
        let (a, b) = (s.scale * cs, s.scale * sn);
        let (wmax, hmax) = ((self.w - 1) as f64, (self.h - 1) as f64);
        let n = self.patch * self.patch;
        let budget = (MAX_INVALID_FRACTION * n as f64).floor() as usize;
        let mut invalid = 0;
        let mut sum = 0.0;
        for v in 0..self.patch {
            let oy = v as f64 - half;
            for u in 0..self.patch {
                let ox = u as f64 - half;
                let pi = (py + v) * self.w + px + u;
                let x = cx + a * ox - b * oy;
                let y = cy + b * ox + a * oy;
                let inside = x >= 0.0 && y >= 0.0 && x <= wmax && y <= hmax;
                let sample = if inside && self.p_valid.map_or(true, |m| m[pi]) {
                    self.sample_c(x, y)
                } else {
                    None
                };
                match sample {
                    Some(rgb) => {
                        for (ch, cv) in rgb.iter().enumerate() {
                            let d = self.p.plane(ch)[pi] - cv;
                            sum += d * d;
                        }
                    }
                    None => {
                        invalid += 1;
                        if invalid > budget {
                            return f64::INFINITY;
                        }
                    }
                }
            }
        }
        sum / (n - invalid) as f64
    }

    #[inline]
    fn sample_c(&self, x: f64, y: f64) -> Option<[f64; 3]> {
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let idx = [y0 * self.w + x0, y0 * self.w + x1, y1 * self.w + x0, y1 * self.w + x1];
        if let Some(m) = self.c_valid {
            // Neighbours with zero weight do not matter.
            let used = [true, fx > 0.0, fy > 0.0, fx > 0.0 && fy > 0.0];
            if idx.iter().zip(used).any(|(i, u)| u && !m[*i]) {
                return None;
            }
        }
        let mut out = [0.0; 3];
        for (ch, o) in out.iter_mut().enumerate() {
            let pl = self.c.plane(ch);
            let top = pl[idx[0]] * (1.0 - fx) + pl[idx[1]] * fx;
            let bottom = pl[idx[2]] * (1.0 - fx) + pl[idx[3]] * fx;
            *o = top * (1.0 - fy) + bottom * fy;
        }
        Some(out)
    }
}

fn wrap_angle(t: f64) -> f64 {
    (t + PI).rem_euclid(2.0 * PI) - PI
}

fn capped_mean(costs: &[f64]) -> f64 {
    costs.iter().map(|c| c.min(COST_CAP)).sum::<f64>() / costs.len() as f64
}

/// Runs `cfg.pm_iters` iterations of propagation and random search over
/// `cfg.pm_patch`-sized patches of `P` placed every `stride` pixels.
pub fn patchmatch_nnf(p: &Image, c: &Image, cfg: &ComparatorConfig) -> Result<Nnf> {
    joint_valid(p, c)?;
    let patch = cfg.pm_patch;
    let (w, h) = (p.width(), p.height());
    if w < patch || h < patch {
        return Err(Error::Comparator(format!("{w}x{h} image is smaller than a {patch}x{patch} patch")));
    }
    let p_rgb = p.rgb()?;
    let c_rgb = c.rgb()?;
    let ctx = Ctx {
        p: &p_rgb,
        c: &c_rgb,
        c_valid: c.valid_mask(),
        p_valid: p.valid_mask(),
        w,
        h,
        patch,
    };
    let xs = grid_positions(w - patch, cfg.pm_stride());
    let ys = grid_positions(h - patch, cfg.pm_stride());
    let (gw, gh) = (xs.len(), ys.len());
    let count = gw * gh;
    let half = (patch as f64 - 1.0) / 2.0;
    let pos = |k: usize| (xs[k % gw], ys[k / gw]);

    let mut states: Vec<PatchState> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = seed::rng(cfg.seed, "patchmatch/init", k as u64);
            let (px, py) = pos(k);
            PatchState {
                dx: rng.gen_range(0.0..=(w - 1) as f64) - (px as f64 + half),
                dy: rng.gen_range(0.0..=(h - 1) as f64) - (py as f64 + half),
                theta: rng.gen_range(-PI..PI),
                scale: rng.gen_range(MIN_SCALE.ln()..=MAX_SCALE.ln()).exp(),
            }
        })
        .collect();
    let mut costs: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|k| {
            let (px, py) = pos(k);
            ctx.cost(px, py, &states[k])
        })
        .collect();
    let mut mean_cost = vec![capped_mean(&costs)];

    let search_radius = w.max(h) as f64;
    for it in 0..cfg.pm_iters {
        // Propagation: a neighbour's state, re-anchored at this patch's centre.
        let forward = it % 2 == 0;
        for step in 0..count {
            let k = if forward { step } else { count - 1 - step };
            let (gx, gy) = (k % gw, k / gw);
            let neighbours = if forward {
                [(gx > 0).then(|| k - 1), (gy > 0).then(|| k - gw)]
            } else {
                [(gx + 1 < gw).then(|| k + 1), (gy + 1 < gh).then(|| k + gw)]
            };
            let (px, py) = pos(k);
            for nk in neighbours.into_iter().flatten() {
                let ns = states[nk];
                let (nx, ny) = pos(nk);
                let (ddx, ddy) = (px as f64 - nx as f64, py as f64 - ny as f64);
                let (sn, cs) = ns.theta.sin_cos();
                let cand = PatchState {
                    dx: ns.dx + ns.scale * (cs * ddx - sn * ddy) - ddx,
                    dy: ns.dy + ns.scale * (sn * ddx + cs * ddy) - ddy,
                    ..ns
                };
                let cost = ctx.cost(px, py, &cand);
                if cost < costs[k] {
                    states[k] = cand;
                    costs[k] = cost;
                }
            }
        }

        // Random search with exponentially shrinking windows, plus the snapped
        // (axis-aligned, unit-scale, integer-offset) version of the current state.
        let updated: Vec<(PatchState, f64)> = (0..count)
            .into_par_iter()
            .map(|k| {
                let mut rng = seed::rng(cfg.seed, "patchmatch/search", (it * count + k) as u64);
                let (px, py) = pos(k);
                let (mut best, mut best_cost) = (states[k], costs[k]);
                let snap = PatchState {
                    dx: best.dx.round(),
                    dy: best.dy.round(),
                    ..PatchState::IDENTITY
                };
                let cost = ctx.cost(px, py, &snap);
                if cost < best_cost {
                    best = snap;
                    best_cost = cost;
                }
                let mut frac = 1.0;
                while search_radius * frac >= 1.0 {
                    let r = search_radius * frac;
                    let cand = PatchState {
                        dx: best.dx + rng.gen_range(-r..=r),
                        dy: best.dy + rng.gen_range(-r..=r),
                        theta: wrap_angle(best.theta + rng.gen_range(-PI..=PI) * frac),
                        scale: (best.scale.ln() + rng.gen_range(-MAX_SCALE.ln()..=MAX_SCALE.ln()) * frac)
                            .clamp(MIN_SCALE.ln(), MAX_SCALE.ln())
                            .exp(),
                    };
                    let cost = ctx.cost(px, py, &cand);
                    if cost < best_cost {
                        best = cand;
                        best_cost = cost;
                    }
                    frac *= 0.5;
                }
                (best, best_cost)
            })
            .collect();
        for (k, (s, cst)) in updated.into_iter().enumerate() {
            states[k] = s;
            costs[k] = cst;
        }
        mean_cost.push(capped_mean(&costs));
    }

    Ok(Nnf {
        patch,
        xs,
        ys,
        states,
        costs,
        mean_cost,
    })
}

/// Raw map (high = tampered): each pixel averages the NNF costs of the patches
/// covering it. Pixels covered by no matched patch are invalid.
pub fn thm_patchmatch(p: &Image, c: &Image, cfg: &ComparatorConfig) -> Result<HeatMap> {
    let valid = joint_valid(p, c)?;
    let nnf = patchmatch_nnf(p, c, cfg)?;
    let (w, h) = (p.width(), p.height());
    let mut sum = vec![0.0; w * h];
    let mut hits = vec![0u32; w * h];
    let gw = nnf.xs.len();
    for (k, cost) in nnf.costs.iter().enumerate() {
        if !cost.is_finite() {
            continue;
        }
        let (px, py) = (nnf.xs[k % gw], nnf.ys[k / gw]);
        for y in py..py + nnf.patch {
            for x in px..px + nnf.patch {
                sum[y * w + x] += cost.min(COST_CAP);
                hits[y * w + x] += 1;
            }
        }
    }
    let mut out_valid = valid;
    let scores = (0..w * h)
        .map(|i| {
            if hits[i] == 0 {
                out_valid[i] = false;
                0.0
            } else {
                sum[i] / hits[i] as f64
            }
        })
        .collect();
    if !out_valid.iter().any(|v| *v) {
        return Err(Error::Comparator("no patch of P found a valid match in C".into()));
    }
    HeatMap::new(w, h, scores, out_valid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_wrapping() {
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(-3.0 * PI / 2.0) - PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.5), 0.5);
    }

    #[test]
    fn identity_state_on_identical_images_costs_zero() {
        use crate::image::ColorSpace;
        let img = Image::from_fn(20, 20, ColorSpace::Rgb, |x, y, c| ((x * 3 + y * 7 + c) % 10) as f64 / 9.0).unwrap();
        let ctx = Ctx {
            p: &img,
            c: &img,
            c_valid: None,
            p_valid: None,
            w: 20,
            h: 20,
            patch: 8,
        };
        assert_eq!(ctx.cost(5, 6, &PatchState::IDENTITY), 0.0);
        let shifted = PatchState { dx: 1.0, ..PatchState::IDENTITY };
        assert!(ctx.cost(5, 6, &shifted) > 0.0);
        let outside = PatchState { dx: 30.0, ..PatchState::IDENTITY };
        assert_eq!(ctx.cost(5, 6, &outside), f64::INFINITY);
    }
}
