//! Candidate-to-probe registration: descriptor matching, MSAC affine estimation,
//! reciprocal-Frobenius-condition ranking and warping of the chosen candidate.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{l2_sq, Descriptor};
use crate::image::{warp_affine, Image};
use crate::seed;
use crate::transform::AffineTransform;

pub const LOWE_RATIO: f32 = 0.8;
pub const MIN_MATCHES: usize = 3;
/// Triangles with less area than this (px²) are treated as collinear samples.
const MIN_SAMPLE_AREA: f64 = 1e-3;
const RFN_TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MsacConfig {
    /// Inlier threshold on the forward transfer error, in pixels.
    pub tau: f64,
    pub max_iters: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for MsacConfig {
    fn default() -> Self {
        Self {
            tau: 3.0,
            max_iters: 2000,
            confidence: 0.99,
            seed: 0,
        }
    }
}

impl MsacConfig {
    /// Scale-free threshold: τ = 0.005 × the frame diagonal.
    pub fn scale_free(width: usize, height: usize) -> Self {
        Self {
            tau: 0.005 * (width as f64).hypot(height as f64),
            ..Self::default()
        }
    }
}

/// Mutual nearest neighbours (brute-force L2) whose nearest / second-nearest
/// distance ratio is below [`LOWE_RATIO`] in both directions. Pairs are `(i, j)`
/// with `i` indexing `a`, ascending in `i`.
pub fn mutual_matches(a: &[Descriptor], b: &[Descriptor]) -> Vec<(usize, usize)> {
    let best_two = |q: &Descriptor, set: &[Descriptor]| {
        let mut best = (usize::MAX, f32::INFINITY);
        let mut second = f32::INFINITY;
        for (j, d) in set.iter().enumerate() {
            let dist = l2_sq(&q.vector, &d.vector);
            if dist < best.1 {
                second = best.1;
                best = (j, dist);
            } else if dist < second {
                second = dist;
            }
        }
        // Squared distances, so the ratio is squared too.
        let passes = second.is_finite() && best.1 < LOWE_RATIO * LOWE_RATIO * second;
        (best.0, passes)
    };
    let forward: Vec<(usize, bool)> = a.par_iter().map(|q| best_two(q, b)).collect();
    let backward: Vec<(usize, bool)> = b.par_iter().map(|q| best_two(q, a)).collect();
    forward
        .iter()
        .enumerate()
        .filter_map(|(i, &(j, ok))| {
            (ok && j != usize::MAX && backward[j] == (i, true)).then_some((i, j))
        })
        .collect()
}

/// [`mutual_matches`] with the registration preconditions enforced.
pub fn match_descriptors(a: &[Descriptor], b: &[Descriptor]) -> Result<Vec<(usize, usize)>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::RegistrationInfeasible("empty descriptor list".into()));
    }
    let m = mutual_matches(a, b);
    if m.len() < MIN_MATCHES {
        return Err(Error::RegistrationInfeasible(format!(
            "{} matches, need {MIN_MATCHES}",
            m.len()
        )));
    }
    Ok(m)
}

fn triangle_area(p: [(f64, f64); 3]) -> f64 {
    ((p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1)).abs() / 2.0
}

fn solve3(m: [[f64; 3]; 3], rhs: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if !d.is_finite() || d.abs() < 1e-12 {
        return None;
    }
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut mk = m;
        for r in 0..3 {
            mk[r][k] = rhs[r];
        }
        *o = det(&mk) / d;
    }
    Some(out)
}

/// Least-squares affine from `src → dst` (exact for three points). Coordinates
/// are centred first for conditioning.
fn fit_affine(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Option<AffineTransform> {
    let n = src.len() as f64;
    let (sx, sy) = src.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let (dx, dy) = dst.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let mut ata = [[0.0; 3]; 3];
    let mut atu = [0.0; 3];
    let mut atv = [0.0; 3];
    for (s, d) in src.iter().zip(dst) {
        let row = [s.0 - sx, s.1 - sy, 1.0];
        for r in 0..3 {
            for c in 0..3 {
                ata[r][c] += row[r] * row[c];
            }
            atu[r] += row[r] * (d.0 - dx);
            atv[r] += row[r] * (d.1 - dy);
        }
    }
    let u = solve3(ata, atu)?;
    let v = solve3(ata, atv)?;
    // x' - dx = u0 (x - sx) + u1 (y - sy) + u2
    let t = AffineTransform::from_params(
        u[0],
        u[1],
        dx + u[2] - u[0] * sx - u[1] * sy,
        v[0],
        v[1],
        dy + v[2] - v[0] * sx - v[1] * sy,
    );
    (t.is_invertible() && t.to_row_major().iter().all(|v| v.is_finite())).then_some(t)
}

fn transfer_sq(t: &AffineTransform, s: (f64, f64), d: (f64, f64)) -> f64 {
    let (x, y) = t.apply(s.0, s.1);
    (x - d.0).powi(2) + (y - d.1).powi(2)
}

/// MSAC affine estimate mapping `src[i]` onto `dst[i]`. Returns the model and
/// the inlier flags (forward error < τ) of the final least-squares refit.
pub fn estimate_affine(
    src: &[(f64, f64)],
    dst: &[(f64, f64)],
    cfg: &MsacConfig,
) -> Result<(AffineTransform, Vec<bool>)> {
    if src.len() != dst.len() {
        return Err(Error::Parameter(format!(
            "{} source points but {} destination points",
            src.len(),
            dst.len()
        )));
    }
    let n = src.len();
    if n < MIN_MATCHES {
        return Err(Error::RegistrationInfeasible(format!("{n} correspondences, need {MIN_MATCHES}")));
    }
    if !(cfg.tau > 0.0) || !(0.0..1.0).contains(&cfg.confidence) {
        return Err(Error::Parameter("MSAC needs tau > 0 and confidence in [0, 1)".into()));
    }
    let tau2 = cfg.tau * cfg.tau;
    let cost = |t: &AffineTransform| -> (f64, usize) {
        src.iter().zip(dst).fold((0.0, 0), |(c, k), (s, d)| {
            let e = transfer_sq(t, *s, *d);
            (c + e.min(tau2), k + usize::from(e < tau2))
        })
    };

    let mut rng = seed::rng(cfg.seed, "msac", 0);
    let mut best: Option<(AffineTransform, f64, usize)> = None;
    let mut needed = cfg.max_iters;
    let mut iter = 0;
    while iter < needed.min(cfg.max_iters) {
        iter += 1;
        let idx = sample(&mut rng, n, 3);
        let (s3, d3): (Vec<_>, Vec<_>) = idx.iter().map(|i| (src[i], dst[i])).unzip();
        if triangle_area([s3[0], s3[1], s3[2]]) < MIN_SAMPLE_AREA
            || triangle_area([d3[0], d3[1], d3[2]]) < MIN_SAMPLE_AREA
        {
            continue;
        }
        let Some(model) = fit_affine(&s3, &d3) else {
            continue;
        };
        let (c, inliers) = cost(&model);
        if best.as_ref().map_or(true, |b| c < b.1) {
            best = Some((model, c, inliers));
            let w = inliers as f64 / n as f64;
            let miss = 1.0 - w.powi(3);
            needed = if miss <= 0.0 {
                0
            } else if miss >= 1.0 {
                cfg.max_iters
            } else {
                ((1.0 - cfg.confidence).ln() / miss.ln()).ceil().max(1.0) as usize
            };
        }
    }
    let Some((model, _, _)) = best else {
        return Err(Error::DegenerateGeometry(format!(
            "no non-collinear sample among {n} correspondences after {iter} iterations"
        )));
    };
    let inliers = |t: &AffineTransform| -> Vec<bool> {
        src.iter().zip(dst).map(|(s, d)| transfer_sq(t, *s, *d) < tau2).collect()
    };
    let flags = inliers(&model);
    let (s_in, d_in): (Vec<_>, Vec<_>) = src
        .iter()
        .zip(dst)
        .zip(&flags)
        .filter(|(_, f)| **f)
        .map(|((s, d), _)| (*s, *d))
        .unzip();
    match fit_affine(&s_in, &d_in) {
        Some(refit) => {
            let refit_flags = inliers(&refit);
            Ok((refit, refit_flags))
        }
        None => Ok((model, flags)),
    }
}

/// Reciprocal Frobenius condition `1 / (‖F‖·‖F⁻¹‖)` over all nine entries; 0 for
/// a singular transform.
pub fn rfn(t: &AffineTransform) -> f64 {
    match t.inverse() {
        Ok(inv) => {
            let v = 1.0 / (t.frobenius_norm() * inv.frobenius_norm());
            if v.is_finite() {
                v
            } else {
                0.0
            }
        }
        Err(_) => 0.0,
    }
}

/// A retrieved gallery image with its estimated candidate → probe transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub image_id: u64,
    pub transform: AffineTransform,
    pub rfn: f64,
    pub inlier_count: usize,
}

/// Matches a candidate's descriptors against the probe's and estimates the
/// transform taking candidate coordinates to probe coordinates.
pub fn register(
    probe: &[Descriptor],
    candidate: &[Descriptor],
    image_id: u64,
    cfg: &MsacConfig,
) -> Result<RankedCandidate> {
    let matches = match_descriptors(candidate, probe)?;
    let src: Vec<(f64, f64)> = matches
        .iter()
        .map(|&(i, _)| (candidate[i].keypoint.x as f64, candidate[i].keypoint.y as f64))
        .collect();
    let dst: Vec<(f64, f64)> = matches
        .iter()
        .map(|&(_, j)| (probe[j].keypoint.x as f64, probe[j].keypoint.y as f64))
        .collect();
    let (transform, inliers) = estimate_affine(&src, &dst, cfg)?;
    Ok(RankedCandidate {
        image_id,
        rfn: rfn(&transform),
        transform,
        inlier_count: inliers.iter().filter(|f| **f).count(),
    })
}

/// Highest-RFN usable candidate; ties within 1e-12 go to more inliers, then to
/// the smaller id.
pub fn select_best(candidates: &[RankedCandidate]) -> Result<&RankedCandidate> {
    candidates
        .iter()
        .filter(|c| c.rfn > 0.0 && c.rfn.is_finite())
        .reduce(|best, c| {
            let better = if (c.rfn - best.rfn).abs() <= RFN_TIE_EPS {
                (c.inlier_count, std::cmp::Reverse(c.image_id)) > (best.inlier_count, std::cmp::Reverse(best.image_id))
            } else {
                c.rfn > best.rfn
            };
            if better {
                c
            } else {
                best
            }
        })
        .ok_or_else(|| Error::NoContext(format!("none of {} candidates is usable", candidates.len())))
}

#[derive(Debug, Clone)]
pub struct Selection {
    /// The chosen candidate warped into the probe frame.
    pub warped: Image,
    pub candidate: RankedCandidate,
}

/// Picks the best candidate, loads its image and warps it onto the probe grid.
pub fn select_and_warp(
    probe: &Image,
    candidates: &[RankedCandidate],
    load: impl FnOnce(u64) -> Result<Image>,
) -> Result<Selection> {
    let best = select_best(candidates)?.clone();
    let img = load(best.image_id)?;
    let warped = warp_affine(&img, &best.transform, probe.width(), probe.height())?;
    Ok(Selection {
        warped,
        candidate: best,
    })
}
