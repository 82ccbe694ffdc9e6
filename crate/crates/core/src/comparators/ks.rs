//! Local colour-distribution agreement: per-channel two-sample KS tests on HSV
//! neighbourhoods.

use rayon::prelude::*;

use super::{grid_positions, joint_valid, ComparatorConfig, Grid};
use crate::error::Result;
use crate::image::{HeatMap, Image};

/// Neighbourhoods with fewer valid samples than this are left undefined.
const MIN_SAMPLES: usize = 8;
/// Below this λ the asymptotic series is 1 to double precision.
const LAMBDA_FLOOR: f64 = 0.2;

/// `max_a |Q(a, A) − Q(a, B)|` over the pooled values, where `Q(a, S)` is the
/// fraction of `S` at or below `a`. Both inputs must be sorted ascending.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample p-value with the small-sample correction
/// `λ = (√nₑ + 0.12 + 0.11/√nₑ)·D`, `nₑ = n₁n₂/(n₁ + n₂)`.
pub fn ks_pvalue(d: f64, n1: usize, n2: usize) -> f64 {
    let ne = (n1 * n2) as f64 / (n1 + n2) as f64;
    let sq = ne.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    if lambda < LAMBDA_FLOOR {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-12 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Raw map (low = tampered): the mean over H, S and V of the KS p-value between
/// the `(2r + 1)²` neighbourhoods of `P` and `C`, on a strided grid.
pub fn thm_hsv_ks(p: &Image, c: &Image, cfg: &ComparatorConfig) -> Result<HeatMap> {
    let valid = joint_valid(p, c)?;
    let (w, h) = (p.width(), p.height());
    let hp = p.hsv()?;
    let hc = c.hsv()?;
    let r = cfg.hist_radius;
    let xs = grid_positions(w - 1, cfg.ks_stride());
    let ys = grid_positions(h - 1, cfg.ks_stride());

    let nodes: Vec<Option<f64>> = ys
        .par_iter()
        .flat_map_iter(|&y| {
            let (hp, hc, valid) = (&hp, &hc, &valid);
            let xs = &xs;
            let mut sa = Vec::with_capacity((2 * r + 1).pow(2));
            let mut sb = Vec::with_capacity((2 * r + 1).pow(2));
            xs.iter()
                .map(move |&x| {
                    let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
                    let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
                    let mut total = 0.0;
                    for ch in 0..3 {
                        sa.clear();
                        sb.clear();
                        let (pa, pb) = (hp.plane(ch), hc.plane(ch));
                        for yy in y0..y1 {
                            for xx in x0..x1 {
                                let i = yy * w + xx;
                                if valid[i] {
                                    sa.push(pa[i]);
                                    sb.push(pb[i]);
                                }
                            }
                        }
                        if sa.len() < MIN_SAMPLES {
                            return None;
                        }
                        sa.sort_unstable_by(f64::total_cmp);
                        sb.sort_unstable_by(f64::total_cmp);
                        total += ks_pvalue(ks_statistic(&sa, &sb), sa.len(), sb.len());
                    }
                    Some(total / 3.0)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let grid = Grid {
        xs: xs.iter().map(|v| *v as f64).collect(),
        ys: ys.iter().map(|v| *v as f64).collect(),
        valid: nodes.iter().map(Option::is_some).collect(),
        values: nodes.iter().map(|v| v.unwrap_or(0.0)).collect(),
    };
    grid.upsample(w, h, &valid)
}
