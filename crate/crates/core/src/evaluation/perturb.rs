//! Gallery-side perturbations: HSV jitter, Poisson noise and small rotations.
//! All are seed-deterministic.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::image::{hsv_pixel_to_rgb, rgb_pixel_to_hsv, warp_affine, ColorSpace, Image};
use crate::seed;
use crate::transform::AffineTransform;

/// Scales H, S and V by independent factors from `[1 - u, 1 + u]`, with
/// `u ~ U(0, delta)` drawn per channel. Hue wraps; S and V clamp.
pub fn perturb_hsv(img: &Image, delta: f64, seed_value: u64) -> Result<Image> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Parameter(format!("delta must lie in [0, 1), got {delta}")));
    }
    let mut rng = seed::rng(seed_value, "perturb/hsv", 0);
    let mut factors = [1.0; 3];
    for f in &mut factors {
        let u = rng.gen::<f64>() * delta;
        *f = 1.0 + u * rng.gen_range(-1.0..=1.0);
    }
    let rgb = img.rgb()?;
    let n = rgb.pixel_count();
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        let (h, s, v) = rgb_pixel_to_hsv(rgb.data()[i], rgb.data()[n + i], rgb.data()[2 * n + i]);
        let (r, g, b) = hsv_pixel_to_rgb(
            (h * factors[0]).rem_euclid(1.0),
            (s * factors[1]).clamp(0.0, 1.0),
            (v * factors[2]).clamp(0.0, 1.0),
        );
        data[i] = r;
        data[n + i] = g;
        data[2 * n + i] = b;
    }
    let out = Image::new(rgb.width(), rgb.height(), ColorSpace::Rgb, data)?;
    match img.valid_mask() {
        Some(m) => out.with_valid_mask(m.to_vec()),
        None => Ok(out),
    }
}

/// Photon-count noise: a peak `λ` is drawn uniformly from `peak_range`, then each
/// sample `p` becomes `Poisson(p·λ) / λ`, clamped to `[0, 1]`.
pub fn perturb_poisson(img: &Image, peak_range: (f64, f64), seed_value: u64) -> Result<Image> {
    let (lo, hi) = peak_range;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::Parameter(format!("invalid Poisson peak range ({lo}, {hi})")));
    }
    let mut rng = seed::rng(seed_value, "perturb/poisson", 0);
    let peak = if hi > lo { rng.gen_range(lo..hi) } else { lo };
    poisson_with_peak(img, peak, &mut rng)
}

pub(crate) fn poisson_with_peak(img: &Image, peak: f64, rng: &mut seed::Rng) -> Result<Image> {
    if !(peak > 0.0) {
        return Err(Error::Parameter(format!("Poisson peak must be positive, got {peak}")));
    }
    let data = img
        .data()
        .iter()
        .map(|&p| {
            let lambda = p * peak;
            if lambda <= 0.0 {
                0.0
            } else {
                let k: f64 = Poisson::new(lambda).expect("positive rate").sample(rng);
                (k / peak).clamp(0.0, 1.0)
            }
        })
        .collect();
    let out = Image::new(img.width(), img.height(), img.colorspace(), data)?;
    match img.valid_mask() {
        Some(m) => out.with_valid_mask(m.to_vec()),
        None => Ok(out),
    }
}

/// Rotates about the image center by an angle drawn uniformly from
/// `[-max_deg, max_deg]`; uncovered pixels become invalid.
pub fn perturb_rotate(img: &Image, max_deg: f64, seed_value: u64) -> Result<Image> {
    let mut rng = seed::rng(seed_value, "perturb/rotate", 0);
    let deg = if max_deg > 0.0 {
        rng.gen_range(-max_deg..=max_deg)
    } else {
        0.0
    };
    rotate_by(img, deg)
}

/// Rotation by an explicit angle, about `((w - 1) / 2, (h - 1) / 2)`.
pub fn rotate_by(img: &Image, degrees: f64) -> Result<Image> {
    let cx = (img.width() as f64 - 1.0) / 2.0;
    let cy = (img.height() as f64 - 1.0) / 2.0;
    let rot = AffineTransform::rotation_about(degrees.to_radians(), cx, cy);
    warp_affine(img, &rot, img.width(), img.height())
}
