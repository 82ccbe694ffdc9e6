//! 2-D affine transforms stored as 3×3 matrices with a fixed `(0, 0, 1)` last row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Determinant magnitude below which the linear part is treated as singular.
pub const SINGULAR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    m: [[f64; 3]; 3],
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineTransform {
    pub fn identity() -> Self {
        Self::from_params(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)
    }

    /// `x' = a·x + b·y + tx`, `y' = c·x + d·y + ty`.
    pub fn from_params(a: f64, b: f64, tx: f64, c: f64, d: f64, ty: f64) -> Self {
        Self {
            m: [[a, b, tx], [c, d, ty], [0.0, 0.0, 1.0]],
        }
    }

    /// Builds from a full matrix; the last row must be exactly `(0, 0, 1)`.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self> {
        if m[2] != [0.0, 0.0, 1.0] {
            return Err(Error::Transform(format!(
                "last row must be (0, 0, 1), got {:?}",
                m[2]
            )));
        }
        Ok(Self { m })
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self::from_params(1.0, 0.0, tx, 0.0, 1.0, ty)
    }

    pub fn scaling(sx: f64, sy: f64) -> Self {
        Self::from_params(sx, 0.0, 0.0, 0.0, sy, 0.0)
    }

    /// Counter-clockwise rotation (in image coordinates, y down: visually clockwise)
    /// by `radians` about `(cx, cy)`.
    pub fn rotation_about(radians: f64, cx: f64, cy: f64) -> Self {
        let (s, c) = radians.sin_cos();
        Self::from_params(c, -s, cx - c * cx + s * cy, s, c, cy - s * cx - c * cy)
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    /// Row-major 9 entries.
    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        (
            m[0][0] * x + m[0][1] * y + m[0][2],
            m[1][0] * x + m[1][1] * y + m[1][2],
        )
    }

    /// Determinant of the upper-left 2×2 block (equals the full determinant).
    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn is_invertible(&self) -> bool {
        let d = self.det();
        d.is_finite() && d.abs() > SINGULAR_EPS
    }

    pub fn inverse(&self) -> Result<Self> {
        if !self.is_invertible() {
            return Err(Error::Transform(format!(
                "singular transform (det = {:e})",
                self.det()
            )));
        }
        let [[a, b, tx], [c, d, ty], _] = self.m;
        let det = self.det();
        let ia = d / det;
        let ib = -b / det;
        let ic = -c / det;
        let id = a / det;
        Ok(Self::from_params(
            ia,
            ib,
            -(ia * tx + ib * ty),
            ic,
            id,
            -(ic * tx + id * ty),
        ))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let a = &self.m;
        let b = &other.m;
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate().take(2) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        m[2] = [0.0, 0.0, 1.0];
        Self { m }
    }

    /// Frobenius norm over all nine entries, including the constant last row.
    pub fn frobenius_norm(&self) -> f64 {
        self.m
            .iter()
            .flat_map(|r| r.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Largest displacement between `self` and `other` over the four corners of a
    /// `width × height` frame.
    pub fn max_corner_error(&self, other: &Self, width: f64, height: f64) -> f64 {
        [(0.0, 0.0), (width, 0.0), (0.0, height), (width, height)]
            .iter()
            .map(|&(x, y)| {
                let (ax, ay) = self.apply(x, y);
                let (bx, by) = other.apply(x, y);
                (ax - bx).hypot(ay - by)
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_round_trips() {
        let f = AffineTransform::from_params(1.2, 0.3, 5.0, -0.1, 0.9, -7.0);
        let g = f.inverse().unwrap();
        let id = f.compose(&g);
        for (a, b) in id
            .to_row_major()
            .iter()
            .zip(AffineTransform::identity().to_row_major().iter())
        {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_rejected() {
        let f = AffineTransform::from_params(1.0, 2.0, 0.0, 2.0, 4.0, 0.0);
        assert!(matches!(f.inverse(), Err(Error::Transform(_))));
        assert!(AffineTransform::from_matrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.1, 0.0, 1.0]]).is_err());
    }

    #[test]
    fn rotation_fixes_center() {
        let r = AffineTransform::rotation_about(0.7, 10.0, 20.0);
        let (x, y) = r.apply(10.0, 20.0);
        assert!((x - 10.0).abs() < 1e-12 && (y - 20.0).abs() < 1e-12);
    }
}
