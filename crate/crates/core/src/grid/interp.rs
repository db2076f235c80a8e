//! Periodic interpolation of node samples at arbitrary points.

use serde::{Deserialize, Serialize};

use super::ScalarField;

/// Fractional offsets this close to a node are treated as the node itself,
/// so lattice-commensurate lookups return stored samples bit-for-bit.
const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Bicubic,
    Bilinear,
}

#[inline]
fn split(coord: f64, n: usize) -> (i64, f64) {
    let u = coord * n as f64;
    let r = u.round();
    if (u - r).abs() < SNAP {
        return (r as i64, 0.0);
    }
    let base = u.floor();
    (base as i64, u - base)
}

#[inline]
fn cubic_weights(s: f64) -> [f64; 4] {
    [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    ]
}

#[inline]
fn wrap(i: i64, n: usize) -> usize {
    i.rem_euclid(n as i64) as usize
}

impl ScalarField {
    /// Value at an arbitrary point (any real coordinates, read modulo 1).
    pub fn interpolate(&self, x: f64, y: f64, method: Interpolation) -> f64 {
        let n = self.n;
        let (i0, sx) = split(x, n);
        let (j0, sy) = split(y, n);
        if sx == 0.0 && sy == 0.0 {
            return self.samples[wrap(i0, n) * n + wrap(j0, n)];
        }
        match method {
            Interpolation::Bicubic => {
                let wx = cubic_weights(sx);
                let wy = cubic_weights(sy);
                let mut acc = 0.0;
                for (a, wa) in wx.iter().enumerate() {
                    if *wa == 0.0 {
                        continue;
                    }
                    let row = wrap(i0 + a as i64 - 1, n) * n;
                    let mut inner = 0.0;
                    for (b, wb) in wy.iter().enumerate() {
                        inner += wb * self.samples[row + wrap(j0 + b as i64 - 1, n)];
                    }
                    acc += wa * inner;
                }
                acc
            }
            Interpolation::Bilinear => {
                let (i1, j1) = (wrap(i0 + 1, n), wrap(j0 + 1, n));
                let (i0, j0) = (wrap(i0, n), wrap(j0, n));
                let f = |i: usize, j: usize| self.samples[i * n + j];
                (1.0 - sx) * ((1.0 - sy) * f(i0, j0) + sy * f(i0, j1))
                    + sx * ((1.0 - sy) * f(i1, j0) + sy * f(i1, j1))
            }
        }
    }
}
