//! Legendre polynomials and orthonormal complex spherical harmonics.
//!
//! `Y_l^m(theta, phi) = N_l^|m|(cos theta) e^{i m phi}` with the normalized
//! associated Legendre functions `N`, no Condon-Shortley phase, so that
//! `Y_l^{-m} = conj(Y_l^m)` and the addition theorem reads
//! `sum_m Y_l^m(x) conj(Y_l^m(y)) = (2l+1)/(4 pi) P_l(x . y)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::point::Point;

/// Largest supported harmonic degree.
pub const MAX_DEGREE: usize = 64;

/// `P_l(t)` by the three-term recurrence.
pub fn legendre(l: usize, t: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, t);
    if l == 0 {
        return p0;
    }
    for k in 1..l {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * t * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// `P_0..=P_p` at `t` into `out[..=p]`.
pub fn legendre_all(p: usize, t: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if p >= 1 {
        out[1] = t;
    }
    for k in 1..p {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0) * t * out[k] - kf * out[k - 1]) / (kf + 1.0);
    }
}

/// Values and derivatives of `P_0..=P_p`, derivatives from
/// `P'_{l+1} = P'_{l-1} + (2l+1) P_l` (stable at `t = +-1`).
pub fn legendre_with_derivatives(p: usize, t: f64, val: &mut [f64], der: &mut [f64]) {
    legendre_all(p, t, val);
    der[0] = 0.0;
    if p >= 1 {
        der[1] = 1.0;
    }
    for l in 1..p {
        der[l + 1] = der[l - 1] + (2 * l + 1) as f64 * val[l];
    }
}

fn angles(dir: &Point) -> (f64, f64, f64) {
    let r = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    let t = (dir[2] / r).clamp(-1.0, 1.0);
    let s = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt() / r;
    let phi = dir[1].atan2(dir[0]);
    (t, s, phi)
}

/// All `Y_l^m` with `0 <= m <= l <= degree` at one direction.
#[derive(Debug, Clone)]
pub struct SphHarmTable {
    degree: usize,
    values: Vec<Complex64>,
}

impl SphHarmTable {
    pub fn new(degree: usize, dir: &Point) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::InvalidParameter(format!(
                "harmonic degree {degree} exceeds the cap {MAX_DEGREE}"
            )));
        }
        let (t, s, phi) = angles(dir);
        let stride = degree + 1;
        let mut nlm = vec![0.0; stride * stride];
        let idx = |l: usize, m: usize| l * stride + m;
        nlm[idx(0, 0)] = 1.0 / (4.0 * PI).sqrt();
        for m in 0..=degree {
            if m > 0 {
                let mf = m as f64;
                nlm[idx(m, m)] = nlm[idx(m - 1, m - 1)] * ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
            }
            if m < degree {
                nlm[idx(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * t * nlm[idx(m, m)];
            }
            for l in (m + 2)..=degree {
                let (lf, mf) = (l as f64, m as f64);
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
                nlm[idx(l, m)] = a * (t * nlm[idx(l - 1, m)] - b * nlm[idx(l - 2, m)]);
            }
        }
        let values = (0..stride * stride)
            .map(|k| {
                let m = k % stride;
                Complex64::from_polar(1.0, m as f64 * phi) * nlm[k]
            })
            .collect();
        Ok(SphHarmTable { degree, values })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// `Y_l^m` for `|m| <= l <= degree`.
    pub fn get(&self, l: usize, m: i64) -> Complex64 {
        let v = self.values[l * (self.degree + 1) + m.unsigned_abs() as usize];
        if m < 0 {
            v.conj()
        } else {
            v
        }
    }
}

/// Single spherical harmonic `Y_l^m` at a unit direction.
pub fn sph_harm(l: usize, m: i64, dir: &Point) -> Result<Complex64> {
    if m.unsigned_abs() as usize > l {
        return Err(Error::InvalidParameter(format!("|m| = {} exceeds l = {l}", m.abs())));
    }
    Ok(SphHarmTable::new(l, dir)?.get(l, m))
}
