//! Exterior Poisson kernels and truncated multipole expansions of the
//! Laplace Green function.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::point::{self, Point};

use super::harmonics::legendre_all;

fn exterior_check(rx: f64, radius: f64) -> Result<()> {
    if !(radius > 0.0) || !(rx > radius) {
        return Err(Error::Geometry(format!(
            "point at distance {rx} is not outside the sphere of radius {radius}"
        )));
    }
    Ok(())
}

/// Exterior Poisson kernel `(|x-c|^2 - R^2) / (4 pi R |x-p|^3)` for `p` on the
/// sphere of radius `R` about `c`.
pub fn poisson_kernel(x: &Point, p: &Point, c: &Point, radius: f64) -> Result<f64> {
    let rx = point::dist(x, c);
    exterior_check(rx, radius)?;
    let d = point::dist(x, p);
    Ok((rx * rx - radius * radius) / (4.0 * PI * radius * d * d * d))
}

/// Circle analogue `(|x-c|^2 - R^2) / (2 pi R |x-p|^2)`.
pub fn poisson_kernel_2d(x: &Point, p: &Point, c: &Point, radius: f64) -> Result<f64> {
    let rx = point::dist(x, c);
    exterior_check(rx, radius)?;
    let d = point::dist(x, p);
    Ok((rx * rx - radius * radius) / (2.0 * PI * radius * d * d))
}

/// Harmonic series of the exterior Poisson kernel truncated at degree `order`.
pub fn poisson_series(x: &Point, p: &Point, c: &Point, radius: f64, order: usize) -> Result<f64> {
    let dx = point::sub(x, c);
    let rx = point::norm(&dx);
    exterior_check(rx, radius)?;
    let dp = point::sub(p, c);
    let u = (point::dot(&dx, &dp) / (rx * point::norm(&dp))).clamp(-1.0, 1.0);
    let mut pl = vec![0.0; order + 1];
    legendre_all(order, u, &mut pl);
    let ratio = radius / rx;
    let mut s = 0.0;
    let mut pow = ratio;
    for (l, v) in pl.iter().enumerate() {
        s += (2 * l + 1) as f64 * pow * v;
        pow *= ratio;
    }
    Ok(s / (4.0 * PI * radius * radius))
}

/// Fourier series of the circle Poisson kernel truncated at frequency `order`.
pub fn poisson_series_2d(x: &Point, p: &Point, c: &Point, radius: f64, order: usize) -> Result<f64> {
    let dx = point::sub(x, c);
    let rx = point::norm(&dx);
    exterior_check(rx, radius)?;
    let dp = point::sub(p, c);
    let delta = dx[1].atan2(dx[0]) - dp[1].atan2(dp[0]);
    let ratio = radius / rx;
    let mut s = 1.0;
    let mut pow = 1.0;
    for j in 1..=order {
        pow *= ratio;
        s += 2.0 * pow * (j as f64 * delta).cos();
    }
    Ok(s / (2.0 * PI * radius))
}

fn ordered_radii(x: &Point, y: &Point, c: &Point) -> Result<(Point, Point, f64, f64)> {
    let dx = point::sub(x, c);
    let dy = point::sub(y, c);
    let (rx, ry) = (point::norm(&dx), point::norm(&dy));
    if !(ry < rx) {
        return Err(Error::Geometry(format!(
            "multipole expansion needs |y-c| < |x-c|, got {ry} >= {rx}"
        )));
    }
    Ok((dx, dy, rx, ry))
}

/// `(1/4 pi) sum_{l<=p} r_y^l / r_x^{l+1} P_l(cos gamma)`.
pub fn truncated_multipole(x: &Point, y: &Point, c: &Point, p: usize) -> Result<f64> {
    let (dx, dy, rx, ry) = ordered_radii(x, y, c)?;
    if ry == 0.0 {
        return Ok(1.0 / (4.0 * PI * rx));
    }
    let u = (point::dot(&dx, &dy) / (rx * ry)).clamp(-1.0, 1.0);
    let mut pl = vec![0.0; p + 1];
    legendre_all(p, u, &mut pl);
    let t = ry / rx;
    let mut pow = 1.0 / rx;
    let mut s = 0.0;
    for v in &pl {
        s += pow * v;
        pow *= t;
    }
    Ok(s / (4.0 * PI))
}

/// `-(1/2 pi)[log r_x - sum_{j<=p} Re(w^j)/j]`, `w = (y-c)/(x-c)` as complex numbers.
pub fn truncated_multipole_2d(x: &Point, y: &Point, c: &Point, p: usize) -> Result<f64> {
    let (dx, dy, rx, ry) = ordered_radii(x, y, c)?;
    let zx = num_complex::Complex64::new(dx[0], dx[1]);
    let zy = num_complex::Complex64::new(dy[0], dy[1]);
    let mut s = rx.ln();
    if ry > 0.0 {
        let w = zy / zx;
        let mut pow = w;
        for j in 1..=p {
            s -= pow.re / j as f64;
            pow *= w;
        }
    }
    Ok(-s / (2.0 * PI))
}

/// Truncation bound `(1/(4 pi (r_x - r_y))) (r_y/r_x)^{p+1}`.
pub fn multipole_bound(rx: f64, ry: f64, p: usize) -> f64 {
    (ry / rx).powi(p as i32 + 1) / (4.0 * PI * (rx - ry))
}

/// Truncation bound `(1/(2 pi (p+1))) tau^{p+1} / (1 - tau)`, `tau = r_y/r_x`.
pub fn multipole_bound_2d(rx: f64, ry: f64, p: usize) -> f64 {
    let tau = ry / rx;
    tau.powi(p as i32 + 1) / (2.0 * PI * (p as f64 + 1.0) * (1.0 - tau))
}
