//! Quadrature by expansion: local expansions of layer potentials about an
//! off-surface center, evaluated back at the on-surface target.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::Dim;
use crate::point::{self, Point};

use super::harmonics::{legendre_with_derivatives, SphHarmTable, MAX_DEGREE};
use super::sphere_rule::sphere_rule;
use super::{KernelKind, Layer};

/// Value at `x` of the order-`p` local expansion about `c` of the kernel
/// generated by a unit source at `y` (normal `n_y`). `y` must lie outside
/// the ball `|z - c| <= |x - c|`; this is not checked here.
#[inline]
pub fn qbx_entry(kind: KernelKind, x: &Point, c: &Point, y: &Point, n_y: &Point, p: usize) -> f64 {
    match kind.dim {
        Dim::Two => entry_2d(kind.layer, x, c, y, n_y, p),
        Dim::Three => entry_3d(kind.layer, x, c, y, n_y, p),
    }
}

#[inline]
fn entry_2d(layer: Layer, x: &Point, c: &Point, y: &Point, n_y: &Point, p: usize) -> f64 {
    let wc = Complex64::new(y[0] - c[0], y[1] - c[1]);
    let t = Complex64::new(x[0] - c[0], x[1] - c[1]) / wc;
    match layer {
        Layer::Single => {
            let mut s = 0.0;
            let mut pow = t;
            for j in 1..=p {
                s += pow.re / j as f64;
                pow *= t;
            }
            -(wc.norm().ln() - s) / (2.0 * PI)
        }
        Layer::Double => {
            let nu = Complex64::new(n_y[0], n_y[1]);
            let mut s = Complex64::new(1.0, 0.0);
            let mut pow = Complex64::new(1.0, 0.0);
            for _ in 1..=p {
                pow *= t;
                s += pow;
            }
            -(nu / wc * s).re / (2.0 * PI)
        }
    }
}

#[inline]
fn entry_3d(layer: Layer, x: &Point, c: &Point, y: &Point, n_y: &Point, p: usize) -> f64 {
    let dx = point::sub(x, c);
    let dy = point::sub(y, c);
    let rx = point::norm(&dx);
    let ry = point::norm(&dy);
    let inv_ry = 1.0 / ry;
    let yh = point::scale(&dy, inv_ry);
    if rx == 0.0 {
        // only the l = 0 term survives
        return match layer {
            Layer::Single => inv_ry / (4.0 * PI),
            Layer::Double => -point::dot(n_y, &yh) * inv_ry * inv_ry / (4.0 * PI),
        };
    }
    let xh = point::scale(&dx, 1.0 / rx);
    let u = point::dot(&xh, &yh).clamp(-1.0, 1.0);
    let ratio = rx * inv_ry;
    // Legendre values and derivatives advanced in place
    let (mut p0, mut p1) = (1.0, u);
    match layer {
        Layer::Single => {
            let mut s = inv_ry;
            let mut pow = inv_ry;
            for l in 1..=p {
                pow *= ratio;
                s += pow * p1;
                let lf = l as f64;
                let p2 = ((2.0 * lf + 1.0) * u * p1 - lf * p0) / (lf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            s / (4.0 * PI)
        }
        Layer::Double => {
            let ny = point::dot(n_y, &yh);
            let nx = point::dot(n_y, &xh) - u * ny;
            let (mut d0, mut d1) = (0.0, 1.0);
            let mut pow = inv_ry * inv_ry;
            let mut s = -ny * pow;
            for l in 1..=p {
                pow *= ratio;
                s += pow * (-((l + 1) as f64) * p1 * ny + d1 * nx);
                let lf = l as f64;
                let p2 = ((2.0 * lf + 1.0) * u * p1 - lf * p0) / (lf + 1.0);
                let d2 = d0 + (2.0 * lf + 1.0) * p1;
                p0 = p1;
                p1 = p2;
                d0 = d1;
                d1 = d2;
            }
            s / (4.0 * PI)
        }
    }
}

/// Coefficients of a local expansion about `center`.
#[derive(Debug, Clone)]
pub struct LocalExpansion {
    pub kind: KernelKind,
    pub center: Point,
    pub radius: f64,
    pub order: usize,
    /// 2D: `a_j`, `u(z) = Re sum_j a_j (z - c)^j`. 3D: `M_l^m` at index
    /// `l^2 + l + m`, `u(x) = Re sum M_l^m r^l Y_l^m(x_hat)`.
    pub coefficients: Vec<Complex64>,
}

fn check_order(p: usize) -> Result<()> {
    if p > MAX_DEGREE {
        return Err(Error::InvalidParameter(format!("QBX order {p} exceeds the cap {MAX_DEGREE}")));
    }
    Ok(())
}

/// Form the local expansion of `sum_s strength_s K(., y_s)` about `center`.
/// `strengths` are density values times quadrature weights.
pub fn qbx_expand(
    kind: KernelKind,
    sources: &[Point],
    normals: &[Point],
    strengths: &[f64],
    center: &Point,
    radius: f64,
    order: usize,
) -> Result<LocalExpansion> {
    check_order(order)?;
    if sources.len() != strengths.len() || (kind.layer == Layer::Double && normals.len() != sources.len()) {
        return Err(Error::Dimension { expected: sources.len(), got: strengths.len().min(normals.len()) });
    }
    let limit = radius * (1.0 - 1e-12);
    if let Some(k) = sources.iter().position(|y| point::dist(y, center) < limit) {
        return Err(Error::AccuracyViolation { source_index: k });
    }
    let zero = [0.0; 3];
    let normal = |k: usize| if kind.layer == Layer::Double { normals[k] } else { zero };
    let coefficients = match kind.dim {
        Dim::Two => {
            let mut a = vec![Complex64::new(0.0, 0.0); order + 1];
            for (k, y) in sources.iter().enumerate() {
                let s = strengths[k];
                let wc = Complex64::new(y[0] - center[0], y[1] - center[1]);
                let inv = 1.0 / wc;
                match kind.layer {
                    Layer::Single => {
                        a[0] -= s * wc.norm().ln() / (2.0 * PI);
                        let mut pow = inv;
                        for (j, aj) in a.iter_mut().enumerate().skip(1) {
                            *aj += s * pow / (2.0 * PI * j as f64);
                            pow *= inv;
                        }
                    }
                    Layer::Double => {
                        let nu = Complex64::new(normal(k)[0], normal(k)[1]);
                        let mut pow = inv;
                        for aj in a.iter_mut() {
                            *aj -= s * nu * pow / (2.0 * PI);
                            pow *= inv;
                        }
                    }
                }
            }
            a
        }
        Dim::Three => {
            // project each degree onto Y_l^m with a rule exact to degree 2 * order
            let rule = sphere_rule(order);
            let mut m = vec![Complex64::new(0.0, 0.0); (order + 1) * (order + 1)];
            let mut f = vec![0.0; order + 1];
            let mut pl = [0.0; MAX_DEGREE + 2];
            let mut dpl = [0.0; MAX_DEGREE + 2];
            for (d, w) in rule.points.iter().zip(&rule.weights) {
                f.iter_mut().for_each(|v| *v = 0.0);
                for (k, y) in sources.iter().enumerate() {
                    let dy = point::sub(y, center);
                    let ry = point::norm(&dy);
                    let yh = point::scale(&dy, 1.0 / ry);
                    let u = point::dot(d, &yh).clamp(-1.0, 1.0);
                    legendre_with_derivatives(order, u, &mut pl, &mut dpl);
                    let s = strengths[k] / (4.0 * PI);
                    match kind.layer {
                        Layer::Single => {
                            let mut pow = 1.0 / ry;
                            for l in 0..=order {
                                f[l] += s * pow * pl[l];
                                pow /= ry;
                            }
                        }
                        Layer::Double => {
                            let n = normal(k);
                            let ny = point::dot(&n, &yh);
                            let nx = point::dot(&n, d) - u * ny;
                            let mut pow = 1.0 / (ry * ry);
                            for l in 0..=order {
                                f[l] += s * pow * (-((l + 1) as f64) * pl[l] * ny + dpl[l] * nx);
                                pow /= ry;
                            }
                        }
                    }
                }
                let tab = SphHarmTable::new(order, d)?;
                for l in 0..=order {
                    for mm in -(l as i64)..=l as i64 {
                        m[l * l + (l as i64 + mm) as usize] += tab.get(l, mm).conj() * (w * f[l]);
                    }
                }
            }
            m
        }
    };
    Ok(LocalExpansion { kind, center: *center, radius, order, coefficients })
}

/// Evaluate a local expansion at a point inside its ball.
pub fn qbx_eval(exp: &LocalExpansion, x: &Point) -> Result<f64> {
    let d = point::sub(x, &exp.center);
    let r = point::norm(&d);
    if r > exp.radius * (1.0 + 1e-12) {
        return Err(Error::Geometry(format!(
            "evaluation point at distance {r} lies outside the expansion radius {}",
            exp.radius
        )));
    }
    match exp.kind.dim {
        Dim::Two => {
            let z = Complex64::new(d[0], d[1]);
            // Horner
            let mut acc = Complex64::new(0.0, 0.0);
            for a in exp.coefficients.iter().rev() {
                acc = acc * z + a;
            }
            Ok(acc.re)
        }
        Dim::Three => {
            let mut s = exp.coefficients[0].re * (0.25 / PI).sqrt();
            if r == 0.0 {
                return Ok(s);
            }
            let tab = SphHarmTable::new(exp.order, &d)?;
            let mut pow = 1.0;
            s = 0.0;
            for l in 0..=exp.order {
                let mut t = Complex64::new(0.0, 0.0);
                for m in -(l as i64)..=l as i64 {
                    t += exp.coefficients[l * l + (l as i64 + m) as usize] * tab.get(l, m);
                }
                s += pow * t.re;
                pow *= r;
            }
            Ok(s)
        }
    }
}
