//! Quadrature on the unit sphere exact for spherical harmonics up to a given
//! degree, and the equispaced circle rule.

use std::f64::consts::PI;

use crate::point::Point;
use crate::quadrature::gauss_legendre;

/// Gauss-Legendre in `cos theta` times trapezoid in `phi`.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// The rule integrates every `Y_l^m` with `l <= exact_degree` exactly.
    pub exact_degree: usize,
}

impl SphereRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Order `p` of the rule (exact to degree `2p`).
    pub fn order(&self) -> usize {
        self.exact_degree / 2
    }
}

/// Rule of order `p`: `(p + 1)(2p + 1)` points exact to degree `2p`.
pub fn sphere_rule(p: usize) -> SphereRule {
    let (ts, wt) = gauss_legendre(p + 1);
    let nphi = 2 * p + 1;
    let mut points = Vec::with_capacity(ts.len() * nphi);
    let mut weights = Vec::with_capacity(ts.len() * nphi);
    for (t, w) in ts.iter().zip(&wt) {
        let s = (1.0 - t * t).sqrt();
        for j in 0..nphi {
            let phi = 2.0 * PI * j as f64 / nphi as f64;
            points.push([s * phi.cos(), s * phi.sin(), *t]);
            weights.push(w * 2.0 * PI / nphi as f64);
        }
    }
    SphereRule { points, weights, exact_degree: 2 * p }
}

/// Largest order whose product rule fits in `q` points.
pub fn sphere_order_for_count(q: usize) -> Option<usize> {
    if q == 0 {
        return None;
    }
    let mut p = 0;
    while (p + 2) * (2 * p + 3) <= q {
        p += 1;
    }
    Some(p)
}

/// `q` equispaced points on the unit circle with weights `2 pi / q`,
/// exact for `e^{i k theta}` with `|k| < q`.
pub fn circle_rule(q: usize) -> SphereRule {
    let points = (0..q)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / q as f64;
            [th.cos(), th.sin(), 0.0]
        })
        .collect();
    SphereRule {
        points,
        weights: vec![2.0 * PI / q as f64; q],
        exact_degree: q.saturating_sub(1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::harmonics::SphHarmTable;
    use num_complex::Complex64;

    #[test]
    fn weights_sum_to_sphere_area() {
        for p in 0..=12 {
            let r = sphere_rule(p);
            assert_eq!(r.len(), (p + 1) * (2 * p + 1));
            assert!((r.weights.iter().sum::<f64>() - 4.0 * PI).abs() < 1e-12);
            assert!(r.weights.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn order_five_kills_harmonics_to_degree_ten() {
        let r = sphere_rule(5);
        let tabs: Vec<_> = r.points.iter().map(|d| SphHarmTable::new(10, d).unwrap()).collect();
        let mut count = 0;
        for l in 1..=10usize {
            for m in -(l as i64)..=l as i64 {
                let s: Complex64 = tabs.iter().zip(&r.weights).map(|(t, w)| t.get(l, m) * *w).sum();
                assert!(s.norm() < 1e-11, "l={l} m={m} {s}");
                count += 1;
            }
        }
        assert_eq!(count, 120);
    }

    #[test]
    fn discrete_orthonormality() {
        let p = 6;
        let r = sphere_rule(p);
        let tabs: Vec<_> = r.points.iter().map(|d| SphHarmTable::new(p, d).unwrap()).collect();
        for l in 0..=p {
            for l2 in 0..=p {
                for m in -(l as i64)..=l as i64 {
                    for m2 in -(l2 as i64)..=l2 as i64 {
                        let s: Complex64 = tabs
                            .iter()
                            .zip(&r.weights)
                            .map(|(t, w)| t.get(l, m) * t.get(l2, m2).conj() * *w)
                            .sum();
                        let expect = if l == l2 && m == m2 { 1.0 } else { 0.0 };
                        assert!((s - expect).norm() < 1e-11);
                    }
                }
            }
        }
    }

    #[test]
    fn inverse_count() {
        assert_eq!(sphere_order_for_count(1), Some(0));
        assert_eq!(sphere_order_for_count(6), Some(1));
        assert_eq!(sphere_order_for_count(14), Some(1));
        assert_eq!(sphere_order_for_count(15), Some(2));
        assert_eq!(sphere_order_for_count(192), Some(9));
        assert_eq!(sphere_order_for_count(0), None);
    }

    #[test]
    fn circle_rule_exact_for_low_frequencies() {
        let p = 7;
        let r = circle_rule(2 * p + 1);
        for k in 1..=(2 * p) as i32 {
            let s: Complex64 = r
                .points
                .iter()
                .zip(&r.weights)
                .map(|(x, w)| Complex64::from_polar(*w, k as f64 * x[1].atan2(x[0])))
                .sum();
            assert!(s.norm() < 1e-13);
        }
        let q4 = circle_rule(4);
        let expect = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (x, e) in q4.points.iter().zip(expect) {
            assert!((x[0] - e[0]).abs() < 1e-15 && (x[1] - e[1]).abs() < 1e-15);
        }
    }
}
