//! Laplace Green functions, layer kernels, and the expansion machinery used
//! by QBX and the proxy error model.

mod expansion;
mod harmonics;
mod qbx;
mod sphere_rule;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Dim;
use crate::point::{self, Point};

pub use expansion::{
    poisson_kernel, poisson_kernel_2d, poisson_series, poisson_series_2d, truncated_multipole,
    truncated_multipole_2d, multipole_bound, multipole_bound_2d,
};
pub use harmonics::{legendre, legendre_all, legendre_with_derivatives, sph_harm, SphHarmTable, MAX_DEGREE};
pub use qbx::{qbx_entry, qbx_eval, qbx_expand, LocalExpansion};
pub use sphere_rule::{circle_rule, sphere_order_for_count, sphere_rule, SphereRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Single,
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelKind {
    pub dim: Dim,
    pub layer: Layer,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [
        KernelKind { dim: Dim::Two, layer: Layer::Single },
        KernelKind { dim: Dim::Two, layer: Layer::Double },
        KernelKind { dim: Dim::Three, layer: Layer::Single },
        KernelKind { dim: Dim::Three, layer: Layer::Double },
    ];

    pub fn new(dim: Dim, layer: Layer) -> Self {
        KernelKind { dim, layer }
    }

    /// Plain (non-QBX) kernel value; `n_y` is ignored for the single layer.
    pub fn eval(&self, x: &Point, y: &Point, n_y: &Point) -> Result<f64> {
        match self.layer {
            Layer::Single => green(self.dim, x, y),
            Layer::Double => dlp_kernel(self.dim, x, y, n_y),
        }
    }
}

#[inline]
pub(crate) fn green_unchecked(dim: Dim, x: &Point, y: &Point) -> f64 {
    let r = point::dist(x, y);
    match dim {
        Dim::Two => -r.ln() / (2.0 * PI),
        Dim::Three => 1.0 / (4.0 * PI * r),
    }
}

#[inline]
pub(crate) fn dlp_unchecked(dim: Dim, x: &Point, y: &Point, n_y: &Point) -> f64 {
    let d = point::sub(x, y);
    let r2 = point::dot(&d, &d);
    match dim {
        Dim::Two => point::dot(n_y, &d) / (2.0 * PI * r2),
        Dim::Three => point::dot(n_y, &d) / (4.0 * PI * r2 * r2.sqrt()),
    }
}

/// Free-space Green function `-(1/2pi) log r` in 2D, `1/(4 pi r)` in 3D.
pub fn green(dim: Dim, x: &Point, y: &Point) -> Result<f64> {
    if x == y {
        return Err(Error::SingularEvaluation);
    }
    Ok(green_unchecked(dim, x, y))
}

/// Double-layer kernel `n_y . grad_y G(x, y)`.
pub fn dlp_kernel(dim: Dim, x: &Point, y: &Point, n_y: &Point) -> Result<f64> {
    if x == y {
        return Err(Error::SingularEvaluation);
    }
    Ok(dlp_unchecked(dim, x, y, n_y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_distance_values() {
        let o = [0.0; 3];
        assert!((green(Dim::Three, &o, &[1.0, 0.0, 0.0]).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-16);
        assert_eq!(green(Dim::Two, &o, &[0.0, 1.0, 0.0]).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((green(Dim::Two, &o, &[e, 0.0, 0.0]).unwrap() + 1.0 / (2.0 * PI)).abs() < 1e-16);
    }

    #[test]
    fn coincident_points_rejected() {
        let x = [0.3, 0.1, 0.0];
        assert!(matches!(green(Dim::Two, &x, &x), Err(Error::SingularEvaluation)));
        assert!(matches!(dlp_kernel(Dim::Three, &x, &x, &[1.0, 0.0, 0.0]), Err(Error::SingularEvaluation)));
    }

    #[test]
    fn double_layer_constant_on_circle() {
        let rr = 1.7;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (a, b): (f64, f64) = (rng.gen_range(0.0..6.28), rng.gen_range(0.0..6.28));
            if (a - b).abs() < 1e-3 {
                continue;
            }
            let x = [rr * a.cos(), rr * a.sin(), 0.0];
            let y = [rr * b.cos(), rr * b.sin(), 0.0];
            let n = [b.cos(), b.sin(), 0.0];
            let v = dlp_kernel(Dim::Two, &x, &y, &n).unwrap();
            assert!((v + 1.0 / (4.0 * PI * rr)).abs() < 1e-13);
        }
    }

    #[test]
    fn double_layer_orthogonal_normal_vanishes() {
        let x = [1.0, 2.0, 3.0];
        let y = [0.0, 2.0, 3.0];
        assert_eq!(dlp_kernel(Dim::Three, &x, &y, &[0.0, 0.6, 0.8]).unwrap(), 0.0);
    }

    #[test]
    fn double_layer_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dim in [Dim::Two, Dim::Three] {
            for _ in 0..100 {
                let mut x = [0.0; 3];
                let mut y = [0.0; 3];
                let mut n = [0.0; 3];
                for k in 0..dim.n() {
                    x[k] = rng.gen_range(-1.0..1.0);
                    y[k] = rng.gen_range(-1.0..1.0);
                    n[k] = rng.gen_range(-1.0..1.0);
                }
                if point::dist(&x, &y) < 0.2 {
                    continue;
                }
                n = point::scale(&n, 1.0 / point::norm(&n));
                let h = 1e-5;
                let fd = (green(dim, &x, &point::add(&y, &point::scale(&n, h))).unwrap()
                    - green(dim, &x, &point::sub(&y, &point::scale(&n, h))).unwrap())
                    / (2.0 * h);
                let v = dlp_kernel(dim, &x, &y, &n).unwrap();
                assert!((fd - v).abs() < 1e-6, "{fd} vs {v}");
            }
        }
    }

    #[test]
    fn kinds_enumerable() {
        assert_eq!(KernelKind::ALL.len(), 4);
        let x = [2.0, 0.0, 0.0];
        let y = [0.0, 0.0, 0.0];
        let n = [1.0, 0.0, 0.0];
        for k in KernelKind::ALL {
            assert!(k.eval(&x, &y, &n).unwrap().is_finite());
        }
    }
}
