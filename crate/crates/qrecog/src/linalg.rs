//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::rng::Rng;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// `e^{2πiω}`.
pub fn cis(omega: f64) -> C64 {
    C64::from_polar(1.0, 2.0 * std::f64::consts::PI * omega)
}

/// Circular distance on the unit circle of frequencies.
pub fn circ_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Reduces a frequency into `[0, 1)`.
pub fn wrap(omega: f64) -> f64 {
    let w = omega.rem_euclid(1.0);
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Vector of independent standard complex Gaussians.
pub fn gaussian_vector(n: usize, rng: &mut Rng) -> CVec {
    CVec::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    })
}

/// Haar-distributed unit vector.
pub fn haar_vector(n: usize, rng: &mut Rng) -> CVec {
    loop {
        let v = gaussian_vector(n, rng);
        let nv = v.norm();
        if nv > 1e-12 {
            return v / C64::from(nv);
        }
    }
}

/// Haar-distributed unitary via QR of a Gaussian matrix with the phase fix.
pub fn haar_unitary(n: usize, rng: &mut Rng) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    });
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / C64::from(d.norm()) } else { ONE };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// `max |A - B|` entrywise.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Operator (spectral) norm.
pub fn op_norm(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Orthonormalizes the columns of `a`, dropping directions with weight below `tol`.
pub fn orthonormal_columns(a: &CMat, tol: f64) -> CMat {
    let n = a.nrows();
    let mut cols: Vec<CVec> = Vec::new();
    for j in 0..a.ncols() {
        let mut v: CVec = a.column(j).into_owned();
        for _ in 0..2 {
            for c in &cols {
                let p = c.dotc(&v);
                v -= c * p;
            }
        }
        let nv = v.norm();
        if nv > tol {
            cols.push(v / C64::from(nv));
        }
    }
    if cols.is_empty() {
        return CMat::zeros(n, 0);
    }
    CMat::from_columns(&cols)
}

/// Projector `B B†` onto the span of orthonormal columns `b`.
pub fn projector_from_basis(b: &CMat) -> CMat {
    if b.ncols() == 0 {
        return CMat::zeros(b.nrows(), b.nrows());
    }
    b * b.adjoint()
}

/// Squared norm of the projection of `v` onto the span of orthonormal columns `b`.
pub fn projection_weight(b: &CMat, v: &CVec) -> f64 {
    if b.ncols() == 0 {
        return 0.0;
    }
    (b.adjoint() * v).norm_squared()
}

/// Reflection `I - 2 B B†` changing the sign of the span of `b`.
pub fn reflection_from_basis(b: &CMat) -> CMat {
    let n = b.nrows();
    CMat::identity(n, n) - projector_from_basis(b) * C64::from(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = Streams::new(1).stream("t", 0);
        let u = haar_unitary(6, &mut rng);
        let e = &u.adjoint() * &u - CMat::identity(6, 6);
        assert!(op_norm(&e) < 1e-12);
    }

    #[test]
    fn circular_distance_wraps() {
        assert!((circ_dist(0.95, 0.05) - 0.1).abs() < 1e-12);
        assert!((circ_dist(0.2, 0.7) - 0.5).abs() < 1e-12);
        assert_eq!(wrap(-0.25), 0.75);
    }
}
