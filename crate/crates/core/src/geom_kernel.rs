//! Constant-curvature trigonometry, flat-cone distances and the sampled
//! CAT(κ) comparison check.
//!
//! Everything here is a pure function of its arguments and generic over the
//! scalar type. Curvature is restricted to κ ≥ 0.

use num_traits::{Float, FloatConst};
use std::fmt::Debug;
use thiserror::Error;

/// Floating-point scalar accepted by the closed-form kernels.
pub trait Scalar: Float + FloatConst + Debug + Send + Sync + 'static {
    fn lit(x: f64) -> Self {
        Self::from(x).expect("literal fits the scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("invalid triangle: sides ({a}, {b}, {c}) violate the triangle inequality")]
    InvalidTriangle { a: f64, b: f64, c: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

fn f<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Geodesic triangle in the model surface of curvature `kappa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelTriangle<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub kappa: T,
}

impl<T: Scalar> ModelTriangle<T> {
    pub fn new(a: T, b: T, c: T, kappa: T) -> Result<Self, GeomError> {
        let t = Self { a, b, c, kappa };
        t.validate()?;
        Ok(t)
    }

    /// Checks nonnegativity, the triangle inequality and the perimeter bound.
    pub fn validate(&self) -> Result<(), GeomError> {
        let (a, b, c, k) = (self.a, self.b, self.c, self.kappa);
        if !(a.is_finite() && b.is_finite() && c.is_finite() && k.is_finite()) {
            return Err(GeomError::InvalidInput("non-finite triangle data".into()));
        }
        if k < T::zero() {
            return Err(GeomError::Domain("negative curvature is not supported".into()));
        }
        if a < T::zero() || b < T::zero() || c < T::zero() {
            return Err(GeomError::InvalidTriangle { a: f(a), b: f(b), c: f(c) });
        }
        let p = a + b + c;
        let slack = T::lit(64.0) * T::epsilon() * p;
        if a > b + c + slack || b > a + c + slack || c > a + b + slack {
            return Err(GeomError::InvalidTriangle { a: f(a), b: f(b), c: f(c) });
        }
        if k > T::zero() {
            let bound = T::lit(2.0) * T::PI() / k.sqrt();
            if p >= bound {
                return Err(GeomError::Domain(format!(
                    "perimeter {} reaches the bound {} for curvature {}",
                    f(p),
                    f(bound),
                    f(k)
                )));
            }
        }
        Ok(())
    }

    pub fn perimeter(&self) -> T {
        self.a + self.b + self.c
    }

    /// Angle opposite side `c`.
    pub fn angle_c(&self) -> T {
        half_angle(self.a, self.b, self.c, self.kappa)
    }

    /// Angles opposite sides `a`, `b`, `c`.
    pub fn angles(&self) -> [T; 3] {
        [
            half_angle(self.b, self.c, self.a, self.kappa),
            half_angle(self.c, self.a, self.b, self.kappa),
            half_angle(self.a, self.b, self.c, self.kappa),
        ]
    }

    /// Area in the model surface (spherical excess over κ when κ > 0).
    pub fn area(&self) -> T {
        if self.kappa > T::zero() {
            let [x, y, z] = self.angles();
            (x + y + z - T::PI()) / self.kappa
        } else {
            let s = self.perimeter() / T::lit(2.0);
            let h = (s * pos(s - self.a) * pos(s - self.b) * pos(s - self.c)).sqrt();
            h
        }
    }
}

fn pos<T: Scalar>(x: T) -> T {
    x.max(T::zero())
}

/// Half-angle (l'Huilier type) evaluation of the angle opposite `c`.
fn half_angle<T: Scalar>(a: T, b: T, c: T, kappa: T) -> T {
    let two = T::lit(2.0);
    let sa = pos(b + c - a) / two;
    let sb = pos(a + c - b) / two;
    let sc = pos(a + b - c) / two;
    let s = (a + b + c) / two;
    if kappa > T::zero() {
        let r = kappa.sqrt();
        let num = ((sa * r).sin() * (sb * r).sin()).max(T::zero()).sqrt();
        let den = ((s * r).sin() * (sc * r).sin()).max(T::zero()).sqrt();
        two * num.atan2(den)
    } else {
        let num = (sa * sb).sqrt();
        let den = (s * sc).sqrt();
        two * num.atan2(den)
    }
}

/// Angle at the vertex opposite side `c` of the model triangle with sides
/// `a`, `b`, `c` in the surface of constant curvature `kappa`.
pub fn model_angle<T: Scalar>(a: T, b: T, c: T, kappa: T) -> Result<T, GeomError> {
    let t = ModelTriangle::new(a, b, c, kappa)?;
    Ok(t.angle_c())
}

/// Length of the third side given two sides and their included angle.
pub fn model_side<T: Scalar>(a: T, b: T, gamma: T, kappa: T) -> T {
    let two = T::lit(2.0);
    if kappa > T::zero() {
        let r = kappa.sqrt();
        let (ar, br) = (a * r, b * r);
        // hav(c) = hav(a-b) + sin a sin b hav(gamma)
        let hav = |x: T| {
            let s = (x / two).sin();
            s * s
        };
        let h = (hav(ar - br) + ar.sin() * br.sin() * hav(gamma)).max(T::zero()).min(T::one());
        two * h.sqrt().asin() / r
    } else {
        let h = (a - b) * (a - b) + T::lit(4.0) * a * b * (gamma / two).sin().powi(2);
        h.max(T::zero()).sqrt()
    }
}

/// Flat cone of total angle `2π·beta` with apex at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeChart<T> {
    pub beta: T,
}

impl<T: Scalar> ConeChart<T> {
    /// Fails when `beta < 1`, which would put positive curvature at the apex.
    pub fn new(beta: T) -> Result<Self, GeomError> {
        if !beta.is_finite() || beta < T::one() - T::lit(1e-12) {
            return Err(GeomError::Domain(format!("cone parameter {} < 1", f(beta))));
        }
        Ok(Self { beta })
    }

    /// Chart without the β ≥ 1 restriction, for comparison experiments.
    pub fn unchecked(beta: T) -> Self {
        Self { beta }
    }

    pub fn total_angle(&self) -> T {
        T::lit(2.0) * T::PI() * self.beta
    }

    /// Reduces an angular coordinate into `[0, 2π·beta)`.
    pub fn reduce(&self, theta: T) -> T {
        let p = self.total_angle();
        let r = theta % p;
        let r = if r < T::zero() { r + p } else { r };
        if r >= p {
            T::zero()
        } else {
            r
        }
    }

    /// Angular distance between two directions: the shorter arc.
    pub fn angular_distance(&self, t1: T, t2: T) -> T {
        let d = self.reduce(t1 - t2);
        d.min(self.total_angle() - d)
    }
}

/// Point of a flat cone in polar coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConePoint<T> {
    pub rho: T,
    pub theta: T,
}

impl<T: Scalar> ConePoint<T> {
    pub fn new(rho: T, theta: T) -> Self {
        Self { rho, theta }
    }

    pub fn scaled(&self, lambda: T) -> Self {
        Self { rho: self.rho * lambda, theta: self.theta }
    }
}

/// Intrinsic distance on the flat cone.
pub fn cone_distance<T: Scalar>(
    p1: ConePoint<T>,
    p2: ConePoint<T>,
    chart: ConeChart<T>,
) -> Result<T, GeomError> {
    if p1.rho < T::zero() || p2.rho < T::zero() || !p1.rho.is_finite() || !p2.rho.is_finite() {
        return Err(GeomError::InvalidInput("negative or non-finite radius".into()));
    }
    let big = chart.angular_distance(p1.theta, p2.theta);
    if big >= T::PI() {
        return Ok(p1.rho + p2.rho);
    }
    Ok(model_side(p1.rho, p2.rho, big, T::zero()))
}

/// Outcome of the sampled comparison check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonOutcome<T> {
    pub defect: T,
    pub tolerance: T,
    pub pass: bool,
}

/// Geodesic triangle `PQR` with a distance oracle for `d(P_t, R_τ)`, where
/// `P_t` lies on `PQ` at fraction `t` from `P` and `R_τ` on `RQ` at fraction
/// `τ` from `R`.
pub struct ComparisonSample<T, F>
where
    F: Fn(T, T) -> T,
{
    pub pq: T,
    pub qr: T,
    pub rp: T,
    pub measured: F,
}

/// Grid of `(t, τ)` parameters used by [`cat_comparison_test`].
pub fn comparison_grid<T: Scalar>() -> Vec<(T, T)> {
    let n = 16;
    let mut out = Vec::with_capacity(17 * 17);
    for i in 0..=n {
        for j in 0..=n {
            out.push((T::lit(i as f64 / n as f64), T::lit(j as f64 / n as f64)));
        }
    }
    out
}

/// Default pass tolerance: `1e-9` times the perimeter.
pub fn default_comparison_tolerance<T: Scalar>(perimeter: T) -> T {
    T::lit(1e-9) * perimeter
}

/// Distance in the comparison triangle between the points corresponding to
/// `P_t` and `R_τ`.
pub fn comparison_distance<T: Scalar>(pq: T, qr: T, rp: T, kappa: T, t: T, tau: T) -> Result<T, GeomError> {
    let gamma = model_angle(pq, qr, rp, kappa)?;
    let a = (T::one() - t) * pq;
    let b = (T::one() - tau) * qr;
    Ok(model_side(a, b, gamma, kappa))
}

/// Maximum of `d(P_t, R_τ) − d̃(P̃_t, R̃_τ)` over the comparison grid.
pub fn cat_comparison_test<T: Scalar, F: Fn(T, T) -> T>(
    sample: &ComparisonSample<T, F>,
    kappa: T,
    tolerance: Option<T>,
) -> Result<ComparisonOutcome<T>, GeomError> {
    let (pq, qr, rp) = (sample.pq, sample.qr, sample.rp);
    let tri = ModelTriangle::new(pq, qr, rp, kappa)?;
    let tol = tolerance.unwrap_or_else(|| default_comparison_tolerance(tri.perimeter()));
    let gamma = tri.angle_c();
    let slack = T::lit(1e-9) * tri.perimeter().max(T::lit(1e-300));
    let mut defect = T::neg_infinity();
    for (t, tau) in comparison_grid::<T>() {
        let d = (sample.measured)(t, tau);
        let a = (T::one() - t) * pq;
        let b = (T::one() - tau) * qr;
        if !d.is_finite() || d < -slack || d > a + b + slack || d < (a - b).abs() - slack {
            return Err(GeomError::InvalidInput(format!(
                "measured distance {} at (t, tau) = ({}, {}) is inconsistent with the triangle",
                f(d),
                f(t),
                f(tau)
            )));
        }
        let model = model_side(a, b, gamma, kappa);
        defect = defect.max(d - model);
    }
    Ok(ComparisonOutcome { defect, tolerance: tol, pass: defect <= tol })
}

/// Signed angle from 2-vector `(ax, ay)` to `(bx, by)` in `(-π, π]`.
pub fn signed_angle<T: Scalar>(ax: T, ay: T, bx: T, by: T) -> T {
    (ax * by - ay * bx).atan2(ax * bx + ay * by)
}

pub type ModelTriangle64 = ModelTriangle<f64>;
pub type ConeChart64 = ConeChart<f64>;
pub type ConePoint64 = ConePoint<f64>;

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn right_triangle() {
        assert!((model_angle(3.0, 4.0, 5.0, 0.0).unwrap() - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn octant() {
        let h = PI / 2.0;
        assert!((model_angle(h, h, h, 1.0).unwrap() - h).abs() < 1e-14);
    }

    #[test]
    fn collinear() {
        assert!((model_angle(1.0, 1.0, 2.0, 0.0).unwrap() - PI).abs() < 1e-15);
    }

    #[test]
    fn f32_instance() {
        let a: f32 = model_angle(3.0f32, 4.0, 5.0, 0.0).unwrap();
        assert!((a - std::f32::consts::FRAC_PI_2).abs() < 1e-6);
    }

    #[test]
    fn errors() {
        assert!(matches!(model_angle(1.0, 1.0, 3.0, 0.0), Err(GeomError::InvalidTriangle { .. })));
        assert!(matches!(model_angle(2.0, 2.0, 2.5, 1.0), Err(GeomError::Domain(_))));
        assert!(matches!(model_angle(1.0, 1.0, 1.0, -1.0), Err(GeomError::Domain(_))));
    }

    #[test]
    fn small_spherical_triangle_matches_flat() {
        let a = model_angle(1e-6, 1e-6, 1e-6, 1.0).unwrap();
        assert!((a - PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cone_examples() {
        let ch = ConeChart::new(1.5).unwrap();
        let d = cone_distance(ConePoint::new(1.0, 0.0), ConePoint::new(1.0, PI / 2.0), ch).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        let d = cone_distance(ConePoint::new(1.0, 0.0), ConePoint::new(1.0, PI), ch).unwrap();
        assert!((d - 2.0).abs() < 1e-15);
        let p = ConePoint::new(0.7, 1.1);
        assert_eq!(cone_distance(p, p, ch).unwrap(), 0.0);
        assert!(ConeChart::new(0.9).is_err());
    }

    #[test]
    fn model_side_inverts_angle() {
        let g = model_angle(0.3, 0.5, 0.6, 1.0).unwrap();
        assert!((model_side(0.3, 0.5, g, 1.0) - 0.6).abs() < 1e-14);
        let g = model_angle(3.0, 4.0, 6.0, 0.0).unwrap();
        assert!((model_side(3.0, 4.0, g, 0.0) - 6.0).abs() < 1e-13);
    }

    #[test]
    fn flat_triangle_has_zero_defect() {
        let (p, q, r) = ([0.0, 0.0], [4.0, 0.5], [1.0, 3.0]);
        let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        let sample = ComparisonSample {
            pq: d(p, q),
            qr: d(q, r),
            rp: d(r, p),
            measured: |t: f64, tau: f64| d(lerp(p, q, t), lerp(r, q, tau)),
        };
        let out = cat_comparison_test(&sample, 0.0, None).unwrap();
        assert!(out.pass);
        assert!(out.defect.abs() < 1e-12);
    }

    #[test]
    fn inconsistent_sample_is_rejected() {
        let sample = ComparisonSample { pq: 1.0, qr: 1.0, rp: 1.0, measured: |_t: f64, _tau: f64| 5.0 };
        assert!(matches!(cat_comparison_test(&sample, 0.0, None), Err(GeomError::InvalidInput(_))));
    }
}
