//! Maps given by closed formulas, sampled at the domain vertices.

use super::{EnergyError, PiecewiseMap};
use crate::domain_mesh::DomainMesh;
use crate::geom_kernel::ConePoint;
use crate::model::V3;
use crate::target_surface::{ConeSurface, GeodesicError, SurfacePoint};
use num_complex::Complex64;

fn outside(x: &V3) -> EnergyError {
    EnergyError::Geodesic(GeodesicError::Domain(format!("image {x:?} is off the target")))
}

/// `z ↦ f(z)` from the disk into a flat fixture target, through its embedding.
pub fn planar(mesh: &DomainMesh, surface: &ConeSurface, f: impl Fn(Complex64) -> Complex64) -> Result<PiecewiseMap, EnergyError> {
    let values = mesh
        .positions
        .iter()
        .map(|p| {
            let w = f(Complex64::new(p.x, p.y));
            let x = V3::new(w.re, w.im, 0.0);
            surface.locate_embedded(&x).ok_or_else(|| outside(&x))
        })
        .collect::<Result<_, _>>()?;
    Ok(PiecewiseMap::new(mesh, values))
}

/// `x ↦ g(x)` from the sphere into a round fixture target.
pub fn spherical(mesh: &DomainMesh, surface: &ConeSurface, g: impl Fn(&V3) -> V3) -> Result<PiecewiseMap, EnergyError> {
    let values = mesh
        .positions
        .iter()
        .map(|p| {
            let x = g(p);
            surface.locate_embedded(&x).ok_or_else(|| outside(&x))
        })
        .collect::<Result<_, _>>()?;
    Ok(PiecewiseMap::new(mesh, values))
}

/// Homogeneous model `r e^{iθ} ↦ c r^β e^{iβθ}` from the disk into the
/// tangent cone at `apex`, which must have total angle `2πβ`.
pub fn cone_power(mesh: &DomainMesh, surface: &ConeSurface, apex: &SurfacePoint, c: f64) -> Result<PiecewiseMap, EnergyError> {
    let chart = surface.tangent_chart(apex).map_err(|e| GeodesicError::Domain(e.to_string()))?;
    let beta = chart.beta;
    let values = mesh
        .positions
        .iter()
        .map(|p| {
            let r = p.x.hypot(p.y);
            let th = p.y.atan2(p.x).rem_euclid(std::f64::consts::TAU);
            chart.exp(surface, ConePoint::new(c * r.powf(beta), beta * th))
        })
        .collect::<Result<_, _>>()?;
    Ok(PiecewiseMap::new(mesh, values))
}

/// Stereographic projection from the north pole.
pub fn stereographic(x: &V3) -> Complex64 {
    Complex64::new(x.x, x.y) / (1.0 - x.z)
}

/// Inverse of [`stereographic`]; `None` maps to the north pole.
pub fn inverse_stereographic(z: Option<Complex64>) -> V3 {
    match z {
        None => V3::z(),
        Some(z) if !z.is_finite() => V3::z(),
        Some(z) => {
            let r2 = z.norm_sqr();
            V3::new(2.0 * z.re, 2.0 * z.im, r2 - 1.0) / (r2 + 1.0)
        }
    }
}

/// Rational map `z ↦ p(z)` of the Riemann sphere, conjugated by
/// stereographic projection.
pub fn rational(p: impl Fn(Complex64) -> Option<Complex64>) -> impl Fn(&V3) -> V3 {
    move |x: &V3| {
        if x.z > 1.0 - 1e-15 {
            return inverse_stereographic(p(Complex64::new(f64::INFINITY, 0.0)));
        }
        inverse_stereographic(p(stereographic(x)))
    }
}

/// Degree-two map `z ↦ M(z)²` with `M(z) = (z − α)/(1 − ᾱz)`; its branch
/// values are `0` and `∞`, taken at `α` and `1/ᾱ`.
pub fn mobius_square(alpha: Complex64) -> impl Fn(&V3) -> V3 {
    rational(move |z: Complex64| {
        if !z.is_finite() {
            // M(∞) = −1/ᾱ
            return if alpha.norm() == 0.0 { None } else { Some((1.0 / alpha.conj()).powu(2)) };
        }
        let den = Complex64::new(1.0, 0.0) - alpha.conj() * z;
        if den.norm() < 1e-300 {
            return None;
        }
        Some(((z - alpha) / den).powu(2))
    })
}
