//! Tangent-cone charts: polar coordinates around a point of the surface.

use super::{ConeSurface, GeodesicError, SurfacePoint};
use crate::geom_kernel::{ConeChart, ConePoint};
use std::f64::consts::TAU;

/// Angular interval of one incident face corner in a vertex chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerInterval {
    pub face: usize,
    pub start: f64,
    pub width: f64,
}

/// Exponential chart at a base point: a point of the surface within the
/// locality radius corresponds to `(ρ, θ)` with ρ its distance and θ the
/// chart angle of the initial direction.
#[derive(Debug, Clone)]
pub struct TangentConeChart {
    pub base: SurfacePoint,
    /// `total angle / 2π`; 1 away from vertices.
    pub beta: f64,
    pub corners: Vec<CornerInterval>,
    pub on_boundary: bool,
}

impl TangentConeChart {
    pub fn new(surface: &ConeSurface, p: &SurfacePoint) -> Self {
        let base = surface.normalize(p);
        match base {
            SurfacePoint::Vertex { v } => TangentConeChart {
                base,
                beta: surface.angle_sum(v) / TAU,
                corners: surface
                    .star(v)
                    .iter()
                    .map(|c| CornerInterval { face: c.face, start: c.start, width: c.width })
                    .collect(),
                on_boundary: surface.is_boundary_vertex(v),
            },
            _ => TangentConeChart {
                base,
                beta: 1.0,
                corners: Vec::new(),
                on_boundary: surface.on_boundary(&base),
            },
        }
    }

    pub fn cone(&self) -> ConeChart<f64> {
        ConeChart::unchecked(self.beta)
    }

    pub fn log(&self, surface: &ConeSurface, q: &SurfacePoint) -> Result<ConePoint<f64>, GeodesicError> {
        let l = surface.log(&self.base, q)?;
        Ok(ConePoint::new(l.dist, l.angle))
    }

    pub fn exp(&self, surface: &ConeSurface, x: ConePoint<f64>) -> Result<SurfacePoint, GeodesicError> {
        Ok(surface.exp(&self.base, x.theta, x.rho)?.point)
    }
}
