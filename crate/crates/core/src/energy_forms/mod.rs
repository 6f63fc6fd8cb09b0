//! Discrete energy of maps from a domain mesh into a cone surface.
//!
//! Each domain face carries the quadratic form `Q` of the flat triangle whose
//! sides are the target distances between the images of its vertices:
//! `e_kᵀ Q e_k = d_k²` for the three side vectors `e_k` of the face metric.
//! Energy is `Σ tr Q · area`, which equals the cotangent sum `Σ w_ij d_ij²`.

pub mod closed_form;
mod raster;

pub use raster::{Coverage, Raster};

use crate::domain_mesh::DomainMesh;
use crate::domain_mesh::DomainKind;
use crate::target_surface::{ConeSurface, GeodesicError, SurfacePoint};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("face {face}: image side of length {length} exceeds the locality bound {bound}")]
    Locality { face: usize, length: f64, bound: f64 },
    #[error("map has {got} values for a mesh with {expected} vertices")]
    Size { got: usize, expected: usize },
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
}

/// Vertex images of a map from a domain mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseMap {
    pub domain: DomainKind,
    pub level: usize,
    pub values: Vec<SurfacePoint>,
}

impl PiecewiseMap {
    pub fn new(mesh: &DomainMesh, values: Vec<SurfacePoint>) -> Self {
        PiecewiseMap { domain: mesh.kind, level: mesh.level, values }
    }

    pub fn check(&self, mesh: &DomainMesh) -> Result<(), EnergyError> {
        if self.values.len() != mesh.n_vertices() {
            return Err(EnergyError::Size { got: self.values.len(), expected: mesh.n_vertices() });
        }
        Ok(())
    }

    /// Image of the domain point with parameter coordinates `b` in face `f`,
    /// following the geodesic cone construction over the face.
    pub fn evaluate(&self, mesh: &DomainMesh, surface: &ConeSurface, f: usize, b: &[f64; 3]) -> Result<SurfacePoint, GeodesicError> {
        let v = mesh.faces[f].map(|i| self.values[i]);
        let t = 1.0 - b[0];
        if t <= 1e-15 {
            return Ok(v[0]);
        }
        let s = b[2] / (b[1] + b[2]);
        let y = surface.geodesic_point(&v[1], &v[2], s)?;
        surface.geodesic_point(&v[0], &y, t)
    }

    /// Image of a domain point given in the domain's embedding.
    pub fn evaluate_at(&self, mesh: &DomainMesh, surface: &ConeSurface, x: &crate::model::V3) -> Result<SurfacePoint, GeodesicError> {
        let (f, b) = mesh
            .locate(x)
            .ok_or_else(|| GeodesicError::Domain(format!("point {x:?} is outside the domain")))?;
        self.evaluate(mesh, surface, f, &b)
    }
}

/// Symmetric form `(q11, q22, q12)`.
pub type Form = [f64; 3];

/// Pullback tensor of one face in its chart coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PullbackTensor {
    pub p11: f64,
    pub p22: f64,
    pub p12: f64,
}

impl PullbackTensor {
    pub fn density(&self, w: [f64; 2]) -> f64 {
        self.p11 * w[0] * w[0] + 2.0 * self.p12 * w[0] * w[1] + self.p22 * w[1] * w[1]
    }

    pub fn hopf(&self) -> Complex64 {
        Complex64::new(self.p11 - self.p22, -2.0 * self.p12)
    }

    pub fn conformal_factor(&self) -> f64 {
        0.5 * (self.p11 + self.p22)
    }

    pub fn jacobian(&self) -> f64 {
        jacobian([self.p11, self.p22, self.p12])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub energy: f64,
    pub area: f64,
    /// `Σ (|π11 − π22| + 2|π12|) · area` in chart-aligned frames.
    pub gap: f64,
    /// Faces whose image sides exceed the locality bound.
    pub locality_violations: usize,
}

/// Squared image distances along the sides of every face.
#[derive(Debug, Clone)]
pub struct SideDistances {
    pub d2: Vec<[f64; 3]>,
    pub max_side: Vec<f64>,
}

/// Computes image side lengths, sharing work between faces.
pub fn side_distances(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap) -> Result<SideDistances, EnergyError> {
    map.check(mesh)?;
    let mut cache: HashMap<(usize, usize), f64> = HashMap::new();
    let mut d2 = Vec::with_capacity(mesh.n_faces());
    let mut max_side = Vec::with_capacity(mesh.n_faces());
    for f in &mesh.faces {
        let mut out = [0.0; 3];
        let mut mx: f64 = 0.0;
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let d = match cache.get(&key) {
                Some(&d) => d,
                None => {
                    let d = surface.dist(&map.values[a], &map.values[b])?;
                    cache.insert(key, d);
                    d
                }
            };
            mx = mx.max(d);
            out[k] = d * d;
        }
        d2.push(out);
        max_side.push(mx);
    }
    Ok(SideDistances { d2, max_side })
}

/// Form `Q` of a face in its metric frame from squared side images.
pub fn face_form(mesh: &DomainMesh, f: usize, d2: &[f64; 3]) -> Form {
    let p = &mesh.face_shape[f];
    let l0 = p[1][0];
    let (x2, y2) = (p[2][0], p[2][1]);
    let q11 = d2[0] / (l0 * l0);
    let q12 = (d2[2] - d2[1] - q11 * l0 * (2.0 * x2 - l0)) / (2.0 * y2 * l0);
    let q22 = (d2[2] - q11 * x2 * x2 - 2.0 * q12 * x2 * y2) / (y2 * y2);
    [q11, q22, q12]
}

/// Rotates a metric-frame form into the face's chart frame.
pub fn chart_form(mesh: &DomainMesh, f: usize, q: &Form) -> PullbackTensor {
    let (theta, scale) = mesh.chart_similarity(f);
    let (s, c) = theta.sin_cos();
    // Q_chart = R Q Rᵀ / scale²
    let [a, b, m] = *q;
    let p11 = c * c * a - 2.0 * c * s * m + s * s * b;
    let p22 = s * s * a + 2.0 * c * s * m + c * c * b;
    let p12 = c * s * (a - b) + (c * c - s * s) * m;
    let k = 1.0 / (scale * scale);
    PullbackTensor { p11: p11 * k, p22: p22 * k, p12: p12 * k }
}

/// `√det Q`: the Jacobian of a form, zero for rank-deficient forms.
pub fn jacobian(q: Form) -> f64 {
    let det = q[0] * q[1] - q[2] * q[2];
    let scale = (q[0] + q[1]).abs().max(f64::MIN_POSITIVE);
    if det <= 1e-14 * scale * scale {
        0.0
    } else {
        det.sqrt()
    }
}

/// All per-face forms of a map in metric frames.
pub fn face_forms(mesh: &DomainMesh, sd: &SideDistances) -> Vec<Form> {
    (0..mesh.n_faces()).map(|f| face_form(mesh, f, &sd.d2[f])).collect()
}

/// Pullback tensor of face `f` in chart coordinates.
pub fn pullback_tensor(mesh: &DomainMesh, sd: &SideDistances, f: usize) -> PullbackTensor {
    chart_form(mesh, f, &face_form(mesh, f, &sd.d2[f]))
}

/// Directional energy density `q(ω)` for a unit chart direction `ω`.
pub fn directional_density(mesh: &DomainMesh, sd: &SideDistances, f: usize, omega: [f64; 2]) -> f64 {
    pullback_tensor(mesh, sd, f).density(omega)
}

/// Pullback tensor recovered from directional densities by polarization.
pub fn polarized_tensor(q: impl Fn([f64; 2]) -> f64) -> PullbackTensor {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let p11 = q([1.0, 0.0]);
    let p22 = q([0.0, 1.0]);
    // π(Z,W) = ¼|Z+W|² − ¼|Z−W|² with Z = ∂x, W = ∂y.
    let p12 = 0.25 * (q([s, s]) * 2.0 - q([s, -s]) * 2.0);
    PullbackTensor { p11, p22, p12 }
}

/// Energy, area and conformality gap of a map.
pub fn energy_report(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap) -> Result<EnergyReport, EnergyError> {
    let sd = side_distances(mesh, surface, map)?;
    Ok(energy_report_from(mesh, surface, &sd))
}

pub fn energy_report_from(mesh: &DomainMesh, surface: &ConeSurface, sd: &SideDistances) -> EnergyReport {
    let bound = 2.0 * surface.locality_radius();
    let mut r = EnergyReport { energy: 0.0, area: 0.0, gap: 0.0, locality_violations: 0 };
    for f in 0..mesh.n_faces() {
        let q = face_form(mesh, f, &sd.d2[f]);
        let a = mesh.face_area[f];
        r.energy += (q[0] + q[1]) * a;
        r.area += jacobian(q) * a;
        let p = chart_form(mesh, f, &q);
        let s2 = {
            let (_, s) = mesh.chart_similarity(f);
            s * s
        };
        r.gap += ((p.p11 - p.p22).abs() + 2.0 * p.p12.abs()) * s2 * a;
        if sd.max_side[f] > bound {
            r.locality_violations += 1;
        }
    }
    r
}

/// Fails with the first face whose image leaves the locality bound.
pub fn check_locality(mesh: &DomainMesh, surface: &ConeSurface, sd: &SideDistances) -> Result<(), EnergyError> {
    let bound = 2.0 * surface.locality_radius();
    for f in 0..mesh.n_faces() {
        if sd.max_side[f] > bound {
            return Err(EnergyError::Locality { face: f, length: sd.max_side[f], bound });
        }
    }
    Ok(())
}

/// Total energy `Σ (π11 + π22) · area`.
pub fn total_energy(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap) -> Result<f64, EnergyError> {
    Ok(energy_report(mesh, surface, map)?.energy)
}

/// Total area `Σ √det π · area`.
pub fn total_area(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap) -> Result<f64, EnergyError> {
    Ok(energy_report(mesh, surface, map)?.area)
}

/// Per-face Hopf values `φ = π11 − π22 − 2iπ12` in chart coordinates.
pub fn hopf_field(mesh: &DomainMesh, sd: &SideDistances) -> Vec<Complex64> {
    (0..mesh.n_faces()).map(|f| pullback_tensor(mesh, sd, f).hopf()).collect()
}

/// `∫ |φ| dA`, a chart-independent quantity.
pub fn hopf_l1(mesh: &DomainMesh, sd: &SideDistances) -> f64 {
    (0..mesh.n_faces())
        .map(|f| {
            let (_, s) = mesh.chart_similarity(f);
            pullback_tensor(mesh, sd, f).hopf().norm() * s * s * mesh.face_area[f]
        })
        .sum()
}

/// Discrete Cauchy–Riemann defect of `φ`: for every interior vertex the
/// contour sum `∮ φ dz` around its star, which by Green's formula is
/// `2i ∬ ∂̄φ`; each face lies in three stars, so the total approximates
/// `∫ |∂̄φ| dA`. Vertices whose star mixes charts are skipped.
pub fn hopf_residual(mesh: &DomainMesh, phi: &[Complex64]) -> f64 {
    let mut total = 0.0;
    for v in 0..mesh.n_vertices() {
        if mesh.is_boundary[v] {
            continue;
        }
        let fs = &mesh.vertex_faces[v];
        let chart = mesh.face_chart[fs[0]];
        if fs.iter().any(|&f| mesh.face_chart[f] != chart || mesh.degenerate[f]) {
            continue;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for &f in fs {
            let c = (0..3).find(|&c| mesh.faces[f][c] == v).expect("incident");
            let z = mesh.chart_coordinates(f);
            acc += phi[f] * (z[(c + 2) % 3] - z[(c + 1) % 3]);
        }
        total += acc.norm() / 6.0;
    }
    total
}

/// Largest star average of `|∂̄φ|` over the stars that [`hopf_residual`]
/// visits. With `φ` sampled at face centroids the contour sum of a linear
/// field is `(4/3)·i·∂̄φ·(star area)`, hence the normalization.
pub fn hopf_residual_max(mesh: &DomainMesh, phi: &[Complex64]) -> f64 {
    let mut best: f64 = 0.0;
    for v in 0..mesh.n_vertices() {
        if mesh.is_boundary[v] {
            continue;
        }
        let fs = &mesh.vertex_faces[v];
        let chart = mesh.face_chart[fs[0]];
        if fs.iter().any(|&f| mesh.face_chart[f] != chart || mesh.degenerate[f]) {
            continue;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        let mut area = 0.0;
        for &f in fs {
            let c = (0..3).find(|&c| mesh.faces[f][c] == v).expect("incident");
            let z = mesh.chart_coordinates(f);
            acc += phi[f] * (z[(c + 2) % 3] - z[(c + 1) % 3]);
            area += 0.5 * ((z[1] - z[0]).conj() * (z[2] - z[0])).im.abs();
        }
        if area > 0.0 {
            best = best.max(0.75 * acc.norm() / area);
        }
    }
    best
}

/// Harmonic mean of the directional densities over the circle of
/// directions, `(1/2π ∫ q(ω)⁻¹ dθ)⁻¹`, by midpoint quadrature.
pub fn harmonic_mean_density(q: Form, samples: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..samples {
        let th = 2.0 * PI * (i as f64 + 0.5) / samples as f64;
        let (s, c) = th.sin_cos();
        let d = q[0] * c * c + 2.0 * q[2] * c * s + q[1] * s * s;
        if d <= 0.0 {
            return 0.0;
        }
        acc += 1.0 / d;
    }
    samples as f64 / acc
}

/// Covered target area and multiplicity-weighted area `∫ J` of a map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HausdorffEstimate {
    pub covered_area: f64,
    pub jacobian_integral: f64,
    /// Raster cell size used for the coverage.
    pub cell: f64,
}

/// Default raster cell: 1/400 of the target diameter.
pub fn default_cell(surface: &ConeSurface) -> f64 {
    surface.diameter() / 400.0
}

/// Rasterized `H²` of the image together with `∫ J`.
pub fn hausdorff_area_estimate(
    mesh: &DomainMesh,
    surface: &ConeSurface,
    map: &PiecewiseMap,
    cell: Option<f64>,
) -> Result<(HausdorffEstimate, Coverage), EnergyError> {
    let sd = side_distances(mesh, surface, map)?;
    let report = energy_report_from(mesh, surface, &sd);
    let cell = cell.unwrap_or_else(|| default_cell(surface));
    let raster = Raster::new(surface, cell);
    let cov = raster.cover(mesh, surface, map, &[]);
    Ok((HausdorffEstimate { covered_area: cov.covered_area, jacobian_integral: report.area, cell }, cov))
}
