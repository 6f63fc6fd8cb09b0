//! Blow-up analysis at a domain point: the order function, normalized
//! blow-up traces, fits of the homogeneous harmonic models in the tangent
//! cone of the image, and conformal factor estimates.
//!
//! Radii are measured in the conformal chart of the domain at the centre:
//! the plane on the disk, a stereographic chart on the sphere.

use crate::domain_mesh::{Chart, DomainKind, DomainMesh};
use crate::energy_forms::{face_form, pullback_tensor, side_distances, EnergyError, PiecewiseMap, SideDistances};
use crate::model::V3;
use crate::target_surface::{ConeSurface, GeodesicError, SurfacePoint, TangentConeChart};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("resolution: {0}")]
    Resolution(String),
    #[error("degenerate map: {0}")]
    Degenerate(String),
    #[error("radius {0} is too large: the image leaves the tangent chart ball")]
    ChartBall(f64),
    #[error("not applicable: {0}")]
    Inapplicable(String),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

/// Samples on every analysis circle.
pub const CIRCLE_SAMPLES: usize = 256;
/// Samples on every blow-up trace circle.
pub const TRACE_SAMPLES: usize = 64;
/// Radii of the blow-up traces, relative to σ.
pub const TRACE_RADII: [f64; 3] = [0.25, 0.5, 1.0];
/// Radii below this many mesh cells are unresolved.
pub const MIN_CELLS: f64 = 3.0;
/// Allowed decrease of `ord` between radii is `MONOTONICITY_C · h / σ_min`.
pub const MONOTONICITY_C: f64 = 1.0;

/// A domain point with its conformal chart and its image.
pub struct Probe<'a> {
    pub mesh: &'a DomainMesh,
    pub surface: &'a ConeSurface,
    pub map: &'a PiecewiseMap,
    pub chart: Chart,
    pub z0: Complex64,
    pub image: SurfacePoint,
    /// Side length of the mesh cells near the centre, in chart units.
    pub cell: f64,
}

impl<'a> Probe<'a> {
    pub fn new(mesh: &'a DomainMesh, surface: &'a ConeSurface, map: &'a PiecewiseMap, p0: &V3) -> Result<Self, AnalysisError> {
        let chart = match mesh.kind {
            DomainKind::Disk => Chart::Plane,
            DomainKind::Sphere if p0.z <= 0.0 => Chart::South,
            DomainKind::Sphere => Chart::North,
        };
        let (f, b) = mesh.locate(p0).ok_or_else(|| AnalysisError::Resolution(format!("{p0:?} is outside the domain")))?;
        let image = surface.normalize(&map.evaluate(mesh, surface, f, &b)?);
        let z = mesh.faces[f].map(|v| chart.coord(&mesh.positions[v]));
        let cell = (0..3).map(|k| (z[(k + 1) % 3] - z[k]).norm()).fold(0.0, f64::max);
        Ok(Probe { mesh, surface, map, chart, z0: chart.coord(p0), image, cell })
    }

    /// Image of the chart point `z`.
    pub fn value(&self, z: Complex64) -> Result<SurfacePoint, AnalysisError> {
        let x = self.chart.point(z);
        let (f, b) = self.mesh.locate(&x).ok_or_else(|| AnalysisError::Resolution(format!("chart point {z} is outside the domain")))?;
        Ok(self.map.evaluate(self.mesh, self.surface, f, &b)?)
    }

    /// Images of `n` equally spaced points on the circle of radius `r`.
    pub fn circle(&self, r: f64, n: usize) -> Result<Vec<SurfacePoint>, AnalysisError> {
        (0..n).map(|j| self.value(self.z0 + Complex64::from_polar(r, TAU * j as f64 / n as f64))).collect()
    }

    /// Largest radius whose circle stays inside the domain (disk), or the
    /// unit chart radius (sphere), where the chart metric varies at most 4×.
    pub fn max_radius(&self) -> f64 {
        match self.mesh.kind {
            DomainKind::Disk => 1.0 - self.z0.norm(),
            DomainKind::Sphere => 1.0,
        }
    }

    /// Geometric ladder with ratio `1/√2` from `top` down to the resolution limit.
    pub fn ladder(&self, top: f64) -> Vec<f64> {
        let floor = MIN_CELLS * self.cell;
        let mut radii = Vec::new();
        let mut r = top;
        while r >= floor && radii.len() < 40 {
            radii.push(r);
            r /= 2f64.sqrt();
        }
        radii.reverse();
        radii
    }

    /// Energy of the faces' parts inside the chart disk of radius `r`.
    fn disk_energy(&self, sd: &SideDistances, r: f64) -> f64 {
        self.disk_sum(r, |f| {
            let q = face_form(self.mesh, f, &sd.d2[f]);
            (q[0] + q[1]) * self.mesh.face_area[f]
        })
    }

    /// `Σ w(f) · |f ∩ D_r| / |f|` with areas in the chart.
    fn disk_sum(&self, r: f64, w: impl Fn(usize) -> f64) -> f64 {
        let mut total = 0.0;
        for f in 0..self.mesh.n_faces() {
            let z = self.mesh.faces[f].map(|v| self.chart.coord(&self.mesh.positions[v]) - self.z0);
            if z.iter().any(|c| !c.is_finite()) {
                continue;
            }
            let near = z.iter().map(|c| c.norm()).fold(f64::INFINITY, f64::min);
            let span = (0..3).map(|k| (z[(k + 1) % 3] - z[k]).norm()).fold(0.0, f64::max);
            if near > r + span {
                continue;
            }
            let full = 0.5 * ((z[1] - z[0]).conj() * (z[2] - z[0])).im;
            if full.abs() < 1e-300 {
                continue;
            }
            let part = triangle_disk_area(z, r);
            if part != 0.0 {
                total += w(f) * part / full;
            }
        }
        total
    }
}

/// Signed area of the intersection of a triangle with the disk `|z| ≤ r`,
/// positive for counterclockwise triangles.
pub fn triangle_disk_area(z: [Complex64; 3], r: f64) -> f64 {
    (0..3).map(|k| sector_segment_area(z[k], z[(k + 1) % 3], r)).sum()
}

/// Signed area of `D_r ∩ triangle(0, a, b)`.
fn sector_segment_area(a: Complex64, b: Complex64, r: f64) -> f64 {
    let d = b - a;
    let aa = d.norm_sqr();
    if aa == 0.0 {
        return 0.0;
    }
    // Split [a, b] at its crossings with the circle.
    let bq = (a.conj() * d).re;
    let c = a.norm_sqr() - r * r;
    let disc = bq * bq - aa * c;
    let mut ts = vec![0.0];
    if disc > 0.0 {
        let s = disc.sqrt();
        for t in [(-bq - s) / aa, (-bq + s) / aa] {
            if t > 0.0 && t < 1.0 {
                ts.push(t);
            }
        }
    }
    ts.push(1.0);
    let mut total = 0.0;
    for w in ts.windows(2) {
        let p = a + d * w[0];
        let q = a + d * w[1];
        let m = a + d * (0.5 * (w[0] + w[1]));
        if m.norm() <= r {
            total += 0.5 * (p.conj() * q).im;
        } else {
            total += 0.5 * r * r * (q / p).arg();
        }
    }
    total
}

/// Order function of a map at a point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderProfile {
    /// Centre in chart coordinates.
    pub center: [f64; 2],
    pub radii: Vec<f64>,
    /// Energy in the chart disk of each radius.
    pub energy: Vec<f64>,
    /// `∫ d²(u, u(p₀)) ds` over each circle, arclength measure.
    pub boundary: Vec<f64>,
    pub ord: Vec<f64>,
    pub mu: Vec<f64>,
    pub extrapolated: f64,
    /// Fitted convergence exponent of the Richardson correction, if applied.
    pub rate: Option<f64>,
    /// Largest decrease of `ord` between consecutive radii.
    pub monotonicity_defect: f64,
    /// Requested radii below the resolution limit.
    pub dropped: Vec<f64>,
    /// Mesh cell size at the centre, in chart units.
    pub cell: f64,
}

/// `∫ d² ds` over the circle of radius `r` about the probe centre.
fn boundary_integral(probe: &Probe, r: f64, n: usize) -> Result<f64, AnalysisError> {
    let mut acc = 0.0;
    for u in probe.circle(r, n)? {
        let d = probe.surface.dist(&probe.image, &u)?;
        acc += d * d;
    }
    Ok(acc * TAU * r / n as f64)
}

/// Order profile over `radii` (chart units); `None` uses the default ladder
/// from the largest admissible radius.
pub fn order_profile(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap, p0: &V3, radii: Option<&[f64]>) -> Result<OrderProfile, AnalysisError> {
    let probe = Probe::new(mesh, surface, map, p0)?;
    let sd = side_distances(mesh, surface, map)?;
    order_profile_with(&probe, &sd, radii)
}

pub fn order_profile_with(probe: &Probe, sd: &SideDistances, radii: Option<&[f64]>) -> Result<OrderProfile, AnalysisError> {
    let requested = match radii {
        Some(r) => {
            let mut r = r.to_vec();
            r.sort_by(f64::total_cmp);
            r
        }
        None => probe.ladder(0.5 * probe.max_radius()),
    };
    let floor = MIN_CELLS * probe.cell;
    let (radii, dropped): (Vec<f64>, Vec<f64>) = requested.into_iter().partition(|&r| r >= floor && r <= probe.max_radius());
    if radii.is_empty() {
        return Err(AnalysisError::Resolution(format!("no radius between {floor} and {}", probe.max_radius())));
    }
    let mut prof = OrderProfile {
        center: [probe.z0.re, probe.z0.im],
        radii: radii.clone(),
        energy: Vec::new(),
        boundary: Vec::new(),
        ord: Vec::new(),
        mu: Vec::new(),
        extrapolated: f64::NAN,
        rate: None,
        monotonicity_defect: 0.0,
        dropped,
        cell: probe.cell,
    };
    for &r in &radii {
        let e = probe.disk_energy(sd, r);
        let i = boundary_integral(probe, r, CIRCLE_SAMPLES)?;
        if !(i > 0.0) {
            return Err(AnalysisError::Degenerate(format!("the image circle of radius {r} is a point")));
        }
        prof.energy.push(e);
        prof.boundary.push(i);
        prof.ord.push(r * e / i);
        prof.mu.push((i / r).sqrt());
    }
    prof.monotonicity_defect = prof.ord.windows(2).map(|w| (w[0] - w[1]).max(0.0)).fold(0.0, f64::max);
    let resolved = resolution_corrected(&prof.radii, &prof.ord);
    let (x, rate) = richardson(&prof.radii, &resolved);
    prof.extrapolated = x;
    prof.rate = rate;
    Ok(prof)
}

/// Removes the mesh error `B·(h/σ)^DISCRETIZATION_ORDER` from each pair of
/// consecutive radii; entry `i` stands for radius `σ_i`. With one radius the
/// profile is returned unchanged.
fn resolution_corrected(radii: &[f64], ord: &[f64]) -> Vec<f64> {
    if ord.len() < 2 {
        return ord.to_vec();
    }
    radii
        .windows(2)
        .zip(ord.windows(2))
        .map(|(r, o)| {
            let g = (r[1] / r[0]).powf(DISCRETIZATION_ORDER);
            (g * o[1] - o[0]) / (g - 1.0)
        })
        .collect()
}

/// Convergence order in `h/σ` of piecewise-linear energies and circle
/// integrals of smooth maps.
pub const DISCRETIZATION_ORDER: f64 = 2.0;

/// `ord(σ_min)` corrected under the model `ord(σ) = ord₀ + Cσ^γ`, with γ
/// fitted from the three smallest radii. The correction is applied only in
/// the asymptotic regime: the differences shrink by at most [`MAX_RATIO`]
/// toward σ → 0 and the next ratio up agrees within [`RATE_CONSISTENCY`].
fn richardson(radii: &[f64], ord: &[f64]) -> (f64, Option<f64>) {
    if ord.len() < 4 {
        return (ord[0], None);
    }
    let d: Vec<f64> = (0..3).map(|i| ord[i] - ord[i + 1]).collect();
    let q = radii[1] / radii[0];
    if !(d[1] != 0.0 && d[2] != 0.0 && q > 1.0) {
        return (ord[0], None);
    }
    let rho = d[0] / d[1];
    let next = d[1] / d[2];
    if !(rho > 0.0 && rho <= MAX_RATIO && (rho - next).abs() <= RATE_CONSISTENCY * rho) {
        return (ord[0], None);
    }
    let gamma = -rho.ln() / (radii[2] / radii[1]).ln().max(1e-12);
    // Geometric tail of the remaining differences below σ_min.
    (ord[0] + d[0] * rho / (1.0 - rho), Some(gamma))
}

/// Largest difference ratio for which the Richardson correction is applied;
/// slower decay is not yet asymptotic and its geometric tail is unreliable.
pub const MAX_RATIO: f64 = 0.75;
/// Largest relative disagreement of consecutive difference ratios for which
/// the Richardson correction is applied.
pub const RATE_CONSISTENCY: f64 = 0.25;

impl OrderProfile {
    /// Discretization allowance for [`OrderProfile::monotonicity_defect`].
    pub fn defect_allowance(&self) -> f64 {
        MONOTONICITY_C * self.cell / self.radii[0]
    }

    pub fn monotone(&self) -> bool {
        self.monotonicity_defect <= self.defect_allowance()
    }
}

/// Blow-up of a map at scale σ: circle traces in the tangent cone of the
/// image, with distances divided by `μ_σ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlowUp {
    pub sigma: f64,
    pub mu: f64,
    /// Cone parameter of the image tangent cone.
    pub beta: f64,
    /// Radii of the traces relative to σ.
    pub radii: Vec<f64>,
    /// Per radius: normalized distances and unwrapped chart angles at the
    /// equally spaced sample angles `2πj/n`.
    pub rho: Vec<Vec<f64>>,
    pub angle: Vec<Vec<f64>>,
    /// `∫_{∂𝔻} d_σ²(u_σ, u_σ(0)) dθ`, 1 by construction.
    pub normalization: f64,
}

pub fn blowup_map(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap, p0: &V3, sigma: f64) -> Result<BlowUp, AnalysisError> {
    let probe = Probe::new(mesh, surface, map, p0)?;
    blowup_with(&probe, sigma)
}

pub fn blowup_with(probe: &Probe, sigma: f64) -> Result<BlowUp, AnalysisError> {
    if sigma < MIN_CELLS * probe.cell || sigma > probe.max_radius() {
        return Err(AnalysisError::Resolution(format!("σ = {sigma} is outside the resolved range")));
    }
    let chart = TangentConeChart::new(probe.surface, &probe.image);
    let period = TAU * chart.beta;
    let reach = probe.surface.locality_radius();
    let n = TRACE_SAMPLES;
    let mut rho = Vec::new();
    let mut angle = Vec::new();
    for &s in &TRACE_RADII {
        let mut rs = Vec::with_capacity(n);
        let mut th = Vec::with_capacity(n);
        for u in probe.circle(s * sigma, n)? {
            let d = probe.surface.dist(&probe.image, &u)?;
            if d > reach {
                return Err(AnalysisError::ChartBall(sigma));
            }
            let a = if d > 0.0 { chart.log(probe.surface, &u)?.theta } else { th.last().copied().unwrap_or(0.0) };
            // Continuous lift of the chart angle, whose period is 2πβ.
            // The first sample of each trace is lifted against the first of
            // the previous trace so that all traces share one branch.
            let prev = th.last().copied().or_else(|| angle.last().map(|t: &Vec<f64>| t[0]));
            let a = match prev {
                Some(prev) => prev + wrap(a - prev, period),
                None => a,
            };
            rs.push(d);
            th.push(a);
        }
        rho.push(rs);
        angle.push(th);
    }
    // μ_σ² = (1/σ)∫_{∂𝔻_σ} d² ds = ∫ d² dθ on the unit-scale trace.
    let mu2 = rho[2].iter().map(|d| d * d).sum::<f64>() * TAU / n as f64;
    if !(mu2 > 0.0) {
        return Err(AnalysisError::Degenerate("μ_σ = 0".into()));
    }
    let mu = mu2.sqrt();
    for rs in &mut rho {
        rs.iter_mut().for_each(|d| *d /= mu);
    }
    let normalization = rho[2].iter().map(|d| d * d).sum::<f64>() * TAU / n as f64;
    Ok(BlowUp { sigma, mu, beta: chart.beta, radii: TRACE_RADII.to_vec(), rho, angle, normalization })
}

/// Representative of `a` modulo `period` in `(−period/2, period/2]`.
fn wrap(a: f64, period: f64) -> f64 {
    let r = a.rem_euclid(period);
    if r > 0.5 * period {
        r - period
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Conformal,
    Stretched,
    Degenerate,
    Unclassified,
}

/// Homogeneous model `ρe^{iψ} = r^α (A e^{iαθ} + B e^{−iαθ})` fitted to a
/// blow-up, with `k = |B|/|A|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentFit {
    pub kind: ModelKind,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
    /// Coefficient of the model: `c^β = |A|` if `k = 0`, else `2√(|A||B|)`.
    pub c: f64,
    /// Phase of the leading coefficient `A`.
    pub rotation: f64,
    /// Relative L² misfit over all traces.
    pub residual: f64,
}

impl TangentFit {
    pub fn alpha_over_beta(&self) -> f64 {
        self.alpha / self.beta
    }
}

/// Fit tolerances: misfit above `RESIDUAL_TOL` leaves a model unclassified;
/// `k` below `CONFORMAL_K` counts as conformal, above `DEGENERATE_K` as
/// degenerate.
pub const RESIDUAL_TOL: f64 = 0.1;
pub const CONFORMAL_K: f64 = 0.05;
pub const DEGENERATE_K: f64 = 0.95;

/// Least-squares coefficients and misfit for a fixed α.
fn fit_alpha(b: &BlowUp, alpha: f64) -> (Complex64, Complex64, f64) {
    let n = b.rho[0].len();
    // Normal equations of the 2×2 complex system in (A, B).
    let (mut g11, mut g12, mut g22) = (0.0, Complex64::new(0.0, 0.0), 0.0);
    let (mut r1, mut r2) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    let mut norm = 0.0;
    let data = |i: usize, j: usize| Complex64::from_polar(b.rho[i][j], b.angle[i][j]);
    for (i, &r) in b.radii.iter().enumerate() {
        let ra = r.powf(alpha);
        for j in 0..n {
            let th = TAU * j as f64 / n as f64;
            let e1 = Complex64::from_polar(ra, alpha * th);
            let e2 = Complex64::from_polar(ra, -alpha * th);
            let d = data(i, j);
            g11 += e1.norm_sqr();
            g22 += e2.norm_sqr();
            g12 += e1.conj() * e2;
            r1 += e1.conj() * d;
            r2 += e2.conj() * d;
            norm += d.norm_sqr();
        }
    }
    let det = g11 * g22 - g12.norm_sqr();
    let (a, bb) = if det.abs() > 1e-14 * g11 * g22 {
        ((g22 * r1 - g12 * r2) / det, (g11 * r2 - g12.conj() * r1) / det)
    } else {
        (r1 / g11, Complex64::new(0.0, 0.0))
    };
    let mut misfit = 0.0;
    for (i, &r) in b.radii.iter().enumerate() {
        let ra = r.powf(alpha);
        for j in 0..n {
            let th = TAU * j as f64 / n as f64;
            let m = a * Complex64::from_polar(ra, alpha * th) + bb * Complex64::from_polar(ra, -alpha * th);
            misfit += (data(i, j) - m).norm_sqr();
        }
    }
    (a, bb, (misfit / norm.max(1e-300)).sqrt())
}

/// Fits the homogeneous models: α/β is enumerated over 1..=6, then α is
/// refined by golden-section search within half a step of the best.
pub fn fit_tangent_map(b: &BlowUp) -> TangentFit {
    let beta = b.beta;
    let mut best = (f64::INFINITY, beta);
    for n in 1..=6 {
        let a = n as f64 * beta;
        let (_, _, res) = fit_alpha(b, a);
        if res < best.0 {
            best = (res, a);
        }
    }
    let alpha = golden_min(|a| fit_alpha(b, a).2, (best.1 - 0.5 * beta).max(0.5), best.1 + 0.5 * beta, 1e-10);
    let (a, bb, residual) = fit_alpha(b, alpha);
    let (na, nb) = (a.norm(), bb.norm());
    let (big, small, phase) = if na >= nb { (na, nb, a.arg()) } else { (nb, na, bb.arg()) };
    let k = if big > 0.0 { small / big } else { 1.0 };
    let kind = if residual > RESIDUAL_TOL {
        ModelKind::Unclassified
    } else if k >= DEGENERATE_K {
        ModelKind::Degenerate
    } else if k < CONFORMAL_K {
        ModelKind::Conformal
    } else {
        ModelKind::Stretched
    };
    let cb = if kind == ModelKind::Conformal { big } else { 2.0 * (big * small).sqrt() };
    TangentFit { kind, alpha, beta, k, c: cb.powf(1.0 / beta), rotation: phase, residual }
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Conformal factor estimates at a point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConformalFactorProbe {
    pub radii: Vec<f64>,
    /// Mean of λ over the chart disk of each radius.
    pub disk_mean: Vec<f64>,
    /// Mean of λ over each circle.
    pub circle_mean: Vec<f64>,
    /// Mean of `d²(u(z), u(z₀)) / |z − z₀|²` over each circle.
    pub distance_ratio: Vec<f64>,
    /// Conformality gap `Σ|φ| / Σ tr` over the largest disk.
    pub local_gap: f64,
}

impl ConformalFactorProbe {
    /// Limits `r → 0` of the disk, circle and distance-ratio estimates.
    /// Means of a smooth density deviate from the centre value by `O(r²)`,
    /// so the two smallest radii are extrapolated linearly in `r²`.
    pub fn lambda(&self) -> [f64; 3] {
        [&self.disk_mean, &self.circle_mean, &self.distance_ratio].map(|v| extrapolate_r2(&self.radii, v))
    }
}

fn extrapolate_r2(radii: &[f64], v: &[f64]) -> f64 {
    if radii.len() < 2 {
        return v[0];
    }
    let (a, b) = (radii[0] * radii[0], radii[1] * radii[1]);
    (v[0] * b - v[1] * a) / (b - a)
}

/// Gap ratio above which the conformal factor is not meaningful.
pub const GAP_TOL: f64 = 0.1;

pub fn conformal_factor_probe(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap, p0: &V3, radii: Option<&[f64]>) -> Result<ConformalFactorProbe, AnalysisError> {
    let probe = Probe::new(mesh, surface, map, p0)?;
    let sd = side_distances(mesh, surface, map)?;
    let mut radii: Vec<f64> = match radii {
        Some(r) => r.iter().copied().filter(|&r| r >= MIN_CELLS * probe.cell && r <= probe.max_radius()).collect(),
        None => probe.ladder(0.25 * probe.max_radius()),
    };
    radii.sort_by(f64::total_cmp);
    if radii.is_empty() {
        return Err(AnalysisError::Resolution("no resolved radius".into()));
    }
    // Per face: λ in chart units and |φ|, tr as chart densities.
    let tensors: Vec<_> = (0..mesh.n_faces()).map(|f| pullback_tensor(mesh, &sd, f)).collect();
    let top = *radii.last().expect("nonempty");
    let chart_area = |f: usize| {
        let z = mesh.faces[f].map(|v| probe.chart.coord(&mesh.positions[v]));
        0.5 * ((z[1] - z[0]).conj() * (z[2] - z[0])).im
    };
    // pullback_tensor is per unit area of the face's own chart; rescale to the probe chart.
    let lambda = |f: usize| {
        let scale = mesh.face_area[f] / chart_area(f).abs().max(1e-300);
        let (_, s) = mesh.chart_similarity(f);
        tensors[f].conformal_factor() * s * s * scale
    };
    let hopf = probe.disk_sum(top, |f| tensors[f].hopf().norm() * mesh.face_area[f]);
    let trace = probe.disk_sum(top, |f| 2.0 * tensors[f].conformal_factor() * mesh.face_area[f]);
    let local_gap = if trace > 0.0 { hopf / trace } else { 0.0 };
    if local_gap > GAP_TOL {
        return Err(AnalysisError::Inapplicable(format!("local conformality gap {local_gap:.3} exceeds {GAP_TOL}")));
    }
    let mut out = ConformalFactorProbe { radii: radii.clone(), disk_mean: Vec::new(), circle_mean: Vec::new(), distance_ratio: Vec::new(), local_gap };
    for &r in &radii {
        let area = probe.disk_sum(r, |_| 1.0).abs().max(PI * r * r * 1e-12);
        out.disk_mean.push(probe.disk_sum(r, |f| lambda(f)) / area);
        let n = CIRCLE_SAMPLES;
        let mut lam = 0.0;
        let mut ratio = 0.0;
        for j in 0..n {
            let z = probe.z0 + Complex64::from_polar(r, TAU * j as f64 / n as f64);
            let x = probe.chart.point(z);
            let (f, b) = mesh.locate(&x).ok_or_else(|| AnalysisError::Resolution(format!("chart point {z} is outside the domain")))?;
            lam += lambda(f);
            let u = map.evaluate(mesh, surface, f, &b)?;
            let d = surface.dist(&probe.image, &u)?;
            ratio += d * d / (r * r);
        }
        out.circle_mean.push(lam / n as f64);
        out.distance_ratio.push(ratio / n as f64);
    }
    Ok(out)
}
