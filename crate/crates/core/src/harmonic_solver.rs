//! Energy minimization by Gauss–Seidel relaxation: every free vertex moves
//! toward the weighted Fréchet mean of its neighbours' images.
//!
//! A vertex update is accepted only if its local objective
//! `Σ_j w_ij d²(u_i, u_j)` does not increase, so the discrete energy is
//! nonincreasing across sweeps. Solutions are computed cascadically: the
//! converged map on one level is evaluated at the vertices of the next.

use crate::domain_mesh::{build_disk_mesh, build_sphere_mesh, DomainKind, DomainMesh};
use crate::energy_forms::{energy_report, side_distances, EnergyError, EnergyReport, PiecewiseMap};
use crate::model::V3;
use crate::target_surface::{ConeSurface, GeodesicError, LogResult, SurfacePoint};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("initial map: {0}")]
    Construction(String),
    #[error("boundary trace: {0}")]
    Trace(String),
    #[error("degenerate map: energy {0} is zero")]
    Degenerate(f64),
    #[error("bubbling: {share:.3} of the energy lies in {area_share:.4} of the domain area")]
    Bubbling { share: f64, area_share: f64 },
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relaxation {
    /// Vertices in index order.
    Sweep,
    /// Vertices grouped by a greedy colouring; vertices of one colour are
    /// mutually independent.
    Colored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_sweeps: usize,
    /// Relative energy decrease per sweep.
    pub energy_tol: f64,
    /// Largest vertex displacement per sweep, relative to the target diameter.
    pub displacement_tol: f64,
    pub relaxation: Relaxation,
    /// Displacement, relative to the target diameter, that ends the inner
    /// iteration of one Fréchet step.
    pub inner_tol: f64,
    pub inner_max: usize,
    /// Upper bound for the adaptive over-relaxation factor.
    pub max_omega: f64,
    /// First level of the cascade; defaults to 0 on disks and 4 on spheres.
    pub start_level: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_sweeps: 20_000,
            energy_tol: 1e-10,
            displacement_tol: 1e-8,
            relaxation: Relaxation::Sweep,
            inner_tol: 1e-12,
            inner_max: 1,
            max_omega: 1.95,
            start_level: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |what: &str| Err(SolverError::Config(what.to_string()));
        if !(self.energy_tol > 0.0) || !(self.displacement_tol > 0.0) || !(self.inner_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_sweeps == 0 || self.inner_max == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.max_omega >= 1.0 && self.max_omega < 2.0) {
            return bad("max_omega must lie in [1, 2)");
        }
        Ok(())
    }
}

/// One progress line of the relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub level: usize,
    pub sweep: usize,
    pub energy: f64,
    pub max_displacement: f64,
    pub omega: f64,
}

/// Summary of one cascade level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub sweeps: usize,
    pub converged: bool,
    pub initial_energy: f64,
    pub report: EnergyReport,
    pub max_displacement: f64,
    /// Vertex updates reverted to the projection onto the constraint ball.
    pub projections: usize,
    /// Vertex updates skipped because a distance query failed.
    pub locality_failures: usize,
}

/// Converged (or partial) map on one level.
#[derive(Debug, Clone)]
pub struct LevelSolution {
    pub mesh: DomainMesh,
    pub map: PiecewiseMap,
    pub report: LevelReport,
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// Every level of the cascade, coarsest first.
    pub levels: Vec<LevelSolution>,
    pub progress: Vec<Progress>,
}

impl Solution {
    pub fn finest(&self) -> &LevelSolution {
        self.levels.last().expect("at least one level")
    }

    pub fn converged(&self) -> bool {
        self.levels.iter().all(|l| l.report.converged)
    }
}

/// Result of one Fréchet step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrechetStep {
    pub point: SurfacePoint,
    /// Local objective before and after the step.
    pub before: f64,
    pub after: f64,
    pub displacement: f64,
}

/// `Σ w_j d²(x, u_j)` and the logs from `x` to every `u_j`.
pub fn local_objective(surface: &ConeSurface, x: &SurfacePoint, nbrs: &[(SurfacePoint, f64)]) -> Result<(f64, Vec<LogResult>), GeodesicError> {
    let mut f = 0.0;
    let mut logs = Vec::with_capacity(nbrs.len());
    for (u, w) in nbrs {
        let l = surface.log(x, u)?;
        f += w * l.dist * l.dist;
        logs.push(l);
    }
    Ok((f, logs))
}

fn local_value(surface: &ConeSurface, x: &SurfacePoint, nbrs: &[(SurfacePoint, f64)]) -> Result<f64, GeodesicError> {
    let mut f = 0.0;
    for (u, w) in nbrs {
        let d = surface.dist(x, u)?;
        f += w * d * d;
    }
    Ok(f)
}

/// Angular distance between directions at a vertex of total angle `total`.
fn vertex_angle(a: f64, b: f64, total: f64, boundary: bool) -> f64 {
    let d = (a - b).abs();
    if boundary {
        d
    } else {
        let d = d.rem_euclid(total);
        d.min(total - d)
    }
}

/// Best descent direction at a cone vertex: maximizes
/// `g(ξ) = Σ w_j ρ_j cos(min(∠(ξ, θ_j), π))`, the negative half-derivative of
/// the objective along `ξ`.
fn cone_direction(logs: &[LogResult], weights: &[f64], total: f64, boundary: bool) -> (f64, f64) {
    let g = |xi: f64| -> f64 {
        logs.iter()
            .zip(weights)
            .map(|(l, w)| w * l.dist * vertex_angle(xi, l.angle, total, boundary).min(PI).cos())
            .sum()
    };
    const SAMPLES: usize = 256;
    let step = total / SAMPLES as f64;
    let mut best = (f64::NEG_INFINITY, 0.0);
    let candidates = (0..=SAMPLES).map(|i| i as f64 * step).chain(logs.iter().map(|l| l.angle));
    for xi in candidates {
        let v = g(xi);
        if v > best.0 {
            best = (v, xi);
        }
    }
    // Golden-section refinement around the best sample.
    let (mut a, mut b) = (best.1 - step, best.1 + step);
    if boundary {
        a = a.max(0.0);
        b = b.min(total);
    }
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - r * (b - a), a + r * (b - a));
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..40 {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - r * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + r * (b - a);
            gd = g(d);
        }
    }
    let xi = 0.5 * (a + b);
    let v = g(xi);
    if v > best.0 {
        (v, if boundary { xi } else { xi.rem_euclid(total) })
    } else {
        best
    }
}

fn march(surface: &ConeSurface, x: &SurfacePoint, theta: f64, len: f64) -> Result<(SurfacePoint, f64), GeodesicError> {
    match surface.exp_opt(x, theta, len, true) {
        Ok(hit) => Ok((hit.point, hit.traveled)),
        Err(GeodesicError::Boundary(p)) => {
            let d = surface.dist(x, &p)?;
            Ok((p, d))
        }
        Err(e) => Err(e),
    }
}

/// Moves `x` toward the minimizer of `Σ w_j d²(·, u_j)`. The step is scaled
/// by `omega` (over-relaxation); it is retried with smaller factors until
/// the objective does not increase.
pub fn frechet_step(surface: &ConeSurface, x: &SurfacePoint, nbrs: &[(SurfacePoint, f64)], omega: f64) -> Result<FrechetStep, GeodesicError> {
    let x = surface.normalize(x);
    let (f0, logs) = local_objective(surface, &x, nbrs)?;
    let stay = FrechetStep { point: x, before: f0, after: f0, displacement: 0.0 };
    let wsum: f64 = nbrs.iter().map(|n| n.1).sum();
    if !(wsum > 0.0) || f0 == 0.0 {
        return Ok(stay);
    }
    let weights: Vec<f64> = nbrs.iter().map(|n| n.1).collect();
    let (theta, len, omega) = match x {
        SurfacePoint::Vertex { v } if surface.is_bend_vertex(v) => {
            let total = surface.cone_angle_at(&x);
            let (g, xi) = cone_direction(&logs, &weights, total, surface.is_boundary_vertex(v));
            if g <= 0.0 {
                return Ok(stay);
            }
            // Exact minimizer along the ray on the flat tangent cone.
            (xi, g / wsum, 1.0)
        }
        _ => {
            let m: Complex64 = logs
                .iter()
                .zip(&weights)
                .map(|(l, w)| Complex64::from_polar(w * l.dist, l.angle))
                .sum::<Complex64>()
                / wsum;
            if m.norm() == 0.0 {
                return Ok(stay);
            }
            (m.arg().rem_euclid(TAU), m.norm(), omega)
        }
    };
    let mut scales = vec![omega];
    for s in [1.0, 0.5, 0.25, 0.125] {
        if s < omega {
            scales.push(s);
        }
    }
    for s in scales {
        let (y, moved) = march(surface, &x, theta, s * len)?;
        let f1 = local_value(surface, &y, nbrs)?;
        if f1 <= f0 {
            return Ok(FrechetStep { point: y, before: f0, after: f1, displacement: moved });
        }
    }
    Ok(stay)
}

/// Constraint ball `(centre, radius)` of a Dirichlet problem.
pub type Ball = (SurfacePoint, f64);

/// Gauss–Seidel relaxation on one level.
struct Relaxer<'a> {
    mesh: &'a DomainMesh,
    surface: &'a ConeSurface,
    fixed: Vec<bool>,
    order: Vec<usize>,
    ball: Option<Ball>,
    config: &'a SolverConfig,
}

struct Sweep {
    delta: f64,
    max_disp: f64,
    projections: usize,
    failures: usize,
}

impl<'a> Relaxer<'a> {
    fn new(mesh: &'a DomainMesh, surface: &'a ConeSurface, fixed: Vec<bool>, ball: Option<Ball>, config: &'a SolverConfig) -> Self {
        let order = match config.relaxation {
            Relaxation::Sweep => (0..mesh.n_vertices()).collect(),
            Relaxation::Colored => {
                let colors = greedy_coloring(mesh);
                let mut order: Vec<usize> = (0..mesh.n_vertices()).collect();
                order.sort_by_key(|&v| (colors[v], v));
                order
            }
        };
        Relaxer { mesh, surface, fixed, order, ball, config }
    }

    fn sweep(&self, values: &mut [SurfacePoint], omega: f64) -> Sweep {
        let diam = self.surface.diameter();
        let mut out = Sweep { delta: 0.0, max_disp: 0.0, projections: 0, failures: 0 };
        let mut nbrs = Vec::new();
        for &i in &self.order {
            if self.fixed[i] {
                continue;
            }
            nbrs.clear();
            nbrs.extend(self.mesh.neighbors[i].iter().map(|&(j, w)| (values[j], w)));
            let mut x = values[i];
            let mut moved_total = 0.0;
            for _ in 0..self.config.inner_max {
                let step = match frechet_step(self.surface, &x, &nbrs, omega) {
                    Ok(s) => s,
                    Err(_) => {
                        out.failures += 1;
                        break;
                    }
                };
                let mut y = step.point;
                let mut after = step.after;
                if let Some((c, r)) = &self.ball {
                    match self.project(c, *r, &y, &nbrs) {
                        Ok(Some((p, f))) => {
                            out.projections += 1;
                            if f > step.before {
                                break;
                            }
                            y = p;
                            after = f;
                        }
                        Ok(None) => {}
                        Err(_) => {
                            out.failures += 1;
                            break;
                        }
                    }
                }
                out.delta += after - step.before;
                moved_total += step.displacement;
                x = y;
                if step.displacement <= self.config.inner_tol * diam {
                    break;
                }
            }
            values[i] = x;
            out.max_disp = out.max_disp.max(moved_total);
        }
        out
    }

    /// Projection of `y` onto the constraint ball, with the new objective.
    fn project(&self, c: &SurfacePoint, r: f64, y: &SurfacePoint, nbrs: &[(SurfacePoint, f64)]) -> Result<Option<(SurfacePoint, f64)>, GeodesicError> {
        let d = self.surface.dist(c, y)?;
        if d <= r {
            return Ok(None);
        }
        let p = self.surface.geodesic_point(c, y, r / d)?;
        Ok(Some((p, local_value(self.surface, &p, nbrs)?)))
    }

    fn run(&self, level: usize, values: &mut [SurfacePoint], progress: &mut Vec<Progress>) -> Result<LevelReport, SolverError> {
        let cfg = self.config;
        let map = PiecewiseMap { domain: self.mesh.kind, level, values: values.to_vec() };
        let initial_energy = energy_report(self.mesh, self.surface, &map)?.energy;
        let mut energy = initial_energy;
        let diam = self.surface.diameter();
        let mut omega = 1.0;
        let mut disps = Vec::new();
        let mut converged = false;
        let mut sweeps = 0;
        let mut max_disp = 0.0;
        let mut projections = 0;
        let mut failures = 0;
        while sweeps < cfg.max_sweeps {
            let s = self.sweep(values, omega);
            sweeps += 1;
            let prev = energy;
            energy += s.delta;
            max_disp = s.max_disp;
            projections += s.projections;
            failures += s.failures;
            progress.push(Progress { level, sweep: sweeps, energy, max_displacement: max_disp, omega });
            disps.push(max_disp);
            if cfg.max_omega > 1.0 && (sweeps == 10 || (sweeps >= 40 && sweeps % 30 == 10)) {
                omega = adapt_omega(&disps, omega, cfg.max_omega);
            }
            let rel = if prev > 0.0 { (prev - energy) / prev } else { 0.0 };
            if rel < cfg.energy_tol && max_disp < cfg.displacement_tol * diam {
                converged = true;
                break;
            }
        }
        let map = PiecewiseMap { domain: self.mesh.kind, level, values: values.to_vec() };
        let report = energy_report(self.mesh, self.surface, &map)?;
        Ok(LevelReport { level, sweeps, converged, initial_energy, report, max_displacement: max_disp, projections, locality_failures: failures })
    }
}

/// Over-relaxation factor from the observed contraction `λ` of the last
/// sweeps. With `ω` below the optimum, `(λ + ω − 1)² = λ ω² μ²` gives the
/// Jacobi radius `μ`, and the optimum is `2 / (1 + √(1 − μ²))`. The factor
/// only grows.
fn adapt_omega(disps: &[f64], omega: f64, max_omega: f64) -> f64 {
    let n = disps.len();
    let k = 5.min(n - 1);
    let lambda = (disps[n - 1] / disps[n - 1 - k]).powf(1.0 / k as f64);
    if !(lambda.is_finite() && lambda > 0.0 && lambda < 1.0) || lambda <= omega - 1.0 {
        return omega;
    }
    let mu2 = (lambda + omega - 1.0).powi(2) / (lambda * omega * omega);
    if !(mu2 < 1.0) {
        return omega;
    }
    (2.0 / (1.0 + (1.0 - mu2).sqrt())).clamp(omega, max_omega)
}

fn greedy_coloring(mesh: &DomainMesh) -> Vec<usize> {
    let mut color = vec![usize::MAX; mesh.n_vertices()];
    for v in 0..mesh.n_vertices() {
        let used: Vec<usize> = mesh.neighbors[v].iter().map(|&(j, _)| color[j]).collect();
        color[v] = (0..).find(|c| !used.contains(c)).expect("free colour");
    }
    color
}

/// Disk Dirichlet problem: boundary values along `mesh.boundary`, and an
/// optional ball that must contain the image.
#[derive(Debug, Clone)]
pub struct DirichletProblem {
    pub mesh: DomainMesh,
    pub trace: Vec<SurfacePoint>,
    pub ball: Option<Ball>,
}

impl DirichletProblem {
    pub fn new(mesh: DomainMesh, trace: Vec<SurfacePoint>, ball: Option<Ball>) -> Result<Self, SolverError> {
        if mesh.kind != DomainKind::Disk {
            return Err(SolverError::Trace("Dirichlet problems live on the disk".into()));
        }
        if trace.len() != mesh.boundary.len() {
            return Err(SolverError::Trace(format!("{} trace values for {} boundary vertices", trace.len(), mesh.boundary.len())));
        }
        Ok(DirichletProblem { mesh, trace, ball })
    }

    /// Samples the trace `g` at the boundary vertices of the level-`level` disk.
    pub fn from_fn(level: usize, g: impl Fn(&V3) -> Result<SurfacePoint, GeodesicError>) -> Result<Self, SolverError> {
        let mesh = build_disk_mesh(level);
        let trace = mesh.boundary.iter().map(|&v| g(&mesh.positions[v])).collect::<Result<_, _>>()?;
        Self::new(mesh, trace, None)
    }

    /// Checks that consecutive boundary images are within the convexity
    /// radius and inside the constraint ball.
    pub fn check(&self, surface: &ConeSurface) -> Result<(), SolverError> {
        let r = surface.convexity_radius();
        let n = self.trace.len();
        for k in 0..n {
            let d = surface.dist(&self.trace[k], &self.trace[(k + 1) % n])?;
            if d > r {
                return Err(SolverError::Trace(format!("boundary images {k} and {} are {d} apart, beyond the convexity radius {r}", (k + 1) % n)));
            }
        }
        if let Some((c, rad)) = &self.ball {
            for (k, p) in self.trace.iter().enumerate() {
                let d = surface.dist(c, p)?;
                if d > rad + 1e-12 {
                    return Err(SolverError::Trace(format!("boundary image {k} lies outside the constraint ball")));
                }
            }
        }
        Ok(())
    }

    /// Trace on the boundary of a coarser disk: values at shared boundary
    /// positions, geodesic interpolation by angle otherwise.
    fn restrict(&self, surface: &ConeSurface, coarse: &DomainMesh) -> Result<Vec<SurfacePoint>, SolverError> {
        let angle = |p: &V3| p.y.atan2(p.x).rem_euclid(TAU);
        let fine: Vec<f64> = self.mesh.boundary.iter().map(|&v| angle(&self.mesh.positions[v])).collect();
        let mut order: Vec<usize> = (0..fine.len()).collect();
        order.sort_by(|&a, &b| fine[a].total_cmp(&fine[b]));
        coarse
            .boundary
            .iter()
            .map(|&v| {
                let a = angle(&coarse.positions[v]);
                let k = order.partition_point(|&i| fine[i] < a - 1e-12);
                let hi = order[k % order.len()];
                if (fine[hi] - a).abs() <= 1e-12 {
                    return Ok(self.trace[hi]);
                }
                let lo = order[(k + order.len() - 1) % order.len()];
                let span = (fine[hi] - fine[lo]).rem_euclid(TAU);
                let t = (a - fine[lo]).rem_euclid(TAU) / span;
                Ok(surface.geodesic_point(&self.trace[lo], &self.trace[hi], t)?)
            })
            .collect()
    }
}

/// Images of the vertices of `fine` under a coarse map. Fine vertices
/// outside the coarse polygon take the image of the nearest coarse vertex.
pub fn prolong(coarse: &DomainMesh, map: &PiecewiseMap, surface: &ConeSurface, fine: &DomainMesh) -> Result<Vec<SurfacePoint>, GeodesicError> {
    fine.positions
        .iter()
        .map(|x| match coarse.locate(x) {
            // Coarse vertices keep their values exactly.
            Some((f, b)) => match (0..3).find(|&k| b[k] > 1.0 - 1e-9) {
                Some(k) => Ok(map.values[coarse.faces[f][k]]),
                None => map.evaluate(coarse, surface, f, &b),
            },
            None => {
                let v = (0..coarse.n_vertices())
                    .min_by(|&a, &b| (coarse.positions[a] - x).norm().total_cmp(&(coarse.positions[b] - x).norm()))
                    .expect("nonempty mesh");
                Ok(map.values[v])
            }
        })
        .collect()
}

/// Largest ratio `d(u_i, u_j) / |x_i − x_j|` over edges inside `|x| < 1/2`.
pub fn interior_lipschitz(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap) -> Result<f64, GeodesicError> {
    let mut best: f64 = 0.0;
    for i in 0..mesh.n_vertices() {
        if mesh.positions[i].norm() >= 0.5 {
            continue;
        }
        for &(j, _) in &mesh.neighbors[i] {
            if j < i || mesh.positions[j].norm() >= 0.5 {
                continue;
            }
            let d = surface.dist(&map.values[i], &map.values[j])?;
            best = best.max(d / mesh.dist(&mesh.positions[i], &mesh.positions[j]));
        }
    }
    Ok(best)
}

/// Solves the Dirichlet problem cascadically from `config.start_level`
/// (default 0) up to the level of `problem.mesh`.
pub fn solve_dirichlet(problem: &DirichletProblem, surface: &ConeSurface, config: &SolverConfig) -> Result<Solution, SolverError> {
    config.validate()?;
    problem.check(surface)?;
    let top = problem.mesh.level;
    let start = config.start_level.unwrap_or(0).min(top);
    let mut progress = Vec::new();
    let mut levels: Vec<LevelSolution> = Vec::new();
    for level in start..=top {
        let mesh = if level == top { problem.mesh.clone() } else { build_disk_mesh(level) };
        let trace = if level == top { problem.trace.clone() } else { problem.restrict(surface, &mesh)? };
        let mut values = match levels.last() {
            Some(prev) => prolong(&prev.mesh, &prev.map, surface, &mesh)?,
            None => {
                // Interior vertices start at the image of the nearest boundary vertex.
                (0..mesh.n_vertices())
                    .map(|v| {
                        let k = (0..mesh.boundary.len())
                            .min_by(|&a, &b| {
                                let da = (mesh.positions[mesh.boundary[a]] - mesh.positions[v]).norm();
                                let db = (mesh.positions[mesh.boundary[b]] - mesh.positions[v]).norm();
                                da.total_cmp(&db)
                            })
                            .expect("boundary");
                        trace[k]
                    })
                    .collect()
            }
        };
        let mut fixed = vec![false; mesh.n_vertices()];
        for (k, &v) in mesh.boundary.iter().enumerate() {
            values[v] = trace[k];
            fixed[v] = true;
        }
        let relaxer = Relaxer::new(&mesh, surface, fixed, problem.ball.clone(), config);
        let report = relaxer.run(level, &mut values, &mut progress)?;
        let map = PiecewiseMap { domain: DomainKind::Disk, level, values };
        levels.push(LevelSolution { mesh, map, report });
    }
    Ok(Solution { levels, progress })
}

/// Moves, for every target cone point of angle > 2π, the domain vertex with
/// the nearest image onto it. Returns the anchored vertices.
pub fn anchor_cones(mesh: &DomainMesh, surface: &ConeSurface, map: &mut PiecewiseMap) -> Result<Vec<usize>, SolverError> {
    let mut anchored = Vec::new();
    for c in 0..surface.n_vertices() {
        if surface.beta(c) <= 1.0 + 1e-9 {
            continue;
        }
        let apex = SurfacePoint::vertex(c);
        let mut best = (f64::INFINITY, 0);
        for v in 0..mesh.n_vertices() {
            // Points beyond the search bound are never the nearest.
            let Ok(d) = surface.dist(&map.values[v], &apex) else { continue };
            if d < best.0 {
                best = (d, v);
            }
        }
        if !best.0.is_finite() || anchored.contains(&best.1) {
            return Err(SolverError::Construction(format!("no distinct domain vertex near cone point {c}")));
        }
        map.values[best.1] = apex;
        anchored.push(best.1);
    }
    Ok(anchored)
}

/// Builds the initial map of a sphere mesh from a correspondence of domain
/// points with target points. Faces are then filled by geodesic cones over
/// their image triangles. Returns the map and the per-face Lipschitz
/// constants of the boundary parameterization.
pub fn initial_map(
    mesh: &DomainMesh,
    surface: &ConeSurface,
    correspondence: impl Fn(&V3) -> Option<SurfacePoint>,
) -> Result<(PiecewiseMap, Vec<f64>), SolverError> {
    let values = mesh
        .positions
        .iter()
        .enumerate()
        .map(|(i, x)| correspondence(x).ok_or_else(|| SolverError::Construction(format!("vertex {i} has no image"))))
        .collect::<Result<Vec<_>, _>>()?;
    let map = PiecewiseMap::new(mesh, values);
    let sd = side_distances(mesh, surface, &map)?;
    let radius = surface.convexity_radius();
    let mut lipschitz = Vec::with_capacity(mesh.n_faces());
    for f in 0..mesh.n_faces() {
        let d = sd.d2[f].map(f64::sqrt);
        if d.iter().any(|&x| x > radius) {
            return Err(SolverError::Construction(format!("face {f}: image triangle leaves the convexity radius {radius}")));
        }
        if !mesh.degenerate[f] {
            let mut s = d;
            s.sort_by(f64::total_cmp);
            if s[2] >= s[0] + s[1] - 1e-12 * s[2].max(1e-300) {
                return Err(SolverError::Construction(format!("face {f}: image triangle is degenerate")));
            }
        }
        let l = (0..3).map(|k| d[k] / mesh.face_lengths[f][k]).fold(0.0, f64::max);
        lipschitz.push(l);
    }
    Ok((map, lipschitz))
}

/// Domain points held fixed on the sphere to remove the Möbius freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pins(pub [[f64; 3]; 3]);

impl Pins {
    /// South pole and two corners of the base triangle.
    pub fn standard() -> Self {
        let c = corner_directions();
        Pins([[0.0, 0.0, -1.0], c[0], c[1]])
    }

    /// North pole and the other two corners.
    pub fn alternate() -> Self {
        let c = corner_directions();
        Pins([[0.0, 0.0, 1.0], c[1], c[2]])
    }

    /// Vertices nearest to the pin directions.
    pub fn vertices(&self, mesh: &DomainMesh) -> [usize; 3] {
        self.0.map(|d| {
            let d = V3::new(d[0], d[1], d[2]).normalize();
            (0..mesh.n_vertices())
                .min_by(|&a, &b| (mesh.positions[a] - d).norm().total_cmp(&(mesh.positions[b] - d).norm()))
                .expect("nonempty mesh")
        })
    }
}

/// Equator points that are vertices of every sphere mesh.
fn corner_directions() -> [[f64; 3]; 3] {
    let m = build_sphere_mesh(0);
    let mut eq: Vec<V3> = m.positions.iter().filter(|p| p.z.abs() < 1e-12).cloned().collect();
    eq.sort_by(|a, b| a.y.atan2(a.x).total_cmp(&b.y.atan2(b.x)));
    let mut out = [[1.0, 0.0, 0.0]; 3];
    for (k, p) in eq.iter().take(3).enumerate() {
        out[k] = [p.x, p.y, p.z];
    }
    out
}

/// Fraction of the energy in the most energetic 1% of the domain area, and
/// the area share it occupies.
pub fn energy_concentration(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap) -> Result<(f64, f64), SolverError> {
    let sd = side_distances(mesh, surface, map)?;
    let mut faces: Vec<(f64, f64)> = (0..mesh.n_faces())
        .map(|f| {
            let q = crate::energy_forms::face_form(mesh, f, &sd.d2[f]);
            let a = mesh.face_area[f];
            ((q[0] + q[1]) * a, a)
        })
        .collect();
    let total_e: f64 = faces.iter().map(|x| x.0).sum();
    let total_a: f64 = faces.iter().map(|x| x.1).sum();
    faces.sort_by(|x, y| (y.0 / y.1.max(1e-300)).total_cmp(&(x.0 / x.1.max(1e-300))));
    let (mut e, mut a) = (0.0, 0.0);
    for (fe, fa) in faces {
        if a + fa > 0.01 * total_a {
            break;
        }
        e += fe;
        a += fa;
    }
    Ok((if total_e > 0.0 { e / total_e } else { 0.0 }, a / total_a))
}

/// Minimizes energy on one sphere level from `initial`, holding the pinned
/// vertices at their initial images.
pub fn solve_closed(
    mesh: &DomainMesh,
    surface: &ConeSurface,
    initial: &PiecewiseMap,
    pins: &Pins,
    config: &SolverConfig,
    progress: &mut Vec<Progress>,
) -> Result<LevelSolution, SolverError> {
    config.validate()?;
    initial.check(mesh)?;
    let e0 = energy_report(mesh, surface, initial)?.energy;
    if !(e0 > 0.0) {
        return Err(SolverError::Degenerate(e0));
    }
    let mut fixed = vec![false; mesh.n_vertices()];
    for v in pins.vertices(mesh) {
        fixed[v] = true;
    }
    // A star whose centre leaves a cone point of angle > 2π straddles it, and
    // the side-length form of such faces undercounts their image; holding
    // the cone preimages keeps the discrete energy faithful there.
    for (v, x) in initial.values.iter().enumerate() {
        if let SurfacePoint::Vertex { v: c } = surface.normalize(x) {
            if surface.beta(c) > 1.0 + 1e-9 {
                fixed[v] = true;
            }
        }
    }
    let mut values = initial.values.clone();
    let relaxer = Relaxer::new(mesh, surface, fixed, None, config);
    let report = relaxer.run(mesh.level, &mut values, progress)?;
    let map = PiecewiseMap { domain: DomainKind::Sphere, level: mesh.level, values };
    let (share, area_share) = energy_concentration(mesh, surface, &map)?;
    if share > 0.5 {
        return Err(SolverError::Bubbling { share, area_share });
    }
    Ok(LevelSolution { mesh: mesh.clone(), map, report })
}

/// Cascadic sphere uniformization: the initial map on the start level (default
/// 4) comes from `correspondence`; every finer level starts from the previous
/// solution. Coarser sphere meshes let the discrete energy collapse.
pub fn uniformize(
    surface: &ConeSurface,
    correspondence: impl Fn(&V3) -> Option<SurfacePoint>,
    level: usize,
    pins: &Pins,
    config: &SolverConfig,
) -> Result<Solution, SolverError> {
    config.validate()?;
    let start = config.start_level.unwrap_or(4).min(level);
    let mut progress = Vec::new();
    let mut levels: Vec<LevelSolution> = Vec::new();
    for n in start..=level {
        let mesh = build_sphere_mesh(n);
        let initial = match levels.last() {
            Some(prev) => PiecewiseMap::new(&mesh, prolong(&prev.mesh, &prev.map, surface, &mesh)?),
            None => {
                let mut map = initial_map(&mesh, surface, &correspondence)?.0;
                anchor_cones(&mesh, surface, &mut map)?;
                map
            }
        };
        levels.push(solve_closed(&mesh, surface, &initial, pins, config, &mut progress)?);
    }
    Ok(Solution { levels, progress })
}
