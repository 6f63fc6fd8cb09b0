//! Quasiconformal distortion, winding numbers, branch sets and degree,
//! energy–area verdicts and the Möbius uniqueness check.

use crate::domain_mesh::{DomainKind, DomainMesh};
use crate::energy_forms::closed_form::{inverse_stereographic, stereographic};
use crate::energy_forms::Raster;
use crate::energy_forms::{default_cell, energy_report_from, side_distances, EnergyError, PiecewiseMap, SideDistances};
use crate::model::V3;
use crate::tangent_analysis::{blowup_with, fit_tangent_map, AnalysisError, ModelKind, Probe, TangentFit, MIN_CELLS};
use crate::target_surface::{ConeSurface, GeodesicError, SurfacePoint, TangentConeChart};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QcError {
    #[error("stretch k = {0} is not in [0, 1)")]
    Stretch(f64),
    #[error("resolution: {0}")]
    Resolution(String),
    #[error("winding undefined: {0}")]
    Winding(String),
    #[error("not invertible: {0}")]
    NotInvertible(String),
    #[error("incompatible maps: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
}

/// `H(k) = (k^{-½} + k^{½}) / (k^{-½} − k^{½})`, and 1 at `k = 0`.
pub fn h_of_k(k: f64) -> Result<f64, QcError> {
    if !(0.0..1.0).contains(&k) {
        return Err(QcError::Stretch(k));
    }
    if k == 0.0 {
        return Ok(1.0);
    }
    // Multiplied through by k^{½}.
    Ok((1.0 + k) / (1.0 - k))
}

/// Ratios `L/l` of the largest to the smallest image distance on circles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HEstimate {
    pub radii: Vec<f64>,
    pub big: Vec<f64>,
    pub small: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Larger ratio of the two finest radii; infinite if some `l = 0`.
    pub h: f64,
    pub infinite: bool,
}

/// Samples per circle for distortion and winding estimates.
pub const QC_SAMPLES: usize = 256;

/// Distortion at `p0` over the ladder `r, r/2, r/4`; `None` picks the
/// largest `r` whose quarter is still resolved.
pub fn h_estimate(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap, p0: &V3, r: Option<f64>) -> Result<HEstimate, QcError> {
    let probe = Probe::new(mesh, surface, map, p0)?;
    h_estimate_with(&probe, r)
}

pub fn h_estimate_with(probe: &Probe, r: Option<f64>) -> Result<HEstimate, QcError> {
    let floor = MIN_CELLS * probe.cell;
    let r = r.unwrap_or_else(|| (4.0 * floor).min(0.5 * probe.max_radius()));
    let radii: Vec<f64> = [r, r / 2.0, r / 4.0].into_iter().filter(|&s| s >= floor && s <= probe.max_radius()).collect();
    if radii.is_empty() {
        return Err(QcError::Resolution(format!("no radius of r, r/2, r/4 = {r}, … is above {floor}")));
    }
    let mut out = HEstimate { radii: radii.clone(), big: Vec::new(), small: Vec::new(), ratios: Vec::new(), h: 1.0, infinite: false };
    for &s in &radii {
        let mut big: f64 = 0.0;
        let mut small = f64::INFINITY;
        for u in probe.circle(s, QC_SAMPLES)? {
            let d = probe.surface.dist(&probe.image, &u)?;
            big = big.max(d);
            small = small.min(d);
        }
        out.big.push(big);
        out.small.push(small);
        out.ratios.push(if small > 0.0 { big / small } else { f64::INFINITY });
    }
    let n = out.ratios.len();
    out.h = out.ratios[n.saturating_sub(2)..].iter().copied().fold(0.0, f64::max);
    out.infinite = out.h.is_infinite();
    Ok(out)
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

/// A winding number with the distance of its sweep from the integer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Winding {
    pub w: i64,
    pub sweep: f64,
    pub defect: f64,
}

/// Allowed distance of a winding sweep from an integer.
pub const WINDING_TOL: f64 = 0.1;

/// Signed winding number of the image of the circle of radius `r` about
/// `p0` around `u(p0)`, in units of the full cone angle there.
pub fn winding_number(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap, p0: &V3, r: f64) -> Result<Winding, QcError> {
    let probe = Probe::new(mesh, surface, map, p0)?;
    winding_with(&probe, r)
}

pub fn winding_with(probe: &Probe, r: f64) -> Result<Winding, QcError> {
    let chart = TangentConeChart::new(probe.surface, &probe.image);
    let period = TAU * chart.beta;
    let mut n = QC_SAMPLES;
    loop {
        let mut angles = Vec::with_capacity(n);
        for u in probe.circle(r, n)? {
            let l = chart.log(probe.surface, &u)?;
            if !(l.rho > 0.0) {
                return Err(QcError::Winding(format!("the image circle of radius {r} meets the image of the centre")));
            }
            angles.push(l.theta);
        }
        let steps: Vec<f64> = (0..n).map(|j| wrap(angles[(j + 1) % n] - angles[j], period)).collect();
        let largest = steps.iter().map(|s| s.abs()).fold(0.0, f64::max);
        // Unwrapping is unambiguous only while consecutive samples turn little.
        if largest > 0.25 * period && n < 16_384 {
            n *= 2;
            continue;
        }
        let sweep = steps.iter().sum::<f64>() / period;
        let w = sweep.round();
        let defect = (sweep - w).abs();
        if defect > WINDING_TOL {
            return Err(QcError::Resolution(format!("sweep {sweep:.3} is not near an integer")));
        }
        return Ok(Winding { w: w as i64, sweep, defect });
    }
}

/// Vertices that carry a star winding: interior, with a nondegenerate face.
pub fn has_star(mesh: &DomainMesh, v: usize) -> bool {
    !mesh.is_boundary[v] && mesh.vertex_faces[v].iter().any(|&f| !mesh.degenerate[f])
}

/// Combinatorial winding of the image of the link of every interior vertex
/// around the image of the vertex, `None` where undefined.
pub fn star_windings(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap) -> Result<Vec<Option<i64>>, QcError> {
    let mut out = Vec::with_capacity(mesh.n_vertices());
    for v in 0..mesh.n_vertices() {
        if !has_star(mesh, v) {
            out.push(None);
            continue;
        }
        let chart = TangentConeChart::new(surface, &map.values[v]);
        let period = TAU * chart.beta;
        let mut dir = BTreeMap::new();
        let mut ok = true;
        let mut sweep = 0.0;
        for &f in &mesh.vertex_faces[v] {
            let face = mesh.faces[f];
            let k = face.iter().position(|&x| x == v).expect("incident face");
            let (a, b) = (face[(k + 1) % 3], face[(k + 2) % 3]);
            let mut angle = |x: usize| -> Result<Option<f64>, QcError> {
                if let Some(&t) = dir.get(&x) {
                    return Ok(t);
                }
                let l = chart.log(surface, &map.values[x])?;
                let t = if l.rho > 0.0 { Some(l.theta) } else { None };
                dir.insert(x, t);
                Ok(t)
            };
            match (angle(a)?, angle(b)?) {
                (Some(ta), Some(tb)) => sweep += wrap(tb - ta, period),
                _ => ok = false,
            }
        }
        let w = sweep / period;
        out.push(if ok && (w - w.round()).abs() < 1e-6 { Some(w.round() as i64) } else { None });
    }
    Ok(out)
}

/// Orientation sign of every face image (`0` for degenerate faces and
/// images), from the turn at its first corner.
pub fn face_orientations(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap) -> Result<Vec<i8>, QcError> {
    let mut out = Vec::with_capacity(mesh.n_faces());
    for (f, face) in mesh.faces.iter().enumerate() {
        if mesh.degenerate[f] {
            out.push(0);
            continue;
        }
        let chart = TangentConeChart::new(surface, &map.values[face[0]]);
        let a = chart.log(surface, &map.values[face[1]])?;
        let b = chart.log(surface, &map.values[face[2]])?;
        let turn = wrap(b.theta - a.theta, TAU * chart.beta);
        out.push(if a.rho > 0.0 && b.rho > 0.0 && turn.abs() > 1e-12 { turn.signum() as i8 } else { 0 });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchPoint {
    pub vertex: usize,
    pub position: [f64; 3],
    /// Largest star winding in the cluster.
    pub star_winding: i64,
    /// Winding on a circle around the cluster, if resolved.
    pub circle_winding: Option<i64>,
    /// Vertices of the cluster.
    pub cluster: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeWinding {
    pub position: [f64; 3],
    pub winding: Option<Winding>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchReport {
    pub probes: Vec<ProbeWinding>,
    pub branch: Vec<BranchPoint>,
    /// Signed coverage counts at the generic target cells.
    pub fiber_counts: Vec<i64>,
    /// Common fiber count, if all agree.
    pub degree: Option<i64>,
    pub sign_consistent: bool,
    /// Stars outside branch clusters, and branch points, whose winding has
    /// the minority sign or is 0.
    pub sign_violations: usize,
    pub undefined_stars: usize,
    /// Faces whose image has the minority orientation.
    pub flipped_faces: usize,
}

impl BranchReport {
    /// Degree one, no branch points and one orientation everywhere.
    pub fn homeomorphism(&self) -> bool {
        self.degree.map(i64::abs) == Some(1) && self.branch.is_empty() && self.sign_consistent
    }
}

/// Number of generic target cells used for fiber counts.
pub const FIBER_CELLS: usize = 5;
/// Generic cells keep this many image cells away from branch values.
pub const GENERIC_CELLS: f64 = 5.0;

/// Branch set from star windings confirmed on circles, degree from signed
/// fiber counts over generic target cells, and windings at `probes`.
pub fn branch_and_degree(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap, probes: &[V3], seed: u64) -> Result<BranchReport, QcError> {
    let stars = star_windings(mesh, surface, map)?;
    let interior = (0..mesh.n_vertices()).filter(|&v| has_star(mesh, v)).count();
    let undefined = stars.iter().enumerate().filter(|(v, w)| has_star(mesh, *v) && w.is_none()).count();
    if undefined == interior {
        return Err(QcError::Winding("no vertex has a defined star winding".into()));
    }
    let pos = stars.iter().flatten().filter(|&&w| w > 0).count();
    let neg = stars.iter().flatten().filter(|&&w| w < 0).count();

    // Candidates: vertices with |w| ≥ 2 and corners of faces whose image has
    // the minority orientation, where a branch point inside a face shows up.
    let orient = face_orientations(mesh, surface, map)?;
    let major = if neg > pos { -1 } else { 1 };
    let flipped = orient.iter().filter(|&&o| o == -major).count();
    let mut high: BTreeSet<usize> = (0..stars.len()).filter(|&v| stars[v].is_some_and(|w| w.abs() >= 2)).collect();
    for (f, &o) in orient.iter().enumerate() {
        if o == -major {
            high.extend(mesh.faces[f]);
        }
    }
    let mut seen = BTreeSet::new();
    let mut branch = Vec::new();
    for &v in &high {
        if !seen.insert(v) {
            continue;
        }
        let mut cluster = vec![v];
        let mut queue = VecDeque::from([v]);
        while let Some(x) = queue.pop_front() {
            for &(y, _) in &mesh.neighbors[x] {
                if high.contains(&y) && seen.insert(y) {
                    cluster.push(y);
                    queue.push_back(y);
                }
            }
        }
        cluster.sort_unstable();
        // Representative: the cluster vertex nearest to the cluster's mean.
        let mean = cluster.iter().map(|&x| mesh.positions[x]).sum::<V3>() / cluster.len() as f64;
        let rep = *cluster.iter().min_by(|&&a, &&b| (mesh.positions[a] - mean).norm().total_cmp(&(mesh.positions[b] - mean).norm())).expect("nonempty");
        let p = mesh.positions[rep];
        let circle_winding = Probe::new(mesh, surface, map, &p).ok().and_then(|probe| {
            let r = (2.0 * MIN_CELLS * probe.cell).min(probe.max_radius());
            winding_with(&probe, r).ok().map(|w| w.w)
        });
        // A circle around a folded cluster may unwind it; keep only confirmed points.
        if circle_winding.is_some_and(|w| w.abs() < 2) {
            continue;
        }
        let star_winding = cluster.iter().filter_map(|&x| stars[x]).max_by_key(|w| w.abs()).unwrap_or(0);
        branch.push(BranchPoint { vertex: rep, position: [p.x, p.y, p.z], star_winding, circle_winding, cluster });
    }

    let probes = probes
        .iter()
        .map(|p| {
            let r = Probe::new(mesh, surface, map, p)
                .map_err(QcError::from)
                .and_then(|probe| winding_with(&probe, (2.0 * MIN_CELLS * probe.cell).min(probe.max_radius())));
            match r {
                Ok(w) => ProbeWinding { position: [p.x, p.y, p.z], winding: Some(w), error: None },
                Err(e) => ProbeWinding { position: [p.x, p.y, p.z], winding: None, error: Some(e.to_string()) },
            }
        })
        .collect();

    let fiber_counts = fiber_counts(mesh, surface, map, &branch, seed)?;
    let degree = match fiber_counts.first() {
        Some(&d) if fiber_counts.iter().all(|&c| c == d) => Some(d),
        _ => None,
    };
    // Stars inside a confirmed branch cluster may fold; the sign of w_# there
    // is the circle winding of the cluster.
    let inside: BTreeSet<usize> = branch.iter().flat_map(|b| b.cluster.iter().copied()).collect();
    let major = if neg > pos { -1 } else { 1 };
    let sign_violations = (0..stars.len())
        .filter(|v| !inside.contains(v))
        .filter(|&v| stars[v].is_some_and(|w| w.signum() != major))
        .count()
        + branch.iter().filter(|b| b.circle_winding.is_some_and(|w| w.signum() != major)).count();
    Ok(BranchReport { probes, branch, fiber_counts, degree, sign_consistent: sign_violations == 0, sign_violations, undefined_stars: undefined, flipped_faces: flipped })
}

/// Signed coverage counts at random target cells away from branch values
/// and from the image of the domain boundary.
fn fiber_counts(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap, branch: &[BranchPoint], seed: u64) -> Result<Vec<i64>, QcError> {
    let sd = side_distances(mesh, surface, map)?;
    // Image cell size around a vertex: its longest incident image side.
    let reach = |v: usize| GENERIC_CELLS * mesh.vertex_faces[v].iter().map(|&f| sd.max_side[f]).fold(0.0, f64::max);
    let keep_off: Vec<(SurfacePoint, f64)> = branch
        .iter()
        .flat_map(|b| b.cluster.iter().copied())
        .chain(mesh.boundary.iter().copied())
        .map(|v| (map.values[v], reach(v)))
        .collect();
    let raster = Raster::new(surface, default_cell(surface));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = Vec::new();
    let mut tries = 0;
    while counts.len() < FIBER_CELLS && tries < 200 {
        tries += 1;
        let q = raster.cell_point(rng.gen_range(0..raster.n_cells()));
        let mut generic = true;
        for (b, r) in &keep_off {
            if surface.dist(b, &q).map_or(true, |d| d < *r) {
                generic = false;
                break;
            }
        }
        if !generic {
            continue;
        }
        let (signed, touching) = fiber_count_at(mesh, surface, map, &sd, &q);
        if touching > 0 {
            counts.push(signed);
        }
    }
    if counts.len() < 3 {
        return Err(QcError::Resolution(format!("only {} generic target cells found", counts.len())));
    }
    Ok(counts)
}

/// Signed and unsigned number of face images containing `q`. Seen from `q`,
/// a short geodesic side subtends its wrapped angle difference, so the
/// winding of a face image around `q` is exact.
pub fn fiber_count_at(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap, sd: &SideDistances, q: &SurfacePoint) -> (i64, usize) {
    let chart = TangentConeChart::new(surface, q);
    let period = TAU * chart.beta;
    let bound = sd.max_side.iter().copied().fold(0.0, f64::max) * (1.0 + 1e-9);
    // Vertices beyond every image side belong only to faces missing q.
    let logs: Vec<Option<(f64, f64)>> =
        map.values.iter().map(|p| surface.log_bounded(q, p, bound).ok().map(|l| (l.dist, l.angle))).collect();
    let mut signed = 0;
    let mut touching = 0;
    for (f, face) in mesh.faces.iter().enumerate() {
        if mesh.degenerate[f] {
            continue;
        }
        let Some(c) = face.iter().map(|&v| logs[v]).collect::<Option<Vec<_>>>() else { continue };
        // A face image holding q has every corner within its longest side.
        if c.iter().any(|&(d, _)| d == 0.0 || d > sd.max_side[f] * (1.0 + 1e-9)) {
            continue;
        }
        let turn = (0..3).map(|k| wrap(c[(k + 1) % 3].1 - c[k].1, period)).sum::<f64>() / period;
        let w = turn.round() as i64;
        if w != 0 {
            signed += w;
            touching += 1;
        }
    }
    (signed, touching)
}

/// Per-point distortion with the fitted tangent model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QcRow {
    pub position: [f64; 3],
    pub estimate: Option<HEstimate>,
    pub fit: Option<TangentFit>,
    /// `H(k)^{1/α}` from the fit.
    pub predicted: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QcReport {
    pub rows: Vec<QcRow>,
    /// Largest fitted stretch over the classified fits.
    pub sup_k: f64,
    pub global_h: Option<f64>,
}

/// Distortion estimates and tangent fits at each point.
pub fn qc_report(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap, points: &[V3]) -> QcReport {
    let mut rows = Vec::new();
    let mut sup_k: f64 = 0.0;
    for p in points {
        let mut row = QcRow { position: [p.x, p.y, p.z], estimate: None, fit: None, predicted: None, error: None };
        match Probe::new(mesh, surface, map, p) {
            Ok(probe) => {
                match h_estimate_with(&probe, None) {
                    Ok(h) => row.estimate = Some(h),
                    Err(e) => row.error = Some(e.to_string()),
                }
                let sigma = (4.0 * MIN_CELLS * probe.cell).min(0.5 * probe.max_radius());
                match blowup_with(&probe, sigma) {
                    Ok(b) => {
                        let fit = fit_tangent_map(&b);
                        if matches!(fit.kind, ModelKind::Conformal | ModelKind::Stretched) {
                            sup_k = sup_k.max(fit.k);
                            row.predicted = h_of_k(fit.k).ok().map(|h| h.powf(1.0 / fit.alpha_over_beta().max(1.0)));
                        }
                        row.fit = Some(fit);
                    }
                    Err(e) => row.error = Some(e.to_string()),
                }
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    QcReport { rows, sup_k, global_h: h_of_k(sup_k).ok() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaClass {
    /// `H² = E/2`, conformal and monotone.
    ConformalMonotoneEquality,
    /// `H² = E/2` without conformality or monotonicity.
    Equality,
    Strict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyAreaVerdict {
    pub hausdorff: f64,
    pub half_energy: f64,
    pub area: f64,
    pub gap: f64,
    /// `A ≤ E/2 + 1e-12`.
    pub jacobian_bound: bool,
    /// `H² ≤ (E/2)(1 + tol)`.
    pub hausdorff_bound: bool,
    pub monotone: bool,
    /// Sampled fibers that are not edge-connected.
    pub disconnected_fibers: usize,
    pub sampled_fibers: usize,
    pub class: AreaClass,
    pub tol: f64,
}

/// Number of target cells whose fibers are tested for connectivity.
pub const MONOTONE_SAMPLES: usize = 100;

/// Energy–area comparison with a sampled monotonicity test; `tol` is the
/// relative tolerance for equality and for the conformality gap.
pub fn energy_area_verdict(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap, tol: f64, seed: u64) -> Result<EnergyAreaVerdict, QcError> {
    let sd = side_distances(mesh, surface, map)?;
    let rep = energy_report_from(mesh, surface, &sd);
    let raster = Raster::new(surface, default_cell(surface));
    let first = raster.cover(mesh, surface, map, &[]);
    let covered: Vec<usize> = (0..raster.n_cells()).filter(|&c| first.unsigned[c] > 0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = BTreeSet::new();
    while !covered.is_empty() && picks.len() < MONOTONE_SAMPLES.min(covered.len()) {
        picks.insert(covered[rng.gen_range(0..covered.len())]);
    }
    let picks: Vec<usize> = picks.into_iter().collect();
    let cov = raster.cover(mesh, surface, map, &picks);
    let adjacency = face_adjacency(mesh);
    let disconnected = cov.fibers.values().filter(|fiber| !edge_connected(fiber, &adjacency)).count();
    let half = 0.5 * rep.energy;
    let hausdorff = first.covered_area;
    let monotone = disconnected == 0;
    let equal = (hausdorff - half).abs() <= tol * half;
    let class = if !equal {
        AreaClass::Strict
    } else if monotone && rep.gap <= tol * rep.energy {
        AreaClass::ConformalMonotoneEquality
    } else {
        AreaClass::Equality
    };
    Ok(EnergyAreaVerdict {
        hausdorff,
        half_energy: half,
        area: rep.area,
        gap: rep.gap,
        jacobian_bound: rep.area <= half + 1e-12,
        hausdorff_bound: hausdorff <= half * (1.0 + tol),
        monotone,
        disconnected_fibers: disconnected,
        sampled_fibers: picks.len(),
        class,
        tol,
    })
}

/// Faces sharing an edge with each face.
pub fn face_adjacency(mesh: &DomainMesh) -> Vec<Vec<usize>> {
    let mut by_edge: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (f, face) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (face[k], face[(k + 1) % 3]);
            by_edge.entry((a.min(b), a.max(b))).or_default().push(f);
        }
    }
    let mut adj = vec![Vec::new(); mesh.n_faces()];
    for faces in by_edge.values() {
        for &f in faces {
            for &g in faces {
                if f != g {
                    adj[f].push(g);
                }
            }
        }
    }
    adj
}

/// Whether a set of faces is connected through shared edges within the set.
pub fn edge_connected(faces: &[usize], adjacency: &[Vec<usize>]) -> bool {
    let set: BTreeSet<usize> = faces.iter().copied().collect();
    let Some(&start) = set.iter().next() else { return true };
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(f) = queue.pop_front() {
        for &g in &adjacency[f] {
            if set.contains(&g) && seen.insert(g) {
                queue.push_back(g);
            }
        }
    }
    seen.len() == set.len()
}

/// Orientation-preserving Möbius map `z ↦ (az + b)/(cz + d)` of the Riemann
/// sphere, acting on the unit sphere through stereographic projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mobius {
    /// `[a, b, c, d]` as `(re, im)` pairs.
    pub coef: [[f64; 2]; 4],
}

impl Mobius {
    fn from_complex(m: [Complex64; 4]) -> Self {
        let s = m.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        Mobius { coef: m.map(|c| [c.re / s, c.im / s]) }
    }

    fn complex(&self) -> [Complex64; 4] {
        self.coef.map(|[re, im]| Complex64::new(re, im))
    }

    pub fn identity() -> Self {
        let (o, z) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        Mobius::from_complex([o, z, z, o])
    }

    /// Image of a point of the unit sphere.
    pub fn apply(&self, x: &V3) -> V3 {
        let [a, b, c, d] = self.complex();
        if x.z > 1.0 - 1e-15 {
            // ∞ ↦ a/c
            return if c.norm() == 0.0 { V3::z() } else { inverse_stereographic(Some(a / c)) };
        }
        let z = stereographic(x);
        let den = c * z + d;
        if den.norm() == 0.0 {
            return V3::z();
        }
        inverse_stereographic(Some((a * z + b) / den))
    }

    /// The map sending `z1, z2, z3` to `0, 1, ∞`.
    fn to_standard(z: [Complex64; 3]) -> [Complex64; 4] {
        // (z − z1)(z2 − z3) / ((z − z3)(z2 − z1))
        let p = z[1] - z[2];
        let q = z[1] - z[0];
        [p, -z[0] * p, q, -z[2] * q]
    }

    /// Exact Möbius map taking three distinct finite points to three others.
    pub fn through(from: [Complex64; 3], to: [Complex64; 3]) -> Self {
        let m1 = Mobius::to_standard(from);
        let m2 = Mobius::to_standard(to);
        // m2⁻¹ ∘ m1, with the adjugate as inverse.
        let inv = [m2[3], -m2[1], -m2[2], m2[0]];
        Mobius::from_complex(mul(inv, m1))
    }
}

fn mul(x: [Complex64; 4], y: [Complex64; 4]) -> [Complex64; 4] {
    [x[0] * y[0] + x[1] * y[2], x[0] * y[1] + x[1] * y[3], x[2] * y[0] + x[3] * y[2], x[2] * y[1] + x[3] * y[3]]
}

/// Point of the domain sphere mapped by `map` to `y`, by Newton iteration on
/// the barycentric parameters of a covering face in log coordinates at `y`.
pub fn invert_at(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap, y: &SurfacePoint, candidates: &[usize]) -> Option<V3> {
    let chart = TangentConeChart::new(surface, y);
    if chart.beta != 1.0 {
        return None;
    }
    let planar = |p: &SurfacePoint| -> Option<Complex64> {
        let l = chart.log(surface, p).ok()?;
        Some(Complex64::from_polar(l.rho, l.theta))
    };
    // Degenerate faces map a segment of the domain onto a thin image, so
    // their Newton solutions are ill-determined.
    let mut order: Vec<usize> = candidates.to_vec();
    order.sort_by_key(|&f| mesh.degenerate[f]);
    for f in order {
        let Some(corners) = mesh.faces[f].iter().map(|&v| planar(&map.values[v])).collect::<Option<Vec<_>>>() else { continue };
        // Start from planar barycentric coordinates of the origin.
        let area = |a: Complex64, b: Complex64, c: Complex64| ((b - a).conj() * (c - a)).im;
        let total = area(corners[0], corners[1], corners[2]);
        if total == 0.0 {
            continue;
        }
        let zero = Complex64::new(0.0, 0.0);
        let mut b = [
            area(zero, corners[1], corners[2]) / total,
            area(corners[0], zero, corners[2]) / total,
            area(corners[0], corners[1], zero) / total,
        ];
        if b.iter().any(|&x| x < -0.05) {
            continue;
        }
        let eval = |b: &[f64; 3]| -> Option<Complex64> { planar(&map.evaluate(mesh, surface, f, b).ok()?) };
        let mut converged = false;
        for _ in 0..20 {
            let Some(r) = eval(&b) else { break };
            if r.norm() < 1e-13 {
                converged = true;
                break;
            }
            let eps = 1e-7;
            let Some(r1) = eval(&[b[0] - eps, b[1] + eps, b[2]]) else { break };
            let Some(r2) = eval(&[b[0] - eps, b[1], b[2] + eps]) else { break };
            let (j1, j2) = ((r1 - r) / eps, (r2 - r) / eps);
            let det = j1.re * j2.im - j1.im * j2.re;
            if det == 0.0 {
                break;
            }
            let d1 = -(r.re * j2.im - r.im * j2.re) / det;
            let d2 = -(j1.re * r.im - j1.im * r.re) / det;
            b = [b[0] - d1 - d2, b[1] + d1, b[2] + d2];
            if r.norm() < 1e-10 && (d1.abs() + d2.abs()) < 1e-12 {
                converged = true;
                break;
            }
        }
        if converged && b.iter().all(|&x| x >= -1e-6) {
            let b = b.map(|x| x.max(0.0));
            let s = b.iter().sum::<f64>();
            return Some(mesh.face_point(f, &b.map(|x| x / s)));
        }
    }
    None
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MobiusFit {
    pub mobius: Mobius,
    /// Root mean square great-circle residual.
    pub rms: f64,
    pub max: f64,
    pub samples: usize,
    pub tol: f64,
    pub pass: bool,
}

/// Sample points for the Möbius fit.
pub const MOBIUS_SAMPLES: usize = 200;

fn great_circle(a: &V3, b: &V3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Best Möbius map `M` with `v⁻¹∘u ≈ M` on sampled domain points; passes if
/// the RMS great-circle residual is below `tol`.
pub fn mobius_check(
    mesh_u: &DomainMesh,
    u: &PiecewiseMap,
    mesh_v: &DomainMesh,
    v: &PiecewiseMap,
    surface: &ConeSurface,
    tol: f64,
    seed: u64,
) -> Result<MobiusFit, QcError> {
    if mesh_u.kind != DomainKind::Sphere || mesh_v.kind != DomainKind::Sphere {
        return Err(QcError::Incompatible("Möbius checks need sphere domains".into()));
    }
    u.check(mesh_u)?;
    v.check(mesh_v)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut verts: Vec<usize> = (0..mesh_u.n_vertices()).collect();
    for i in (1..verts.len()).rev() {
        verts.swap(i, rng.gen_range(0..=i));
    }
    let raster = Raster::new(surface, default_cell(surface));
    let mut targets = Vec::new();
    for &p in &verts {
        // Vertices whose faces are all degenerate have no local inverse.
        if !has_star(mesh_u, p) {
            continue;
        }
        let y = surface.normalize(&u.values[p]);
        // Images at target vertices have no planar log chart.
        if matches!(y, SurfacePoint::Vertex { .. }) {
            continue;
        }
        targets.push((p, y, raster.cell_of(surface, &y)));
        if targets.len() == MOBIUS_SAMPLES {
            break;
        }
    }
    let cells: Vec<usize> = targets.iter().map(|t| t.2).collect();
    let cov = raster.cover(mesh_v, surface, v, &cells);
    let sd_v = side_distances(mesh_v, surface, v)?;
    let mut pairs = Vec::new();
    for (p, y, c) in &targets {
        let fiber = &cov.fibers[c];
        // The cell centre may lie in a face next to the one holding y.
        let mut cand: Vec<usize> = fiber.clone();
        for &f in fiber {
            for &w in &mesh_v.faces[f] {
                cand.extend(mesh_v.vertex_faces[w].iter().copied());
            }
        }
        cand.sort_unstable();
        cand.dedup();
        let x = match invert_at(mesh_v, surface, v, y, &cand) {
            Some(x) => x,
            None => {
                // Rasterization can leave a cell uncovered: any face holding
                // y has its first corner within one image side of y.
                let near: Vec<usize> = (0..mesh_v.n_faces())
                    .filter(|&f| surface.dist(y, &v.values[mesh_v.faces[f][0]]).is_ok_and(|d| d <= sd_v.max_side[f] * (1.0 + 1e-9)))
                    .collect();
                invert_at(mesh_v, surface, v, y, &near).ok_or_else(|| QcError::NotInvertible(format!("no preimage of the image of vertex {p}")))?
            }
        };
        pairs.push((mesh_u.positions[*p], x));
    }
    if pairs.len() < 4 {
        return Err(QcError::NotInvertible("fewer than four sample points".into()));
    }
    let mobius = fit_mobius(&pairs);
    let res: Vec<f64> = pairs.iter().map(|(p, x)| great_circle(&mobius.apply(p), x)).collect();
    let rms = (res.iter().map(|r| r * r).sum::<f64>() / res.len() as f64).sqrt();
    let max = res.iter().copied().fold(0.0, f64::max);
    Ok(MobiusFit { mobius, rms, max, samples: pairs.len(), tol, pass: rms < tol })
}

/// Least-squares Möbius fit of `p ↦ x` by Levenberg–Marquardt on the eight
/// real coefficients, from the exact map through three spread pairs.
pub fn fit_mobius(pairs: &[(V3, V3)]) -> Mobius {
    // Three well separated pairs away from the projection pole.
    let usable: Vec<&(V3, V3)> = pairs.iter().filter(|(p, x)| p.z < 0.5 && x.z < 0.5).collect();
    let pool = if usable.len() >= 3 { usable } else { pairs.iter().collect() };
    let a = pool[0];
    let b = pool.iter().max_by(|s, t| great_circle(&a.0, &s.0).total_cmp(&great_circle(&a.0, &t.0))).expect("pairs");
    let c = pool
        .iter()
        .max_by(|s, t| {
            let ds = great_circle(&a.0, &s.0).min(great_circle(&b.0, &s.0));
            let dt = great_circle(&a.0, &t.0).min(great_circle(&b.0, &t.0));
            ds.total_cmp(&dt)
        })
        .expect("pairs");
    let from = [a.0, b.0, c.0].map(|p| stereographic(&p));
    let to = [a.1, b.1, c.1].map(|x| stereographic(&x));
    let mut m = if from.iter().chain(&to).all(|z| z.is_finite()) { Mobius::through(from, to) } else { Mobius::identity() };

    let residual = |m: &Mobius| -> DVector<f64> {
        let mut r = DVector::zeros(3 * pairs.len());
        for (i, (p, x)) in pairs.iter().enumerate() {
            let d = m.apply(p) - x;
            r[3 * i] = d.x;
            r[3 * i + 1] = d.y;
            r[3 * i + 2] = d.z;
        }
        r
    };
    let params = |m: &Mobius| DVector::from_iterator(8, m.coef.iter().flat_map(|c| c.iter().copied()));
    let build = |v: &DVector<f64>| Mobius::from_complex(std::array::from_fn(|k| Complex64::new(v[2 * k], v[2 * k + 1])));
    let mut r = residual(&m);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..100 {
        let x = params(&m);
        let mut jac = DMatrix::zeros(r.len(), 8);
        for k in 0..8 {
            let h = 1e-7;
            let mut xp = x.clone();
            xp[k] += h;
            let col = (residual(&build(&xp)) - &r) / h;
            jac.set_column(k, &col);
        }
        let jt = jac.transpose();
        let g = &jt * &r;
        let a = &jt * &jac;
        let mut improved = false;
        for _ in 0..10 {
            let mut damped = a.clone();
            for k in 0..8 {
                damped[(k, k)] += lambda * (a[(k, k)] + 1e-12);
            }
            let Some(step) = damped.lu().solve(&(-&g)) else { break };
            let trial = build(&(&x + &step));
            let rt = residual(&trial);
            let ct = rt.norm_squared();
            if ct < cost {
                let gain = cost - ct;
                m = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                improved = gain > 1e-15 * cost.max(1e-300);
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    m
}
