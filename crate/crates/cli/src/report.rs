//! Report documents: per-level tables, per-point analyses, branch and degree
//! summary, acceptance predicates and the verdict.

use crate::documents::{TargetRef, EXIT_FAIL, EXIT_UNRESOLVED, SCHEMA};
use catuni::domain_mesh::{DomainKind, DomainMesh};
use catuni::energy_forms::{chart_form, energy_report_from, face_form, hopf_l1, side_distances, PiecewiseMap, SideDistances};
use catuni::harmonic_solver::{LevelSolution, Pins, SolverConfig};
use catuni::model::V3;
use catuni::qc_degree::{branch_and_degree, energy_area_verdict, has_star, qc_report, AreaClass, BranchReport, MobiusFit, QcRow};
use catuni::tangent_analysis::{order_profile_with, ModelKind, OrderProfile, Probe, MIN_CELLS};
use catuni::target_surface::{ConeSurface, SurfacePoint};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Computed,
    Extrapolated,
}

/// A reported number with the absolute tolerance it is judged at or its
/// estimated error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub tol: f64,
    pub provenance: Provenance,
}

fn computed(value: f64, tol: f64) -> Quantity {
    Quantity { value, tol, provenance: Provenance::Computed }
}

fn extrapolated(value: f64, tol: f64) -> Quantity {
    Quantity { value, tol, provenance: Provenance::Extrapolated }
}

/// Probe points: vertices whose order at the probe scale exceeds the
/// threshold, random vertices, and user points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePolicy {
    pub order_threshold: f64,
    pub random_vertices: usize,
    pub user_points: Vec<[f64; 3]>,
}

impl ProbePolicy {
    pub fn new(user_points: Vec<[f64; 3]>) -> Self {
        ProbePolicy { order_threshold: 1.2, random_vertices: 20, user_points }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub target: TargetRef,
    /// Map documents the run reads.
    pub inputs: Vec<String>,
    pub level: usize,
    pub solver: Option<SolverConfig>,
    pub pins: Option<Pins>,
    pub boundary: Option<String>,
    pub probe_policy: ProbePolicy,
    pub seed: u64,
    /// Relative tolerance of the energy–area and conformality predicates,
    /// or of the Möbius residual against the target diameter.
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: usize,
    pub sweeps: Option<usize>,
    pub converged: Option<bool>,
    pub energy: Quantity,
    pub area: Quantity,
    pub gap: Quantity,
    /// `G/E`.
    pub gap_ratio: Quantity,
    pub hopf_l1: Quantity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyAreaRow {
    pub hausdorff: Quantity,
    pub half_energy: Quantity,
    pub area: Quantity,
    pub gap_ratio: Quantity,
    pub jacobian_bound: bool,
    pub hausdorff_bound: bool,
    pub monotone: bool,
    pub disconnected_fibers: usize,
    pub sampled_fibers: usize,
    pub class: AreaClass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchRow {
    pub vertex: usize,
    pub position: [f64; 3],
    pub star_winding: i64,
    pub circle_winding: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchSummary {
    pub degree: Option<i64>,
    pub fiber_counts: Vec<i64>,
    pub sign_consistent: bool,
    pub sign_violations: usize,
    pub undefined_stars: usize,
    pub flipped_faces: usize,
    pub homeomorphism: bool,
    pub branch_points: Vec<BranchRow>,
}

/// Conformality near the preimage of a target cone point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeRow {
    pub target_vertex: usize,
    pub beta: f64,
    /// Domain vertex whose image is nearest to the cone point.
    pub preimage: [f64; 3],
    pub image_distance: Quantity,
    /// `G/E` over the faces around the preimage.
    pub local_gap_ratio: Quantity,
    /// Local ratio above the global one.
    pub elevated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeReason {
    Order,
    Random,
    User,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileRow {
    pub radius: f64,
    /// Tolerance: the monotonicity allowance `C·h/σ` at this radius.
    pub ord: Quantity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRow {
    pub kind: ModelKind,
    pub alpha: Quantity,
    pub beta: Quantity,
    pub alpha_over_beta: Quantity,
    pub k: Quantity,
    pub c: Quantity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointRow {
    pub position: [f64; 3],
    pub reason: ProbeReason,
    pub ord: Option<Quantity>,
    pub profile: Vec<ProfileRow>,
    pub monotone: Option<bool>,
    pub fit: Option<FitRow>,
    /// Circle distortion estimate; absent if infinite.
    pub h: Option<Quantity>,
    pub h_infinite: bool,
    /// `H(k)^{1/max(α/β, 1)}` from the fit.
    pub predicted_h: Option<Quantity>,
    pub winding: Option<i64>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MobiusRow {
    pub rms: Quantity,
    pub max: Quantity,
    pub samples: usize,
    pub pass: bool,
    /// `(a, b, c, d)` of `z ↦ (az + b)/(cz + d)` as (re, im) pairs.
    pub coefficients: [[f64; 2]; 4],
}

impl MobiusRow {
    pub fn new(fit: &MobiusFit) -> Self {
        MobiusRow {
            rms: computed(fit.rms, fit.tol),
            max: computed(fit.max, fit.tol),
            samples: fit.samples,
            pass: fit.pass,
            coefficients: fit.mobius.coef,
        }
    }
}

/// One acceptance predicate; `pass` is absent when it could not be decided.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Predicate {
    pub name: String,
    pub pass: Option<bool>,
    pub detail: String,
}

fn predicate(name: &str, pass: Option<bool>, detail: String) -> Predicate {
    Predicate { name: name.into(), pass, detail }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Unresolved,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => EXIT_FAIL,
            Status::Unresolved => EXIT_UNRESOLVED,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema: String,
    pub kind: String,
    pub manifest: RunManifest,
    pub levels: Vec<LevelRow>,
    pub energy_area: Option<EnergyAreaRow>,
    pub branch: Option<BranchSummary>,
    pub cone_points: Vec<ConeRow>,
    pub points: Vec<PointRow>,
    pub mobius: Option<MobiusRow>,
    pub predicates: Vec<Predicate>,
    pub diagnostics: Vec<String>,
    pub verdict: String,
    pub status: Status,
}

impl ReportDocument {
    pub fn new(manifest: RunManifest) -> Self {
        ReportDocument {
            schema: SCHEMA.into(),
            kind: "report".into(),
            manifest,
            levels: Vec::new(),
            energy_area: None,
            branch: None,
            cone_points: Vec::new(),
            points: Vec::new(),
            mobius: None,
            predicates: Vec::new(),
            diagnostics: Vec::new(),
            verdict: String::new(),
            status: Status::Unresolved,
        }
    }

    /// Fail if any predicate fails, else unresolved if any is undecided.
    pub fn settle_status(&mut self) {
        self.status = if self.predicates.iter().any(|p| p.pass == Some(false)) {
            Status::Fail
        } else if self.predicates.iter().any(|p| p.pass.is_none()) {
            Status::Unresolved
        } else {
            Status::Pass
        };
    }

    /// Plain-text summary, one line per predicate.
    pub fn summary(&self) -> String {
        let mut out = format!("verdict: {}\n", self.verdict);
        for p in &self.predicates {
            let tag = match p.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "UNRESOLVED",
            };
            out.push_str(&format!("{tag} {}: {}\n", p.name, p.detail));
        }
        for c in &self.cone_points {
            out.push_str(&format!(
                "cone point {} (β = {:.4}): local G/E = {:.4e}{}\n",
                c.target_vertex,
                c.beta,
                c.local_gap_ratio.value,
                if c.elevated { ", elevated" } else { "" }
            ));
        }
        for d in &self.diagnostics {
            out.push_str(&format!("note: {d}\n"));
        }
        out.push_str(&format!("status: {:?}\n", self.status).to_lowercase());
        out
    }
}

/// Energy table row of one level; quantities are judged at `tol` relative.
pub fn level_row(mesh: &DomainMesh, surface: &ConeSurface, sd: &SideDistances, tol: f64, solved: Option<&LevelSolution>) -> LevelRow {
    let r = energy_report_from(mesh, surface, sd);
    let ratio = if r.energy > 0.0 { r.gap / r.energy } else { 0.0 };
    let l1 = hopf_l1(mesh, sd);
    LevelRow {
        level: mesh.level,
        sweeps: solved.map(|l| l.report.sweeps),
        converged: solved.map(|l| l.report.converged),
        energy: computed(r.energy, tol * r.energy),
        area: computed(r.area, tol * r.area),
        gap: computed(r.gap, tol * r.energy),
        gap_ratio: computed(ratio, tol),
        hopf_l1: computed(l1, tol * l1),
    }
}

/// Energy and conformality gap of one face, both in domain area units.
fn face_energy_gap(mesh: &DomainMesh, sd: &SideDistances, f: usize) -> (f64, f64) {
    let q = face_form(mesh, f, &sd.d2[f]);
    let p = chart_form(mesh, f, &q);
    let (_, scale) = mesh.chart_similarity(f);
    let a = mesh.face_area[f];
    ((q[0] + q[1]) * a, ((p.p11 - p.p22).abs() + 2.0 * p.p12.abs()) * scale * scale * a)
}

/// One row per interior cone point of the target with `β ≠ 1`; the local
/// ratio is taken over the faces within two edges of the preimage.
pub fn cone_rows(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap, sd: &SideDistances, tol: f64) -> Vec<ConeRow> {
    let (mut e_all, mut g_all) = (0.0, 0.0);
    for f in 0..mesh.n_faces() {
        let (e, g) = face_energy_gap(mesh, sd, f);
        e_all += e;
        g_all += g;
    }
    let global = if e_all > 0.0 { g_all / e_all } else { 0.0 };
    let mut rows = Vec::new();
    for c in 0..surface.n_vertices() {
        let beta = surface.beta(c);
        if surface.is_boundary_vertex(c) || (beta - 1.0).abs() < 1e-9 {
            continue;
        }
        let cone = SurfacePoint::vertex(c);
        let nearest = (0..mesh.n_vertices())
            .filter_map(|v| surface.dist(&cone, &map.values[v]).ok().map(|d| (d, v)))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        let Some((d, v)) = nearest else { continue };
        let mut faces: Vec<usize> = mesh.vertex_faces[v].iter().flat_map(|&f| mesh.faces[f]).flat_map(|w| mesh.vertex_faces[w].iter().copied()).collect();
        faces.sort_unstable();
        faces.dedup();
        let (e, g) = faces.iter().map(|&f| face_energy_gap(mesh, sd, f)).fold((0.0, 0.0), |a, x| (a.0 + x.0, a.1 + x.1));
        let local = if e > 0.0 { g / e } else { 0.0 };
        let p = mesh.positions[v];
        rows.push(ConeRow {
            target_vertex: c,
            beta,
            preimage: [p.x, p.y, p.z],
            image_distance: computed(d, 1e-9 * surface.diameter()),
            local_gap_ratio: computed(local, tol),
            elevated: local > global,
        });
    }
    rows
}

/// Vertices are screened at the finest resolved scale, where `ord` is
/// closest to its limit.
fn screening_radius(probe: &Probe) -> f64 {
    (MIN_CELLS * probe.cell).min(probe.max_radius())
}

/// Probe points under `policy`, in a deterministic order.
pub fn probe_points(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap, sd: &SideDistances, policy: &ProbePolicy, seed: u64) -> Vec<(V3, ProbeReason)> {
    let candidates: Vec<usize> = (0..mesh.n_vertices()).filter(|&v| has_star(mesh, v)).collect();
    let mut out = Vec::new();
    let mut taken = vec![false; mesh.n_vertices()];
    for &v in &candidates {
        let p = mesh.positions[v];
        let Ok(probe) = Probe::new(mesh, surface, map, &p) else { continue };
        let sigma = screening_radius(&probe);
        if let Ok(prof) = order_profile_with(&probe, sd, Some(&[sigma])) {
            if prof.ord[0] > policy.order_threshold {
                out.push((p, ProbeReason::Order));
                taken[v] = true;
            }
        }
    }
    let mut rest: Vec<usize> = candidates.into_iter().filter(|&v| !taken[v]).collect();
    rest.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out.extend(rest.iter().take(policy.random_vertices).map(|&v| (mesh.positions[v], ProbeReason::Random)));
    out.extend(policy.user_points.iter().map(|p| (V3::new(p[0], p[1], p[2]), ProbeReason::User)));
    out
}

fn profile_rows(prof: &OrderProfile) -> Vec<ProfileRow> {
    prof.radii
        .iter()
        .zip(&prof.ord)
        .map(|(&r, &o)| ProfileRow { radius: r, ord: computed(o, catuni::tangent_analysis::MONOTONICITY_C * prof.cell / r) })
        .collect()
}

fn fit_row(row: &QcRow) -> Option<FitRow> {
    let f = row.fit?;
    let rel = |x: f64| computed(x, f.residual * x.abs());
    Some(FitRow {
        kind: f.kind,
        alpha: rel(f.alpha),
        beta: computed(f.beta, 1e-9 * f.beta),
        alpha_over_beta: rel(f.alpha_over_beta()),
        k: computed(f.k, f.residual),
        c: rel(f.c),
    })
}

/// Per-point order, fit, distortion and winding rows.
pub fn point_rows(mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap, sd: &SideDistances, points: &[(V3, ProbeReason)], branch: Option<&BranchReport>) -> Vec<PointRow> {
    let positions: Vec<V3> = points.iter().map(|p| p.0).collect();
    let qc = qc_report(mesh, surface, map, &positions);
    points
        .iter()
        .zip(qc.rows)
        .enumerate()
        .map(|(i, ((p, reason), q))| {
            let mut row = PointRow {
                position: [p.x, p.y, p.z],
                reason: *reason,
                ord: None,
                profile: Vec::new(),
                monotone: None,
                fit: fit_row(&q),
                h: None,
                h_infinite: false,
                predicted_h: None,
                winding: None,
                errors: q.error.iter().cloned().collect(),
            };
            match Probe::new(mesh, surface, map, p).map_err(|e| e.to_string()).and_then(|probe| order_profile_with(&probe, sd, None).map_err(|e| e.to_string())) {
                Ok(prof) => {
                    let last = *prof.ord.first().expect("resolved radii");
                    row.ord = Some(if prof.extrapolated != last {
                        extrapolated(prof.extrapolated, (prof.extrapolated - last).abs())
                    } else {
                        computed(prof.extrapolated, prof.defect_allowance())
                    });
                    row.monotone = Some(prof.monotone());
                    row.profile = profile_rows(&prof);
                }
                Err(e) => row.errors.push(format!("tangent_analysis: {e}")),
            }
            if let Some(h) = &q.estimate {
                row.h_infinite = h.infinite;
                if !h.infinite {
                    let n = h.ratios.len();
                    let spread = if n >= 2 { (h.ratios[n - 1] - h.ratios[n - 2]).abs() } else { h.h - 1.0 };
                    row.h = Some(computed(h.h, spread));
                }
            }
            if let (Some(pred), Some(f)) = (q.predicted, q.fit) {
                // dH/dk = 2/(1 − k)², scaled by the fit's misfit.
                let tol = 2.0 / (1.0 - f.k).powi(2) * f.residual;
                row.predicted_h = Some(computed(pred, tol));
            }
            if let Some(b) = branch {
                row.winding = b.probes.get(i).and_then(|w| w.winding.map(|w| w.w));
            }
            row
        })
        .collect()
}

pub fn branch_summary(b: &BranchReport) -> BranchSummary {
    BranchSummary {
        degree: b.degree,
        fiber_counts: b.fiber_counts.clone(),
        sign_consistent: b.sign_consistent,
        sign_violations: b.sign_violations,
        undefined_stars: b.undefined_stars,
        flipped_faces: b.flipped_faces,
        homeomorphism: b.homeomorphism(),
        branch_points: b
            .branch
            .iter()
            .map(|p| BranchRow { vertex: p.vertex, position: p.position, star_winding: p.star_winding, circle_winding: p.circle_winding })
            .collect(),
    }
}

/// Runs every analysis on a frozen map and fills the report's tables,
/// predicates and verdict. `solved` carries the solver levels, if any.
pub fn analyze_into(doc: &mut ReportDocument, mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap, solved: &[LevelSolution]) {
    let tol = doc.manifest.tol;
    let seed = doc.manifest.seed;
    let sd = match side_distances(mesh, surface, map) {
        Ok(sd) => sd,
        Err(e) => {
            doc.diagnostics.push(format!("energy_forms: image side lengths are undefined: {e}"));
            doc.verdict = "failed (energy_forms: image side lengths are undefined)".into();
            doc.predicates.push(predicate("energy_defined", Some(false), e.to_string()));
            doc.settle_status();
            return;
        }
    };
    if solved.is_empty() {
        doc.levels.push(level_row(mesh, surface, &sd, tol, None));
    } else {
        for l in solved {
            match side_distances(&l.mesh, surface, &l.map) {
                Ok(s) => doc.levels.push(level_row(&l.mesh, surface, &s, tol, Some(l))),
                Err(e) => doc.diagnostics.push(format!("energy_forms: level {} has undefined side lengths: {e}", l.mesh.level)),
            }
        }
        let finest = solved.last().expect("nonempty");
        doc.predicates.push(predicate(
            "solver_converged",
            Some(finest.report.converged),
            format!("{} sweeps at level {}", finest.report.sweeps, finest.mesh.level),
        ));
    }

    let sphere = mesh.kind == DomainKind::Sphere;
    match energy_area_verdict(mesh, surface, map, tol, seed) {
        Ok(v) => {
            let e2 = v.half_energy;
            let ratio = if e2 > 0.0 { v.gap / (2.0 * e2) } else { 0.0 };
            doc.predicates.push(predicate("jacobian_bound", Some(v.jacobian_bound), format!("A = {:.6e}, E/2 = {:.6e}", v.area, e2)));
            if sphere {
                let dev = (v.hausdorff - e2).abs() / e2.max(f64::MIN_POSITIVE);
                doc.predicates.push(predicate("energy_area_equality", Some(dev <= tol), format!("|H² − E/2|/(E/2) = {dev:.4e}, tol {tol:.1e}")));
                doc.predicates.push(predicate("conformality_gap", Some(ratio < tol), format!("G/E = {ratio:.4e}, tol {tol:.1e}")));
                doc.predicates.push(predicate(
                    "monotone",
                    Some(v.monotone),
                    format!("{} of {} sampled fibers disconnected", v.disconnected_fibers, v.sampled_fibers),
                ));
            }
            doc.energy_area = Some(EnergyAreaRow {
                hausdorff: computed(v.hausdorff, tol * e2),
                half_energy: computed(e2, tol * e2),
                area: computed(v.area, tol * e2),
                gap_ratio: computed(ratio, tol),
                jacobian_bound: v.jacobian_bound,
                hausdorff_bound: v.hausdorff_bound,
                monotone: v.monotone,
                disconnected_fibers: v.disconnected_fibers,
                sampled_fibers: v.sampled_fibers,
                class: v.class,
            });
        }
        Err(e) => {
            doc.diagnostics.push(format!("qc_degree: energy–area verdict: {e}"));
            doc.predicates.push(predicate("jacobian_bound", None, e.to_string()));
        }
    }

    doc.cone_points = cone_rows(mesh, surface, map, &sd, tol);
    let points = probe_points(mesh, surface, map, &sd, &doc.manifest.probe_policy, seed);
    let positions: Vec<V3> = points.iter().map(|p| p.0).collect();
    let branch = match branch_and_degree(mesh, surface, map, &positions, seed) {
        Ok(b) => Some(b),
        Err(e) => {
            doc.diagnostics.push(format!("qc_degree: branch and degree: {e}"));
            None
        }
    };
    doc.points = point_rows(mesh, surface, map, &sd, &points, branch.as_ref());

    match &branch {
        Some(b) => {
            doc.predicates.push(predicate(
                "degree_resolved",
                Some(b.degree.is_some()).filter(|&x| x),
                format!("fiber counts {:?}", b.fiber_counts),
            ));
            doc.predicates.push(predicate(
                "sign_consistent",
                Some(b.sign_consistent),
                format!("{} sign violations, {} flipped faces", b.sign_violations, b.flipped_faces),
            ));
            if sphere {
                doc.predicates.push(predicate(
                    "homeomorphism",
                    Some(b.homeomorphism()),
                    format!("{} branch points, degree {:?}", b.branch.len(), b.degree),
                ));
            }
            doc.branch = Some(branch_summary(b));
        }
        None => doc.predicates.push(predicate("degree_resolved", None, "branch and degree analysis failed".into())),
    }
    doc.verdict = verdict(sphere, branch.as_ref());
    doc.settle_status();
}

/// Topological verdict from the degree analysis.
pub fn verdict(sphere: bool, branch: Option<&BranchReport>) -> String {
    let Some(b) = branch else {
        return "failed (qc_degree: branch and degree analysis did not complete)".into();
    };
    match b.degree.map(i64::abs) {
        None => format!("failed (qc_degree: fiber counts {:?} do not agree on a degree)", b.fiber_counts),
        Some(1) if b.homeomorphism() => if sphere { "uniformized (degree 1)" } else { "harmonic embedding (degree 1)" }.into(),
        Some(1) => format!(
            "failed (qc_degree: degree 1 with {} branch points and {} sign violations)",
            b.branch.len(),
            b.sign_violations
        ),
        Some(0) => "failed (qc_degree: degree 0)".into(),
        Some(n) => format!("branched cover (degree {n})"),
    }
}
