//! Exact geodesics by unfolding.
//!
//! Straight segments are found by propagating angular windows from the
//! source through the face strip; a segment that reaches the target inside
//! its window is the unique geodesic below the convexity scale. Otherwise the
//! geodesic bends at cone or reflex boundary vertices, which are chained by
//! a Dijkstra search over vertex-to-vertex straight segments.

use super::{ConeSurface, OrdF64, SurfacePoint, ANGLE_TOL};
use crate::model::{wrap_pi, Iso, Model, V3};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Angular slack when testing directions against a window.
const WIN_TOL: f64 = 1e-12;
/// Rays passing this close to a vertex are treated as hitting it.
const VERTEX_SNAP: f64 = 1e-11;
const MAX_BRANCHES: usize = 400_000;
const MAX_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeodesicError {
    #[error("geodesic reached the boundary at {0:?}")]
    Boundary(SurfacePoint),
    #[error("no geodesic found within distance {0}")]
    OutOfRange(f64),
    #[error("geodesic tracing failed: {0}")]
    Numerical(String),
    #[error("invalid argument: {0}")]
    Domain(String),
}

/// Shortest path from a source to a target.
#[derive(Debug, Clone, PartialEq)]
pub struct LogResult {
    pub dist: f64,
    /// Initial direction as an angle in the tangent-cone chart of the source.
    pub angle: f64,
    /// Vertices where the path bends, with their distances from the source.
    pub via: Vec<(usize, f64)>,
}

/// End of a traced geodesic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpHit {
    pub point: SurfacePoint,
    /// Set when tracing stopped early at a vertex.
    pub stopped_at: Option<usize>,
    pub traveled: f64,
}

/// Tangent frame of a source in the layout of one face.
#[derive(Debug, Clone, Copy)]
struct Frame {
    face: usize,
    s: V3,
    e1: V3,
    e2: V3,
    offset: f64,
}

#[derive(Debug, Clone, Copy)]
struct Branch {
    frame: usize,
    face: usize,
    iso: Iso,
    entry: usize,
    lo: f64,
    hi: f64,
}

/// Where the target may be found.
struct Target {
    faces: Vec<(usize, [f64; 3])>,
}

#[derive(Debug, Default)]
struct Sweep {
    direct: Option<(f64, f64)>,
    /// vertex -> (distance, chart angle)
    visible: BTreeMap<usize, (f64, f64)>,
}

impl ConeSurface {
    /// Tangent frame of a face or edge point in its anchor face; the first
    /// axis is parallel to side 0 of that face.
    pub(crate) fn point_frame(&self, f: usize, x: &V3) -> (V3, V3) {
        let l = &self.layout[f];
        let n = self.model.normal(x);
        let d = l[1] - l[0];
        let e1 = (d - n * n.dot(&d)).normalize();
        (e1, n.cross(&e1))
    }

    fn frames(&self, p: &SurfacePoint) -> Vec<(Frame, f64, f64)> {
        match *p {
            SurfacePoint::Vertex { v } => self.star[v]
                .iter()
                .map(|c| {
                    let l = &self.layout[c.face];
                    let s = l[c.corner];
                    let e1 = self.model.direction(&s, &l[(c.corner + 1) % 3]);
                    let e2 = self.model.normal(&s).cross(&e1);
                    (Frame { face: c.face, s, e1, e2, offset: c.start }, 0.0, c.width)
                })
                .collect(),
            _ => {
                let (f, x) = self.position(p);
                let (e1, e2) = self.point_frame(f, &x);
                vec![(Frame { face: f, s: x, e1, e2, offset: 0.0 }, -PI, PI)]
            }
        }
    }

    fn target_of(&self, q: &SurfacePoint) -> Target {
        let faces = self
            .faces_containing(q)
            .into_iter()
            .map(|f| (f, self.bary_in(q, f).expect("incident face")))
            .collect();
        Target { faces }
    }

    /// One breadth-first unfolding sweep from `p`; stops early when `q` is
    /// seen directly, which within the search bound is the geodesic.
    fn sweep(&self, p: &SurfacePoint, target: Option<&Target>, bound: f64, vertices: bool) -> Sweep {
        let m = self.model;
        let frames = self.frames(p);
        let mut out = Sweep::default();
        let source_vertex = match *p {
            SurfacePoint::Vertex { v } => Some(v),
            _ => None,
        };
        let source_side = match *p {
            SurfacePoint::Vertex { .. } => None,
            _ => {
                let (f, b) = self.anchor(p);
                (0..3).find(|&k| b[(k + 2) % 3] == 0.0).map(|k| (f, k))
            }
        };
        let mut queue: std::collections::VecDeque<Branch> = std::collections::VecDeque::new();
        let record = |out: &mut Sweep, v: usize, d: f64, a: f64| {
            if Some(v) == source_vertex || d > bound {
                return;
            }
            let e = out.visible.entry(v).or_insert((f64::INFINITY, 0.0));
            if d < e.0 {
                *e = (d, a);
            }
        };

        for (fi, (fr, lo, hi)) in frames.iter().enumerate() {
            let f = fr.face;
            let l = &self.layout[f];
            let ang = |x: &V3| {
                let (a, b) = m.planar(&fr.s, &fr.e1, &fr.e2, x);
                b.atan2(a)
            };
            if let Some(t) = target {
                if let Some((_, b)) = t.faces.iter().find(|(g, _)| *g == f) {
                    let x = m.from_bary(l, b);
                    let d = m.dist(&fr.s, &x);
                    let a = if d > 0.0 { ang(&x) } else { 0.0 };
                    let a = unwrap_into(a, *lo, *hi);
                    out.direct = Some((d, fr.offset + a));
                    return out;
                }
            }
            match source_vertex {
                Some(_) => {
                    let c = (0..3).find(|&c| (l[c] - fr.s).norm() == 0.0).expect("corner");
                    if vertices {
                        record(&mut out, self.faces[f][(c + 1) % 3], self.len[f][c], fr.offset + lo);
                        record(&mut out, self.faces[f][(c + 2) % 3], self.len[f][(c + 2) % 3], fr.offset + hi);
                    }
                    let j = (c + 1) % 3;
                    if let Some((h, hh)) = self.nbr[f][j] {
                        if m.segment_dist(&fr.s, &l[j], &l[(j + 1) % 3]) <= bound {
                            queue.push_back(Branch { frame: fi, face: h, iso: self.side_iso[f][j], entry: hh, lo: *lo, hi: *hi });
                        }
                    }
                }
                None => {
                    if vertices {
                        for c in 0..3 {
                            let d = m.dist(&fr.s, &l[c]);
                            if d > 0.0 {
                                record(&mut out, self.faces[f][c], d, ang(&l[c]));
                            }
                        }
                    }
                    for j in 0..3 {
                        let Some((h, hh)) = self.nbr[f][j] else { continue };
                        let a0 = ang(&l[j]);
                        let (lo, hi) = if source_side == Some((f, j)) {
                            (a0, a0 + PI)
                        } else {
                            let a1 = ang(&l[(j + 1) % 3]);
                            let span = wrap_pi(a1 - a0);
                            if span < 0.0 {
                                continue;
                            }
                            (a0, a0 + span)
                        };
                        if m.segment_dist(&fr.s, &l[j], &l[(j + 1) % 3]) <= bound {
                            queue.push_back(Branch { frame: fi, face: h, iso: self.side_iso[f][j], entry: hh, lo, hi });
                        }
                    }
                }
            }
        }

        let scale = self.max_edge_length();
        let mut visits = 0usize;
        while let Some(br) = queue.pop_front() {
            visits += 1;
            if visits > MAX_BRANCHES {
                break;
            }
            let fr = &frames[br.frame].0;
            let g = br.face;
            let lg = &self.layout[g];
            let pts = [br.iso.apply(&lg[0]), br.iso.apply(&lg[1]), br.iso.apply(&lg[2])];
            let mid = 0.5 * (br.lo + br.hi);
            let half = 0.5 * (br.hi - br.lo);
            let rel = |x: &V3| {
                let (a, b) = m.planar(&fr.s, &fr.e1, &fr.e2, x);
                mid + wrap_pi(b.atan2(a) - mid)
            };
            // Angles to points near the source carry rounding of order ε·scale/distance.
            let tol = |x: &V3| WIN_TOL + 1e-15 * scale / m.dist(&fr.s, x).max(1e-300);
            if let Some(t) = target {
                if let Some((_, b)) = t.faces.iter().find(|(h, _)| *h == g) {
                    let x = br.iso.apply(&m.from_bary(lg, b));
                    let a = rel(&x);
                    if (a - mid).abs() <= half + tol(&x) {
                        let d = m.dist(&fr.s, &x);
                        if d <= bound {
                            out.direct = Some((d, fr.offset + a.clamp(br.lo, br.hi)));
                            return out;
                        }
                    }
                }
            }
            let jj = br.entry;
            let w = (jj + 2) % 3;
            let aw = rel(&pts[w]);
            if vertices && (aw - mid).abs() <= half + tol(&pts[w]) {
                record(&mut out, self.faces[g][w], m.dist(&fr.s, &pts[w]), fr.offset + aw.clamp(br.lo, br.hi));
            }
            for j in [(jj + 1) % 3, (jj + 2) % 3] {
                let Some((h, hh)) = self.nbr[g][j] else { continue };
                let a0 = rel(&pts[j]);
                let a1 = a0 + wrap_pi(rel(&pts[(j + 1) % 3]) - a0);
                let slack = tol(&pts[j]).max(tol(&pts[(j + 1) % 3]));
                if a1 < a0 - slack {
                    continue;
                }
                let lo = br.lo.max(a0);
                let hi = br.hi.min(a1);
                if hi < lo - slack {
                    continue;
                }
                if m.segment_dist(&fr.s, &pts[j], &pts[(j + 1) % 3]) > bound {
                    continue;
                }
                let iso = br.iso.compose(&self.side_iso[g][j]);
                queue.push_back(Branch { frame: br.frame, face: h, iso, entry: hh, lo: lo.min(hi), hi: hi.max(lo) });
            }
        }
        out
    }

    /// True if a geodesic may bend at `v`.
    pub(crate) fn is_bend_vertex(&self, v: usize) -> bool {
        if self.boundary[v] {
            self.total_angle[v] > PI + ANGLE_TOL
        } else {
            self.total_angle[v] > TAU + ANGLE_TOL
        }
    }

    /// Geodesic distance and initial direction from `p` to `q`, searching
    /// paths no longer than `bound`.
    pub fn log_bounded(&self, p: &SurfacePoint, q: &SurfacePoint, bound: f64) -> Result<LogResult, GeodesicError> {
        let p = self.normalize(p);
        let q = self.normalize(q);
        if p == q {
            return Ok(LogResult { dist: 0.0, angle: 0.0, via: Vec::new() });
        }
        let target = self.target_of(&q);
        let first = self.sweep(&p, Some(&target), bound, true);
        if let Some((d, a)) = first.direct {
            return Ok(LogResult { dist: d, angle: self.reduce_angle(&p, a), via: Vec::new() });
        }
        // Dijkstra over bend vertices.
        let mut best: Option<(f64, usize)> = None;
        let mut limit = bound;
        // vertex -> (dist, prev, first angle)
        let mut node: BTreeMap<usize, (f64, Option<usize>, f64)> = BTreeMap::new();
        let mut done = std::collections::BTreeSet::new();
        let mut heap = BinaryHeap::new();
        for (&v, &(d, a)) in &first.visible {
            if self.is_bend_vertex(v) {
                node.insert(v, (d, None, a));
                heap.push(Reverse((OrdF64(d), v)));
            }
        }
        while let Some(Reverse((OrdF64(dv), v))) = heap.pop() {
            if !done.insert(v) || dv > node[&v].0 {
                continue;
            }
            if dv >= limit {
                break;
            }
            let src = SurfacePoint::Vertex { v };
            let sw = self.sweep(&src, Some(&target), limit - dv, true);
            if let Some((d, _)) = sw.direct {
                if dv + d < limit {
                    limit = dv + d;
                    best = Some((dv + d, v));
                }
            }
            let first_angle = node[&v].2;
            for (&w, &(d, _)) in &sw.visible {
                if !self.is_bend_vertex(w) || done.contains(&w) {
                    continue;
                }
                let nd = dv + d;
                if nd < limit && node.get(&w).map_or(true, |e| nd < e.0) {
                    node.insert(w, (nd, Some(v), first_angle));
                    heap.push(Reverse((OrdF64(nd), w)));
                }
            }
        }
        let (dist, last) = best.ok_or(GeodesicError::OutOfRange(bound))?;
        let mut via = vec![(last, node[&last].0)];
        let mut cur = last;
        while let Some(prev) = node[&cur].1 {
            via.push((prev, node[&prev].0));
            cur = prev;
        }
        via.reverse();
        let angle = self.reduce_angle(&p, node[&via[0].0].2);
        Ok(LogResult { dist, angle, via })
    }

    /// Geodesic distance and initial direction with the default search bound.
    /// Searches with growing bounds; a hit within a bound is exact since any
    /// shorter path also lies within it.
    pub fn log(&self, p: &SurfacePoint, q: &SurfacePoint) -> Result<LogResult, GeodesicError> {
        let full = self.search_bound();
        let mut bound = (2.0 * self.max_edge_length()).min(full);
        loop {
            match self.log_bounded(p, q, bound) {
                Err(GeodesicError::OutOfRange(_)) if bound < full => bound = (4.0 * bound).min(full),
                r => return r,
            }
        }
    }

    pub fn dist(&self, p: &SurfacePoint, q: &SurfacePoint) -> Result<f64, GeodesicError> {
        Ok(self.log(p, q)?.dist)
    }

    /// Largest distance considered by unbounded queries.
    pub fn search_bound(&self) -> f64 {
        match self.model {
            Model::Sphere => PI - 1e-9,
            Model::Flat => 4.0 * self.diameter().max(self.min_edge_length()),
        }
    }

    /// Vertices visible from `p` along straight segments, with distances and
    /// chart angles.
    pub fn visible_vertices(&self, p: &SurfacePoint, bound: f64) -> Vec<(usize, f64, f64)> {
        let p = self.normalize(p);
        let sw = self.sweep(&p, None, bound, true);
        sw.visible.into_iter().map(|(v, (d, a))| (v, d, self.reduce_angle(&p, a))).collect()
    }

    /// Total angle of the tangent cone at `p`.
    pub fn cone_angle_at(&self, p: &SurfacePoint) -> f64 {
        match self.normalize(p) {
            SurfacePoint::Vertex { v } => self.total_angle[v],
            _ => TAU,
        }
    }

    fn reduce_angle(&self, p: &SurfacePoint, a: f64) -> f64 {
        match *p {
            SurfacePoint::Vertex { v } if self.boundary[v] => a.clamp(0.0, self.total_angle[v]),
            _ => {
                let t = self.cone_angle_at(p);
                let r = a.rem_euclid(t);
                if r >= t {
                    0.0
                } else {
                    r
                }
            }
        }
    }

    /// Traces the geodesic leaving `p` at chart angle `theta` for length `len`.
    /// Through cone vertices it continues opposite the incoming direction.
    pub fn exp(&self, p: &SurfacePoint, theta: f64, len: f64) -> Result<ExpHit, GeodesicError> {
        self.exp_opt(p, theta, len, false)
    }

    /// Like [`ConeSurface::exp`], optionally stopping at the first vertex hit.
    pub fn exp_opt(&self, p: &SurfacePoint, theta: f64, len: f64, stop_at_vertex: bool) -> Result<ExpHit, GeodesicError> {
        if !(len >= 0.0) || !theta.is_finite() {
            return Err(GeodesicError::Domain(format!("bad exp arguments theta={theta} len={len}")));
        }
        let m = self.model;
        let mut p = self.normalize(p);
        let mut theta = theta;
        let mut remaining = len;
        let mut traveled = 0.0;
        for _ in 0..MAX_STEPS {
            if remaining <= 0.0 {
                return Ok(ExpHit { point: p, stopped_at: None, traveled });
            }
            // Initial state in some face layout.
            let (mut f, mut x, mut d, mut skip) = match p {
                SurfacePoint::Vertex { v } => {
                    let total = self.total_angle[v];
                    let th = if self.boundary[v] {
                        if theta < -ANGLE_TOL || theta > total + ANGLE_TOL {
                            return Err(GeodesicError::Boundary(p));
                        }
                        theta.clamp(0.0, total)
                    } else {
                        theta.rem_euclid(total)
                    };
                    let c = self.star[v]
                        .iter()
                        .find(|c| th <= c.start + c.width)
                        .copied()
                        .unwrap_or(*self.star[v].last().expect("nonempty star"));
                    let l = &self.layout[c.face];
                    let s = l[c.corner];
                    let e1 = m.direction(&s, &l[(c.corner + 1) % 3]);
                    let e2 = m.normal(&s).cross(&e1);
                    let a = (th - c.start).clamp(0.0, c.width);
                    let d = e1 * a.cos() + e2 * a.sin();
                    let mut skip = [true; 3];
                    skip[(c.corner + 1) % 3] = false;
                    (c.face, s, d, skip)
                }
                _ => {
                    let (f, x) = self.position(&p);
                    let (e1, e2) = self.point_frame(f, &x);
                    let d = e1 * theta.cos() + e2 * theta.sin();
                    let (_, b) = self.anchor(&p);
                    let mut skip = [false; 3];
                    let mut state = (f, x, d);
                    if let Some(k) = (0..3).find(|&k| b[(k + 2) % 3] == 0.0) {
                        let l = &self.layout[f];
                        let outward = match m {
                            Model::Flat => {
                                let e = l[(k + 1) % 3] - l[k];
                                e.x * d.y - e.y * d.x < 0.0
                            }
                            Model::Sphere => l[k].cross(&l[(k + 1) % 3]).dot(&d) < 0.0,
                        };
                        if outward {
                            let Some((g, kk)) = self.nbr[f][k] else {
                                return Err(GeodesicError::Boundary(p));
                            };
                            let iso = &self.side_iso[g][kk];
                            state = (g, iso.apply(&x), iso.apply_vec(&d));
                            skip[kk] = true;
                        } else {
                            skip[k] = true;
                        }
                    }
                    (state.0, state.1, state.2, skip)
                }
            };
            // March through faces.
            let mut vertex_hit = None;
            for _ in 0..MAX_STEPS {
                let l = &self.layout[f];
                let mut best: Option<(f64, usize, f64)> = None;
                for j in 0..3 {
                    if skip[j] {
                        continue;
                    }
                    if let Some((t, u)) = m.ray_hit(&x, &d, &l[j], &l[(j + 1) % 3], 0.0) {
                        if u >= -1e-9 && u <= 1.0 + 1e-9 && best.map_or(true, |b| t < b.0) {
                            best = Some((t, j, u));
                        }
                    }
                }
                let Some((t, j, u)) = best else {
                    return Err(GeodesicError::Numerical(format!("ray lost in face {f}")));
                };
                if remaining <= t {
                    let y = m.ray(&x, &d, remaining);
                    traveled += remaining;
                    let b = m.to_bary(l, &y);
                    let b = b.map(|c| c.max(0.0));
                    let s: f64 = b.iter().sum();
                    let pt = self.normalize(&SurfacePoint::Face { face: f, bary: b.map(|c| c / s) });
                    return Ok(ExpHit { point: pt, stopped_at: None, traveled });
                }
                let lj = self.len[f][j];
                let corner = if u * lj < VERTEX_SNAP {
                    Some(j)
                } else if (1.0 - u) * lj < VERTEX_SNAP {
                    Some((j + 1) % 3)
                } else {
                    None
                };
                if let Some(c) = corner {
                    remaining -= t;
                    traveled += t;
                    vertex_hit = Some((f, c, x));
                    break;
                }
                let y = m.ray(&x, &d, t);
                let dy = m.ray_tangent(&x, &d, t);
                remaining -= t;
                traveled += t;
                let Some((g, kk)) = self.nbr[f][j] else {
                    let mut b = [0.0; 3];
                    b[j] = 1.0 - u;
                    b[(j + 1) % 3] = u;
                    return Err(GeodesicError::Boundary(self.normalize(&SurfacePoint::Face { face: f, bary: b })));
                };
                let iso = &self.side_iso[g][kk];
                x = iso.apply(&y);
                d = iso.apply_vec(&dy);
                f = g;
                skip = [false; 3];
                skip[kk] = true;
            }
            let Some((f, c, xprev)) = vertex_hit else {
                return Err(GeodesicError::Numerical("step limit".into()));
            };
            let v = self.faces[f][c];
            p = SurfacePoint::Vertex { v };
            if remaining <= 1e-15 {
                return Ok(ExpHit { point: p, stopped_at: None, traveled });
            }
            if stop_at_vertex {
                return Ok(ExpHit { point: p, stopped_at: Some(v), traveled });
            }
            if self.boundary[v] {
                return Err(GeodesicError::Boundary(p));
            }
            let l = &self.layout[f];
            let s = l[c];
            let e1 = m.direction(&s, &l[(c + 1) % 3]);
            let e2 = m.normal(&s).cross(&e1);
            let back = m.direction(&s, &xprev);
            let a = back.dot(&e2).atan2(back.dot(&e1));
            let sc = self.star[v].iter().find(|sc| sc.face == f && sc.corner == c).expect("star corner");
            let a = if a < -PI / 2.0 { a + TAU } else { a };
            let theta_back = sc.start + a.clamp(0.0, sc.width);
            theta = theta_back + self.total_angle[v] / 2.0;
        }
        Err(GeodesicError::Numerical("step limit".into()))
    }

    /// Point at fraction `t` along the geodesic from `p` to `q`.
    pub fn geodesic_point(&self, p: &SurfacePoint, q: &SurfacePoint, t: f64) -> Result<SurfacePoint, GeodesicError> {
        if t <= 0.0 {
            return Ok(self.normalize(p));
        }
        if t >= 1.0 {
            return Ok(self.normalize(q));
        }
        let lg = self.log(p, q)?;
        self.along(p, q, &lg, t * lg.dist)
    }

    /// Point at arclength `s` along the path described by `lg` from `p` to `q`.
    pub fn along(&self, p: &SurfacePoint, q: &SurfacePoint, lg: &LogResult, s: f64) -> Result<SurfacePoint, GeodesicError> {
        if lg.via.is_empty() || s <= lg.via[0].1 {
            return Ok(self.exp(p, lg.angle, s)?.point);
        }
        let mut k = 0;
        while k + 1 < lg.via.len() && lg.via[k + 1].1 <= s {
            k += 1;
        }
        let (v, dv) = lg.via[k];
        let src = SurfacePoint::Vertex { v };
        let next = if k + 1 < lg.via.len() { SurfacePoint::Vertex { v: lg.via[k + 1].0 } } else { *q };
        let l2 = self.log(&src, &next)?;
        if l2.via.is_empty() {
            Ok(self.exp(&src, l2.angle, s - dv)?.point)
        } else {
            self.along(&src, &next, &l2, s - dv)
        }
    }
}

/// Places an angle from `atan2` inside the window `[lo, hi]` when possible.
fn unwrap_into(a: f64, lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    (mid + wrap_pi(a - mid)).clamp(lo, hi)
}
