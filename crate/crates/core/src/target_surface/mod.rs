//! Triangulated cone surfaces with flat or unit-sphere faces.
//!
//! A [`ConeSurface`] is built from combinatorics plus edge lengths only; each
//! face is laid out once in its model space and neighbouring layouts are
//! related by precomputed isometries. Geodesic queries unfold faces into the
//! layout of a source face.

mod chart;
pub mod fixtures;
mod geodesic;
mod io;
mod steiner;

pub use chart::{CornerInterval, TangentConeChart};
pub use geodesic::{ExpHit, GeodesicError, LogResult};
pub use io::{load_surface, parse_surface_json, parse_surface_obj, SurfaceDocument};
pub use steiner::DistanceEngine;

use crate::geom_kernel::{ModelTriangle, Scalar};
use crate::model::{Iso, Model, V3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

/// Angle-sum slack for the link condition.
pub const ANGLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Sphere,
    Disk,
}

impl Topology {
    pub fn euler_characteristic(self) -> i64 {
        match self {
            Topology::Sphere => 2,
            Topology::Disk => 1,
        }
    }
}

/// A point of a cone surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SurfacePoint {
    Vertex { v: usize },
    Edge { edge: usize, t: f64 },
    Face { face: usize, bary: [f64; 3] },
}

impl SurfacePoint {
    pub fn vertex(v: usize) -> Self {
        SurfacePoint::Vertex { v }
    }

    pub fn face(face: usize, bary: [f64; 3]) -> Self {
        SurfacePoint::Face { face, bary }
    }
}

/// One undirected edge with its incident face sides.
#[derive(Debug, Clone)]
pub struct EdgeRecord {
    /// Endpoints; the parameter `t` of an edge point runs from `v[0]` to `v[1]`.
    pub v: [usize; 2],
    pub length: f64,
    /// Side of the face in which the edge runs from `v[0]` to `v[1]`.
    pub primary: (usize, usize),
    pub secondary: Option<(usize, usize)>,
}

/// A corner of a vertex star with its angular interval in the vertex chart.
#[derive(Debug, Clone, Copy)]
pub struct StarCorner {
    pub face: usize,
    pub corner: usize,
    pub start: f64,
    pub width: f64,
}

/// A rule broken by a target document.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    Curvature { kappa: f64 },
    FaceIndex { face: usize },
    RepeatedVertex { face: usize },
    MissingEdgeLength { i: usize, j: usize },
    NonManifoldEdge { i: usize, j: usize },
    Orientation { i: usize, j: usize },
    TriangleInequality { face: usize, sides: [f64; 3] },
    Perimeter { face: usize, perimeter: f64 },
    IsolatedVertex { vertex: usize },
    NonManifoldVertex { vertex: usize },
    LinkCondition { vertex: usize, angle: f64 },
    Topology { expected: Topology, euler: i64, boundary_cycles: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Curvature { kappa } => write!(f, "curvature {kappa} is not 0 or 1"),
            Violation::FaceIndex { face } => write!(f, "face {face} references a missing vertex"),
            Violation::RepeatedVertex { face } => write!(f, "face {face} repeats a vertex"),
            Violation::MissingEdgeLength { i, j } => write!(f, "edge {i}-{j} has no length"),
            Violation::NonManifoldEdge { i, j } => write!(f, "edge {i}-{j} has more than two faces"),
            Violation::Orientation { i, j } => write!(f, "edge {i}-{j} is traversed twice in one direction"),
            Violation::TriangleInequality { face, sides } => {
                write!(f, "face {face} violates the triangle inequality with sides {sides:?}")
            }
            Violation::Perimeter { face, perimeter } => {
                write!(f, "face {face} has perimeter {perimeter} beyond the spherical bound 2π")
            }
            Violation::IsolatedVertex { vertex } => write!(f, "vertex {vertex} lies on no face"),
            Violation::NonManifoldVertex { vertex } => write!(f, "vertex {vertex} has a disconnected link"),
            Violation::LinkCondition { vertex, angle } => write!(
                f,
                "link condition fails at vertex {vertex}: total angle {angle} < 2π"
            ),
            Violation::Topology { expected, euler, boundary_cycles } => write!(
                f,
                "expected {expected:?} topology, found Euler characteristic {euler} with {boundary_cycles} boundary cycles"
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid surface: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("domain error: {0}")]
    Domain(String),
}

/// Validated triangulated cone surface.
#[derive(Debug, Clone)]
pub struct ConeSurface {
    pub topology: Topology,
    pub model: Model,
    n_vertices: usize,
    faces: Vec<[usize; 3]>,
    /// `len[f][k]`: side `k` runs from corner `k` to corner `k+1`.
    len: Vec<[f64; 3]>,
    angle: Vec<[f64; 3]>,
    layout: Vec<[V3; 3]>,
    nbr: Vec<[Option<(usize, usize)>; 3]>,
    /// `side_iso[f][k]` maps the layout of the neighbour across side `k` into `f`'s layout.
    side_iso: Vec<[Iso; 3]>,
    edges: Vec<EdgeRecord>,
    face_edge: Vec<[usize; 3]>,
    total_angle: Vec<f64>,
    boundary: Vec<bool>,
    star: Vec<Vec<StarCorner>>,
    /// Reference vertex positions in the plane or on the unit sphere: an
    /// isometric embedding for flat and round fixtures, a homeomorphic
    /// correspondence for cone spheres.
    embedding: Option<Vec<V3>>,
    diameter: f64,
    min_edge: f64,
    max_edge: f64,
}

impl ConeSurface {
    /// Builds and validates a surface from faces and an edge-length table.
    pub fn new(
        topology: Topology,
        kappa: f64,
        n_vertices: usize,
        faces: Vec<[usize; 3]>,
        lengths: &BTreeMap<(usize, usize), f64>,
    ) -> Result<Self, SurfaceError> {
        let mut viol = Vec::new();
        let model = match Model::from_kappa(kappa) {
            Some(m) => m,
            None => {
                return Err(SurfaceError::Invalid(vec![Violation::Curvature { kappa }]));
            }
        };
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n_vertices) {
                viol.push(Violation::FaceIndex { face: fi });
            } else if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                viol.push(Violation::RepeatedVertex { face: fi });
            }
        }
        if !viol.is_empty() {
            return Err(SurfaceError::Invalid(viol));
        }

        // Half-edge matching.
        let mut half: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
        let mut undirected: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if half.insert((a, b), (fi, k)).is_some() {
                    viol.push(Violation::Orientation { i: a.min(b), j: a.max(b) });
                }
                *undirected.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        for (&(i, j), &c) in &undirected {
            if c > 2 {
                viol.push(Violation::NonManifoldEdge { i, j });
            }
        }
        let lookup = |a: usize, b: usize| lengths.get(&(a.min(b), a.max(b))).copied();
        let mut len = Vec::with_capacity(faces.len());
        for f in &faces {
            let mut l = [0.0; 3];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                match lookup(a, b) {
                    Some(x) => l[k] = x,
                    None => viol.push(Violation::MissingEdgeLength { i: a.min(b), j: a.max(b) }),
                }
            }
            len.push(l);
        }
        viol.sort_by_key(|v| format!("{v:?}"));
        viol.dedup();
        if !viol.is_empty() {
            return Err(SurfaceError::Invalid(viol));
        }
        for (fi, l) in len.iter().enumerate() {
            match ModelTriangle::new(l[0], l[1], l[2], kappa) {
                Ok(_) => {}
                Err(crate::geom_kernel::GeomError::Domain(_)) => {
                    viol.push(Violation::Perimeter { face: fi, perimeter: l[0] + l[1] + l[2] })
                }
                Err(_) => viol.push(Violation::TriangleInequality { face: fi, sides: *l }),
            }
            let p = l[0] + l[1] + l[2];
            if l.iter().any(|&x| x <= 1e-12 * p.max(1e-300)) || degenerate(model, l) {
                viol.push(Violation::TriangleInequality { face: fi, sides: *l });
            }
        }
        if !viol.is_empty() {
            viol.dedup();
            return Err(SurfaceError::Invalid(viol));
        }

        let mut angle = Vec::with_capacity(faces.len());
        let mut layout = Vec::with_capacity(faces.len());
        for l in &len {
            // corner k is opposite side k+1
            let t = ModelTriangle::new(l[0], l[1], l[2], kappa).expect("validated");
            let [op0, op1, op2] = t.angles(); // opposite sides a=l0, b=l1, c=l2
            let a = [op1, op2, op0];
            angle.push(a);
            layout.push(model.layout(l[0], l[1], l[2], a[0]));
        }

        let mut nbr = vec![[None; 3]; faces.len()];
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if let Some(&(g, kk)) = half.get(&(b, a)) {
                    nbr[fi][k] = Some((g, kk));
                }
            }
        }
        let mut side_iso = vec![[Iso::identity(); 3]; faces.len()];
        for fi in 0..faces.len() {
            for k in 0..3 {
                if let Some((g, kk)) = nbr[fi][k] {
                    // In g, side kk runs from our corner k+1 to our corner k.
                    let a0 = layout[g][(kk + 1) % 3];
                    let b0 = layout[g][kk];
                    let a1 = layout[fi][k];
                    let b1 = layout[fi][(k + 1) % 3];
                    side_iso[fi][k] = Iso::align(model, &a0, &b0, &a1, &b1);
                }
            }
        }

        let mut edges: Vec<EdgeRecord> = Vec::new();
        let mut face_edge = vec![[usize::MAX; 3]; faces.len()];
        for fi in 0..faces.len() {
            for k in 0..3 {
                if face_edge[fi][k] != usize::MAX {
                    continue;
                }
                let id = edges.len();
                face_edge[fi][k] = id;
                let secondary = nbr[fi][k];
                if let Some((g, kk)) = secondary {
                    face_edge[g][kk] = id;
                }
                edges.push(EdgeRecord {
                    v: [faces[fi][k], faces[fi][(k + 1) % 3]],
                    length: len[fi][k],
                    primary: (fi, k),
                    secondary,
                });
            }
        }

        let mut corners_of: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_vertices];
        for (fi, f) in faces.iter().enumerate() {
            for c in 0..3 {
                corners_of[f[c]].push((fi, c));
            }
        }
        let mut boundary = vec![false; n_vertices];
        for e in &edges {
            if e.secondary.is_none() {
                boundary[e.v[0]] = true;
                boundary[e.v[1]] = true;
            }
        }
        let mut star = vec![Vec::new(); n_vertices];
        let mut total_angle = vec![0.0; n_vertices];
        for v in 0..n_vertices {
            let cs = &corners_of[v];
            if cs.is_empty() {
                viol.push(Violation::IsolatedVertex { vertex: v });
                continue;
            }
            // Clockwise-most corner: its side from v has no neighbour.
            let start = if boundary[v] {
                cs.iter().copied().find(|&(f, c)| nbr[f][c].is_none())
            } else {
                cs.iter().copied().min()
            };
            let Some(start) = start else {
                viol.push(Violation::NonManifoldVertex { vertex: v });
                continue;
            };
            let mut ordered = vec![start];
            let mut cur = start;
            loop {
                let (f, c) = cur;
                match nbr[f][(c + 2) % 3] {
                    Some((g, _)) => {
                        let cg = (0..3).find(|&i| faces[g][i] == v).expect("shared vertex");
                        if (g, cg) == start {
                            break;
                        }
                        if ordered.len() > cs.len() {
                            break;
                        }
                        ordered.push((g, cg));
                        cur = (g, cg);
                    }
                    None => break,
                }
            }
            if ordered.len() != cs.len() {
                viol.push(Violation::NonManifoldVertex { vertex: v });
                continue;
            }
            let mut acc = 0.0;
            for &(f, c) in &ordered {
                let w = angle[f][c];
                star[v].push(StarCorner { face: f, corner: c, start: acc, width: w });
                acc += w;
            }
            total_angle[v] = acc;
            if !boundary[v] && acc < 2.0 * PI - ANGLE_TOL {
                viol.push(Violation::LinkCondition { vertex: v, angle: acc });
            }
        }

        let n_boundary_edges = edges.iter().filter(|e| e.secondary.is_none()).count();
        let cycles = boundary_cycles(&faces, &nbr);
        let euler = n_vertices as i64 - edges.len() as i64 + faces.len() as i64;
        let topo_ok = match topology {
            Topology::Sphere => n_boundary_edges == 0 && euler == 2,
            Topology::Disk => cycles == 1 && euler == 1,
        };
        if !topo_ok {
            viol.push(Violation::Topology { expected: topology, euler, boundary_cycles: cycles });
        }
        if !viol.is_empty() {
            return Err(SurfaceError::Invalid(viol));
        }

        let min_edge = edges.iter().map(|e| e.length).fold(f64::INFINITY, f64::min);
        let max_edge = edges.iter().map(|e| e.length).fold(0.0, f64::max);
        let mut s = ConeSurface {
            topology,
            model,
            n_vertices,
            faces,
            len,
            angle,
            layout,
            nbr,
            side_iso,
            edges,
            face_edge,
            total_angle,
            boundary,
            star,
            embedding: None,
            diameter: 0.0,
            min_edge,
            max_edge,
        };
        s.diameter = s.estimate_diameter();
        Ok(s)
    }

    /// Builds a surface from 3D vertex positions; edge lengths are chords
    /// (flat) or great-circle arcs of the normalized positions (sphere).
    pub fn from_embedding(
        topology: Topology,
        kappa: f64,
        positions: &[V3],
        faces: Vec<[usize; 3]>,
    ) -> Result<Self, SurfaceError> {
        let model = Model::from_kappa(kappa).ok_or_else(|| SurfaceError::Invalid(vec![Violation::Curvature { kappa }]))?;
        let pos: Vec<V3> = match model {
            Model::Flat => positions.to_vec(),
            Model::Sphere => positions.iter().map(|p| p.normalize()).collect(),
        };
        let mut lengths = BTreeMap::new();
        for f in &faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if a < pos.len() && b < pos.len() {
                    let d = match model {
                        Model::Flat => (pos[a] - pos[b]).norm(),
                        Model::Sphere => model.dist(&pos[a], &pos[b]),
                    };
                    lengths.insert((a.min(b), a.max(b)), d);
                }
            }
        }
        let mut s = Self::new(topology, kappa, pos.len(), faces, &lengths)?;
        s.embedding = Some(pos);
        Ok(s)
    }

    pub fn kappa(&self) -> f64 {
        self.model.kappa()
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn face_edges(&self, f: usize) -> [usize; 3] {
        self.face_edge[f]
    }

    pub fn side_lengths(&self, f: usize) -> [f64; 3] {
        self.len[f]
    }

    pub fn corner_angles(&self, f: usize) -> [f64; 3] {
        self.angle[f]
    }

    pub fn layout(&self, f: usize) -> &[V3; 3] {
        &self.layout[f]
    }

    pub fn neighbor(&self, f: usize, side: usize) -> Option<(usize, usize)> {
        self.nbr[f][side]
    }

    pub fn side_iso(&self, f: usize, side: usize) -> &Iso {
        &self.side_iso[f][side]
    }

    pub fn star(&self, v: usize) -> &[StarCorner] {
        &self.star[v]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn embedding(&self) -> Option<&[V3]> {
        self.embedding.as_deref()
    }

    /// Crude diameter estimate from a double sweep over the edge graph.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn min_edge_length(&self) -> f64 {
        self.min_edge
    }

    pub fn max_edge_length(&self) -> f64 {
        self.max_edge
    }

    /// Radius below which geodesic balls are treated as convex.
    pub fn convexity_radius(&self) -> f64 {
        match self.model {
            Model::Sphere => PI / 2.0,
            Model::Flat => self.diameter.max(self.min_edge),
        }
    }

    /// Radius of the balls in which map images must lie for local formulas.
    pub fn locality_radius(&self) -> f64 {
        0.25 * self.convexity_radius()
    }

    /// True if some interior vertex has total angle above 2π.
    pub fn has_cone_points(&self) -> bool {
        (0..self.n_vertices).any(|v| !self.boundary[v] && self.total_angle[v] > 2.0 * PI + ANGLE_TOL)
    }

    /// Sum of the corner angles at `v`.
    pub fn vertex_total_angle(&self, v: usize) -> Result<f64, SurfaceError> {
        if v >= self.n_vertices {
            return Err(SurfaceError::Domain(format!("vertex {v} does not exist")));
        }
        if self.boundary[v] {
            return Err(SurfaceError::Domain(format!("vertex {v} lies on the boundary")));
        }
        Ok(self.total_angle[v])
    }

    /// Total angle including boundary vertices.
    pub fn angle_sum(&self, v: usize) -> f64 {
        self.total_angle[v]
    }

    /// Cone parameter `total angle / 2π` at an interior vertex.
    pub fn beta(&self, v: usize) -> f64 {
        self.total_angle[v] / (2.0 * PI)
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let l = self.len[f];
        ModelTriangle { a: l[0], b: l[1], c: l[2], kappa: self.kappa() }.area()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Snaps tiny coordinates so that points on edges and vertices get their
    /// lowest-dimensional locator.
    pub fn normalize(&self, p: &SurfacePoint) -> SurfacePoint {
        const EPS: f64 = 1e-13;
        match *p {
            SurfacePoint::Vertex { .. } => *p,
            SurfacePoint::Edge { edge, t } => {
                let e = &self.edges[edge];
                if t <= EPS {
                    SurfacePoint::Vertex { v: e.v[0] }
                } else if t >= 1.0 - EPS {
                    SurfacePoint::Vertex { v: e.v[1] }
                } else {
                    *p
                }
            }
            SurfacePoint::Face { face, bary } => {
                let mut b = bary.map(|x| if x.abs() <= EPS { 0.0 } else { x.max(0.0) });
                let s: f64 = b.iter().sum();
                if !(s > 0.0) {
                    b = [1.0, 0.0, 0.0];
                } else {
                    b = b.map(|x| x / s);
                }
                let nz: Vec<usize> = (0..3).filter(|&k| b[k] > 0.0).collect();
                match nz.len() {
                    1 => SurfacePoint::Vertex { v: self.faces[face][nz[0]] },
                    2 => {
                        // side k runs between corners k and k+1
                        let k = if nz == [0, 1] {
                            0
                        } else if nz == [1, 2] {
                            1
                        } else {
                            2
                        };
                        let t_from_k = b[(k + 1) % 3];
                        let e = &self.edges[self.face_edge[face][k]];
                        let t = if e.v[0] == self.faces[face][k] { t_from_k } else { 1.0 - t_from_k };
                        SurfacePoint::Edge { edge: self.face_edge[face][k], t }
                    }
                    _ => SurfacePoint::Face { face, bary: b },
                }
            }
        }
    }

    /// A face containing `p` with barycentric coordinates of `p` in it.
    pub fn anchor(&self, p: &SurfacePoint) -> (usize, [f64; 3]) {
        match *p {
            SurfacePoint::Vertex { v } => {
                let c = self.star[v][0];
                let mut b = [0.0; 3];
                b[c.corner] = 1.0;
                (c.face, b)
            }
            SurfacePoint::Edge { edge, t } => {
                let (f, k) = self.edges[edge].primary;
                let mut b = [0.0; 3];
                b[k] = 1.0 - t;
                b[(k + 1) % 3] = t;
                (f, b)
            }
            SurfacePoint::Face { face, bary } => (face, bary),
        }
    }

    /// Barycentric coordinates of `p` in face `f`, if `p` lies on its closure.
    pub fn bary_in(&self, p: &SurfacePoint, f: usize) -> Option<[f64; 3]> {
        match *p {
            SurfacePoint::Vertex { v } => {
                let c = (0..3).find(|&c| self.faces[f][c] == v)?;
                let mut b = [0.0; 3];
                b[c] = 1.0;
                Some(b)
            }
            SurfacePoint::Edge { edge, t } => {
                let k = (0..3).find(|&k| self.face_edge[f][k] == edge)?;
                let e = &self.edges[edge];
                let mut b = [0.0; 3];
                if self.faces[f][k] == e.v[0] {
                    b[k] = 1.0 - t;
                    b[(k + 1) % 3] = t;
                } else {
                    b[k] = t;
                    b[(k + 1) % 3] = 1.0 - t;
                }
                Some(b)
            }
            SurfacePoint::Face { face, bary } => (face == f).then_some(bary),
        }
    }

    /// Position of `p` in the layout of its anchor face.
    pub fn position(&self, p: &SurfacePoint) -> (usize, V3) {
        let (f, b) = self.anchor(p);
        (f, self.model.from_bary(&self.layout[f], &b))
    }

    /// Faces whose closure contains `p`.
    pub fn faces_containing(&self, p: &SurfacePoint) -> Vec<usize> {
        match *p {
            SurfacePoint::Vertex { v } => self.star[v].iter().map(|c| c.face).collect(),
            SurfacePoint::Edge { edge, .. } => {
                let e = &self.edges[edge];
                let mut out = vec![e.primary.0];
                if let Some((g, _)) = e.secondary {
                    out.push(g);
                }
                out
            }
            SurfacePoint::Face { face, .. } => vec![face],
        }
    }

    /// True if `p` lies on the boundary of a disk surface.
    pub fn on_boundary(&self, p: &SurfacePoint) -> bool {
        match *p {
            SurfacePoint::Vertex { v } => self.boundary[v],
            SurfacePoint::Edge { edge, .. } => self.edges[edge].secondary.is_none(),
            SurfacePoint::Face { .. } => false,
        }
    }

    /// Locates a point given in the reference positions of a fixture surface.
    pub fn locate_embedded(&self, x: &V3) -> Option<SurfacePoint> {
        let emb = self.embedding.as_ref()?;
        let x = match self.model {
            Model::Flat => V3::new(x.x, x.y, 0.0),
            Model::Sphere => x.normalize(),
        };
        let mut best: Option<(f64, usize, [f64; 3])> = None;
        for (fi, f) in self.faces.iter().enumerate() {
            let v = [emb[f[0]], emb[f[1]], emb[f[2]]];
            if self.model == Model::Sphere && v.iter().map(|p| p.dot(&x)).sum::<f64>() <= 0.0 {
                continue;
            }
            let b = self.model.to_bary(&v, &x);
            let worst = b.iter().cloned().fold(f64::INFINITY, f64::min);
            if best.map_or(true, |(w, _, _)| worst > w) {
                best = Some((worst, fi, b));
            }
        }
        let (w, f, b) = best?;
        if w < -1e-9 {
            return None;
        }
        let b = b.map(|x| x.max(0.0));
        let s: f64 = b.iter().sum();
        Some(self.normalize(&SurfacePoint::Face { face: f, bary: b.map(|x| x / s) }))
    }

    /// Reference position of a point of a fixture surface.
    pub fn embedded_position(&self, p: &SurfacePoint) -> Option<V3> {
        let emb = self.embedding.as_ref()?;
        let (f, b) = self.anchor(p);
        let v = self.faces[f].map(|i| emb[i]);
        Some(self.model.from_bary(&v, &b))
    }

    fn estimate_diameter(&self) -> f64 {
        if self.model == Model::Sphere && !self.has_cone_points() {
            return PI;
        }
        let mut adj = vec![Vec::new(); self.n_vertices];
        for e in &self.edges {
            adj[e.v[0]].push((e.v[1], e.length));
            adj[e.v[1]].push((e.v[0], e.length));
        }
        let sweep = |src: usize| {
            let d = dijkstra(&adj, src);
            let (far, dist) = d
                .iter()
                .enumerate()
                .fold((src, 0.0), |acc, (i, &x)| if x > acc.1 && x.is_finite() { (i, x) } else { acc });
            (far, dist)
        };
        let (a, _) = sweep(0);
        let (_, d) = sweep(a);
        d
    }
}

fn degenerate(model: Model, l: &[f64; 3]) -> bool {
    let t = ModelTriangle { a: l[0], b: l[1], c: l[2], kappa: model.kappa() };
    let ang = t.angles();
    ang.iter().any(|&a| a < 1e-12 || a > PI - 1e-12)
}

fn boundary_cycles(faces: &[[usize; 3]], nbr: &[[Option<(usize, usize)>; 3]]) -> usize {
    let mut next: BTreeMap<usize, usize> = BTreeMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            if nbr[fi][k].is_none() {
                next.insert(f[k], f[(k + 1) % 3]);
            }
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut cycles = 0;
    for &s in next.keys() {
        if seen.contains(&s) {
            continue;
        }
        cycles += 1;
        let mut cur = s;
        while seen.insert(cur) {
            match next.get(&cur) {
                Some(&n) => cur = n,
                None => break,
            }
        }
    }
    cycles
}

pub(crate) fn dijkstra(adj: &[Vec<(usize, f64)>], src: usize) -> Vec<f64> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Reverse((OrdF64(0.0), src)));
    while let Some(Reverse((OrdF64(d), u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse((OrdF64(nd), v)));
            }
        }
    }
    dist
}

/// Totally ordered float wrapper for priority queues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct OrdF64(pub f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Scalar-generic total angle of a fan of model triangles around a vertex,
/// given as the side lengths `(a, b, opposite)` of each incident corner.
pub fn fan_angle<T: Scalar>(corners: &[(T, T, T)], kappa: T) -> Result<T, crate::geom_kernel::GeomError> {
    let mut acc = T::zero();
    for &(a, b, c) in corners {
        acc = acc + crate::geom_kernel::model_angle(a, b, c, kappa)?;
    }
    Ok(acc)
}

impl ConeSurface {
    /// Tangent-cone chart at an interior point.
    pub fn tangent_chart(&self, p: &SurfacePoint) -> Result<TangentConeChart, SurfaceError> {
        if self.on_boundary(&self.normalize(p)) {
            return Err(SurfaceError::Domain("tangent chart requested at a boundary point".into()));
        }
        Ok(TangentConeChart::new(self, p))
    }

    /// Point at distance `r` from `q0` on the geodesic from `q0` through `q`,
    /// continued past cone vertices along the bisecting direction.
    pub fn geodesic_extend(&self, q0: &SurfacePoint, q: &SurfacePoint, r: f64) -> Result<SurfacePoint, GeodesicError> {
        let lg = self.log(q0, q)?;
        if lg.dist == 0.0 {
            return Err(GeodesicError::Domain("extension through coincident points".into()));
        }
        if !lg.via.is_empty() {
            if r <= lg.dist {
                return self.along(q0, q, &lg, r);
            }
            let (v, dv) = *lg.via.last().expect("nonempty");
            let src = SurfacePoint::Vertex { v };
            let l2 = self.log(&src, q)?;
            return Ok(self.exp(&src, l2.angle, r - dv)?.point);
        }
        Ok(self.exp(q0, lg.angle, r)?.point)
    }
}
