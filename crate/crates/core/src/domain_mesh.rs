//! Triangulated conformal domains: the round sphere and the unit disk.
//!
//! Each face carries a flat metric given by its side lengths: chords of the
//! disk, or great-circle arcs of the sphere. Faces whose three vertices lie
//! on one great circle get the shape of their parameter triangle instead.
//! Charts give conformal coordinates: the identity on the disk, and two
//! stereographic charts on the sphere related by `ζ ↦ 1/ζ`.

use crate::model::{Model, V3};
use num_complex::Complex64;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Sphere,
    Disk,
}

/// Conformal chart of a face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    /// The disk itself.
    Plane,
    /// `(x − iy)/(1 − z)`, regular away from the north pole.
    South,
    /// `(x + iy)/(1 + z)`, regular away from the south pole.
    North,
}

impl Chart {
    pub fn coord(self, p: &V3) -> Complex64 {
        match self {
            Chart::Plane => Complex64::new(p.x, p.y),
            Chart::South => Complex64::new(p.x, -p.y) / (1.0 - p.z),
            Chart::North => Complex64::new(p.x, p.y) / (1.0 + p.z),
        }
    }

    pub fn point(self, z: Complex64) -> V3 {
        match self {
            Chart::Plane => V3::new(z.re, z.im, 0.0),
            Chart::South => {
                let r2 = z.norm_sqr();
                V3::new(2.0 * z.re, -2.0 * z.im, r2 - 1.0) / (r2 + 1.0)
            }
            Chart::North => {
                let r2 = z.norm_sqr();
                V3::new(2.0 * z.re, 2.0 * z.im, 1.0 - r2) / (r2 + 1.0)
            }
        }
    }
}

/// Triangulated domain with per-face flat metrics.
#[derive(Debug, Clone)]
pub struct DomainMesh {
    pub kind: DomainKind,
    pub level: usize,
    pub positions: Vec<V3>,
    /// Counterclockwise seen from outside the sphere (or from +z on the disk).
    pub faces: Vec<[usize; 3]>,
    /// Side `k` of face `f` runs from corner `k` to corner `k+1`.
    pub face_lengths: Vec<[f64; 3]>,
    /// Vertices of the flat metric triangle: corner 0 at the origin, corner 1 on +x.
    pub face_shape: Vec<[[f64; 2]; 3]>,
    pub face_area: Vec<f64>,
    /// `cot[f][k]`: cotangent of the angle opposite side `k`.
    pub cot: Vec<[f64; 3]>,
    pub face_chart: Vec<Chart>,
    /// Faces whose vertices are cocircular on a great circle.
    pub degenerate: Vec<bool>,
    /// Boundary vertices in counterclockwise order (disk only).
    pub boundary: Vec<usize>,
    pub is_boundary: Vec<bool>,
    /// Symmetric cotangent weights `w_ij = ½ Σ cot`.
    pub neighbors: Vec<Vec<(usize, f64)>>,
    pub vertex_faces: Vec<Vec<usize>>,
    locator: Locator,
}

impl DomainMesh {
    pub fn n_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    /// Edge count of the face complex. Near the Step-1 corners two distinct
    /// edges can join the same pair of equator vertices.
    pub fn n_edges(&self) -> usize {
        let boundary_edges = if self.kind == DomainKind::Disk { self.boundary.len() } else { 0 };
        (3 * self.n_faces() + boundary_edges) / 2
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_edges() as i64 + self.n_faces() as i64
    }

    pub fn model(&self) -> Model {
        match self.kind {
            DomainKind::Sphere => Model::Sphere,
            DomainKind::Disk => Model::Flat,
        }
    }

    /// Distance in the domain's own metric (round sphere or plane).
    pub fn dist(&self, a: &V3, b: &V3) -> f64 {
        self.model().dist(a, b)
    }

    pub fn total_area(&self) -> f64 {
        self.face_area.iter().sum()
    }

    /// Largest distance between adjacent vertices.
    pub fn max_edge_length(&self) -> f64 {
        let mut m: f64 = 0.0;
        for (i, n) in self.neighbors.iter().enumerate() {
            for &(j, _) in n {
                m = m.max(self.dist(&self.positions[i], &self.positions[j]));
            }
        }
        m
    }

    /// Conformal coordinates of the face's vertices in the face's chart.
    pub fn chart_coordinates(&self, f: usize) -> [Complex64; 3] {
        let c = self.face_chart[f];
        self.faces[f].map(|v| c.coord(&self.positions[v]))
    }

    /// Rotation angle and scale taking the flat face metric frame to its chart:
    /// chart coordinates ≈ `scale · e^{i·angle}` · metric coordinates.
    pub fn chart_similarity(&self, f: usize) -> (f64, f64) {
        let z = self.chart_coordinates(f);
        let d = z[1] - z[0];
        let chart_area = 0.5 * ((z[1] - z[0]).conj() * (z[2] - z[0])).im;
        let scale = (chart_area.abs() / self.face_area[f]).sqrt();
        (d.arg(), if scale.is_finite() && scale > 0.0 { scale } else { d.norm() / self.face_lengths[f][0] })
    }

    /// Point of face `f` with parameter-barycentric coordinates `b`.
    /// On the sphere this is the geodesic construction
    /// `geod(v0, geod(v1, v2, b2/(b1+b2)), 1−b0)`; on the disk it is linear.
    pub fn face_point(&self, f: usize, b: &[f64; 3]) -> V3 {
        let v = self.faces[f].map(|i| self.positions[i]);
        match self.kind {
            DomainKind::Disk => v[0] * b[0] + v[1] * b[1] + v[2] * b[2],
            DomainKind::Sphere => {
                let t = 1.0 - b[0];
                if t <= 0.0 {
                    return v[0];
                }
                let s = b[2] / (b[1] + b[2]);
                let y = slerp(&v[1], &v[2], s);
                slerp(&v[0], &y, t)
            }
        }
    }

    /// Inverse of [`DomainMesh::face_point`] for a point of the face.
    pub fn face_coords(&self, f: usize, x: &V3) -> [f64; 3] {
        let v = self.faces[f].map(|i| self.positions[i]);
        match self.kind {
            DomainKind::Disk => Model::Flat.to_bary(&v, x),
            DomainKind::Sphere => {
                let n = v[0].cross(x);
                if n.norm() < 1e-15 {
                    return [1.0, 0.0, 0.0];
                }
                let m = v[1].cross(&v[2]);
                let mut y = n.cross(&m);
                if y.norm() < 1e-300 {
                    return Model::Sphere.to_bary(&v, x);
                }
                y = y.normalize();
                if y.dot(&(v[1] + v[2])) < 0.0 {
                    y = -y;
                }
                let l12 = arc(&v[1], &v[2]);
                let s = if l12 > 0.0 { arc(&v[1], &y) / l12 } else { 0.0 };
                let l0y = arc(&v[0], &y);
                let t = if l0y > 0.0 { arc(&v[0], x) / l0y } else { 0.0 };
                [1.0 - t, t * (1.0 - s), t * s]
            }
        }
    }

    /// Face containing `x` with its parameter-barycentric coordinates.
    pub fn locate(&self, x: &V3) -> Option<(usize, [f64; 3])> {
        let x = match self.kind {
            DomainKind::Sphere => x.normalize(),
            DomainKind::Disk => V3::new(x.x, x.y, 0.0),
        };
        let mut best: Option<(f64, usize)> = None;
        for &f in self.locator.candidates(&x) {
            if self.degenerate[f] {
                continue;
            }
            let v = self.faces[f].map(|i| self.positions[i]);
            if self.kind == DomainKind::Sphere && (v[0] + v[1] + v[2]).dot(&x) <= 0.0 {
                continue;
            }
            let b = self.model().to_bary(&v, &x);
            let w = b[0].min(b[1]).min(b[2]);
            if best.map_or(true, |(bw, _)| w > bw) {
                best = Some((w, f));
            }
        }
        let (w, f) = best?;
        if w < -1e-9 {
            return None;
        }
        let b = self.face_coords(f, &x).map(|c| c.clamp(0.0, 1.0));
        let s: f64 = b.iter().sum();
        Some((f, b.map(|c| c / s)))
    }

    /// Mesh as OBJ text.
    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {:?} domain mesh, level {}", self.kind, self.level);
        for p in &self.positions {
            let _ = writeln!(s, "v {:.17e} {:.17e} {:.17e}", p.x, p.y, p.z);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }

    fn assemble(
        kind: DomainKind,
        level: usize,
        positions: Vec<V3>,
        faces: Vec<[usize; 3]>,
        shapes: Vec<Option<[f64; 3]>>,
        charts: Vec<Chart>,
    ) -> Self {
        let model = match kind {
            DomainKind::Sphere => Model::Sphere,
            DomainKind::Disk => Model::Flat,
        };
        let nv = positions.len();
        let mut face_lengths = Vec::with_capacity(faces.len());
        let mut face_shape = Vec::with_capacity(faces.len());
        let mut face_area = Vec::with_capacity(faces.len());
        let mut cot = Vec::with_capacity(faces.len());
        let mut degenerate = Vec::with_capacity(faces.len());
        for (fi, f) in faces.iter().enumerate() {
            let geo = [0, 1, 2].map(|k| model.dist(&positions[f[k]], &positions[f[(k + 1) % 3]]));
            let l = match shapes[fi] {
                Some(shape) => {
                    // Parameter shape, scaled to the mean geodesic side.
                    let mean = (geo[0] + geo[1] + geo[2]) / 3.0;
                    let ms = (shape[0] + shape[1] + shape[2]) / 3.0;
                    shape.map(|x| x * mean / ms)
                }
                None => geo,
            };
            degenerate.push(shapes[fi].is_some());
            let x2 = (l[0] * l[0] + l[2] * l[2] - l[1] * l[1]) / (2.0 * l[0]);
            let y2 = (l[2] * l[2] - x2 * x2).max(0.0).sqrt();
            let p = [[0.0, 0.0], [l[0], 0.0], [x2, y2]];
            let area = 0.5 * l[0] * y2;
            let mut c = [0.0; 3];
            for k in 0..3 {
                // angle opposite side k sits at corner k+2
                let o = p[(k + 2) % 3];
                let a = p[k];
                let b = p[(k + 1) % 3];
                let u = [a[0] - o[0], a[1] - o[1]];
                let w = [b[0] - o[0], b[1] - o[1]];
                c[k] = (u[0] * w[0] + u[1] * w[1]) / (u[0] * w[1] - u[1] * w[0]).abs();
            }
            face_lengths.push(l);
            face_shape.push(p);
            face_area.push(area);
            cot.push(c);
        }
        let mut wmap: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); nv];
        let mut half: HashMap<(usize, usize), usize> = HashMap::new();
        let mut vertex_faces = vec![Vec::new(); nv];
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *wmap[a].entry(b).or_default() += 0.5 * cot[fi][k];
                *wmap[b].entry(a).or_default() += 0.5 * cot[fi][k];
                half.insert((a, b), fi);
                vertex_faces[f[k]].push(fi);
            }
        }
        let neighbors: Vec<Vec<(usize, f64)>> = wmap.into_iter().map(|m| m.into_iter().collect()).collect();
        let mut next = HashMap::new();
        for f in &faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if !half.contains_key(&(b, a)) {
                    next.insert(a, b);
                }
            }
        }
        let mut is_boundary = vec![false; nv];
        let mut boundary = Vec::new();
        if let Some(&start) = next.keys().min() {
            let mut cur = start;
            loop {
                boundary.push(cur);
                is_boundary[cur] = true;
                cur = next[&cur];
                if cur == start {
                    break;
                }
            }
        }
        let locator = Locator::new(model, &positions, &faces);
        DomainMesh {
            kind,
            level,
            positions,
            faces,
            face_lengths,
            face_shape,
            face_area,
            cot,
            face_chart: charts,
            degenerate,
            boundary,
            is_boundary,
            neighbors,
            vertex_faces,
            locator,
        }
    }
}

fn arc(a: &V3, b: &V3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

fn slerp(a: &V3, b: &V3, t: f64) -> V3 {
    let th = arc(a, b);
    if th < 1e-15 {
        return *a;
    }
    let s = th.sin();
    (a * ((1.0 - t) * th).sin() / s + b * (t * th).sin() / s).normalize()
}

/// Radial map from a convex polygon centred at the origin onto the unit
/// disk, linear on rays: `p ↦ p / r(arg p)` with `r` the polygon's radial function.
fn polygon_to_disk(p: [f64; 2], inradius: f64, normals: &[f64]) -> [f64; 2] {
    let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
    if r == 0.0 {
        return p;
    }
    let th = p[1].atan2(p[0]);
    let c = normals.iter().map(|n| (th - n).cos()).fold(f64::NEG_INFINITY, f64::max);
    let radial = inradius / c;
    [p[0] / radial, p[1] / radial]
}

/// Triangulated lattice of an equilateral triangle with `m` segments per
/// side: points `a + i/m (b−a) + j/m (c−a)` and counterclockwise faces.
fn triangle_lattice(a: [f64; 2], b: [f64; 2], c: [f64; 2], m: usize) -> (Vec<[f64; 2]>, Vec<[usize; 3]>, Vec<(usize, usize)>) {
    let mut pts = Vec::new();
    let mut ij = Vec::new();
    let mut id = HashMap::new();
    for j in 0..=m {
        for i in 0..=(m - j) {
            let (s, t) = (i as f64 / m as f64, j as f64 / m as f64);
            id.insert((i, j), pts.len());
            pts.push([a[0] + s * (b[0] - a[0]) + t * (c[0] - a[0]), a[1] + s * (b[1] - a[1]) + t * (c[1] - a[1])]);
            ij.push((i, j));
        }
    }
    let mut faces = Vec::new();
    for j in 0..m {
        for i in 0..(m - j) {
            faces.push([id[&(i, j)], id[&(i + 1, j)], id[&(i, j + 1)]]);
            if i + j + 2 <= m {
                faces.push([id[&(i + 1, j)], id[&(i + 1, j + 1)], id[&(i, j + 1)]]);
            }
        }
    }
    (pts, faces, ij)
}

/// Sphere triangulation from an equilateral triangle inscribed in the unit
/// circle: `n` midpoint refinements, radial map onto the disk, inverse
/// stereographic projection onto the lower hemisphere, and a mirror copy in
/// the upper hemisphere glued along the equator.
pub fn build_sphere_mesh(n: usize) -> DomainMesh {
    let m = 1usize << n;
    let corner = |k: f64| {
        let a = PI / 2.0 + k * 2.0 * PI / 3.0;
        [a.cos(), a.sin()]
    };
    let (pts, tri, ij) = triangle_lattice(corner(0.0), corner(1.0), corner(2.0), m);
    // Outward edge normals of the triangle: opposite the corners.
    let normals: Vec<f64> = (0..3).map(|k| PI / 2.0 + k as f64 * 2.0 * PI / 3.0 + PI).collect();
    let on_rim = |i: usize, j: usize| i == 0 || j == 0 || i + j == m;
    let mut positions = Vec::new();
    let mut lower = Vec::with_capacity(pts.len());
    for p in &pts {
        let w = polygon_to_disk(*p, 0.5, &normals);
        let r2 = w[0] * w[0] + w[1] * w[1];
        let mut x = V3::new(2.0 * w[0], 2.0 * w[1], r2 - 1.0) / (r2 + 1.0);
        if (r2 - 1.0).abs() < 1e-12 {
            x.z = 0.0;
            x = x.normalize();
        }
        lower.push(positions.len());
        positions.push(x);
    }
    let mut upper = Vec::with_capacity(pts.len());
    for (k, &(i, j)) in ij.iter().enumerate() {
        if on_rim(i, j) {
            upper.push(lower[k]);
        } else {
            let x = positions[lower[k]];
            upper.push(positions.len());
            positions.push(V3::new(x.x, x.y, -x.z));
        }
    }
    let mut faces = Vec::with_capacity(2 * tri.len());
    let mut shapes = Vec::with_capacity(2 * tri.len());
    let mut charts = Vec::with_capacity(2 * tri.len());
    let side = 3f64.sqrt() / m as f64;
    for (copy, map, chart) in [(0, &lower, Chart::South), (1, &upper, Chart::North)] {
        for t in &tri {
            let f = if copy == 0 { [map[t[0]], map[t[2]], map[t[1]]] } else { t.map(|i| map[i]) };
            let degenerate = t.iter().all(|&k| on_rim(ij[k].0, ij[k].1));
            faces.push(f);
            shapes.push(degenerate.then_some([side; 3]));
            charts.push(chart);
        }
    }
    DomainMesh::assemble(DomainKind::Sphere, n, positions, faces, shapes, charts)
}

/// Unit-disk triangulation from a regular hexagon: six equilateral
/// triangles refined `n` times, then mapped radially onto the disk.
pub fn build_disk_mesh(n: usize) -> DomainMesh {
    let m = 1i64 << n;
    let h = 1.0 / m as f64;
    let e1 = [h, 0.0];
    let e2 = [0.5 * h, 3f64.sqrt() / 2.0 * h];
    let inside = |i: i64, j: i64| i.abs() <= m && j.abs() <= m && (i + j).abs() <= m;
    let normals: Vec<f64> = (0..6).map(|k| PI / 6.0 + k as f64 * PI / 3.0).collect();
    let inradius = 3f64.sqrt() / 2.0;
    let mut id = HashMap::new();
    let mut positions = Vec::new();
    for j in -m..=m {
        for i in -m..=m {
            if inside(i, j) {
                id.insert((i, j), positions.len());
                let p = [e1[0] * i as f64 + e2[0] * j as f64, e1[1] * i as f64 + e2[1] * j as f64];
                let mut w = polygon_to_disk(p, inradius, &normals);
                if (i.abs() == m || j.abs() == m || (i + j).abs() == m) && (i, j) != (0, 0) {
                    let r = (w[0] * w[0] + w[1] * w[1]).sqrt();
                    w = [w[0] / r, w[1] / r];
                }
                positions.push(V3::new(w[0], w[1], 0.0));
            }
        }
    }
    let mut faces = Vec::new();
    for j in -m..m {
        for i in -m..=m {
            if inside(i, j) && inside(i + 1, j) && inside(i, j + 1) {
                faces.push([id[&(i, j)], id[&(i + 1, j)], id[&(i, j + 1)]]);
            }
            if inside(i + 1, j) && inside(i + 1, j + 1) && inside(i, j + 1) {
                faces.push([id[&(i + 1, j)], id[&(i + 1, j + 1)], id[&(i, j + 1)]]);
            }
        }
    }
    let nf = faces.len();
    DomainMesh::assemble(DomainKind::Disk, n as usize, positions, faces, vec![None; nf], vec![Chart::Plane; nf])
}

/// Uniform hash grid over face bounding boxes.
#[derive(Debug, Clone)]
struct Locator {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
    empty: Vec<usize>,
}

impl Locator {
    fn new(model: Model, positions: &[V3], faces: &[[usize; 3]]) -> Self {
        let mut total = 0.0;
        for f in faces {
            total += (positions[f[0]] - positions[f[1]]).norm();
        }
        let cell = (2.0 * total / faces.len().max(1) as f64).max(1e-6);
        let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            let v = f.map(|i| positions[i]);
            let mut lo = v[0];
            let mut hi = v[0];
            for p in &v[1..] {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            // Spherical faces bulge outward by at most the sagitta of their sides.
            let pad = match model {
                Model::Sphere => 0.5 * (hi - lo).norm().powi(2) + 1e-9,
                Model::Flat => 1e-9,
            };
            let key = |x: f64| (x / cell).floor() as i64;
            for a in key(lo.x - pad)..=key(hi.x + pad) {
                for b in key(lo.y - pad)..=key(hi.y + pad) {
                    for c in key(lo.z - pad)..=key(hi.z + pad) {
                        cells.entry((a, b, c)).or_default().push(fi);
                    }
                }
            }
        }
        Locator { cell, cells, empty: Vec::new() }
    }

    fn candidates(&self, x: &V3) -> &[usize] {
        let key = |t: f64| (t / self.cell).floor() as i64;
        self.cells.get(&(key(x.x), key(x.y), key(x.z))).unwrap_or(&self.empty)
    }
}
