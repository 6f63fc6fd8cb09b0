//! Rasterized image coverage on the target.
//!
//! Every target face is cut into `m²` barycentric sub-triangles. An image
//! triangle of a domain face is unfolded into the layout of a base face and
//! each cell whose centre falls inside it is counted, with the orientation
//! sign of the image and without it.

use super::PiecewiseMap;
use crate::domain_mesh::DomainMesh;
use crate::geom_kernel::ModelTriangle;
use crate::model::{Iso, Model, V3};
use crate::target_surface::{ConeSurface, SurfacePoint};
use std::collections::{BTreeMap, VecDeque};

/// Cell decomposition of a target surface.
#[derive(Debug, Clone)]
pub struct Raster {
    pub m: usize,
    centers: Vec<[f64; 3]>,
    /// Cell of each lattice position `(i, j, up)` within a face.
    index: BTreeMap<(usize, usize, bool), usize>,
    pub cell_area: Vec<f64>,
}

/// Coverage counts of one map.
#[derive(Debug, Clone)]
pub struct Coverage {
    pub signed: Vec<i32>,
    pub unsigned: Vec<u32>,
    pub covered_area: f64,
    /// Domain faces whose image could not be unfolded.
    pub skipped_faces: usize,
    /// Covering domain faces for the cells requested at rasterization.
    pub fibers: BTreeMap<usize, Vec<usize>>,
}

impl Raster {
    /// Cells with sides close to `cell` (target length units).
    pub fn new(surface: &ConeSurface, cell: f64) -> Self {
        let longest = surface.edges().iter().map(|e| e.length).fold(0.0, f64::max);
        let mut m = (longest / cell).ceil().max(1.0) as usize;
        while surface.n_faces() * m * m > 4_000_000 && m > 1 {
            m -= 1;
        }
        let mut centers = Vec::with_capacity(m * m);
        let mut lattice = Vec::with_capacity(m * m);
        let mf = m as f64;
        for j in 0..m {
            for i in 0..m - j {
                lattice.push((i, j, true));
                centers.push(bary((i as f64 + 1.0 / 3.0) / mf, (j as f64 + 1.0 / 3.0) / mf));
                if i + j + 2 <= m {
                    lattice.push((i, j, false));
                    centers.push(bary((i as f64 + 2.0 / 3.0) / mf, (j as f64 + 2.0 / 3.0) / mf));
                }
            }
        }
        let index = lattice.iter().enumerate().map(|(k, &c)| (c, k)).collect();
        let per = centers.len();
        let mut cell_area = Vec::with_capacity(per * surface.n_faces());
        for f in 0..surface.n_faces() {
            match surface.model {
                Model::Flat => {
                    let a = surface.face_area(f) / per as f64;
                    cell_area.extend(std::iter::repeat(a).take(per));
                }
                Model::Sphere => {
                    let l = surface.layout(f);
                    for &(i, j, up) in &lattice {
                        let c = if up {
                            [(i, j), (i + 1, j), (i, j + 1)]
                        } else {
                            [(i + 1, j), (i + 1, j + 1), (i, j + 1)]
                        };
                        let p = c.map(|(a, b)| surface.model.from_bary(l, &bary(a as f64 / mf, b as f64 / mf)));
                        let t = ModelTriangle {
                            a: surface.model.dist(&p[0], &p[1]),
                            b: surface.model.dist(&p[1], &p[2]),
                            c: surface.model.dist(&p[2], &p[0]),
                            kappa: 1.0,
                        };
                        cell_area.push(t.area().max(0.0));
                    }
                }
            }
        }
        Raster { m, centers, index, cell_area }
    }

    pub fn cells_per_face(&self) -> usize {
        self.centers.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_area.len()
    }

    /// Face and barycentric centre of a cell.
    pub fn cell_point(&self, cell: usize) -> SurfacePoint {
        let per = self.centers.len();
        SurfacePoint::Face { face: cell / per, bary: self.centers[cell % per] }
    }

    /// Position of the cell centre in its face layout.
    pub fn cell_position(&self, surface: &ConeSurface, cell: usize) -> (usize, V3) {
        let per = self.centers.len();
        let f = cell / per;
        (f, surface.model.from_bary(surface.layout(f), &self.centers[cell % per]))
    }

    /// Cell containing a point.
    pub fn cell_of(&self, surface: &ConeSurface, p: &SurfacePoint) -> usize {
        let (f, b) = surface.anchor(p);
        let mf = self.m as f64;
        let x = (b[1] * mf).clamp(0.0, mf - 1e-9);
        let y = (b[2] * mf).clamp(0.0, mf - 1e-9);
        let (i, j) = (x.floor() as usize, y.floor() as usize);
        let (i, j) = if i + j >= self.m { (i.min(self.m - 1 - j.min(self.m - 1)), j.min(self.m - 1)) } else { (i, j) };
        let up = (x - i as f64) + (y - j as f64) <= 1.0 || i + j + 2 > self.m;
        f * self.centers.len() + self.index[&(i, j, up)]
    }

    /// Rasterizes the image of every nondegenerate domain face. Covering
    /// faces are listed for the cells in `record`.
    pub fn cover(&self, mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap, record: &[usize]) -> Coverage {
        let n = self.n_cells();
        let per = self.centers.len();
        let m = surface.model;
        let mut cov = Coverage {
            signed: vec![0; n],
            unsigned: vec![0; n],
            covered_area: 0.0,
            skipped_faces: 0,
            fibers: record.iter().map(|&c| (c, Vec::new())).collect(),
        };
        let mf = self.m as f64;
        for f in 0..mesh.n_faces() {
            if mesh.degenerate[f] {
                continue;
            }
            let Some((fb, tri)) = self.unfold(mesh, surface, map, f) else {
                cov.skipped_faces += 1;
                continue;
            };
            let orient = m.side(&tri[0], &tri[1], &tri[2]);
            if orient == 0.0 || !orient.is_finite() {
                continue;
            }
            let sign = orient.signum();
            let inside = |x: &V3| (0..3).all(|k| sign * m.side(&tri[k], &tri[(k + 1) % 3], x) >= 0.0);
            let mut lo = tri[0];
            let mut hi = tri[0];
            for p in &tri[1..] {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            let mut seen = vec![fb];
            let mut queue = VecDeque::from([(fb, Iso::identity())]);
            while let Some((g, iso)) = queue.pop_front() {
                let lg = surface.layout(g);
                let pts = [iso.apply(&lg[0]), iso.apply(&lg[1]), iso.apply(&lg[2])];
                // Skip faces outside the triangle's bounding box.
                let (mut glo, mut ghi) = (pts[0], pts[0]);
                for p in &pts[1..] {
                    glo = glo.inf(p);
                    ghi = ghi.sup(p);
                }
                if (0..3).any(|k| glo[k] > hi[k] + 1e-12 || ghi[k] < lo[k] - 1e-12) {
                    continue;
                }
                let inv = iso.inverse();
                let cb = tri.map(|x| m.to_bary(lg, &inv.apply(&x)));
                let valid = m == Model::Flat || tri.iter().all(|x| x.dot(&(pts[0] + pts[1] + pts[2])) > 0.0);
                let (b1lo, b1hi, b2lo, b2hi) = if valid {
                    (
                        cb.iter().map(|b| b[1]).fold(f64::INFINITY, f64::min),
                        cb.iter().map(|b| b[1]).fold(f64::NEG_INFINITY, f64::max),
                        cb.iter().map(|b| b[2]).fold(f64::INFINITY, f64::min),
                        cb.iter().map(|b| b[2]).fold(f64::NEG_INFINITY, f64::max),
                    )
                } else {
                    (0.0, 1.0, 0.0, 1.0)
                };
                let i0 = ((b1lo.max(0.0) * mf).floor() as i64 - 1).max(0) as usize;
                let i1 = ((b1hi.min(1.0) * mf).ceil() as i64 + 1).max(0) as usize;
                let j0 = ((b2lo.max(0.0) * mf).floor() as i64 - 1).max(0) as usize;
                let j1 = ((b2hi.min(1.0) * mf).ceil() as i64 + 1).max(0) as usize;
                if b1hi >= -1e-12 && b2hi >= -1e-12 && b1lo <= 1.0 + 1e-12 && b2lo <= 1.0 + 1e-12 {
                    for j in j0..j1.min(self.m) {
                        for i in i0..i1.min(self.m - j) {
                            for up in [true, false] {
                                let Some(&k) = self.index.get(&(i, j, up)) else { continue };
                                let x = iso.apply(&m.from_bary(lg, &self.centers[k]));
                                if inside(&x) {
                                    let cell = g * per + k;
                                    cov.signed[cell] += sign as i32;
                                    cov.unsigned[cell] += 1;
                                    if let Some(list) = cov.fibers.get_mut(&cell) {
                                        list.push(f);
                                    }
                                }
                            }
                        }
                    }
                }
                for j in 0..3 {
                    let beyond = cb.iter().any(|b| b[(j + 2) % 3] < 0.0) || !valid;
                    if !beyond {
                        continue;
                    }
                    if let Some((h, _)) = surface.neighbor(g, j) {
                        if !seen.contains(&h) {
                            seen.push(h);
                            queue.push_back((h, iso.compose(surface.side_iso(g, j))));
                        }
                    }
                }
            }
        }
        cov.covered_area = (0..n).filter(|&c| cov.unsigned[c] > 0).map(|c| self.cell_area[c]).sum();
        cov
    }

    /// Image triangle of domain face `f` laid out in the frame of a base face.
    fn unfold(&self, mesh: &DomainMesh, surface: &ConeSurface, map: &PiecewiseMap, f: usize) -> Option<(usize, [V3; 3])> {
        let u = mesh.faces[f].map(|i| map.values[i]);
        let base = match u.iter().find(|p| !matches!(surface.normalize(p), SurfacePoint::Vertex { .. })) {
            Some(p) => surface.normalize(p),
            None => map.evaluate(mesh, surface, f, &[1.0 / 3.0; 3]).ok()?,
        };
        if let SurfacePoint::Vertex { .. } = base {
            return None;
        }
        let (fb, s) = surface.position(&base);
        let (e1, e2) = surface_frame(surface, fb, &s);
        let mut tri = [s; 3];
        for k in 0..3 {
            let l = surface.log(&base, &u[k]).ok()?;
            let d = e1 * l.angle.cos() + e2 * l.angle.sin();
            tri[k] = surface.model.ray(&s, &d, l.dist);
        }
        Some((fb, tri))
    }
}

fn bary(b1: f64, b2: f64) -> [f64; 3] {
    [1.0 - b1 - b2, b1, b2]
}

fn surface_frame(surface: &ConeSurface, f: usize, x: &V3) -> (V3, V3) {
    let l = surface.layout(f);
    let n = surface.model.normal(x);
    let d = l[1] - l[0];
    let e1 = (d - n * n.dot(&d)).normalize();
    (e1, n.cross(&e1))
}
