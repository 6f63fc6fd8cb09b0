//! Bundled target surfaces.

use super::{ConeSurface, SurfaceError, Topology};
use crate::model::{Model, V3};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// One-to-four midpoint subdivision; new vertices are geodesic edge midpoints.
pub fn subdivide(s: &ConeSurface) -> Result<ConeSurface, SurfaceError> {
    let m = s.model;
    let n = s.n_vertices();
    let mut faces = Vec::with_capacity(4 * s.n_faces());
    let mut lengths = BTreeMap::new();
    let mid = |a: &V3, b: &V3| match m {
        Model::Flat => (a + b) * 0.5,
        Model::Sphere => (a + b).normalize(),
    };
    for f in 0..s.n_faces() {
        let l = s.layout(f);
        let v = s.faces()[f];
        let e = s.face_edges(f);
        let mp = [mid(&l[0], &l[1]), mid(&l[1], &l[2]), mid(&l[2], &l[0])];
        let mi = [n + e[0], n + e[1], n + e[2]];
        let pts = [(v[0], l[0]), (v[1], l[1]), (v[2], l[2]), (mi[0], mp[0]), (mi[1], mp[1]), (mi[2], mp[2])];
        let sub = [[0, 3, 5], [3, 1, 4], [5, 4, 2], [3, 4, 5]];
        for t in sub {
            faces.push(t.map(|i| pts[i].0));
            for k in 0..3 {
                let (a, b) = (pts[t[k]], pts[t[(k + 1) % 3]]);
                lengths.insert((a.0.min(b.0), a.0.max(b.0)), m.dist(&a.1, &b.1));
            }
        }
    }
    let mut out = ConeSurface::new(s.topology, s.kappa(), n + s.edges().len(), faces, &lengths)?;
    if let Some(emb) = s.embedding() {
        let mut pos = emb.to_vec();
        for e in s.edges() {
            pos.push(mid(&emb[e.v[0]], &emb[e.v[1]]));
        }
        out.embedding = Some(pos);
    }
    Ok(out)
}

fn subdivide_times(mut s: ConeSurface, levels: usize) -> Result<ConeSurface, SurfaceError> {
    for _ in 0..levels {
        s = subdivide(&s)?;
    }
    Ok(s)
}

/// Octahedral geodesic triangulation of the unit sphere, refined `levels` times.
pub fn round_sphere(levels: usize) -> ConeSurface {
    let pos = vec![
        V3::x(),
        V3::y(),
        -V3::x(),
        -V3::y(),
        V3::z(),
        -V3::z(),
    ];
    let faces = vec![
        [0, 1, 4],
        [1, 2, 4],
        [2, 3, 4],
        [3, 0, 4],
        [1, 0, 5],
        [2, 1, 5],
        [3, 2, 5],
        [0, 3, 5],
    ];
    let s = ConeSurface::from_embedding(Topology::Sphere, 1.0, &pos, faces).expect("octahedron");
    subdivide_times(s, levels).expect("refined sphere")
}

/// Spherical "rugby ball": two antipodal cones of total angle `2πβ` joined
/// by `m` spherical lunes split at the equator.
pub fn rugby_ball(beta: f64, m: usize, levels: usize) -> Result<ConeSurface, SurfaceError> {
    let n = 0usize;
    let s = 1usize;
    let eq = |i: usize| 2 + i % m;
    let mut faces = Vec::new();
    let mut lengths = BTreeMap::new();
    let arc = 2.0 * PI * beta / m as f64;
    for i in 0..m {
        faces.push([n, eq(i), eq(i + 1)]);
        faces.push([s, eq(i + 1), eq(i)]);
        lengths.insert((n, eq(i)), PI / 2.0);
        lengths.insert((s, eq(i)), PI / 2.0);
        let (a, b) = (eq(i), eq(i + 1));
        lengths.insert((a.min(b), a.max(b)), arc);
    }
    let mut base = ConeSurface::new(Topology::Sphere, 1.0, m + 2, faces, &lengths)?;
    // Reference correspondence: poles and equally spaced equator points.
    let mut pos = vec![V3::z(), -V3::z()];
    for i in 0..m {
        let a = 2.0 * PI * i as f64 / m as f64;
        pos.push(V3::new(a.cos(), a.sin(), 0.0));
    }
    base.embedding = Some(pos);
    subdivide_times(base, levels)
}

/// Sphere glued from four equilateral spherical triangles with angles 3π/4;
/// every vertex has total angle 9π/4.
pub fn tetra_cone_sphere(levels: usize) -> Result<ConeSurface, SurfaceError> {
    let a = 3.0 * PI / 4.0;
    let side = (a.cos() / (1.0 - a.cos())).acos();
    let faces = vec![[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]];
    let mut lengths = BTreeMap::new();
    for i in 0..4 {
        for j in i + 1..4 {
            lengths.insert((i, j), side);
        }
    }
    let mut base = ConeSurface::new(Topology::Sphere, 1.0, 4, faces, &lengths)?;
    // Reference correspondence: vertices of a regular tetrahedron.
    let k = 1.0 / 3f64.sqrt();
    base.embedding = Some(vec![
        V3::new(k, k, k),
        V3::new(k, -k, -k),
        V3::new(-k, k, -k),
        V3::new(-k, -k, k),
    ]);
    subdivide_times(base, levels)
}

/// Flat regular hexagon of circumradius `radius`, cut into `6·n²`
/// equilateral triangles.
pub fn flat_hexagon(radius: f64, n: usize) -> ConeSurface {
    let n = n.max(1) as i64;
    let h = radius / n as f64;
    let e1 = V3::new(1.0, 0.0, 0.0) * h;
    let e2 = V3::new(0.5, 3f64.sqrt() / 2.0, 0.0) * h;
    let inside = |i: i64, j: i64| i.abs() <= n && j.abs() <= n && (i + j).abs() <= n;
    let mut id = BTreeMap::new();
    let mut pos = Vec::new();
    for j in -n..=n {
        for i in -n..=n {
            if inside(i, j) {
                id.insert((i, j), pos.len());
                pos.push(e1 * i as f64 + e2 * j as f64);
            }
        }
    }
    let mut faces = Vec::new();
    for j in -n..n {
        for i in -n..=n {
            if inside(i, j) && inside(i + 1, j) && inside(i, j + 1) {
                faces.push([id[&(i, j)], id[&(i + 1, j)], id[&(i, j + 1)]]);
            }
            if inside(i + 1, j) && inside(i + 1, j + 1) && inside(i, j + 1) {
                faces.push([id[&(i + 1, j)], id[&(i + 1, j + 1)], id[&(i, j + 1)]]);
            }
        }
    }
    ConeSurface::from_embedding(Topology::Disk, 0.0, &pos, faces).expect("hexagon")
}

/// Flat cone disk of total apex angle `2πβ` and radius `radius`, built from
/// `sectors` isosceles triangles around the apex (vertex 0) and refined.
pub fn flat_cone(beta: f64, sectors: usize, radius: f64, levels: usize) -> Result<ConeSurface, SurfaceError> {
    let w = 2.0 * PI * beta / sectors as f64;
    let mut faces = Vec::new();
    let mut lengths = BTreeMap::new();
    let chord = 2.0 * radius * (w / 2.0).sin();
    for i in 0..sectors {
        let (a, b) = (1 + i, 1 + (i + 1) % sectors);
        faces.push([0, a, b]);
        lengths.insert((0, a), radius);
        lengths.insert((a.min(b), a.max(b)), chord);
    }
    let base = ConeSurface::new(Topology::Disk, 0.0, sectors + 1, faces, &lengths)?;
    subdivide_times(base, levels)
}

/// `n` unit equilateral flat triangles around a common vertex 0.
pub fn umbrella(n: usize) -> Result<ConeSurface, SurfaceError> {
    let mut faces = Vec::new();
    let mut lengths = BTreeMap::new();
    for i in 0..n {
        let (a, b) = (1 + i, 1 + (i + 1) % n);
        faces.push([0, a, b]);
        lengths.insert((0, a), 1.0);
        lengths.insert((a.min(b), a.max(b)), 1.0);
    }
    ConeSurface::new(Topology::Disk, 0.0, n + 1, faces, &lengths)
}

/// Flat regular tetrahedron with unit edges; fails the link condition.
pub fn regular_tetrahedron() -> Result<ConeSurface, SurfaceError> {
    let faces = vec![[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]];
    let mut lengths = BTreeMap::new();
    for i in 0..4 {
        for j in i + 1..4 {
            lengths.insert((i, j), 1.0);
        }
    }
    ConeSurface::new(Topology::Sphere, 0.0, 4, faces, &lengths)
}

/// Two unit squares glued along their boundary; fails the link condition
/// at the four corners.
pub fn doubled_square() -> Result<ConeSurface, SurfaceError> {
    let faces = vec![[0, 1, 2], [0, 2, 3], [1, 0, 3], [1, 3, 2]];
    let d = 2f64.sqrt();
    let lengths = BTreeMap::from([((0, 1), 1.0), ((1, 2), 1.0), ((2, 3), 1.0), ((0, 3), 1.0), ((0, 2), d), ((1, 3), d)]);
    ConeSurface::new(Topology::Sphere, 0.0, 4, faces, &lengths)
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: &[&str] = &[
    "round-sphere",
    "rugby-ball",
    "tetra-cone",
    "flat-disk",
    "flat-cone",
    "umbrella-6",
    "umbrella-7",
    "tetrahedron",
    "doubled-square",
];

/// Bundled target by name.
pub fn builtin(name: &str) -> Result<ConeSurface, SurfaceError> {
    match name {
        "round-sphere" => Ok(round_sphere(2)),
        "rugby-ball" => rugby_ball(1.5, 12, 1),
        "tetra-cone" => tetra_cone_sphere(1),
        "flat-disk" => Ok(flat_hexagon(3.0, 2)),
        "flat-cone" => flat_cone(1.5, 12, 2.0, 0),
        "umbrella-6" => umbrella(6),
        "umbrella-7" => umbrella(7),
        "tetrahedron" => regular_tetrahedron(),
        "doubled-square" => doubled_square(),
        _ => Err(SurfaceError::Parse(format!(
            "unknown builtin target {name:?}; known: {}",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}
