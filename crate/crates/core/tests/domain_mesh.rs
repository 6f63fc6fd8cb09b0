use catuni::domain_mesh::{build_disk_mesh, build_sphere_mesh, Chart, DomainKind};
use catuni::model::V3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn sphere_counts_follow_the_glued_construction() {
    for n in 0..=5usize {
        let m = 1usize << n;
        let s = build_sphere_mesh(n);
        assert_eq!(s.n_vertices(), (m + 1) * (m + 2) - 3 * m, "level {n}");
        assert_eq!(s.n_faces(), 2 * 4usize.pow(n as u32));
        assert_eq!(s.euler_characteristic(), 2);
        assert!(s.boundary.is_empty());
    }
    let s0 = build_sphere_mesh(0);
    assert_eq!((s0.n_vertices(), s0.n_edges(), s0.n_faces()), (3, 3, 2));
    let s1 = build_sphere_mesh(1);
    assert_eq!((s1.n_vertices(), s1.n_edges(), s1.n_faces()), (6, 12, 8));
}

#[test]
fn sphere_edge_lengths_scale_like_two_to_minus_n() {
    let mut prev = f64::INFINITY;
    // Level 1 has all vertices on the equator; the ratio is bounded from level 2 on.
    for n in 2..=6 {
        let h = build_sphere_mesh(n).max_edge_length();
        assert!(h < prev);
        let ratio = h * (1u64 << n) as f64;
        assert!(ratio > 0.5 && ratio < 10.0, "level {n}: {ratio}");
        prev = h;
    }
}

#[test]
fn sphere_faces_are_outward() {
    let s = build_sphere_mesh(4);
    for (f, t) in s.faces.iter().enumerate() {
        if s.degenerate[f] {
            continue;
        }
        let p = t.map(|i| s.positions[i]);
        let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
        assert!(n.dot(&(p[0] + p[1] + p[2])) > 0.0, "face {f}");
        let z = s.chart_coordinates(f);
        let a = ((z[1] - z[0]).conj() * (z[2] - z[0])).im;
        assert!(a > 0.0);
    }
    assert_eq!(s.degenerate.iter().filter(|&&d| d).count(), 6);
    assert!((s.face_area.iter().sum::<f64>() / (4.0 * std::f64::consts::PI) - 1.0).abs() < 0.05);
}

#[test]
fn disk_mesh_counts_and_delaunay() {
    for n in 0..=5usize {
        let d = build_disk_mesh(n);
        let m = 1usize << n;
        assert_eq!(d.boundary.len(), 6 * m);
        assert_eq!(d.n_vertices(), 3 * m * m + 3 * m + 1);
        assert_eq!(d.n_faces(), 6 * 4usize.pow(n as u32));
        assert_eq!(d.euler_characteristic(), 1);
        for n in &d.neighbors {
            for &(_, w) in n {
                assert!(w > 0.0);
            }
        }
        for &b in &d.boundary {
            assert!((d.positions[b].norm() - 1.0).abs() < 1e-14);
        }
    }
}

#[test]
fn cot_weights_reproduce_linear_energy() {
    let d = build_disk_mesh(3);
    let (a, b) = (0.7, -1.3);
    let f = |p: &V3| a * p.x + b * p.y;
    let mut e = 0.0;
    for (i, n) in d.neighbors.iter().enumerate() {
        for &(j, w) in n {
            if j > i {
                e += w * (f(&d.positions[i]) - f(&d.positions[j])).powi(2);
            }
        }
    }
    let exact = (a * a + b * b) * d.total_area();
    assert!((e - exact).abs() < 1e-12 * exact);
}

#[test]
fn chart_transition_is_inversion() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let p = V3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
        let zs = Chart::South.coord(&p);
        let zn = Chart::North.coord(&p);
        assert!((zn - Complex64::new(1.0, 0.0) / zs).norm() < 1e-12 * (1.0 + zn.norm()));
        assert!((Chart::South.point(zs) - p).norm() < 1e-12);
        assert!((Chart::North.point(zn) - p).norm() < 1e-12);
    }
}

#[test]
fn locate_inverts_face_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for mesh in [build_sphere_mesh(3), build_disk_mesh(3)] {
        for _ in 0..500 {
            let f = rng.gen_range(0..mesh.n_faces());
            if mesh.degenerate[f] {
                continue;
            }
            let mut b = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            let s: f64 = b.iter().sum();
            b.iter_mut().for_each(|x| *x /= s);
            let x = mesh.face_point(f, &b);
            let (g, c) = mesh.locate(&x).expect("located");
            let y = mesh.face_point(g, &c);
            assert!((x - y).norm() < 1e-12, "{:?}", mesh.kind);
            if g == f {
                for k in 0..3 {
                    assert!((b[k] - c[k]).abs() < 1e-10);
                }
            }
        }
        if mesh.kind == DomainKind::Sphere {
            assert!(mesh.locate(&V3::new(0.0, 0.0, -1.0)).is_some());
        }
    }
}
