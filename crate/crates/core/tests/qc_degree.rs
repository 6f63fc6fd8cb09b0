use catuni::domain_mesh::{build_disk_mesh, build_sphere_mesh};
use catuni::energy_forms::closed_form::{mobius_square, planar, spherical};
use catuni::model::V3;
use catuni::qc_degree::*;
use catuni::target_surface::fixtures::{flat_hexagon, round_sphere};
use nalgebra::Rotation3;
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn origin() -> V3 {
    V3::zeros()
}

fn affine(k: f64) -> impl Fn(Complex64) -> Complex64 {
    move |z| z + k * z.conj()
}

#[test]
fn h_of_k_values() {
    assert_eq!(h_of_k(0.0).unwrap(), 1.0);
    assert!((h_of_k(1.0 / 3.0).unwrap() - 2.0).abs() < 1e-15);
    // (√3 + 1/√3)/(√3 − 1/√3) from the unreduced form.
    let s = 3f64.sqrt();
    assert!((h_of_k(1.0 / 3.0).unwrap() - (s + 1.0 / s) / (s - 1.0 / s)).abs() < 1e-14);
    assert!(h_of_k(1.0 - 1e-12).unwrap() > 1e11);
    assert!(matches!(h_of_k(1.0), Err(QcError::Stretch(_))));
    assert!(h_of_k(-0.1).is_err());
}

proptest! {
    #[test]
    fn h_of_k_is_increasing(a in 0.0f64..0.999, b in 0.0f64..0.999) {
        prop_assume!(a < b);
        let (ha, hb) = (h_of_k(a).unwrap(), h_of_k(b).unwrap());
        prop_assert!(ha >= 1.0 && ha < hb);
    }
}

#[test]
fn distortion_of_identity_and_square() {
    let mesh = build_disk_mesh(5);
    let target = flat_hexagon(3.0, 2);
    let id = planar(&mesh, &target, |z| z).unwrap();
    let h = h_estimate(&mesh, &target, &id, &V3::new(0.2, -0.1, 0.0), None).unwrap();
    assert!((h.h - 1.0).abs() < 1e-9);
    assert!(h.radii.len() >= 2);
    let sq = planar(&mesh, &target, |z| z * z).unwrap();
    let h = h_estimate(&mesh, &target, &sq, &origin(), Some(0.8)).unwrap();
    assert!((h.h - 1.0).abs() < 0.02, "{h:?}");
}

#[test]
fn distortion_of_affine_maps() {
    // max/min of |e^{iθ} + k e^{−iθ}| is (1 + k)/(1 − k).
    let mesh = build_disk_mesh(4);
    let target = flat_hexagon(3.0, 2);
    for k in [0.0, 0.2, 1.0 / 3.0, 0.5] {
        let map = planar(&mesh, &target, affine(k)).unwrap();
        let h = h_estimate(&mesh, &target, &map, &origin(), None).unwrap();
        let want = h_of_k(k).unwrap();
        assert!((h.h - want).abs() < 1e-3 * want, "k = {k}: {} vs {want}", h.h);
    }
}

#[test]
fn zero_circle_radius_is_flagged_infinite() {
    // x ↦ x collapses the imaginary direction: l = 0.
    let mesh = build_disk_mesh(4);
    let target = flat_hexagon(3.0, 2);
    let map = planar(&mesh, &target, |z| Complex64::new(z.re, 0.0)).unwrap();
    let h = h_estimate(&mesh, &target, &map, &origin(), None).unwrap();
    assert!(h.infinite);
}

#[test]
fn windings_of_power_maps() {
    let mesh = build_disk_mesh(5);
    let target = flat_hexagon(3.0, 2);
    let cases: [(Box<dyn Fn(Complex64) -> Complex64>, i64); 4] = [
        (Box::new(|z| z), 1),
        (Box::new(|z| z * z), 2),
        (Box::new(|z| z * z * z), 3),
        (Box::new(|z: Complex64| z.conj()), -1),
    ];
    for (f, w) in cases {
        let map = planar(&mesh, &target, f).unwrap();
        let got = winding_number(&mesh, &target, &map, &origin(), 0.3).unwrap();
        assert_eq!(got.w, w);
        assert!(got.defect < 1e-9);
    }
}

#[test]
fn winding_of_constant_map_is_undefined() {
    let mesh = build_disk_mesh(4);
    let target = flat_hexagon(3.0, 2);
    let map = planar(&mesh, &target, |_| Complex64::new(0.5, 0.0)).unwrap();
    assert!(winding_number(&mesh, &target, &map, &origin(), 0.3).is_err());
    assert!(matches!(branch_and_degree(&mesh, &target, &map, &[], 1), Err(QcError::Winding(_))));
}

#[test]
fn sphere_identity_is_a_homeomorphism() {
    let mesh = build_sphere_mesh(4);
    let target = round_sphere(3);
    let map = spherical(&mesh, &target, |x| *x).unwrap();
    let r = branch_and_degree(&mesh, &target, &map, &[V3::new(0.0, 0.6, -0.8)], 7).unwrap();
    assert!(r.branch.is_empty());
    assert_eq!(r.degree, Some(1));
    assert!(r.sign_consistent);
    assert!(r.homeomorphism());
    assert_eq!(r.probes[0].winding.unwrap().w, 1);
}

#[test]
fn mobius_square_is_a_double_cover() {
    let mesh = build_sphere_mesh(5);
    let target = round_sphere(3);
    let alpha = Complex64::new(0.3, 0.2);
    let map = spherical(&mesh, &target, mobius_square(alpha)).unwrap();
    let r = branch_and_degree(&mesh, &target, &map, &[], 3).unwrap();
    assert_eq!(r.branch.len(), 2, "{:?}", r.branch);
    for b in &r.branch {
        assert_eq!(b.circle_winding, Some(2));
    }
    assert_eq!(r.degree, Some(2));
    assert!(r.sign_consistent);
    assert!(!r.homeomorphism());
    // Branch points sit near α and 1/ᾱ.
    let expect = [alpha, 1.0 / alpha.conj()].map(|z| catuni::energy_forms::closed_form::inverse_stereographic(Some(z)));
    for e in expect {
        let near = r.branch.iter().map(|b| (V3::from(b.position) - e).norm()).fold(f64::INFINITY, f64::min);
        assert!(near < 2.0 * mesh.max_edge_length(), "{near}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]
    #[test]
    fn fiber_counts_agree_and_signs_are_constant(re in -0.5f64..0.5, im in -0.5f64..0.5, seed in 0u64..1000) {
        let mesh = build_sphere_mesh(5);
        let target = round_sphere(3);
        let map = spherical(&mesh, &target, mobius_square(Complex64::new(re, im))).unwrap();
        let r = branch_and_degree(&mesh, &target, &map, &[], seed).unwrap();
        prop_assert!(r.fiber_counts.iter().all(|&c| c == 2), "{:?}", r.fiber_counts);
        prop_assert!(r.sign_consistent);
        prop_assert!(r.branch.iter().all(|b| b.circle_winding == Some(2)));
    }
}

#[test]
fn sphere_identity_attains_equality() {
    let mesh = build_sphere_mesh(5);
    let target = round_sphere(3);
    let map = spherical(&mesh, &target, |x| *x).unwrap();
    let v = energy_area_verdict(&mesh, &target, &map, 0.02, 5).unwrap();
    assert!((v.hausdorff - 4.0 * PI).abs() < 0.02 * 4.0 * PI, "{v:?}");
    assert!(v.jacobian_bound && v.hausdorff_bound);
    assert!(v.monotone);
    assert_eq!(v.class, AreaClass::ConformalMonotoneEquality);
}

#[test]
fn square_has_strict_inequality() {
    let mesh = build_disk_mesh(5);
    let target = flat_hexagon(3.0, 2);
    let map = planar(&mesh, &target, |z| z * z).unwrap();
    let v = energy_area_verdict(&mesh, &target, &map, 0.02, 5).unwrap();
    assert!((v.hausdorff - PI).abs() < 0.02 * PI, "{v:?}");
    assert!((v.half_energy - 2.0 * PI).abs() < 0.02 * 2.0 * PI);
    assert_eq!(v.class, AreaClass::Strict);
    assert!(!v.monotone);
}

#[test]
fn affine_map_has_cauchy_schwarz_gap() {
    // Singular values (2, 1): A = 2π, E/2 = 2.5π.
    let mesh = build_disk_mesh(4);
    let target = flat_hexagon(3.0, 2);
    let map = planar(&mesh, &target, |z| Complex64::new(2.0 * z.re, z.im)).unwrap();
    let v = energy_area_verdict(&mesh, &target, &map, 0.02, 5).unwrap();
    let area = mesh.total_area();
    assert!((v.area - 2.0 * area).abs() < 1e-9);
    assert!((v.half_energy - 2.5 * area).abs() < 1e-9);
    assert_eq!(v.class, AreaClass::Strict);
    assert!(v.monotone);
}

#[test]
fn faces_connect_through_edges() {
    let mesh = build_disk_mesh(2);
    let adj = face_adjacency(&mesh);
    let f = 0;
    let g = adj[f][0];
    assert!(edge_connected(&[f, g], &adj));
    let far = (0..mesh.n_faces()).find(|&h| h != f && !adj[f].contains(&h) && !adj[g].contains(&h)).unwrap();
    assert!(!edge_connected(&[f, far], &adj));
    assert!(edge_connected(&[], &adj));
}

#[test]
fn mobius_through_three_points() {
    let from = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0)];
    let to = [Complex64::new(0.5, 0.5), Complex64::new(-1.0, 0.3), Complex64::new(0.2, -0.7)];
    let m = Mobius::through(from, to);
    use catuni::energy_forms::closed_form::{inverse_stereographic, stereographic};
    for (z, w) in from.iter().zip(&to) {
        let got = stereographic(&m.apply(&inverse_stereographic(Some(*z))));
        assert!((got - w).norm() < 1e-12);
    }
}

#[test]
fn mobius_check_of_identical_maps() {
    let mesh = build_sphere_mesh(4);
    let target = round_sphere(3);
    let u = spherical(&mesh, &target, |x| *x).unwrap();
    let fit = mobius_check(&mesh, &u, &mesh, &u, &target, 1e-3, 11).unwrap();
    assert!(fit.pass);
    assert!(fit.rms < 1e-9, "{fit:?}");
    let p = V3::new(0.3, -0.5, 0.2).normalize();
    assert!((fit.mobius.apply(&p) - p).norm() < 1e-8);
}

#[test]
fn mobius_check_recovers_a_rotation() {
    let mesh = build_sphere_mesh(4);
    let target = round_sphere(3);
    let rot = Rotation3::from_euler_angles(0.4, -0.3, 1.1);
    let u = spherical(&mesh, &target, |x| *x).unwrap();
    let v = spherical(&mesh, &target, |x| rot * x).unwrap();
    let fit = mobius_check(&mesh, &u, &mesh, &v, &target, 1e-3, 11).unwrap();
    assert!(fit.pass, "{fit:?}");
    // v⁻¹∘u = R⁻¹.
    for p in [V3::x(), V3::y(), V3::new(0.2, 0.3, -0.9).normalize()] {
        assert!((fit.mobius.apply(&p) - rot.inverse() * p).norm() < 1e-3);
    }
}

#[test]
fn mobius_check_needs_sphere_domains() {
    let mesh = build_disk_mesh(3);
    let target = flat_hexagon(3.0, 2);
    let u = planar(&mesh, &target, |z| z).unwrap();
    assert!(matches!(mobius_check(&mesh, &u, &mesh, &u, &target, 1e-3, 1), Err(QcError::Incompatible(_))));
}

#[test]
fn qc_rows_predict_distortion() {
    let mesh = build_disk_mesh(5);
    let target = flat_hexagon(3.0, 2);
    let map = planar(&mesh, &target, affine(1.0 / 3.0)).unwrap();
    let rep = qc_report(&mesh, &target, &map, &[origin()]);
    let row = &rep.rows[0];
    assert!((row.predicted.unwrap() - 2.0).abs() < 0.01, "{row:?}");
    assert!((row.estimate.as_ref().unwrap().h - 2.0).abs() < 0.01);
    assert!((rep.sup_k - 1.0 / 3.0).abs() < 1e-3);
}
