use catuni::domain_mesh::{build_disk_mesh, build_sphere_mesh};
use catuni::energy_forms::closed_form::{planar, spherical};
use catuni::energy_forms::*;
use catuni::target_surface::fixtures::{flat_hexagon, round_sphere};
use catuni::target_surface::SurfacePoint;
use nalgebra::Matrix2;
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}

#[test]
fn identity_of_flat_disk() {
    let mesh = build_disk_mesh(4);
    let target = flat_hexagon(3.0, 2);
    let map = planar(&mesh, &target, |z| z).unwrap();
    let r = energy_report(&mesh, &target, &map).unwrap();
    // A piecewise linear identity has π = (1, 1, 0) on every face.
    assert!((r.energy - 2.0 * mesh.total_area()).abs() < 1e-9);
    assert!((r.area - mesh.total_area()).abs() < 1e-9);
    assert!(r.gap < 1e-8);
    assert!(close(r.energy, 2.0 * PI, 0.01));
    let sd = side_distances(&mesh, &target, &map).unwrap();
    for f in (0..mesh.n_faces()).step_by(97) {
        let p = pullback_tensor(&mesh, &sd, f);
        assert!((p.p11 - 1.0).abs() < 1e-9 && (p.p22 - 1.0).abs() < 1e-9 && p.p12.abs() < 1e-9);
        for k in 0..8 {
            let th = k as f64 * PI / 4.0;
            assert!((directional_density(&mesh, &sd, f, [th.cos(), th.sin()]) - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn constant_map_has_no_energy() {
    let mesh = build_disk_mesh(2);
    let target = flat_hexagon(3.0, 2);
    let map = PiecewiseMap::new(&mesh, vec![SurfacePoint::face(3, [0.2, 0.3, 0.5]); mesh.n_vertices()]);
    let r = energy_report(&mesh, &target, &map).unwrap();
    assert_eq!((r.energy, r.area), (0.0, 0.0));
    let (h, _) = hausdorff_area_estimate(&mesh, &target, &map, None).unwrap();
    assert_eq!((h.covered_area, h.jacobian_integral), (0.0, 0.0));
}

#[test]
fn stretch_map_tensor_and_hopf() {
    let mesh = build_disk_mesh(3);
    let target = flat_hexagon(3.0, 2);
    let map = planar(&mesh, &target, |z| Complex64::new(2.0 * z.re, z.im)).unwrap();
    let sd = side_distances(&mesh, &target, &map).unwrap();
    for f in 0..mesh.n_faces() {
        let p = pullback_tensor(&mesh, &sd, f);
        assert!((p.p11 - 4.0).abs() < 1e-9 && (p.p22 - 1.0).abs() < 1e-9 && p.p12.abs() < 1e-9, "{p:?}");
        assert!((p.hopf() - Complex64::new(3.0, 0.0)).norm() < 1e-9);
        assert!((p.jacobian() - 2.0).abs() < 1e-9);
    }
    let phi = hopf_field(&mesh, &sd);
    assert!(hopf_residual(&mesh, &phi) < 1e-9);
    let r = energy_report_from(&mesh, &target, &sd);
    assert!((r.area - 2.0 * mesh.total_area()).abs() < 1e-9);
}

#[test]
fn conjugation_is_anticonformal() {
    let mesh = build_disk_mesh(3);
    let target = flat_hexagon(3.0, 2);
    let map = planar(&mesh, &target, |z| z.conj()).unwrap();
    let sd = side_distances(&mesh, &target, &map).unwrap();
    for z in hopf_field(&mesh, &sd) {
        assert!(z.norm() < 1e-9);
    }
    let (h, cov) = hausdorff_area_estimate(&mesh, &target, &map, None).unwrap();
    assert!(close(h.covered_area, mesh.total_area(), 0.01));
    assert!(cov.signed.iter().all(|&s| s <= 0));
}

#[test]
fn squaring_map_on_disk() {
    let mesh = build_disk_mesh(5);
    let target = flat_hexagon(3.0, 2);
    let map = planar(&mesh, &target, |z| z * z).unwrap();
    let r = energy_report(&mesh, &target, &map).unwrap();
    // ∫ 8|z|² = 4π and ∫ 4|z|² = 2π over the unit disk.
    assert!(close(r.energy, 4.0 * PI, 0.02), "{}", r.energy);
    assert!(close(r.area, 2.0 * PI, 0.02), "{}", r.area);
    assert!(r.area <= r.energy / 2.0 + 1e-12);
    let sd = side_distances(&mesh, &target, &map).unwrap();
    let f = mesh.locate(&catuni::model::V3::new(0.5, 0.3, 0.0)).unwrap().0;
    let p = pullback_tensor(&mesh, &sd, f);
    let want = 4.0 * (0.25 + 0.09);
    assert!(close(p.p11, want, 0.05) && close(p.p22, want, 0.05) && p.p12.abs() < 0.05 * want, "{p:?}");
    let (h, _) = hausdorff_area_estimate(&mesh, &target, &map, None).unwrap();
    assert!(close(h.covered_area, PI, 0.02), "{}", h.covered_area);
    assert!(close(h.jacobian_integral, 2.0 * PI, 0.02));
}

#[test]
fn identity_of_round_sphere() {
    let mesh = build_sphere_mesh(4);
    let target = round_sphere(2);
    let map = spherical(&mesh, &target, |x| *x).unwrap();
    let r = energy_report(&mesh, &target, &map).unwrap();
    assert!(close(r.energy, 8.0 * PI, 0.02), "{}", r.energy);
    assert!(close(r.area, 4.0 * PI, 0.02), "{}", r.area);
    assert!(r.gap / r.energy < 0.02);
    let (h, cov) = hausdorff_area_estimate(&mesh, &target, &map, None).unwrap();
    assert!(close(h.covered_area, 4.0 * PI, 0.01), "{}", h.covered_area);
    assert_eq!(cov.skipped_faces, 0);
}

#[test]
fn residual_of_conjugate_field_is_one() {
    // φ = z̄ has ∂̄φ = 1, so every star average is close to 1.
    let mesh = build_disk_mesh(4);
    let phi: Vec<Complex64> = (0..mesh.n_faces())
        .map(|f| {
            let z = mesh.chart_coordinates(f);
            ((z[0] + z[1] + z[2]) / 3.0).conj()
        })
        .collect();
    let m = hopf_residual_max(&mesh, &phi);
    assert!((m - 1.0).abs() < 1e-9, "{m}");
    let zero = vec![Complex64::new(2.0, -1.0); mesh.n_faces()];
    assert!(hopf_residual_max(&mesh, &zero) < 1e-12);
}

#[test]
fn jacobian_of_singular_values_two_and_one() {
    assert!((jacobian([4.0, 1.0, 0.0]) - 2.0).abs() < 1e-15);
    assert!((harmonic_mean_density([4.0, 1.0, 0.0], 4096) - 2.0).abs() < 1e-12);
    assert_eq!(jacobian([1.0, 1.0, 1.0]), 0.0);
    // The quadrature of a rank-one form decays like 1/samples.
    assert!(harmonic_mean_density([1.0, 0.0, 0.0], 4096) < 1e-3);
}

proptest! {
    #[test]
    fn jacobian_is_product_of_singular_values(a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64, d in -3.0..3.0f64) {
        let m = Matrix2::new(a, b, c, d);
        let s = m.singular_values();
        prop_assume!(s[0].min(s[1]) > 1e-3);
        let q = m.transpose() * m;
        let form = [q[(0, 0)], q[(1, 1)], q[(0, 1)]];
        let scale = s[0] * s[1];
        prop_assert!((jacobian(form) - scale).abs() <= 1e-9 * scale.max(1.0));
        // Independent route: quadrature of the harmonic mean over directions.
        let n = if s[0].max(s[1]) / s[0].min(s[1]) > 50.0 { 1 << 16 } else { 4096 };
        prop_assert!((harmonic_mean_density(form, n) - scale).abs() <= 1e-9 * scale.max(1.0));
    }

    #[test]
    fn polarization_recovers_the_tensor(p11 in 0.0..5.0f64, p22 in 0.0..5.0f64, t in -1.0..1.0f64) {
        let p12 = t * (p11 * p22).sqrt();
        let p = PullbackTensor { p11, p22, p12 };
        let q = polarized_tensor(|w| p.density(w));
        prop_assert!((q.p11 - p11).abs() < 1e-12 && (q.p22 - p22).abs() < 1e-12 && (q.p12 - p12).abs() < 1e-12);
        for k in 0..8 {
            let th = k as f64 * PI / 4.0 + 0.1;
            let w = [th.cos(), th.sin()];
            prop_assert!((q.density(w) - p.density(w)).abs() <= 1e-10 * (p11 + p22).max(1e-300));
        }
        prop_assert!(p.hopf().norm() <= p11 + p22 + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn area_is_at_most_half_energy(seed in 0u64..1000, amp in 0.0..0.3f64) {
        use rand::{Rng, SeedableRng};
        let mesh = build_disk_mesh(2);
        let target = flat_hexagon(3.0, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let shifts: Vec<Complex64> = (0..mesh.n_vertices())
            .map(|_| Complex64::new(rng.gen_range(-amp..=amp), rng.gen_range(-amp..=amp)))
            .collect();
        let values = mesh
            .positions
            .iter()
            .zip(&shifts)
            .map(|(p, s)| {
                let w = Complex64::new(p.x, p.y) + s;
                target.locate_embedded(&catuni::model::V3::new(w.re, w.im, 0.0)).unwrap()
            })
            .collect();
        let map = PiecewiseMap::new(&mesh, values);
        let sd = side_distances(&mesh, &target, &map).unwrap();
        let r = energy_report_from(&mesh, &target, &sd);
        prop_assert!(r.area <= r.energy / 2.0 + 1e-12);
        for f in 0..mesh.n_faces() {
            let p = pullback_tensor(&mesh, &sd, f);
            let tr = p.p11 + p.p22;
            prop_assert!(p.p11 >= -1e-12 && p.p22 >= -1e-12);
            prop_assert!(p.p11 * p.p22 - p.p12 * p.p12 >= -1e-9 * tr * tr);
            prop_assert!(p.hopf().norm() <= tr + 1e-12);
        }
    }
}
