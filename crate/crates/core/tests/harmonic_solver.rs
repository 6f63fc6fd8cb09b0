use catuni::domain_mesh::{build_disk_mesh, build_sphere_mesh};
use catuni::energy_forms::closed_form::cone_power;
use catuni::energy_forms::{energy_report, PiecewiseMap};
use catuni::geom_kernel::{cone_distance, ConeChart, ConePoint};
use catuni::harmonic_solver::*;
use catuni::model::V3;
use catuni::target_surface::fixtures::{flat_cone, flat_hexagon, round_sphere, tetra_cone_sphere};
use catuni::target_surface::{ConeSurface, GeodesicError, SurfacePoint, TangentConeChart};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn planar_trace(target: &ConeSurface, level: usize, f: impl Fn(Complex64) -> Complex64) -> DirichletProblem {
    DirichletProblem::from_fn(level, |x| {
        let w = f(Complex64::new(x.x, x.y));
        target
            .locate_embedded(&V3::new(w.re, w.im, 0.0))
            .ok_or_else(|| GeodesicError::Domain("trace leaves the target".into()))
    })
    .unwrap()
}

/// Largest distance between the solution and `f` at the vertices.
fn planar_error(target: &ConeSurface, l: &LevelSolution, f: impl Fn(Complex64) -> Complex64) -> f64 {
    l.mesh
        .positions
        .iter()
        .zip(&l.map.values)
        .map(|(x, u)| {
            let w = f(Complex64::new(x.x, x.y));
            (target.embedded_position(u).unwrap() - V3::new(w.re, w.im, 0.0)).norm()
        })
        .fold(0.0, f64::max)
}

fn point_on(target: &ConeSurface, x: f64, y: f64) -> SurfacePoint {
    target.locate_embedded(&V3::new(x, y, 0.0)).unwrap()
}

#[test]
fn step_to_coincident_neighbours() {
    let t = flat_hexagon(3.0, 2);
    let p = point_on(&t, 0.3, -0.2);
    let nbrs = vec![(p, 1.0), (p, 2.5), (p, 0.5)];
    let s = frechet_step(&t, &point_on(&t, -0.4, 0.5), &nbrs, 1.0).unwrap();
    assert!(t.dist(&s.point, &p).unwrap() < 1e-12);
    assert!(s.after <= s.before && s.after < 1e-20);
}

#[test]
fn step_to_midpoint() {
    let t = flat_hexagon(3.0, 2);
    let nbrs = vec![(point_on(&t, 1.0, 0.2), 1.0), (point_on(&t, -0.6, 1.0), 1.0)];
    let s = frechet_step(&t, &point_on(&t, 0.1, -0.9), &nbrs, 1.0).unwrap();
    let x = t.embedded_position(&s.point).unwrap();
    assert!((x - V3::new(0.2, 0.6, 0.0)).norm() < 1e-12, "{x:?}");
}

#[test]
fn symmetric_neighbours_on_a_cone_pull_to_the_apex() {
    let beta = 1.5;
    let t = flat_cone(beta, 12, 2.0, 1).unwrap();
    let chart = TangentConeChart::new(&t, &SurfacePoint::vertex(0));
    let model = ConeChart::new(beta).unwrap();
    let spots: Vec<ConePoint<f64>> = (0..3).map(|k| ConePoint::new(0.5, k as f64 * PI)).collect();
    // Oracle: on the model cone the objective grows along every ray.
    let objective = |x: ConePoint<f64>| spots.iter().map(|&s| cone_distance(x, s, model).unwrap().powi(2)).sum::<f64>();
    let at_apex = objective(ConePoint::new(0.0, 0.0));
    for i in 1..=40 {
        let rho = 0.02 * i as f64;
        let best = (0..600).map(|j| objective(ConePoint::new(rho, j as f64 * 3.0 * PI / 600.0))).fold(f64::INFINITY, f64::min);
        assert!(best > at_apex);
    }
    let nbrs: Vec<(SurfacePoint, f64)> = spots.iter().map(|&s| (chart.exp(&t, s).unwrap(), 1.0)).collect();
    let mut x = chart.exp(&t, ConePoint::new(0.2, 0.4)).unwrap();
    for _ in 0..200 {
        let s = frechet_step(&t, &x, &nbrs, 1.0).unwrap();
        assert!(s.after <= s.before);
        x = s.point;
    }
    assert!(t.dist(&x, &SurfacePoint::vertex(0)).unwrap() < 1e-6);
}

#[test]
fn identity_trace_gives_identity() {
    let t = flat_hexagon(3.0, 2);
    let problem = planar_trace(&t, 4, |z| z);
    let sol = solve_dirichlet(&problem, &t, &SolverConfig::default()).unwrap();
    assert!(sol.converged());
    assert!(planar_error(&t, sol.finest(), |z| z) < 1e-6);
}

#[test]
fn squaring_trace_converges_quadratically() {
    let t = flat_hexagon(3.0, 2);
    let problem = planar_trace(&t, 5, |z| z * z);
    let sol = solve_dirichlet(&problem, &t, &SolverConfig::default()).unwrap();
    assert!(sol.converged());
    let errs: Vec<f64> = sol.levels[3..].iter().map(|l| planar_error(&t, l, |z| z * z)).collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 3.0, "{errs:?}");
    }
    assert!(errs[2] < 2e-4, "{errs:?}");
}

#[test]
fn cone_model_trace_converges_linearly() {
    let t = flat_cone(1.5, 12, 2.0, 2).unwrap();
    let apex = SurfacePoint::vertex(0);
    let mut errs = Vec::new();
    for level in [3, 4, 5] {
        let mesh = build_disk_mesh(level);
        let exact = cone_power(&mesh, &t, &apex, 1.0).unwrap();
        let trace = mesh.boundary.iter().map(|&v| exact.values[v]).collect();
        let problem = DirichletProblem::new(mesh.clone(), trace, None).unwrap();
        let sol = solve_dirichlet(&problem, &t, &SolverConfig::default()).unwrap();
        let l = sol.finest();
        let e = (0..mesh.n_vertices()).map(|v| t.dist(&l.map.values[v], &exact.values[v]).unwrap()).fold(0.0, f64::max);
        errs.push(e * (1 << level) as f64);
    }
    // Error times 2^level stays bounded: O(h) convergence.
    assert!(errs[2] <= 1.2 * errs[0], "{errs:?}");
}

#[test]
fn energy_never_increases_within_a_level() {
    let t = flat_hexagon(3.0, 2);
    let problem = planar_trace(&t, 4, |z| z * z * z * 0.8);
    let sol = solve_dirichlet(&problem, &t, &SolverConfig::default()).unwrap();
    for w in sol.progress.windows(2) {
        if w[0].level == w[1].level {
            assert!(w[1].energy <= w[0].energy, "{:?}", w);
        }
    }
    for l in &sol.levels {
        assert!(l.report.report.energy <= l.report.initial_energy);
    }
}

#[test]
fn sweep_order_does_not_matter() {
    let t = flat_hexagon(3.0, 2);
    let problem = planar_trace(&t, 4, |z| z * z + 0.3 * z);
    let a = solve_dirichlet(&problem, &t, &SolverConfig::default()).unwrap();
    let cfg = SolverConfig { relaxation: Relaxation::Colored, ..SolverConfig::default() };
    let b = solve_dirichlet(&problem, &t, &cfg).unwrap();
    let tol = 10.0 * cfg.displacement_tol * t.diameter();
    let (fa, fb) = (a.finest(), b.finest());
    for v in 0..fa.mesh.n_vertices() {
        let d = t.dist(&fa.map.values[v], &fb.map.values[v]);
        assert!(matches!(d, Ok(d) if d <= tol.max(1e-7)), "{v} {d:?} {:?} {:?}", fa.map.values[v], fb.map.values[v]);
    }
}

#[test]
fn close_traces_give_close_solutions() {
    let t = flat_hexagon(3.0, 2);
    let eps = 0.01;
    let shift = Complex64::new(0.6, 0.8) * eps;
    let a = solve_dirichlet(&planar_trace(&t, 4, |z| z * z), &t, &SolverConfig::default()).unwrap();
    let b = solve_dirichlet(&planar_trace(&t, 4, |z| z * z + shift * z.re), &t, &SolverConfig::default()).unwrap();
    let (fa, fb) = (a.finest(), b.finest());
    for v in 0..fa.mesh.n_vertices() {
        assert!(t.dist(&fa.map.values[v], &fb.map.values[v]).unwrap() <= eps + 1e-7);
    }
}

#[test]
fn interior_lipschitz_stays_bounded() {
    let t = flat_hexagon(3.0, 2);
    let sol = solve_dirichlet(&planar_trace(&t, 5, |z| z * z), &t, &SolverConfig::default()).unwrap();
    let ls: Vec<f64> = sol.levels[2..].iter().map(|l| interior_lipschitz(&l.mesh, &t, &l.map).unwrap()).collect();
    // |d(z²)| = 2|z| ≤ 1 on the half disk.
    for l in &ls {
        assert!(*l < 1.1, "{ls:?}");
    }
}

#[test]
fn trace_beyond_convexity_radius_is_rejected() {
    let t = round_sphere(2);
    let mesh = build_disk_mesh(1);
    let n = mesh.boundary.len();
    // Consecutive boundary images are a third of the equator apart.
    let trace = (0..n)
        .map(|k| {
            let a = 2.0 * PI / 3.0 * k as f64;
            t.locate_embedded(&V3::new(a.cos(), a.sin(), 0.0)).unwrap()
        })
        .collect();
    let problem = DirichletProblem::new(mesh, trace, None).unwrap();
    assert!(matches!(solve_dirichlet(&problem, &t, &SolverConfig::default()), Err(SolverError::Trace(_))));
}

#[test]
fn constant_sphere_map_is_degenerate() {
    let t = round_sphere(2);
    let mesh = build_sphere_mesh(2);
    let p = t.locate_embedded(&V3::z()).unwrap();
    let map = PiecewiseMap::new(&mesh, vec![p; mesh.n_vertices()]);
    let r = solve_closed(&mesh, &t, &map, &Pins::standard(), &SolverConfig::default(), &mut Vec::new());
    assert!(matches!(r, Err(SolverError::Degenerate(_))));
}

#[test]
fn initial_map_onto_tetrahedral_cone_sphere() {
    let t = tetra_cone_sphere(1).unwrap();
    let mesh = build_sphere_mesh(4);
    let (map, lip) = initial_map(&mesh, &t, |x| t.locate_embedded(x)).unwrap();
    let r = energy_report(&mesh, &t, &map).unwrap();
    assert!(r.energy.is_finite() && r.energy > 0.0);
    assert_eq!(r.locality_violations, 0);
    assert!(lip.iter().all(|l| l.is_finite()));
    assert!(r.area <= r.energy / 2.0 + 1e-12);
}

#[test]
fn collinear_image_is_rejected() {
    let t = round_sphere(2);
    let mesh = build_sphere_mesh(2);
    // Everything lands on the equator.
    let r = initial_map(&mesh, &t, |x| t.locate_embedded(&V3::new(x.x, x.y, 0.0).normalize()));
    assert!(matches!(r, Err(SolverError::Construction(_))));
}

#[test]
fn cone_points_are_anchored() {
    let t = tetra_cone_sphere(1).unwrap();
    let mesh = build_sphere_mesh(3);
    let (mut map, _) = initial_map(&mesh, &t, |x| t.locate_embedded(x)).unwrap();
    let anchored = anchor_cones(&mesh, &t, &mut map).unwrap();
    assert_eq!(anchored.len(), 4);
    for (c, &v) in anchored.iter().enumerate() {
        assert_eq!(t.normalize(&map.values[v]), SurfacePoint::vertex(c));
    }
}

#[test]
fn config_rejects_unknown_and_invalid_fields() {
    assert!(serde_json::from_str::<SolverConfig>(r#"{"max_sweep": 3}"#).is_err());
    let cfg: SolverConfig = serde_json::from_str(r#"{"max_omega": 2.5}"#).unwrap();
    assert!(cfg.validate().is_err());
    let cfg: SolverConfig = serde_json::from_str(r#"{"energy_tol": 1e-8}"#).unwrap();
    assert!(cfg.validate().is_ok() && cfg.max_sweeps == SolverConfig::default().max_sweeps);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn frechet_step_never_increases_the_objective(seed in 0u64..10_000, omega in 1.0..1.9f64, sphere in any::<bool>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let t = if sphere { round_sphere(1) } else { flat_hexagon(3.0, 2) };
        let centre = if sphere { V3::new(0.3, -0.2, 0.9).normalize() } else { V3::new(0.2, 0.1, 0.0) };
        let jitter = |rng: &mut rand_chacha::ChaCha8Rng| {
            let d = V3::new(rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4), if sphere { rng.gen_range(-0.4..0.4) } else { 0.0 });
            let x = centre + d;
            t.locate_embedded(&if sphere { x.normalize() } else { x }).unwrap()
        };
        let nbrs: Vec<(SurfacePoint, f64)> = (0..rng.gen_range(2..8)).map(|_| (jitter(&mut rng), rng.gen_range(0.1..2.0))).collect();
        let x = jitter(&mut rng);
        let s = frechet_step(&t, &x, &nbrs, omega).unwrap();
        prop_assert!(s.after <= s.before);
        let (f0, _) = local_objective(&t, &x, &nbrs).unwrap();
        prop_assert!((f0 - s.before).abs() <= 1e-12 * f0.max(1.0));
    }
}
