//! Model-space primitives shared by the target and domain code.
//!
//! Flat faces live in the plane `z = 0` of R³; spherical faces live on the
//! unit sphere. A point of either model is a `Vector3<f64>`.

use nalgebra::{Matrix3, Vector3};

pub type V3 = Vector3<f64>;

/// Curvature of the faces of a surface: flat or unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Model {
    Flat,
    Sphere,
}

impl Model {
    pub fn from_kappa(kappa: f64) -> Option<Self> {
        if kappa == 0.0 {
            Some(Model::Flat)
        } else if kappa == 1.0 {
            Some(Model::Sphere)
        } else {
            None
        }
    }

    pub fn kappa(self) -> f64 {
        match self {
            Model::Flat => 0.0,
            Model::Sphere => 1.0,
        }
    }

    pub fn dist(self, a: &V3, b: &V3) -> f64 {
        match self {
            Model::Flat => (a - b).norm(),
            Model::Sphere => a.cross(b).norm().atan2(a.dot(b)),
        }
    }

    /// Outward unit normal at `s`.
    pub fn normal(self, s: &V3) -> V3 {
        match self {
            Model::Flat => V3::z(),
            Model::Sphere => *s,
        }
    }

    /// Unit tangent at `s` pointing along the geodesic toward `x`.
    pub fn direction(self, s: &V3, x: &V3) -> V3 {
        match self {
            Model::Flat => {
                let d = x - s;
                let d = V3::new(d.x, d.y, 0.0);
                let n = d.norm();
                if n > 0.0 {
                    d / n
                } else {
                    V3::x()
                }
            }
            Model::Sphere => {
                let d = x - s * s.dot(x);
                let n = d.norm();
                if n > 0.0 {
                    d / n
                } else {
                    any_tangent(s)
                }
            }
        }
    }

    /// Tangent-plane coordinates of `x` seen from `s` in the frame `(e1, e2)`.
    /// The angle of the result is the direction of the geodesic from `s`.
    pub fn planar(self, s: &V3, e1: &V3, e2: &V3, x: &V3) -> (f64, f64) {
        match self {
            Model::Flat => {
                let d = x - s;
                (d.dot(e1), d.dot(e2))
            }
            Model::Sphere => (x.dot(e1), x.dot(e2)),
        }
    }

    /// Point at arclength `t` along the geodesic from `s` with unit tangent `d`.
    pub fn ray(self, s: &V3, d: &V3, t: f64) -> V3 {
        match self {
            Model::Flat => s + d * t,
            Model::Sphere => (s * t.cos() + d * t.sin()).normalize(),
        }
    }

    /// Tangent of the geodesic `ray(s, d, ·)` at arclength `t`.
    pub fn ray_tangent(self, s: &V3, d: &V3, t: f64) -> V3 {
        match self {
            Model::Flat => *d,
            Model::Sphere => (d * t.cos() - s * t.sin()).normalize(),
        }
    }

    /// Tangent frame at `s` whose first axis points toward `x`.
    pub fn frame(self, s: &V3, x: &V3) -> (V3, V3) {
        let e1 = self.direction(s, x);
        let e2 = self.normal(s).cross(&e1);
        (e1, e2)
    }

    /// Canonical layout of a face with side lengths `l01, l12, l20`:
    /// vertex 0 at the origin (north pole), vertex 1 along +x, counterclockwise.
    pub fn layout(self, l01: f64, l12: f64, l20: f64, angle0: f64) -> [V3; 3] {
        match self {
            Model::Flat => [
                V3::zeros(),
                V3::new(l01, 0.0, 0.0),
                V3::new(l20 * angle0.cos(), l20 * angle0.sin(), 0.0),
            ],
            Model::Sphere => {
                let p = V3::z();
                let v1 = V3::new(l01.sin(), 0.0, l01.cos());
                let v2 = p * l20.cos() + V3::new(angle0.cos(), angle0.sin(), 0.0) * l20.sin();
                let _ = l12;
                [p, v1, v2]
            }
        }
    }

    /// Point with barycentric coordinates `b` in the face `v`
    /// (projective on the sphere).
    pub fn from_bary(self, v: &[V3; 3], b: &[f64; 3]) -> V3 {
        let p = v[0] * b[0] + v[1] * b[1] + v[2] * b[2];
        match self {
            Model::Flat => p,
            Model::Sphere => p.normalize(),
        }
    }

    /// Barycentric coordinates of `x` with respect to the face `v`.
    pub fn to_bary(self, v: &[V3; 3], x: &V3) -> [f64; 3] {
        match self {
            Model::Flat => {
                let e1 = v[1] - v[0];
                let e2 = v[2] - v[0];
                let d = x - v[0];
                let det = e1.x * e2.y - e1.y * e2.x;
                let b1 = (d.x * e2.y - d.y * e2.x) / det;
                let b2 = (e1.x * d.y - e1.y * d.x) / det;
                [1.0 - b1 - b2, b1, b2]
            }
            Model::Sphere => {
                let m = Matrix3::from_columns(&[v[0], v[1], v[2]]);
                let s = m.lu().solve(x).unwrap_or_else(|| V3::new(1.0, 0.0, 0.0));
                let t = s.x + s.y + s.z;
                [s.x / t, s.y / t, s.z / t]
            }
        }
    }

    /// Signed orientation of `x` relative to the directed geodesic `a → b`:
    /// positive on the left.
    pub fn side(self, a: &V3, b: &V3, x: &V3) -> f64 {
        match self {
            Model::Flat => (b.x - a.x) * (x.y - a.y) - (b.y - a.y) * (x.x - a.x),
            Model::Sphere => a.cross(b).dot(x),
        }
    }

    /// Distance from `s` to the geodesic segment `[a, b]`.
    pub fn segment_dist(self, s: &V3, a: &V3, b: &V3) -> f64 {
        match self {
            Model::Flat => {
                let ab = b - a;
                let l2 = ab.norm_squared();
                let t = if l2 > 0.0 { ((s - a).dot(&ab) / l2).clamp(0.0, 1.0) } else { 0.0 };
                (a + ab * t - s).norm()
            }
            Model::Sphere => {
                let n = a.cross(b);
                let nn = n.norm();
                let da = self.dist(s, a);
                let db = self.dist(s, b);
                if nn < 1e-15 {
                    return da.min(db);
                }
                let n = n / nn;
                let foot = s - n * s.dot(&n);
                if foot.norm() < 1e-15 {
                    return da.min(db);
                }
                let foot = foot.normalize();
                if a.cross(&foot).dot(&n) >= 0.0 && foot.cross(b).dot(&n) >= 0.0 {
                    s.dot(&n).abs().asin().min(da).min(db)
                } else {
                    da.min(db)
                }
            }
        }
    }

    /// First arclength `t > tmin` at which the geodesic `ray(s, d, ·)` meets the
    /// geodesic line through `a, b`, with the fraction along `[a, b]`.
    pub fn ray_hit(self, s: &V3, d: &V3, a: &V3, b: &V3, tmin: f64) -> Option<(f64, f64)> {
        match self {
            Model::Flat => {
                let e = b - a;
                let den = d.x * e.y - d.y * e.x;
                if den.abs() < 1e-300 {
                    return None;
                }
                let w = a - s;
                let t = (w.x * e.y - w.y * e.x) / den;
                let u = (w.x * d.y - w.y * d.x) / den;
                if t > tmin {
                    Some((t, u))
                } else {
                    None
                }
            }
            Model::Sphere => {
                let n = a.cross(b);
                let sn = s.dot(&n);
                let dn = d.dot(&n);
                // s cos t + d sin t ⟂ n
                let mut t = (-sn).atan2(dn);
                if t < 0.0 {
                    t += std::f64::consts::PI;
                }
                if t <= tmin {
                    t += std::f64::consts::PI;
                }
                if !t.is_finite() {
                    return None;
                }
                let x = self.ray(s, d, t);
                let nh = n.normalize();
                let lab = self.dist(a, b);
                let u = a.cross(&x).dot(&nh).atan2(a.dot(&x)) / lab;
                Some((t, u))
            }
        }
    }
}

/// Some unit tangent at `s` on the sphere.
pub fn any_tangent(s: &V3) -> V3 {
    let a = if s.x.abs() < 0.9 { V3::x() } else { V3::y() };
    (a - s * s.dot(&a)).normalize()
}

/// Orientation-preserving isometry `x ↦ r x + t` of a model space.
#[derive(Debug, Clone, Copy)]
pub struct Iso {
    pub r: Matrix3<f64>,
    pub t: V3,
}

impl Iso {
    pub fn identity() -> Self {
        Self { r: Matrix3::identity(), t: V3::zeros() }
    }

    pub fn apply(&self, x: &V3) -> V3 {
        self.r * x + self.t
    }

    pub fn apply_vec(&self, v: &V3) -> V3 {
        self.r * v
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Iso) -> Iso {
        Iso { r: self.r * other.r, t: self.r * other.t + self.t }
    }

    pub fn inverse(&self) -> Iso {
        let rt = self.r.transpose();
        Iso { r: rt, t: -(rt * self.t) }
    }

    /// Isometry sending `a0 ↦ a1` with the direction toward `b0` sent to the
    /// direction toward `b1`.
    pub fn align(model: Model, a0: &V3, b0: &V3, a1: &V3, b1: &V3) -> Iso {
        match model {
            Model::Flat => {
                let d0 = b0 - a0;
                let d1 = b1 - a1;
                let ang = d1.y.atan2(d1.x) - d0.y.atan2(d0.x);
                let (s, c) = ang.sin_cos();
                let r = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
                Iso { r, t: a1 - r * a0 }
            }
            Model::Sphere => {
                let f = |a: &V3, b: &V3| {
                    let t = model.direction(a, b);
                    Matrix3::from_columns(&[*a, t, a.cross(&t)])
                };
                let m0 = f(a0, b0);
                let m1 = f(a1, b1);
                Iso { r: m1 * m0.transpose(), t: V3::zeros() }
            }
        }
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_pi(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut r = a % tau;
    if r <= -std::f64::consts::PI {
        r += tau;
    } else if r > std::f64::consts::PI {
        r -= tau;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn layout_matches_lengths() {
        for model in [Model::Flat, Model::Sphere] {
            let (a, b, c) = (0.5, 0.7, 0.6);
            let ang0 = crate::geom_kernel::model_angle(a, c, b, model.kappa()).unwrap();
            let v = model.layout(a, b, c, ang0);
            assert!((model.dist(&v[0], &v[1]) - a).abs() < 1e-14);
            assert!((model.dist(&v[1], &v[2]) - b).abs() < 1e-14);
            assert!((model.dist(&v[2], &v[0]) - c).abs() < 1e-14);
            assert!(model.side(&v[0], &v[1], &v[2]) > 0.0);
        }
    }

    #[test]
    fn bary_round_trip() {
        for model in [Model::Flat, Model::Sphere] {
            let v = model.layout(0.5, 0.7, 0.6, 1.0);
            let b = [0.2, 0.3, 0.5];
            let x = model.from_bary(&v, &b);
            let c = model.to_bary(&v, &x);
            for k in 0..3 {
                assert!((b[k] - c[k]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn align_sends_edge_to_edge() {
        for model in [Model::Flat, Model::Sphere] {
            let k = model.kappa();
            let a0 = crate::geom_kernel::model_angle(0.5, 0.6, 0.7, k).unwrap();
            let v = model.layout(0.5, 0.7, 0.6, a0);
            let b0 = crate::geom_kernel::model_angle(0.7, 0.5, 0.4, k).unwrap();
            let w = model.layout(0.7, 0.4, 0.5, b0);
            let iso = Iso::align(model, &w[0], &w[1], &v[1], &v[2]);
            assert!((iso.apply(&w[0]) - v[1]).norm() < 1e-14);
            assert!((iso.apply(&w[1]) - v[2]).norm() < 1e-14, "{model:?} {}", (iso.apply(&w[1]) - v[2]).norm());
            let back = iso.inverse().compose(&iso);
            assert!((back.apply(&w[2]) - w[2]).norm() < 1e-14);
        }
    }

    #[test]
    fn ray_hit_on_sphere() {
        let m = Model::Sphere;
        let s = V3::new(0.0, 0.0, 1.0);
        let d = V3::x();
        let a = V3::new((0.3f64).sin(), -0.5, (0.3f64).cos()).normalize();
        let b = V3::new((0.3f64).sin(), 0.5, (0.3f64).cos()).normalize();
        let (t, u) = m.ray_hit(&s, &d, &a, &b, 1e-12).unwrap();
        assert!(t > 0.0 && t < PI / 2.0);
        assert!((u - 0.5).abs() < 1e-12);
    }

    #[test]
    fn wrap() {
        assert!((wrap_pi(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_pi(-0.5) + 0.5).abs() < 1e-15);
    }
}
