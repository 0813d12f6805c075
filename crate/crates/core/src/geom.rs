//! Shared geometric primitives: rays, bounding boxes, triangles.

use glam::Vec3;

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        Self { origin, dir }
    }

    pub fn at(&self, t: f32) -> Vec3 {
        self.origin + self.dir * t
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Default for Aabb {
    fn default() -> Self {
        Self::empty()
    }
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vec3::splat(f32::INFINITY),
            max: Vec3::splat(f32::NEG_INFINITY),
        }
    }

    pub fn grow_point(&mut self, p: Vec3) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    pub fn grow_box(&mut self, other: &Aabb) {
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    pub fn centroid(&self) -> Vec3 {
        0.5 * (self.min + self.max)
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn surface_area(&self) -> f32 {
        let e = (self.max - self.min).max(Vec3::ZERO);
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }

    /// Slab test against a ray with precomputed inverse direction.
    /// Returns true if the ray hits the box within (t_min, t_max).
    pub fn hit(&self, origin: Vec3, inv_dir: Vec3, t_min: f32, t_max: f32) -> bool {
        let t0 = (self.min - origin) * inv_dir;
        let t1 = (self.max - origin) * inv_dir;
        let lo = t0.min(t1);
        let hi = t0.max(t1);
        let enter = lo.max_element().max(t_min);
        let exit = hi.min_element().min(t_max);
        enter <= exit
    }
}

/// One world-space triangle with per-vertex shading attributes.
#[derive(Debug, Clone)]
pub struct Triangle {
    pub positions: [Vec3; 3],
    pub normals: [Vec3; 3],
    pub uvs: [[f32; 2]; 3],
    /// Index into the resolved material table.
    pub material: u32,
    /// Index of the owning scene object.
    pub object: u32,
}

impl Triangle {
    pub fn aabb(&self) -> Aabb {
        let mut b = Aabb::empty();
        for p in self.positions {
            b.grow_point(p);
        }
        b
    }

    pub fn geometric_normal(&self) -> Vec3 {
        let e1 = self.positions[1] - self.positions[0];
        let e2 = self.positions[2] - self.positions[0];
        e1.cross(e2).normalize_or_zero()
    }

    /// Möller–Trumbore intersection. Returns (t, u, v) for hits with
    /// t in (t_min, t_max), where (u, v) are barycentric weights of
    /// vertices 1 and 2.
    pub fn intersect(&self, ray: &Ray, t_min: f32, t_max: f32) -> Option<(f32, f32, f32)> {
        let e1 = self.positions[1] - self.positions[0];
        let e2 = self.positions[2] - self.positions[0];
        let pvec = ray.dir.cross(e2);
        let det = e1.dot(pvec);
        if det.abs() < 1e-12 {
            return None;
        }
        let inv_det = 1.0 / det;
        let tvec = ray.origin - self.positions[0];
        let u = tvec.dot(pvec) * inv_det;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let qvec = tvec.cross(e1);
        let v = ray.dir.dot(qvec) * inv_det;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = e2.dot(qvec) * inv_det;
        if t <= t_min || t >= t_max {
            return None;
        }
        Some((t, u, v))
    }

    /// Interpolated shading normal at barycentric (u, v), renormalized.
    pub fn shading_normal(&self, u: f32, v: f32) -> Vec3 {
        let n = self.normals[0] * (1.0 - u - v) + self.normals[1] * u + self.normals[2] * v;
        n.normalize_or_zero()
    }

    pub fn uv(&self, u: f32, v: f32) -> [f32; 2] {
        let w = 1.0 - u - v;
        [
            self.uvs[0][0] * w + self.uvs[1][0] * u + self.uvs[2][0] * v,
            self.uvs[0][1] * w + self.uvs[1][1] * u + self.uvs[2][1] * v,
        ]
    }

    pub fn area(&self) -> f32 {
        let e1 = self.positions[1] - self.positions[0];
        let e2 = self.positions[2] - self.positions[0];
        0.5 * e1.cross(e2).length()
    }
}

/// Orthonormal basis around a unit vector `n` (Duff et al. branchless form).
pub fn orthonormal_basis(n: Vec3) -> (Vec3, Vec3) {
    let sign = 1.0f32.copysign(n.z);
    let a = -1.0 / (sign + n.z);
    let b = n.x * n.y * a;
    let t = Vec3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x);
    let s = Vec3::new(b, sign + n.y * n.y * a, -n.y);
    (t, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri(p0: Vec3, p1: Vec3, p2: Vec3) -> Triangle {
        let n = (p1 - p0).cross(p2 - p0).normalize();
        Triangle {
            positions: [p0, p1, p2],
            normals: [n; 3],
            uvs: [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            material: 0,
            object: 0,
        }
    }

    #[test]
    fn ray_hits_triangle() {
        let t = tri(
            Vec3::new(-1.0, -1.0, 0.0),
            Vec3::new(1.0, -1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        );
        let ray = Ray::new(Vec3::new(0.0, 0.0, -2.0), Vec3::Z);
        let (dist, _, _) = t.intersect(&ray, 1e-4, f32::INFINITY).unwrap();
        assert!((dist - 2.0).abs() < 1e-6);
        let miss = Ray::new(Vec3::new(5.0, 5.0, -2.0), Vec3::Z);
        assert!(t.intersect(&miss, 1e-4, f32::INFINITY).is_none());
    }

    #[test]
    fn aabb_slab() {
        let mut b = Aabb::empty();
        b.grow_point(Vec3::ZERO);
        b.grow_point(Vec3::ONE);
        let ray = Ray::new(Vec3::new(0.5, 0.5, -1.0), Vec3::Z);
        let inv = ray.dir.recip();
        assert!(b.hit(ray.origin, inv, 0.0, f32::INFINITY));
        assert!(!b.hit(ray.origin, inv, 0.0, 0.5));
    }

    #[test]
    fn basis_is_orthonormal() {
        for n in [Vec3::Z, Vec3::NEG_Z, Vec3::new(0.3, -0.9, 0.1).normalize()] {
            let (t, s) = orthonormal_basis(n);
            assert!(t.dot(s).abs() < 1e-5);
            assert!(t.dot(n).abs() < 1e-5);
            assert!((t.length() - 1.0).abs() < 1e-5);
            assert!((s.length() - 1.0).abs() < 1e-5);
        }
    }
}
