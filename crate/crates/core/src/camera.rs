//! Pinhole camera shared by the ray tracer and the rasterizer.
//!
//! The two renderers must agree on geometry to sub-pixel precision, so both
//! derive their mapping from this one struct: `primary_ray` and `project`
//! are exact inverses of each other.

use glam::Vec3;

use crate::geom::Ray;
use crate::scene::CameraPose;

#[derive(Debug, Clone, Copy)]
pub struct Camera {
    pub position: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    tan_half_fov: f32,
}

impl Camera {
    pub fn new(pose: &CameraPose) -> Self {
        let forward = (pose.look_at - pose.position).normalize();
        let mut right = forward.cross(pose.up);
        if right.length_squared() < 1e-10 {
            // Looking straight along `up`; pick any horizontal right vector.
            right = forward.cross(Vec3::X);
            if right.length_squared() < 1e-10 {
                right = forward.cross(Vec3::Z);
            }
        }
        let right = right.normalize();
        let up = right.cross(forward);
        Self {
            position: pose.position,
            forward,
            right,
            up,
            tan_half_fov: (pose.fov_degrees.to_radians() * 0.5).tan(),
        }
    }

    /// Ray through continuous image coordinates (sx, sy) in [0,w]x[0,h],
    /// y growing downward. Pixel centers are at half-integer coordinates.
    pub fn primary_ray(&self, sx: f32, sy: f32, width: usize, height: usize) -> Ray {
        let aspect = width as f32 / height as f32;
        let ndc_x = (2.0 * sx / width as f32 - 1.0) * self.tan_half_fov * aspect;
        let ndc_y = (1.0 - 2.0 * sy / height as f32) * self.tan_half_fov;
        let dir = (self.forward + self.right * ndc_x + self.up * ndc_y).normalize();
        Ray::new(self.position, dir)
    }

    /// View-space coordinates of a world point: (x right, y up, z forward).
    pub fn view_coords(&self, p: Vec3) -> Vec3 {
        let d = p - self.position;
        Vec3::new(d.dot(self.right), d.dot(self.up), d.dot(self.forward))
    }

    /// Depth along the view axis (positive in front of the camera).
    pub fn view_depth(&self, p: Vec3) -> f32 {
        (p - self.position).dot(self.forward)
    }

    /// Project a view-space point to continuous image coordinates. View z
    /// must be positive.
    pub fn view_to_screen(&self, v: Vec3, width: usize, height: usize) -> [f32; 2] {
        let aspect = width as f32 / height as f32;
        let x = v.x / (v.z * self.tan_half_fov * aspect);
        let y = v.y / (v.z * self.tan_half_fov);
        [(x + 1.0) * 0.5 * width as f32, (1.0 - y) * 0.5 * height as f32]
    }

    /// Unit direction from a surface point back to the camera.
    pub fn omega_o(&self, p: Vec3) -> Vec3 {
        (self.position - p).normalize_or_zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_inverts_primary_ray() {
        let camera = Camera::new(&CameraPose {
            position: Vec3::new(0.4, 1.2, -3.0),
            look_at: Vec3::new(0.0, 0.8, 1.0),
            up: Vec3::Y,
            fov_degrees: 47.0,
        });
        let (w, h) = (93, 61);
        for (sx, sy) in [(0.5, 0.5), (46.5, 30.5), (92.5, 60.5), (10.25, 49.75)] {
            let ray = camera.primary_ray(sx, sy, w, h);
            let p = ray.at(2.37);
            let v = camera.view_coords(p);
            let [px, py] = camera.view_to_screen(v, w, h);
            assert!((px - sx).abs() < 1e-3, "{px} vs {sx}");
            assert!((py - sy).abs() < 1e-3, "{py} vs {sy}");
        }
    }
}
