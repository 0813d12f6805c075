//! Scene description, validation, and deterministic instance sampling.
//!
//! A [`Scene`] is the static description loaded from a JSON file: geometry,
//! materials, lights, camera ranges, and the named variable parameters that
//! change between views. A [`SceneInstance`] pins one camera pose and one
//! value per variable, all drawn deterministically from a seed, and is the
//! single source of truth consumed by both the path tracer and the
//! rasterizer.

mod load;
mod sample;

pub mod fixtures;

pub use load::load_scene;
pub use sample::{sample_instance, RenderScene, ResolvedLight, ResolvedMaterial};

use std::sync::Arc;

use glam::{Mat4, Vec3};
use thiserror::Error;

use crate::geom::Aabb;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("missing texture file {path}")]
    MissingTexture { path: String },
    #[error("invalid scene: {0}")]
    Validation(String),
}

fn invalid(msg: impl Into<String>) -> SceneError {
    SceneError::Validation(msg.into())
}

/// Triangle mesh in object space.
#[derive(Debug, Clone, Default)]
pub struct Mesh {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub uvs: Vec<[f32; 2]>,
    pub triangles: Vec<[u32; 3]>,
}

#[derive(Debug, Clone)]
pub enum Albedo {
    Color(Vec3),
    /// Index into [`Scene::textures`].
    Texture(usize),
}

#[derive(Debug, Clone)]
pub struct Material {
    pub albedo: Albedo,
    /// 1 is pure diffuse, 0 the sharpest glossy lobe.
    pub roughness: f32,
    pub emission: Vec3,
    /// Opacity in (0, 1]; 1 for opaque surfaces.
    pub alpha: f32,
    /// Transmission filter color for transparent surfaces.
    pub tint: Vec3,
}

impl Default for Material {
    fn default() -> Self {
        Self {
            albedo: Albedo::Color(Vec3::splat(0.8)),
            roughness: 1.0,
            emission: Vec3::ZERO,
            alpha: 1.0,
            tint: Vec3::ONE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Object {
    pub name: String,
    pub mesh: Mesh,
    pub material: Material,
    pub transparent: bool,
    pub transform: Mat4,
}

#[derive(Debug, Clone)]
pub enum Light {
    Point { position: Vec3, intensity: Vec3 },
    AreaQuad { corners: [Vec3; 4], radiance: Vec3 },
}

/// Linear RGB texture, row-major.
#[derive(Debug, Clone)]
pub struct Texture {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Vec3>,
}

impl Texture {
    /// Bilinear sample with clamped UVs, v = 0 at the top row.
    pub fn sample(&self, u: f32, v: f32) -> Vec3 {
        let u = u.clamp(0.0, 1.0);
        let v = v.clamp(0.0, 1.0);
        let fx = (u * self.width as f32 - 0.5).clamp(0.0, self.width as f32 - 1.0);
        let fy = (v * self.height as f32 - 0.5).clamp(0.0, self.height as f32 - 1.0);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = fx - x0 as f32;
        let ty = fy - y0 as f32;
        let p = |x: usize, y: usize| self.pixels[y * self.width + x];
        let a = p(x0, y0).lerp(p(x1, y0), tx);
        let b = p(x0, y1).lerp(p(x1, y1), tx);
        a.lerp(b, ty)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RangeBox {
    pub min: Vec3,
    pub max: Vec3,
}

#[derive(Debug, Clone, Copy)]
pub struct CameraRanges {
    pub position: RangeBox,
    pub look_at: RangeBox,
    pub fov_degrees: (f32, f32),
}

/// One named uniform range resolved per instance. The supported kinds are
/// scalar roughness, object translation, light radiance scale, and material
/// color.
#[derive(Debug, Clone)]
pub enum VariableSpec {
    Roughness {
        name: String,
        object: String,
        min: f32,
        max: f32,
    },
    Translation {
        name: String,
        object: String,
        min: Vec3,
        max: Vec3,
    },
    LightScale {
        name: String,
        light: usize,
        min: f32,
        max: f32,
    },
    Color {
        name: String,
        object: String,
        min: Vec3,
        max: Vec3,
    },
}

impl VariableSpec {
    pub fn name(&self) -> &str {
        match self {
            VariableSpec::Roughness { name, .. }
            | VariableSpec::Translation { name, .. }
            | VariableSpec::LightScale { name, .. }
            | VariableSpec::Color { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VariableValue {
    Scalar(f32),
    Vector(Vec3),
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub objects: Vec<Object>,
    pub lights: Vec<Light>,
    pub camera_ranges: CameraRanges,
    pub variables: Vec<VariableSpec>,
    pub background: Vec3,
    pub textures: Vec<Texture>,
}

#[derive(Debug, Clone, Copy)]
pub struct CameraPose {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    pub fov_degrees: f32,
}

/// A scene with camera pose and variable parameters pinned. Immutable and
/// cheap to share across renderer threads.
#[derive(Debug, Clone)]
pub struct SceneInstance {
    pub scene: Arc<Scene>,
    pub camera: CameraPose,
    pub variable_values: Vec<VariableValue>,
    pub seed: u64,
}

impl Scene {
    pub fn transparent_count(&self) -> usize {
        self.objects.iter().filter(|o| o.transparent).count()
    }

    /// Object-space consistency checks; every violation names the invariant.
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.lights.is_empty() {
            return Err(invalid("scene must declare at least one light"));
        }
        if !self.objects.iter().any(|o| !o.transparent) {
            return Err(invalid("scene must declare at least one opaque object"));
        }
        if self.background.min_element() < 0.0 {
            return Err(invalid("background radiance must be non-negative"));
        }
        for obj in &self.objects {
            self.validate_object(obj)?;
        }
        for (i, light) in self.lights.iter().enumerate() {
            validate_light(i, light)?;
        }
        validate_ranges(&self.camera_ranges)?;
        for var in &self.variables {
            self.validate_variable(var)?;
        }
        Ok(())
    }

    fn validate_object(&self, obj: &Object) -> Result<(), SceneError> {
        let m = &obj.material;
        let name = &obj.name;
        if !(0.0..=1.0).contains(&m.roughness) {
            return Err(invalid(format!("object {name}: roughness must be in [0,1]")));
        }
        if !(m.alpha > 0.0 && m.alpha <= 1.0) {
            return Err(invalid(format!("object {name}: alpha must be in (0,1]")));
        }
        if m.alpha < 1.0 && !obj.transparent {
            return Err(invalid(format!(
                "object {name}: alpha < 1 requires the transparent flag"
            )));
        }
        if m.emission.min_element() < 0.0 {
            return Err(invalid(format!("object {name}: emission must be >= 0")));
        }
        if obj.transparent && m.emission.max_element() > 0.0 {
            return Err(invalid(format!(
                "object {name}: emissive transparent surfaces are not supported"
            )));
        }
        if let Albedo::Color(c) = m.albedo {
            if c.min_element() < 0.0 || c.max_element() > 1.0 {
                return Err(invalid(format!(
                    "object {name}: albedo components must be in [0,1]"
                )));
            }
        }
        if let Albedo::Texture(idx) = m.albedo {
            if idx >= self.textures.len() {
                return Err(invalid(format!("object {name}: texture index out of range")));
            }
        }
        if m.tint.min_element() < 0.0 || m.tint.max_element() > 1.0 {
            return Err(invalid(format!("object {name}: tint must be in [0,1]^3")));
        }
        let mesh = &obj.mesh;
        if mesh.triangles.is_empty() {
            return Err(invalid(format!("object {name}: mesh has no triangles")));
        }
        if mesh.normals.len() != mesh.positions.len() || mesh.uvs.len() != mesh.positions.len() {
            return Err(invalid(format!(
                "object {name}: normals/uvs must match position count"
            )));
        }
        for n in &mesh.normals {
            if (n.length() - 1.0).abs() > 1e-3 {
                return Err(invalid(format!(
                    "object {name}: vertex normals must be unit length"
                )));
            }
        }
        for uv in &mesh.uvs {
            if uv[0] < -1e-4 || uv[0] > 1.0 + 1e-4 || uv[1] < -1e-4 || uv[1] > 1.0 + 1e-4 {
                return Err(invalid(format!("object {name}: UVs must lie in [0,1]^2")));
            }
        }
        for tri in &mesh.triangles {
            if tri.iter().any(|&i| i as usize >= mesh.positions.len()) {
                return Err(invalid(format!("object {name}: triangle index out of range")));
            }
        }
        Ok(())
    }

    fn validate_variable(&self, var: &VariableSpec) -> Result<(), SceneError> {
        let object_exists = |name: &str| self.objects.iter().any(|o| o.name == name);
        match var {
            VariableSpec::Roughness {
                name,
                object,
                min,
                max,
            } => {
                if !object_exists(object) {
                    return Err(invalid(format!("variable {name}: unknown object {object}")));
                }
                if !(min <= max && *min >= 0.0 && *max <= 1.0) {
                    return Err(invalid(format!(
                        "variable {name}: roughness range must satisfy 0 <= min <= max <= 1"
                    )));
                }
            }
            VariableSpec::Translation {
                name,
                object,
                min,
                max,
            } => {
                if !object_exists(object) {
                    return Err(invalid(format!("variable {name}: unknown object {object}")));
                }
                if min.cmpgt(*max).any() {
                    return Err(invalid(format!(
                        "variable {name}: range must satisfy min <= max componentwise"
                    )));
                }
            }
            VariableSpec::LightScale {
                name,
                light,
                min,
                max,
            } => {
                if *light >= self.lights.len() {
                    return Err(invalid(format!("variable {name}: light index out of range")));
                }
                if !(min <= max && *min >= 0.0) {
                    return Err(invalid(format!(
                        "variable {name}: scale range must satisfy 0 <= min <= max"
                    )));
                }
            }
            VariableSpec::Color {
                name,
                object,
                min,
                max,
            } => {
                if !object_exists(object) {
                    return Err(invalid(format!("variable {name}: unknown object {object}")));
                }
                if min.cmpgt(*max).any()
                    || min.min_element() < 0.0
                    || max.max_element() > 1.0
                {
                    return Err(invalid(format!(
                        "variable {name}: color range must lie in [0,1]^3 with min <= max"
                    )));
                }
            }
        }
        Ok(())
    }

    /// World-space bounds over all objects (without variable translations).
    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty();
        for obj in &self.objects {
            for p in &obj.mesh.positions {
                b.grow_point(obj.transform.transform_point3(*p));
            }
        }
        for light in &self.lights {
            if let Light::AreaQuad { corners, .. } = light {
                for c in corners {
                    b.grow_point(*c);
                }
            }
        }
        b
    }
}

fn validate_light(index: usize, light: &Light) -> Result<(), SceneError> {
    match light {
        Light::Point { intensity, .. } => {
            if intensity.min_element() < 0.0 {
                return Err(invalid(format!("light {index}: intensity must be >= 0")));
            }
        }
        Light::AreaQuad { corners, radiance } => {
            if radiance.min_element() < 0.0 {
                return Err(invalid(format!("light {index}: radiance must be >= 0")));
            }
            let n = (corners[1] - corners[0])
                .cross(corners[2] - corners[0])
                .normalize_or_zero();
            if n == Vec3::ZERO {
                return Err(invalid(format!("light {index}: degenerate quad")));
            }
            let d = (corners[3] - corners[0]).dot(n);
            let scale = (corners[1] - corners[0]).length().max(1.0);
            if d.abs() > 1e-3 * scale {
                return Err(invalid(format!(
                    "light {index}: area-quad corners must be coplanar"
                )));
            }
        }
    }
    Ok(())
}

fn validate_ranges(ranges: &CameraRanges) -> Result<(), SceneError> {
    for (name, b) in [("position", &ranges.position), ("look_at", &ranges.look_at)] {
        if b.min.cmpgt(b.max).any() {
            return Err(invalid(format!(
                "camera_ranges.{name}: min must be <= max componentwise"
            )));
        }
    }
    let (lo, hi) = ranges.fov_degrees;
    if !(lo <= hi && lo > 0.0 && hi < 180.0) {
        return Err(invalid(
            "camera_ranges.fov_degrees must satisfy 0 < min <= max < 180",
        ));
    }
    Ok(())
}
