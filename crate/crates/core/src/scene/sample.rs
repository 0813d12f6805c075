//! Instance sampling and resolution into render-ready world-space geometry.

use std::sync::Arc;

use glam::{Mat4, Vec3};

use super::{
    Albedo, CameraPose, Light, Scene, SceneInstance, VariableSpec, VariableValue,
};
use crate::geom::{Aabb, Triangle};
use crate::rng::SplitMix64;

/// Draw camera pose and variable values uniformly from the scene's declared
/// ranges. Pure function of `(scene, seed)`: the same pair always yields a
/// bitwise-identical instance. The draw order is fixed — camera position,
/// look-at, FOV, then each variable in declaration order — so adding a
/// variable never perturbs earlier draws within an instance.
pub fn sample_instance(scene: &Arc<Scene>, seed: u64) -> SceneInstance {
    let mut rng = SplitMix64::new(seed);
    let r = &scene.camera_ranges;
    let position = sample_box(&mut rng, r.position.min, r.position.max);
    let mut look_at = sample_box(&mut rng, r.look_at.min, r.look_at.max);
    let fov_degrees = rng.uniform_f32(r.fov_degrees.0, r.fov_degrees.1);
    if (look_at - position).length_squared() < 1e-10 {
        // Degenerate pose from overlapping range boxes; nudge the target.
        look_at.z += 1e-3;
    }

    let variable_values = scene
        .variables
        .iter()
        .map(|var| match var {
            VariableSpec::Roughness { min, max, .. } | VariableSpec::LightScale { min, max, .. } => {
                VariableValue::Scalar(rng.uniform_f32(*min, *max))
            }
            VariableSpec::Translation { min, max, .. } | VariableSpec::Color { min, max, .. } => {
                VariableValue::Vector(sample_box(&mut rng, *min, *max))
            }
        })
        .collect();

    SceneInstance {
        scene: Arc::clone(scene),
        camera: CameraPose {
            position,
            look_at,
            up: Vec3::Y,
            fov_degrees,
        },
        variable_values,
        seed,
    }
}

fn sample_box(rng: &mut SplitMix64, min: Vec3, max: Vec3) -> Vec3 {
    Vec3::new(
        rng.uniform_f32(min.x, max.x),
        rng.uniform_f32(min.y, max.y),
        rng.uniform_f32(min.z, max.z),
    )
}

/// Material with scene variables already applied and the albedo resolvable
/// per hit point.
#[derive(Debug, Clone)]
pub struct ResolvedMaterial {
    pub albedo: Albedo,
    pub roughness: f32,
    pub emission: Vec3,
    pub alpha: f32,
    pub tint: Vec3,
    pub transparent: bool,
}

#[derive(Debug, Clone)]
pub enum ResolvedLight {
    Point { position: Vec3, intensity: Vec3 },
    AreaQuad { corners: [Vec3; 4], radiance: Vec3 },
}

/// World-space render input shared by the path tracer and the rasterizer:
/// one triangle soup with per-triangle material/object ids, resolved lights,
/// and the scene bounds used for depth normalization.
pub struct RenderScene {
    pub triangles: Vec<Triangle>,
    /// Indexed by `Triangle::material`. One entry per scene object, then one
    /// per area light (emissive quad geometry).
    pub materials: Vec<ResolvedMaterial>,
    pub lights: Vec<ResolvedLight>,
    pub background: Vec3,
    pub bounds: Aabb,
    /// Object ids of transparent objects in scene declaration order; the
    /// transparency buffer list follows this order.
    pub transparent_objects: Vec<u32>,
    /// Materials below this index belong to user objects; the rest are the
    /// synthetic emissive materials of area lights, whose direct
    /// contribution is handled by light sampling.
    pub light_material_start: usize,
    pub textures: Arc<Scene>,
}

impl RenderScene {
    pub fn albedo_at(&self, material: u32, uv: [f32; 2]) -> Vec3 {
        match &self.materials[material as usize].albedo {
            Albedo::Color(c) => *c,
            Albedo::Texture(idx) => self.textures.textures[*idx].sample(uv[0], uv[1]),
        }
    }

    pub fn material(&self, id: u32) -> &ResolvedMaterial {
        &self.materials[id as usize]
    }

    /// Largest view-space depth used to map camera z into [0,1]; slightly
    /// padded so every real hit lands strictly below 1.
    pub fn depth_scale(&self, camera: &crate::camera::Camera) -> f32 {
        let mut max_z = 1e-3f32;
        let b = &self.bounds;
        for i in 0..8 {
            let corner = Vec3::new(
                if i & 1 == 0 { b.min.x } else { b.max.x },
                if i & 2 == 0 { b.min.y } else { b.max.y },
                if i & 4 == 0 { b.min.z } else { b.max.z },
            );
            max_z = max_z.max(camera.view_depth(corner));
        }
        max_z * 1.0001
    }
}

/// Apply variables and transforms, producing world-space triangles. Area
/// lights are appended as emissive two-triangle quads so that primary rays
/// and the rasterizer see them.
pub fn resolve(instance: &SceneInstance) -> RenderScene {
    let scene = &instance.scene;

    let mut materials: Vec<ResolvedMaterial> = scene
        .objects
        .iter()
        .map(|o| ResolvedMaterial {
            albedo: o.material.albedo.clone(),
            roughness: o.material.roughness,
            emission: o.material.emission,
            alpha: o.material.alpha,
            tint: o.material.tint,
            transparent: o.transparent,
        })
        .collect();
    let mut extra_translation = vec![Vec3::ZERO; scene.objects.len()];
    let mut light_scale = vec![1.0f32; scene.lights.len()];

    for (spec, value) in scene.variables.iter().zip(&instance.variable_values) {
        match (spec, value) {
            (VariableSpec::Roughness { object, .. }, VariableValue::Scalar(v)) => {
                if let Some(i) = object_index(scene, object) {
                    materials[i].roughness = *v;
                }
            }
            (VariableSpec::Translation { object, .. }, VariableValue::Vector(v)) => {
                if let Some(i) = object_index(scene, object) {
                    extra_translation[i] = *v;
                }
            }
            (VariableSpec::LightScale { light, .. }, VariableValue::Scalar(v)) => {
                light_scale[*light] = *v;
            }
            (VariableSpec::Color { object, .. }, VariableValue::Vector(v)) => {
                if let Some(i) = object_index(scene, object) {
                    materials[i].albedo = Albedo::Color(*v);
                }
            }
            _ => unreachable!("variable kind/value mismatch"),
        }
    }

    let mut triangles = Vec::new();
    let mut transparent_objects = Vec::new();
    for (obj_idx, obj) in scene.objects.iter().enumerate() {
        if obj.transparent {
            transparent_objects.push(obj_idx as u32);
        }
        let m = Mat4::from_translation(extra_translation[obj_idx]) * obj.transform;
        let normal_m = m.inverse().transpose();
        for tri in &obj.mesh.triangles {
            let positions = tri.map(|i| m.transform_point3(obj.mesh.positions[i as usize]));
            let normals = tri.map(|i| {
                normal_m
                    .transform_vector3(obj.mesh.normals[i as usize])
                    .normalize_or_zero()
            });
            triangles.push(Triangle {
                positions,
                normals,
                uvs: tri.map(|i| obj.mesh.uvs[i as usize]),
                material: obj_idx as u32,
                object: obj_idx as u32,
            });
        }
    }

    let lights: Vec<ResolvedLight> = scene
        .lights
        .iter()
        .zip(&light_scale)
        .map(|(l, &s)| match l {
            Light::Point {
                position,
                intensity,
            } => ResolvedLight::Point {
                position: *position,
                intensity: *intensity * s,
            },
            Light::AreaQuad { corners, radiance } => ResolvedLight::AreaQuad {
                corners: *corners,
                radiance: *radiance * s,
            },
        })
        .collect();

    // Emissive geometry for area lights, owned by synthetic object ids past
    // the user objects.
    let light_material_start = materials.len();
    for (li, light) in lights.iter().enumerate() {
        if let ResolvedLight::AreaQuad { corners, radiance } = light {
            let mat_id = materials.len() as u32;
            materials.push(ResolvedMaterial {
                albedo: Albedo::Color(Vec3::ZERO),
                roughness: 1.0,
                emission: *radiance,
                alpha: 1.0,
                tint: Vec3::ONE,
                transparent: false,
            });
            let object = (scene.objects.len() + li) as u32;
            let n = (corners[1] - corners[0])
                .cross(corners[2] - corners[0])
                .normalize_or_zero();
            for tri in [[0usize, 1, 2], [0, 2, 3]] {
                triangles.push(Triangle {
                    positions: tri.map(|i| corners[i]),
                    normals: [n; 3],
                    uvs: [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]],
                    material: mat_id,
                    object,
                });
            }
        }
    }

    let mut bounds = Aabb::empty();
    for tri in &triangles {
        bounds.grow_box(&tri.aabb());
    }

    RenderScene {
        triangles,
        materials,
        lights,
        background: scene.background,
        bounds,
        transparent_objects,
        light_material_start,
        textures: Arc::clone(scene),
    }
}

fn object_index(scene: &Scene, name: &str) -> Option<usize> {
    scene.objects.iter().position(|o| o.name == name)
}

impl SceneInstance {
    pub fn resolve(&self) -> RenderScene {
        resolve(self)
    }
}
