use std::f32::consts::PI;
use std::sync::Arc;

use glam::{Mat4, Vec3};

use super::*;
use crate::scene::fixtures::{box_mesh, quad_mesh};
use crate::scene::{
    Albedo, CameraPose, CameraRanges, Light, Material, Object, RangeBox, Scene, SceneInstance,
};

fn opaque(name: &str, mesh: crate::scene::Mesh, albedo: [f32; 3], transform: Mat4) -> Object {
    Object {
        name: name.into(),
        mesh,
        material: Material {
            albedo: Albedo::Color(Vec3::from(albedo)),
            ..Material::default()
        },
        transparent: false,
        transform,
    }
}

fn glass(name: &str, mesh: crate::scene::Mesh, alpha: f32, transform: Mat4) -> Object {
    Object {
        name: name.into(),
        mesh,
        material: Material {
            albedo: Albedo::Color(Vec3::new(0.6, 0.7, 0.9)),
            alpha,
            ..Material::default()
        },
        transparent: true,
        transform,
    }
}

fn degenerate_ranges(pos: Vec3, look: Vec3) -> CameraRanges {
    CameraRanges {
        position: RangeBox { min: pos, max: pos },
        look_at: RangeBox { min: look, max: look },
        fov_degrees: (45.0, 45.0),
    }
}

fn instance_of(scene: Scene, pos: Vec3, look: Vec3) -> SceneInstance {
    SceneInstance {
        scene: Arc::new(scene),
        camera: CameraPose {
            position: pos,
            look_at: look,
            up: Vec3::Y,
            fov_degrees: 45.0,
        },
        variable_values: vec![],
        seed: 0,
    }
}

fn default_light() -> Light {
    Light::Point {
        position: Vec3::new(0.0, 0.0, -2.0),
        intensity: Vec3::ONE,
    }
}

/// A quad is fan-triangulated into two triangles sharing a diagonal; the
/// top-left fill rule must cover its interior without seams.
#[test]
fn watertight_shared_edges() {
    let scene = Scene {
        objects: vec![opaque(
            "wall",
            quad_mesh(4.0, 4.0),
            [0.5, 0.5, 0.5],
            Mat4::from_translation(Vec3::new(0.0, 0.0, 2.0)) * Mat4::from_rotation_y(PI),
        )],
        lights: vec![default_light()],
        camera_ranges: degenerate_ranges(Vec3::new(0.0, 0.0, -1.0), Vec3::ZERO),
        variables: vec![],
        background: Vec3::ZERO,
        textures: vec![],
    };
    let inst = instance_of(scene, Vec3::new(0.0, 0.0, -1.0), Vec3::ZERO);
    let stack = rasterize(&inst, 64, 64);
    let holes = stack.gbuffer.depth.iter().filter(|&&d| d >= 1.0).count();
    assert_eq!(holes, 0, "diagonal seam left background pixels");
}

#[test]
fn channel_law_and_fig10_buffer_size() {
    // 17 * (t + 1) channels for t transparency buffers.
    let scene = Scene {
        objects: vec![
            opaque(
                "wall",
                quad_mesh(3.0, 3.0),
                [0.6, 0.6, 0.6],
                Mat4::from_translation(Vec3::new(0.0, 0.0, 3.0)) * Mat4::from_rotation_y(PI),
            ),
            glass("g0", quad_mesh(0.5, 0.5), 0.5, Mat4::from_rotation_y(PI)),
            glass(
                "g1",
                quad_mesh(0.4, 0.4),
                0.4,
                Mat4::from_translation(Vec3::new(0.3, 0.0, 1.0)) * Mat4::from_rotation_y(PI),
            ),
            glass(
                "g2",
                quad_mesh(0.3, 0.3),
                0.6,
                Mat4::from_translation(Vec3::new(-0.3, 0.0, 2.0)) * Mat4::from_rotation_y(PI),
            ),
        ],
        lights: vec![default_light()],
        camera_ranges: degenerate_ranges(Vec3::new(0.0, 0.0, -2.0), Vec3::ZERO),
        variables: vec![],
        background: Vec3::ZERO,
        textures: vec![],
    };
    let inst = instance_of(scene, Vec3::new(0.0, 0.0, -2.0), Vec3::ZERO);
    let stack = rasterize(&inst, 32, 32);
    assert_eq!(stack.t(), 3);
    assert_eq!(stack.total_channels(), 17 * 4);
    assert_eq!(stack.raw_bytes(), 17 * 4 * 32 * 32 * 4);

    // One 17-channel buffer at 256x256 with 4-byte floats.
    assert_eq!(buffer_bytes(256, 256), 4_456_448);
}

/// Per-object transparency passes ignore occlusion: a transparent quad
/// fully behind an opaque wall still rasterizes its whole silhouette.
#[test]
fn tbuffer_ignores_opaque_occlusion() {
    let scene = Scene {
        objects: vec![
            opaque(
                "wall",
                quad_mesh(3.0, 3.0),
                [0.6, 0.6, 0.6],
                Mat4::from_translation(Vec3::new(0.0, 0.0, 1.0)) * Mat4::from_rotation_y(PI),
            ),
            glass(
                "hidden",
                quad_mesh(0.8, 0.8),
                0.5,
                Mat4::from_translation(Vec3::new(0.0, 0.0, 2.0)) * Mat4::from_rotation_y(PI),
            ),
        ],
        lights: vec![default_light()],
        camera_ranges: degenerate_ranges(Vec3::new(0.0, 0.0, -2.0), Vec3::ZERO),
        variables: vec![],
        background: Vec3::ZERO,
        textures: vec![],
    };
    let inst = instance_of(scene, Vec3::new(0.0, 0.0, -2.0), Vec3::ZERO);
    let stack = rasterize(&inst, 48, 48);
    let covered = stack.tbuffers[0]
        .coverage
        .iter()
        .filter(|&&c| c > 0.0)
        .count();
    assert!(covered > 100, "occluded object must keep its silhouette");
    // The buffer's fragments sit behind the wall, so relative depth is
    // negative there.
    let idx = stack.tbuffers[0]
        .coverage
        .iter()
        .position(|&c| c > 0.0)
        .unwrap();
    assert!(stack.tbuffers[0].relative_depth[idx] < 0.0);
    // Zero coverage implies all-zero channels.
    for (i, &c) in stack.tbuffers[0].coverage.iter().enumerate() {
        if c == 0.0 {
            assert_eq!(stack.tbuffers[0].alpha[i], 0.0);
            assert_eq!(stack.tbuffers[0].normal[i], [0.0; 3]);
            assert_eq!(stack.tbuffers[0].depth[i], 0.0);
        }
    }
}

/// Background behind a transparent fragment counts as opaque depth 1.
#[test]
fn relative_depth_against_background() {
    let scene = Scene {
        objects: vec![
            opaque(
                "floor",
                quad_mesh(0.2, 0.2),
                [0.6, 0.6, 0.6],
                Mat4::from_translation(Vec3::new(0.0, -3.0, 4.0)) * Mat4::from_rotation_y(PI),
            ),
            glass("sheet", quad_mesh(2.0, 2.0), 0.5, Mat4::from_rotation_y(PI)),
        ],
        lights: vec![default_light()],
        camera_ranges: degenerate_ranges(Vec3::new(0.0, 0.0, -2.0), Vec3::ZERO),
        variables: vec![],
        background: Vec3::splat(0.1),
        textures: vec![],
    };
    let inst = instance_of(scene, Vec3::new(0.0, 0.0, -2.0), Vec3::ZERO);
    let stack = rasterize(&inst, 32, 32);
    let tb = &stack.tbuffers[0];
    let center = 16 * 32 + 16;
    assert!(tb.coverage[center] > 0.0);
    assert!(stack.gbuffer.depth[center] >= 1.0, "background behind sheet");
    let expected = 1.0 - tb.depth[center];
    assert!((tb.relative_depth[center] - expected).abs() < 1e-6);
}

/// Removing the last transparent object leaves the other buffers bitwise
/// unchanged.
#[test]
fn per_object_independence() {
    let build = |with_second: bool| {
        let mut objects = vec![
            opaque(
                "wall",
                quad_mesh(3.0, 3.0),
                [0.6, 0.6, 0.6],
                Mat4::from_translation(Vec3::new(0.0, 0.0, 3.0)) * Mat4::from_rotation_y(PI),
            ),
            glass("g0", quad_mesh(0.6, 0.6), 0.5, Mat4::from_rotation_y(PI)),
        ];
        if with_second {
            objects.push(glass(
                "g1",
                quad_mesh(0.5, 0.5),
                0.4,
                Mat4::from_translation(Vec3::new(0.4, 0.1, 1.0)) * Mat4::from_rotation_y(PI),
            ));
        }
        let scene = Scene {
            objects,
            lights: vec![default_light()],
            camera_ranges: degenerate_ranges(Vec3::new(0.0, 0.0, -2.0), Vec3::ZERO),
            variables: vec![],
            background: Vec3::ZERO,
            textures: vec![],
        };
        let inst = instance_of(scene, Vec3::new(0.0, 0.0, -2.0), Vec3::ZERO);
        rasterize(&inst, 40, 40)
    };
    let with = build(true);
    let without = build(false);
    assert_eq!(with.t(), 2);
    assert_eq!(without.t(), 1);
    let a = with.tbuffers[0].channels_chw();
    let b = without.tbuffers[0].channels_chw();
    assert_eq!(
        a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

/// Closed-form Lambertian shading of a point light, linearity in light
/// intensity, and the clamped-cosine zero case.
#[test]
fn direct_lighting_closed_form() {
    let floor = opaque("floor", quad_mesh(5.0, 5.0), [0.8, 0.8, 0.8], Mat4::from_rotation_x(-PI / 2.0));
    let build_scene = |intensity: f32| Scene {
        objects: vec![floor.clone()],
        lights: vec![Light::Point {
            position: Vec3::new(0.0, 2.0, 0.0),
            intensity: Vec3::splat(intensity),
        }],
        camera_ranges: degenerate_ranges(Vec3::new(0.0, 1.5, 0.0), Vec3::ZERO),
        variables: vec![],
        background: Vec3::ZERO,
        textures: vec![],
    };

    let shade = |scene: Scene| {
        let rs = SceneInstance {
            scene: Arc::new(scene),
            camera: CameraPose {
                position: Vec3::new(0.0, 1.5, 0.0),
                look_at: Vec3::ZERO,
                up: Vec3::Z,
                fov_degrees: 45.0,
            },
            variable_values: vec![],
            seed: 0,
        }
        .resolve();
        let tracer = crate::pathtrace::Tracer::new(&rs);
        let mut gb = GBuffer::new(1, 1);
        gb.position[0] = [0.0, 0.0, 0.0];
        gb.normal[0] = [0.0, 1.0, 0.0];
        gb.omega_o[0] = [0.0, 1.0, 0.0];
        gb.albedo[0] = [0.8, 0.8, 0.8];
        gb.roughness[0] = 1.0;
        gb.depth[0] = 0.5;
        compute_direct_lighting(&mut gb, &[0], &rs, &tracer);
        gb.l_d[0]
    };

    let l1 = shade(build_scene(1.0));
    let expected = 0.8 / PI * 1.0 / 4.0;
    assert!((l1[0] - expected).abs() < 1e-6, "{} vs {expected}", l1[0]);

    // Exact linearity in the light intensity.
    let l2 = shade(build_scene(2.0));
    for c in 0..3 {
        assert_eq!((l1[c] * 2.0).to_bits(), l2[c].to_bits());
    }

    // Facing away from the only light.
    let away = {
        let rs = SceneInstance {
            scene: Arc::new(build_scene(1.0)),
            camera: CameraPose {
                position: Vec3::new(0.0, 1.5, 0.0),
                look_at: Vec3::ZERO,
                up: Vec3::Z,
                fov_degrees: 45.0,
            },
            variable_values: vec![],
            seed: 0,
        }
        .resolve();
        let tracer = crate::pathtrace::Tracer::new(&rs);
        let mut gb = GBuffer::new(1, 1);
        gb.position[0] = [0.0, 0.0, 0.0];
        gb.normal[0] = [0.0, -1.0, 0.0];
        gb.omega_o[0] = [0.0, -1.0, 0.0];
        gb.albedo[0] = [0.8, 0.8, 0.8];
        gb.roughness[0] = 1.0;
        gb.depth[0] = 0.5;
        compute_direct_lighting(&mut gb, &[0], &rs, &tracer);
        gb.l_d[0]
    };
    assert_eq!(away, [0.0; 3]);
}

#[test]
fn stack_roundtrips_bit_exactly() {
    let scene = Scene {
        objects: vec![
            opaque(
                "box",
                box_mesh(Vec3::splat(0.5)),
                [0.7, 0.5, 0.4],
                Mat4::from_translation(Vec3::new(0.0, 0.0, 1.0)),
            ),
            glass("sheet", quad_mesh(0.8, 0.8), 0.5, Mat4::from_rotation_y(PI)),
        ],
        lights: vec![default_light()],
        camera_ranges: degenerate_ranges(Vec3::new(0.3, 0.4, -2.0), Vec3::ZERO),
        variables: vec![],
        background: Vec3::splat(0.05),
        textures: vec![],
    };
    let inst = instance_of(scene, Vec3::new(0.3, 0.4, -2.0), Vec3::ZERO);
    let stack = rasterize(&inst, 24, 24);

    let dir = tempfile::tempdir().unwrap();
    save_buffer_stack(&stack, dir.path()).unwrap();
    let loaded = load_buffer_stack(dir.path()).unwrap();

    assert_eq!(stack.depth_scale.to_bits(), loaded.depth_scale.to_bits());
    let a = stack.gbuffer.channels_chw();
    let b = loaded.gbuffer.channels_chw();
    assert_eq!(
        a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    for (ta, tb) in stack.tbuffers.iter().zip(&loaded.tbuffers) {
        assert_eq!(ta.object, tb.object);
        let a = ta.channels_chw();
        let b = tb.channels_chw();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}

/// Two consecutive rasterizations of the same instance are bitwise equal.
#[test]
fn deterministic() {
    let scene = Scene {
        objects: vec![
            opaque(
                "box",
                box_mesh(Vec3::splat(0.5)),
                [0.7, 0.5, 0.4],
                Mat4::from_translation(Vec3::new(0.0, 0.0, 1.0)),
            ),
            glass("sheet", quad_mesh(0.8, 0.8), 0.5, Mat4::from_rotation_y(PI)),
        ],
        lights: vec![default_light()],
        camera_ranges: degenerate_ranges(Vec3::new(0.0, 0.0, -2.0), Vec3::ZERO),
        variables: vec![],
        background: Vec3::ZERO,
        textures: vec![],
    };
    let inst = instance_of(scene, Vec3::new(0.0, 0.0, -2.0), Vec3::ZERO);
    let a = rasterize(&inst, 33, 27);
    let b = rasterize(&inst, 33, 27);
    assert_eq!(
        a.gbuffer
            .channels_chw()
            .iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>(),
        b.gbuffer
            .channels_chw()
            .iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    );
}
