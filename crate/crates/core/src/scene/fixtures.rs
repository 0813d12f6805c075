//! Built-in scenes and mesh/texture builders.
//!
//! Presets are written to disk as an ordinary scene directory (scene.json
//! plus textures) so they exercise the same loading path as user scenes.

use std::f32::consts::PI;
use std::path::{Path, PathBuf};

use glam::Vec3;

use super::load::{
    AlbedoFile, CameraRangesFile, LightFile, MaterialFile, MeshFile, ObjectFile, RangeBoxFile,
    ScalarRangeFile, SceneFile, TransformFile, VariableFile,
};
use super::{Mesh, SceneError};
use crate::image::write_png;

/// Quad in the XY plane, centered at the origin, facing +Z.
pub fn quad_mesh(half_w: f32, half_h: f32) -> Mesh {
    Mesh {
        positions: vec![
            Vec3::new(-half_w, -half_h, 0.0),
            Vec3::new(half_w, -half_h, 0.0),
            Vec3::new(half_w, half_h, 0.0),
            Vec3::new(-half_w, half_h, 0.0),
        ],
        normals: vec![Vec3::Z; 4],
        uvs: vec![[0.0, 1.0], [1.0, 1.0], [1.0, 0.0], [0.0, 0.0]],
        triangles: vec![[0, 1, 2], [0, 2, 3]],
    }
}

/// Axis-aligned box with outward normals and per-face [0,1] UVs.
pub fn box_mesh(half: Vec3) -> Mesh {
    let mut mesh = Mesh::default();
    let faces: [(Vec3, Vec3, Vec3); 6] = [
        (Vec3::X, Vec3::Z, Vec3::Y),
        (Vec3::NEG_X, Vec3::NEG_Z, Vec3::Y),
        (Vec3::Y, Vec3::X, Vec3::Z),
        (Vec3::NEG_Y, Vec3::X, Vec3::NEG_Z),
        (Vec3::Z, Vec3::NEG_X, Vec3::Y),
        (Vec3::NEG_Z, Vec3::X, Vec3::Y),
    ];
    for (normal, tangent, bitangent) in faces {
        let base = mesh.positions.len() as u32;
        let center = normal * half;
        let t = tangent * half;
        let b = bitangent * half;
        for (sx, sy, uv) in [
            (-1.0f32, -1.0f32, [0.0, 1.0]),
            (1.0, -1.0, [1.0, 1.0]),
            (1.0, 1.0, [1.0, 0.0]),
            (-1.0, 1.0, [0.0, 0.0]),
        ] {
            mesh.positions.push(center + t * sx + b * sy);
            mesh.normals.push(normal);
            mesh.uvs.push(uv);
        }
        mesh.triangles.push([base, base + 1, base + 2]);
        mesh.triangles.push([base, base + 2, base + 3]);
    }
    mesh
}

/// Icosphere by repeated triangle subdivision; normals point outward and
/// UVs come from spherical coordinates.
pub fn icosphere_mesh(radius: f32, subdivisions: u32) -> Mesh {
    let phi = (1.0 + 5.0f32.sqrt()) * 0.5;
    let mut verts: Vec<Vec3> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vec3::from_slice(v).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint = std::collections::HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mids = [0u32; 3];
            for i in 0..3 {
                let a = f[i].min(f[(i + 1) % 3]);
                let b = f[i].max(f[(i + 1) % 3]);
                mids[i] = *midpoint.entry((a, b)).or_insert_with(|| {
                    verts.push((verts[a as usize] + verts[b as usize]).normalize());
                    (verts.len() - 1) as u32
                });
            }
            next.push([f[0], mids[0], mids[2]]);
            next.push([f[1], mids[1], mids[0]]);
            next.push([f[2], mids[2], mids[1]]);
            next.push(mids);
        }
        faces = next;
    }
    let uvs = verts
        .iter()
        .map(|v| {
            let u = 0.5 + v.z.atan2(v.x) / (2.0 * PI);
            let w = 0.5 - v.y.asin() / PI;
            [u.clamp(0.0, 1.0), w.clamp(0.0, 1.0)]
        })
        .collect();
    Mesh {
        normals: verts.clone(),
        positions: verts.iter().map(|v| *v * radius).collect(),
        uvs,
        triangles: faces,
    }
}

/// Two-color checkerboard texture as sRGB PNG bytes.
pub fn write_checker_png(
    path: &Path,
    size: usize,
    cells: usize,
    color_a: [u8; 3],
    color_b: [u8; 3],
) -> Result<(), SceneError> {
    let mut bytes = Vec::with_capacity(size * size * 3);
    let cell = (size / cells).max(1);
    for y in 0..size {
        for x in 0..size {
            let c = if ((x / cell) + (y / cell)) % 2 == 0 {
                color_a
            } else {
                color_b
            };
            bytes.extend_from_slice(&c);
        }
    }
    write_png(path, size, size, png::ColorType::Rgb, &bytes).map_err(|e| SceneError::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Closed colored box, area light, textured occluders, four transparent
    /// objects, four variable parameters.
    Cornellbox,
    /// Smaller box with two textured transparent panes over a textured
    /// occluder; one pane translates and the light intensity varies.
    CornellPanes,
    /// Uniform unit-radiance environment around a white diffuse sphere.
    Furnace,
    /// A stack of tinted transparent quads for compositing demos.
    GlassStack,
}

impl Preset {
    pub fn parse(name: &str) -> Option<Preset> {
        match name {
            "cornellbox" => Some(Preset::Cornellbox),
            "cornell-panes" => Some(Preset::CornellPanes),
            "furnace" => Some(Preset::Furnace),
            "glass-stack" => Some(Preset::GlassStack),
            _ => None,
        }
    }

    pub const NAMES: &'static [&'static str] =
        &["cornellbox", "cornell-panes", "furnace", "glass-stack"];
}

/// Write a preset scene (scene.json plus textures) into `dir` and return
/// the path of the scene document.
pub fn write_preset(preset: Preset, dir: &Path) -> Result<PathBuf, SceneError> {
    std::fs::create_dir_all(dir).map_err(|e| SceneError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let file = match preset {
        Preset::Cornellbox => cornellbox(dir)?,
        Preset::CornellPanes => cornell_panes(dir)?,
        Preset::Furnace => furnace(),
        Preset::GlassStack => glass_stack(dir)?,
    };
    let path = dir.join("scene.json");
    let json = serde_json::to_string_pretty(&file).expect("scene serialization");
    std::fs::write(&path, json).map_err(|e| SceneError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(path)
}

fn mesh_to_file(mesh: &Mesh) -> MeshFile {
    MeshFile::Inline {
        positions: mesh.positions.iter().map(|p| p.to_array()).collect(),
        normals: Some(mesh.normals.iter().map(|n| n.to_array()).collect()),
        uvs: Some(mesh.uvs.clone()),
        triangles: mesh.triangles.clone(),
    }
}

fn color(albedo: [f32; 3]) -> MaterialFile {
    MaterialFile {
        albedo: AlbedoFile::Color(albedo),
        ..MaterialFile::default()
    }
}

fn wall(name: &str, mesh: &Mesh, albedo: [f32; 3], transform: TransformFile) -> ObjectFile {
    ObjectFile {
        name: name.into(),
        mesh: mesh_to_file(mesh),
        material: color(albedo),
        transparent: false,
        transform: Some(transform),
    }
}

fn trs(translate: [f32; 3], rotate_y_deg: f32, scale: [f32; 3]) -> TransformFile {
    TransformFile::Trs {
        translate,
        rotate_y_deg,
        scale,
    }
}

fn box_walls(objects: &mut Vec<ObjectFile>, half: f32) {
    let quad = quad_mesh(half, half);
    // Quad faces +Z; orient each wall's normal into the box.
    objects.push(wall(
        "floor",
        &quad,
        [0.73, 0.73, 0.73],
        TransformFile::Matrix {
            matrix: rot_x_matrix(-90.0, [0.0, -half, 0.0]),
        },
    ));
    objects.push(wall(
        "ceiling",
        &quad,
        [0.73, 0.73, 0.73],
        TransformFile::Matrix {
            matrix: rot_x_matrix(90.0, [0.0, half, 0.0]),
        },
    ));
    objects.push(wall(
        "back",
        &quad,
        [0.73, 0.73, 0.73],
        trs([0.0, 0.0, half], 180.0, [1.0, 1.0, 1.0]),
    ));
    objects.push(wall(
        "left",
        &quad,
        [0.65, 0.05, 0.05],
        trs([-half, 0.0, 0.0], 90.0, [1.0, 1.0, 1.0]),
    ));
    objects.push(wall(
        "right",
        &quad,
        [0.12, 0.45, 0.15],
        trs([half, 0.0, 0.0], -90.0, [1.0, 1.0, 1.0]),
    ));
}

/// Row-major 4x4 for a rotation about X followed by a translation.
fn rot_x_matrix(deg: f32, translate: [f32; 3]) -> [f32; 16] {
    let m = glam::Mat4::from_translation(Vec3::from(translate))
        * glam::Mat4::from_rotation_x(deg.to_radians());
    let cols = m.to_cols_array();
    let mut row_major = [0f32; 16];
    for r in 0..4 {
        for c in 0..4 {
            row_major[r * 4 + c] = cols[c * 4 + r];
        }
    }
    row_major
}

fn ceiling_light(half: f32) -> LightFile {
    let y = half - 1e-3;
    let s = half * 0.45;
    LightFile::AreaQuad {
        corners: [
            [-s, y, -s],
            [s, y, -s],
            [s, y, s],
            [-s, y, s],
        ],
        radiance: [14.0, 13.6, 12.6],
    }
}

fn camera_ranges(center_z: f32, spread: f32) -> CameraRangesFile {
    CameraRangesFile {
        position: RangeBoxFile {
            min: [-spread, -spread * 0.6, center_z - spread],
            max: [spread, spread * 0.6, center_z + spread],
        },
        look_at: RangeBoxFile {
            min: [-0.15, -0.15, -0.1],
            max: [0.15, 0.15, 0.1],
        },
        fov_degrees: ScalarRangeFile { min: 38.0, max: 43.0 },
    }
}

fn cornellbox(dir: &Path) -> Result<SceneFile, SceneError> {
    write_checker_png(&dir.join("occluder.png"), 64, 8, [222, 184, 96], [60, 42, 30])?;
    write_checker_png(&dir.join("pane_a.png"), 64, 8, [236, 90, 70], [245, 226, 190])?;
    write_checker_png(&dir.join("pane_b.png"), 64, 8, [70, 120, 240], [210, 235, 250])?;

    let mut objects = Vec::new();
    box_walls(&mut objects, 1.0);
    objects.push(ObjectFile {
        name: "tallbox".into(),
        mesh: mesh_to_file(&box_mesh(Vec3::new(0.28, 0.55, 0.28))),
        material: MaterialFile {
            albedo: AlbedoFile::Texture {
                texture: "occluder.png".into(),
            },
            ..MaterialFile::default()
        },
        transparent: false,
        transform: Some(trs([-0.38, -0.45, 0.35], 22.0, [1.0, 1.0, 1.0])),
    });
    objects.push(ObjectFile {
        name: "shortbox".into(),
        mesh: mesh_to_file(&box_mesh(Vec3::new(0.24, 0.24, 0.24))),
        material: MaterialFile {
            roughness: 0.4,
            ..color([0.85, 0.82, 0.75])
        },
        transparent: false,
        transform: Some(trs([0.42, -0.76, -0.1], -15.0, [1.0, 1.0, 1.0])),
    });
    objects.push(ObjectFile {
        name: "pane1".into(),
        mesh: mesh_to_file(&quad_mesh(0.45, 0.6)),
        material: MaterialFile {
            albedo: AlbedoFile::Texture {
                texture: "pane_a.png".into(),
            },
            alpha: 0.45,
            tint: [0.95, 0.85, 0.8],
            ..MaterialFile::default()
        },
        transparent: true,
        transform: Some(trs([-0.4, -0.3, -0.35], 180.0, [1.0, 1.0, 1.0])),
    });
    objects.push(ObjectFile {
        name: "pane2".into(),
        mesh: mesh_to_file(&quad_mesh(0.4, 0.5)),
        material: MaterialFile {
            albedo: AlbedoFile::Texture {
                texture: "pane_b.png".into(),
            },
            alpha: 0.4,
            tint: [0.82, 0.9, 0.98],
            ..MaterialFile::default()
        },
        transparent: true,
        transform: Some(trs([0.45, -0.35, -0.55], 170.0, [1.0, 1.0, 1.0])),
    });
    objects.push(ObjectFile {
        name: "glassball".into(),
        mesh: mesh_to_file(&icosphere_mesh(0.22, 2)),
        material: MaterialFile {
            albedo: AlbedoFile::Color([0.7, 0.8, 0.9]),
            alpha: 0.3,
            tint: [0.85, 0.92, 0.97],
            roughness: 0.25,
            ..MaterialFile::default()
        },
        transparent: true,
        transform: Some(trs([0.42, -0.28, -0.1], 0.0, [1.0, 1.0, 1.0])),
    });
    objects.push(ObjectFile {
        name: "visor".into(),
        mesh: mesh_to_file(&quad_mesh(0.35, 0.22)),
        material: MaterialFile {
            albedo: AlbedoFile::Color([0.9, 0.75, 0.35]),
            alpha: 0.55,
            tint: [0.95, 0.9, 0.75],
            ..MaterialFile::default()
        },
        transparent: true,
        transform: Some(trs([-0.05, 0.3, -0.15], 160.0, [1.0, 1.0, 1.0])),
    });

    Ok(SceneFile {
        objects,
        lights: vec![ceiling_light(1.0)],
        camera_ranges: camera_ranges(-2.9, 0.25),
        variables: vec![
            VariableFile::Translation {
                name: "pane1_pos".into(),
                object: "pane1".into(),
                min: [-0.15, -0.1, 0.0],
                max: [0.25, 0.1, 0.0],
            },
            VariableFile::Translation {
                name: "ball_pos".into(),
                object: "glassball".into(),
                min: [-0.1, 0.0, -0.05],
                max: [0.1, 0.25, 0.05],
            },
            VariableFile::Translation {
                name: "shortbox_pos".into(),
                object: "shortbox".into(),
                min: [-0.12, 0.0, -0.08],
                max: [0.12, 0.0, 0.08],
            },
            VariableFile::LightScale {
                name: "light_power".into(),
                light: 0,
                min: 0.6,
                max: 1.5,
            },
        ],
        background: [0.0, 0.0, 0.0],
    })
}

fn cornell_panes(dir: &Path) -> Result<SceneFile, SceneError> {
    write_checker_png(&dir.join("occluder.png"), 64, 8, [225, 170, 80], [40, 32, 26])?;
    write_checker_png(&dir.join("pane_a.png"), 64, 4, [240, 70, 60], [250, 235, 200])?;
    write_checker_png(&dir.join("pane_b.png"), 64, 4, [60, 110, 235], [215, 240, 250])?;

    let mut objects = Vec::new();
    box_walls(&mut objects, 1.0);
    objects.push(ObjectFile {
        name: "occluder".into(),
        mesh: mesh_to_file(&box_mesh(Vec3::new(0.5, 0.42, 0.18))),
        material: MaterialFile {
            albedo: AlbedoFile::Texture {
                texture: "occluder.png".into(),
            },
            ..MaterialFile::default()
        },
        transparent: false,
        transform: Some(trs([0.0, -0.45, 0.55], 8.0, [1.0, 1.0, 1.0])),
    });
    objects.push(ObjectFile {
        name: "pane1".into(),
        mesh: mesh_to_file(&quad_mesh(0.55, 0.62)),
        material: MaterialFile {
            albedo: AlbedoFile::Texture {
                texture: "pane_a.png".into(),
            },
            alpha: 0.5,
            tint: [0.95, 0.88, 0.84],
            ..MaterialFile::default()
        },
        transparent: true,
        transform: Some(trs([-0.3, -0.2, -0.3], 180.0, [1.0, 1.0, 1.0])),
    });
    objects.push(ObjectFile {
        name: "pane2".into(),
        mesh: mesh_to_file(&quad_mesh(0.5, 0.55)),
        material: MaterialFile {
            albedo: AlbedoFile::Texture {
                texture: "pane_b.png".into(),
            },
            alpha: 0.45,
            tint: [0.84, 0.9, 0.97],
            ..MaterialFile::default()
        },
        transparent: true,
        transform: Some(trs([0.35, -0.25, -0.05], 172.0, [1.0, 1.0, 1.0])),
    });

    Ok(SceneFile {
        objects,
        lights: vec![ceiling_light(1.0)],
        camera_ranges: camera_ranges(-2.9, 0.22),
        variables: vec![
            VariableFile::Translation {
                name: "pane1_pos".into(),
                object: "pane1".into(),
                min: [-0.3, -0.08, 0.0],
                max: [0.45, 0.12, 0.0],
            },
            VariableFile::LightScale {
                name: "light_power".into(),
                light: 0,
                min: 0.65,
                max: 1.55,
            },
        ],
        background: [0.0, 0.0, 0.0],
    })
}

fn furnace() -> SceneFile {
    SceneFile {
        objects: vec![ObjectFile {
            name: "sphere".into(),
            mesh: mesh_to_file(&icosphere_mesh(1.0, 3)),
            material: color([1.0, 1.0, 1.0]),
            transparent: false,
            transform: None,
        }],
        // The environment does the lighting; the schema still requires one
        // declared light, so a zero-intensity point light is used.
        lights: vec![LightFile::Point {
            position: [0.0, 3.0, 0.0],
            intensity: [0.0, 0.0, 0.0],
        }],
        camera_ranges: CameraRangesFile {
            position: RangeBoxFile {
                min: [0.0, 0.0, -3.2],
                max: [0.0, 0.0, -3.2],
            },
            look_at: RangeBoxFile {
                min: [0.0, 0.0, 0.0],
                max: [0.0, 0.0, 0.0],
            },
            fov_degrees: ScalarRangeFile { min: 40.0, max: 40.0 },
        },
        variables: vec![],
        background: [1.0, 1.0, 1.0],
    }
}

fn glass_stack(dir: &Path) -> Result<SceneFile, SceneError> {
    write_checker_png(&dir.join("floor.png"), 64, 8, [200, 200, 205], [90, 90, 100])?;
    let mut objects = vec![
        ObjectFile {
            name: "back".into(),
            mesh: mesh_to_file(&quad_mesh(1.6, 1.2)),
            material: MaterialFile {
                albedo: AlbedoFile::Texture {
                    texture: "floor.png".into(),
                },
                ..MaterialFile::default()
            },
            transparent: false,
            transform: Some(trs([0.0, 0.0, 1.4], 180.0, [1.0, 1.0, 1.0])),
        },
    ];
    let colors = [
        [0.95, 0.25, 0.2],
        [0.2, 0.8, 0.3],
        [0.25, 0.4, 0.95],
        [0.95, 0.8, 0.25],
    ];
    for (i, c) in colors.iter().enumerate() {
        objects.push(ObjectFile {
            name: format!("sheet{i}"),
            mesh: mesh_to_file(&quad_mesh(0.75 - 0.09 * i as f32, 0.65 - 0.07 * i as f32)),
            material: MaterialFile {
                albedo: AlbedoFile::Color(*c),
                alpha: 0.55,
                tint: [c[0].max(0.5), c[1].max(0.5), c[2].max(0.5)],
                ..MaterialFile::default()
            },
            transparent: true,
            transform: Some(trs(
                [0.12 * i as f32 - 0.2, 0.08 * i as f32 - 0.1, 0.3 * i as f32],
                180.0 + 6.0 * i as f32,
                [1.0, 1.0, 1.0],
            )),
        });
    }
    Ok(SceneFile {
        objects,
        lights: vec![LightFile::Point {
            position: [0.6, 1.4, -1.8],
            intensity: [9.0, 9.0, 8.6],
        }],
        camera_ranges: CameraRangesFile {
            position: RangeBoxFile {
                min: [-0.1, -0.1, -2.6],
                max: [0.1, 0.1, -2.4],
            },
            look_at: RangeBoxFile {
                min: [0.0, 0.0, 0.0],
                max: [0.0, 0.0, 0.0],
            },
            fov_degrees: ScalarRangeFile { min: 42.0, max: 42.0 },
        },
        variables: vec![],
        background: [0.02, 0.02, 0.03],
    })
}
