//! Scene file parsing: JSON schema, Wavefront OBJ meshes, texture decode.

use std::collections::HashMap;
use std::path::Path;

use glam::{Mat4, Vec3};
use serde::{Deserialize, Serialize};

use super::{
    Albedo, CameraRanges, Light, Material, Mesh, Object, RangeBox, Scene, SceneError, Texture,
    VariableSpec,
};
use crate::image::{read_png, srgb_to_linear, Pfm};

/// Serde mirror of the on-disk scene document. Field names are the schema.
#[derive(Debug, Serialize, Deserialize)]
pub struct SceneFile {
    pub objects: Vec<ObjectFile>,
    pub lights: Vec<LightFile>,
    pub camera_ranges: CameraRangesFile,
    #[serde(default)]
    pub variables: Vec<VariableFile>,
    pub background: [f32; 3],
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ObjectFile {
    pub name: String,
    pub mesh: MeshFile,
    #[serde(default)]
    pub material: MaterialFile,
    #[serde(default)]
    pub transparent: bool,
    #[serde(default)]
    pub transform: Option<TransformFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshFile {
    Inline {
        positions: Vec<[f32; 3]>,
        #[serde(default)]
        normals: Option<Vec<[f32; 3]>>,
        #[serde(default)]
        uvs: Option<Vec<[f32; 2]>>,
        triangles: Vec<[u32; 3]>,
    },
    Obj(String),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MaterialFile {
    #[serde(default = "default_albedo")]
    pub albedo: AlbedoFile,
    #[serde(default = "one")]
    pub roughness: f32,
    #[serde(default)]
    pub emission: [f32; 3],
    #[serde(default = "one")]
    pub alpha: f32,
    #[serde(default = "white")]
    pub tint: [f32; 3],
}

impl Default for MaterialFile {
    fn default() -> Self {
        Self {
            albedo: default_albedo(),
            roughness: 1.0,
            emission: [0.0; 3],
            alpha: 1.0,
            tint: [1.0; 3],
        }
    }
}

fn one() -> f32 {
    1.0
}
fn white() -> [f32; 3] {
    [1.0; 3]
}
fn default_albedo() -> AlbedoFile {
    AlbedoFile::Color([0.8, 0.8, 0.8])
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlbedoFile {
    Color([f32; 3]),
    Texture { texture: String },
}

/// Either an explicit row-major 4x4 matrix or translate/rotate/scale parts.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TransformFile {
    Matrix { matrix: [f32; 16] },
    Trs {
        #[serde(default)]
        translate: [f32; 3],
        #[serde(default)]
        rotate_y_deg: f32,
        #[serde(default = "white")]
        scale: [f32; 3],
    },
}

impl TransformFile {
    pub fn to_matrix(&self) -> Mat4 {
        match self {
            TransformFile::Matrix { matrix } => Mat4::from_cols_array(matrix).transpose(),
            TransformFile::Trs {
                translate,
                rotate_y_deg,
                scale,
            } => {
                Mat4::from_translation(Vec3::from(*translate))
                    * Mat4::from_rotation_y(rotate_y_deg.to_radians())
                    * Mat4::from_scale(Vec3::from(*scale))
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LightFile {
    Point {
        position: [f32; 3],
        intensity: [f32; 3],
    },
    AreaQuad {
        corners: [[f32; 3]; 4],
        radiance: [f32; 3],
    },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CameraRangesFile {
    pub position: RangeBoxFile,
    pub look_at: RangeBoxFile,
    pub fov_degrees: ScalarRangeFile,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RangeBoxFile {
    pub min: [f32; 3],
    pub max: [f32; 3],
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScalarRangeFile {
    pub min: f32,
    pub max: f32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariableFile {
    Roughness {
        name: String,
        object: String,
        min: f32,
        max: f32,
    },
    Translation {
        name: String,
        object: String,
        min: [f32; 3],
        max: [f32; 3],
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
        min: [f32; 3],
        max: [f32; 3],
    },
}

/// Load and validate a scene document. Mesh `obj` and texture paths are
/// resolved relative to the scene file's directory.
pub fn load_scene(path: &Path) -> Result<Scene, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|e| SceneError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let file: SceneFile = serde_json::from_str(&text).map_err(|e| SceneError::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    scene_from_file(file, base)
}

/// Build a validated [`Scene`] from an in-memory document.
pub fn scene_from_file(file: SceneFile, base_dir: &Path) -> Result<Scene, SceneError> {
    let mut textures: Vec<Texture> = Vec::new();
    let mut texture_ids: HashMap<String, usize> = HashMap::new();

    let mut objects = Vec::with_capacity(file.objects.len());
    for obj in &file.objects {
        let mesh = match &obj.mesh {
            MeshFile::Inline {
                positions,
                normals,
                uvs,
                triangles,
            } => inline_mesh(positions, normals.as_deref(), uvs.as_deref(), triangles)?,
            MeshFile::Obj(rel) => load_obj(&base_dir.join(rel))?,
        };
        let albedo = match &obj.material.albedo {
            AlbedoFile::Color(c) => Albedo::Color(Vec3::from(*c)),
            AlbedoFile::Texture { texture } => {
                let idx = match texture_ids.get(texture) {
                    Some(&idx) => idx,
                    None => {
                        let tex = load_texture(&base_dir.join(texture), texture)?;
                        textures.push(tex);
                        let idx = textures.len() - 1;
                        texture_ids.insert(texture.clone(), idx);
                        idx
                    }
                };
                Albedo::Texture(idx)
            }
        };
        objects.push(Object {
            name: obj.name.clone(),
            mesh,
            material: Material {
                albedo,
                roughness: obj.material.roughness,
                emission: Vec3::from(obj.material.emission),
                alpha: obj.material.alpha,
                tint: Vec3::from(obj.material.tint),
            },
            transparent: obj.transparent,
            transform: obj
                .transform
                .as_ref()
                .map(|t| t.to_matrix())
                .unwrap_or(Mat4::IDENTITY),
        });
    }

    let lights = file
        .lights
        .iter()
        .map(|l| match l {
            LightFile::Point {
                position,
                intensity,
            } => Light::Point {
                position: Vec3::from(*position),
                intensity: Vec3::from(*intensity),
            },
            LightFile::AreaQuad { corners, radiance } => Light::AreaQuad {
                corners: corners.map(Vec3::from),
                radiance: Vec3::from(*radiance),
            },
        })
        .collect();

    let variables = file
        .variables
        .iter()
        .map(|v| match v {
            VariableFile::Roughness {
                name,
                object,
                min,
                max,
            } => VariableSpec::Roughness {
                name: name.clone(),
                object: object.clone(),
                min: *min,
                max: *max,
            },
            VariableFile::Translation {
                name,
                object,
                min,
                max,
            } => VariableSpec::Translation {
                name: name.clone(),
                object: object.clone(),
                min: Vec3::from(*min),
                max: Vec3::from(*max),
            },
            VariableFile::LightScale {
                name,
                light,
                min,
                max,
            } => VariableSpec::LightScale {
                name: name.clone(),
                light: *light,
                min: *min,
                max: *max,
            },
            VariableFile::Color {
                name,
                object,
                min,
                max,
            } => VariableSpec::Color {
                name: name.clone(),
                object: object.clone(),
                min: Vec3::from(*min),
                max: Vec3::from(*max),
            },
        })
        .collect();

    let scene = Scene {
        objects,
        lights,
        camera_ranges: CameraRanges {
            position: RangeBox {
                min: Vec3::from(file.camera_ranges.position.min),
                max: Vec3::from(file.camera_ranges.position.max),
            },
            look_at: RangeBox {
                min: Vec3::from(file.camera_ranges.look_at.min),
                max: Vec3::from(file.camera_ranges.look_at.max),
            },
            fov_degrees: (file.camera_ranges.fov_degrees.min, file.camera_ranges.fov_degrees.max),
        },
        variables,
        background: Vec3::from(file.background),
        textures,
    };
    scene.validate()?;
    Ok(scene)
}

fn inline_mesh(
    positions: &[[f32; 3]],
    normals: Option<&[[f32; 3]]>,
    uvs: Option<&[[f32; 2]]>,
    triangles: &[[u32; 3]],
) -> Result<Mesh, SceneError> {
    let positions: Vec<Vec3> = positions.iter().map(|p| Vec3::from(*p)).collect();
    let mut mesh = Mesh {
        normals: match normals {
            Some(ns) => ns.iter().map(|n| Vec3::from(*n).normalize_or_zero()).collect(),
            None => Vec::new(),
        },
        uvs: uvs.map(|u| u.to_vec()).unwrap_or_default(),
        triangles: triangles.to_vec(),
        positions,
    };
    fill_missing_attributes(&mut mesh);
    Ok(mesh)
}

/// Face normals for meshes without vertex normals, zero UVs when absent.
fn fill_missing_attributes(mesh: &mut Mesh) {
    if mesh.normals.is_empty() {
        let mut normals = vec![Vec3::ZERO; mesh.positions.len()];
        for tri in &mesh.triangles {
            let [a, b, c] = tri.map(|i| mesh.positions[i as usize]);
            let n = (b - a).cross(c - a);
            for &i in tri {
                normals[i as usize] += n;
            }
        }
        mesh.normals = normals
            .into_iter()
            .map(|n| {
                let v = n.normalize_or_zero();
                if v == Vec3::ZERO {
                    Vec3::Y
                } else {
                    v
                }
            })
            .collect();
    }
    if mesh.uvs.is_empty() {
        mesh.uvs = vec![[0.0, 0.0]; mesh.positions.len()];
    }
}

/// Minimal Wavefront OBJ reader: v / vt / vn / f records only. Faces with
/// more than three vertices are fan-triangulated. Each unique
/// position/uv/normal triple becomes one output vertex.
pub fn load_obj(path: &Path) -> Result<Mesh, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|e| SceneError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let parse_err = |line_no: usize, msg: &str| SceneError::Parse {
        path: path.display().to_string(),
        reason: format!("line {}: {}", line_no + 1, msg),
    };

    let mut positions: Vec<Vec3> = Vec::new();
    let mut uvs: Vec<[f32; 2]> = Vec::new();
    let mut normals: Vec<Vec3> = Vec::new();
    let mut vertex_ids: HashMap<(u32, u32, u32), u32> = HashMap::new();
    let mut mesh = Mesh::default();
    let mut has_normals = true;

    for (line_no, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let v = parse_floats::<3>(&mut parts)
                    .ok_or_else(|| parse_err(line_no, "bad vertex position"))?;
                positions.push(Vec3::from(v));
            }
            Some("vt") => {
                let v = parse_floats::<2>(&mut parts)
                    .ok_or_else(|| parse_err(line_no, "bad texture coordinate"))?;
                uvs.push([v[0].clamp(0.0, 1.0), (1.0 - v[1]).clamp(0.0, 1.0)]);
            }
            Some("vn") => {
                let v = parse_floats::<3>(&mut parts)
                    .ok_or_else(|| parse_err(line_no, "bad normal"))?;
                normals.push(Vec3::from(v).normalize_or_zero());
            }
            Some("f") => {
                let mut face: Vec<u32> = Vec::new();
                for token in parts {
                    let mut it = token.split('/');
                    let pi = parse_index(it.next(), positions.len())
                        .ok_or_else(|| parse_err(line_no, "bad face position index"))?;
                    let ti = match it.next() {
                        Some("") | None => u32::MAX,
                        Some(s) => parse_index(Some(s), uvs.len())
                            .ok_or_else(|| parse_err(line_no, "bad face uv index"))?,
                    };
                    let ni = match it.next() {
                        Some("") | None => {
                            has_normals = false;
                            u32::MAX
                        }
                        Some(s) => parse_index(Some(s), normals.len())
                            .ok_or_else(|| parse_err(line_no, "bad face normal index"))?,
                    };
                    let key = (pi, ti, ni);
                    let id = *vertex_ids.entry(key).or_insert_with(|| {
                        mesh.positions.push(positions[pi as usize]);
                        mesh.uvs.push(if ti == u32::MAX {
                            [0.0, 0.0]
                        } else {
                            uvs[ti as usize]
                        });
                        mesh.normals.push(if ni == u32::MAX {
                            Vec3::ZERO
                        } else {
                            normals[ni as usize]
                        });
                        (mesh.positions.len() - 1) as u32
                    });
                    face.push(id);
                }
                if face.len() < 3 {
                    return Err(parse_err(line_no, "face needs at least 3 vertices"));
                }
                for i in 1..face.len() - 1 {
                    mesh.triangles.push([face[0], face[i], face[i + 1]]);
                }
            }
            _ => {}
        }
    }
    if !has_normals {
        mesh.normals.clear();
    }
    fill_missing_attributes(&mut mesh);
    Ok(mesh)
}

fn parse_floats<const N: usize>(parts: &mut std::str::SplitWhitespace) -> Option<[f32; N]> {
    let mut out = [0f32; N];
    for slot in &mut out {
        *slot = parts.next()?.parse().ok()?;
    }
    Some(out)
}

fn parse_index(token: Option<&str>, len: usize) -> Option<u32> {
    let idx: i64 = token?.parse().ok()?;
    if idx > 0 && (idx as usize) <= len {
        Some((idx - 1) as u32)
    } else {
        None
    }
}

/// Load a PNG (sRGB, decoded to linear) or PFM (already linear) texture.
fn load_texture(path: &Path, name: &str) -> Result<Texture, SceneError> {
    if !path.exists() {
        return Err(SceneError::MissingTexture {
            path: path.display().to_string(),
        });
    }
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let map_img = |e: crate::image::ImageError| SceneError::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    match ext.as_str() {
        "png" => {
            let (width, height, color, data) = read_png(path).map_err(map_img)?;
            let stride = match color {
                png::ColorType::Rgb => 3,
                png::ColorType::Rgba => 4,
                png::ColorType::Grayscale => 1,
                _ => {
                    return Err(SceneError::Parse {
                        path: path.display().to_string(),
                        reason: "unsupported PNG color type for textures".into(),
                    })
                }
            };
            let pixels = data
                .chunks_exact(stride)
                .map(|px| {
                    let to_lin = |b: u8| srgb_to_linear(b as f32 / 255.0);
                    match stride {
                        1 => Vec3::splat(to_lin(px[0])),
                        _ => Vec3::new(to_lin(px[0]), to_lin(px[1]), to_lin(px[2])),
                    }
                })
                .collect();
            Ok(Texture {
                name: name.to_string(),
                width,
                height,
                pixels,
            })
        }
        "pfm" => {
            let pfm = Pfm::read(path).map_err(map_img)?;
            let pixels = match pfm.channels {
                3 => pfm
                    .data
                    .chunks_exact(3)
                    .map(|c| Vec3::new(c[0], c[1], c[2]))
                    .collect(),
                _ => pfm.data.iter().map(|&v| Vec3::splat(v)).collect(),
            };
            Ok(Texture {
                name: name.to_string(),
                width: pfm.width,
                height: pfm.height,
                pixels,
            })
        }
        _ => Err(SceneError::Parse {
            path: path.display().to_string(),
            reason: "textures must be .png or .pfm".into(),
        }),
    }
}
