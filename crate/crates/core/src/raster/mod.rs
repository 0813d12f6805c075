//! Software rasterizer producing the opaque G-buffer, one transparency
//! buffer per transparent object, and the approximate direct-lighting
//! channels.
//!
//! Rasterization uses the half-open top-left fill rule with a
//! strictly-less depth test and no MSAA, with perspective-correct attribute
//! interpolation, so the written positions and normals agree with the path
//! tracer's primary hits on the same geometry. Each transparent object is
//! rasterized in its own independent pass that ignores occlusion: its
//! coverage is the object's full silhouette and visibility is left to the
//! blending network.

mod direct;
mod io;

pub use direct::compute_direct_lighting;
pub use io::{load_buffer_stack, save_buffer_stack, BufferManifest};

use glam::Vec3;
use rayon::prelude::*;

use crate::camera::Camera;
use crate::pathtrace::Tracer;
use crate::scene::{RenderScene, SceneInstance};

/// Channels per buffer (opaque and transparency buffers both).
pub const BUFFER_CHANNELS: usize = 17;

/// Channel-group layout of the opaque G-buffer, in storage order.
pub const GBUFFER_GROUPS: &[(&str, usize)] = &[
    ("normal", 3),
    ("position", 3),
    ("albedo", 3),
    ("roughness", 1),
    ("omega_o", 3),
    ("depth", 1),
    ("l_d", 3),
];

/// Channel-group layout of one transparency buffer, in storage order.
pub const TBUFFER_GROUPS: &[(&str, usize)] = &[
    ("normal", 3),
    ("position", 3),
    ("albedo", 3),
    ("roughness", 1),
    ("omega_o", 3),
    ("depth", 1),
    ("relative_depth", 1),
    ("alpha", 1),
    ("coverage", 1),
];

/// View-space near plane for clipping.
const NEAR_Z: f32 = 1e-3;

#[derive(Debug, Clone)]
pub struct GBuffer {
    pub width: usize,
    pub height: usize,
    pub normal: Vec<[f32; 3]>,
    pub position: Vec<[f32; 3]>,
    pub albedo: Vec<[f32; 3]>,
    pub roughness: Vec<f32>,
    pub omega_o: Vec<[f32; 3]>,
    /// View-space z normalized by the scene bounds; background pixels are 1.
    pub depth: Vec<f32>,
    pub l_d: Vec<[f32; 3]>,
}

impl GBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            normal: vec![[0.0; 3]; n],
            position: vec![[0.0; 3]; n],
            albedo: vec![[0.0; 3]; n],
            roughness: vec![0.0; n],
            omega_o: vec![[0.0; 3]; n],
            depth: vec![1.0; n],
            l_d: vec![[0.0; 3]; n],
        }
    }

    /// Planar (channel-major) float view in [`GBUFFER_GROUPS`] order.
    pub fn channels_chw(&self) -> Vec<f32> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(BUFFER_CHANNELS * n);
        push_rgb(&mut out, &self.normal);
        push_rgb(&mut out, &self.position);
        push_rgb(&mut out, &self.albedo);
        out.extend_from_slice(&self.roughness);
        push_rgb(&mut out, &self.omega_o);
        out.extend_from_slice(&self.depth);
        push_rgb(&mut out, &self.l_d);
        out
    }
}

#[derive(Debug, Clone)]
pub struct TransparencyBuffer {
    pub width: usize,
    pub height: usize,
    /// Object id this buffer was rasterized for.
    pub object: u32,
    pub normal: Vec<[f32; 3]>,
    pub position: Vec<[f32; 3]>,
    pub albedo: Vec<[f32; 3]>,
    pub roughness: Vec<f32>,
    pub omega_o: Vec<[f32; 3]>,
    pub depth: Vec<f32>,
    /// Opaque depth behind the fragment minus the fragment depth, in the
    /// same normalized units; background counts as depth 1.
    pub relative_depth: Vec<f32>,
    pub alpha: Vec<f32>,
    /// 1 where the object covers the pixel, 0 elsewhere; all other channels
    /// are zero outside coverage.
    pub coverage: Vec<f32>,
}

impl TransparencyBuffer {
    pub fn new(width: usize, height: usize, object: u32) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            object,
            normal: vec![[0.0; 3]; n],
            position: vec![[0.0; 3]; n],
            albedo: vec![[0.0; 3]; n],
            roughness: vec![0.0; n],
            omega_o: vec![[0.0; 3]; n],
            depth: vec![0.0; n],
            relative_depth: vec![0.0; n],
            alpha: vec![0.0; n],
            coverage: vec![0.0; n],
        }
    }

    pub fn channels_chw(&self) -> Vec<f32> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(BUFFER_CHANNELS * n);
        push_rgb(&mut out, &self.normal);
        push_rgb(&mut out, &self.position);
        push_rgb(&mut out, &self.albedo);
        out.extend_from_slice(&self.roughness);
        push_rgb(&mut out, &self.omega_o);
        out.extend_from_slice(&self.depth);
        out.extend_from_slice(&self.relative_depth);
        out.extend_from_slice(&self.alpha);
        out.extend_from_slice(&self.coverage);
        out
    }
}

fn push_rgb(out: &mut Vec<f32>, plane: &[[f32; 3]]) {
    for c in 0..3 {
        out.extend(plane.iter().map(|p| p[c]));
    }
}

/// The opaque G-buffer plus one transparency buffer per transparent object,
/// in scene declaration order.
#[derive(Debug, Clone)]
pub struct BufferStack {
    pub gbuffer: GBuffer,
    pub tbuffers: Vec<TransparencyBuffer>,
    /// Normalization constant: view-space depth mapped to 1.
    pub depth_scale: f32,
}

impl BufferStack {
    pub fn t(&self) -> usize {
        self.tbuffers.len()
    }

    /// 17 * (t + 1).
    pub fn total_channels(&self) -> usize {
        BUFFER_CHANNELS * (self.t() + 1)
    }

    /// Exact float payload of the stack: 17 * (t+1) * w * h * 4 bytes.
    pub fn raw_bytes(&self) -> usize {
        self.total_channels() * self.gbuffer.width * self.gbuffer.height * 4
    }
}

/// Bytes of one 17-channel buffer at the given resolution.
pub fn buffer_bytes(width: usize, height: usize) -> usize {
    BUFFER_CHANNELS * width * height * 4
}

/// Random but contract-respecting buffer stack (unit normals, bounded
/// depths, zeroed channels outside coverage). Used by shape/permutation
/// tests and the memory benchmark, where buffer content is irrelevant.
pub fn synthetic_stack(width: usize, height: usize, t: usize, seed: u64) -> BufferStack {
    use crate::rng::{hash64, SplitMix64};
    let n = width * height;
    let mut rng = SplitMix64::new(hash64(&[seed, t as u64]));
    let unit = |rng: &mut SplitMix64| {
        let v = glam::Vec3::new(
            rng.uniform_f32(-1.0, 1.0),
            rng.uniform_f32(-1.0, 1.0),
            rng.uniform_f32(-1.0, 1.0),
        );
        if v.length_squared() < 1e-6 {
            glam::Vec3::Y
        } else {
            v.normalize()
        }
        .to_array()
    };

    let mut gbuffer = GBuffer::new(width, height);
    for i in 0..n {
        gbuffer.normal[i] = unit(&mut rng);
        gbuffer.position[i] = [
            rng.uniform_f32(-2.0, 2.0),
            rng.uniform_f32(-2.0, 2.0),
            rng.uniform_f32(-2.0, 2.0),
        ];
        gbuffer.albedo[i] = [rng.next_f32(), rng.next_f32(), rng.next_f32()];
        gbuffer.roughness[i] = rng.next_f32();
        gbuffer.omega_o[i] = unit(&mut rng);
        gbuffer.depth[i] = rng.next_f32();
        gbuffer.l_d[i] = [
            rng.uniform_f32(0.0, 2.0),
            rng.uniform_f32(0.0, 2.0),
            rng.uniform_f32(0.0, 2.0),
        ];
    }

    let tbuffers = (0..t)
        .map(|obj| {
            let mut tb = TransparencyBuffer::new(width, height, obj as u32);
            for i in 0..n {
                if rng.next_f32() < 0.6 {
                    tb.normal[i] = unit(&mut rng);
                    tb.position[i] = [
                        rng.uniform_f32(-2.0, 2.0),
                        rng.uniform_f32(-2.0, 2.0),
                        rng.uniform_f32(-2.0, 2.0),
                    ];
                    tb.albedo[i] = [rng.next_f32(), rng.next_f32(), rng.next_f32()];
                    tb.roughness[i] = rng.next_f32();
                    tb.omega_o[i] = unit(&mut rng);
                    tb.depth[i] = rng.next_f32();
                    tb.relative_depth[i] = rng.uniform_f32(-1.0, 1.0);
                    tb.alpha[i] = rng.uniform_f32(0.05, 1.0);
                    tb.coverage[i] = 1.0;
                }
            }
            tb
        })
        .collect();

    BufferStack {
        gbuffer,
        tbuffers,
        depth_scale: 1.0,
    }
}

/// One projected, near-clipped, screen-space triangle with vertex
/// attributes prepared for perspective-correct interpolation.
struct ScreenTri {
    sx: [f64; 3],
    sy: [f64; 3],
    /// 1 / view-space z per vertex.
    inv_z: [f32; 3],
    pos_over_z: [Vec3; 3],
    nrm_over_z: [Vec3; 3],
    uv_over_z: [[f32; 2]; 3],
    material: u32,
    min_y: i32,
    max_y: i32,
    min_x: i32,
    max_x: i32,
}

#[derive(Clone, Copy)]
struct ClipVertex {
    view: Vec3,
    world: Vec3,
    normal: Vec3,
    uv: [f32; 2],
}

/// Nearest fragment per pixel from one rasterization pass.
#[derive(Clone, Copy)]
struct Frag {
    z_view: f32,
    position: Vec3,
    normal: Vec3,
    uv: [f32; 2],
    material: u32,
}

const NO_FRAG: Frag = Frag {
    z_view: f32::INFINITY,
    position: Vec3::ZERO,
    normal: Vec3::ZERO,
    uv: [0.0; 2],
    material: u32::MAX,
};

/// Rasterize the instance into a full [`BufferStack`]. The opaque pass
/// covers opaque objects (and area-light quads); each transparent object
/// then gets an independent pass. Deterministic for a fixed instance.
pub fn rasterize(instance: &SceneInstance, width: usize, height: usize) -> BufferStack {
    let scene = instance.resolve();
    let camera = Camera::new(&instance.camera);
    let tracer = Tracer::new(&scene);
    rasterize_with(&scene, &tracer, &camera, width, height)
}

/// Rasterize with pre-built scene structures (the tracer supplies shadow
/// rays for the direct-lighting channels).
pub fn rasterize_with(
    scene: &RenderScene,
    tracer: &Tracer,
    camera: &Camera,
    width: usize,
    height: usize,
) -> BufferStack {
    let depth_scale = scene.depth_scale(camera);

    let opaque_tris = project_triangles(scene, camera, width, height, |mat| {
        !scene.material(mat).transparent
    });
    let frags = raster_pass(&opaque_tris, width, height);

    let mut gbuffer = GBuffer::new(width, height);
    fill_gbuffer(&mut gbuffer, &frags, scene, camera, depth_scale);
    let material_ids: Vec<u32> = frags.iter().map(|f| f.material).collect();
    compute_direct_lighting(&mut gbuffer, &material_ids, scene, tracer);

    let tbuffers = scene
        .transparent_objects
        .iter()
        .map(|&obj| {
            let tris = project_triangles(scene, camera, width, height, |mat| mat == obj);
            let frags = raster_pass(&tris, width, height);
            let mut buf = TransparencyBuffer::new(width, height, obj);
            fill_tbuffer(&mut buf, &frags, scene, camera, depth_scale, &gbuffer);
            buf
        })
        .collect();

    BufferStack {
        gbuffer,
        tbuffers,
        depth_scale,
    }
}

fn fill_gbuffer(
    gbuffer: &mut GBuffer,
    frags: &[Frag],
    scene: &RenderScene,
    camera: &Camera,
    depth_scale: f32,
) {
    for (i, frag) in frags.iter().enumerate() {
        if frag.material == u32::MAX {
            continue;
        }
        let mat = scene.material(frag.material);
        gbuffer.normal[i] = frag.normal.to_array();
        gbuffer.position[i] = frag.position.to_array();
        gbuffer.albedo[i] = scene.albedo_at(frag.material, frag.uv).to_array();
        gbuffer.roughness[i] = mat.roughness;
        gbuffer.omega_o[i] = camera.omega_o(frag.position).to_array();
        gbuffer.depth[i] = (frag.z_view / depth_scale).clamp(0.0, 1.0);
    }
}

fn fill_tbuffer(
    buf: &mut TransparencyBuffer,
    frags: &[Frag],
    scene: &RenderScene,
    camera: &Camera,
    depth_scale: f32,
    gbuffer: &GBuffer,
) {
    for (i, frag) in frags.iter().enumerate() {
        if frag.material == u32::MAX {
            continue;
        }
        let mat = scene.material(frag.material);
        let depth = (frag.z_view / depth_scale).clamp(0.0, 1.0);
        buf.normal[i] = frag.normal.to_array();
        buf.position[i] = frag.position.to_array();
        buf.albedo[i] = scene.albedo_at(frag.material, frag.uv).to_array();
        buf.roughness[i] = mat.roughness;
        buf.omega_o[i] = camera.omega_o(frag.position).to_array();
        buf.depth[i] = depth;
        buf.relative_depth[i] = gbuffer.depth[i] - depth;
        buf.alpha[i] = mat.alpha;
        buf.coverage[i] = 1.0;
    }
}

/// Clip against the near plane, project, and bucket by screen bounds.
fn project_triangles(
    scene: &RenderScene,
    camera: &Camera,
    width: usize,
    height: usize,
    mut filter: impl FnMut(u32) -> bool,
) -> Vec<ScreenTri> {
    let mut out = Vec::new();
    for tri in &scene.triangles {
        if !filter(tri.material) {
            continue;
        }
        let verts = [0, 1, 2].map(|i| ClipVertex {
            view: camera.view_coords(tri.positions[i]),
            world: tri.positions[i],
            normal: tri.normals[i],
            uv: tri.uvs[i],
        });
        let clipped = clip_near(&verts);
        if clipped.len() < 3 {
            continue;
        }
        for k in 1..clipped.len() - 1 {
            push_screen_tri(
                &mut out,
                [clipped[0], clipped[k], clipped[k + 1]],
                tri.material,
                camera,
                width,
                height,
            );
        }
    }
    out
}

/// Sutherland–Hodgman against the z = NEAR_Z view plane; attributes are
/// interpolated linearly in view space.
fn clip_near(verts: &[ClipVertex]) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(verts.len() + 1);
    for i in 0..verts.len() {
        let a = verts[i];
        let b = verts[(i + 1) % verts.len()];
        let a_in = a.view.z >= NEAR_Z;
        let b_in = b.view.z >= NEAR_Z;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (NEAR_Z - a.view.z) / (b.view.z - a.view.z);
            out.push(ClipVertex {
                view: a.view.lerp(b.view, t),
                world: a.world.lerp(b.world, t),
                normal: a.normal.lerp(b.normal, t),
                uv: [
                    a.uv[0] + (b.uv[0] - a.uv[0]) * t,
                    a.uv[1] + (b.uv[1] - a.uv[1]) * t,
                ],
            });
        }
    }
    out
}

fn push_screen_tri(
    out: &mut Vec<ScreenTri>,
    mut v: [ClipVertex; 3],
    material: u32,
    camera: &Camera,
    width: usize,
    height: usize,
) {
    let screen = |cv: &ClipVertex| {
        let [x, y] = camera.view_to_screen(cv.view, width, height);
        (x as f64, y as f64)
    };
    let mut s: [(f64, f64); 3] = [screen(&v[0]), screen(&v[1]), screen(&v[2])];
    let area2 = (s[1].0 - s[0].0) * (s[2].1 - s[0].1) - (s[1].1 - s[0].1) * (s[2].0 - s[0].0);
    if area2 == 0.0 {
        return;
    }
    if area2 < 0.0 {
        // No backface culling: reorder so every triangle winds the same way
        // on screen and one fill rule applies.
        v.swap(1, 2);
        s.swap(1, 2);
    }

    let min_xf = s.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max_xf = s.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let min_yf = s.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max_yf = s.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let min_x = (min_xf - 0.5).floor().max(0.0) as i32;
    let max_x = (max_xf - 0.5).ceil().min(width as f64 - 1.0) as i32;
    let min_y = (min_yf - 0.5).floor().max(0.0) as i32;
    let max_y = (max_yf - 0.5).ceil().min(height as f64 - 1.0) as i32;
    if min_x > max_x || min_y > max_y {
        return;
    }

    let inv_z = [1.0 / v[0].view.z, 1.0 / v[1].view.z, 1.0 / v[2].view.z];
    out.push(ScreenTri {
        sx: [s[0].0, s[1].0, s[2].0],
        sy: [s[0].1, s[1].1, s[2].1],
        inv_z,
        pos_over_z: [
            v[0].world * inv_z[0],
            v[1].world * inv_z[1],
            v[2].world * inv_z[2],
        ],
        nrm_over_z: [
            v[0].normal * inv_z[0],
            v[1].normal * inv_z[1],
            v[2].normal * inv_z[2],
        ],
        uv_over_z: [
            [v[0].uv[0] * inv_z[0], v[0].uv[1] * inv_z[0]],
            [v[1].uv[0] * inv_z[1], v[1].uv[1] * inv_z[1]],
            [v[2].uv[0] * inv_z[2], v[2].uv[1] * inv_z[2]],
        ],
        material,
        min_y,
        max_y,
        min_x,
        max_x,
    });
}

/// Half-open top-left fill rule: a pixel exactly on an edge belongs to the
/// triangle only when that edge is a top or left edge.
fn edge_accepts(w: f64, ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    if w > 0.0 {
        return true;
    }
    if w < 0.0 {
        return false;
    }
    let dy = by - ay;
    let dx = bx - ax;
    // Screen y grows downward; for the winding fixed in push_screen_tri a
    // left edge descends and a top edge runs horizontally leftward.
    dy > 0.0 || (dy == 0.0 && dx < 0.0)
}

/// Z-buffered nearest-fragment pass over scanline bands in parallel; bands
/// own disjoint rows, so the result is schedule-independent.
fn raster_pass(tris: &[ScreenTri], width: usize, height: usize) -> Vec<Frag> {
    let mut frags = vec![NO_FRAG; width * height];
    const BAND: usize = 16;
    frags
        .par_chunks_mut(width * BAND)
        .enumerate()
        .for_each(|(band_idx, band)| {
            let y0 = (band_idx * BAND) as i32;
            let y1 = y0 + (band.len() / width) as i32 - 1;
            for tri in tris {
                if tri.max_y < y0 || tri.min_y > y1 {
                    continue;
                }
                raster_tri_rows(tri, band, width, y0, tri.min_y.max(y0), tri.max_y.min(y1));
            }
        });
    frags
}

fn raster_tri_rows(
    tri: &ScreenTri,
    band: &mut [Frag],
    width: usize,
    band_y0: i32,
    y_from: i32,
    y_to: i32,
) {
    let [x0, x1, x2] = tri.sx;
    let [y0, y1, y2] = tri.sy;
    for py in y_from..=y_to {
        let cy = py as f64 + 0.5;
        let row_start = ((py - band_y0) as usize) * width;
        let row = &mut band[row_start..row_start + width];
        for px in tri.min_x..=tri.max_x {
            let cx = px as f64 + 0.5;
            let w0 = (x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1);
            let w1 = (x0 - x2) * (cy - y2) - (y0 - y2) * (cx - x2);
            let w2 = (x1 - x0) * (cy - y0) - (y1 - y0) * (cx - x0);
            if !edge_accepts(w0, x1, y1, x2, y2)
                || !edge_accepts(w1, x2, y2, x0, y0)
                || !edge_accepts(w2, x0, y0, x1, y1)
            {
                continue;
            }
            let sum = w0 + w1 + w2;
            if sum == 0.0 {
                continue;
            }
            let b0 = (w0 / sum) as f32;
            let b1 = (w1 / sum) as f32;
            let b2 = (w2 / sum) as f32;
            let inv_z = b0 * tri.inv_z[0] + b1 * tri.inv_z[1] + b2 * tri.inv_z[2];
            if inv_z <= 0.0 {
                continue;
            }
            let z = 1.0 / inv_z;
            let slot = &mut row[px as usize];
            if z < slot.z_view {
                let position =
                    (tri.pos_over_z[0] * b0 + tri.pos_over_z[1] * b1 + tri.pos_over_z[2] * b2) * z;
                let normal = ((tri.nrm_over_z[0] * b0
                    + tri.nrm_over_z[1] * b1
                    + tri.nrm_over_z[2] * b2)
                    * z)
                    .normalize_or_zero();
                let uv = [
                    (tri.uv_over_z[0][0] * b0 + tri.uv_over_z[1][0] * b1 + tri.uv_over_z[2][0] * b2)
                        * z,
                    (tri.uv_over_z[0][1] * b0 + tri.uv_over_z[1][1] * b1 + tri.uv_over_z[2][1] * b2)
                        * z,
                ];
                *slot = Frag {
                    z_view: z,
                    position,
                    normal,
                    uv,
                    material: tri.material,
                };
            }
        }
    }
}

#[cfg(test)]
mod tests;
