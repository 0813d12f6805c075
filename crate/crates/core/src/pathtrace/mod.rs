//! Unbiased Monte Carlo path tracer used as the ground-truth renderer.
//!
//! Estimates outgoing radiance with cosine-weighted diffuse sampling, GGX
//! importance sampling, next-event estimation toward declared lights, and
//! Russian roulette after a fixed depth. Transparent surfaces are thin
//! non-refractive sheets: a path crossing one either interacts with the
//! surface (probability alpha) or continues straight, attenuated by the
//! tint. Every sample is seeded by `hash(seed, x, y, sample)`, so results
//! are independent of tile scheduling and bitwise reproducible.

mod bsdf;
mod bvh;

pub use bsdf::{cosine_sample, eval as bsdf_eval, pdf as bsdf_pdf, sample as bsdf_sample};
pub use bvh::{Bvh, Hit};

use std::sync::atomic::{AtomicU64, Ordering};

use glam::Vec3;
use rayon::prelude::*;

use crate::camera::Camera;
use crate::geom::Ray;
use crate::image::{CoverageMask, RadianceImage};
use crate::rng::{hash64, SplitMix64};
use crate::scene::{RenderScene, ResolvedLight, SceneInstance};

#[derive(Debug, Clone, Copy)]
pub struct TraceOptions {
    pub spp: u32,
    pub seed: u64,
    /// Maximum number of scattering events along a path.
    pub max_depth: u32,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            spp: 256,
            seed: 0,
            max_depth: 8,
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct TraceStats {
    /// Samples that produced a non-finite value and were re-drawn.
    pub nan_rejects: u64,
}

const T_MIN: f32 = 1e-4;
const RR_START_DEPTH: u32 = 4;
const MAX_TRANSPARENT_CROSSINGS: u32 = 64;

/// First-hit information shared with consistency tests and depth peeling.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceHit {
    pub t: f32,
    pub position: Vec3,
    pub shading_normal: Vec3,
    pub uv: [f32; 2],
    pub material: u32,
    pub object: u32,
}

pub struct Tracer<'a> {
    pub scene: &'a RenderScene,
    bvh: Bvh,
}

impl<'a> Tracer<'a> {
    pub fn new(scene: &'a RenderScene) -> Self {
        Self {
            scene,
            bvh: Bvh::build(&scene.triangles),
        }
    }

    pub fn trace_image(&self, camera: &Camera, width: usize, height: usize, opts: TraceOptions) -> RadianceImage {
        self.trace_image_with_stats(camera, width, height, opts).0
    }

    pub fn trace_image_with_stats(
        &self,
        camera: &Camera,
        width: usize,
        height: usize,
        opts: TraceOptions,
    ) -> (RadianceImage, TraceStats) {
        let (direct, indirect, stats) = self.render(camera, width, height, opts, false);
        let mut img = direct;
        for (p, q) in img.pixels.iter_mut().zip(&indirect.pixels) {
            p[0] += q[0];
            p[1] += q[1];
            p[2] += q[2];
        }
        (img, stats)
    }

    /// Direct (emission plus one scattering event) and indirect components;
    /// with matching options their sum is the `trace_image` estimate.
    pub fn split_direct_indirect(
        &self,
        camera: &Camera,
        width: usize,
        height: usize,
        opts: TraceOptions,
    ) -> (RadianceImage, RadianceImage) {
        let (direct, indirect, _) = self.render(camera, width, height, opts, true);
        (direct, indirect)
    }

    fn render(
        &self,
        camera: &Camera,
        width: usize,
        height: usize,
        opts: TraceOptions,
        split: bool,
    ) -> (RadianceImage, RadianceImage, TraceStats) {
        assert!(opts.spp >= 1, "spp must be >= 1");
        let mut direct = RadianceImage::new(width, height);
        let mut indirect = RadianceImage::new(width, height);
        let nan_rejects = AtomicU64::new(0);

        let dpx: Vec<&mut [[f32; 3]]> = direct.pixels.chunks_mut(width).collect();
        let ipx: Vec<&mut [[f32; 3]]> = indirect.pixels.chunks_mut(width).collect();
        dpx.into_par_iter()
            .zip(ipx.into_par_iter())
            .enumerate()
            .for_each(|(y, (drow, irow))| {
                for x in 0..width {
                    let mut acc_d = [0f64; 3];
                    let mut acc_i = [0f64; 3];
                    for s in 0..opts.spp {
                        let (d, i) =
                            self.sample_pixel(camera, x, y, width, height, s, &opts, &nan_rejects);
                        for c in 0..3 {
                            acc_d[c] += d[c] as f64;
                            acc_i[c] += i[c] as f64;
                        }
                    }
                    let inv = 1.0 / opts.spp as f64;
                    drow[x] = [
                        (acc_d[0] * inv) as f32,
                        (acc_d[1] * inv) as f32,
                        (acc_d[2] * inv) as f32,
                    ];
                    irow[x] = [
                        (acc_i[0] * inv) as f32,
                        (acc_i[1] * inv) as f32,
                        (acc_i[2] * inv) as f32,
                    ];
                }
            });

        if !split {
            // Callers combining the two halves get them already summed by
            // trace_image; nothing extra here.
        }
        (
            direct,
            indirect,
            TraceStats {
                nan_rejects: nan_rejects.load(Ordering::Relaxed),
            },
        )
    }

    fn sample_pixel(
        &self,
        camera: &Camera,
        x: usize,
        y: usize,
        width: usize,
        height: usize,
        sample: u32,
        opts: &TraceOptions,
        nan_rejects: &AtomicU64,
    ) -> (Vec3, Vec3) {
        // Re-draw non-finite samples with a fresh stream, keeping a counter.
        for attempt in 0u64..16 {
            let mut rng = SplitMix64::new(hash64(&[
                opts.seed,
                x as u64,
                y as u64,
                sample as u64,
                attempt,
            ]));
            let jx = rng.next_f32();
            let jy = rng.next_f32();
            let ray = camera.primary_ray(x as f32 + jx, y as f32 + jy, width, height);
            let (d, i) = self.sample_path(ray, &mut rng, opts.max_depth);
            if d.is_finite() && i.is_finite() {
                return (d, i);
            }
            nan_rejects.fetch_add(1, Ordering::Relaxed);
        }
        (Vec3::ZERO, Vec3::ZERO)
    }

    /// One path sample, returning (direct, indirect) radiance.
    fn sample_path(&self, mut ray: Ray, rng: &mut SplitMix64, max_depth: u32) -> (Vec3, Vec3) {
        let scene = self.scene;
        let mut direct = Vec3::ZERO;
        let mut indirect = Vec3::ZERO;
        let mut throughput = Vec3::ONE;
        let mut depth = 0u32;
        let mut crossings = 0u32;

        loop {
            let hit = match self.bvh.nearest_hit(&scene.triangles, &ray, T_MIN, f32::INFINITY) {
                Some(h) => h,
                None => {
                    let contribution = throughput * scene.background;
                    if depth == 0 {
                        direct += contribution;
                    } else {
                        indirect += contribution;
                    }
                    break;
                }
            };
            let tri = &scene.triangles[hit.triangle as usize];
            let mat = scene.material(tri.material);
            let hit_pos = ray.at(hit.t);
            let raw_normal = tri.shading_normal(hit.u, hit.v);

            if mat.transparent {
                if rng.next_f32() >= mat.alpha {
                    // Straight transmission through the thin sheet.
                    throughput *= mat.tint;
                    crossings += 1;
                    if crossings > MAX_TRANSPARENT_CROSSINGS {
                        break;
                    }
                    ray = Ray::new(hit_pos + ray.dir * T_MIN, ray.dir);
                    continue;
                }
                // Otherwise interact with the surface like any other.
            }

            let wo = -ray.dir;
            if mat.emission.max_element() > 0.0 {
                let is_light_geometry = (tri.material as usize) >= scene.light_material_start;
                let front = raw_normal.dot(wo) > 0.0;
                if depth == 0 {
                    if !is_light_geometry || front {
                        direct += throughput * mat.emission;
                    }
                } else if !is_light_geometry {
                    // Emissive user objects are not light-sampled, so hitting
                    // one along a bounce is their only contribution path.
                    indirect += throughput * mat.emission;
                }
                // Light geometry at depth > 0 is covered by light sampling.
            }

            // Shading frame: the geometric normal oriented toward the
            // arriving ray fixes the surface side; the interpolated normal
            // provides smooth shading on that side, falling back to the
            // facet frame where silhouette grazing makes it inconsistent.
            let mut ng = tri.geometric_normal();
            if ng == Vec3::ZERO {
                ng = raw_normal;
            }
            if ng.dot(wo) < 0.0 {
                ng = -ng;
            }
            let mut n = raw_normal;
            if n.dot(ng) < 0.0 {
                n = -n;
            }
            if n.dot(wo) <= 1e-6 {
                n = ng;
            }
            let albedo = scene.albedo_at(tri.material, tri.uv(hit.u, hit.v));

            let nee = self.sample_lights(hit_pos, ng, n, wo, albedo, mat.roughness, rng);
            let contribution = throughput * nee;
            if depth == 0 {
                direct += contribution;
            } else {
                indirect += contribution;
            }

            depth += 1;
            if depth >= max_depth {
                break;
            }
            if depth >= RR_START_DEPTH {
                let survive = throughput.max_element().clamp(0.05, 0.95);
                if rng.next_f32() >= survive {
                    break;
                }
                throughput /= survive;
            }

            let s = match bsdf::sample(
                n,
                wo,
                albedo,
                mat.roughness,
                [rng.next_f32(), rng.next_f32(), rng.next_f32()],
            ) {
                Some(s) => s,
                None => break,
            };
            throughput *= s.weight;
            if throughput.max_element() <= 0.0 {
                break;
            }
            // Directions sampled about the interpolated normal can dip
            // below the actual facet; reflect them back above the geometric
            // surface so no path leaks into closed geometry.
            let mut wi = s.wi;
            let below = wi.dot(ng);
            if below <= 0.0 {
                wi = (wi - 2.0 * below * ng).normalize();
            }
            ray = Ray::new(hit_pos + ng * T_MIN, wi);
        }
        (direct, indirect)
    }

    /// Next-event estimation over every declared light. Shadow rays offset
    /// along the oriented geometric normal `ng`; shading uses `n`.
    fn sample_lights(
        &self,
        p: Vec3,
        ng: Vec3,
        n: Vec3,
        wo: Vec3,
        albedo: Vec3,
        roughness: f32,
        rng: &mut SplitMix64,
    ) -> Vec3 {
        let mut total = Vec3::ZERO;
        for light in &self.scene.lights {
            match light {
                ResolvedLight::Point {
                    position,
                    intensity,
                } => {
                    if intensity.max_element() <= 0.0 {
                        continue;
                    }
                    let to_light = *position - p;
                    let dist2 = to_light.length_squared();
                    if dist2 <= 1e-12 {
                        continue;
                    }
                    let dist = dist2.sqrt();
                    let wi = to_light / dist;
                    let cos_i = n.dot(wi);
                    if cos_i <= 0.0 {
                        continue;
                    }
                    let f = bsdf::eval(n, wo, wi, albedo, roughness);
                    if f == Vec3::ZERO {
                        continue;
                    }
                    let tr = self.transmittance(p, ng, *position);
                    total += f * *intensity * (cos_i / dist2) * tr;
                }
                ResolvedLight::AreaQuad { corners, radiance } => {
                    if radiance.max_element() <= 0.0 {
                        continue;
                    }
                    let (q, light_n, area) = sample_quad(corners, rng.next_f32(), rng.next_f32());
                    let to_light = q - p;
                    let dist2 = to_light.length_squared();
                    if dist2 <= 1e-12 {
                        continue;
                    }
                    let dist = dist2.sqrt();
                    let wi = to_light / dist;
                    let cos_i = n.dot(wi);
                    let cos_l = light_n.dot(-wi);
                    if cos_i <= 0.0 || cos_l <= 0.0 {
                        continue;
                    }
                    let f = bsdf::eval(n, wo, wi, albedo, roughness);
                    if f == Vec3::ZERO {
                        continue;
                    }
                    let tr = self.transmittance(p, ng, q);
                    total += f * *radiance * (cos_i * cos_l * area / dist2) * tr;
                }
            }
        }
        total
    }

    /// Visibility between a surface point and a target, attenuated by
    /// transparent sheets; zero when an opaque surface blocks.
    pub fn transmittance(&self, from: Vec3, n: Vec3, to: Vec3) -> Vec3 {
        let offset = from + n * T_MIN;
        let delta = to - offset;
        let dist = delta.length();
        if dist <= T_MIN {
            return Vec3::ONE;
        }
        let ray = Ray::new(offset, delta / dist);
        let mut tr = Vec3::ONE;
        let mut blocked = false;
        self.bvh.for_each_hit(
            &self.scene.triangles,
            &ray,
            T_MIN,
            dist * (1.0 - 1e-4),
            |hit| {
                let mat = self
                    .scene
                    .material(self.scene.triangles[hit.triangle as usize].material);
                if mat.transparent {
                    tr *= mat.tint * (1.0 - mat.alpha);
                    tr != Vec3::ZERO
                } else {
                    blocked = true;
                    false
                }
            },
        );
        if blocked {
            Vec3::ZERO
        } else {
            tr
        }
    }

    /// Nearest hit on an opaque surface through a ray, skipping transparent
    /// geometry entirely.
    pub fn nearest_opaque_hit(&self, ray: &Ray) -> Option<SurfaceHit> {
        let hit = self.bvh.nearest_hit_filtered(
            &self.scene.triangles,
            ray,
            T_MIN,
            f32::INFINITY,
            |ti| !self.scene.material(self.scene.triangles[ti as usize].material).transparent,
        )?;
        let tri = &self.scene.triangles[hit.triangle as usize];
        Some(SurfaceHit {
            t: hit.t,
            position: ray.at(hit.t),
            shading_normal: tri.shading_normal(hit.u, hit.v),
            uv: tri.uv(hit.u, hit.v),
            material: tri.material,
            object: tri.object,
        })
    }

    /// True when any transparent surface lies strictly before `t_max`.
    pub fn any_transparent_before(&self, ray: &Ray, t_max: f32) -> bool {
        let mut found = false;
        self.bvh
            .for_each_hit(&self.scene.triangles, ray, T_MIN, t_max, |hit| {
                let mat = self
                    .scene
                    .material(self.scene.triangles[hit.triangle as usize].material);
                if mat.transparent {
                    found = true;
                    false
                } else {
                    true
                }
            });
        found
    }

    /// Noise-free per-pixel transparency coverage through pixel centers.
    pub fn trace_coverage(&self, camera: &Camera, width: usize, height: usize) -> CoverageMask {
        let mut mask = CoverageMask::new(width, height);
        let rows: Vec<&mut [bool]> = mask.mask.chunks_mut(width).collect();
        rows.into_par_iter().enumerate().for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let ray = camera.primary_ray(x as f32 + 0.5, y as f32 + 0.5, width, height);
                let t_opaque = self
                    .nearest_opaque_hit(&ray)
                    .map(|h| h.t)
                    .unwrap_or(f32::INFINITY);
                *out = self.any_transparent_before(&ray, t_opaque);
            }
        });
        mask
    }

    /// All transparent-surface crossings of a ray before the first opaque
    /// hit, sorted by (distance, object id). Used by depth peeling.
    pub fn transparent_crossings(&self, ray: &Ray) -> Vec<SurfaceHit> {
        let t_opaque = self
            .nearest_opaque_hit(ray)
            .map(|h| h.t)
            .unwrap_or(f32::INFINITY);
        let mut out = Vec::new();
        self.bvh
            .for_each_hit(&self.scene.triangles, ray, T_MIN, t_opaque, |hit| {
                let tri = &self.scene.triangles[hit.triangle as usize];
                if self.scene.material(tri.material).transparent {
                    out.push(SurfaceHit {
                        t: hit.t,
                        position: ray.at(hit.t),
                        shading_normal: tri.shading_normal(hit.u, hit.v),
                        uv: tri.uv(hit.u, hit.v),
                        material: tri.material,
                        object: tri.object,
                    });
                }
                true
            });
        out.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.object.cmp(&b.object)));
        out
    }
}

/// Uniform point on a planar quad (split into two triangles, picked by
/// area). Returns the point, the quad normal, and the total area.
fn sample_quad(corners: &[Vec3; 4], u1: f32, u2: f32) -> (Vec3, Vec3, f32) {
    let [c0, c1, c2, c3] = *corners;
    let a0 = 0.5 * (c1 - c0).cross(c2 - c0).length();
    let a1 = 0.5 * (c2 - c0).cross(c3 - c0).length();
    let area = a0 + a1;
    let n = (c1 - c0).cross(c2 - c0).normalize_or_zero();
    let pick_first = u1 * area < a0;
    let (va, vb, vc, mut s) = if pick_first {
        (c0, c1, c2, u1 * area / a0.max(1e-12))
    } else {
        (c0, c2, c3, (u1 * area - a0) / a1.max(1e-12))
    };
    s = s.clamp(0.0, 1.0);
    // Uniform barycentric from (s, u2).
    let su = s.sqrt();
    let b0 = 1.0 - su;
    let b1 = u2 * su;
    let q = va * b0 + vb * b1 + vc * (1.0 - b0 - b1);
    (q, n, area)
}

/// Convenience wrappers resolving a [`SceneInstance`] per call. Loops that
/// render many images from one instance should build a [`Tracer`] once.
pub fn trace_image(
    instance: &SceneInstance,
    width: usize,
    height: usize,
    spp: u32,
    seed: u64,
) -> RadianceImage {
    let scene = instance.resolve();
    let camera = Camera::new(&instance.camera);
    Tracer::new(&scene).trace_image(
        &camera,
        width,
        height,
        TraceOptions {
            spp,
            seed,
            ..TraceOptions::default()
        },
    )
}

pub fn trace_coverage(instance: &SceneInstance, width: usize, height: usize) -> CoverageMask {
    let scene = instance.resolve();
    let camera = Camera::new(&instance.camera);
    Tracer::new(&scene).trace_coverage(&camera, width, height)
}

pub fn split_direct_indirect(
    instance: &SceneInstance,
    width: usize,
    height: usize,
    spp: u32,
    seed: u64,
) -> (RadianceImage, RadianceImage) {
    let scene = instance.resolve();
    let camera = Camera::new(&instance.camera);
    Tracer::new(&scene).split_direct_indirect(
        &camera,
        width,
        height,
        TraceOptions {
            spp,
            seed,
            ..TraceOptions::default()
        },
    )
}
