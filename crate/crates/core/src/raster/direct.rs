//! Analytic direct-lighting channels for the G-buffer.
//!
//! Point lights get a full diffuse + GGX evaluation with a transmittance
//! shadow ray. Area lights use the closed-form unshadowed irradiance of a
//! polygonal source on the diffuse lobe, gated by a single shadow ray to
//! the light centroid. Visible emitters contribute their emission, so the
//! channel plays the role of the direct image an approximate real-time
//! pipeline would provide.

use std::f32::consts::PI;

use glam::Vec3;
use rayon::prelude::*;

use super::GBuffer;
use crate::pathtrace::{bsdf_eval, Tracer};
use crate::scene::{RenderScene, ResolvedLight};

/// Fill `gbuffer.l_d` from its geometry channels. `material_ids` is the
/// per-pixel material plane produced by the opaque pass (`u32::MAX` on
/// background).
pub fn compute_direct_lighting(
    gbuffer: &mut GBuffer,
    material_ids: &[u32],
    scene: &RenderScene,
    tracer: &Tracer,
) {
    let width = gbuffer.width;
    let normal = &gbuffer.normal;
    let position = &gbuffer.position;
    let omega_o = &gbuffer.omega_o;
    let albedo = &gbuffer.albedo;
    let roughness = &gbuffer.roughness;
    let depth = &gbuffer.depth;

    gbuffer
        .l_d
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let i = y * width + x;
                if depth[i] >= 1.0 || material_ids[i] == u32::MAX {
                    continue;
                }
                let p = Vec3::from(position[i]);
                let raw_n = Vec3::from(normal[i]);
                let wo = Vec3::from(omega_o[i]);
                let n = if raw_n.dot(wo) < 0.0 { -raw_n } else { raw_n };

                let mut l = shade_point(
                    scene,
                    tracer,
                    p,
                    n,
                    wo,
                    Vec3::from(albedo[i]),
                    roughness[i],
                );
                let mat = scene.material(material_ids[i]);
                if mat.emission.max_element() > 0.0 && raw_n.dot(wo) > 0.0 {
                    l += mat.emission;
                }
                *out = l.to_array();
            }
        });
}

fn shade_point(
    scene: &RenderScene,
    tracer: &Tracer,
    p: Vec3,
    n: Vec3,
    wo: Vec3,
    albedo: Vec3,
    roughness: f32,
) -> Vec3 {
    let mut total = Vec3::ZERO;
    for light in &scene.lights {
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
                let wi = to_light / dist2.sqrt();
                let cos_i = n.dot(wi);
                if cos_i <= 0.0 {
                    continue;
                }
                let f = bsdf_eval(n, wo, wi, albedo, roughness);
                let tr = tracer.transmittance(p, n, *position);
                total += f * *intensity * (cos_i / dist2) * tr;
            }
            ResolvedLight::AreaQuad { corners, radiance } => {
                if radiance.max_element() <= 0.0 {
                    continue;
                }
                let centroid = (corners[0] + corners[1] + corners[2] + corners[3]) * 0.25;
                let light_n = (corners[1] - corners[0])
                    .cross(corners[2] - corners[0])
                    .normalize_or_zero();
                // Emitting face must point toward the shading point.
                if light_n.dot(p - centroid) <= 0.0 {
                    continue;
                }
                let e = polygon_irradiance(corners, p, n);
                if e <= 0.0 {
                    continue;
                }
                let tr = tracer.transmittance(p, n, centroid);
                // Diffuse lobe only; the weight matches the path tracer's
                // roughness-blended BRDF.
                total += albedo * (roughness / PI) * e * *radiance * tr;
            }
        }
    }
    total
}

/// Closed-form irradiance at `p` (normal `n`) from a fully visible planar
/// polygon of unit radiance: E = 1/2 |sum_i theta_i (d_i x d_{i+1})| . n
/// over the contour directions d_i. Below-horizon results clamp to zero.
fn polygon_irradiance(corners: &[Vec3; 4], p: Vec3, n: Vec3) -> f32 {
    let d = corners.map(|c| (c - p).normalize_or_zero());
    let mut sum = 0.0f32;
    for i in 0..4 {
        let a = d[i];
        let b = d[(i + 1) % 4];
        let cross = a.cross(b);
        let len = cross.length();
        if len < 1e-9 {
            continue;
        }
        let theta = a.dot(b).clamp(-1.0, 1.0).acos();
        sum += theta * (cross / len).dot(n);
    }
    (0.5 * sum.abs()).min(PI)
}
