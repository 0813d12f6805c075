//! Classical transparency compositing references: exact sorted alpha
//! blending, an order-dependent unsorted compositor, and depth peeling.
//!
//! Layers are indexed front to back: layer i is weighted by the
//! transmittance of everything strictly in front of it, and an explicit
//! background term closes the sum. Depth ties break by object id, which
//! makes compositing a total order and keeps every routine deterministic.

use glam::Vec3;
use rayon::prelude::*;
use thiserror::Error;

use crate::camera::Camera;
use crate::image::RadianceImage;
use crate::pathtrace::Tracer;
use crate::scene::SceneInstance;

#[derive(Debug, Error)]
pub enum OitError {
    #[error("pixel {pixel}: permutation has {got} entries for {expected} layers")]
    BadPermutation {
        pixel: usize,
        expected: usize,
        got: usize,
    },
    #[error("pixel {pixel}: permutation is not a bijection")]
    NotBijective { pixel: usize },
}

/// One transparent fragment: color, opacity, camera-space depth, and the
/// owning object id used to break depth ties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FragmentLayer {
    pub color: Vec3,
    pub alpha: f32,
    pub depth: f32,
    pub object: u32,
}

/// Per-pixel fragment lists over a single background color.
#[derive(Debug, Clone)]
pub struct LayerStack {
    pub width: usize,
    pub height: usize,
    pub layers: Vec<Vec<FragmentLayer>>,
    pub background: Vec3,
}

impl LayerStack {
    pub fn new(width: usize, height: usize, background: Vec3) -> Self {
        Self {
            width,
            height,
            layers: vec![Vec::new(); width * height],
            background,
        }
    }

    pub fn max_layers(&self) -> usize {
        self.layers.iter().map(Vec::len).max().unwrap_or(0)
    }
}

fn over_front_to_back(layers: impl Iterator<Item = FragmentLayer>, background: Vec3) -> Vec3 {
    let mut out = Vec3::ZERO;
    let mut transmittance = 1.0f32;
    for layer in layers {
        out += layer.color * (layer.alpha * transmittance);
        transmittance *= 1.0 - layer.alpha;
    }
    out + background * transmittance
}

/// Sorted alpha blending: layers are ordered by (depth, object id) front to
/// back, so the result is invariant to the stored order.
pub fn composite_sorted(stack: &LayerStack) -> RadianceImage {
    let mut img = RadianceImage::new(stack.width, stack.height);
    img.pixels
        .par_iter_mut()
        .zip(&stack.layers)
        .for_each(|(px, layers)| {
            let mut sorted: Vec<&FragmentLayer> = layers.iter().collect();
            sorted.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.object.cmp(&b.object)));
            *px = over_front_to_back(sorted.into_iter().copied(), stack.background).to_array();
        });
    img
}

/// Apply the over operator in the caller-provided per-pixel order (treated
/// as front to back) without sorting. This is the order-dependent operation
/// the neural blender replaces.
pub fn composite_unsorted(
    stack: &LayerStack,
    order: &[Vec<u32>],
) -> Result<RadianceImage, OitError> {
    if order.len() != stack.layers.len() {
        return Err(OitError::BadPermutation {
            pixel: 0,
            expected: stack.layers.len(),
            got: order.len(),
        });
    }
    for (pixel, (layers, perm)) in stack.layers.iter().zip(order).enumerate() {
        if perm.len() != layers.len() {
            return Err(OitError::BadPermutation {
                pixel,
                expected: layers.len(),
                got: perm.len(),
            });
        }
        let mut seen = vec![false; layers.len()];
        for &i in perm {
            if (i as usize) >= layers.len() || seen[i as usize] {
                return Err(OitError::NotBijective { pixel });
            }
            seen[i as usize] = true;
        }
    }
    let mut img = RadianceImage::new(stack.width, stack.height);
    img.pixels
        .par_iter_mut()
        .zip(stack.layers.par_iter().zip(order))
        .for_each(|(px, (layers, perm))| {
            *px = over_front_to_back(
                perm.iter().map(|&i| layers[i as usize]),
                stack.background,
            )
            .to_array();
        });
    Ok(img)
}

/// The per-pixel permutation that preserves stored order.
pub fn identity_order(stack: &LayerStack) -> Vec<Vec<u32>> {
    stack
        .layers
        .iter()
        .map(|l| (0..l.len() as u32).collect())
        .collect()
}

/// The per-pixel permutation that reverses stored order.
pub fn reversed_order(stack: &LayerStack) -> Vec<Vec<u32>> {
    stack
        .layers
        .iter()
        .map(|l| (0..l.len() as u32).rev().collect())
        .collect()
}

/// Multi-pass depth peeling through primary rays: pass k extracts, per
/// pixel, the k-th nearest transparent fragment (ordered by depth, then
/// object id, mirroring GPU peeling with a strictly-greater depth test).
/// Stops early once a pass extracts nothing. Layers come out front to back
/// by construction. Fragment color is the surface albedo at the hit.
pub fn depth_peel(
    instance: &SceneInstance,
    width: usize,
    height: usize,
    max_peels: usize,
) -> LayerStack {
    assert!(max_peels >= 1, "max_peels must be >= 1");
    let scene = instance.resolve();
    let camera = Camera::new(&instance.camera);
    let tracer = Tracer::new(&scene);

    let mut stack = LayerStack::new(width, height, scene.background);
    // (depth, object) floor of the previous pass per pixel.
    let mut floor: Vec<Option<(f32, u32)>> = vec![Some((0.0, 0)); width * height];

    for pass in 0..max_peels {
        let extracted: Vec<Option<FragmentLayer>> = floor
            .par_iter()
            .enumerate()
            .map(|(i, prev)| {
                let prev = (*prev)?;
                let x = i % width;
                let y = i / width;
                let ray = camera.primary_ray(x as f32 + 0.5, y as f32 + 0.5, width, height);
                let crossings = tracer.transparent_crossings(&ray);
                let next = crossings.into_iter().find(|h| {
                    if pass == 0 {
                        true
                    } else {
                        (h.t, h.object) > (prev.0, prev.1)
                    }
                })?;
                let mat = scene.material(next.material);
                Some(FragmentLayer {
                    color: scene.albedo_at(next.material, next.uv),
                    alpha: mat.alpha,
                    depth: next.t,
                    object: next.object,
                })
            })
            .collect();

        let mut any = false;
        for (i, frag) in extracted.into_iter().enumerate() {
            match frag {
                Some(f) => {
                    any = true;
                    floor[i] = Some((f.depth, f.object));
                    stack.layers[i].push(f);
                }
                None => floor[i] = None,
            }
        }
        if !any {
            break;
        }
    }
    stack
}
