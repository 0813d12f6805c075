//! Shared helpers for integration tests: the central finite-difference
//! gradient oracle and small scene builders.

#![allow(dead_code)]

use std::f32::consts::PI;
use std::sync::Arc;

use glam::{Mat4, Vec3};
use glassbuf_core::autodiff::{Tape, Tensor, Var};
use glassbuf_core::rng::SplitMix64;
use glassbuf_core::scene::{
    Albedo, CameraPose, CameraRanges, Light, Material, Mesh, Object, RangeBox, Scene,
    SceneInstance,
};

/// Central finite differences (h = 1e-3) against tape gradients for the
/// graph built by `build` over the given leaf inputs. Probes up to
/// `max_probes` elements per input (0 probes all) and returns the maximum
/// relative error max(|fd - analytic|) / max(|fd|, |analytic|, 1).
pub fn finite_diff_check(
    inputs: &[Tensor],
    build: impl Fn(&Tape, &[Var]) -> Var,
    max_probes: usize,
    seed: u64,
) -> f64 {
    const H: f64 = 1e-3;

    // Analytic gradients.
    let tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone(), true))
        .collect();
    let loss = build(&tape, &vars);
    assert_eq!(tape.shape_of(loss), vec![1], "loss must be scalar");
    tape.backward(loss).expect("backward");
    let grads: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            tape.grad_of(*v)
                .unwrap_or_else(|| Tensor::zeros(t.shape()))
        })
        .collect();

    let eval = |perturbed: &[Tensor]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var> = perturbed
            .iter()
            .map(|t| tape.leaf(t.clone(), false))
            .collect();
        let loss = build(&tape, &vars);
        tape.value_of(loss).data()[0] as f64
    };

    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        let n = input.len();
        let probes: Vec<usize> = if max_probes == 0 || max_probes >= n {
            (0..n).collect()
        } else {
            (0..max_probes)
                .map(|_| rng.next_below(n as u64) as usize)
                .collect()
        };
        for j in probes {
            let mut plus: Vec<Tensor> = inputs.to_vec();
            plus[i].data_mut()[j] += H as f32;
            let mut minus: Vec<Tensor> = inputs.to_vec();
            minus[i].data_mut()[j] -= H as f32;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * H);
            let analytic = grads[i].data()[j] as f64;
            let err = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1.0);
            if err > worst {
                worst = err;
            }
        }
    }
    worst
}

pub fn rand_tensor(shape: &[usize], seed: u64, lo: f32, hi: f32) -> Tensor {
    let mut rng = SplitMix64::new(seed);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.uniform_f32(lo, hi)).collect())
}

/// Random tensor bounded away from zero (for kink-free abs/div probes).
pub fn rand_tensor_away_from_zero(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = SplitMix64::new(seed);
    let n: usize = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n)
            .map(|_| {
                let v = rng.uniform_f32(0.05, 1.0);
                if rng.next_f32() < 0.5 {
                    -v
                } else {
                    v
                }
            })
            .collect(),
    )
}

// ---------------------------------------------------------------------
// Scene builders
// ---------------------------------------------------------------------

pub fn opaque_object(name: &str, mesh: Mesh, albedo: [f32; 3], transform: Mat4) -> Object {
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

pub fn glass_object(
    name: &str,
    mesh: Mesh,
    alpha: f32,
    tint: [f32; 3],
    transform: Mat4,
) -> Object {
    Object {
        name: name.into(),
        mesh,
        material: Material {
            albedo: Albedo::Color(Vec3::new(0.6, 0.7, 0.9)),
            alpha,
            tint: Vec3::from(tint),
            ..Material::default()
        },
        transparent: true,
        transform,
    }
}

pub fn fixed_camera_scene(objects: Vec<Object>, lights: Vec<Light>, background: [f32; 3]) -> Scene {
    Scene {
        objects,
        lights,
        camera_ranges: CameraRanges {
            position: RangeBox {
                min: Vec3::new(0.0, 0.0, -3.0),
                max: Vec3::new(0.0, 0.0, -3.0),
            },
            look_at: RangeBox {
                min: Vec3::ZERO,
                max: Vec3::ZERO,
            },
            fov_degrees: (45.0, 45.0),
        },
        variables: vec![],
        background: Vec3::from(background),
        textures: vec![],
    }
}

pub fn instance_at(scene: Scene, position: Vec3, look_at: Vec3, fov: f32) -> SceneInstance {
    SceneInstance {
        scene: Arc::new(scene),
        camera: CameraPose {
            position,
            look_at,
            up: Vec3::Y,
            fov_degrees: fov,
        },
        variable_values: vec![],
        seed: 0,
    }
}

pub fn zero_point_light() -> Light {
    Light::Point {
        position: Vec3::new(0.0, 5.0, 0.0),
        intensity: Vec3::ZERO,
    }
}

/// Quad facing the -Z camera at depth `z` (rotated to face the origin side).
pub fn facing_quad(name: &str, half: f32, z: f32, alpha: f32) -> Object {
    glass_object(
        name,
        glassbuf_core::scene::fixtures::quad_mesh(half, half),
        alpha,
        [1.0, 1.0, 1.0],
        Mat4::from_translation(Vec3::new(0.0, 0.0, z)) * Mat4::from_rotation_y(PI),
    )
}

// ---------------------------------------------------------------------
// Classical-compositing oracles
// ---------------------------------------------------------------------

use glassbuf_core::camera::Camera;
use glassbuf_core::oit::{FragmentLayer, LayerStack};

/// Collect every transparent crossing before the first opaque hit by
/// looping over all triangles directly (no BVH, no peeling loop), sorted by
/// (depth, object id). Shares only the triangle intersection formula with
/// the implementation it checks.
pub fn gather_layers(instance: &SceneInstance, width: usize, height: usize) -> LayerStack {
    let scene = instance.resolve();
    let camera = Camera::new(&instance.camera);
    let mut stack = LayerStack::new(width, height, scene.background);
    for y in 0..height {
        for x in 0..width {
            let ray = camera.primary_ray(x as f32 + 0.5, y as f32 + 0.5, width, height);
            let mut t_opaque = f32::INFINITY;
            for tri in &scene.triangles {
                if !scene.material(tri.material).transparent {
                    if let Some((t, _, _)) = tri.intersect(&ray, 1e-4, t_opaque) {
                        t_opaque = t;
                    }
                }
            }
            let mut frags = Vec::new();
            for tri in &scene.triangles {
                let mat = scene.material(tri.material);
                if !mat.transparent {
                    continue;
                }
                if let Some((t, u, v)) = tri.intersect(&ray, 1e-4, t_opaque) {
                    let uv = tri.uv(u, v);
                    frags.push(FragmentLayer {
                        color: scene.albedo_at(tri.material, uv),
                        alpha: mat.alpha,
                        depth: t,
                        object: tri.object,
                    });
                }
            }
            frags.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.object.cmp(&b.object)));
            stack.layers[y * width + x] = frags;
        }
    }
    stack
}

/// Randomized stack of tilted transparent sheets over an opaque backdrop.
pub fn random_sheet_scene(seed: u64, sheet_count: usize) -> SceneInstance {
    use glassbuf_core::scene::fixtures::quad_mesh;
    let mut rng = SplitMix64::new(seed);
    let mut objects = vec![opaque_object(
        "backdrop",
        quad_mesh(8.0, 8.0),
        [0.4, 0.4, 0.45],
        Mat4::from_translation(Vec3::new(0.0, 0.0, 6.0)) * Mat4::from_rotation_y(PI),
    )];
    for i in 0..sheet_count {
        let z = rng.uniform_f32(-0.5, 4.5);
        let x = rng.uniform_f32(-0.8, 0.8);
        let y = rng.uniform_f32(-0.6, 0.6);
        let tilt = rng.uniform_f32(-0.5, 0.5);
        let mut obj = glass_object(
            &format!("sheet{i}"),
            quad_mesh(rng.uniform_f32(0.5, 1.8), rng.uniform_f32(0.5, 1.5)),
            rng.uniform_f32(0.1, 0.95),
            [1.0, 1.0, 1.0],
            Mat4::from_translation(Vec3::new(x, y, z))
                * Mat4::from_rotation_y(PI + tilt)
                * Mat4::from_rotation_x(rng.uniform_f32(-0.4, 0.4)),
        );
        obj.material.albedo = Albedo::Color(Vec3::new(
            rng.next_f32(),
            rng.next_f32(),
            rng.next_f32(),
        ));
        objects.push(obj);
    }
    let scene = fixed_camera_scene(objects, vec![zero_point_light()], [0.1, 0.1, 0.12]);
    instance_at(scene, Vec3::new(0.0, 0.0, -3.0), Vec3::ZERO, 48.0)
}

// ---------------------------------------------------------------------
// Metric oracles (direct reimplementations)
// ---------------------------------------------------------------------

use glassbuf_core::image::{CoverageMask, RadianceImage};

pub fn oracle_mae(a: &RadianceImage, b: &RadianceImage) -> f64 {
    let mut sum = 0.0;
    let mut n = 0.0;
    for (pa, pb) in a.pixels.iter().zip(&b.pixels) {
        for c in 0..3 {
            sum += (pa[c] as f64 - pb[c] as f64).abs();
            n += 1.0;
        }
    }
    sum / n
}

pub fn oracle_psnr(a: &RadianceImage, b: &RadianceImage) -> f64 {
    let mut sum = 0.0;
    let mut n = 0.0;
    for (pa, pb) in a.pixels.iter().zip(&b.pixels) {
        for c in 0..3 {
            let d = pa[c].clamp(0.0, 1.0) as f64 - pb[c].clamp(0.0, 1.0) as f64;
            sum += d * d;
            n += 1.0;
        }
    }
    let mse = sum / n;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (1.0 / mse.sqrt()).log10()
    }
}

pub fn oracle_masked_mae(a: &RadianceImage, b: &RadianceImage, m: &CoverageMask) -> f64 {
    let mut sum = 0.0;
    let mut n = 0.0;
    for ((pa, pb), &covered) in a.pixels.iter().zip(&b.pixels).zip(&m.mask) {
        if covered {
            for c in 0..3 {
                sum += (pa[c] as f64 - pb[c] as f64).abs();
                n += 1.0;
            }
        }
    }
    if n == 0.0 {
        0.0
    } else {
        sum / n
    }
}

pub fn oracle_masked_psnr(a: &RadianceImage, b: &RadianceImage, m: &CoverageMask) -> f64 {
    let mut sum = 0.0;
    let mut n = 0.0;
    for ((pa, pb), &covered) in a.pixels.iter().zip(&b.pixels).zip(&m.mask) {
        if covered {
            for c in 0..3 {
                let d = pa[c].clamp(0.0, 1.0) as f64 - pb[c].clamp(0.0, 1.0) as f64;
                sum += d * d;
                n += 1.0;
            }
        }
    }
    if n == 0.0 || sum == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (n / sum).log10()
}

/// Direct windowed SSIM distance: explicit 11x11 loops per valid center.
pub fn oracle_dssim(a: &RadianceImage, b: &RadianceImage) -> f64 {
    let sigma = 1.5f64;
    let mut kernel = [[0.0f64; 11]; 11];
    let mut ksum = 0.0;
    for (ky, row) in kernel.iter_mut().enumerate() {
        for (kx, v) in row.iter_mut().enumerate() {
            let dy = ky as f64 - 5.0;
            let dx = kx as f64 - 5.0;
            *v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            ksum += *v;
        }
    }
    for row in kernel.iter_mut() {
        for v in row.iter_mut() {
            *v /= ksum;
        }
    }

    let (w, h) = (a.width, a.height);
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..3 {
        for y in 5..h - 5 {
            for x in 5..w - 5 {
                let mut mu_a = 0.0;
                let mut mu_b = 0.0;
                let mut aa = 0.0;
                let mut bb = 0.0;
                let mut ab = 0.0;
                for ky in 0..11 {
                    for kx in 0..11 {
                        let kw = kernel[ky][kx];
                        let va = a.pixel(x + kx - 5, y + ky - 5)[c].clamp(0.0, 1.0) as f64;
                        let vb = b.pixel(x + kx - 5, y + ky - 5)[c].clamp(0.0, 1.0) as f64;
                        mu_a += kw * va;
                        mu_b += kw * vb;
                        aa += kw * va * va;
                        bb += kw * vb * vb;
                        ab += kw * va * vb;
                    }
                }
                let va = aa - mu_a * mu_a;
                let vb = bb - mu_b * mu_b;
                let cov = ab - mu_a * mu_b;
                let (c1, c2) = (1e-4, 9e-4);
                let s = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
                total += s;
                count += 1;
            }
        }
    }
    (1.0 - total / count as f64) / 2.0
}

pub fn random_radiance_image(w: usize, h: usize, seed: u64, lo: f32, hi: f32) -> RadianceImage {
    let mut rng = SplitMix64::new(seed);
    let mut img = RadianceImage::new(w, h);
    for px in &mut img.pixels {
        *px = [
            rng.uniform_f32(lo, hi),
            rng.uniform_f32(lo, hi),
            rng.uniform_f32(lo, hi),
        ];
    }
    img
}

pub fn random_coverage_mask(w: usize, h: usize, seed: u64) -> CoverageMask {
    let mut rng = SplitMix64::new(seed);
    let mut m = CoverageMask::new(w, h);
    for v in &mut m.mask {
        *v = rng.next_f32() < 0.5;
    }
    m
}
