//! The neural renderer: scene encoder F, permutation-invariant transparency
//! accumulation (shared network h summed over buffers), blending network B,
//! rendering head R, and the 2x supersampler S.
//!
//! The transparency stage is a plain sum over per-buffer features, so the
//! result cannot depend on buffer order. Inference streams the buffers one
//! at a time into a 64-bit accumulator: only the current encoded buffer,
//! its contribution, and the running sum are alive, independent of how
//! many transparent objects the scene has.

mod checkpoint;
mod unet;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CheckpointMeta};
pub use unet::{register_unet, unet_eager, unet_forward, UNetParams, UNetVars};

use serde::{Deserialize, Serialize};

use crate::autodiff::{alloc, eager, AutodiffError, Tape, Tensor, Var};
use crate::image::RadianceImage;
use crate::raster::{BufferStack, GBuffer, TransparencyBuffer, BUFFER_CHANNELS};
use crate::rng::hash64;

pub const LEAKY_SLOPE: f32 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlassNetConfig {
    /// Positional-encoding frequency count.
    pub l_pe: usize,
    /// Feed raw channels instead of encoded ones when false.
    pub positional_encoding: bool,
    /// The Naive baseline sets this false: transparency buffers are ignored
    /// and the blender sees a zero transparency representation.
    pub transparency_buffers: bool,
    /// U-Net base width for F and B (doubles per level).
    pub unet_width: usize,
    /// Width of the shared transparency network h.
    pub h_width: usize,
    pub c_sigma: usize,
    pub c_tau: usize,
    pub c_phi: usize,
    /// Weight-initialization seed.
    pub seed: u64,
}

impl Default for GlassNetConfig {
    fn default() -> Self {
        Self {
            l_pe: 2,
            positional_encoding: true,
            transparency_buffers: true,
            unet_width: 16,
            h_width: 32,
            c_sigma: 32,
            c_tau: 32,
            c_phi: 32,
            seed: 0,
        }
    }
}

impl GlassNetConfig {
    /// Channels of one encoded buffer: c * (2 * l_pe + 1).
    pub fn encoded_channels(&self) -> usize {
        if self.positional_encoding {
            BUFFER_CHANNELS * (2 * self.l_pe + 1)
        } else {
            BUFFER_CHANNELS
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvParams {
    pub w: Tensor,
    pub b: Tensor,
}

impl ConvParams {
    pub fn init(ci: usize, co: usize, k: usize, seed: u64) -> Self {
        Self {
            w: Tensor::he_uniform(&[co, ci, k, k], ci * k * k, seed),
            b: Tensor::zeros(&[co]),
        }
    }
}

/// All learnable weights. Serialization order is the order returned by
/// [`GlassNetParams::named_tensors`].
#[derive(Debug, Clone)]
pub struct GlassNetParams {
    pub config: GlassNetConfig,
    pub f: UNetParams,
    pub h: Vec<ConvParams>,
    pub b: UNetParams,
    pub r: Vec<ConvParams>,
    pub s: Vec<ConvParams>,
}

impl GlassNetParams {
    pub fn init(config: GlassNetConfig) -> Self {
        let enc = config.encoded_channels();
        let seed = |tag: u64, i: usize| hash64(&[config.seed, tag, i as u64]);
        let f = UNetParams::init(enc, config.unet_width, config.c_sigma, seed(1, 0));
        let h_in = enc + config.c_sigma;
        let h = vec![
            ConvParams::init(h_in, config.h_width, 3, seed(2, 0)),
            ConvParams::init(config.h_width, config.h_width, 3, seed(2, 1)),
            ConvParams::init(config.h_width, config.c_tau, 3, seed(2, 2)),
        ];
        let b = UNetParams::init(
            config.c_sigma + config.c_tau,
            config.unet_width,
            config.c_phi,
            seed(3, 0),
        );
        let r = vec![
            ConvParams::init(config.c_phi + 3, 32, 3, seed(4, 0)),
            ConvParams::init(32, 32, 1, seed(4, 1)),
            ConvParams::init(32, 16, 1, seed(4, 2)),
            ConvParams::init(16, 3, 1, seed(4, 3)),
        ];
        // Supersampler input: nearest-upsampled RGB plus the hi-res G-buffer.
        let s = vec![
            ConvParams::init(3 + BUFFER_CHANNELS, 16, 3, seed(5, 0)),
            ConvParams::init(16, 16, 3, seed(5, 1)),
            ConvParams::init(16, 3, 1, seed(5, 2)),
        ];
        Self {
            config,
            f,
            h,
            b,
            r,
            s,
        }
    }

    /// Stable (name, tensor) listing that fixes checkpoint blob order,
    /// optimizer slot order, and gradient merge order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (name, c) in self.f.layers() {
            out.push((format!("f.{name}.w"), &c.w));
            out.push((format!("f.{name}.b"), &c.b));
        }
        for (i, c) in self.h.iter().enumerate() {
            out.push((format!("h{i}.w"), &c.w));
            out.push((format!("h{i}.b"), &c.b));
        }
        for (name, c) in self.b.layers() {
            out.push((format!("b.{name}.w"), &c.w));
            out.push((format!("b.{name}.b"), &c.b));
        }
        for (i, c) in self.r.iter().enumerate() {
            out.push((format!("r{i}.w"), &c.w));
            out.push((format!("r{i}.b"), &c.b));
        }
        for (i, c) in self.s.iter().enumerate() {
            out.push((format!("s{i}.w"), &c.w));
            out.push((format!("s{i}.b"), &c.b));
        }
        out
    }

    /// Mutable tensors in the same order as [`GlassNetParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        macro_rules! push_conv {
            ($c:expr) => {{
                out.push(&mut $c.w);
                out.push(&mut $c.b);
            }};
        }
        push_conv!(self.f.enc1a);
        push_conv!(self.f.enc1b);
        push_conv!(self.f.enc2a);
        push_conv!(self.f.enc2b);
        push_conv!(self.f.mid_a);
        push_conv!(self.f.mid_b);
        push_conv!(self.f.dec2a);
        push_conv!(self.f.dec2b);
        push_conv!(self.f.dec1a);
        push_conv!(self.f.dec1b);
        push_conv!(self.f.out);
        for c in &mut self.h {
            push_conv!(*c);
        }
        push_conv!(self.b.enc1a);
        push_conv!(self.b.enc1b);
        push_conv!(self.b.enc2a);
        push_conv!(self.b.enc2b);
        push_conv!(self.b.mid_a);
        push_conv!(self.b.mid_b);
        push_conv!(self.b.dec2a);
        push_conv!(self.b.dec2b);
        push_conv!(self.b.dec1a);
        push_conv!(self.b.dec1b);
        push_conv!(self.b.out);
        for c in &mut self.r {
            push_conv!(*c);
        }
        for c in &mut self.s {
            push_conv!(*c);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Layer table plus parameter count, as JSON.
    pub fn model_info(&self) -> serde_json::Value {
        let layers: Vec<serde_json::Value> = self
            .named_tensors()
            .iter()
            .map(|(name, t)| {
                serde_json::json!({
                    "name": name,
                    "shape": t.shape(),
                    "parameters": t.len(),
                })
            })
            .collect();
        serde_json::json!({
            "config": self.config,
            "layers": layers,
            "parameter_count": self.parameter_count(),
        })
    }
}

/// Positional encoding: each channel v expands to
/// (v, sin(2^0 pi v), cos(2^0 pi v), ..., sin(2^(L-1) pi v), cos(...)).
pub fn positional_encode(x: &Tensor, l_pe: usize) -> Tensor {
    let shape = x.shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let hw = h * w;
    let stride = 2 * l_pe + 1;
    let mut out = Tensor::zeros(&[c * stride, h, w]);
    let data = x.data();
    let odata = out.data_mut();
    for ci in 0..c {
        let src = &data[ci * hw..(ci + 1) * hw];
        let base = ci * stride * hw;
        odata[base..base + hw].copy_from_slice(src);
        for l in 0..l_pe {
            let freq = (1u64 << l) as f32 * std::f32::consts::PI;
            let sin_off = base + (1 + 2 * l) * hw;
            let cos_off = base + (2 + 2 * l) * hw;
            for (i, &v) in src.iter().enumerate() {
                let (s, c) = (freq * v).sin_cos();
                odata[sin_off + i] = s;
                odata[cos_off + i] = c;
            }
        }
    }
    out
}

fn buffer_tensor(channels: Vec<f32>, width: usize, height: usize) -> Tensor {
    Tensor::from_vec(&[BUFFER_CHANNELS, height, width], channels)
}

fn encode_buffer(config: &GlassNetConfig, channels: Vec<f32>, width: usize, height: usize) -> Tensor {
    let raw = buffer_tensor(channels, width, height);
    if config.positional_encoding {
        positional_encode(&raw, config.l_pe)
    } else {
        raw
    }
}

fn l_d_tensor(g: &GBuffer) -> Tensor {
    let n = g.width * g.height;
    let mut data = Vec::with_capacity(3 * n);
    for c in 0..3 {
        data.extend(g.l_d.iter().map(|p| p[c]));
    }
    Tensor::from_vec(&[3, g.height, g.width], data)
}

/// 64-bit accumulator for the transparency representation; contributions
/// from h enter by plain addition, so any buffer order yields the same sum.
pub struct LatentTau {
    shape: [usize; 3],
    data: Vec<f64>,
}

impl LatentTau {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        alloc::track_alloc(c * h * w * 8);
        Self {
            shape: [c, h, w],
            data: vec![0.0; c * h * w],
        }
    }

    pub fn accumulate(&mut self, contribution: &Tensor) {
        assert_eq!(contribution.len(), self.data.len());
        for (acc, &v) in self.data.iter_mut().zip(contribution.data()) {
            *acc += v as f64;
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            &self.shape,
            self.data.iter().map(|&v| v as f32).collect(),
        )
    }
}

impl Drop for LatentTau {
    fn drop(&mut self) {
        alloc::track_free(self.data.len() * 8);
    }
}

fn h_eager(params: &GlassNetParams, x: &Tensor) -> Tensor {
    let conv = |p: &ConvParams, x: &Tensor| {
        eager::leaky_relu(&eager::conv2d(x, &p.w, &p.b), LEAKY_SLOPE)
    };
    let a = conv(&params.h[0], x);
    let b = conv(&params.h[1], &a);
    eager::conv2d(&b, &params.h[2].w, &params.h[2].b)
}

fn r_eager(params: &GlassNetParams, x: &Tensor) -> Tensor {
    let mut cur = eager::leaky_relu(
        &eager::conv2d(x, &params.r[0].w, &params.r[0].b),
        LEAKY_SLOPE,
    );
    for conv in &params.r[1..params.r.len() - 1] {
        cur = eager::leaky_relu(&eager::conv2d(&cur, &conv.w, &conv.b), LEAKY_SLOPE);
    }
    let last = params.r.last().expect("rendering head");
    eager::softplus(&eager::conv2d(&cur, &last.w, &last.b))
}

/// Scene encoder F on the (encoded) opaque G-buffer.
pub fn encode_scene(params: &GlassNetParams, gbuffer: &GBuffer) -> Tensor {
    let enc = encode_buffer(
        &params.config,
        gbuffer.channels_chw(),
        gbuffer.width,
        gbuffer.height,
    );
    unet_eager(&params.f, &enc)
}

/// One streaming step of the transparency blend: tau += h(encode(b), sigma).
pub fn accumulate_transparency(
    params: &GlassNetParams,
    tau: &mut LatentTau,
    buffer: &TransparencyBuffer,
    sigma: &Tensor,
) {
    let enc = encode_buffer(
        &params.config,
        buffer.channels_chw(),
        buffer.width,
        buffer.height,
    );
    let h_in = eager::concat_c(&enc, sigma);
    drop(enc);
    let contribution = h_eager(params, &h_in);
    drop(h_in);
    tau.accumulate(&contribution);
}

/// Blending network B over the concatenated scene and transparency
/// representations.
pub fn blend(params: &GlassNetParams, sigma: &Tensor, tau: &Tensor) -> Tensor {
    unet_eager(&params.b, &eager::concat_c(sigma, tau))
}

/// Rendering network R: neural buffer plus raw direct lighting to radiance.
pub fn render_head(params: &GlassNetParams, phi: &Tensor, l_d: &Tensor) -> Tensor {
    r_eager(params, &eager::concat_c(phi, l_d))
}

fn tensor_to_image(t: &Tensor) -> RadianceImage {
    let shape = t.shape();
    let (h, w) = (shape[1], shape[2]);
    let hw = h * w;
    let d = t.data();
    let mut img = RadianceImage::new(w, h);
    for i in 0..hw {
        img.pixels[i] = [d[i], d[hw + i], d[2 * hw + i]];
    }
    img
}

/// Full inference: F, streaming transparency accumulation, B, R. The
/// supersampler is applied separately by [`supersample`].
pub fn forward_full(params: &GlassNetParams, stack: &BufferStack) -> RadianceImage {
    let (image, _) = forward_full_instrumented(params, stack);
    image
}

/// Peak tensor bytes alive during the streaming transparency stage.
#[derive(Debug, Clone, Copy)]
pub struct StageStats {
    pub transparency_peak_bytes: u64,
}

/// Inference with allocation accounting for the transparency stage (the
/// window covers tau and the per-buffer encode/contribute allocations).
pub fn forward_full_instrumented(
    params: &GlassNetParams,
    stack: &BufferStack,
) -> (RadianceImage, StageStats) {
    let g = &stack.gbuffer;
    let sigma = encode_scene(params, g);

    let live_before = alloc::live_bytes();
    alloc::reset_peak();
    let mut tau = LatentTau::zeros(params.config.c_tau, g.height, g.width);
    if params.config.transparency_buffers {
        for buffer in &stack.tbuffers {
            accumulate_transparency(params, &mut tau, buffer, &sigma);
        }
    }
    let transparency_peak_bytes = alloc::peak_bytes() - live_before;
    let tau32 = tau.to_tensor();
    drop(tau);

    let phi = blend(params, &sigma, &tau32);
    let rgb = render_head(params, &phi, &l_d_tensor(g));
    (
        tensor_to_image(&rgb),
        StageStats {
            transparency_peak_bytes,
        },
    )
}

/// 2x supersampling: nearest-upsample the image, concatenate the hi-res
/// G-buffer, and add a learned residual.
pub fn supersample(params: &GlassNetParams, image: &RadianceImage, hires: &GBuffer) -> RadianceImage {
    assert_eq!(hires.width, image.width * 2, "hi-res width must be 2x");
    assert_eq!(hires.height, image.height * 2, "hi-res height must be 2x");
    let base = image_to_tensor(image);
    let up = eager::upsample2(&base);
    let hires_t = buffer_tensor(hires.channels_chw(), hires.width, hires.height);
    let residual = s_eager(params, &eager::concat_c(&up, &hires_t));
    let mut out = up;
    for (o, r) in out.data_mut().iter_mut().zip(residual.data()) {
        *o += r;
    }
    tensor_to_image(&out)
}

fn s_eager(params: &GlassNetParams, x: &Tensor) -> Tensor {
    let conv = |p: &ConvParams, x: &Tensor| {
        eager::leaky_relu(&eager::conv2d(x, &p.w, &p.b), LEAKY_SLOPE)
    };
    let a = conv(&params.s[0], x);
    let b = conv(&params.s[1], &a);
    eager::conv2d(&b, &params.s[2].w, &params.s[2].b)
}

pub fn image_to_tensor(img: &RadianceImage) -> Tensor {
    let n = img.width * img.height;
    let mut data = Vec::with_capacity(3 * n);
    for c in 0..3 {
        data.extend(img.pixels.iter().map(|p| p[c]));
    }
    Tensor::from_vec(&[3, img.height, img.width], data)
}

/// Tape-side parameter handles in `named_tensors` order.
pub struct RegisteredVars {
    pub f: UNetVars,
    pub h: Vec<(Var, Var)>,
    pub b: UNetVars,
    pub r: Vec<(Var, Var)>,
    pub s: Vec<(Var, Var)>,
}

impl RegisteredVars {
    /// Flattened vars matching `GlassNetParams::named_tensors` order.
    pub fn ordered(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for (w, b) in self.f.layers {
            out.push(w);
            out.push(b);
        }
        for (w, b) in &self.h {
            out.push(*w);
            out.push(*b);
        }
        for (w, b) in self.b.layers {
            out.push(w);
            out.push(b);
        }
        for (w, b) in &self.r {
            out.push(*w);
            out.push(*b);
        }
        for (w, b) in &self.s {
            out.push(*w);
            out.push(*b);
        }
        out
    }
}

/// Put every parameter on the tape. `trainable_main` covers F, h, B, R;
/// `trainable_super` covers S (trained in its own phase).
pub fn register_params(
    tape: &Tape,
    params: &GlassNetParams,
    trainable_main: bool,
    trainable_super: bool,
) -> RegisteredVars {
    let reg_convs = |list: &[ConvParams], trainable: bool| {
        list.iter()
            .map(|c| {
                (
                    tape.leaf(c.w.clone(), trainable),
                    tape.leaf(c.b.clone(), trainable),
                )
            })
            .collect::<Vec<_>>()
    };
    RegisteredVars {
        f: register_unet(tape, &params.f, trainable_main),
        h: reg_convs(&params.h, trainable_main),
        b: register_unet(tape, &params.b, trainable_main),
        r: reg_convs(&params.r, trainable_main),
        s: reg_convs(&params.s, trainable_super),
    }
}

/// Differentiable forward pass to base-resolution radiance (no
/// supersampling): F, summed transparency contributions, B, R.
pub fn forward_train(
    tape: &Tape,
    params: &GlassNetParams,
    reg: &RegisteredVars,
    stack: &BufferStack,
) -> Result<Var, AutodiffError> {
    let config = &params.config;
    let g = &stack.gbuffer;
    let (w, h) = (g.width, g.height);

    let g_enc = tape.leaf(encode_buffer(config, g.channels_chw(), w, h), false);
    let sigma = unet_forward(tape, &reg.f, g_enc)?;

    let mut tau = tape.leaf(Tensor::zeros(&[config.c_tau, h, w]), false);
    if config.transparency_buffers {
        for buffer in &stack.tbuffers {
            let enc = tape.leaf(encode_buffer(config, buffer.channels_chw(), w, h), false);
            let h_in = tape.concat_c(enc, sigma)?;
            let contribution = h_tape(tape, reg, h_in)?;
            tau = tape.add(tau, contribution)?;
        }
    }

    let phi = unet_forward(tape, &reg.b, tape.concat_c(sigma, tau)?)?;
    let l_d = tape.leaf(l_d_tensor(g), false);
    r_tape(tape, reg, tape.concat_c(phi, l_d)?)
}

fn h_tape(tape: &Tape, reg: &RegisteredVars, x: Var) -> Result<Var, AutodiffError> {
    let a = tape.leaky_relu(tape.conv2d(x, reg.h[0].0, reg.h[0].1)?, LEAKY_SLOPE)?;
    let b = tape.leaky_relu(tape.conv2d(a, reg.h[1].0, reg.h[1].1)?, LEAKY_SLOPE)?;
    tape.conv2d(b, reg.h[2].0, reg.h[2].1)
}

fn r_tape(tape: &Tape, reg: &RegisteredVars, x: Var) -> Result<Var, AutodiffError> {
    let mut cur = tape.leaky_relu(tape.conv2d(x, reg.r[0].0, reg.r[0].1)?, LEAKY_SLOPE)?;
    for (w, b) in &reg.r[1..reg.r.len() - 1] {
        cur = tape.leaky_relu(tape.conv2d(cur, *w, *b)?, LEAKY_SLOPE)?;
    }
    let (w, b) = reg.r[reg.r.len() - 1];
    tape.softplus(tape.conv2d(cur, w, b)?)
}

/// Differentiable supersampler forward: residual S on the upsampled
/// prediction (a plain tensor) and the hi-res G-buffer.
pub fn supersample_train(
    tape: &Tape,
    reg: &RegisteredVars,
    base_image: &Tensor,
    hires: &GBuffer,
) -> Result<Var, AutodiffError> {
    let base = tape.leaf(base_image.clone(), false);
    let up = tape.upsample2(base)?;
    let hires_t = tape.leaf(
        buffer_tensor(hires.channels_chw(), hires.width, hires.height),
        false,
    );
    let x = tape.concat_c(up, hires_t)?;
    let a = tape.leaky_relu(tape.conv2d(x, reg.s[0].0, reg.s[0].1)?, LEAKY_SLOPE)?;
    let b = tape.leaky_relu(tape.conv2d(a, reg.s[1].0, reg.s[1].1)?, LEAKY_SLOPE)?;
    let residual = tape.conv2d(b, reg.s[2].0, reg.s[2].1)?;
    tape.add(up, residual)
}

/// Gradients for every parameter in `named_tensors` order (zeros where a
/// parameter did not participate).
pub fn collect_grads(tape: &Tape, params: &GlassNetParams, reg: &RegisteredVars) -> Vec<Tensor> {
    reg.ordered()
        .iter()
        .zip(params.named_tensors())
        .map(|(var, (_, tensor))| {
            tape.grad_of(*var)
                .unwrap_or_else(|| Tensor::zeros(tensor.shape()))
        })
        .collect()
}
