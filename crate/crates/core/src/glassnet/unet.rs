//! Three-level U-Net used by the scene encoder and the blending network:
//! two conv+pool encoder levels, a bottleneck, skip-connected decoder
//! levels, and a linear 1x1 output head. Spatial dims must be multiples
//! of four.

use crate::autodiff::{eager, AutodiffError, Tape, Tensor, Var};
use crate::rng::hash64;

use super::{ConvParams, LEAKY_SLOPE};

#[derive(Debug, Clone)]
pub struct UNetParams {
    pub enc1a: ConvParams,
    pub enc1b: ConvParams,
    pub enc2a: ConvParams,
    pub enc2b: ConvParams,
    pub mid_a: ConvParams,
    pub mid_b: ConvParams,
    pub dec2a: ConvParams,
    pub dec2b: ConvParams,
    pub dec1a: ConvParams,
    pub dec1b: ConvParams,
    pub out: ConvParams,
}

impl UNetParams {
    /// He-initialized U-Net with encoder widths (w, 2w, 4w).
    pub fn init(in_channels: usize, width: usize, out_channels: usize, seed: u64) -> Self {
        let (w1, w2, w4) = (width, width * 2, width * 4);
        let conv = |i: usize, ci: usize, co: usize, k: usize| {
            ConvParams::init(ci, co, k, hash64(&[seed, i as u64]))
        };
        Self {
            enc1a: conv(0, in_channels, w1, 3),
            enc1b: conv(1, w1, w1, 3),
            enc2a: conv(2, w1, w2, 3),
            enc2b: conv(3, w2, w2, 3),
            mid_a: conv(4, w2, w4, 3),
            mid_b: conv(5, w4, w4, 3),
            dec2a: conv(6, w4 + w2, w2, 3),
            dec2b: conv(7, w2, w2, 3),
            dec1a: conv(8, w2 + w1, w1, 3),
            dec1b: conv(9, w1, w1, 3),
            out: conv(10, w1, out_channels, 1),
        }
    }

    pub fn layers(&self) -> [(&'static str, &ConvParams); 11] {
        [
            ("enc1a", &self.enc1a),
            ("enc1b", &self.enc1b),
            ("enc2a", &self.enc2a),
            ("enc2b", &self.enc2b),
            ("mid_a", &self.mid_a),
            ("mid_b", &self.mid_b),
            ("dec2a", &self.dec2a),
            ("dec2b", &self.dec2b),
            ("dec1a", &self.dec1a),
            ("dec1b", &self.dec1b),
            ("out", &self.out),
        ]
    }

    pub fn layers_mut(&mut self) -> [(&'static str, &mut ConvParams); 11] {
        [
            ("enc1a", &mut self.enc1a),
            ("enc1b", &mut self.enc1b),
            ("enc2a", &mut self.enc2a),
            ("enc2b", &mut self.enc2b),
            ("mid_a", &mut self.mid_a),
            ("mid_b", &mut self.mid_b),
            ("dec2a", &mut self.dec2a),
            ("dec2b", &mut self.dec2b),
            ("dec1a", &mut self.dec1a),
            ("dec1b", &mut self.dec1b),
            ("out", &mut self.out),
        ]
    }
}

/// Tape-side handles for one U-Net's parameters.
#[derive(Debug, Clone, Copy)]
pub struct UNetVars {
    pub layers: [(Var, Var); 11],
}

pub fn register_unet(tape: &Tape, params: &UNetParams, trainable: bool) -> UNetVars {
    let layers: Vec<(Var, Var)> = params
        .layers()
        .iter()
        .map(|(_, conv)| {
            (
                tape.leaf(conv.w.clone(), trainable),
                tape.leaf(conv.b.clone(), trainable),
            )
        })
        .collect();
    UNetVars {
        layers: layers.try_into().expect("11 layers"),
    }
}

pub fn unet_forward(tape: &Tape, vars: &UNetVars, x: Var) -> Result<Var, AutodiffError> {
    let conv = |i: usize, x: Var| -> Result<Var, AutodiffError> {
        let (w, b) = vars.layers[i];
        tape.leaky_relu(tape.conv2d(x, w, b)?, LEAKY_SLOPE)
    };
    let e1 = conv(1, conv(0, x)?)?;
    let p1 = tape.max_pool2(e1)?;
    let e2 = conv(3, conv(2, p1)?)?;
    let p2 = tape.max_pool2(e2)?;
    let m = conv(5, conv(4, p2)?)?;
    let u2 = tape.concat_c(tape.upsample2(m)?, e2)?;
    let d2 = conv(7, conv(6, u2)?)?;
    let u1 = tape.concat_c(tape.upsample2(d2)?, e1)?;
    let d1 = conv(9, conv(8, u1)?)?;
    let (w, b) = vars.layers[10];
    tape.conv2d(d1, w, b)
}

/// No-grad forward mirroring [`unet_forward`].
pub fn unet_eager(params: &UNetParams, x: &Tensor) -> Tensor {
    let conv = |p: &ConvParams, x: &Tensor| {
        eager::leaky_relu(&eager::conv2d(x, &p.w, &p.b), LEAKY_SLOPE)
    };
    let e1 = conv(&params.enc1b, &conv(&params.enc1a, x));
    let (p1, _) = eager::max_pool2(&e1);
    let e2 = conv(&params.enc2b, &conv(&params.enc2a, &p1));
    let (p2, _) = eager::max_pool2(&e2);
    let m = conv(&params.mid_b, &conv(&params.mid_a, &p2));
    let u2 = eager::concat_c(&eager::upsample2(&m), &e2);
    let d2 = conv(&params.dec2b, &conv(&params.dec2a, &u2));
    let u1 = eager::concat_c(&eager::upsample2(&d2), &e1);
    let d1 = conv(&params.dec1b, &conv(&params.dec1a, &u1));
    eager::conv2d(&d1, &params.out.w, &params.out.b)
}
