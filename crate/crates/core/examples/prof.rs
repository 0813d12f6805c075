// rough stage timing for one training step
use std::time::Instant;
use glassbuf_core::autodiff::{combined_loss, Tape};
use glassbuf_core::glassnet::{collect_grads, forward_train, image_to_tensor, register_params, GlassNetConfig, GlassNetParams};
use glassbuf_core::raster::synthetic_stack;
use glassbuf_core::image::RadianceImage;

fn main() {
    let config = GlassNetConfig { l_pe: 1, ..GlassNetConfig::default() };
    let params = GlassNetParams::init(config);
    let stack = synthetic_stack(64, 64, 2, 1);
    let truth = image_to_tensor(&RadianceImage::filled(64, 64, [0.5, 0.4, 0.3]));

    // warmup + timed
    for round in 0..3 {
        let t0 = Instant::now();
        let tape = Tape::new();
        let reg = register_params(&tape, &params, true, false);
        let t_reg = t0.elapsed();
        let pred = forward_train(&tape, &params, &reg, &stack).unwrap();
        let t_fwd = t0.elapsed();
        let tv = tape.leaf(truth.clone(), false);
        let loss = combined_loss(&tape, pred, tv, 0.5).unwrap();
        let t_loss = t0.elapsed();
        tape.backward(loss).unwrap();
        let t_bwd = t0.elapsed();
        let _g = collect_grads(&tape, &params, &reg);
        let t_all = t0.elapsed();
        if round == 2 {
            println!("register: {:?}", t_reg);
            println!("forward:  {:?}", t_fwd - t_reg);
            println!("loss:     {:?}", t_loss - t_fwd);
            println!("backward: {:?}", t_bwd - t_loss);
            println!("grads:    {:?}", t_all - t_bwd);
            println!("total:    {:?}", t_all);
        }
    }
}
