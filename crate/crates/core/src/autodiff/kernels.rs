//! Raw compute kernels behind the tape ops. All buffers are allocated by
//! the caller; kernels only fill them (rayon splits work over preallocated
//! slices, see the allocation-accounting contract in [`super::alloc`]).

use rayon::prelude::*;

/// Work size above which matmuls parallelize over output rows.
const PAR_FLOPS: usize = 1 << 17;

/// Rows of B kept hot in cache while every C row in the block touches them.
const K_BLOCK: usize = 48;

/// C[m,n] = A[m,k] * B[k,n]; C must be zeroed by the caller.
pub fn matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    // k-blocked: each block of B rows is streamed once and reused across
    // all rows of C, which keeps the kernel compute-bound for the wide
    // image matrices convolution produces.
    let rows = |cc: &mut [f32], i0: usize| {
        let rows_here = cc.len() / n;
        for k0 in (0..k).step_by(K_BLOCK) {
            let k1 = (k0 + K_BLOCK).min(k);
            for r in 0..rows_here {
                let arow = &a[(i0 + r) * k..];
                let crow = &mut cc[r * n..(r + 1) * n];
                for p in k0..k1 {
                    let av = arow[p];
                    if av != 0.0 {
                        let brow = &b[p * n..(p + 1) * n];
                        for (cv, bv) in crow.iter_mut().zip(brow) {
                            *cv += av * bv;
                        }
                    }
                }
            }
        }
    };
    if m * k * n >= PAR_FLOPS && m > 1 {
        let chunk_rows = m.div_ceil(rayon::current_num_threads().max(1) * 2).max(1);
        c.par_chunks_mut(chunk_rows * n)
            .enumerate()
            .for_each(|(ci, cc)| rows(cc, ci * chunk_rows));
    } else {
        rows(c, 0);
    }
}

/// C[m,n] = A^T[m,k] * B[k,n] where A is stored [k,m]; C zeroed by caller.
/// Each C row is accumulated in one pass (k is small in the convolution
/// backward where this runs), so only B is re-read, from cache.
pub fn matmul_atb(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, c: &mut [f32]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let rows = |cc: &mut [f32], i0: usize| {
        for (r, crow) in cc.chunks_mut(n).enumerate() {
            for p in 0..k {
                let av = a[p * m + i0 + r];
                if av != 0.0 {
                    let brow = &b[p * n..(p + 1) * n];
                    for (cv, bv) in crow.iter_mut().zip(brow) {
                        *cv += av * bv;
                    }
                }
            }
        }
    };
    if m * k * n >= PAR_FLOPS && m > 1 {
        let chunk_rows = m.div_ceil(rayon::current_num_threads().max(1) * 2).max(1);
        c.par_chunks_mut(chunk_rows * n)
            .enumerate()
            .for_each(|(ci, cc)| rows(cc, ci * chunk_rows));
    } else {
        rows(c, 0);
    }
}

/// C[m,n] = A[m,k] * B^T[k,n] where B is stored [n,k]; C zeroed by caller.
/// The j loop is outermost within a row block so each B row is loaded once
/// per block instead of once per C row.
pub fn matmul_abt(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    let rows = |cc: &mut [f32], i0: usize| {
        let rows_here = cc.len() / n;
        for (j, brow) in b.chunks(k).enumerate() {
            for r in 0..rows_here {
                let arow = &a[(i0 + r) * k..(i0 + r + 1) * k];
                cc[r * n + j] += dot_lanes(arow, brow);
            }
        }
    };
    if m * k * n >= PAR_FLOPS && m > 1 {
        let chunk_rows = m.div_ceil(rayon::current_num_threads().max(1) * 2).max(1);
        c.par_chunks_mut(chunk_rows * n)
            .enumerate()
            .for_each(|(ci, cc)| rows(cc, ci * chunk_rows));
    } else {
        rows(c, 0);
    }
}

/// Dot product with eight independent accumulator lanes so the reduction
/// vectorizes.
fn dot_lanes(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let mut ac = a.chunks_exact(8);
    let mut bc = b.chunks_exact(8);
    for (ca, cb) in ac.by_ref().zip(bc.by_ref()) {
        for l in 0..8 {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ac.remainder().iter().zip(bc.remainder()) {
        tail += x * y;
    }
    acc.iter().sum::<f32>() + tail
}

/// Unfold a CHW image into [ci*k*k, h*w] patch columns with zero padding,
/// stride 1. `cols` zeroed by the caller.
pub fn im2col(x: &[f32], ci: usize, h: usize, w: usize, k: usize, cols: &mut [f32]) {
    let half = (k / 2) as isize;
    let hw = h * w;
    debug_assert_eq!(cols.len(), ci * k * k * hw);
    for c in 0..ci {
        let plane = &x[c * hw..(c + 1) * hw];
        for ky in 0..k {
            let dy = ky as isize - half;
            for kx in 0..k {
                let dx = kx as isize - half;
                let row = &mut cols[((c * k + ky) * k + kx) * hw..((c * k + ky) * k + kx + 1) * hw];
                for y in 0..h as isize {
                    let sy = y + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x_lo = (-dx).max(0);
                    let x_hi = (w as isize - dx).min(w as isize);
                    if x_lo >= x_hi {
                        continue;
                    }
                    let dst = &mut row[(y as usize) * w + x_lo as usize
                        ..(y as usize) * w + x_hi as usize];
                    let src = &plane[(sy as usize) * w + (x_lo + dx) as usize
                        ..(sy as usize) * w + (x_hi + dx) as usize];
                    dst.copy_from_slice(src);
                }
            }
        }
    }
}

/// Fold patch columns back into a CHW gradient image (scatter-add inverse
/// of [`im2col`]). `dx` zeroed by the caller.
pub fn col2im(cols: &[f32], ci: usize, h: usize, w: usize, k: usize, dx: &mut [f32]) {
    let half = (k / 2) as isize;
    let hw = h * w;
    for c in 0..ci {
        let plane = &mut dx[c * hw..(c + 1) * hw];
        for ky in 0..k {
            let dy = ky as isize - half;
            for kx in 0..k {
                let dx_off = kx as isize - half;
                let row = &cols[((c * k + ky) * k + kx) * hw..((c * k + ky) * k + kx + 1) * hw];
                for y in 0..h as isize {
                    let sy = y + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x_lo = (-dx_off).max(0);
                    let x_hi = (w as isize - dx_off).min(w as isize);
                    if x_lo >= x_hi {
                        continue;
                    }
                    let src = &row[(y as usize) * w + x_lo as usize
                        ..(y as usize) * w + x_hi as usize];
                    let dst = &mut plane[(sy as usize) * w + (x_lo + dx_off) as usize
                        ..(sy as usize) * w + (x_hi + dx_off) as usize];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// 2x2 max pooling with argmax capture (input index per output element).
pub fn max_pool2(x: &[f32], c: usize, h: usize, w: usize, out: &mut [f32], argmax: &mut [u32]) {
    let (oh, ow) = (h / 2, w / 2);
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f32::NEG_INFINITY;
                let mut best_idx = 0u32;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let iy = oy * 2 + dy;
                        let ix = ox * 2 + dx;
                        let v = plane[iy * w + ix];
                        if v > best {
                            best = v;
                            best_idx = (ch * h * w + iy * w + ix) as u32;
                        }
                    }
                }
                let o = ch * oh * ow + oy * ow + ox;
                out[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
}

/// Nearest-neighbor 2x upsampling of a CHW image.
pub fn upsample2(x: &[f32], c: usize, h: usize, w: usize, out: &mut [f32]) {
    let (oh, ow) = (h * 2, w * 2);
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        let oplane = &mut out[ch * oh * ow..(ch + 1) * oh * ow];
        for oy in 0..oh {
            let sy = oy / 2;
            let src = &plane[sy * w..(sy + 1) * w];
            let dst = &mut oplane[oy * ow..(oy + 1) * ow];
            for (ox, d) in dst.iter_mut().enumerate() {
                *d = src[ox / 2];
            }
        }
    }
}

/// Backward of nearest 2x upsampling: sum each 2x2 block of `dout`.
pub fn upsample2_backward(dout: &[f32], c: usize, h: usize, w: usize, dx: &mut [f32]) {
    let (oh, ow) = (h * 2, w * 2);
    for ch in 0..c {
        let dplane = &dout[ch * oh * ow..(ch + 1) * oh * ow];
        let xplane = &mut dx[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            let sy = oy / 2;
            for ox in 0..ow {
                xplane[sy * w + ox / 2] += dplane[oy * ow + ox];
            }
        }
    }
}

/// Separable depthwise convolution with a fixed odd-length 1D kernel,
/// zero-padded to keep size. `tmp` and `out` are caller buffers of x's len.
pub fn depthwise_separable(
    x: &[f32],
    c: usize,
    h: usize,
    w: usize,
    kernel: &[f32],
    tmp: &mut [f32],
    out: &mut [f32],
) {
    let k = kernel.len();
    let half = (k / 2) as isize;
    // Horizontal pass into tmp.
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        let tplane = &mut tmp[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            let row = &plane[y * w..(y + 1) * w];
            let trow = &mut tplane[y * w..(y + 1) * w];
            for (x0, t) in trow.iter_mut().enumerate() {
                let mut acc = 0.0f32;
                for (ki, &kv) in kernel.iter().enumerate() {
                    let sx = x0 as isize + ki as isize - half;
                    if sx >= 0 && (sx as usize) < w {
                        acc += kv * row[sx as usize];
                    }
                }
                *t = acc;
            }
        }
    }
    // Vertical pass into out.
    for ch in 0..c {
        let tplane = &tmp[ch * h * w..(ch + 1) * h * w];
        let oplane = &mut out[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            let orow = &mut oplane[y * w..(y + 1) * w];
            for v in orow.iter_mut() {
                *v = 0.0;
            }
            for (ki, &kv) in kernel.iter().enumerate() {
                let sy = y as isize + ki as isize - half;
                if sy >= 0 && (sy as usize) < h {
                    let srow = &tplane[(sy as usize) * w..(sy as usize + 1) * w];
                    for (o, s) in orow.iter_mut().zip(srow) {
                        *o += kv * s;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn rand_vec(n: usize, seed: u64) -> Vec<f32> {
        let mut rng = SplitMix64::new(seed);
        (0..n).map(|_| rng.uniform_f32(-1.0, 1.0)).collect()
    }

    #[test]
    fn matmul_variants_agree() {
        let (m, k, n) = (7, 5, 9);
        let a = rand_vec(m * k, 1);
        let b = rand_vec(k * n, 2);
        let mut c = vec![0.0; m * n];
        matmul(&a, &b, m, k, n, &mut c);

        // Naive reference.
        let mut c_ref = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c_ref[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        for (x, y) in c.iter().zip(&c_ref) {
            assert!((x - y).abs() < 1e-5);
        }

        // A^T * B with A stored transposed.
        let mut at = vec![0.0f32; k * m];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let mut c2 = vec![0.0; m * n];
        matmul_atb(&at, &b, m, k, n, &mut c2);
        for (x, y) in c2.iter().zip(&c_ref) {
            assert!((x - y).abs() < 1e-5);
        }

        // A * B^T with B stored transposed.
        let mut bt = vec![0.0f32; n * k];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        let mut c3 = vec![0.0; m * n];
        matmul_abt(&a, &bt, m, k, n, &mut c3);
        for (x, y) in c3.iter().zip(&c_ref) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn im2col_col2im_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> makes the pair a valid
        // linear-op/transpose pair.
        let (c, h, w, k) = (2, 5, 4, 3);
        let x = rand_vec(c * h * w, 3);
        let y = rand_vec(c * k * k * h * w, 4);
        let mut cols = vec![0.0; c * k * k * h * w];
        im2col(&x, c, h, w, k, &mut cols);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| (a * b) as f64).sum();
        let mut back = vec![0.0; c * h * w];
        col2im(&y, c, h, w, k, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| (a * b) as f64).sum();
        assert!((lhs - rhs).abs() < 1e-3, "{lhs} vs {rhs}");
    }

    #[test]
    fn upsample_pool_shapes() {
        let (c, h, w) = (3, 4, 6);
        let x = rand_vec(c * h * w, 5);
        let mut up = vec![0.0; c * h * w * 4];
        upsample2(&x, c, h, w, &mut up);
        assert_eq!(up[0], x[0]);
        assert_eq!(up[1], x[0]);

        let mut down = vec![0.0; c * h * w / 4];
        let mut arg = vec![0u32; c * h * w / 4];
        max_pool2(&x, c, h, w, &mut down, &mut arg);
        for (o, &ai) in down.iter().zip(&arg) {
            assert_eq!(*o, x[ai as usize]);
        }
    }
}
