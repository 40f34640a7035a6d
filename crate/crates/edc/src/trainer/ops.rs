//! Dense kernels for the trainer: accumulating matmul, im2col/col2im, and
//! 2x2-style max pooling.
//!
//! Loops are arranged so the innermost dimension is contiguous and free of
//! reductions, which lets the compiler vectorize without reassociating
//! floating-point sums; results stay bit-deterministic.

use crate::net::LayerSpec;
use crate::Scalar;

/// `c[m x n] += a[m x k] * b[k x n]`, all row-major.
pub fn matmul_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for l in 0..k {
            let a_il = a[i * k + l];
            let b_row = &b[l * n..(l + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv = *cv + a_il * bv;
            }
        }
    }
}

/// Row-major transpose of `src[m x n]` into `dst[n x m]`.
pub fn transpose<T: Scalar>(src: &[T], dst: &mut [T], m: usize, n: usize) {
    debug_assert_eq!(src.len(), m * n);
    debug_assert_eq!(dst.len(), m * n);
    for i in 0..m {
        for j in 0..n {
            dst[j * m + i] = src[i * n + j];
        }
    }
}

/// Unfolds one sample `(c_in, h, w)` into patch columns.
///
/// Row `(c_i, f_y, f_x)` and column `(y, x)` hold the input element under
/// filter tap `(f_y, f_x)` at output position `(y, x)`; out-of-range taps
/// are zero (padding). `patches` must be `c_in*f_y*f_x` by `layer.y*layer.x`.
pub fn im2col<T: Scalar>(input: &[T], layer: &LayerSpec, patches: &mut [T]) {
    let (in_h, in_w) = layer.input_hw();
    debug_assert_eq!(input.len(), layer.c_in * in_h * in_w);
    let cols = layer.y * layer.x;
    debug_assert_eq!(patches.len(), layer.c_in * layer.f_y * layer.f_x * cols);
    let mut row = 0;
    for c_i in 0..layer.c_in {
        let channel = &input[c_i * in_h * in_w..(c_i + 1) * in_h * in_w];
        for f_y in 0..layer.f_y {
            for f_x in 0..layer.f_x {
                let out_row = &mut patches[row * cols..(row + 1) * cols];
                for y in 0..layer.y {
                    let in_y = (y * layer.stride + f_y) as isize - layer.padding as isize;
                    let dst = &mut out_row[y * layer.x..(y + 1) * layer.x];
                    if in_y < 0 || in_y >= in_h as isize {
                        for v in dst.iter_mut() {
                            *v = T::zero();
                        }
                        continue;
                    }
                    let src_row = &channel[in_y as usize * in_w..(in_y as usize + 1) * in_w];
                    for (x, v) in dst.iter_mut().enumerate() {
                        let in_x = (x * layer.stride + f_x) as isize - layer.padding as isize;
                        *v = if in_x < 0 || in_x >= in_w as isize {
                            T::zero()
                        } else {
                            src_row[in_x as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Folds patch-column gradients back onto the input gradient (scatter-add);
/// the adjoint of [`im2col`].
pub fn col2im_acc<T: Scalar>(patches: &[T], layer: &LayerSpec, d_input: &mut [T]) {
    let (in_h, in_w) = layer.input_hw();
    debug_assert_eq!(d_input.len(), layer.c_in * in_h * in_w);
    let cols = layer.y * layer.x;
    let mut row = 0;
    for c_i in 0..layer.c_in {
        let channel = &mut d_input[c_i * in_h * in_w..(c_i + 1) * in_h * in_w];
        for f_y in 0..layer.f_y {
            for f_x in 0..layer.f_x {
                let src_row = &patches[row * cols..(row + 1) * cols];
                for y in 0..layer.y {
                    let in_y = (y * layer.stride + f_y) as isize - layer.padding as isize;
                    if in_y < 0 || in_y >= in_h as isize {
                        continue;
                    }
                    let dst = &mut channel[in_y as usize * in_w..(in_y as usize + 1) * in_w];
                    for x in 0..layer.x {
                        let in_x = (x * layer.stride + f_x) as isize - layer.padding as isize;
                        if in_x < 0 || in_x >= in_w as isize {
                            continue;
                        }
                        dst[in_x as usize] = dst[in_x as usize] + src_row[y * layer.x + x];
                    }
                }
                row += 1;
            }
        }
    }
}

/// Max-pools one sample `(c, h, w)` with window = stride = `p`, recording
/// the flat argmax index of each pooled element for the backward pass.
/// Trailing rows/columns that do not fill a window are dropped.
pub fn maxpool<T: Scalar>(
    input: &[T],
    c: usize,
    h: usize,
    w: usize,
    p: usize,
    output: &mut [T],
    argmax: &mut [u32],
) {
    let oh = h / p;
    let ow = w / p;
    debug_assert_eq!(output.len(), c * oh * ow);
    debug_assert_eq!(argmax.len(), c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = T::neg_infinity();
                let mut best_idx = 0u32;
                for dy in 0..p {
                    let iy = oy * p + dy;
                    for dx in 0..p {
                        let ix = ox * p + dx;
                        let idx = (ch * h + iy) * w + ix;
                        if input[idx] > best {
                            best = input[idx];
                            best_idx = idx as u32;
                        }
                    }
                }
                let out_idx = (ch * oh + oy) * ow + ox;
                output[out_idx] = best;
                argmax[out_idx] = best_idx;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{reference_convolution, LayerSpec, Tensor4};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matmul_small() {
        // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut c = [0.0f64; 4];
        matmul_acc(&a, &b, &mut c, 2, 2, 2);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn im2col_matmul_matches_reference_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for (layer, dims) in [
            (LayerSpec::conv(2, 3, 4, 4, 3, 3, 1, 1), [1usize, 3, 4, 4]),
            (LayerSpec::conv(4, 2, 3, 5, 3, 3, 1, 0), [1, 2, 7, 5]),
            (LayerSpec::conv(3, 1, 3, 3, 5, 5, 2, 2), [1, 1, 5, 5]),
        ] {
            let input = Tensor4::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0f64));
            let weights = Tensor4::from_fn(
                [layer.c_out, layer.c_in, layer.f_y, layer.f_x],
                |_, _, _, _| rng.random_range(-1.0..1.0f64),
            );
            let reference = reference_convolution(&input, &weights, &layer).unwrap();

            let k = layer.c_in * layer.f_y * layer.f_x;
            let cols = layer.y * layer.x;
            let mut patches = vec![0.0f64; k * cols];
            im2col(input.data(), &layer, &mut patches);
            let mut out = vec![0.0f64; layer.c_out * cols];
            matmul_acc(weights.data(), &patches, &mut out, layer.c_out, k, cols);

            for (a, b) in out.iter().zip(reference.data()) {
                assert!((a - b).abs() < 1e-12, "layer {layer:?}");
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)> for random x, y
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layer = LayerSpec::conv(2, 3, 4, 4, 3, 3, 1, 1);
        let k = layer.c_in * layer.f_y * layer.f_x;
        let cols = layer.y * layer.x;
        let x: Vec<f64> = (0..3 * 4 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..k * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut px = vec![0.0f64; k * cols];
        im2col(&x, &layer, &mut px);
        let lhs: f64 = px.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0f64; x.len()];
        col2im_acc(&y, &layer, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn maxpool_picks_max_and_argmax() {
        // one channel, 4x4, pool 2
        let input = [
            1.0f32, 2.0, 0.0, 0.0, //
            3.0, 0.5, 0.0, 4.0, //
            -1.0, -2.0, -3.0, -4.0, //
            -0.5, -2.5, -3.5, -0.25,
        ];
        let mut out = [0.0f32; 4];
        let mut idx = [0u32; 4];
        maxpool(&input, 1, 4, 4, 2, &mut out, &mut idx);
        assert_eq!(out, [3.0, 4.0, -0.5, -0.25]);
        assert_eq!(idx, [4, 7, 12, 15]);
    }
}
