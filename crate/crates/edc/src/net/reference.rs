//! Reference convolution: the literal six-loop nest.
//!
//! This is the ground-truth implementation the trainer's im2col convolution
//! is checked against. It is deliberately written as the plain loop nest
//! over output channels, input channels, output position, and filter
//! position, with zero padding handled by skipping out-of-range reads.

use super::{LayerSpec, NetError, Tensor4};
use crate::Scalar;

/// Computes `out[n][c_o][y][x] = sum_{c_i,f_y,f_x} in[n][c_i][y*s+f_y-p][x*s+f_x-p] * w[c_o][c_i][f_y][f_x]`.
///
/// `input` is `(n, c_in, h, w)`, `weights` is `(c_out, c_in, f_y, f_x)`,
/// and the output is `(n, c_out, y, x)` per the layer descriptor.
pub fn reference_convolution<T: Scalar>(
    input: &Tensor4<T>,
    weights: &Tensor4<T>,
    layer: &LayerSpec,
) -> Result<Tensor4<T>, NetError> {
    let [n, c_in, in_h, in_w] = input.dims();
    let (want_h, want_w) = layer.input_hw();
    if c_in != layer.c_in || in_h != want_h || in_w != want_w {
        return Err(NetError::ShapeMismatch(format!(
            "input {c_in}x{in_h}x{in_w}, layer wants {}x{want_h}x{want_w}",
            layer.c_in
        )));
    }
    if weights.dims() != [layer.c_out, layer.c_in, layer.f_y, layer.f_x] {
        return Err(NetError::ShapeMismatch(format!(
            "weights {:?}, layer wants [{}, {}, {}, {}]",
            weights.dims(),
            layer.c_out,
            layer.c_in,
            layer.f_y,
            layer.f_x
        )));
    }

    let mut out = Tensor4::zeros([n, layer.c_out, layer.y, layer.x]);
    for sample in 0..n {
        for c_o in 0..layer.c_out {
            for c_i in 0..layer.c_in {
                for y in 0..layer.y {
                    for x in 0..layer.x {
                        let mut acc = out.at(sample, c_o, y, x);
                        for f_y in 0..layer.f_y {
                            for f_x in 0..layer.f_x {
                                let in_y = (y * layer.stride + f_y) as isize - layer.padding as isize;
                                let in_x = (x * layer.stride + f_x) as isize - layer.padding as isize;
                                if in_y < 0 || in_x < 0 || in_y >= in_h as isize || in_x >= in_w as isize {
                                    continue; // zero padding
                                }
                                acc = acc
                                    + input.at(sample, c_i, in_y as usize, in_x as usize)
                                        * weights.at(c_o, c_i, f_y, f_x);
                            }
                        }
                        *out.at_mut(sample, c_o, y, x) = acc;
                    }
                }
            }
        }
    }
    Ok(out)
}
