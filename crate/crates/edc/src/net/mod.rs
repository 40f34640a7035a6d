//! Network and layer data model.
//!
//! A [`NetworkSpec`] is an ordered list of convolutional / fully-connected
//! layer descriptors with interleaved activation and pooling markers. The
//! layer descriptor carries the six loop-nest dimensions (output channels,
//! input channels, output width/height, filter width/height) that every
//! cost formula in [`crate::cost`] is written in terms of.

mod parse;
mod reference;
mod tensor;

pub use parse::{parse_network, serialize_network};
pub use reference::reference_convolution;
pub use tensor::Tensor4;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from network parsing, validation, and the reference convolution.
#[derive(Debug, Error)]
pub enum NetError {
    #[error("malformed network description: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("layer {layer}: shape chain broken: expected c_in {expected}, got {got}")]
    ShapeChain {
        layer: usize,
        expected: usize,
        got: usize,
    },
    #[error("layer {layer}: conv filter must be odd, got {f_x}x{f_y}")]
    EvenFilter { layer: usize, f_x: usize, f_y: usize },
    #[error("layer {layer}: {msg}")]
    BadLayer { layer: usize, msg: String },
    #[error("network has no layers")]
    Empty,
    #[error("tensor shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Layer kind: spatial convolution or fully-connected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Fc,
}

/// One convolutional or fully-connected layer, described by the six
/// loop-nest dimensions plus stride and zero padding.
///
/// `x`/`y` are the *output* feature-map width and height. A fully-connected
/// layer is canonicalized to `x = y = f_x = f_y = 1`, so its MAC count is
/// simply `c_out * c_in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub c_out: usize,
    pub c_in: usize,
    pub x: usize,
    pub y: usize,
    pub f_x: usize,
    pub f_y: usize,
    pub stride: usize,
    pub padding: usize,
}

impl LayerSpec {
    /// A conv layer descriptor; `x`/`y` are output sizes.
    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        c_out: usize,
        c_in: usize,
        x: usize,
        y: usize,
        f_x: usize,
        f_y: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            kind: LayerKind::Conv,
            c_out,
            c_in,
            x,
            y,
            f_x,
            f_y,
            stride,
            padding,
        }
    }

    /// A fully-connected layer canonicalized to unit spatial dimensions.
    pub fn fc(c_in: usize, c_out: usize) -> Self {
        Self {
            kind: LayerKind::Fc,
            c_out,
            c_in,
            x: 1,
            y: 1,
            f_x: 1,
            f_y: 1,
            stride: 1,
            padding: 0,
        }
    }

    /// Total multiply-accumulate operations: `C_O * C_I * X * Y * F_X * F_Y`.
    pub fn mac_count(&self) -> u64 {
        self.c_out as u64
            * self.c_in as u64
            * self.x as u64
            * self.y as u64
            * self.f_x as u64
            * self.f_y as u64
    }

    /// Weight elements, bias excluded: `C_O * C_I * F_X * F_Y`.
    pub fn param_count(&self) -> u64 {
        self.c_out as u64 * self.c_in as u64 * self.f_x as u64 * self.f_y as u64
    }

    /// Output feature-map elements: `C_O * X * Y`.
    pub fn output_elems(&self) -> u64 {
        self.c_out as u64 * self.x as u64 * self.y as u64
    }

    /// Input spatial size implied by output size, stride, and padding.
    pub fn input_hw(&self) -> (usize, usize) {
        let h = (self.y - 1) * self.stride + self.f_y - 2 * self.padding;
        let w = (self.x - 1) * self.stride + self.f_x - 2 * self.padding;
        (h, w)
    }

    fn validate(&self, index: usize) -> Result<(), NetError> {
        let dims = [
            self.c_out,
            self.c_in,
            self.x,
            self.y,
            self.f_x,
            self.f_y,
            self.stride,
        ];
        if dims.iter().any(|&d| d == 0) {
            return Err(NetError::BadLayer {
                layer: index,
                msg: "all dimension fields must be >= 1".into(),
            });
        }
        match self.kind {
            LayerKind::Conv => {
                if self.f_x % 2 == 0 || self.f_y % 2 == 0 {
                    return Err(NetError::EvenFilter {
                        layer: index,
                        f_x: self.f_x,
                        f_y: self.f_y,
                    });
                }
            }
            LayerKind::Fc => {
                if self.x != 1 || self.y != 1 || self.f_x != 1 || self.f_y != 1 {
                    return Err(NetError::BadLayer {
                        layer: index,
                        msg: "fc layer must have unit spatial and filter dims".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Activation marker attached to a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

/// A layer plus its activation/pooling markers.
///
/// Pooling and activation are cost-free in the energy model; they only
/// matter to the trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    pub activation: Option<Activation>,
    /// Max-pool window (stride equals window) applied after the activation.
    pub pool: Option<usize>,
}

/// An ordered, shape-checked network description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    /// `(channels, height, width)` of the input image.
    pub input_shape: (usize, usize, usize),
    pub layers: Vec<Layer>,
}

impl NetworkSpec {
    /// Builds and validates a network from already-resolved layers.
    pub fn new(
        name: impl Into<String>,
        input_shape: (usize, usize, usize),
        layers: Vec<Layer>,
    ) -> Result<Self, NetError> {
        let net = Self {
            name: name.into(),
            input_shape,
            layers,
        };
        net.validate()?;
        Ok(net)
    }

    /// Checks per-layer invariants and the shape chain.
    pub fn validate(&self) -> Result<(), NetError> {
        if self.layers.is_empty() {
            return Err(NetError::Empty);
        }
        let (mut c, mut h, mut w) = self.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(NetError::BadLayer {
                layer: 0,
                msg: "input shape must be nonzero".into(),
            });
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let spec = &layer.spec;
            spec.validate(i)?;
            let expected_c_in = match spec.kind {
                LayerKind::Conv => c,
                // An fc layer consumes the flattened feature map.
                LayerKind::Fc => c * h * w,
            };
            if spec.c_in != expected_c_in {
                return Err(NetError::ShapeChain {
                    layer: i,
                    expected: expected_c_in,
                    got: spec.c_in,
                });
            }
            match spec.kind {
                LayerKind::Conv => {
                    let out_h = conv_out(h, spec.f_y, spec.stride, spec.padding);
                    let out_w = conv_out(w, spec.f_x, spec.stride, spec.padding);
                    match (out_h, out_w) {
                        (Some(oh), Some(ow)) if oh == spec.y && ow == spec.x => {
                            h = oh;
                            w = ow;
                        }
                        (Some(oh), Some(ow)) => {
                            return Err(NetError::BadLayer {
                                layer: i,
                                msg: format!(
                                    "declared output {}x{} but propagation gives {}x{}",
                                    spec.x, spec.y, ow, oh
                                ),
                            });
                        }
                        _ => {
                            return Err(NetError::BadLayer {
                                layer: i,
                                msg: "filter larger than padded input".into(),
                            });
                        }
                    }
                }
                LayerKind::Fc => {
                    h = 1;
                    w = 1;
                }
            }
            c = spec.c_out;
            if let Some(p) = layer.pool {
                if p < 2 {
                    return Err(NetError::BadLayer {
                        layer: i,
                        msg: "pool window must be >= 2".into(),
                    });
                }
                h /= p;
                w /= p;
                if h == 0 || w == 0 {
                    return Err(NetError::BadLayer {
                        layer: i,
                        msg: "pooling collapses the feature map to zero".into(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Total MAC operations for one inference.
    pub fn mac_count(&self) -> u64 {
        self.layers.iter().map(|l| l.spec.mac_count()).sum()
    }

    /// Total weight elements across layers.
    pub fn param_count(&self) -> u64 {
        self.layers.iter().map(|l| l.spec.param_count()).sum()
    }

    /// Largest per-layer output feature map, in elements.
    pub fn max_feature_map(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| l.spec.output_elems())
            .max()
            .unwrap_or(0)
    }
}

fn conv_out(input: usize, filter: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < filter {
        return None;
    }
    Some((padded - filter) / stride + 1)
}

/// Bundled network description: the classic 4-layer LeNet-5 dimensions
/// (two conv layers, two fully-connected layers) on 1x28x28 input.
pub fn lenet5_json() -> &'static str {
    include_str!("../../networks/lenet5.json")
}

/// Bundled network description: a scaled-down VGG-style stack on 3x32x32
/// input.
pub fn vgg_small_json() -> &'static str {
    include_str!("../../networks/vgg_small.json")
}
