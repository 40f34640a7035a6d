//! JSON network descriptions.
//!
//! Schema:
//!
//! ```text
//! {
//!   "name": "lenet5",
//!   "input_shape": [1, 28, 28],
//!   "layers": [
//!     {"kind": "conv", "c_out": 6, "f": [5, 5], "stride": 1, "padding": 2,
//!      "pool": 2, "activation": "relu"},
//!     {"kind": "fc", "c_out": 10}
//!   ]
//! }
//! ```
//!
//! `c_in` and the output sizes are inferred by chaining shapes through the
//! layer list; a `c_in` given explicitly is checked against the chain.

use serde::{Deserialize, Serialize};

use super::{Activation, Layer, LayerKind, LayerSpec, NetError, NetworkSpec};

#[derive(Debug, Serialize, Deserialize)]
struct FileNetwork {
    name: String,
    input_shape: [usize; 3],
    layers: Vec<FileLayer>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FileLayer {
    kind: LayerKind,
    c_out: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    f: Option<[usize; 2]>,
    #[serde(default = "one")]
    stride: usize,
    #[serde(default)]
    padding: usize,
    #[serde(default)]
    pool: Option<usize>,
    #[serde(default)]
    activation: Option<Activation>,
}

fn one() -> usize {
    1
}

/// Parses and validates a JSON network description.
pub fn parse_network(bytes: &[u8]) -> Result<NetworkSpec, NetError> {
    let file: FileNetwork = serde_json::from_slice(bytes)?;
    let [c0, h0, w0] = file.input_shape;
    let (mut c, mut h, mut w) = (c0, h0, w0);
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, fl) in file.layers.iter().enumerate() {
        let spec = match fl.kind {
            LayerKind::Conv => {
                let [f_x, f_y] = fl.f.unwrap_or([1, 1]);
                if f_x % 2 == 0 || f_y % 2 == 0 {
                    return Err(NetError::EvenFilter { layer: i, f_x, f_y });
                }
                if let Some(given) = fl.c_in {
                    if given != c {
                        return Err(NetError::ShapeChain {
                            layer: i,
                            expected: c,
                            got: given,
                        });
                    }
                }
                let out_h = super::conv_out(h, f_y, fl.stride, fl.padding);
                let out_w = super::conv_out(w, f_x, fl.stride, fl.padding);
                let (y, x) = match (out_h, out_w) {
                    (Some(oh), Some(ow)) if oh > 0 && ow > 0 => (oh, ow),
                    _ => {
                        return Err(NetError::BadLayer {
                            layer: i,
                            msg: "filter larger than padded input".into(),
                        })
                    }
                };
                LayerSpec::conv(fl.c_out, c, x, y, f_x, f_y, fl.stride, fl.padding)
            }
            LayerKind::Fc => {
                let features = c * h * w;
                if let Some(given) = fl.c_in {
                    if given != features {
                        return Err(NetError::ShapeChain {
                            layer: i,
                            expected: features,
                            got: given,
                        });
                    }
                }
                LayerSpec::fc(features, fl.c_out)
            }
        };
        match spec.kind {
            LayerKind::Conv => {
                h = spec.y;
                w = spec.x;
            }
            LayerKind::Fc => {
                h = 1;
                w = 1;
            }
        }
        c = spec.c_out;
        if let Some(p) = fl.pool {
            h /= p;
            w /= p;
        }
        layers.push(Layer {
            spec,
            activation: fl.activation,
            pool: fl.pool,
        });
    }
    NetworkSpec::new(file.name, (c0, h0, w0), layers)
}

/// Serializes a network back into the file schema, with `c_in` explicit.
pub fn serialize_network(net: &NetworkSpec) -> String {
    let file = FileNetwork {
        name: net.name.clone(),
        input_shape: [net.input_shape.0, net.input_shape.1, net.input_shape.2],
        layers: net
            .layers
            .iter()
            .map(|l| FileLayer {
                kind: l.spec.kind,
                c_out: l.spec.c_out,
                c_in: Some(l.spec.c_in),
                f: match l.spec.kind {
                    LayerKind::Conv => Some([l.spec.f_x, l.spec.f_y]),
                    LayerKind::Fc => None,
                },
                stride: l.spec.stride,
                padding: l.spec.padding,
                pool: l.pool,
                activation: l.activation,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("network serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lenet5_description_gives_four_layers() {
        let net = parse_network(super::super::lenet5_json().as_bytes()).unwrap();
        assert_eq!(net.layers.len(), 4);
        assert_eq!(net.layers[0].spec.mac_count(), 117_600);
        assert_eq!(net.layers[0].spec.param_count(), 150);
        // conv2 consumes the pooled 6x14x14 map
        assert_eq!(net.layers[1].spec.c_in, 6);
        assert_eq!(net.layers[1].spec.x, 10);
        // fc1 consumes the flattened 16x5x5 map
        assert_eq!(net.layers[2].spec.c_in, 400);
        assert_eq!(net.layers[3].spec.c_out, 10);
    }

    #[test]
    fn single_fc_layer_canonicalized() {
        let json = br#"{"name":"t","input_shape":[10,1,1],"layers":[{"kind":"fc","c_out":4}]}"#;
        let net = parse_network(json).unwrap();
        let spec = net.layers[0].spec;
        assert_eq!(
            (spec.x, spec.y, spec.f_x, spec.f_y, spec.c_in, spec.c_out),
            (1, 1, 1, 1, 10, 4)
        );
    }

    #[test]
    fn mismatched_c_in_names_layer() {
        let json = br#"{"name":"t","input_shape":[1,8,8],"layers":[
            {"kind":"conv","c_out":4,"f":[3,3],"padding":1},
            {"kind":"conv","c_out":8,"c_in":5,"f":[3,3],"padding":1}
        ]}"#;
        match parse_network(json) {
            Err(NetError::ShapeChain {
                layer,
                expected,
                got,
            }) => {
                assert_eq!((layer, expected, got), (1, 4, 5));
            }
            other => panic!("expected shape-chain error, got {other:?}"),
        }
    }

    #[test]
    fn even_filter_names_layer() {
        let json = br#"{"name":"t","input_shape":[1,8,8],"layers":[
            {"kind":"conv","c_out":4,"f":[4,4]}
        ]}"#;
        assert!(matches!(
            parse_network(json),
            Err(NetError::EvenFilter { layer: 0, .. })
        ));
    }

    #[test]
    fn malformed_json_reported() {
        assert!(matches!(
            parse_network(b"{not json"),
            Err(NetError::Malformed(_))
        ));
    }

    #[test]
    fn parse_serialize_parse_round_trips() {
        for json in [
            super::super::lenet5_json().as_bytes().to_vec(),
            super::super::vgg_small_json().as_bytes().to_vec(),
        ] {
            let net = parse_network(&json).unwrap();
            let reparsed = parse_network(serialize_network(&net).as_bytes()).unwrap();
            assert_eq!(net, reparsed);
        }
    }
}
