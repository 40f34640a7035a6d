use super::*;
use crate::net::{parse_network, reference_convolution, Tensor4};

fn tiny8_json() -> &'static [u8] {
    br#"{"name":"tiny8","input_shape":[1,8,8],"layers":[
        {"kind":"conv","c_out":4,"f":[3,3],"padding":1,"activation":"relu","pool":2},
        {"kind":"fc","c_out":2}
    ]}"#
}

fn micro_json() -> &'static [u8] {
    // LeNet-shaped but every dimension <= 4
    br#"{"name":"micro","input_shape":[1,4,4],"layers":[
        {"kind":"conv","c_out":2,"f":[3,3],"padding":1,"activation":"relu","pool":2},
        {"kind":"fc","c_out":4,"activation":"relu"},
        {"kind":"fc","c_out":3}
    ]}"#
}

fn rand_batch(seed: u64, dims: [usize; 4]) -> Tensor4<f64> {
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Tensor4::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0))
}

#[test]
fn zero_input_zero_bias_gives_zero_logits() {
    let net = parse_network(tiny8_json()).unwrap();
    let model = Model::<f32>::new(net, 1).unwrap();
    let batch = Tensor4::zeros([3, 1, 8, 8]);
    let logits = model.forward(&batch).unwrap();
    assert!(logits.data().iter().all(|&v| v == 0.0));
}

#[test]
fn forward_matches_reference_composition() {
    let net = parse_network(crate::net::lenet5_json().as_bytes()).unwrap();
    let mut model = Model::<f64>::new(net.clone(), 7).unwrap();
    model.act_bits = None;
    // nonzero biases so the composition exercises them
    for (l, layer) in model.layers.iter_mut().enumerate() {
        for (i, b) in layer.bias.iter_mut().enumerate() {
            *b = 0.01 * (l as f64 + 1.0) * (i as f64 - 2.0);
        }
    }
    let batch = rand_batch(21, [2, 1, 28, 28]);
    let fast = model.forward(&batch).unwrap();

    // independent composition: reference convolution + ReLU + max-pool + fc
    let relu = |t: &mut Vec<f64>| {
        for v in t.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    };
    let pool2 = |data: &[f64], c: usize, h: usize, w: usize| -> Vec<f64> {
        let (oh, ow) = (h / 2, w / 2);
        let mut out = vec![f64::NEG_INFINITY; c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for x in 0..ow {
                    let mut m = f64::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            m = m.max(data[(ch * h + y * 2 + dy) * w + x * 2 + dx]);
                        }
                    }
                    out[(ch * oh + y) * ow + x] = m;
                }
            }
        }
        out
    };

    for s in 0..2 {
        // conv1
        let l0 = net.layers[0].spec;
        let input = Tensor4::new(
            [1, 1, 28, 28],
            batch.data()[s * 784..(s + 1) * 784].to_vec(),
        );
        let w0 = Tensor4::new([6, 1, 5, 5], model.effective_weights(0));
        let conv1 = reference_convolution(&input, &w0, &l0).unwrap();
        let mut a: Vec<f64> = conv1
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + model.layers[0].bias[i / (28 * 28)])
            .collect();
        relu(&mut a);
        let a = pool2(&a, 6, 28, 28);
        // conv2
        let l1 = net.layers[1].spec;
        let input = Tensor4::new([1, 6, 14, 14], a);
        let w1 = Tensor4::new([16, 6, 5, 5], model.effective_weights(1));
        let conv2 = reference_convolution(&input, &w1, &l1).unwrap();
        let mut a: Vec<f64> = conv2
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + model.layers[1].bias[i / (10 * 10)])
            .collect();
        relu(&mut a);
        let mut a = pool2(&a, 16, 10, 10);
        // fc1 + relu, fc2
        for l in 2..4 {
            let spec = net.layers[l].spec;
            let w = model.effective_weights(l);
            let mut out = vec![0.0f64; spec.c_out];
            for (c_o, o) in out.iter_mut().enumerate() {
                let mut acc = model.layers[l].bias[c_o];
                for (k, &v) in a.iter().enumerate() {
                    acc += w[c_o * spec.c_in + k] * v;
                }
                *o = acc;
            }
            if net.layers[l].activation.is_some() {
                relu(&mut out);
            }
            a = out;
        }
        for (j, &expect) in a.iter().enumerate() {
            let got = fast.at(s, j, 0, 0);
            assert!(
                (got - expect).abs() < 1e-9,
                "sample {s} logit {j}: {got} vs {expect}"
            );
        }
    }
}

#[test]
fn permuting_batch_permutes_logits() {
    let net = parse_network(tiny8_json()).unwrap();
    let model = Model::<f64>::new(net, 5).unwrap();
    let batch = rand_batch(3, [4, 1, 8, 8]);
    let logits = model.forward(&batch).unwrap();
    let perm = [2usize, 0, 3, 1];
    let mut permuted = Vec::new();
    for &p in &perm {
        permuted.extend_from_slice(&batch.data()[p * 64..(p + 1) * 64]);
    }
    let logits_p = model.forward(&Tensor4::new([4, 1, 8, 8], permuted)).unwrap();
    for (s, &p) in perm.iter().enumerate() {
        for j in 0..2 {
            assert_eq!(logits_p.at(s, j, 0, 0), logits.at(p, j, 0, 0));
        }
    }
}

#[test]
fn zero_learning_rate_keeps_weights() {
    let net = parse_network(tiny8_json()).unwrap();
    let mut model = Model::<f32>::new(net, 2).unwrap();
    let before = model.clone();
    let ds = synthetic_dataset(4, 32, 2);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..TrainConfig::default()
    };
    let loss = train_epoch(&mut model, &ds, &cfg).unwrap();
    assert!(loss.is_finite());
    assert_eq!(model, before);
}

#[test]
fn masked_entries_stay_zero_through_training() {
    let net = parse_network(tiny8_json()).unwrap();
    let mut model = Model::<f32>::new(net, 3).unwrap();
    // prune half of conv weights, quantize at 4 bits
    for i in 0..model.layers[0].weights.len() {
        if i % 2 == 0 {
            model.layers[0].mask[i] = 0;
            model.layers[0].weights[i] = 0.0;
        }
    }
    model.layers[0].q_bits = Some(4);
    let ds = synthetic_dataset(4, 64, 2);
    let cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    train(&mut model, &ds, &cfg).unwrap();
    for (i, &w) in model.layers[0].weights.iter().enumerate() {
        if i % 2 == 0 {
            assert_eq!(w, 0.0, "weight {i} must stay exactly zero");
        }
    }
}

#[test]
fn trains_synthetic_two_class_set() {
    let net = parse_network(tiny8_json()).unwrap();
    let mut model = Model::<f32>::new(net, 11).unwrap();
    let ds = synthetic_dataset(8, 200, 2);
    let cfg = TrainConfig {
        epochs: 10,
        seed: 1,
        ..TrainConfig::default()
    };
    train(&mut model, &ds, &cfg).unwrap();
    let acc = evaluate(&model, &ds).unwrap();
    assert!(acc >= 0.95, "train accuracy {acc} below 0.95");
}

#[test]
fn constant_predictor_scores_class_share() {
    let net = parse_network(
        br#"{"name":"t","input_shape":[1,8,8],"layers":[{"kind":"fc","c_out":10}]}"#,
    )
    .unwrap();
    let mut model = Model::<f32>::new(net, 0).unwrap();
    for w in &mut model.layers[0].weights {
        *w = 0.0;
    }
    model.layers[0].bias[3] = 1.0; // always predicts class 3
    let ds = synthetic_dataset(5, 100, 10);
    let acc = evaluate(&model, &ds).unwrap();
    assert_eq!(acc, 0.10);
}

#[test]
fn evaluate_is_deterministic() {
    let net = parse_network(tiny8_json()).unwrap();
    let model = Model::<f32>::new(net, 6).unwrap();
    let ds = synthetic_dataset(6, 300, 2);
    assert_eq!(evaluate(&model, &ds).unwrap(), evaluate(&model, &ds).unwrap());
}

#[test]
fn training_is_bit_deterministic() {
    let net = parse_network(tiny8_json()).unwrap();
    let ds = synthetic_dataset(12, 64, 2);
    let cfg = TrainConfig {
        epochs: 3,
        seed: 9,
        ..TrainConfig::default()
    };
    let mut a = Model::<f32>::new(net.clone(), 13).unwrap();
    let mut b = Model::<f32>::new(net, 13).unwrap();
    let la = train(&mut a, &ds, &cfg).unwrap();
    let lb = train(&mut b, &ds, &cfg).unwrap();
    assert_eq!(la, lb);
    assert_eq!(a, b);
}

#[test]
fn untrained_lenet_near_chance_on_digits() {
    let net = parse_network(crate::net::lenet5_json().as_bytes()).unwrap();
    let model = Model::<f32>::new(net, 17).unwrap();
    let ds = synthetic_digits(23, 500);
    let acc = evaluate(&model, &ds).unwrap();
    assert!(
        (0.05..=0.20).contains(&acc),
        "untrained accuracy {acc} outside the chance band"
    );
}

#[test]
fn gradient_check_micro_cnn() {
    let net = parse_network(micro_json()).unwrap();
    let model = Model::<f64>::new(net, 19).unwrap();
    let batch = rand_batch(31, [3, 1, 4, 4]);
    let err = gradient_check(&model, &batch, &[0, 2, 1]).unwrap();
    assert!(err <= 1e-5, "max relative error {err}");
}

#[test]
fn gradient_check_fc_only() {
    let net = parse_network(
        br#"{"name":"fc","input_shape":[6,1,1],"layers":[
            {"kind":"fc","c_out":5,"activation":"relu"},
            {"kind":"fc","c_out":3}
        ]}"#,
    )
    .unwrap();
    let model = Model::<f64>::new(net, 23).unwrap();
    let batch = rand_batch(37, [4, 6, 1, 1]);
    let err = gradient_check(&model, &batch, &[0, 1, 2, 0]).unwrap();
    assert!(err <= 1e-7, "max relative error {err}");
}

#[test]
fn zero_input_gives_zero_conv_weight_gradient() {
    let net = parse_network(micro_json()).unwrap();
    let model = Model::<f64>::new(net, 29).unwrap();
    let batch = Tensor4::zeros([2, 1, 4, 4]);
    let cache = model.forward_cached(&batch).unwrap();
    let (_, d_logits) = cross_entropy(cache.logits(), &[0, 1]).unwrap();
    let grads = model.backward(&cache, &d_logits);
    assert!(grads[0].d_weights.iter().all(|&g| g == 0.0));
}

#[test]
fn one_small_step_decreases_batch_loss() {
    let net = parse_network(tiny8_json()).unwrap();
    let mut model = Model::<f32>::new(net, 41).unwrap();
    let ds = synthetic_dataset(43, 32, 2);
    let idxs: Vec<usize> = (0..32).collect();
    let (batch, labels) = ds.batch::<f32>(&idxs);
    let before = cross_entropy(&model.forward(&batch).unwrap(), &labels).unwrap().0;
    let cfg = TrainConfig {
        learning_rate: 0.01,
        momentum: 0.0,
        batch_size: 32,
        epochs: 1,
        seed: 0,
    };
    train_epoch(&mut model, &ds.take(32), &cfg).unwrap();
    let after = cross_entropy(&model.forward(&batch).unwrap(), &labels).unwrap().0;
    assert!(after < before, "loss {before} -> {after}");
}

#[test]
fn straight_through_gradient_contract() {
    let net = parse_network(tiny8_json()).unwrap();
    let mut quantized = Model::<f64>::new(net, 47).unwrap();
    for i in [0, 3, 5] {
        quantized.layers[0].mask[i] = 0;
        quantized.layers[0].weights[i] = 0.0;
    }
    quantized.layers[0].q_bits = Some(3);
    quantized.layers[1].q_bits = Some(5);

    // a plain model whose underlying weights are the quantized forward weights
    let mut plain = quantized.clone();
    for l in 0..plain.layers.len() {
        plain.layers[l].weights = quantized.effective_weights(l);
        plain.layers[l].q_bits = None;
    }

    let batch = rand_batch(53, [4, 1, 8, 8]);
    let labels = [0u8, 1, 1, 0];
    let g_q = {
        let cache = quantized.forward_cached(&batch).unwrap();
        let (_, d) = cross_entropy(cache.logits(), &labels).unwrap();
        quantized.backward(&cache, &d)
    };
    let g_p = {
        let cache = plain.forward_cached(&batch).unwrap();
        let (_, d) = cross_entropy(cache.logits(), &labels).unwrap();
        plain.backward(&cache, &d)
    };
    for l in 0..g_q.len() {
        for i in 0..g_q[l].d_weights.len() {
            let masked = g_p[l].d_weights[i]
                * if quantized.layers[l].mask[i] == 0 { 0.0 } else { 1.0 };
            let applied = g_q[l].d_weights[i]
                * if quantized.layers[l].mask[i] == 0 { 0.0 } else { 1.0 };
            assert_eq!(applied, masked, "layer {l} weight {i}");
        }
    }
}

#[test]
fn checkpoint_round_trip_preserves_evaluation() {
    let net = parse_network(tiny8_json()).unwrap();
    let mut model = Model::<f32>::new(net, 59).unwrap();
    let ds = synthetic_dataset(61, 64, 2);
    train(&mut model, &ds, &TrainConfig::default()).unwrap();
    let restored = checkpoint_restore(&checkpoint_save(&model)).unwrap();
    assert_eq!(model, restored);
    assert_eq!(evaluate(&model, &ds).unwrap(), evaluate(&restored, &ds).unwrap());
}

#[test]
fn apply_compression_integration() {
    use crate::compress::{apply_compression, CompressionState};
    let net = parse_network(tiny8_json()).unwrap();
    let mut model = Model::<f32>::new(net, 67).unwrap();
    // identity configuration: weights already on the 8-bit grid stay put
    let grid = crate::compress::quantize_weights(&model.layers[0].weights, 8);
    model.layers[0].weights = grid.clone();
    let fc_grid = crate::compress::quantize_weights(&model.layers[1].weights, 8);
    model.layers[1].weights = fc_grid;
    let before = model.clone();
    let state = CompressionState::new(2, 0.9).unwrap();
    apply_compression(&mut model, &state).unwrap();
    assert_eq!(model.layers[0].weights, before.layers[0].weights);
    assert_eq!(model.layers[1].weights, before.layers[1].weights);

    // half pruning on a 4-weight fc layer leaves exactly 2 zeros
    let net = parse_network(
        br#"{"name":"t","input_shape":[2,1,1],"layers":[{"kind":"fc","c_out":2}]}"#,
    )
    .unwrap();
    let mut model = Model::<f32>::new(net, 71).unwrap();
    let state = CompressionState::with_initial(vec![8.0], vec![0.5], 0.9).unwrap();
    apply_compression(&mut model, &state).unwrap();
    let zeros = model.layers[0].weights.iter().filter(|&&w| w == 0.0).count();
    assert_eq!(zeros, 2);
    assert_eq!(model.layers[0].mask.iter().filter(|&&m| m == 0).count(), 2);
}

#[test]
fn compression_keeps_configured_fraction() {
    use crate::compress::{apply_compression, CompressionState};
    let net = parse_network(micro_json()).unwrap();
    let mut model = Model::<f32>::new(net, 73).unwrap();
    // keep magnitudes clear of the quantizer's zero bucket so kept weights
    // cannot round to zero at 8 bits
    for layer in &mut model.layers {
        for w in &mut layer.weights {
            *w = w.signum() * (0.3 + w.abs());
        }
    }
    let p = [0.9, 0.4, 0.7];
    let state = CompressionState::with_initial(vec![8.0; 3], p.to_vec(), 0.9).unwrap();
    apply_compression(&mut model, &state).unwrap();
    for (l, layer) in model.layers.iter().enumerate() {
        let n = layer.weights.len();
        let nonzero = layer.weights.iter().filter(|&&w| w != 0.0).count();
        let expect = (p[l] * n as f64).round() as usize;
        assert_eq!(nonzero, expect, "layer {l}");
    }
}
