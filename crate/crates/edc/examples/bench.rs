use std::time::Instant;
use edc::net::parse_network;
use edc::rl::multistep_vs_onestep_pruning;
use edc::trainer::*;

fn main() {
    let net = parse_network(edc::net::lenet5_json().as_bytes()).unwrap();
    let train_set = synthetic_digits(7, 10_000);
    let eval_set = synthetic_digits(8, 2_000);
    let mut model = Model::<f32>::new(net, 0).unwrap();
    let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
    train(&mut model, &train_set, &cfg).unwrap();
    println!("baseline acc: {:.4}", evaluate(&model, &eval_set).unwrap());

    let t0 = Instant::now();
    let cmp = multistep_vs_onestep_pruning(&model, &train_set, &eval_set, 0.05, 32,
        &TrainConfig { seed: 1, ..TrainConfig::default() }).unwrap();
    println!("pruning comparison in {:?}", t0.elapsed());
    println!("multi {:.4}  single {:.4}  baseline {:.4}", cmp.multi_accuracy, cmp.single_accuracy, cmp.baseline_accuracy);
}
