use std::sync::Arc;

use parasgd_core::data::{generate_synthetic, Dataset};
use parasgd_core::model::{Batch, LayerSpec, Net, NetParams, SgdConfig, WeightCollection};
use parasgd_core::rng;
use parasgd_core::{Error, NDArray};
use rand::Rng;

fn random_batch(n: usize, dims: [usize; 3], classes: usize, seed: u64) -> Batch {
    let mut s = rng::stream(seed, &[99]);
    let len = n * dims.iter().product::<usize>();
    let data = (0..len).map(|_| s.random_range(-1.0..1.0)).collect();
    let labels = (0..n).map(|_| s.random_range(0..classes)).collect();
    Batch { images: NDArray::new(&[n, dims[0], dims[1], dims[2]], data).unwrap(), labels }
}

/// Micro architectures covering every layer kind.
fn micro_nets() -> Vec<(NetParams, [usize; 3])> {
    vec![
        (
            NetParams::new(vec![
                LayerSpec::data("data", [3, 2, 6, 7]),
                LayerSpec::label("label", 3),
                LayerSpec::conv("conv1", &["data"], (3, 2), 3),
                LayerSpec::max_pool("pool1", &["conv1"], (2, 2), (2, 2)),
                LayerSpec::relu("relu1", &["pool1"]),
                LayerSpec::linear("ip1", &["relu1"], 5),
                LayerSpec::relu("relu2", &["ip1"]),
                LayerSpec::linear("ip2", &["relu2"], 4),
                LayerSpec::softmax_with_loss("loss", "ip2", "label"),
            ])
            .unwrap(),
            [2, 6, 7],
        ),
        (
            NetParams::new(vec![
                LayerSpec::data("data", [2, 1, 9, 9]),
                LayerSpec::label("label", 2),
                LayerSpec::conv("conv1", &["data"], (3, 3), 2),
                LayerSpec::max_pool("pool1", &["conv1"], (3, 3), (2, 2)),
                LayerSpec::conv("conv2", &["pool1"], (2, 2), 3),
                LayerSpec::linear("ip", &["conv2"], 3),
                LayerSpec::softmax_with_loss("loss", "ip", "label"),
            ])
            .unwrap(),
            [1, 9, 9],
        ),
        (NetParams::mlp(4, [1, 3, 3], 6, 3).unwrap(), [1, 3, 3]),
    ]
}

struct CheckStats {
    checked: usize,
    skipped: usize,
    worst: f64,
}

/// Central differences, step 1e-5, on every weight entry. Entries whose ±h
/// perturbation changes a ReLU mask or a pool winner are not differentiable
/// at that scale and are skipped (and counted).
fn finite_difference_check(net: &mut Net, batch: &Batch) -> CheckStats {
    const H: f64 = 1e-5;
    let analytic = net.backward(batch).unwrap();
    let base_sig = net.branch_signature(batch).unwrap();
    let mut stats = CheckStats { checked: 0, skipped: 0, worst: 0.0 };
    let shapes: Vec<usize> = net.weights().tensors().map(|t| t.len()).collect();
    for (ti, &len) in shapes.iter().enumerate() {
        for e in 0..len {
            let original = net.weights().tensors().nth(ti).unwrap().data()[e];
            let eval = |v: f64, net: &mut Net| {
                let mut w = net.get_weights();
                set_entry(&mut w, ti, e, v);
                net.set_weights(&w).unwrap();
                let sig = net.branch_signature(batch).unwrap();
                (net.forward(batch).unwrap().0, sig)
            };
            let (plus, sp) = eval(original + H, net);
            let (minus, sm) = eval(original - H, net);
            eval(original, net);
            if sp != base_sig || sm != base_sig {
                stats.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * H);
            let a = analytic.tensors().nth(ti).unwrap().data()[e];
            let scale = a.abs().max(numeric.abs());
            // below this both are roundoff-level noise
            let rel = if scale < 1e-9 { 0.0 } else { (a - numeric).abs() / scale };
            stats.worst = stats.worst.max(rel);
            stats.checked += 1;
        }
    }
    stats
}

fn set_entry(w: &mut WeightCollection, tensor: usize, entry: usize, v: f64) {
    let mut tensors: Vec<(String, Vec<NDArray>)> =
        w.iter().map(|(n, t)| (n.to_string(), t.to_vec())).collect();
    let mut idx = 0;
    for (_, ts) in tensors.iter_mut() {
        for t in ts.iter_mut() {
            if idx == tensor {
                t.data_mut()[entry] = v;
            }
            idx += 1;
        }
    }
    *w = WeightCollection::new(tensors);
}

#[test]
fn gradients_match_finite_differences() {
    let mut instances = 0;
    for (params, dims) in micro_nets() {
        for seed in 0..8u64 {
            let mut net = Net::build(&params, seed, SgdConfig::plain(0.1)).unwrap();
            let batch = random_batch(3, dims, params.num_classes(), seed + 100);
            let stats = finite_difference_check(&mut net, &batch);
            assert!(stats.worst < 1e-5, "seed {seed}: worst relative error {}", stats.worst);
            assert!(stats.skipped * 20 <= stats.checked, "too many kink crossings: {}", stats.skipped);
            instances += 1;
        }
    }
    assert!(instances >= 20);
}

/// Independent scalar evaluation of conv(2 filters, 3x3) → linear(3) →
/// softmax loss on 4x4 single-channel inputs.
fn scalar_micro_loss(x: &[[[f64; 4]; 4]], labels: &[usize], k: &[f64], kb: &[f64], w: &[f64], wb: &[f64]) -> f64 {
    let mut total = 0.0;
    for (img, &label) in x.iter().zip(labels) {
        let mut feat = Vec::new();
        for f in 0..2 {
            for oy in 0..2 {
                for ox in 0..2 {
                    let mut acc = kb[f];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            acc += k[f * 9 + ky * 3 + kx] * img[oy + ky][ox + kx];
                        }
                    }
                    feat.push(acc);
                }
            }
        }
        let logits: Vec<f64> = (0..3)
            .map(|c| wb[c] + (0..8).map(|i| w[c * 8 + i] * feat[i]).sum::<f64>())
            .collect();
        let lse = logits.iter().map(|z| z.exp()).sum::<f64>().ln();
        total += lse - logits[label];
    }
    total / labels.len() as f64
}

#[test]
fn micro_net_matches_scalar_evaluation() {
    let params = NetParams::new(vec![
        LayerSpec::data("data", [2, 1, 4, 4]),
        LayerSpec::label("label", 2),
        LayerSpec::conv("conv", &["data"], (3, 3), 2),
        LayerSpec::linear("ip", &["conv"], 3),
        LayerSpec::softmax_with_loss("loss", "ip", "label"),
    ])
    .unwrap();
    let k: Vec<f64> = (0..18).map(|i| ((i * 7 % 13) as f64 - 6.0) * 0.05).collect();
    let kb = [0.1, -0.2];
    let w: Vec<f64> = (0..24).map(|i| ((i * 5 % 11) as f64 - 5.0) * 0.03).collect();
    let wb = [0.0, 0.05, -0.05];
    let weights = WeightCollection::new(vec![
        ("data".into(), vec![]),
        ("label".into(), vec![]),
        (
            "conv".into(),
            vec![NDArray::new(&[2, 1, 3, 3], k.clone()).unwrap(), NDArray::new(&[2], kb.to_vec()).unwrap()],
        ),
        ("ip".into(), vec![NDArray::new(&[3, 8], w.clone()).unwrap(), NDArray::new(&[3], wb.to_vec()).unwrap()]),
        ("loss".into(), vec![]),
    ]);
    let mut net = Net::build(&params, 0, SgdConfig::plain(0.1)).unwrap();
    net.set_weights(&weights).unwrap();

    let mut imgs = [[[0.0; 4]; 4]; 2];
    for (s, img) in imgs.iter_mut().enumerate() {
        for (y, row) in img.iter_mut().enumerate() {
            for (x, v) in row.iter_mut().enumerate() {
                *v = ((s * 16 + y * 4 + x) as f64 * 0.37).sin();
            }
        }
    }
    let flat: Vec<f64> = imgs.iter().flatten().flatten().copied().collect();
    let labels = vec![2, 0];
    let batch = Batch { images: NDArray::new(&[2, 1, 4, 4], flat).unwrap(), labels: labels.clone() };
    let (loss, _) = net.forward(&batch).unwrap();
    let oracle = scalar_micro_loss(&imgs, &labels, &k, &kb, &w, &wb);
    assert!((loss - oracle).abs() < 1e-12, "{loss} vs {oracle}");
}

#[test]
fn zero_weights_give_uniform_softmax() {
    let params = NetParams::lenet_small(4, [1, 16, 16], 10).unwrap();
    let mut net = Net::build(&params, 3, SgdConfig::plain(0.1)).unwrap();
    let mut zero = net.get_weights();
    let entries: Vec<(String, Vec<NDArray>)> = zero
        .iter()
        .map(|(n, ts)| (n.to_string(), ts.iter().map(|t| NDArray::zeros(t.shape()).unwrap()).collect()))
        .collect();
    zero = WeightCollection::new(entries);
    net.set_weights(&zero).unwrap();
    let batch = random_batch(4, [1, 16, 16], 10, 1);
    let (loss, probs) = net.forward(&batch).unwrap();
    assert!((loss - 10f64.ln()).abs() < 1e-12);
    assert!((loss - 2.302585).abs() < 1e-6);
    assert!(probs.data().iter().all(|&p| (p - 0.1).abs() < 1e-15));
}

#[test]
fn softmax_rows_normalized_and_loss_nonnegative() {
    for (params, dims) in micro_nets() {
        let net = Net::build(&params, 5, SgdConfig::plain(0.1)).unwrap();
        for seed in 0..5 {
            let batch = random_batch(6, dims, params.num_classes(), seed);
            let (loss, probs) = net.forward(&batch).unwrap();
            assert!(loss >= 0.0);
            let c = params.num_classes();
            for row in probs.data().chunks(c) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn symmetric_two_class_batch_has_zero_bias_gradient() {
    let params = NetParams::mlp(4, [1, 2, 2], 3, 2).unwrap();
    let mut net = Net::build(&params, 8, SgdConfig::plain(0.1)).unwrap();
    // identical output rows → equal logits → p = (½, ½) for every input
    let mut entries: Vec<(String, Vec<NDArray>)> =
        net.get_weights().iter().map(|(n, t)| (n.to_string(), t.to_vec())).collect();
    let ip2 = &mut entries.iter_mut().find(|(n, _)| n == "ip2").unwrap().1;
    let row: Vec<f64> = ip2[0].data()[..3].to_vec();
    ip2[0] = NDArray::new(&[2, 3], [row.clone(), row].concat()).unwrap();
    net.set_weights(&WeightCollection::new(entries)).unwrap();

    let single = random_batch(3, [1, 2, 2], 2, 4);
    // each image appears once with each label
    let mut data = single.images.data().to_vec();
    data.extend_from_slice(single.images.data());
    let batch = Batch {
        images: NDArray::new(&[6, 1, 2, 2], data).unwrap(),
        labels: vec![0, 0, 0, 1, 1, 1],
    };
    let grad = net.backward(&batch).unwrap();
    let bias = &grad.get("ip2").unwrap()[1];
    assert!(bias.max_abs() < 1e-15, "{:?}", bias.data());
    // structure matches the weights
    assert!(grad.check_compatible(&net.get_weights()).is_ok());
}

#[test]
fn build_is_deterministic_and_validates() {
    let params = NetParams::lenet(100, [1, 28, 28], (20, 50), 500, 10).unwrap();
    let a = Net::build(&params, 42, SgdConfig::plain(0.01)).unwrap();
    let b = Net::build(&params, 42, SgdConfig::plain(0.01)).unwrap();
    assert!(a.get_weights().bit_identical(&b.get_weights()));
    let w = a.get_weights();
    assert_eq!(w.get("conv1").unwrap()[0].shape(), &[20, 1, 5, 5]);
    assert_eq!(w.get("ip2").unwrap()[0].shape()[0], 10);
    assert!(w.get("pool1").unwrap().is_empty());
    // uniform init bound and zero biases
    let s = (6.0f64 / (25.0 + 500.0)).sqrt();
    assert!(w.get("conv1").unwrap()[0].max_abs() <= s);
    assert_eq!(w.get("conv1").unwrap()[1].max_abs(), 0.0);
    let c = Net::build(&params, 43, SgdConfig::plain(0.01)).unwrap();
    assert!(!a.get_weights().bit_identical(&c.get_weights()));

    let bad = NetParams::new(vec![
        LayerSpec::data("data", [1, 1, 2, 2]),
        LayerSpec::label("label", 1),
        LayerSpec::linear("ip", &["foo"], 2),
        LayerSpec::softmax_with_loss("loss", "ip", "label"),
    ]);
    assert!(matches!(bad, Err(Error::Graph(_))));
}

#[test]
fn weights_copy_semantics() {
    let params = NetParams::mlp(2, [1, 2, 2], 3, 2).unwrap();
    let mut net = Net::build(&params, 1, SgdConfig::plain(0.1)).unwrap();
    let before = net.get_weights();
    let mut copy = net.get_weights();
    set_entry(&mut copy, 0, 0, 123.0);
    assert_eq!(net.get_weights(), before);
    net.set_weights(&copy).unwrap();
    assert_eq!(net.get_weights(), copy);

    let missing = WeightCollection::new(copy.iter().skip(1).map(|(n, t)| (n.to_string(), t.to_vec())).collect());
    assert!(matches!(net.set_weights(&missing), Err(Error::WeightMismatch(_))));
}

fn attach_stream(net: &mut Net, batches: Vec<Batch>) {
    net.set_training_data(Box::new(batches.into_iter()));
}

#[test]
fn train_semantics() {
    let params = NetParams::mlp(4, [1, 3, 3], 5, 3).unwrap();
    let batches: Vec<Batch> = (0..3).map(|s| random_batch(4, [1, 3, 3], 3, s)).collect();
    let lr = 0.3;

    let mut net = Net::build(&params, 2, SgdConfig::plain(lr)).unwrap();
    assert_eq!(net.train(1), Err(Error::NoData("training")));
    attach_stream(&mut net, batches.clone());
    let w0 = net.get_weights();
    net.train(0).unwrap();
    assert!(net.get_weights().bit_identical(&w0));

    let g = net.backward(&batches[0]).unwrap();
    net.train(1).unwrap();
    for (after, (before, grad)) in net.get_weights().tensors().zip(w0.tensors().zip(g.tensors())) {
        for ((&a, &b), &d) in after.data().iter().zip(before.data()).zip(grad.data()) {
            assert_eq!(a.to_bits(), (b - lr * d).to_bits());
        }
    }

    let mut two = Net::build(&params, 2, SgdConfig::plain(lr)).unwrap();
    attach_stream(&mut two, batches.clone());
    two.train(2).unwrap();
    let mut one_one = Net::build(&params, 2, SgdConfig::plain(lr)).unwrap();
    attach_stream(&mut one_one, batches.clone());
    one_one.train(1).unwrap();
    one_one.train(1).unwrap();
    assert!(two.get_weights().bit_identical(&one_one.get_weights()));

    // set(get) leaves the next step unchanged
    let mut round_trip = Net::build(&params, 2, SgdConfig::plain(lr)).unwrap();
    attach_stream(&mut round_trip, batches.clone());
    let w = round_trip.get_weights();
    round_trip.set_weights(&w).unwrap();
    round_trip.train(2).unwrap();
    assert!(round_trip.get_weights().bit_identical(&two.get_weights()));
}

#[test]
fn momentum_update() {
    let params = NetParams::mlp(4, [1, 2, 2], 3, 2).unwrap();
    let batches: Vec<Batch> = (0..2).map(|s| random_batch(4, [1, 2, 2], 2, s + 10)).collect();
    let (lr, mu) = (0.2, 0.9);
    let mut net = Net::build(&params, 4, SgdConfig { learning_rate: lr, momentum: mu }).unwrap();
    attach_stream(&mut net, batches.clone());
    let w0 = net.get_weights();
    let g0 = net.backward(&batches[0]).unwrap();
    net.train(1).unwrap();
    let w1 = net.get_weights();
    let g1 = net.backward(&batches[1]).unwrap();
    net.train(1).unwrap();
    let w2 = net.get_weights();
    for ((((a0, a1), a2), d0), d1) in
        w0.tensors().zip(w1.tensors()).zip(w2.tensors()).zip(g0.tensors()).zip(g1.tensors())
    {
        for i in 0..a0.len() {
            let v1 = -lr * d0.data()[i];
            let v2 = mu * v1 - lr * d1.data()[i];
            assert!((a1.data()[i] - (a0.data()[i] + v1)).abs() < 1e-15);
            assert!((a2.data()[i] - (a0.data()[i] + v1 + v2)).abs() < 1e-14);
        }
    }
}

#[test]
fn accuracy_semantics() {
    // two separable classes on pixel 0; a hand-set linear model is perfect
    let n = 40;
    let mut data = vec![0.0; n * 2];
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    for (i, &l) in labels.iter().enumerate() {
        data[i * 2] = if l == 0 { 1.0 } else { -1.0 };
        data[i * 2 + 1] = (i as f64).cos();
    }
    let ds = Arc::new(Dataset::new(NDArray::new(&[n, 1, 1, 2], data).unwrap(), labels, 2).unwrap());
    let params = NetParams::new(vec![
        LayerSpec::data("data", [8, 1, 1, 2]),
        LayerSpec::label("label", 8),
        LayerSpec::linear("ip", &["data"], 2),
        LayerSpec::softmax_with_loss("loss", "ip", "label"),
    ])
    .unwrap();
    let mut net = Net::build(&params, 0, SgdConfig::plain(0.1)).unwrap();
    assert_eq!(net.test(1), Err(Error::NoData("validation")));
    let perfect = WeightCollection::new(vec![
        ("data".into(), vec![]),
        ("label".into(), vec![]),
        (
            "ip".into(),
            vec![NDArray::new(&[2, 2], vec![1.0, 0.0, -1.0, 0.0]).unwrap(), NDArray::zeros(&[2]).unwrap()],
        ),
        ("loss".into(), vec![]),
    ]);
    net.set_weights(&perfect).unwrap();
    net.set_validation_data(Box::new(ds.clone().sequential_batches(8).unwrap()));
    assert_eq!(net.test(ds.batches_per_pass(8)).unwrap(), 1.0);

    // untrained network on balanced 10-class noise is at chance
    let noise = Arc::new(generate_synthetic(10, [1, 16, 16], 120, 0.0, 77).unwrap());
    let params = NetParams::lenet_small(50, [1, 16, 16], 10).unwrap();
    let mut net = Net::build(&params, 9, SgdConfig::plain(0.1)).unwrap();
    net.set_validation_data(Box::new(noise.clone().sequential_batches(70).unwrap()));
    let steps = noise.batches_per_pass(70);
    let acc = net.test(steps).unwrap();
    assert!((acc - 0.1).abs() <= 0.05, "chance accuracy {acc}");
    // a full pass equals the exhaustive count
    let all: Vec<usize> = (0..noise.len()).collect();
    let (hits, total) = net.count_correct(&noise.gather(&all)).unwrap();
    assert_eq!(acc, hits as f64 / total as f64);
    // deterministic given iterator state: the next pass repeats
    assert_eq!(net.test(steps).unwrap(), acc);
}

#[test]
fn forward_rejects_bad_batches() {
    let params = NetParams::mlp(4, [1, 2, 2], 3, 2).unwrap();
    let net = Net::build(&params, 1, SgdConfig::plain(0.1)).unwrap();
    let wrong_dims = random_batch(2, [1, 3, 3], 2, 0);
    assert!(matches!(net.forward(&wrong_dims), Err(Error::BatchMismatch(_))));
    let mut bad_label = random_batch(2, [1, 2, 2], 2, 0);
    bad_label.labels[0] = 5;
    assert!(matches!(net.forward(&bad_label), Err(Error::BatchMismatch(_))));
}

#[test]
fn divergence_is_an_error() {
    let params = NetParams::mlp(4, [1, 2, 2], 3, 2).unwrap();
    let mut net = Net::build(&params, 1, SgdConfig::plain(1e300)).unwrap();
    let batches: Vec<Batch> = (0..10).map(|s| random_batch(4, [1, 2, 2], 2, s)).collect();
    attach_stream(&mut net, batches);
    assert!(matches!(net.train(10), Err(Error::NonFinite(_))));
}
