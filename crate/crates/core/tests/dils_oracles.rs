//! DILS oracles: the plain-net reductions, a hand-rolled dense mixing
//! evaluator, central finite differences over every parameter class, and the
//! two-line routing regression baseline.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dils_core::diagram::{BoxId, PortRef, Wire};
use dils_core::dils::{DilsNetwork, OnlineConfig};
use dils_core::learn::{mse, mse_grad, train, unfold_mlp, Activation, Loss};
use dils_core::testkit::{random_dils, random_net, routing_network, routing_stream};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn from_dnn_forward_matches_the_source_net() {
    let mut rng = rng(41);
    for case in 0..5 {
        let mut net = random_net(&mut rng, 8);
        let mut dils = DilsNetwork::from_dnn(&net);
        let n_in = net.flat().outer.inputs.len();
        for _ in 0..100 {
            let x: Vec<f64> = (0..n_in).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let a = net.forward(&x).unwrap();
            let b = dils.forward(&x).unwrap();
            for (ya, yb) in a.iter().zip(&b) {
                assert!((ya - yb).abs() < 1e-9, "case {case}: {ya} vs {yb}");
            }
        }
    }
}

#[test]
fn from_dnn_of_unfolded_neuron_has_three_singleton_destinations() {
    let net = unfold_mlp(&[3, 1], Activation::Sigmoid, 5).unwrap();
    let dils = DilsNetwork::from_dnn(&net);
    assert_eq!(dils.soft().len(), 3);
    for entry in dils.soft() {
        assert_eq!(entry.candidates.len(), 1, "dest {}", entry.dest);
    }
}

#[test]
fn frozen_wiring_reproduces_plain_training_step_for_step() {
    let data: Vec<(Vec<f64>, Vec<f64>)> = vec![
        (vec![0.2, -0.4], vec![0.3]),
        (vec![1.0, 0.5], vec![-0.2]),
        (vec![-0.7, 0.1], vec![0.8]),
        (vec![0.0, 0.9], vec![0.1]),
    ];
    let epochs = 25;
    let mut plain = unfold_mlp(&[2, 3, 1], Activation::Tanh, 77).unwrap();
    let mut dils = DilsNetwork::from_dnn(&plain);

    let plain_result = train(&mut plain, &data, Loss::Mse, epochs, 0.3).unwrap();
    let stream: Vec<(Vec<f64>, Vec<f64>)> =
        std::iter::repeat(data.clone()).take(epochs).flatten().collect();
    let cfg = OnlineConfig { eta_param: 0.3, eta_wire: 0.0, snapshot_every: 0 };
    let trace = dils.run_online(&stream, &cfg).unwrap();

    assert_eq!(trace.rows.len(), plain_result.step_losses.len());
    for (row, plain_loss) in trace.rows.iter().zip(&plain_result.step_losses) {
        assert!(
            (row.loss - plain_loss).abs() < 1e-9,
            "step {}: {} vs {}",
            row.step,
            row.loss,
            plain_loss
        );
    }
}

/// Hand-rolled mixing evaluation, independent of the library's forward pass.
fn dense_mixing_oracle(dils: &DilsNetwork, x: &[f64]) -> Vec<f64> {
    let outer = dils.outer();
    let input_of = |port: &str| -> f64 {
        x[outer.inputs.iter().position(|p| p.name == port).unwrap()]
    };
    // dependency order from the argmax wiring, computed by naive selection
    let hard = dils.hard_diagram();
    let feeds = hard.feeds();
    let mut done: BTreeMap<BoxId, f64> = BTreeMap::new();
    let mut remaining: Vec<BoxId> = hard.inner.keys().cloned().collect();
    let soft_by_dest: BTreeMap<&PortRef, usize> = dils
        .soft()
        .iter()
        .enumerate()
        .map(|(i, e)| (&e.dest, i))
        .collect();

    let source_val = |src: &PortRef, done: &BTreeMap<BoxId, f64>| -> Option<f64> {
        match src {
            PortRef::OuterInput { port } => Some(input_of(port)),
            PortRef::BoxOutput { box_id, .. } => done.get(box_id).copied(),
            _ => None,
        }
    };
    let effective = |dest: &PortRef, done: &BTreeMap<BoxId, f64>| -> f64 {
        match soft_by_dest.get(dest) {
            Some(&i) => {
                let e = &dils.soft()[i];
                let probs = e.probabilities();
                e.candidates
                    .iter()
                    .enumerate()
                    .map(|(c, cand)| {
                        probs[c] * e.gains[c] * source_val(cand, done).unwrap_or(0.0)
                    })
                    .sum()
            }
            None => source_val(&feeds[dest], done).expect("fixed feeds are ordered"),
        }
    };

    while !remaining.is_empty() {
        let idx = remaining
            .iter()
            .position(|id| {
                hard.inner[id].inputs.iter().all(|p| {
                    match &feeds[&PortRef::box_input(id.clone(), p.name.clone())] {
                        PortRef::BoxOutput { box_id, .. } => done.contains_key(box_id),
                        _ => true,
                    }
                })
            })
            .expect("argmax wiring is acyclic");
        let id = remaining.remove(idx);
        let unit = &dils.units()[&id];
        let ins: Vec<f64> = hard.inner[&id]
            .inputs
            .iter()
            .map(|p| effective(&PortRef::box_input(id.clone(), p.name.clone()), &done))
            .collect();
        let y = unit.output(&ins);
        done.insert(id, y);
    }
    outer
        .outputs
        .iter()
        .map(|p| effective(&PortRef::outer_output(p.name.clone()), &done))
        .collect()
}

#[test]
fn dils_forward_matches_dense_mixing_oracle() {
    let mut rng = rng(42);
    for case in 0..20 {
        let mut dils = random_dils(&mut rng, 6, 3);
        let n_in = dils.outer().inputs.len();
        for _ in 0..5 {
            let x: Vec<f64> = (0..n_in).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let got = dils.forward(&x).unwrap();
            let want = dense_mixing_oracle(&dils, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "case {case}: {g} vs {w}");
            }
        }
    }
}

#[test]
fn singleton_network_gradients_equal_plain_backward() {
    let mut rng = rng(43);
    for _ in 0..5 {
        let mut net = random_net(&mut rng, 8);
        let mut dils = DilsNetwork::from_dnn(&net);
        let n_in = net.flat().outer.inputs.len();
        let n_out = net.flat().outer.outputs.len();
        let x: Vec<f64> = (0..n_in).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let t: Vec<f64> = (0..n_out).map(|_| rng.random::<f64>()).collect();
        let y = net.forward(&x).unwrap();
        let plain = net.backward(&mse_grad(&y, &t)).unwrap();
        let y2 = dils.forward(&x).unwrap();
        assert_eq!(y, y2);
        let soft = dils.backward(&mse_grad(&y2, &t)).unwrap();
        for (id, g) in &plain.grads {
            let sg = &soft.units[id];
            assert_eq!(g.weights, sg.weights, "unit {id} weights");
            assert_eq!(g.bias, sg.bias, "unit {id} bias");
        }
    }
}

fn fd_ok(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= 1e-9 || diff <= 1e-5 * analytic.abs().max(numeric.abs())
}

#[test]
fn dils_gradients_match_finite_differences() {
    let mut rng = rng(44);
    let h = 1e-6;
    for case in 0..20 {
        let mut dils = random_dils(&mut rng, 10, 3);
        let n_in = dils.outer().inputs.len();
        let n_out = dils.outer().outputs.len();
        let x: Vec<f64> = (0..n_in).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let t: Vec<f64> = (0..n_out).map(|_| rng.random::<f64>()).collect();

        let y = dils.forward(&x).unwrap();
        let grads = dils.backward(&mse_grad(&y, &t)).unwrap();

        let mut loss_at = |dils: &mut DilsNetwork| -> f64 {
            let y = dils.forward(&x).unwrap();
            mse(&y, &t)
        };

        // unit parameters
        let ids: Vec<BoxId> = dils.units().keys().cloned().collect();
        for id in &ids {
            let n_w = dils.units()[id].weights.len();
            for wi in 0..=n_w {
                let read = |d: &DilsNetwork| {
                    let u = &d.units()[id];
                    if wi < n_w {
                        u.weights[wi]
                    } else {
                        u.bias
                    }
                };
                let write = |d: &mut DilsNetwork, v: f64| {
                    let u = d.unit_mut(id).unwrap();
                    if wi < n_w {
                        u.weights[wi] = v;
                    } else {
                        u.bias = v;
                    }
                };
                let saved = read(&dils);
                write(&mut dils, saved + h);
                let plus = loss_at(&mut dils);
                write(&mut dils, saved - h);
                let minus = loss_at(&mut dils);
                write(&mut dils, saved);
                let numeric = (plus - minus) / (2.0 * h);
                let analytic =
                    if wi < n_w { grads.units[id].weights[wi] } else { grads.units[id].bias };
                assert!(
                    fd_ok(analytic, numeric),
                    "case {case} unit {id} p{wi}: {analytic:e} vs {numeric:e}"
                );
            }
        }

        // wiring parameters
        for e_idx in 0..dils.soft().len() {
            for c in 0..dils.soft()[e_idx].candidates.len() {
                for is_gain in [false, true] {
                    let read = |d: &DilsNetwork| {
                        let e = &d.soft()[e_idx];
                        if is_gain {
                            e.gains[c]
                        } else {
                            e.logits[c]
                        }
                    };
                    let write = |d: &mut DilsNetwork, v: f64| {
                        let e = &mut d.soft_mut()[e_idx];
                        if is_gain {
                            e.gains[c] = v;
                        } else {
                            e.logits[c] = v;
                        }
                    };
                    let saved = read(&dils);
                    write(&mut dils, saved + h);
                    let plus = loss_at(&mut dils);
                    write(&mut dils, saved - h);
                    let minus = loss_at(&mut dils);
                    write(&mut dils, saved);
                    let numeric = (plus - minus) / (2.0 * h);
                    let analytic = if is_gain {
                        grads.gains[e_idx][c]
                    } else {
                        grads.logits[e_idx][c]
                    };
                    assert!(
                        fd_ok(analytic, numeric),
                        "case {case} entry {e_idx} cand {c} gain={is_gain}: {analytic:e} vs {numeric:e}"
                    );
                }
            }
        }
    }
}

#[test]
fn zero_rates_are_a_fixed_interacting_system() {
    let mut rng = rng(45);
    let mut dils = random_dils(&mut rng, 6, 2);
    let before_units = dils.units().clone();
    let before_soft = dils.soft().to_vec();
    let n_in = dils.outer().inputs.len();
    let n_out = dils.outer().outputs.len();
    let stream: Vec<(Vec<f64>, Vec<f64>)> = (0..1000)
        .map(|i| {
            (
                (0..n_in).map(|j| ((i + j) as f64 * 0.01).sin()).collect(),
                (0..n_out).map(|j| ((i * j) as f64 * 0.02).cos()).collect(),
            )
        })
        .collect();
    let cfg = OnlineConfig { eta_param: 0.0, eta_wire: 0.0, snapshot_every: 100 };
    let trace = dils.run_online(&stream, &cfg).unwrap();
    assert_eq!(dils.units(), &before_units);
    assert_eq!(dils.soft(), &before_soft[..]);
    assert_eq!(trace.rows.len(), 1000);
    let first = &trace.snapshots[0].hard;
    assert_eq!(trace.snapshots.len(), 11);
    for snap in &trace.snapshots {
        assert_eq!(&snap.hard, first);
        assert!(snap.hard.validate().is_ok());
    }
}

#[test]
fn routing_task_rewires_to_the_correct_line() {
    // regression baseline, frozen from the first verified run:
    // seeds 0..10, target = line 1 (the tie-break starts argmax on line 0)
    let mut successes = 0;
    let mut outcomes = Vec::new();
    for seed in 0..10u64 {
        let mut net = routing_network();
        let mut stream_rng = rng(1000 + seed);
        let stream = routing_stream(&mut stream_rng, 2000, 1);
        let cfg = OnlineConfig { eta_param: 0.02, eta_wire: 0.25, snapshot_every: 500 };
        let trace = net.run_online(&stream, &cfg).unwrap();
        assert!(trace.halted.is_none());
        let final_snap = net.harden();
        let wire_to_line1 = Wire::new(
            PortRef::outer_input("x1"),
            PortRef::box_input("route", "in0"),
        );
        let ok = final_snap.hard.wires.contains(&wire_to_line1);
        outcomes.push((seed, ok));
        if ok {
            successes += 1;
        }
    }
    println!("routing outcomes: {outcomes:?}");
    assert!(successes >= 8, "only {successes}/10 routing runs rewired: {outcomes:?}");
}

#[test]
fn routing_snapshots_differ_in_exactly_the_rerouted_destination() {
    let mut net = routing_network();
    let before = net.harden();
    let mut stream_rng = rng(2024);
    let stream = routing_stream(&mut stream_rng, 2000, 1);
    let cfg = OnlineConfig { eta_param: 0.02, eta_wire: 0.25, snapshot_every: 0 };
    net.run_online(&stream, &cfg).unwrap();
    let after = net.harden();

    assert!(before.hard.validate().is_ok());
    assert!(after.hard.validate().is_ok());
    let only_before: Vec<&Wire> =
        before.hard.wires.difference(&after.hard.wires).collect();
    let only_after: Vec<&Wire> = after.hard.wires.difference(&before.hard.wires).collect();
    assert_eq!(only_before.len(), 1);
    assert_eq!(only_after.len(), 1);
    assert_eq!(only_before[0].dest, only_after[0].dest);
    assert_eq!(only_after[0].source, PortRef::outer_input("x1"));
}

#[test]
fn identical_values_and_unit_gains_mix_to_that_value() {
    let mut net = routing_network();
    let y = net.forward(&[2.5, 2.5]).unwrap();
    assert!((y[0] - 2.5).abs() < 1e-15);
}
