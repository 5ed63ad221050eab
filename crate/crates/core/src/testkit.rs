//! Seeded random generators for diagrams, trees, systems, and networks.
//!
//! Everything here is deterministic given the caller's RNG state; the law and
//! acceptance suites are built on these. Generated diagrams always satisfy the
//! structural invariants (single feed, kind match, legal directions) by
//! construction.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diagram::{
    BoxId, BoxInterface, DiagramTree, PortRef, PortSpec, ValueKind, Wire, WiringDiagram,
};
use crate::dils::{DilsNetwork, SoftEntry};
use crate::dynamics::{CombinationalSystem, ContinuousSystem, MooreSystem};
use crate::learn::{Activation, DiagramNet, LearnerUnit};
use crate::value::Value;

/// Shape limits and wiring style for generated diagrams.
#[derive(Debug, Clone)]
pub struct GenConfig {
    pub max_boxes: usize,
    /// Maximum ports per side of any interface.
    pub max_ports: usize,
    pub kinds: Vec<ValueKind>,
    /// Restrict box-to-box wires to flow from lower to higher box index.
    pub acyclic: bool,
    /// Permit outer-input -> outer-output feeds.
    pub allow_pass_through: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            max_boxes: 4,
            max_ports: 3,
            kinds: vec![ValueKind::Boolean, ValueKind::Real, ValueKind::RealVector(2)],
            acyclic: false,
            allow_pass_through: true,
        }
    }
}

impl GenConfig {
    pub fn real_only() -> Self {
        Self { kinds: vec![ValueKind::Real], ..Self::default() }
    }

    pub fn boolean_only() -> Self {
        Self { kinds: vec![ValueKind::Boolean], ..Self::default() }
    }

    fn sample_kind(&self, rng: &mut ChaCha8Rng) -> ValueKind {
        self.kinds[rng.random_range(0..self.kinds.len())]
    }
}

fn sample_iface(rng: &mut ChaCha8Rng, cfg: &GenConfig) -> BoxInterface {
    let n_in = rng.random_range(0..=cfg.max_ports);
    let n_out = rng.random_range(0..=cfg.max_ports);
    BoxInterface::new(
        (0..n_in).map(|i| PortSpec::new(format!("i{i}"), cfg.sample_kind(rng))).collect(),
        (0..n_out).map(|i| PortSpec::new(format!("o{i}"), cfg.sample_kind(rng))).collect(),
    )
}

/// A random valid diagram.
pub fn random_diagram(rng: &mut ChaCha8Rng, cfg: &GenConfig) -> WiringDiagram {
    let n_in = rng.random_range(0..=cfg.max_ports);
    let outer_inputs: Vec<PortSpec> =
        (0..n_in).map(|i| PortSpec::new(format!("a{i}"), cfg.sample_kind(rng))).collect();
    let mut d = WiringDiagram::new(BoxInterface::new(outer_inputs, Vec::new()));

    let n_boxes = rng.random_range(1..=cfg.max_boxes);
    let mut box_ids = Vec::new();
    for i in 0..n_boxes {
        let id = BoxId::from(format!("b{i}"));
        d.add_box(id.clone(), sample_iface(rng, cfg));
        box_ids.push(id);
    }

    wire_up(rng, cfg, &mut d, &box_ids, None);
    d
}

/// A random valid diagram with a mandated outer interface.
pub fn random_diagram_with_outer(
    rng: &mut ChaCha8Rng,
    cfg: &GenConfig,
    outer: &BoxInterface,
) -> WiringDiagram {
    let mut d = WiringDiagram::new(BoxInterface::new(outer.inputs.clone(), Vec::new()));
    let n_boxes = rng.random_range(1..=cfg.max_boxes);
    let mut box_ids = Vec::new();
    for i in 0..n_boxes {
        let id = BoxId::from(format!("b{i}"));
        d.add_box(id.clone(), sample_iface(rng, cfg));
        box_ids.push(id);
    }
    wire_up(rng, cfg, &mut d, &box_ids, Some(&outer.outputs));
    d
}

/// Feed every destination legally; mutates interfaces where no kind-matched
/// source exists (or adds a 0-input pad box when outputs are mandated).
fn wire_up(
    rng: &mut ChaCha8Rng,
    cfg: &GenConfig,
    d: &mut WiringDiagram,
    box_ids: &[BoxId],
    mandated_outputs: Option<&[PortSpec]>,
) {
    let sources_for_box = |d: &WiringDiagram, bi: usize| -> Vec<(PortRef, ValueKind)> {
        let mut out = Vec::new();
        for p in &d.outer.inputs {
            out.push((PortRef::outer_input(p.name.clone()), p.kind));
        }
        for (bj, id) in box_ids.iter().enumerate() {
            if cfg.acyclic && bj >= bi {
                continue;
            }
            for p in &d.inner[id].outputs {
                out.push((PortRef::box_output(id.clone(), p.name.clone()), p.kind));
            }
        }
        out
    };

    for (bi, id) in box_ids.iter().enumerate() {
        let ports: Vec<PortSpec> = d.inner[id].inputs.clone();
        for (pi, p) in ports.iter().enumerate() {
            let pool = sources_for_box(d, bi);
            let matching: Vec<&(PortRef, ValueKind)> =
                pool.iter().filter(|(_, k)| *k == p.kind).collect();
            let src = if matching.is_empty() {
                if pool.is_empty() {
                    // nothing can feed anything: grow a pad source box
                    let pad = BoxId::from(format!("pad_{id}_{pi}"));
                    d.add_box(
                        pad.clone(),
                        BoxInterface::new(Vec::new(), vec![PortSpec::new("o0", p.kind)]),
                    );
                    PortRef::box_output(pad, "o0")
                } else {
                    // retype the destination to a kind we can feed
                    let (src, kind) = pool[rng.random_range(0..pool.len())].clone();
                    d.inner.get_mut(id).expect("present").inputs[pi].kind = kind;
                    src
                }
            } else {
                matching[rng.random_range(0..matching.len())].0.clone()
            };
            d.add_wire(src, PortRef::box_input(id.clone(), p.name.clone()));
        }
    }

    // outer outputs: mandated ones must be fed at their kind; free ones adopt
    // their source's kind
    let mut output_pool: Vec<(PortRef, ValueKind)> = Vec::new();
    for (id, iface) in &d.inner {
        for p in &iface.outputs {
            output_pool.push((PortRef::box_output(id.clone(), p.name.clone()), p.kind));
        }
    }
    if cfg.allow_pass_through {
        for p in &d.outer.inputs {
            output_pool.push((PortRef::outer_input(p.name.clone()), p.kind));
        }
    }
    match mandated_outputs {
        Some(ports) => {
            for p in ports {
                let matching: Vec<&(PortRef, ValueKind)> =
                    output_pool.iter().filter(|(_, k)| *k == p.kind).collect();
                let src = if matching.is_empty() {
                    let pad = BoxId::from(format!("pad_out_{}", p.name));
                    d.add_box(
                        pad.clone(),
                        BoxInterface::new(Vec::new(), vec![PortSpec::new("o0", p.kind)]),
                    );
                    let src = PortRef::box_output(pad, "o0");
                    output_pool.push((src.clone(), p.kind));
                    src
                } else {
                    matching[rng.random_range(0..matching.len())].0.clone()
                };
                d.outer.outputs.push(p.clone());
                d.add_wire(src, PortRef::outer_output(p.name.clone()));
            }
        }
        None => {
            if !output_pool.is_empty() {
                let n_out = rng.random_range(0..=cfg.max_ports);
                for i in 0..n_out {
                    let (src, kind) = output_pool[rng.random_range(0..output_pool.len())].clone();
                    let name = format!("r{i}");
                    d.outer.outputs.push(PortSpec::new(name.clone(), kind));
                    d.add_wire(src, PortRef::outer_output(name));
                }
            }
        }
    }
}

/// A random nested tree; each box recurses into a sub-diagram with probability
/// 1/2 until `depth` runs out.
pub fn random_tree(rng: &mut ChaCha8Rng, cfg: &GenConfig, depth: usize) -> DiagramTree {
    let diagram = random_diagram(rng, cfg);
    expand_children(rng, cfg, diagram, depth)
}

fn expand_children(
    rng: &mut ChaCha8Rng,
    cfg: &GenConfig,
    diagram: WiringDiagram,
    depth: usize,
) -> DiagramTree {
    let mut tree = DiagramTree::leaf(diagram);
    if depth == 0 {
        return tree;
    }
    let ids: Vec<BoxId> = tree.diagram.inner.keys().cloned().collect();
    for id in ids {
        if rng.random_range(0..2) == 1 {
            let child_diagram = random_diagram_with_outer(rng, cfg, &tree.diagram.inner[&id]);
            let child = expand_children(rng, cfg, child_diagram, depth - 1);
            tree.children.insert(id, child);
        }
    }
    tree
}

fn unit_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

/// A Moore machine with tanh-linear readout and update (all-real interfaces).
pub fn random_moore_system(rng: &mut ChaCha8Rng, iface: &BoxInterface) -> MooreSystem {
    let n_state = rng.random_range(1..=2);
    let n_in = iface.inputs.len();
    let n_out = iface.outputs.len();
    let state: Vec<Value> = unit_vec(rng, n_state).into_iter().map(Value::Real).collect();
    let read_w: Vec<Vec<f64>> = (0..n_out).map(|_| unit_vec(rng, n_state)).collect();
    let up_s: Vec<Vec<f64>> = (0..n_state).map(|_| unit_vec(rng, n_state)).collect();
    let up_u: Vec<Vec<f64>> = (0..n_state).map(|_| unit_vec(rng, n_in)).collect();
    MooreSystem::new(
        iface.clone(),
        state,
        move |state| {
            let s: Vec<f64> = state.iter().map(|v| v.as_real().expect("real")).collect();
            read_w
                .iter()
                .map(|row| Value::Real(row.iter().zip(&s).map(|(w, x)| w * x).sum::<f64>().tanh()))
                .collect()
        },
        move |state, inputs| {
            let s: Vec<f64> = state.iter().map(|v| v.as_real().expect("real")).collect();
            let u: Vec<f64> = inputs.iter().map(|v| v.as_real().expect("real")).collect();
            (0..s.len())
                .map(|i| {
                    let a: f64 = up_s[i].iter().zip(&s).map(|(w, x)| w * x).sum();
                    let b: f64 = up_u[i].iter().zip(&u).map(|(w, x)| w * x).sum();
                    Value::Real((a + b).tanh())
                })
                .collect()
        },
    )
}

/// A linear open ODE with random coefficients (all-real scalar ports).
pub fn random_continuous_system(rng: &mut ChaCha8Rng, iface: &BoxInterface) -> ContinuousSystem {
    let n_state = rng.random_range(1..=2);
    let n_in = iface.inputs.len();
    let n_out = iface.outputs.len();
    let x0 = unit_vec(rng, n_state);
    let a: Vec<Vec<f64>> = (0..n_state).map(|_| unit_vec(rng, n_state)).collect();
    let b: Vec<Vec<f64>> = (0..n_state).map(|_| unit_vec(rng, n_in)).collect();
    let c: Vec<Vec<f64>> = (0..n_out).map(|_| unit_vec(rng, n_state)).collect();
    ContinuousSystem::new(
        iface.clone(),
        x0,
        move |state| {
            c.iter()
                .map(|row| Value::Real(row.iter().zip(state).map(|(w, x)| w * x).sum()))
                .collect()
        },
        move |state, inputs| {
            let u: Vec<f64> = inputs.iter().map(|v| v.as_real().expect("real")).collect();
            (0..state.len())
                .map(|i| {
                    let ax: f64 = a[i].iter().zip(state).map(|(w, x)| w * x).sum();
                    let bu: f64 = b[i].iter().zip(&u).map(|(w, x)| w * x).sum();
                    ax + bu
                })
                .collect()
        },
    )
}

/// A combinational boolean box with a random truth table.
pub fn random_boolean_system(rng: &mut ChaCha8Rng, iface: &BoxInterface) -> CombinationalSystem {
    let n_in = iface.inputs.len();
    let n_out = iface.outputs.len();
    let table: Vec<Vec<bool>> = (0..1usize << n_in)
        .map(|_| (0..n_out).map(|_| rng.random_range(0..2) == 1).collect())
        .collect();
    CombinationalSystem::new(iface.clone(), move |inputs| {
        let index = inputs
            .iter()
            .enumerate()
            .map(|(i, v)| (v.as_bool().expect("boolean") as usize) << i)
            .sum::<usize>();
        table[index].iter().map(|b| Value::Bool(*b)).collect()
    })
}

/// A random acyclic learner net: single-output real boxes plus random units.
pub fn random_net(rng: &mut ChaCha8Rng, max_units: usize) -> DiagramNet {
    let cfg = GenConfig {
        max_boxes: max_units,
        max_ports: 3,
        kinds: vec![ValueKind::Real],
        acyclic: true,
        allow_pass_through: false,
    };
    let n_in = rng.random_range(1..=cfg.max_ports);
    let outer_inputs: Vec<PortSpec> =
        (0..n_in).map(|i| PortSpec::real(format!("a{i}"))).collect();
    let mut d = WiringDiagram::new(BoxInterface::new(outer_inputs, Vec::new()));
    let n_boxes = rng.random_range(1..=max_units.max(1));
    let mut box_ids = Vec::new();
    for i in 0..n_boxes {
        let id = BoxId::from(format!("b{i}"));
        let fanin = rng.random_range(1..=cfg.max_ports);
        d.add_box(
            id.clone(),
            BoxInterface::new(
                (0..fanin).map(|k| PortSpec::real(format!("i{k}"))).collect(),
                vec![PortSpec::real("o0")],
            ),
        );
        box_ids.push(id);
    }
    wire_up(rng, &cfg, &mut d, &box_ids, None);
    if d.outer.outputs.is_empty() {
        let last = box_ids.last().expect("n_boxes >= 1").clone();
        d.outer.outputs.push(PortSpec::real("r0"));
        d.add_wire(PortRef::box_output(last, "o0"), PortRef::outer_output("r0"));
    }

    let acts = [Activation::Identity, Activation::Sigmoid, Activation::Tanh, Activation::Relu];
    let units: BTreeMap<BoxId, LearnerUnit> = d
        .inner
        .iter()
        .map(|(id, iface)| {
            let unit = LearnerUnit::new(
                unit_vec(rng, iface.inputs.len()),
                rng.random::<f64>() * 2.0 - 1.0,
                acts[rng.random_range(0..acts.len())],
            );
            (id.clone(), unit)
        })
        .collect();
    DiagramNet::new(DiagramTree::leaf(d), units, 0.1).expect("generated net is valid")
}

/// A random DILS network built on [`random_net`]'s structure.
///
/// Every box-to-box destination gets a soft entry whose first candidate is the
/// original feed, boosted so the argmax wiring stays acyclic; extra candidates
/// (possibly out of evaluation order, hence dead in the mixture) exercise the
/// mixing paths.
pub fn random_dils(rng: &mut ChaCha8Rng, max_units: usize, max_candidates: usize) -> DilsNetwork {
    let net = random_net(rng, max_units);
    let flat = net.flat();
    let all_sources: Vec<PortRef> = flat
        .outer
        .inputs
        .iter()
        .map(|p| PortRef::outer_input(p.name.clone()))
        .chain(flat.inner.keys().map(|id| PortRef::box_output(id.clone(), "o0")))
        .collect();

    let mut fixed = Vec::new();
    let mut soft = Vec::new();
    for w in &flat.wires {
        let peer = matches!(w.source, PortRef::BoxOutput { .. })
            && matches!(w.dest, PortRef::BoxInput { .. });
        if !peer {
            fixed.push(w.clone());
            continue;
        }
        let mut candidates = vec![w.source.clone()];
        let extra = rng.random_range(0..max_candidates.max(1));
        for _ in 0..extra {
            let c = all_sources[rng.random_range(0..all_sources.len())].clone();
            if !candidates.contains(&c) {
                candidates.push(c);
            }
        }
        let n = candidates.len();
        let mut entry = SoftEntry::new(w.dest.clone(), candidates);
        entry.logits = unit_vec(rng, n);
        entry.logits[0] += 2.5; // keep the argmax on the original acyclic feed
        entry.gains = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
        soft.push(entry);
    }
    let units = net
        .units()
        .iter()
        .map(|(id, u)| (id.clone(), LearnerUnit::new(u.weights.clone(), u.bias, u.activation)))
        .collect();
    DilsNetwork::new(flat.outer.clone(), flat.inner.clone(), units, fixed, soft, 0.05, 0.05)
        .expect("generated DILS network is valid")
}

/// The two-line routing task network: one identity unit whose single input
/// chooses between the two outer input lines through a soft entry.
pub fn routing_network() -> DilsNetwork {
    let outer = BoxInterface::new(
        vec![PortSpec::real("x0"), PortSpec::real("x1")],
        vec![PortSpec::real("y0")],
    );
    let mut interfaces = BTreeMap::new();
    interfaces.insert(
        BoxId::from("route"),
        BoxInterface::new(vec![PortSpec::real("in0")], vec![PortSpec::real("out")]),
    );
    let mut units = BTreeMap::new();
    units.insert(BoxId::from("route"), LearnerUnit::new(vec![1.0], 0.0, Activation::Identity));
    let fixed = vec![Wire::new(PortRef::box_output("route", "out"), PortRef::outer_output("y0"))];
    let soft = vec![SoftEntry::new(
        PortRef::box_input("route", "in0"),
        vec![PortRef::outer_input("x0"), PortRef::outer_input("x1")],
    )];
    DilsNetwork::new(outer, interfaces, units, fixed, soft, 0.05, 0.25)
        .expect("routing network is valid")
}

/// The routing-task stream: inputs on two lines, the target copies one line.
pub fn routing_stream(
    rng: &mut ChaCha8Rng,
    steps: usize,
    target_line: usize,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..steps)
        .map(|_| {
            let x = vec![rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0];
            let t = vec![x[target_line]];
            (x, t)
        })
        .collect()
}
