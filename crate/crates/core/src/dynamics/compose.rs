//! Composition algebras: one open system per inner box in, one composite
//! system on the outer interface out.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

use thiserror::Error;

use crate::diagram::{BoxId, BoxInterface, PortRef, ValueKind, Wire, WiringDiagram};
use crate::value::Value;

use super::{CombinationalSystem, ContinuousSystem, MooreSystem};

#[derive(Debug, Clone, Error)]
pub enum ComposeError {
    #[error("diagram is invalid: {0}")]
    InvalidDiagram(String),
    #[error("no system assigned to box `{0}`")]
    MissingAssignment(BoxId),
    #[error("assignment for unknown box `{0}`")]
    UnknownAssignment(BoxId),
    #[error("system on box `{box_id}` does not match its interface: {detail}")]
    InterfaceMismatch { box_id: BoxId, detail: String },
    #[error("wiring is cyclic through boxes: {}", cycle.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" -> "))]
    CycleDetected { cycle: Vec<BoxId> },
    #[error("outer output is fed directly by an outer input (`{wire}`); a state-only readout cannot produce it")]
    PassThroughOutput { wire: Wire },
    #[error("boolean port `{0}` in a continuous composition")]
    BooleanPort(String),
}

/// Shared routing data captured by composite closures.
struct Plan {
    feeds: BTreeMap<PortRef, PortRef>,
    outer: BoxInterface,
    /// Box ids with their input port names, in evaluation order.
    boxes: Vec<(BoxId, Vec<String>)>,
}

impl Plan {
    fn dest_value(
        &self,
        dest: &PortRef,
        outer_inputs: &[Value],
        box_outputs: &BTreeMap<BoxId, Vec<Value>>,
        output_index: &BTreeMap<BoxId, BTreeMap<String, usize>>,
    ) -> Value {
        let src = self.feeds.get(dest).expect("validated diagram: every dest fed");
        match src {
            PortRef::OuterInput { port } => {
                let i = self.outer.input_index(port).expect("validated port");
                outer_inputs[i].clone()
            }
            PortRef::BoxOutput { box_id, port } => {
                let i = output_index[box_id][port];
                box_outputs[box_id][i].clone()
            }
            _ => unreachable!("wire sources are producers"),
        }
    }

    fn box_inputs(
        &self,
        box_id: &BoxId,
        ports: &[String],
        outer_inputs: &[Value],
        box_outputs: &BTreeMap<BoxId, Vec<Value>>,
        output_index: &BTreeMap<BoxId, BTreeMap<String, usize>>,
    ) -> Vec<Value> {
        ports
            .iter()
            .map(|p| {
                self.dest_value(
                    &PortRef::box_input(box_id.clone(), p.clone()),
                    outer_inputs,
                    box_outputs,
                    output_index,
                )
            })
            .collect()
    }

    fn outer_outputs(
        &self,
        outer_inputs: &[Value],
        box_outputs: &BTreeMap<BoxId, Vec<Value>>,
        output_index: &BTreeMap<BoxId, BTreeMap<String, usize>>,
    ) -> Vec<Value> {
        self.outer
            .outputs
            .iter()
            .map(|p| {
                self.dest_value(
                    &PortRef::outer_output(p.name.clone()),
                    outer_inputs,
                    box_outputs,
                    output_index,
                )
            })
            .collect()
    }
}

fn check_common<I>(
    diagram: &WiringDiagram,
    interfaces: &BTreeMap<BoxId, I>,
    iface_of: impl Fn(&I) -> &BoxInterface,
) -> Result<(), ComposeError> {
    let report = diagram.validate();
    if !report.is_ok() {
        return Err(ComposeError::InvalidDiagram(report.to_string()));
    }
    for id in interfaces.keys() {
        if !diagram.inner.contains_key(id) {
            return Err(ComposeError::UnknownAssignment(id.clone()));
        }
    }
    for (id, want) in &diagram.inner {
        let sys = interfaces
            .get(id)
            .ok_or_else(|| ComposeError::MissingAssignment(id.clone()))?;
        if let Some(detail) = want.first_mismatch(iface_of(sys)) {
            return Err(ComposeError::InterfaceMismatch { box_id: id.clone(), detail });
        }
    }
    Ok(())
}

fn output_indices(
    diagram: &WiringDiagram,
) -> BTreeMap<BoxId, BTreeMap<String, usize>> {
    diagram
        .inner
        .iter()
        .map(|(id, iface)| {
            (
                id.clone(),
                iface
                    .outputs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (p.name.clone(), i))
                    .collect(),
            )
        })
        .collect()
}

fn input_ports(iface: &BoxInterface) -> Vec<String> {
    iface.inputs.iter().map(|p| p.name.clone()).collect()
}

fn reject_pass_through(diagram: &WiringDiagram) -> Result<(), ComposeError> {
    for w in &diagram.wires {
        if matches!(w.source, PortRef::OuterInput { .. })
            && matches!(w.dest, PortRef::OuterOutput { .. })
        {
            return Err(ComposeError::PassThroughOutput { wire: w.clone() });
        }
    }
    Ok(())
}

/// Wire pure functions together; the inner wiring must be acyclic.
pub fn compose_combinational(
    diagram: &WiringDiagram,
    assign: &BTreeMap<BoxId, CombinationalSystem>,
) -> Result<CombinationalSystem, ComposeError> {
    check_common(diagram, assign, |s| &s.interface)?;
    let order = diagram
        .topo_order()
        .map_err(|cycle| ComposeError::CycleDetected { cycle })?;

    let plan = Arc::new(Plan {
        feeds: diagram.feeds(),
        outer: diagram.outer.clone(),
        boxes: order
            .iter()
            .map(|id| (id.clone(), input_ports(&diagram.inner[id])))
            .collect(),
    });
    let output_index = Arc::new(output_indices(diagram));
    let systems: Arc<BTreeMap<BoxId, CombinationalSystem>> = Arc::new(assign.clone());

    let iface = diagram.outer.clone();
    Ok(CombinationalSystem::new(iface, move |inputs: &[Value]| {
        let mut box_outputs: BTreeMap<BoxId, Vec<Value>> = BTreeMap::new();
        for (id, ports) in &plan.boxes {
            let ins = plan.box_inputs(id, ports, inputs, &box_outputs, &output_index);
            box_outputs.insert(id.clone(), systems[id].eval(&ins));
        }
        plan.outer_outputs(inputs, &box_outputs, &output_index)
    }))
}

/// Wire Moore machines together synchronously.
///
/// The composite state is the concatenation of inner states in box-id order;
/// every box steps simultaneously, reading the values its peers emit this
/// step. Cycles and self-loops are fine. Wires straight from an outer input to
/// an outer output are rejected: the composite readout sees only state.
pub fn compose_moore(
    diagram: &WiringDiagram,
    assign: &BTreeMap<BoxId, MooreSystem>,
) -> Result<MooreSystem, ComposeError> {
    check_common(diagram, assign, |s| &s.interface)?;
    reject_pass_through(diagram)?;

    let mut state = Vec::new();
    let mut slices: BTreeMap<BoxId, Range<usize>> = BTreeMap::new();
    for (id, sys) in assign {
        let start = state.len();
        state.extend(sys.state.iter().cloned());
        slices.insert(id.clone(), start..state.len());
    }

    let plan = Arc::new(Plan {
        feeds: diagram.feeds(),
        outer: diagram.outer.clone(),
        boxes: diagram
            .inner
            .iter()
            .map(|(id, iface)| (id.clone(), input_ports(iface)))
            .collect(),
    });
    let output_index = Arc::new(output_indices(diagram));
    let systems: Arc<BTreeMap<BoxId, MooreSystem>> = Arc::new(assign.clone());
    let slices = Arc::new(slices);

    let all_readouts = {
        let systems = Arc::clone(&systems);
        let slices = Arc::clone(&slices);
        move |state: &[Value]| -> BTreeMap<BoxId, Vec<Value>> {
            systems
                .iter()
                .map(|(id, sys)| (id.clone(), sys.readout(&state[slices[id].clone()])))
                .collect()
        }
    };

    let readout = {
        let plan = Arc::clone(&plan);
        let output_index = Arc::clone(&output_index);
        let all_readouts = all_readouts.clone();
        move |state: &[Value]| -> Vec<Value> {
            let box_outputs = all_readouts(state);
            // no pass-through wires exist, so outer inputs are never consulted
            plan.outer_outputs(&[], &box_outputs, &output_index)
        }
    };
    let update = {
        let plan = Arc::clone(&plan);
        let output_index = Arc::clone(&output_index);
        let systems = Arc::clone(&systems);
        let slices = Arc::clone(&slices);
        move |state: &[Value], inputs: &[Value]| -> Vec<Value> {
            let box_outputs = all_readouts(state);
            let mut next = state.to_vec();
            for (id, ports) in &plan.boxes {
                let ins = plan.box_inputs(id, ports, inputs, &box_outputs, &output_index);
                let sub = systems[id].update(&state[slices[id].clone()], &ins);
                next[slices[id].clone()].clone_from_slice(&sub);
            }
            next
        }
    };

    Ok(MooreSystem::new(diagram.outer.clone(), state, readout, update))
}

/// Wire open ODEs together by variable sharing.
///
/// The composite field evaluates every inner field with inputs routed from
/// inner readouts and outer inputs; the composite readout routes likewise.
/// Feedback is fine since readouts depend only on state.
pub fn compose_continuous(
    diagram: &WiringDiagram,
    assign: &BTreeMap<BoxId, ContinuousSystem>,
) -> Result<ContinuousSystem, ComposeError> {
    check_common(diagram, assign, |s| &s.interface)?;
    reject_pass_through(diagram)?;
    for p in diagram.outer.inputs.iter().chain(diagram.outer.outputs.iter()) {
        if p.kind == ValueKind::Boolean {
            return Err(ComposeError::BooleanPort(format!("outer.{}", p.name)));
        }
    }
    for (id, iface) in &diagram.inner {
        for p in iface.inputs.iter().chain(iface.outputs.iter()) {
            if p.kind == ValueKind::Boolean {
                return Err(ComposeError::BooleanPort(format!("{id}.{}", p.name)));
            }
        }
    }

    let mut state = Vec::new();
    let mut slices: BTreeMap<BoxId, Range<usize>> = BTreeMap::new();
    for (id, sys) in assign {
        let start = state.len();
        state.extend_from_slice(&sys.state);
        slices.insert(id.clone(), start..state.len());
    }

    let plan = Arc::new(Plan {
        feeds: diagram.feeds(),
        outer: diagram.outer.clone(),
        boxes: diagram
            .inner
            .iter()
            .map(|(id, iface)| (id.clone(), input_ports(iface)))
            .collect(),
    });
    let output_index = Arc::new(output_indices(diagram));
    let systems: Arc<BTreeMap<BoxId, ContinuousSystem>> = Arc::new(assign.clone());
    let slices = Arc::new(slices);

    let all_readouts = {
        let systems = Arc::clone(&systems);
        let slices = Arc::clone(&slices);
        move |state: &[f64]| -> BTreeMap<BoxId, Vec<Value>> {
            systems
                .iter()
                .map(|(id, sys)| (id.clone(), sys.readout(&state[slices[id].clone()])))
                .collect()
        }
    };

    let readout = {
        let plan = Arc::clone(&plan);
        let output_index = Arc::clone(&output_index);
        let all_readouts = all_readouts.clone();
        move |state: &[f64]| -> Vec<Value> {
            let box_outputs = all_readouts(state);
            plan.outer_outputs(&[], &box_outputs, &output_index)
        }
    };
    let field = {
        let plan = Arc::clone(&plan);
        let output_index = Arc::clone(&output_index);
        let systems = Arc::clone(&systems);
        let slices = Arc::clone(&slices);
        move |state: &[f64], inputs: &[Value]| -> Vec<f64> {
            let box_outputs = all_readouts(state);
            let mut dstate = vec![0.0; state.len()];
            for (id, ports) in &plan.boxes {
                let ins = plan.box_inputs(id, ports, inputs, &box_outputs, &output_index);
                let sub = systems[id].field(&state[slices[id].clone()], &ins);
                dstate[slices[id].clone()].copy_from_slice(&sub);
            }
            dstate
        }
    };

    Ok(ContinuousSystem::new(diagram.outer.clone(), state, readout, field))
}
