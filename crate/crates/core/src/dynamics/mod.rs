//! Open systems attached to boxes, and the algebras that compose them.
//!
//! Three system regimes share one wiring story:
//!
//! - [`CombinationalSystem`]: pure stateless functions; wiring must be acyclic.
//! - [`MooreSystem`]: state + update + state-only readout; because readouts
//!   never look at current inputs, any wiring including feedback loops and
//!   self-loops composes.
//! - [`ContinuousSystem`]: vector field + state-only readout over real ports;
//!   feedback composes for the same reason.
//!
//! [`compose_combinational`], [`compose_moore`], and [`compose_continuous`]
//! each take a valid diagram plus a system per inner box and return one
//! composite system on the outer interface. [`simulate`] runs any of the three
//! deterministically.

mod compose;
mod gates;
mod simulate;

pub use compose::{
    compose_combinational, compose_continuous, compose_moore, ComposeError,
};
pub use gates::{
    and_from_nand_diagram, gate, gate_by_name, nand_assignments, not_from_nand_diagram,
    or_from_nand_diagram, or_skeleton_diagram, xor_from_nand_diagram, Gate, UnknownGate,
};
pub use simulate::{simulate, InputTrace, Integrator, SimConfig, SimError, SimTrace};

use std::fmt;
use std::sync::Arc;

use crate::diagram::BoxInterface;
use crate::value::Value;

type ValueFn = Arc<dyn Fn(&[Value]) -> Vec<Value> + Send + Sync>;
type UpdateFn = Arc<dyn Fn(&[Value], &[Value]) -> Vec<Value> + Send + Sync>;
type ReadoutFn = Arc<dyn Fn(&[f64]) -> Vec<Value> + Send + Sync>;
type FieldFn = Arc<dyn Fn(&[f64], &[Value]) -> Vec<f64> + Send + Sync>;

/// A pure stateless input-to-output map with a typed interface.
#[derive(Clone)]
pub struct CombinationalSystem {
    pub interface: BoxInterface,
    func: ValueFn,
}

impl CombinationalSystem {
    pub fn new(
        interface: BoxInterface,
        func: impl Fn(&[Value]) -> Vec<Value> + Send + Sync + 'static,
    ) -> Self {
        Self { interface, func: Arc::new(func) }
    }

    pub fn eval(&self, inputs: &[Value]) -> Vec<Value> {
        (self.func)(inputs)
    }
}

impl fmt::Debug for CombinationalSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CombinationalSystem")
            .field("interface", &self.interface)
            .finish_non_exhaustive()
    }
}

/// A synchronous machine: typed state, state-only readout, and a step update.
///
/// The readout seeing only the state is what makes arbitrary feedback wiring
/// well-defined under composition.
#[derive(Clone)]
pub struct MooreSystem {
    pub interface: BoxInterface,
    pub state: Vec<Value>,
    readout: ValueFn,
    update: UpdateFn,
}

impl MooreSystem {
    pub fn new(
        interface: BoxInterface,
        state: Vec<Value>,
        readout: impl Fn(&[Value]) -> Vec<Value> + Send + Sync + 'static,
        update: impl Fn(&[Value], &[Value]) -> Vec<Value> + Send + Sync + 'static,
    ) -> Self {
        Self { interface, state, readout: Arc::new(readout), update: Arc::new(update) }
    }

    pub fn readout(&self, state: &[Value]) -> Vec<Value> {
        (self.readout)(state)
    }

    pub fn update(&self, state: &[Value], inputs: &[Value]) -> Vec<Value> {
        (self.update)(state, inputs)
    }
}

impl fmt::Debug for MooreSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MooreSystem")
            .field("interface", &self.interface)
            .field("state", &self.state)
            .finish_non_exhaustive()
    }
}

/// An open ODE: state in R^n, a vector field over (state, inputs), and a
/// state-only readout. All ports must be real-kind.
#[derive(Clone)]
pub struct ContinuousSystem {
    pub interface: BoxInterface,
    pub state: Vec<f64>,
    readout: ReadoutFn,
    field: FieldFn,
}

impl ContinuousSystem {
    pub fn new(
        interface: BoxInterface,
        state: Vec<f64>,
        readout: impl Fn(&[f64]) -> Vec<Value> + Send + Sync + 'static,
        field: impl Fn(&[f64], &[Value]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { interface, state, readout: Arc::new(readout), field: Arc::new(field) }
    }

    pub fn readout(&self, state: &[f64]) -> Vec<Value> {
        (self.readout)(state)
    }

    /// dstate/dt at the given state and inputs.
    pub fn field(&self, state: &[f64], inputs: &[Value]) -> Vec<f64> {
        (self.field)(state, inputs)
    }
}

impl fmt::Debug for ContinuousSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContinuousSystem")
            .field("interface", &self.interface)
            .field("state", &self.state)
            .finish_non_exhaustive()
    }
}

/// Any of the three system regimes, for callers that dispatch dynamically.
#[derive(Debug, Clone)]
pub enum OpenSystem {
    Combinational(CombinationalSystem),
    Moore(MooreSystem),
    Continuous(ContinuousSystem),
}

impl OpenSystem {
    pub fn interface(&self) -> &BoxInterface {
        match self {
            OpenSystem::Combinational(s) => &s.interface,
            OpenSystem::Moore(s) => &s.interface,
            OpenSystem::Continuous(s) => &s.interface,
        }
    }
}

/// A unit-delay register: emits its stored value, then stores the input.
pub fn delay(interface_kind: crate::diagram::ValueKind, init: Value) -> MooreSystem {
    use crate::diagram::PortSpec;
    let iface = BoxInterface::new(
        vec![PortSpec::new("u", interface_kind)],
        vec![PortSpec::new("y", interface_kind)],
    );
    MooreSystem::new(
        iface,
        vec![init],
        |state| state.to_vec(),
        |_, inputs| inputs.to_vec(),
    )
}

/// A linear time-invariant block: dx/dt = A x + B u, y = C x.
pub fn lti(
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    x0: Vec<f64>,
) -> ContinuousSystem {
    use crate::diagram::PortSpec;
    let n = x0.len();
    let m = b.first().map_or(0, Vec::len);
    let p = c.len();
    assert_eq!(a.len(), n, "A must be n x n");
    assert!(a.iter().all(|row| row.len() == n), "A must be n x n");
    assert!(b.len() == n || m == 0, "B must be n x m");
    assert!(c.iter().all(|row| row.len() == n), "C must be p x n");
    let iface = BoxInterface::new(
        (0..m).map(|i| PortSpec::real(format!("u{i}"))).collect(),
        (0..p).map(|i| PortSpec::real(format!("y{i}"))).collect(),
    );
    let c_read = c.clone();
    ContinuousSystem::new(
        iface,
        x0,
        move |state| {
            c_read
                .iter()
                .map(|row| {
                    Value::Real(row.iter().zip(state).map(|(cij, xj)| cij * xj).sum())
                })
                .collect()
        },
        move |state, inputs| {
            (0..n)
                .map(|i| {
                    let ax: f64 = a[i].iter().zip(state).map(|(aij, xj)| aij * xj).sum();
                    let bu: f64 = (0..m)
                        .map(|j| {
                            b[i][j] * inputs[j].as_real().expect("lti inputs are real")
                        })
                        .sum();
                    ax + bu
                })
                .collect()
        },
    )
}
