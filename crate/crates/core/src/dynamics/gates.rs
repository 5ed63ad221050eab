//! Boolean gate systems and their NAND-built diagram counterparts.
//!
//! `gate(..)` gives each gate directly as a combinational system; the
//! `*_from_nand_diagram` constructors build the same gates as wiring diagrams
//! over NAND boxes so the two routes can be cross-checked.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagram::{BoxId, BoxInterface, PortRef, PortSpec, WiringDiagram};
use crate::value::Value;

use super::CombinationalSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Nand,
    Not,
    And,
    Or,
    Xor,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unknown gate name `{0}`")]
pub struct UnknownGate(pub String);

impl FromStr for Gate {
    type Err = UnknownGate;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nand" => Ok(Gate::Nand),
            "not" => Ok(Gate::Not),
            "and" => Ok(Gate::And),
            "or" => Ok(Gate::Or),
            "xor" => Ok(Gate::Xor),
            _ => Err(UnknownGate(s.to_string())),
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Gate::Nand => "nand",
            Gate::Not => "not",
            Gate::And => "and",
            Gate::Or => "or",
            Gate::Xor => "xor",
        };
        write!(f, "{name}")
    }
}

/// Interface of a gate: `a[, b] -> y`, all boolean.
pub fn gate_interface(g: Gate) -> BoxInterface {
    let inputs = match g {
        Gate::Not => vec![PortSpec::boolean("a")],
        _ => vec![PortSpec::boolean("a"), PortSpec::boolean("b")],
    };
    BoxInterface::new(inputs, vec![PortSpec::boolean("y")])
}

/// A gate as a plain combinational system with standard boolean semantics.
pub fn gate(g: Gate) -> CombinationalSystem {
    let f = move |inputs: &[Value]| -> Vec<Value> {
        let bit = |i: usize| inputs[i].as_bool().expect("gate inputs are boolean");
        let y = match g {
            Gate::Nand => !(bit(0) && bit(1)),
            Gate::Not => !bit(0),
            Gate::And => bit(0) && bit(1),
            Gate::Or => bit(0) || bit(1),
            Gate::Xor => bit(0) ^ bit(1),
        };
        vec![Value::Bool(y)]
    };
    CombinationalSystem::new(gate_interface(g), f)
}

/// Look a gate up by name.
pub fn gate_by_name(name: &str) -> Result<CombinationalSystem, UnknownGate> {
    name.parse::<Gate>().map(gate)
}

fn binary_iface() -> BoxInterface {
    gate_interface(Gate::Nand)
}

fn unary_iface() -> BoxInterface {
    gate_interface(Gate::Not)
}

/// NOT from a single NAND with its inputs tied together.
pub fn not_from_nand_diagram() -> WiringDiagram {
    let mut d = WiringDiagram::new(unary_iface());
    d.add_box("n", binary_iface());
    d.add_wire(PortRef::outer_input("a"), PortRef::box_input("n", "a"));
    d.add_wire(PortRef::outer_input("a"), PortRef::box_input("n", "b"));
    d.add_wire(PortRef::box_output("n", "y"), PortRef::outer_output("y"));
    d
}

/// OR as two NOT slots feeding a NAND: the intermediate-abstraction skeleton.
///
/// Substituting [`not_from_nand_diagram`] into `not0` and `not1` yields the
/// all-NAND OR diagram.
pub fn or_skeleton_diagram() -> WiringDiagram {
    let mut d = WiringDiagram::new(binary_iface());
    d.add_box("not0", unary_iface());
    d.add_box("not1", unary_iface());
    d.add_box("nand", binary_iface());
    d.add_wire(PortRef::outer_input("a"), PortRef::box_input("not0", "a"));
    d.add_wire(PortRef::outer_input("b"), PortRef::box_input("not1", "a"));
    d.add_wire(PortRef::box_output("not0", "y"), PortRef::box_input("nand", "a"));
    d.add_wire(PortRef::box_output("not1", "y"), PortRef::box_input("nand", "b"));
    d.add_wire(PortRef::box_output("nand", "y"), PortRef::outer_output("y"));
    d
}

/// OR built from three NANDs with doubled inputs.
pub fn or_from_nand_diagram() -> WiringDiagram {
    let mut d = WiringDiagram::new(binary_iface());
    d.add_box("n1", binary_iface());
    d.add_box("n2", binary_iface());
    d.add_box("n3", binary_iface());
    d.add_wire(PortRef::outer_input("a"), PortRef::box_input("n1", "a"));
    d.add_wire(PortRef::outer_input("a"), PortRef::box_input("n1", "b"));
    d.add_wire(PortRef::outer_input("b"), PortRef::box_input("n2", "a"));
    d.add_wire(PortRef::outer_input("b"), PortRef::box_input("n2", "b"));
    d.add_wire(PortRef::box_output("n1", "y"), PortRef::box_input("n3", "a"));
    d.add_wire(PortRef::box_output("n2", "y"), PortRef::box_input("n3", "b"));
    d.add_wire(PortRef::box_output("n3", "y"), PortRef::outer_output("y"));
    d
}

/// AND from two NANDs (NAND then inverter).
pub fn and_from_nand_diagram() -> WiringDiagram {
    let mut d = WiringDiagram::new(binary_iface());
    d.add_box("n1", binary_iface());
    d.add_box("n2", binary_iface());
    d.add_wire(PortRef::outer_input("a"), PortRef::box_input("n1", "a"));
    d.add_wire(PortRef::outer_input("b"), PortRef::box_input("n1", "b"));
    d.add_wire(PortRef::box_output("n1", "y"), PortRef::box_input("n2", "a"));
    d.add_wire(PortRef::box_output("n1", "y"), PortRef::box_input("n2", "b"));
    d.add_wire(PortRef::box_output("n2", "y"), PortRef::outer_output("y"));
    d
}

/// XOR from four NANDs, the classic construction.
pub fn xor_from_nand_diagram() -> WiringDiagram {
    let mut d = WiringDiagram::new(binary_iface());
    for id in ["n1", "n2", "n3", "n4"] {
        d.add_box(id, binary_iface());
    }
    d.add_wire(PortRef::outer_input("a"), PortRef::box_input("n1", "a"));
    d.add_wire(PortRef::outer_input("b"), PortRef::box_input("n1", "b"));
    d.add_wire(PortRef::outer_input("a"), PortRef::box_input("n2", "a"));
    d.add_wire(PortRef::box_output("n1", "y"), PortRef::box_input("n2", "b"));
    d.add_wire(PortRef::box_output("n1", "y"), PortRef::box_input("n3", "a"));
    d.add_wire(PortRef::outer_input("b"), PortRef::box_input("n3", "b"));
    d.add_wire(PortRef::box_output("n2", "y"), PortRef::box_input("n4", "a"));
    d.add_wire(PortRef::box_output("n3", "y"), PortRef::box_input("n4", "b"));
    d.add_wire(PortRef::box_output("n4", "y"), PortRef::outer_output("y"));
    d
}

/// Assign a NAND system to every box of a diagram (all boxes must be binary).
pub fn nand_assignments(diagram: &WiringDiagram) -> BTreeMap<BoxId, CombinationalSystem> {
    diagram
        .inner
        .keys()
        .map(|id| (id.clone(), gate(Gate::Nand)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::substitute;
    use crate::dynamics::compose_combinational;

    fn truth_table(sys: &CombinationalSystem) -> Vec<bool> {
        let arity = sys.interface.inputs.len();
        (0..1u32 << arity)
            .map(|bits| {
                let inputs: Vec<Value> = (0..arity)
                    .map(|i| Value::Bool(bits >> i & 1 == 1))
                    .collect();
                sys.eval(&inputs)[0].as_bool().unwrap()
            })
            .collect()
    }

    #[test]
    fn nand_semantics() {
        let g = gate(Gate::Nand);
        assert_eq!(truth_table(&g), vec![true, true, true, false]);
    }

    #[test]
    fn unknown_gate_name() {
        assert!(gate_by_name("nor").is_err());
        assert!(gate_by_name("XOR").is_ok());
    }

    #[test]
    fn nand_built_gates_match_direct_gates() {
        for (d, g) in [
            (not_from_nand_diagram(), Gate::Not),
            (and_from_nand_diagram(), Gate::And),
            (or_from_nand_diagram(), Gate::Or),
            (xor_from_nand_diagram(), Gate::Xor),
        ] {
            assert!(d.validate().is_ok(), "{g}");
            let composite = compose_combinational(&d, &nand_assignments(&d)).unwrap();
            assert_eq!(truth_table(&composite), truth_table(&gate(g)), "{g}");
        }
    }

    #[test]
    fn or_skeleton_substitution_gives_all_nand_or() {
        let mut d = or_skeleton_diagram();
        for slot in ["not0", "not1"] {
            d = substitute(&d, &BoxId::from(slot), &not_from_nand_diagram()).unwrap();
        }
        assert!(d.canonically_equal(&or_from_nand_diagram()));
    }
}
