//! Textual formats for diagrams: a human-oriented DSL, a JSON interchange
//! encoding, and DOT export.
//!
//! The DSL looks like:
//!
//! ```text
//! outer I0
//! interface I0 { in a: real; out b: real }
//! box n1: I0
//! wire outer.a -> n1.a
//! wire n1.b -> outer.b
//! attach n1 unit { act: tanh, b: 0.0, w: [0.1] }
//! ```
//!
//! A box may carry a nested body (`box n1: I0 { ... }`) whose statements
//! describe the sub-diagram behind that box. `parse` and `serialize` round
//! trip: parsing canonical text reproduces the structure exactly, and
//! serializing is canonicalization (idempotent on text).

mod dot;
mod lexer;
mod parser;
mod serialize;

pub use dot::{export_dot, export_dot_diagram};
pub use lexer::Span;
pub use parser::parse;
pub use serialize::serialize;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagram::{BoxId, DiagramTree};
use crate::dynamics::Gate;
use crate::learn::Activation;
use crate::value::Value;

/// A system or unit bound to a leaf box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attachment {
    /// A named boolean gate.
    Gate(Gate),
    /// A learner unit (weights, bias, activation).
    Unit { activation: Activation, weights: Vec<f64>, bias: f64 },
    /// Linear ODE block: dx/dt = A x + B u, y = C x, starting at x0.
    Lti { a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, c: Vec<Vec<f64>>, x0: Vec<f64> },
    /// Unit-delay register with the given initial value.
    Delay { init: Value },
}

/// A parsed document: the diagram tree plus attachments keyed by flattened
/// (path) box id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub tree: DiagramTree,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attachments: BTreeMap<BoxId, Attachment>,
}

impl Document {
    pub fn new(tree: DiagramTree) -> Self {
        Self { tree, attachments: BTreeMap::new() }
    }

    /// JSON interchange form (pretty-printed, stable field order).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Document, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// A parse failure with its source position and, for token-level errors, the
/// set of tokens that would have been accepted.
#[derive(Debug, Clone, Error, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
    pub expected: Vec<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{PortRef, Wire};

    const IDENTITY_DOC: &str = "\
interface I { in a: real; out b: real }
box n1: I
wire outer.a -> n1.a
wire n1.b -> outer.b
attach n1 unit { act: tanh, b: 0.0, w: [0.1] }
";

    #[test]
    fn parses_the_sketch_document() {
        let doc = parse(IDENTITY_DOC).unwrap();
        assert_eq!(doc.tree.diagram.inner.len(), 1);
        assert_eq!(doc.tree.diagram.wires.len(), 2);
        assert!(doc.tree.diagram.validate().is_ok());
        match &doc.attachments[&BoxId::from("n1")] {
            Attachment::Unit { activation, weights, bias } => {
                assert_eq!(*activation, Activation::Tanh);
                assert_eq!(weights, &vec![0.1]);
                assert_eq!(*bias, 0.0);
            }
            other => panic!("wrong attachment: {other:?}"),
        }
    }

    #[test]
    fn empty_interface_document() {
        let doc = parse("interface E {}\nbox b: E\n").unwrap();
        assert_eq!(doc.tree.diagram.outer.inputs.len(), 0);
        assert_eq!(doc.tree.diagram.outer.outputs.len(), 0);
        assert_eq!(doc.tree.diagram.inner.len(), 1);
        assert!(doc.tree.diagram.wires.is_empty());
    }

    #[test]
    fn syntax_error_carries_position_and_expectations() {
        let err = parse("interface I { in a real }").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(err.col > 1);
        assert!(!err.expected.is_empty());
        let rendered = err.to_string();
        assert!(rendered.contains("1:"), "{rendered}");
    }

    #[test]
    fn undeclared_references_are_errors() {
        let err = parse("interface I { in a: real; out b: real }\nbox n: J\n").unwrap_err();
        assert!(err.message.contains("undeclared interface"), "{err}");
        let err = parse(
            "interface I { in a: real; out b: real }\nwire outer.a -> ghost.a\nwire ghost.b -> outer.b\n",
        )
        .unwrap_err();
        assert!(err.message.contains("undeclared box"), "{err}");
        assert_eq!(err.line, 2);
    }

    #[test]
    fn validation_violations_surface_with_spans() {
        let err = parse(
            "outer O\n\
             interface O { in a: real; in c: real; out b: real }\n\
             interface I { in a: real; out b: real }\n\
             box n1: I\n\
             wire outer.a -> n1.a\n\
             wire outer.c -> n1.a\n\
             wire n1.b -> outer.b\n",
        )
        .unwrap_err();
        assert!(err.message.contains("fed by 2 wires"), "{err}");
    }

    #[test]
    fn wrong_side_port_reference_is_caught() {
        let err = parse(
            "interface I { in a: real; out b: real }\nbox n1: I\nwire n1.a -> outer.b\nwire outer.a -> n1.a\n",
        )
        .unwrap_err();
        assert!(err.message.contains("no output port"), "{err}");
    }

    #[test]
    fn canonical_roundtrip_on_sketch() {
        let doc = parse(IDENTITY_DOC).unwrap();
        let canonical = serialize(&doc);
        let doc2 = parse(&canonical).unwrap();
        assert_eq!(doc, doc2);
        assert_eq!(serialize(&doc2), canonical);
    }

    #[test]
    fn nested_bodies_parse_and_roundtrip() {
        let text = "\
outer O
interface O { in x: real; out y: real }
interface G { in u: real; out v: real }
box block: O {
  box inner0: G
  wire outer.x -> inner0.u
  wire inner0.v -> outer.y
  attach inner0 unit { act: identity, b: 0.0, w: [2.0] }
}
box top: G
wire outer.x -> block.x
wire block.y -> top.u
wire top.v -> outer.y
";
        // block's outer must be O; wire outer.x -> block.x refers to O's input x
        let doc = parse(text).unwrap();
        assert_eq!(doc.tree.children.len(), 1);
        let child = &doc.tree.children[&BoxId::from("block")];
        assert_eq!(child.diagram.inner.len(), 1);
        assert!(doc
            .attachments
            .contains_key(&BoxId::from("block/inner0")));
        let canonical = serialize(&doc);
        let doc2 = parse(&canonical).unwrap();
        assert_eq!(doc, doc2);
    }

    #[test]
    fn gate_and_delay_and_lti_attachments_roundtrip() {
        let text = "\
outer O
interface O { in a: bool; out y: bool }
interface G2 { in a: bool; in b: bool; out y: bool }
box g: G2
wire outer.a -> g.a
wire outer.a -> g.b
wire g.y -> outer.y
attach g gate nand
";
        let doc = parse(text).unwrap();
        assert_eq!(doc.attachments[&BoxId::from("g")], Attachment::Gate(Gate::Nand));
        let doc2 = parse(&serialize(&doc)).unwrap();
        assert_eq!(doc, doc2);

        let text2 = "\
interface D { out y: real }
box decay: D
wire decay.y -> outer.y
attach decay lti { a: [[-1.0]], c: [[1.0]], x0: [1.0] }
";
        let doc = parse(text2).unwrap();
        match &doc.attachments[&BoxId::from("decay")] {
            Attachment::Lti { a, b, c, x0 } => {
                assert_eq!(a, &vec![vec![-1.0]]);
                assert_eq!(b, &vec![Vec::<f64>::new()]);
                assert_eq!(c, &vec![vec![1.0]]);
                assert_eq!(x0, &vec![1.0]);
            }
            other => panic!("wrong attachment: {other:?}"),
        }
        let doc2 = parse(&serialize(&doc)).unwrap();
        assert_eq!(doc, doc2);
    }

    #[test]
    fn json_roundtrip() {
        let doc = parse(IDENTITY_DOC).unwrap();
        let json = doc.to_json();
        let doc2 = Document::from_json(&json).unwrap();
        assert_eq!(doc, doc2);
    }

    #[test]
    fn dot_export_identity_counts() {
        let doc = parse(IDENTITY_DOC).unwrap();
        let dot = export_dot(&doc).unwrap();
        assert!(dot.starts_with("digraph"));
        assert_eq!(dot.matches("[shape=box]").count(), 1);
        assert_eq!(dot.matches(" -> ").count(), 2);
        assert_eq!(dot.matches("[shape=point").count(), 2);
    }

    #[test]
    fn serializer_is_deterministic() {
        let doc = parse(IDENTITY_DOC).unwrap();
        let w1 = Wire::new(PortRef::outer_input("a"), PortRef::box_input("n1", "a"));
        assert!(doc.tree.diagram.wires.contains(&w1));
        assert_eq!(serialize(&doc), serialize(&doc.clone()));
    }
}
