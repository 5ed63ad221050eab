//! Typed wiring diagrams and the things that live in them.
//!
//! The crate is organized around one data structure and three ways of using it:
//!
//! - [`diagram`] — wiring diagrams as formal objects: typed ports, inner boxes,
//!   single-feed wires, operadic substitution, and flattening of nested diagrams.
//! - [`dynamics`] — composition algebras: attach an open system (combinational,
//!   Moore, or continuous) to every inner box and obtain a composite system on
//!   the outer box, plus fixed-step simulation.
//! - [`learn`] — diagram-structured neurons: forward/backward passes routed along
//!   the diagram's wires, MLP unfolding into nested diagrams, and SGD training.
//! - [`dils`] — learners whose interconnection pattern is itself a trainable
//!   parameter: a softmax mixture over candidate sources per destination port,
//!   updated online from prediction error.
//!
//! [`dsl`] provides the textual format (parser, canonical serializer, JSON
//! interchange, DOT export); [`testkit`] holds the seeded random generators the
//! test suites are built on.

pub mod csvio;
pub mod diagram;
pub mod dils;
pub mod dsl;
pub mod dynamics;
pub mod learn;
pub mod testkit;
pub mod value;

pub use diagram::{
    BoxId, BoxInterface, DiagramTree, PortRef, PortSpec, ValueKind, Wire, WiringDiagram,
};
pub use value::Value;
