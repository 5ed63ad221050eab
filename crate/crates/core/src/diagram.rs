//! Wiring diagrams as formal objects.
//!
//! A [`WiringDiagram`] is an outer interface, a set of named inner boxes, and a
//! set of directed wires. Wires route values from producers (outer inputs and
//! inner outputs) to consumers (inner inputs and outer outputs); every consumer
//! is fed by exactly one wire, while a producer may fan out freely.
//!
//! [`substitute`] plugs a whole diagram into an inner box of another, splicing
//! wires across the boundary; [`DiagramTree::flatten`] applies this repeatedly to
//! collapse a nested diagram into a single level. Both preserve validity, and
//! substitution satisfies the unit and associativity laws checked in the tests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The kind of value a port carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Boolean,
    Real,
    /// A real vector of fixed dimension `d >= 1`.
    RealVector(usize),
}

impl ValueKind {
    /// True for `Real` and `RealVector`.
    pub fn is_real(&self) -> bool {
        matches!(self, ValueKind::Real | ValueKind::RealVector(_))
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueKind::Boolean => write!(f, "bool"),
            ValueKind::Real => write!(f, "real"),
            ValueKind::RealVector(d) => write!(f, "real[{d}]"),
        }
    }
}

/// A named, typed port on one side of an interface.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PortSpec {
    pub name: String,
    pub kind: ValueKind,
}

impl PortSpec {
    pub fn new(name: impl Into<String>, kind: ValueKind) -> Self {
        Self { name: name.into(), kind }
    }

    pub fn real(name: impl Into<String>) -> Self {
        Self::new(name, ValueKind::Real)
    }

    pub fn boolean(name: impl Into<String>) -> Self {
        Self::new(name, ValueKind::Boolean)
    }
}

/// Which side of an interface a port sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortSide {
    Input,
    Output,
}

impl fmt::Display for PortSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortSide::Input => write!(f, "input"),
            PortSide::Output => write!(f, "output"),
        }
    }
}

/// Ordered input and output port lists of a box.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BoxInterface {
    pub inputs: Vec<PortSpec>,
    pub outputs: Vec<PortSpec>,
}

impl BoxInterface {
    pub fn new(inputs: Vec<PortSpec>, outputs: Vec<PortSpec>) -> Self {
        Self { inputs, outputs }
    }

    pub fn input(&self, name: &str) -> Option<&PortSpec> {
        self.inputs.iter().find(|p| p.name == name)
    }

    pub fn output(&self, name: &str) -> Option<&PortSpec> {
        self.outputs.iter().find(|p| p.name == name)
    }

    pub fn port(&self, side: PortSide, name: &str) -> Option<&PortSpec> {
        match side {
            PortSide::Input => self.input(name),
            PortSide::Output => self.output(name),
        }
    }

    /// Position of a named input port.
    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.inputs.iter().position(|p| p.name == name)
    }

    /// Position of a named output port.
    pub fn output_index(&self, name: &str) -> Option<usize> {
        self.outputs.iter().position(|p| p.name == name)
    }

    /// First point where two interfaces disagree, if any.
    ///
    /// Interfaces must agree in port order, names, and kinds on both sides.
    pub fn first_mismatch(&self, other: &BoxInterface) -> Option<String> {
        for (side, mine, theirs) in [
            (PortSide::Input, &self.inputs, &other.inputs),
            (PortSide::Output, &self.outputs, &other.outputs),
        ] {
            for (i, (a, b)) in mine.iter().zip(theirs.iter()).enumerate() {
                if a != b {
                    return Some(format!(
                        "{side} port {i}: expected `{}: {}`, found `{}: {}`",
                        a.name, a.kind, b.name, b.kind
                    ));
                }
            }
            if mine.len() != theirs.len() {
                return Some(format!(
                    "{side} count: expected {}, found {}",
                    mine.len(),
                    theirs.len()
                ));
            }
        }
        None
    }
}

/// Identifier of an inner box.
///
/// Substitution namespaces guest boxes as `slot/guest`, so ids may contain `/`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoxId(String);

impl BoxId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// `slot/inner` path id used when a guest diagram is substituted into `self`.
    pub fn join(&self, inner: &BoxId) -> BoxId {
        BoxId(format!("{}/{}", self.0, inner.0))
    }

    /// Nesting depth encoded in the path id (number of `/` separators).
    pub fn depth(&self) -> usize {
        self.0.matches('/').count()
    }
}

impl fmt::Display for BoxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for BoxId {
    fn from(s: &str) -> Self {
        BoxId(s.to_string())
    }
}

impl From<String> for BoxId {
    fn from(s: String) -> Self {
        BoxId(s)
    }
}

/// One end of a wire.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "loc", rename_all = "snake_case")]
pub enum PortRef {
    OuterInput { port: String },
    OuterOutput { port: String },
    BoxInput { box_id: BoxId, port: String },
    BoxOutput { box_id: BoxId, port: String },
}

impl PortRef {
    pub fn outer_input(port: impl Into<String>) -> Self {
        PortRef::OuterInput { port: port.into() }
    }

    pub fn outer_output(port: impl Into<String>) -> Self {
        PortRef::OuterOutput { port: port.into() }
    }

    pub fn box_input(box_id: impl Into<BoxId>, port: impl Into<String>) -> Self {
        PortRef::BoxInput { box_id: box_id.into(), port: port.into() }
    }

    pub fn box_output(box_id: impl Into<BoxId>, port: impl Into<String>) -> Self {
        PortRef::BoxOutput { box_id: box_id.into(), port: port.into() }
    }

    /// True if this ref may appear as a wire source (a value producer).
    pub fn is_source(&self) -> bool {
        matches!(self, PortRef::OuterInput { .. } | PortRef::BoxOutput { .. })
    }

    /// True if this ref may appear as a wire destination (a value consumer).
    pub fn is_dest(&self) -> bool {
        matches!(self, PortRef::OuterOutput { .. } | PortRef::BoxInput { .. })
    }

    pub fn box_id(&self) -> Option<&BoxId> {
        match self {
            PortRef::BoxInput { box_id, .. } | PortRef::BoxOutput { box_id, .. } => Some(box_id),
            _ => None,
        }
    }

    pub fn port(&self) -> &str {
        match self {
            PortRef::OuterInput { port }
            | PortRef::OuterOutput { port }
            | PortRef::BoxInput { port, .. }
            | PortRef::BoxOutput { port, .. } => port,
        }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortRef::OuterInput { port } | PortRef::OuterOutput { port } => {
                write!(f, "outer.{port}")
            }
            PortRef::BoxInput { box_id, port } | PortRef::BoxOutput { box_id, port } => {
                write!(f, "{box_id}.{port}")
            }
        }
    }
}

/// A directed wire from a producer to a consumer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Wire {
    pub source: PortRef,
    pub dest: PortRef,
}

impl Wire {
    pub fn new(source: PortRef, dest: PortRef) -> Self {
        Self { source, dest }
    }
}

impl fmt::Display for Wire {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.source, self.dest)
    }
}

/// An outer interface, inner boxes, and the wires connecting them.
///
/// Legal wire directions: outer input -> inner input, inner output -> inner
/// input (self-loops included), inner output -> outer output, and outer input
/// -> outer output (pass-through). Every inner input and every outer output
/// must be fed by exactly one wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WiringDiagram {
    pub outer: BoxInterface,
    pub inner: BTreeMap<BoxId, BoxInterface>,
    pub wires: BTreeSet<Wire>,
}

impl WiringDiagram {
    pub fn new(outer: BoxInterface) -> Self {
        Self { outer, inner: BTreeMap::new(), wires: BTreeSet::new() }
    }

    pub fn add_box(&mut self, id: impl Into<BoxId>, interface: BoxInterface) -> &mut Self {
        self.inner.insert(id.into(), interface);
        self
    }

    pub fn add_wire(&mut self, source: PortRef, dest: PortRef) -> &mut Self {
        self.wires.insert(Wire::new(source, dest));
        self
    }

    /// The kind of the port a ref denotes, if the ref resolves.
    pub fn kind_of(&self, r: &PortRef) -> Option<ValueKind> {
        let spec = match r {
            PortRef::OuterInput { port } => self.outer.input(port),
            PortRef::OuterOutput { port } => self.outer.output(port),
            PortRef::BoxInput { box_id, port } => self.inner.get(box_id)?.input(port),
            PortRef::BoxOutput { box_id, port } => self.inner.get(box_id)?.output(port),
        };
        spec.map(|p| p.kind)
    }

    /// All consumer refs of the diagram: every inner input and outer output.
    pub fn destinations(&self) -> Vec<PortRef> {
        let mut dests = Vec::new();
        for (id, iface) in &self.inner {
            for p in &iface.inputs {
                dests.push(PortRef::box_input(id.clone(), p.name.clone()));
            }
        }
        for p in &self.outer.outputs {
            dests.push(PortRef::outer_output(p.name.clone()));
        }
        dests
    }

    /// Map from each destination to its unique feeding source.
    ///
    /// Only meaningful on diagrams that pass [`WiringDiagram::validate`].
    pub fn feeds(&self) -> BTreeMap<PortRef, PortRef> {
        self.wires
            .iter()
            .map(|w| (w.dest.clone(), w.source.clone()))
            .collect()
    }

    /// Map from each source to the destinations it fans out to.
    pub fn consumers(&self) -> BTreeMap<PortRef, Vec<PortRef>> {
        let mut out: BTreeMap<PortRef, Vec<PortRef>> = BTreeMap::new();
        for w in &self.wires {
            out.entry(w.source.clone()).or_default().push(w.dest.clone());
        }
        out
    }

    /// Box-to-box dependency edges induced by inner-output -> inner-input wires.
    pub fn inner_edges(&self) -> BTreeSet<(BoxId, BoxId)> {
        self.wires
            .iter()
            .filter_map(|w| match (&w.source, &w.dest) {
                (PortRef::BoxOutput { box_id: s, .. }, PortRef::BoxInput { box_id: d, .. }) => {
                    Some((s.clone(), d.clone()))
                }
                _ => None,
            })
            .collect()
    }

    /// Topological order of the inner boxes, or a cycle of box ids.
    ///
    /// Deterministic: ties are broken by box id.
    pub fn topo_order(&self) -> Result<Vec<BoxId>, Vec<BoxId>> {
        let edges = self.inner_edges();
        let mut indegree: BTreeMap<&BoxId, usize> =
            self.inner.keys().map(|id| (id, 0)).collect();
        for (_, d) in &edges {
            // self-loops count too: a box feeding itself is a cycle here
            *indegree.get_mut(d).expect("edge endpoint is a box") += 1;
        }
        let mut ready: BTreeSet<&BoxId> = indegree
            .iter()
            .filter(|(_, deg)| **deg == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut order = Vec::with_capacity(self.inner.len());
        while let Some(&next) = ready.iter().next() {
            ready.remove(next);
            order.push(next.clone());
            for (s, d) in &edges {
                if s == next && s != d {
                    let deg = indegree.get_mut(d).expect("edge endpoint is a box");
                    *deg -= 1;
                    if *deg == 0 {
                        ready.insert(d);
                    }
                }
            }
        }
        if order.len() == self.inner.len() {
            Ok(order)
        } else {
            Err(self.find_cycle(&edges))
        }
    }

    /// Some cycle among the inner boxes, for error reporting.
    fn find_cycle(&self, edges: &BTreeSet<(BoxId, BoxId)>) -> Vec<BoxId> {
        let succ: BTreeMap<&BoxId, Vec<&BoxId>> = {
            let mut m: BTreeMap<&BoxId, Vec<&BoxId>> = BTreeMap::new();
            for (s, d) in edges {
                m.entry(s).or_default().push(d);
            }
            m
        };
        for start in self.inner.keys() {
            let mut path: Vec<&BoxId> = Vec::new();
            let mut on_path: BTreeSet<&BoxId> = BTreeSet::new();
            let mut done: BTreeSet<&BoxId> = BTreeSet::new();
            fn dfs<'a>(
                node: &'a BoxId,
                succ: &BTreeMap<&'a BoxId, Vec<&'a BoxId>>,
                path: &mut Vec<&'a BoxId>,
                on_path: &mut BTreeSet<&'a BoxId>,
                done: &mut BTreeSet<&'a BoxId>,
            ) -> Option<Vec<BoxId>> {
                path.push(node);
                on_path.insert(node);
                for next in succ.get(node).into_iter().flatten() {
                    if on_path.contains(next) {
                        let from = path.iter().position(|n| n == next).unwrap_or(0);
                        return Some(path[from..].iter().map(|b| (*b).clone()).collect());
                    }
                    if !done.contains(next) {
                        if let Some(cycle) = dfs(next, succ, path, on_path, done) {
                            return Some(cycle);
                        }
                    }
                }
                path.pop();
                on_path.remove(node);
                done.insert(node);
                None
            }
            if let Some(cycle) = dfs(start, &succ, &mut path, &mut on_path, &mut done) {
                return cycle;
            }
        }
        Vec::new()
    }
}

/// A single broken invariant, naming the offending wire or port.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    EmptyPortName { owner: String, side: PortSide },
    DuplicatePortName { owner: String, side: PortSide, name: String },
    ZeroVectorDim { owner: String, port: String },
    UnknownBox { wire: Wire, box_id: BoxId },
    UnknownPort { wire: Wire, port_ref: PortRef },
    IllegalDirection { wire: Wire },
    KindMismatch { wire: Wire, source_kind: ValueKind, dest_kind: ValueKind },
    MultipleFeeds { dest: PortRef, count: usize },
    MissingFeed { dest: PortRef },
    ChildInterfaceMismatch { slot: BoxId, detail: String },
}

impl Violation {
    /// The wire this violation points at, when it points at one.
    pub fn wire(&self) -> Option<&Wire> {
        match self {
            Violation::UnknownBox { wire, .. }
            | Violation::UnknownPort { wire, .. }
            | Violation::IllegalDirection { wire }
            | Violation::KindMismatch { wire, .. } => Some(wire),
            _ => None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyPortName { owner, side } => {
                write!(f, "empty {side} port name on `{owner}`")
            }
            Violation::DuplicatePortName { owner, side, name } => {
                write!(f, "duplicate {side} port `{name}` on `{owner}`")
            }
            Violation::ZeroVectorDim { owner, port } => {
                write!(f, "vector port `{port}` on `{owner}` has dimension 0")
            }
            Violation::UnknownBox { wire, box_id } => {
                write!(f, "wire `{wire}` references unknown box `{box_id}`")
            }
            Violation::UnknownPort { wire, port_ref } => {
                write!(f, "wire `{wire}` references unknown port `{port_ref}`")
            }
            Violation::IllegalDirection { wire } => {
                write!(f, "wire `{wire}` has an illegal direction")
            }
            Violation::KindMismatch { wire, source_kind, dest_kind } => {
                write!(
                    f,
                    "wire `{wire}` connects mismatched kinds {source_kind} -> {dest_kind}"
                )
            }
            Violation::MultipleFeeds { dest, count } => {
                write!(f, "destination `{dest}` is fed by {count} wires (exactly 1 required)")
            }
            Violation::MissingFeed { dest } => {
                write!(f, "destination `{dest}` is fed by no wire")
            }
            Violation::ChildInterfaceMismatch { slot, detail } => {
                write!(f, "sub-diagram at `{slot}` does not match its slot: {detail}")
            }
        }
    }
}

/// Outcome of [`WiringDiagram::validate`]: ok, or the full list of violations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            write!(f, "ok")
        } else {
            for (i, v) in self.violations.iter().enumerate() {
                if i > 0 {
                    writeln!(f)?;
                }
                write!(f, "{v}")?;
            }
            Ok(())
        }
    }
}

fn check_interface(owner: &str, iface: &BoxInterface, out: &mut Vec<Violation>) {
    for (side, ports) in [(PortSide::Input, &iface.inputs), (PortSide::Output, &iface.outputs)] {
        let mut seen = BTreeSet::new();
        for p in ports {
            if p.name.is_empty() {
                out.push(Violation::EmptyPortName { owner: owner.to_string(), side });
            } else if !seen.insert(&p.name) {
                out.push(Violation::DuplicatePortName {
                    owner: owner.to_string(),
                    side,
                    name: p.name.clone(),
                });
            }
            if let ValueKind::RealVector(0) = p.kind {
                out.push(Violation::ZeroVectorDim {
                    owner: owner.to_string(),
                    port: p.name.clone(),
                });
            }
        }
    }
}

impl WiringDiagram {
    /// Check every structural invariant; violations are data, not failures.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();

        check_interface("outer", &self.outer, &mut violations);
        for (id, iface) in &self.inner {
            check_interface(id.as_str(), iface, &mut violations);
        }

        let mut feed_counts: BTreeMap<PortRef, usize> = BTreeMap::new();
        for wire in &self.wires {
            let legal = wire.source.is_source() && wire.dest.is_dest();
            if !legal {
                violations.push(Violation::IllegalDirection { wire: wire.clone() });
                continue;
            }
            let mut resolved = true;
            for r in [&wire.source, &wire.dest] {
                if let Some(b) = r.box_id() {
                    if !self.inner.contains_key(b) {
                        violations.push(Violation::UnknownBox {
                            wire: wire.clone(),
                            box_id: b.clone(),
                        });
                        resolved = false;
                        continue;
                    }
                }
                if self.kind_of(r).is_none() {
                    violations.push(Violation::UnknownPort {
                        wire: wire.clone(),
                        port_ref: r.clone(),
                    });
                    resolved = false;
                }
            }
            if !resolved {
                continue;
            }
            let (src_kind, dest_kind) = (
                self.kind_of(&wire.source).expect("resolved above"),
                self.kind_of(&wire.dest).expect("resolved above"),
            );
            if src_kind != dest_kind {
                violations.push(Violation::KindMismatch {
                    wire: wire.clone(),
                    source_kind: src_kind,
                    dest_kind,
                });
            }
            *feed_counts.entry(wire.dest.clone()).or_insert(0) += 1;
        }

        for dest in self.destinations() {
            match feed_counts.get(&dest).copied().unwrap_or(0) {
                0 => violations.push(Violation::MissingFeed { dest }),
                1 => {}
                n => violations.push(Violation::MultipleFeeds { dest, count: n }),
            }
        }

        ValidationReport { violations }
    }

    /// Structural equality up to a renaming of inner boxes.
    ///
    /// The canonical pairing in sorted-id order (which covers the renamings
    /// substitution itself produces) is tried first; if it fails, a
    /// backtracking search looks for any interface-preserving renaming under
    /// which the wire sets coincide.
    pub fn canonically_equal(&self, other: &WiringDiagram) -> bool {
        if self.outer != other.outer
            || self.inner.len() != other.inner.len()
            || self.wires.len() != other.wires.len()
        {
            return false;
        }
        let sorted_pairing: BTreeMap<&BoxId, &BoxId> =
            self.inner.keys().zip(other.inner.keys()).collect();
        if self
            .inner
            .iter()
            .zip(other.inner.iter())
            .all(|(a, b)| a.1 == b.1)
            && self.wires_match(other, &sorted_pairing)
        {
            return true;
        }
        let mine: Vec<&BoxId> = self.inner.keys().collect();
        let mut mapping: BTreeMap<&BoxId, &BoxId> = BTreeMap::new();
        let mut used: BTreeSet<&BoxId> = BTreeSet::new();
        self.search_renaming(other, &mine, 0, &mut mapping, &mut used)
    }

    fn wires_match(&self, other: &WiringDiagram, rename: &BTreeMap<&BoxId, &BoxId>) -> bool {
        let map_ref = |r: &PortRef| -> PortRef {
            match r {
                PortRef::BoxInput { box_id, port } => PortRef::BoxInput {
                    box_id: (*rename.get(box_id).expect("box present")).clone(),
                    port: port.clone(),
                },
                PortRef::BoxOutput { box_id, port } => PortRef::BoxOutput {
                    box_id: (*rename.get(box_id).expect("box present")).clone(),
                    port: port.clone(),
                },
                other => other.clone(),
            }
        };
        self.wires
            .iter()
            .all(|w| other.wires.contains(&Wire::new(map_ref(&w.source), map_ref(&w.dest))))
    }

    fn search_renaming<'a>(
        &'a self,
        other: &'a WiringDiagram,
        mine: &[&'a BoxId],
        idx: usize,
        mapping: &mut BTreeMap<&'a BoxId, &'a BoxId>,
        used: &mut BTreeSet<&'a BoxId>,
    ) -> bool {
        if idx == mine.len() {
            return self.wires_match(other, mapping);
        }
        let a = mine[idx];
        for (b, iface) in &other.inner {
            if used.contains(b) || iface != &self.inner[a] {
                continue;
            }
            mapping.insert(a, b);
            used.insert(b);
            if self.partial_wires_ok(other, mapping, a)
                && self.search_renaming(other, mine, idx + 1, mapping, used)
            {
                return true;
            }
            mapping.remove(a);
            used.remove(b);
        }
        false
    }

    /// Every wire touching `just_mapped` whose other endpoint is already
    /// mapped (outer refs always are) must exist in `other` under the map.
    fn partial_wires_ok(
        &self,
        other: &WiringDiagram,
        mapping: &BTreeMap<&BoxId, &BoxId>,
        just_mapped: &BoxId,
    ) -> bool {
        let map_ref = |r: &PortRef| -> Option<PortRef> {
            match r {
                PortRef::BoxInput { box_id, port } => mapping.get(box_id).map(|b| {
                    PortRef::BoxInput { box_id: (*b).clone(), port: port.clone() }
                }),
                PortRef::BoxOutput { box_id, port } => mapping.get(box_id).map(|b| {
                    PortRef::BoxOutput { box_id: (*b).clone(), port: port.clone() }
                }),
                other => Some(other.clone()),
            }
        };
        for w in &self.wires {
            let touches = w.source.box_id() == Some(just_mapped)
                || w.dest.box_id() == Some(just_mapped);
            if !touches {
                continue;
            }
            if let (Some(s), Some(d)) = (map_ref(&w.source), map_ref(&w.dest)) {
                if !other.wires.contains(&Wire::new(s, d)) {
                    return false;
                }
            }
        }
        true
    }
}

/// Diagram with a single inner box wired straight through.
///
/// Every outer input feeds the matching inner input and every inner output
/// feeds the matching outer output. This is the unit of substitution.
pub fn identity_diagram(interface: &BoxInterface) -> WiringDiagram {
    let inner_id = BoxId::from("inner");
    let mut d = WiringDiagram::new(interface.clone());
    d.add_box(inner_id.clone(), interface.clone());
    for p in &interface.inputs {
        d.add_wire(
            PortRef::outer_input(p.name.clone()),
            PortRef::box_input(inner_id.clone(), p.name.clone()),
        );
    }
    for p in &interface.outputs {
        d.add_wire(
            PortRef::box_output(inner_id.clone(), p.name.clone()),
            PortRef::outer_output(p.name.clone()),
        );
    }
    d
}

/// Why a substitution could not be carried out.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SubstituteError {
    #[error("unknown slot `{slot}`")]
    UnknownSlot { slot: BoxId },
    #[error("guest outer interface does not match slot `{slot}`: {detail}")]
    InterfaceMismatch { slot: BoxId, detail: String },
    #[error("{which} diagram is invalid: {report}")]
    InvalidInput { which: &'static str, report: String },
    #[error("pass-through wires form a sourceless cycle through slot `{slot}` at port `{port}`")]
    PassThroughCycle { slot: BoxId, port: String },
}

/// Plug `guest` into the inner box `slot` of `host`.
///
/// Guest boxes are renamed `slot/<id>`; wires crossing the boundary are
/// spliced so the result has no reference to `slot` and no pass-through
/// chains left from the boundary crossing.
pub fn substitute(
    host: &WiringDiagram,
    slot: &BoxId,
    guest: &WiringDiagram,
) -> Result<WiringDiagram, SubstituteError> {
    let host_report = host.validate();
    if !host_report.is_ok() {
        return Err(SubstituteError::InvalidInput {
            which: "host",
            report: host_report.to_string(),
        });
    }
    let guest_report = guest.validate();
    if !guest_report.is_ok() {
        return Err(SubstituteError::InvalidInput {
            which: "guest",
            report: guest_report.to_string(),
        });
    }
    let slot_iface = host
        .inner
        .get(slot)
        .ok_or_else(|| SubstituteError::UnknownSlot { slot: slot.clone() })?;
    if let Some(detail) = slot_iface.first_mismatch(&guest.outer) {
        return Err(SubstituteError::InterfaceMismatch { slot: slot.clone(), detail });
    }

    // Reject sourceless boundary cycles eagerly: a guest pass-through chained
    // with host wires that loop the slot back into itself has no producer, and
    // detecting it by presence (rather than when some consumer reaches it)
    // keeps the domain of substitution closed under re-association.
    {
        // edges over slot input ports: p -> p' when the guest passes p to some
        // output q and the host loops slot.q back into slot.p'
        let mut next: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for gw in &guest.wires {
            if let (PortRef::OuterInput { port: p }, PortRef::OuterOutput { port: q }) =
                (&gw.source, &gw.dest)
            {
                for hw in &host.wires {
                    if let (
                        PortRef::BoxOutput { box_id: s, port: hq },
                        PortRef::BoxInput { box_id: d, port: hp },
                    ) = (&hw.source, &hw.dest)
                    {
                        if s == slot && d == slot && hq == q {
                            next.entry(p.as_str()).or_default().push(hp.as_str());
                        }
                    }
                }
            }
        }
        let mut done: BTreeSet<&str> = BTreeSet::new();
        for &start in next.keys().collect::<Vec<_>>().iter() {
            if done.contains(start) {
                continue;
            }
            let mut stack = vec![(start, false)];
            let mut on_path: BTreeSet<&str> = BTreeSet::new();
            while let Some((node, leaving)) = stack.pop() {
                if leaving {
                    on_path.remove(node);
                    done.insert(node);
                    continue;
                }
                if on_path.contains(node) {
                    return Err(SubstituteError::PassThroughCycle {
                        slot: slot.clone(),
                        port: node.to_string(),
                    });
                }
                if done.contains(node) {
                    continue;
                }
                on_path.insert(node);
                stack.push((node, true));
                for succ in next.get(node).into_iter().flatten() {
                    stack.push((succ, false));
                }
            }
        }
    }

    let host_feeds = host.feeds();
    let guest_feeds = guest.feeds();

    // Follow a host-side source through the slot boundary until it lands on a
    // producer that survives in the composite.
    let resolve_host = |mut src: PortRef| -> Result<PortRef, SubstituteError> {
        let mut seen: BTreeSet<String> = BTreeSet::new();
        loop {
            match src {
                PortRef::BoxOutput { ref box_id, ref port } if box_id == slot => {
                    if !seen.insert(port.clone()) {
                        return Err(SubstituteError::PassThroughCycle {
                            slot: slot.clone(),
                            port: port.clone(),
                        });
                    }
                    let gsrc = guest_feeds
                        .get(&PortRef::outer_output(port.clone()))
                        .expect("guest is valid: outer output fed");
                    match gsrc {
                        PortRef::OuterInput { port: p } => {
                            src = host_feeds
                                .get(&PortRef::box_input(slot.clone(), p.clone()))
                                .expect("host is valid: slot input fed")
                                .clone();
                        }
                        PortRef::BoxOutput { box_id: gb, port: gp } => {
                            return Ok(PortRef::box_output(slot.join(gb), gp.clone()));
                        }
                        _ => unreachable!("guest wire sources are producers"),
                    }
                }
                other => return Ok(other),
            }
        }
    };
    // Same, starting from a guest-side source.
    let resolve_guest = |src: &PortRef| -> Result<PortRef, SubstituteError> {
        match src {
            PortRef::BoxOutput { box_id: gb, port: gp } => {
                Ok(PortRef::box_output(slot.join(gb), gp.clone()))
            }
            PortRef::OuterInput { port: p } => {
                let h = host_feeds
                    .get(&PortRef::box_input(slot.clone(), p.clone()))
                    .expect("host is valid: slot input fed")
                    .clone();
                resolve_host(h)
            }
            _ => unreachable!("guest wire sources are producers"),
        }
    };

    let mut result = WiringDiagram::new(host.outer.clone());
    for (id, iface) in &host.inner {
        if id != slot {
            result.add_box(id.clone(), iface.clone());
        }
    }
    for (gid, giface) in &guest.inner {
        result.add_box(slot.join(gid), giface.clone());
    }

    // Re-derive every destination's unique feed in composite coordinates.
    for (id, iface) in &host.inner {
        if id == slot {
            continue;
        }
        for p in &iface.inputs {
            let dest = PortRef::box_input(id.clone(), p.name.clone());
            let src = resolve_host(host_feeds[&dest].clone())?;
            result.add_wire(src, dest);
        }
    }
    for p in &host.outer.outputs {
        let dest = PortRef::outer_output(p.name.clone());
        let src = resolve_host(host_feeds[&dest].clone())?;
        result.add_wire(src, dest);
    }
    for (gid, giface) in &guest.inner {
        for p in &giface.inputs {
            let src = resolve_guest(
                &guest_feeds[&PortRef::box_input(gid.clone(), p.name.clone())],
            )?;
            result.add_wire(src, PortRef::box_input(slot.join(gid), p.name.clone()));
        }
    }

    Ok(result)
}

/// A nested diagram: a diagram whose inner boxes may carry whole sub-diagrams.
///
/// A child's outer interface must equal its slot's interface in the parent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagramTree {
    pub diagram: WiringDiagram,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub children: BTreeMap<BoxId, DiagramTree>,
}

/// Substitution failure at a specific node of a tree.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("flatten failed at `{}`: {source}", path_display(.path))]
pub struct FlattenError {
    pub path: Vec<BoxId>,
    pub source: SubstituteError,
}

fn path_display(path: &[BoxId]) -> String {
    if path.is_empty() {
        "<root>".to_string()
    } else {
        path.iter().map(BoxId::as_str).collect::<Vec<_>>().join("/")
    }
}

impl DiagramTree {
    pub fn leaf(diagram: WiringDiagram) -> Self {
        Self { diagram, children: BTreeMap::new() }
    }

    pub fn with_child(mut self, slot: impl Into<BoxId>, child: DiagramTree) -> Self {
        self.children.insert(slot.into(), child);
        self
    }

    /// Total number of leaf-level boxes (boxes without a sub-diagram).
    pub fn leaf_count(&self) -> usize {
        let nested: usize = self.children.values().map(DiagramTree::leaf_count).sum();
        self.diagram.len_inner() - self.children.len() + nested
    }

    /// Collapse all nesting by folding [`substitute`] over the tree.
    pub fn flatten(&self) -> Result<WiringDiagram, FlattenError> {
        let mut flat = self.diagram.clone();
        for (slot, child) in &self.children {
            let guest = child.flatten().map_err(|mut e| {
                e.path.insert(0, slot.clone());
                e
            })?;
            flat = substitute(&flat, slot, &guest).map_err(|source| FlattenError {
                path: vec![slot.clone()],
                source,
            })?;
        }
        Ok(flat)
    }

    /// Validate every node's diagram and every child/slot interface match.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = self.diagram.validate().violations;
        for (slot, child) in &self.children {
            match self.diagram.inner.get(slot) {
                Some(iface) => {
                    if let Some(detail) = iface.first_mismatch(&child.diagram.outer) {
                        violations.push(Violation::ChildInterfaceMismatch {
                            slot: slot.clone(),
                            detail,
                        });
                    }
                }
                None => violations.push(Violation::ChildInterfaceMismatch {
                    slot: slot.clone(),
                    detail: "no such box in the parent diagram".to_string(),
                }),
            }
            violations.extend(child.validate().violations);
        }
        ValidationReport { violations }
    }

    /// Leaf box ids in flattened (path) form.
    pub fn leaf_ids(&self) -> Vec<BoxId> {
        let mut out = Vec::new();
        self.collect_leaf_ids(None, &mut out);
        out
    }

    fn collect_leaf_ids(&self, prefix: Option<&BoxId>, out: &mut Vec<BoxId>) {
        for id in self.diagram.inner.keys() {
            let path = match prefix {
                Some(p) => p.join(id),
                None => id.clone(),
            };
            match self.children.get(id) {
                Some(child) => child.collect_leaf_ids(Some(&path), out),
                None => out.push(path),
            }
        }
    }
}

impl WiringDiagram {
    /// Number of inner boxes.
    pub fn len_inner(&self) -> usize {
        self.inner.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bool_iface(ins: &[&str], outs: &[&str]) -> BoxInterface {
        BoxInterface::new(
            ins.iter().map(|n| PortSpec::boolean(*n)).collect(),
            outs.iter().map(|n| PortSpec::boolean(*n)).collect(),
        )
    }

    #[test]
    fn identity_diagram_wires_straight_through() {
        let iface = bool_iface(&["a"], &["b"]);
        let d = identity_diagram(&iface);
        assert_eq!(d.inner.len(), 1);
        assert_eq!(d.wires.len(), 2);
        assert!(d.validate().is_ok());
    }

    #[test]
    fn identity_diagram_on_empty_interface() {
        let d = identity_diagram(&BoxInterface::default());
        assert_eq!(d.inner.len(), 1);
        assert!(d.wires.is_empty());
        assert!(d.validate().is_ok());
    }

    #[test]
    fn double_feed_is_a_violation() {
        let iface = bool_iface(&["a", "b"], &["y"]);
        let mut d = WiringDiagram::new(bool_iface(&["p", "q"], &["r"]));
        d.add_box("g", iface);
        d.add_wire(PortRef::outer_input("p"), PortRef::box_input("g", "a"));
        d.add_wire(PortRef::outer_input("q"), PortRef::box_input("g", "a"));
        d.add_wire(PortRef::outer_input("q"), PortRef::box_input("g", "b"));
        d.add_wire(PortRef::box_output("g", "y"), PortRef::outer_output("r"));
        let report = d.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::MultipleFeeds { count: 2, .. })));
    }

    #[test]
    fn missing_feed_and_kind_mismatch_reported() {
        let mut d = WiringDiagram::new(BoxInterface::new(
            vec![PortSpec::real("x")],
            vec![PortSpec::boolean("y")],
        ));
        d.add_box("b", BoxInterface::new(vec![PortSpec::boolean("i")], vec![PortSpec::boolean("o")]));
        // real -> boolean: kind mismatch; box output feeds outer output fine
        d.add_wire(PortRef::outer_input("x"), PortRef::box_input("b", "i"));
        let report = d.validate();
        assert!(report.violations.iter().any(|v| matches!(v, Violation::KindMismatch { .. })));
        assert!(report.violations.iter().any(
            |v| matches!(v, Violation::MissingFeed { dest: PortRef::OuterOutput { .. } })
        ));
    }

    #[test]
    fn illegal_direction_and_unknown_refs_reported() {
        let mut d = WiringDiagram::new(bool_iface(&["a"], &["y"]));
        d.add_box("b", bool_iface(&["i"], &["o"]));
        d.add_wire(PortRef::box_input("b", "i"), PortRef::outer_output("y")); // input as source
        d.add_wire(PortRef::outer_input("a"), PortRef::box_input("nope", "i"));
        d.add_wire(PortRef::outer_input("missing"), PortRef::box_input("b", "i"));
        let report = d.validate();
        assert!(report.violations.iter().any(|v| matches!(v, Violation::IllegalDirection { .. })));
        assert!(report.violations.iter().any(|v| matches!(v, Violation::UnknownBox { .. })));
        assert!(report.violations.iter().any(|v| matches!(v, Violation::UnknownPort { .. })));
    }

    #[test]
    fn pass_through_wire_is_legal() {
        let mut d = WiringDiagram::new(bool_iface(&["a"], &["y"]));
        d.add_wire(PortRef::outer_input("a"), PortRef::outer_output("y"));
        assert!(d.validate().is_ok());
    }

    #[test]
    fn self_loop_is_legal_and_detected_as_cycle() {
        let mut d = WiringDiagram::new(bool_iface(&[], &["y"]));
        d.add_box("b", bool_iface(&["i"], &["o"]));
        d.add_wire(PortRef::box_output("b", "o"), PortRef::box_input("b", "i"));
        d.add_wire(PortRef::box_output("b", "o"), PortRef::outer_output("y"));
        assert!(d.validate().is_ok());
        let cycle = d.topo_order().unwrap_err();
        assert_eq!(cycle, vec![BoxId::from("b")]);
    }

    #[test]
    fn substitute_unknown_slot_and_mismatch() {
        let iface = bool_iface(&["a"], &["y"]);
        let host = identity_diagram(&iface);
        let guest = identity_diagram(&iface);
        let err = substitute(&host, &BoxId::from("nope"), &guest).unwrap_err();
        assert!(matches!(err, SubstituteError::UnknownSlot { .. }));

        let wrong = identity_diagram(&bool_iface(&["a", "b"], &["y"]));
        let err = substitute(&host, &BoxId::from("inner"), &wrong).unwrap_err();
        match err {
            SubstituteError::InterfaceMismatch { detail, .. } => {
                assert!(detail.contains("input count"), "got: {detail}");
            }
            other => panic!("expected mismatch, got {other:?}"),
        }
    }

    #[test]
    fn substitute_identity_into_slot_preserves_host() {
        let iface = bool_iface(&["a", "b"], &["y"]);
        let host = {
            let mut d = WiringDiagram::new(bool_iface(&["p", "q"], &["r"]));
            d.add_box("g", iface.clone());
            d.add_wire(PortRef::outer_input("p"), PortRef::box_input("g", "a"));
            d.add_wire(PortRef::outer_input("q"), PortRef::box_input("g", "b"));
            d.add_wire(PortRef::box_output("g", "y"), PortRef::outer_output("r"));
            d
        };
        let result = substitute(&host, &BoxId::from("g"), &identity_diagram(&iface)).unwrap();
        assert!(result.validate().is_ok());
        assert!(result.canonically_equal(&host));
    }

    #[test]
    fn pass_through_cycle_is_an_error() {
        // host: slot output loops straight back into slot input
        let iface = bool_iface(&["a"], &["y"]);
        let mut host = WiringDiagram::new(bool_iface(&[], &["r"]));
        host.add_box("s", iface.clone());
        host.add_wire(PortRef::box_output("s", "y"), PortRef::box_input("s", "a"));
        host.add_wire(PortRef::box_output("s", "y"), PortRef::outer_output("r"));
        assert!(host.validate().is_ok());
        // guest: pure pass-through a -> y
        let mut guest = WiringDiagram::new(iface);
        guest.add_wire(PortRef::outer_input("a"), PortRef::outer_output("y"));
        assert!(guest.validate().is_ok());
        let err = substitute(&host, &BoxId::from("s"), &guest).unwrap_err();
        assert!(matches!(err, SubstituteError::PassThroughCycle { .. }));
    }

    #[test]
    fn flatten_single_node_is_identity() {
        let d = identity_diagram(&bool_iface(&["a"], &["y"]));
        let tree = DiagramTree::leaf(d.clone());
        assert_eq!(tree.flatten().unwrap(), d);
    }

    #[test]
    fn flatten_error_carries_path() {
        let iface = bool_iface(&["a"], &["y"]);
        let host = identity_diagram(&iface);
        let bad_child = DiagramTree::leaf(identity_diagram(&bool_iface(&["a", "b"], &["y"])));
        let tree = DiagramTree::leaf(host).with_child("inner", bad_child);
        let err = tree.flatten().unwrap_err();
        assert_eq!(err.path, vec![BoxId::from("inner")]);
        assert!(matches!(err.source, SubstituteError::InterfaceMismatch { .. }));
    }

    #[test]
    fn canonical_equality_ignores_box_names() {
        let iface = bool_iface(&["a"], &["y"]);
        let mk = |name: &str| {
            let mut d = WiringDiagram::new(iface.clone());
            d.add_box(name, iface.clone());
            d.add_wire(PortRef::outer_input("a"), PortRef::box_input(name, "a"));
            d.add_wire(PortRef::box_output(name, "y"), PortRef::outer_output("y"));
            d
        };
        assert!(mk("alpha").canonically_equal(&mk("beta")));
        assert!(!mk("alpha").canonically_equal(&identity_diagram(&bool_iface(&["a"], &["z"]))));
    }
}
