//! Canonical text form: boxes sorted by id, wires sorted by (dest, source),
//! 2-space indentation, newline at end. Serialization is byte-stable, and
//! parsing a canonical document reproduces the structure exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::csvio::format_f64;
use crate::diagram::{BoxId, BoxInterface, DiagramTree, PortRef, ValueKind, Wire};
use crate::dsl::{Attachment, Document};
use crate::value::Value;

fn kind_text(kind: ValueKind) -> String {
    match kind {
        ValueKind::Boolean => "bool".to_string(),
        ValueKind::Real => "real".to_string(),
        ValueKind::RealVector(d) => format!("real[{d}]"),
    }
}

fn endpoint_text(r: &PortRef) -> String {
    match r {
        PortRef::OuterInput { port } | PortRef::OuterOutput { port } => format!("outer.{port}"),
        PortRef::BoxInput { box_id, port } | PortRef::BoxOutput { box_id, port } => {
            format!("{box_id}.{port}")
        }
    }
}

/// Interface pool: structurally deduplicated, named in first-appearance order.
struct Pool {
    names: Vec<(BoxInterface, String)>,
}

impl Pool {
    fn new() -> Self {
        Self { names: Vec::new() }
    }

    fn intern(&mut self, iface: &BoxInterface) -> String {
        if let Some((_, name)) = self.names.iter().find(|(i, _)| i == iface) {
            return name.clone();
        }
        let name = format!("I{}", self.names.len());
        self.names.push((iface.clone(), name.clone()));
        name
    }

    fn collect(&mut self, tree: &DiagramTree) {
        for iface in tree.diagram.inner.values() {
            self.intern(iface);
        }
        for child in tree.children.values() {
            self.collect(child);
        }
    }
}

fn float_text(x: f64) -> String {
    format_f64(x)
}

fn value_text(v: &Value) -> String {
    match v {
        Value::Bool(b) => b.to_string(),
        Value::Real(x) => float_text(*x),
        Value::RealVec(xs) => vector_text(xs),
    }
}

fn vector_text(xs: &[f64]) -> String {
    let mut s = String::from("[");
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(&float_text(*x));
    }
    s.push(']');
    s
}

fn matrix_text(m: &[Vec<f64>]) -> String {
    let mut s = String::from("[");
    for (i, row) in m.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(&vector_text(row));
    }
    s.push(']');
    s
}

fn attachment_text(a: &Attachment) -> String {
    match a {
        Attachment::Gate(g) => format!("gate {g}"),
        Attachment::Unit { activation, weights, bias } => format!(
            "unit {{ act: {activation}, b: {}, w: {} }}",
            float_text(*bias),
            vector_text(weights)
        ),
        Attachment::Lti { a, b, c, x0 } => {
            let mut s = format!("lti {{ a: {}", matrix_text(a));
            if b.iter().any(|row| !row.is_empty()) {
                let _ = write!(s, ", b: {}", matrix_text(b));
            }
            let _ = write!(s, ", c: {}, x0: {} }}", matrix_text(c), vector_text(x0));
            s
        }
        Attachment::Delay { init } => format!("delay {{ init: {} }}", value_text(init)),
    }
}

fn write_scope(
    out: &mut String,
    tree: &DiagramTree,
    pool: &mut Pool,
    attachments: &BTreeMap<BoxId, Attachment>,
    path: Option<&BoxId>,
    indent: usize,
) {
    let pad = "  ".repeat(indent);
    for (id, iface) in &tree.diagram.inner {
        let iname = pool.intern(iface);
        match tree.children.get(id) {
            None => {
                let _ = writeln!(out, "{pad}box {id}: {iname}");
            }
            Some(child) => {
                let _ = writeln!(out, "{pad}box {id}: {iname} {{");
                let child_path = match path {
                    Some(p) => p.join(id),
                    None => id.clone(),
                };
                write_scope(out, child, pool, attachments, Some(&child_path), indent + 1);
                let _ = writeln!(out, "{pad}}}");
            }
        }
    }
    let mut wires: Vec<&Wire> = tree.diagram.wires.iter().collect();
    wires.sort_by_key(|w| (endpoint_text(&w.dest), endpoint_text(&w.source)));
    for w in wires {
        let _ = writeln!(out, "{pad}wire {} -> {}", endpoint_text(&w.source), endpoint_text(&w.dest));
    }
    for (id, _) in &tree.diagram.inner {
        if tree.children.contains_key(id) {
            continue;
        }
        let flat_id = match path {
            Some(p) => p.join(id),
            None => id.clone(),
        };
        if let Some(a) = attachments.get(&flat_id) {
            let _ = writeln!(out, "{pad}attach {id} {}", attachment_text(a));
        }
    }
}

/// Render a document in canonical form.
pub fn serialize(doc: &Document) -> String {
    let mut pool = Pool::new();
    let outer_name = pool.intern(&doc.tree.diagram.outer);
    pool.collect(&doc.tree);

    let mut out = String::new();
    let _ = writeln!(out, "outer {outer_name}");
    for (iface, name) in pool.names.clone() {
        if iface.inputs.is_empty() && iface.outputs.is_empty() {
            let _ = writeln!(out, "interface {name} {{}}");
            continue;
        }
        let _ = writeln!(out, "interface {name} {{");
        for p in &iface.inputs {
            let _ = writeln!(out, "  in {}: {};", p.name, kind_text(p.kind));
        }
        for p in &iface.outputs {
            let _ = writeln!(out, "  out {}: {};", p.name, kind_text(p.kind));
        }
        let _ = writeln!(out, "}}");
    }
    write_scope(&mut out, &doc.tree, &mut pool, &doc.attachments, None, 0);
    out
}
