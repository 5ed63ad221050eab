//! DOT export: inner boxes as nodes, nesting as clusters, wires as labelled
//! directed edges, outer ports as point-shaped stubs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::diagram::{BoxId, DiagramTree, FlattenError, PortRef, WiringDiagram};
use crate::dsl::Document;

fn node_name(r: &PortRef) -> String {
    match r {
        PortRef::OuterInput { port } => format!("in:{port}"),
        PortRef::OuterOutput { port } => format!("out:{port}"),
        PortRef::BoxInput { box_id, .. } | PortRef::BoxOutput { box_id, .. } => {
            box_id.to_string()
        }
    }
}

fn edge_label(w: &crate::diagram::Wire) -> String {
    format!("{}->{}", w.source.port(), w.dest.port())
}

fn write_cluster(out: &mut String, tree: &DiagramTree, path: Option<&BoxId>, indent: usize) {
    let pad = "  ".repeat(indent);
    for (id, _) in &tree.diagram.inner {
        let full = match path {
            Some(p) => p.join(id),
            None => id.clone(),
        };
        match tree.children.get(id) {
            None => {
                let _ = writeln!(out, "{pad}\"{full}\" [shape=box];");
            }
            Some(child) => {
                let cluster = full.to_string().replace('/', "__");
                let _ = writeln!(out, "{pad}subgraph \"cluster_{cluster}\" {{");
                let _ = writeln!(out, "{pad}  label=\"{id}\";");
                write_cluster(out, child, Some(&full), indent + 1);
                let _ = writeln!(out, "{pad}}}");
            }
        }
    }
}

/// Render a flat diagram; nesting information comes from `tree` when given.
fn export(flat: &WiringDiagram, tree: Option<&DiagramTree>) -> String {
    let mut out = String::from("digraph wiring {\n  rankdir=LR;\n");
    for p in &flat.outer.inputs {
        let _ = writeln!(out, "  \"in:{}\" [shape=point, xlabel=\"{}\"];", p.name, p.name);
    }
    for p in &flat.outer.outputs {
        let _ = writeln!(out, "  \"out:{}\" [shape=point, xlabel=\"{}\"];", p.name, p.name);
    }
    match tree {
        Some(t) => write_cluster(&mut out, t, None, 1),
        None => {
            for id in flat.inner.keys() {
                let _ = writeln!(out, "  \"{id}\" [shape=box];");
            }
        }
    }
    // parallel wires between one pair of rendered nodes merge into one edge
    let mut edges: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    for w in &flat.wires {
        edges
            .entry((node_name(&w.source), node_name(&w.dest)))
            .or_default()
            .push(edge_label(w));
    }
    for ((src, dst), labels) in edges {
        let _ = writeln!(out, "  \"{src}\" -> \"{dst}\" [label=\"{}\"];", labels.join(", "));
    }
    out.push_str("}\n");
    out
}

/// DOT text for a document; nested boxes render as clusters.
pub fn export_dot(doc: &Document) -> Result<String, FlattenError> {
    let flat = doc.tree.flatten()?;
    let tree = if doc.tree.children.is_empty() { None } else { Some(&doc.tree) };
    Ok(export(&flat, tree))
}

/// DOT text for a bare diagram (no nesting).
pub fn export_dot_diagram(diagram: &WiringDiagram) -> String {
    export(diagram, None)
}
