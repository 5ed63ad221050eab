//! Turn parsed documents into runnable systems and nets.

use std::collections::BTreeMap;

use dils_core::diagram::{BoxId, BoxInterface};
use dils_core::dsl::{Attachment, Document};
use dils_core::dynamics::{
    compose_combinational, compose_continuous, compose_moore, gate, CombinationalSystem,
    ContinuousSystem, MooreSystem, OpenSystem,
};
use dils_core::learn::{DiagramNet, LearnerUnit};
use dils_core::value::Value;

use crate::error::CliError;

fn lti_system(
    iface: &BoxInterface,
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    c: &[Vec<f64>],
    x0: &[f64],
) -> Result<ContinuousSystem, CliError> {
    let n = x0.len();
    let m = iface.inputs.len();
    let p = iface.outputs.len();
    let shape = |msg: &str| CliError::Shape(format!("lti attachment: {msg}"));
    if a.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(shape(&format!("matrix a must be {n}x{n}")));
    }
    if b.len() != n || (m > 0 && b.iter().any(|row| row.len() != m)) {
        return Err(shape(&format!("matrix b must be {n}x{m}")));
    }
    if c.len() != p || c.iter().any(|row| row.len() != n) {
        return Err(shape(&format!("matrix c must be {p}x{n}")));
    }
    let (a, b, c) = (a.to_vec(), b.to_vec(), c.to_vec());
    let c_read = c.clone();
    Ok(ContinuousSystem::new(
        iface.clone(),
        x0.to_vec(),
        move |state| {
            c_read
                .iter()
                .map(|row| Value::Real(row.iter().zip(state).map(|(w, x)| w * x).sum()))
                .collect()
        },
        move |state, inputs| {
            (0..state.len())
                .map(|i| {
                    let ax: f64 = a[i].iter().zip(state).map(|(w, x)| w * x).sum();
                    let bu: f64 = inputs
                        .iter()
                        .enumerate()
                        .map(|(j, u)| {
                            if b[i].is_empty() {
                                0.0
                            } else {
                                b[i][j] * u.as_real().unwrap_or(0.0)
                            }
                        })
                        .sum();
                    ax + bu
                })
                .collect()
        },
    ))
}

fn delay_system(iface: &BoxInterface, init: &Value) -> Result<MooreSystem, CliError> {
    if iface.inputs.len() != 1 || iface.outputs.len() != 1 {
        return Err(CliError::Shape(
            "delay attachment needs a 1-in 1-out interface".to_string(),
        ));
    }
    if iface.inputs[0].kind != init.kind() || iface.outputs[0].kind != init.kind() {
        return Err(CliError::Shape(format!(
            "delay init kind {} does not match the interface",
            init.kind()
        )));
    }
    Ok(MooreSystem::new(
        iface.clone(),
        vec![init.clone()],
        |state| state.to_vec(),
        |_, inputs| inputs.to_vec(),
    ))
}

/// Compose the document's attached systems into one open system.
///
/// All attachments must belong to one regime: gates (combinational), lti
/// blocks (continuous), or delays (Moore).
pub fn build_system(doc: &Document) -> Result<OpenSystem, CliError> {
    let flat = doc
        .tree
        .flatten()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    for id in flat.inner.keys() {
        if !doc.attachments.contains_key(id) {
            return Err(CliError::Shape(format!("box `{id}` has no attachment")));
        }
    }

    let all = |pred: fn(&Attachment) -> bool| doc.attachments.values().all(pred);
    if all(|a| matches!(a, Attachment::Gate(_))) {
        let mut assign: BTreeMap<BoxId, CombinationalSystem> = BTreeMap::new();
        for (id, a) in &doc.attachments {
            let Attachment::Gate(g) = a else { unreachable!() };
            assign.insert(id.clone(), gate(*g));
        }
        Ok(OpenSystem::Combinational(compose_combinational(&flat, &assign)?))
    } else if all(|a| matches!(a, Attachment::Lti { .. })) {
        let mut assign: BTreeMap<BoxId, ContinuousSystem> = BTreeMap::new();
        for (id, att) in &doc.attachments {
            let Attachment::Lti { a, b, c, x0 } = att else { unreachable!() };
            assign.insert(id.clone(), lti_system(&flat.inner[id], a, b, c, x0)?);
        }
        Ok(OpenSystem::Continuous(compose_continuous(&flat, &assign)?))
    } else if all(|a| matches!(a, Attachment::Delay { .. })) {
        let mut assign: BTreeMap<BoxId, MooreSystem> = BTreeMap::new();
        for (id, att) in &doc.attachments {
            let Attachment::Delay { init } = att else { unreachable!() };
            assign.insert(id.clone(), delay_system(&flat.inner[id], init)?);
        }
        Ok(OpenSystem::Moore(compose_moore(&flat, &assign)?))
    } else {
        Err(CliError::Shape(
            "attachments mix regimes; use all gates, all lti blocks, or all delays"
                .to_string(),
        ))
    }
}

/// Assemble a learner net from a document whose leaves carry unit attachments.
pub fn build_net(doc: &Document, eta: f64) -> Result<DiagramNet, CliError> {
    let mut units = BTreeMap::new();
    for (id, a) in &doc.attachments {
        match a {
            Attachment::Unit { activation, weights, bias } => {
                units.insert(id.clone(), LearnerUnit::new(weights.clone(), *bias, *activation));
            }
            other => {
                return Err(CliError::Shape(format!(
                    "box `{id}` carries a non-unit attachment ({other:?}); training needs units"
                )))
            }
        }
    }
    Ok(DiagramNet::new(doc.tree.clone(), units, eta)?)
}
