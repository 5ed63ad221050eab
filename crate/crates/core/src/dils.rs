//! Learners whose interaction pattern is itself a parameter.
//!
//! A [`DilsNetwork`] keeps the learner units of a [`DiagramNet`] but replaces
//! selected wires with a [`SoftEntry`]: a softmax mixture over candidate
//! sources with a per-wire gain. The effective input at such a destination is
//! `sum_c softmax(logits)_c * gains_c * value(c)`. Prediction-error gradients
//! flow through the mixture exactly as through any other parameter, so the
//! wiring rewires itself online; [`DilsNetwork::harden`] reads off the
//! discrete diagram the mixture currently encodes.
//!
//! Two reductions anchor the design: with singleton candidates and a zero
//! wiring rate the network is the embedded plain net, step for step; with both
//! rates zero it is a fixed interacting system that merely evaluates.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csvio::format_f64;
use crate::diagram::{BoxId, BoxInterface, PortRef, ValueKind, Wire, WiringDiagram};
use crate::learn::{mse, mse_grad, DiagramNet, LearnerUnit, UnitGrads};

/// One learnable destination: candidate sources, their logits, and gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftEntry {
    pub dest: PortRef,
    pub candidates: Vec<PortRef>,
    pub logits: Vec<f64>,
    pub gains: Vec<f64>,
}

impl SoftEntry {
    pub fn new(dest: PortRef, candidates: Vec<PortRef>) -> Self {
        let n = candidates.len();
        Self { dest, candidates, logits: vec![0.0; n], gains: vec![1.0; n] }
    }

    /// Index of the argmax-probability candidate; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, l) in self.logits.iter().enumerate() {
            if *l > self.logits[best] {
                best = i;
            }
        }
        best
    }

    /// Softmax probabilities over the candidates (max-shifted, so adding a
    /// constant to every logit leaves the result bit-identical).
    pub fn probabilities(&self) -> Vec<f64> {
        let max = self.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self.logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }
}

/// Gradients of the prediction error with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct DilsGradients {
    pub units: BTreeMap<BoxId, UnitGrads>,
    /// Per soft entry, aligned with [`DilsNetwork::soft`].
    pub logits: Vec<Vec<f64>>,
    pub gains: Vec<Vec<f64>>,
}

/// The discrete wiring realized at an instant: per-destination argmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewiringSnapshot {
    pub step: u64,
    pub hard: WiringDiagram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub loss: f64,
    pub outputs: Vec<f64>,
}

/// Where and why an online run stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHalt {
    pub step: u64,
    pub reason: String,
}

/// Time-indexed record of an online run: losses, outputs, wiring snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLog {
    pub output_ports: Vec<String>,
    pub rows: Vec<TraceRow>,
    pub snapshots: Vec<RewiringSnapshot>,
    pub halted: Option<TraceHalt>,
}

impl TraceLog {
    /// CSV with header `step,loss,<outer output ports...>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss");
        for p in &self.output_ports {
            out.push(',');
            out.push_str(p);
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{},{}", row.step, format_f64(row.loss));
            for v in &row.outputs {
                out.push(',');
                out.push_str(&format_f64(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Learning rates and snapshot cadence for [`DilsNetwork::run_online`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineConfig {
    pub eta_param: f64,
    pub eta_wire: f64,
    /// Append a rewiring snapshot every this many steps; 0 disables snapshots.
    pub snapshot_every: usize,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self { eta_param: 0.01, eta_wire: 0.01, snapshot_every: 0 }
    }
}

#[derive(Debug, Clone, Error)]
pub enum DilsError {
    #[error("network structure is invalid: {0}")]
    InvalidStructure(String),
    #[error("argmax hard wiring is cyclic through: {}", cycle.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" -> "))]
    CyclicHardWiring { cycle: Vec<BoxId> },
    #[error("expected {expected} values, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("non-finite value produced at `{0}`")]
    NonFinite(String),
    #[error("backward called before forward (cache is stale)")]
    StaleCache,
    #[error("input stream is empty")]
    EmptyStream,
}

#[derive(Debug, Clone)]
struct EntryCache {
    probs: Vec<f64>,
    /// Candidate values; a candidate whose source was not yet evaluated in the
    /// pass's order contributes 0 and is marked dead.
    values: Vec<f64>,
    live: Vec<bool>,
}

#[derive(Debug, Clone)]
struct PassCache {
    order: Vec<BoxId>,
    box_inputs: BTreeMap<BoxId, Vec<f64>>,
    box_pre_activation: BTreeMap<BoxId, f64>,
    entries: Vec<EntryCache>,
}

/// A diagram-shaped learner with trainable soft wiring.
#[derive(Debug, Clone)]
pub struct DilsNetwork {
    outer: BoxInterface,
    interfaces: BTreeMap<BoxId, BoxInterface>,
    units: BTreeMap<BoxId, LearnerUnit>,
    fixed_wires: Vec<Wire>,
    soft: Vec<SoftEntry>,
    soft_index: BTreeMap<PortRef, usize>,
    pub eta_param: f64,
    pub eta_wire: f64,
    pub clock: u64,
    cache: Option<PassCache>,
}

#[derive(Serialize, Deserialize)]
struct DilsRepr {
    outer: BoxInterface,
    interfaces: BTreeMap<BoxId, BoxInterface>,
    units: BTreeMap<BoxId, LearnerUnit>,
    fixed_wires: Vec<Wire>,
    soft: Vec<SoftEntry>,
    eta_param: f64,
    eta_wire: f64,
    clock: u64,
}

impl Serialize for DilsNetwork {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        DilsRepr {
            outer: self.outer.clone(),
            interfaces: self.interfaces.clone(),
            units: self.units.clone(),
            fixed_wires: self.fixed_wires.clone(),
            soft: self.soft.clone(),
            eta_param: self.eta_param,
            eta_wire: self.eta_wire,
            clock: self.clock,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DilsNetwork {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = DilsRepr::deserialize(deserializer)?;
        let mut net = DilsNetwork::new(
            repr.outer,
            repr.interfaces,
            repr.units,
            repr.fixed_wires,
            repr.soft,
            repr.eta_param,
            repr.eta_wire,
        )
        .map_err(serde::de::Error::custom)?;
        net.clock = repr.clock;
        Ok(net)
    }
}

impl DilsNetwork {
    /// Assemble and validate a network.
    ///
    /// Every destination port (box inputs and outer outputs) must be covered
    /// exactly once, by either a fixed wire or a soft entry; candidates must
    /// be legal, existing sources; all ports must be real.
    pub fn new(
        outer: BoxInterface,
        interfaces: BTreeMap<BoxId, BoxInterface>,
        units: BTreeMap<BoxId, LearnerUnit>,
        fixed_wires: Vec<Wire>,
        soft: Vec<SoftEntry>,
        eta_param: f64,
        eta_wire: f64,
    ) -> Result<Self, DilsError> {
        let bad = |msg: String| Err(DilsError::InvalidStructure(msg));

        let skeleton = WiringDiagram {
            outer: outer.clone(),
            inner: interfaces.clone(),
            wires: Default::default(),
        };
        for p in outer.inputs.iter().chain(outer.outputs.iter()) {
            if p.kind != ValueKind::Real {
                return bad(format!("outer port `{}` is not real", p.name));
            }
        }
        for (id, iface) in &interfaces {
            for p in iface.inputs.iter().chain(iface.outputs.iter()) {
                if p.kind != ValueKind::Real {
                    return bad(format!("port `{id}.{}` is not real", p.name));
                }
            }
            if iface.outputs.len() != 1 {
                return bad(format!("box `{id}` must have exactly one output port"));
            }
            match units.get(id) {
                None => return bad(format!("box `{id}` has no unit")),
                Some(u) if u.weights.len() != iface.inputs.len() => {
                    return bad(format!(
                        "unit on `{id}` has {} weights for {} inputs",
                        u.weights.len(),
                        iface.inputs.len()
                    ))
                }
                _ => {}
            }
        }
        for id in units.keys() {
            if !interfaces.contains_key(id) {
                return bad(format!("unit attached to unknown box `{id}`"));
            }
        }

        let mut covered: BTreeMap<PortRef, &str> = BTreeMap::new();
        let mut cover = |dest: &PortRef, how: &'static str| -> Result<(), DilsError> {
            if let Some(prev) = covered.insert(dest.clone(), how) {
                return Err(DilsError::InvalidStructure(format!(
                    "destination `{dest}` covered by both {prev} and {how}"
                )));
            }
            Ok(())
        };
        for w in &fixed_wires {
            if !w.source.is_source() || !w.dest.is_dest() {
                return bad(format!("fixed wire `{w}` has an illegal direction"));
            }
            if skeleton.kind_of(&w.source).is_none() || skeleton.kind_of(&w.dest).is_none() {
                return bad(format!("fixed wire `{w}` references a missing port"));
            }
            cover(&w.dest, "a fixed wire")?;
        }
        let mut soft_index = BTreeMap::new();
        for (idx, entry) in soft.iter().enumerate() {
            if !entry.dest.is_dest() || skeleton.kind_of(&entry.dest).is_none() {
                return bad(format!("soft entry destination `{}` is not a valid port", entry.dest));
            }
            if entry.candidates.is_empty() {
                return bad(format!("soft entry at `{}` has no candidates", entry.dest));
            }
            if entry.logits.len() != entry.candidates.len()
                || entry.gains.len() != entry.candidates.len()
            {
                return bad(format!(
                    "soft entry at `{}` has mismatched logits/gains/candidates lengths",
                    entry.dest
                ));
            }
            for c in &entry.candidates {
                if !c.is_source() || skeleton.kind_of(c).is_none() {
                    return bad(format!(
                        "candidate `{c}` at `{}` is not a valid source",
                        entry.dest
                    ));
                }
            }
            cover(&entry.dest, "a soft entry")?;
            soft_index.insert(entry.dest.clone(), idx);
        }
        for dest in skeleton.destinations() {
            if !covered.contains_key(&dest) {
                return bad(format!("destination `{dest}` is fed by nothing"));
            }
        }

        Ok(Self {
            outer,
            interfaces,
            units,
            fixed_wires,
            soft,
            soft_index,
            eta_param,
            eta_wire,
            clock: 0,
            cache: None,
        })
    }

    /// Embed a plain net: every existing wire becomes either a fixed wire or,
    /// for box-to-box wires, a singleton soft entry (probability 1, gain 1).
    ///
    /// Forward outputs match the source net exactly at initialization, and
    /// with `eta_wire = 0` the training trajectory matches it step for step.
    pub fn from_dnn(net: &DiagramNet) -> DilsNetwork {
        let flat = net.flat();
        let units = net
            .units()
            .iter()
            .map(|(id, u)| (id.clone(), LearnerUnit::new(u.weights.clone(), u.bias, u.activation)))
            .collect();
        let mut fixed = Vec::new();
        let mut soft = Vec::new();
        for w in &flat.wires {
            let peer_to_peer = matches!(w.source, PortRef::BoxOutput { .. })
                && matches!(w.dest, PortRef::BoxInput { .. });
            if peer_to_peer {
                soft.push(SoftEntry::new(w.dest.clone(), vec![w.source.clone()]));
            } else {
                fixed.push(w.clone());
            }
        }
        DilsNetwork::new(
            flat.outer.clone(),
            flat.inner.clone(),
            units,
            fixed,
            soft,
            net.eta,
            0.0,
        )
        .expect("a valid DiagramNet embeds into a valid DilsNetwork")
    }

    pub fn outer(&self) -> &BoxInterface {
        &self.outer
    }

    pub fn units(&self) -> &BTreeMap<BoxId, LearnerUnit> {
        &self.units
    }

    pub fn unit_mut(&mut self, id: &BoxId) -> Option<&mut LearnerUnit> {
        self.units.get_mut(id)
    }

    pub fn soft(&self) -> &[SoftEntry] {
        &self.soft
    }

    pub fn soft_mut(&mut self) -> &mut [SoftEntry] {
        &mut self.soft
    }

    pub fn fixed_wires(&self) -> &[Wire] {
        &self.fixed_wires
    }

    /// The discrete diagram currently encoded: fixed wires plus each soft
    /// entry's argmax candidate.
    pub fn hard_diagram(&self) -> WiringDiagram {
        let mut wires: std::collections::BTreeSet<Wire> =
            self.fixed_wires.iter().cloned().collect();
        for entry in &self.soft {
            wires.insert(Wire::new(entry.candidates[entry.argmax()].clone(), entry.dest.clone()));
        }
        WiringDiagram { outer: self.outer.clone(), inner: self.interfaces.clone(), wires }
    }

    /// Snapshot the argmax wiring at the current clock.
    pub fn harden(&self) -> RewiringSnapshot {
        RewiringSnapshot { step: self.clock, hard: self.hard_diagram() }
    }

    /// Mix inputs per the soft wiring and push them through the units.
    ///
    /// Boxes run in topological order of the argmax hard wiring. A candidate
    /// whose source box has not been evaluated yet in that order contributes
    /// zero to its mixture (and receives no error), keeping the pass a
    /// well-defined function of the parameters.
    pub fn forward(&mut self, x: &[f64]) -> Result<Vec<f64>, DilsError> {
        let expected = self.outer.inputs.len();
        if x.len() != expected {
            return Err(DilsError::ArityMismatch { expected, got: x.len() });
        }
        let hard = self.hard_diagram();
        let order = hard
            .topo_order()
            .map_err(|cycle| DilsError::CyclicHardWiring { cycle })?;
        let fixed_feeds: BTreeMap<&PortRef, &PortRef> =
            self.fixed_wires.iter().map(|w| (&w.dest, &w.source)).collect();

        let mut box_out: BTreeMap<BoxId, f64> = BTreeMap::new();
        let mut entries: Vec<Option<EntryCache>> = vec![None; self.soft.len()];

        let source_value = |src: &PortRef, box_out: &BTreeMap<BoxId, f64>| -> (f64, bool) {
            match src {
                PortRef::OuterInput { port } => {
                    (x[self.outer.input_index(port).expect("validated")], true)
                }
                PortRef::BoxOutput { box_id, .. } => match box_out.get(box_id) {
                    Some(v) => (*v, true),
                    None => (0.0, false),
                },
                _ => unreachable!("sources only"),
            }
        };
        let effective = |dest: &PortRef,
                         box_out: &BTreeMap<BoxId, f64>,
                         entries: &mut Vec<Option<EntryCache>>|
         -> f64 {
            match self.soft_index.get(dest) {
                Some(&idx) => {
                    let entry = &self.soft[idx];
                    let probs = entry.probabilities();
                    let mut values = Vec::with_capacity(entry.candidates.len());
                    let mut live = Vec::with_capacity(entry.candidates.len());
                    let mut acc = 0.0;
                    for (c, cand) in entry.candidates.iter().enumerate() {
                        let (v, ok) = source_value(cand, box_out);
                        acc += probs[c] * entry.gains[c] * v;
                        values.push(v);
                        live.push(ok);
                    }
                    entries[idx] = Some(EntryCache { probs, values, live });
                    acc
                }
                None => {
                    let src = fixed_feeds[dest];
                    let (v, ok) = source_value(src, box_out);
                    debug_assert!(ok, "fixed feeds respect the topological order");
                    v
                }
            }
        };

        let mut box_inputs = BTreeMap::new();
        let mut box_pre_activation = BTreeMap::new();
        for id in &order {
            let ins: Vec<f64> = self.interfaces[id]
                .inputs
                .iter()
                .map(|p| {
                    effective(
                        &PortRef::box_input(id.clone(), p.name.clone()),
                        &box_out,
                        &mut entries,
                    )
                })
                .collect();
            let unit = &self.units[id];
            let z = unit.pre_activation(&ins);
            let y = unit.activation.apply(z);
            if !y.is_finite() {
                return Err(DilsError::NonFinite(id.to_string()));
            }
            box_inputs.insert(id.clone(), ins);
            box_pre_activation.insert(id.clone(), z);
            box_out.insert(id.clone(), y);
        }

        let outputs: Vec<f64> = self
            .outer
            .outputs
            .iter()
            .map(|p| effective(&PortRef::outer_output(p.name.clone()), &box_out, &mut entries))
            .collect();
        for (p, y) in self.outer.outputs.iter().zip(&outputs) {
            if !y.is_finite() {
                return Err(DilsError::NonFinite(format!("outer.{}", p.name)));
            }
        }

        self.cache = Some(PassCache {
            order,
            box_inputs,
            box_pre_activation,
            entries: entries
                .into_iter()
                .map(|e| e.expect("every soft destination is consumed once per pass"))
                .collect(),
        });
        Ok(outputs)
    }

    /// Exact reverse-mode gradients of the mixed forward computation.
    ///
    /// Errors flow backward over the same soft wires: through each mixture
    /// they reach the gains, the logits (via the softmax Jacobian), and the
    /// live candidate sources.
    pub fn backward(&self, dy: &[f64]) -> Result<DilsGradients, DilsError> {
        let cache = self.cache.as_ref().ok_or(DilsError::StaleCache)?;
        let expected = self.outer.outputs.len();
        if dy.len() != expected {
            return Err(DilsError::ArityMismatch { expected, got: dy.len() });
        }
        let fixed_feeds: BTreeMap<&PortRef, &PortRef> =
            self.fixed_wires.iter().map(|w| (&w.dest, &w.source)).collect();

        let mut delta_out: BTreeMap<BoxId, f64> =
            self.interfaces.keys().map(|id| (id.clone(), 0.0)).collect();
        let mut logit_grads: Vec<Vec<f64>> =
            self.soft.iter().map(|e| vec![0.0; e.candidates.len()]).collect();
        let mut gain_grads: Vec<Vec<f64>> =
            self.soft.iter().map(|e| vec![0.0; e.candidates.len()]).collect();

        // Distribute dL/d(effective input at dest) into the mixture or wire.
        let mut distribute = |dest: &PortRef, amount: f64, delta_out: &mut BTreeMap<BoxId, f64>| {
            match self.soft_index.get(dest) {
                Some(&idx) => {
                    let entry = &self.soft[idx];
                    let ec = &cache.entries[idx];
                    let mix: f64 = (0..entry.candidates.len())
                        .map(|c| ec.probs[c] * entry.gains[c] * ec.values[c])
                        .sum();
                    for c in 0..entry.candidates.len() {
                        gain_grads[idx][c] += amount * ec.probs[c] * ec.values[c];
                        logit_grads[idx][c] +=
                            amount * ec.probs[c] * (entry.gains[c] * ec.values[c] - mix);
                        if ec.live[c] {
                            if let PortRef::BoxOutput { box_id, .. } = &entry.candidates[c] {
                                *delta_out.get_mut(box_id).expect("validated") +=
                                    amount * ec.probs[c] * entry.gains[c];
                            }
                        }
                    }
                }
                None => {
                    if let PortRef::BoxOutput { box_id, .. } = fixed_feeds[dest] {
                        *delta_out.get_mut(box_id).expect("validated") += amount;
                    }
                }
            }
        };

        for (j, p) in self.outer.outputs.iter().enumerate() {
            distribute(&PortRef::outer_output(p.name.clone()), dy[j], &mut delta_out);
        }

        let mut units = BTreeMap::new();
        for id in cache.order.iter().rev() {
            let unit = &self.units[id];
            let z = cache.box_pre_activation[id];
            let ins = &cache.box_inputs[id];
            let scaled = delta_out[id] * unit.activation.derivative(z);
            units.insert(
                id.clone(),
                UnitGrads { weights: ins.iter().map(|x| scaled * x).collect(), bias: scaled },
            );
            for (i, p) in self.interfaces[id].inputs.iter().enumerate() {
                distribute(
                    &PortRef::box_input(id.clone(), p.name.clone()),
                    scaled * unit.weights[i],
                    &mut delta_out,
                );
            }
        }

        Ok(DilsGradients { units, logits: logit_grads, gains: gain_grads })
    }

    fn apply(&mut self, grads: &DilsGradients, eta_param: f64, eta_wire: f64) {
        for (id, g) in &grads.units {
            let unit = self.units.get_mut(id).expect("validated");
            for (w, dw) in unit.weights.iter_mut().zip(&g.weights) {
                *w -= eta_param * dw;
            }
            unit.bias -= eta_param * g.bias;
        }
        for (idx, entry) in self.soft.iter_mut().enumerate() {
            for (l, dl) in entry.logits.iter_mut().zip(&grads.logits[idx]) {
                *l -= eta_wire * dl;
            }
            for (g, dg) in entry.gains.iter_mut().zip(&grads.gains[idx]) {
                *g -= eta_wire * dg;
            }
        }
    }

    /// Consume an ordered stream of (input, target) pairs, continuously online.
    ///
    /// Each arrival is predicted, its loss recorded, and both the unit
    /// parameters (at `eta_param`) and the wiring logits/gains (at `eta_wire`)
    /// updated from the same prediction-error gradient. There is no separate
    /// train/test mode. A non-finite loss halts the run; the trace records
    /// where.
    pub fn run_online(
        &mut self,
        stream: &[(Vec<f64>, Vec<f64>)],
        cfg: &OnlineConfig,
    ) -> Result<TraceLog, DilsError> {
        if stream.is_empty() {
            return Err(DilsError::EmptyStream);
        }
        self.eta_param = cfg.eta_param;
        self.eta_wire = cfg.eta_wire;
        let mut trace = TraceLog {
            output_ports: self.outer.outputs.iter().map(|p| p.name.clone()).collect(),
            rows: Vec::with_capacity(stream.len()),
            snapshots: Vec::new(),
            halted: None,
        };
        if cfg.snapshot_every > 0 {
            trace.snapshots.push(self.harden());
        }
        for (x, target) in stream {
            let step = self.clock;
            let y = match self.forward(x) {
                Ok(y) => y,
                Err(DilsError::NonFinite(port)) => {
                    trace.halted = Some(TraceHalt {
                        step,
                        reason: format!("non-finite value at `{port}`"),
                    });
                    break;
                }
                Err(other) => return Err(other),
            };
            let loss = mse(&y, target);
            trace.rows.push(TraceRow { step, loss, outputs: y.clone() });
            if !loss.is_finite() {
                trace.halted = Some(TraceHalt { step, reason: "non-finite loss".to_string() });
                break;
            }
            let grads = self.backward(&mse_grad(&y, target))?;
            self.apply(&grads, cfg.eta_param, cfg.eta_wire);
            self.clock += 1;
            if cfg.snapshot_every > 0 && self.clock % cfg.snapshot_every as u64 == 0 {
                trace.snapshots.push(self.harden());
            }
        }
        Ok(trace)
    }
}
