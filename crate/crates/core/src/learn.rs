//! Diagram-structured neurons: forward and backward passes routed along wires.
//!
//! A [`DiagramNet`] attaches one [`LearnerUnit`] to every leaf box of a wiring
//! diagram whose ports are all real and whose boxes each expose one output.
//! Values propagate forward along the wires; errors propagate along the same
//! wires reversed, with fan-out errors summed at their source. [`unfold_mlp`]
//! builds the nested-diagram form of a dense MLP: each layer's units interior
//! to the next layer's enclosing box, with no wires between units of a layer.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagram::{
    BoxId, BoxInterface, DiagramTree, FlattenError, PortRef, PortSpec, ValueKind, WiringDiagram,
};

/// Pointwise nonlinearity applied to a unit's weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
        }
    }

    /// d act / d z. At the ReLU kink, the derivative is taken as 0.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => {
                let s = self.apply(z);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(Activation::Identity),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Activation::Identity => "identity",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        };
        write!(f, "{name}")
    }
}

/// One artificial neuron: weight per input port, a bias, and an activation.
///
/// The last forward pass's inputs and pre-activation are cached for the
/// backward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerUnit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub activation: Activation,
    #[serde(skip)]
    cache: Option<UnitCache>,
}

#[derive(Debug, Clone, PartialEq)]
struct UnitCache {
    inputs: Vec<f64>,
    pre_activation: f64,
}

impl LearnerUnit {
    pub fn new(weights: Vec<f64>, bias: f64, activation: Activation) -> Self {
        Self { weights, bias, activation, cache: None }
    }

    /// y = act(sum_i w_i x_i + b), without touching the cache.
    pub fn output(&self, inputs: &[f64]) -> f64 {
        self.activation.apply(self.pre_activation(inputs))
    }

    pub(crate) fn pre_activation(&self, inputs: &[f64]) -> f64 {
        self.weights.iter().zip(inputs).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    fn forward_cached(&mut self, inputs: Vec<f64>) -> f64 {
        let z = self.pre_activation(&inputs);
        self.cache = Some(UnitCache { inputs, pre_activation: z });
        self.activation.apply(z)
    }
}

/// Weight and bias gradients for one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitGrads {
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Result of a backward pass over the whole net.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardResult {
    /// Error delivered at each outer input, in outer-input order.
    pub input_grads: Vec<f64>,
    pub grads: BTreeMap<BoxId, UnitGrads>,
}

#[derive(Debug, Clone, Error)]
pub enum LearnError {
    #[error("an unfolded net needs at least 2 layers")]
    TooFewLayers,
    #[error("layer sizes must be positive")]
    EmptyLayer,
    #[error(transparent)]
    Flatten(#[from] FlattenError),
    #[error("diagram is invalid: {0}")]
    InvalidDiagram(String),
    #[error("port `{0}` is not real-kind; learner nets carry reals only")]
    NonRealPort(String),
    #[error("box `{0}` must have exactly one output port")]
    NotSingleOutput(BoxId),
    #[error("unit on box `{box_id}` does not fit: {detail}")]
    UnitMismatch { box_id: BoxId, detail: String },
    #[error("value wires are cyclic through: {}", cycle.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" -> "))]
    CyclicWires { cycle: Vec<BoxId> },
    #[error("expected {expected} inputs, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("non-finite value produced at `{0}`")]
    NonFinite(String),
    #[error("backward called before forward (unit caches are stale)")]
    StaleCache,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("learning rate must be nonnegative and finite, got {0}")]
    BadEta(f64),
    #[error("non-finite loss at epoch {epoch}, example {example}")]
    NonFiniteLoss { epoch: usize, example: usize },
}

/// A wiring diagram with a learner unit on every leaf box.
#[derive(Debug, Clone)]
pub struct DiagramNet {
    tree: DiagramTree,
    flat: WiringDiagram,
    units: BTreeMap<BoxId, LearnerUnit>,
    /// Default learning rate carried with the net.
    pub eta: f64,
    topo: Vec<BoxId>,
    feeds: BTreeMap<PortRef, PortRef>,
}

impl DiagramNet {
    /// Build a net over a (possibly nested) diagram.
    ///
    /// Units are keyed by flattened path ids. Every port must be real, every
    /// leaf box must have exactly one output, and the value wiring must be
    /// acyclic.
    pub fn new(
        tree: DiagramTree,
        units: BTreeMap<BoxId, LearnerUnit>,
        eta: f64,
    ) -> Result<Self, LearnError> {
        let flat = tree.flatten()?;
        let report = flat.validate();
        if !report.is_ok() {
            return Err(LearnError::InvalidDiagram(report.to_string()));
        }
        for p in flat.outer.inputs.iter().chain(flat.outer.outputs.iter()) {
            if p.kind != ValueKind::Real {
                return Err(LearnError::NonRealPort(format!("outer.{}", p.name)));
            }
        }
        for (id, iface) in &flat.inner {
            for p in iface.inputs.iter().chain(iface.outputs.iter()) {
                if p.kind != ValueKind::Real {
                    return Err(LearnError::NonRealPort(format!("{id}.{}", p.name)));
                }
            }
            if iface.outputs.len() != 1 {
                return Err(LearnError::NotSingleOutput(id.clone()));
            }
            let unit = units.get(id).ok_or_else(|| LearnError::UnitMismatch {
                box_id: id.clone(),
                detail: "no unit attached".to_string(),
            })?;
            if unit.weights.len() != iface.inputs.len() {
                return Err(LearnError::UnitMismatch {
                    box_id: id.clone(),
                    detail: format!(
                        "{} weights for {} input ports",
                        unit.weights.len(),
                        iface.inputs.len()
                    ),
                });
            }
        }
        for id in units.keys() {
            if !flat.inner.contains_key(id) {
                return Err(LearnError::UnitMismatch {
                    box_id: id.clone(),
                    detail: "unit attached to a box the diagram does not have".to_string(),
                });
            }
        }
        let topo = flat
            .topo_order()
            .map_err(|cycle| LearnError::CyclicWires { cycle })?;
        let feeds = flat.feeds();
        Ok(Self { tree, flat, units, eta, topo, feeds })
    }

    pub fn tree(&self) -> &DiagramTree {
        &self.tree
    }

    pub fn flat(&self) -> &WiringDiagram {
        &self.flat
    }

    pub fn units(&self) -> &BTreeMap<BoxId, LearnerUnit> {
        &self.units
    }

    pub fn unit(&self, id: &BoxId) -> Option<&LearnerUnit> {
        self.units.get(id)
    }

    pub fn unit_mut(&mut self, id: &BoxId) -> Option<&mut LearnerUnit> {
        self.units.get_mut(id)
    }

    fn source_value(&self, dest: &PortRef, x: &[f64], outputs: &BTreeMap<BoxId, f64>) -> f64 {
        match &self.feeds[dest] {
            PortRef::OuterInput { port } => {
                let i = self.flat.outer.input_index(port).expect("validated");
                x[i]
            }
            PortRef::BoxOutput { box_id, .. } => outputs[box_id],
            _ => unreachable!("wire sources are producers"),
        }
    }

    /// Push an input vector through the net in topological order.
    ///
    /// Populates per-unit caches for [`DiagramNet::backward`].
    pub fn forward(&mut self, x: &[f64]) -> Result<Vec<f64>, LearnError> {
        let expected = self.flat.outer.inputs.len();
        if x.len() != expected {
            return Err(LearnError::ArityMismatch { expected, got: x.len() });
        }
        let order = self.topo.clone();
        let mut outputs: BTreeMap<BoxId, f64> = BTreeMap::new();
        for id in &order {
            let ins: Vec<f64> = self.flat.inner[id]
                .inputs
                .iter()
                .map(|p| {
                    self.source_value(&PortRef::box_input(id.clone(), p.name.clone()), x, &outputs)
                })
                .collect();
            let unit = self.units.get_mut(id).expect("validated");
            let y = unit.forward_cached(ins);
            if !y.is_finite() {
                return Err(LearnError::NonFinite(id.to_string()));
            }
            outputs.insert(id.clone(), y);
        }
        Ok(self
            .flat
            .outer
            .outputs
            .iter()
            .map(|p| self.source_value(&PortRef::outer_output(p.name.clone()), x, &outputs))
            .collect())
    }

    /// Evaluate the nested diagram directly, recursing through the tree.
    ///
    /// Pure: caches are untouched. Agrees exactly with [`DiagramNet::forward`]
    /// on the flattened diagram.
    pub fn forward_nested(&self, x: &[f64]) -> Result<Vec<f64>, LearnError> {
        let expected = self.tree.diagram.outer.inputs.len();
        if x.len() != expected {
            return Err(LearnError::ArityMismatch { expected, got: x.len() });
        }
        self.eval_node(&self.tree, None, x)
    }

    fn eval_node(
        &self,
        node: &DiagramTree,
        prefix: Option<&BoxId>,
        inputs: &[f64],
    ) -> Result<Vec<f64>, LearnError> {
        let d = &node.diagram;
        let order = d
            .topo_order()
            .map_err(|cycle| LearnError::CyclicWires { cycle })?;
        let feeds = d.feeds();
        let mut box_out: BTreeMap<BoxId, Vec<f64>> = BTreeMap::new();
        let value_of = |src: &PortRef, box_out: &BTreeMap<BoxId, Vec<f64>>| -> f64 {
            match src {
                PortRef::OuterInput { port } => {
                    inputs[d.outer.input_index(port).expect("validated")]
                }
                PortRef::BoxOutput { box_id, port } => {
                    let idx = d.inner[box_id].output_index(port).expect("validated");
                    box_out[box_id][idx]
                }
                _ => unreachable!("wire sources are producers"),
            }
        };
        for id in order {
            let ins: Vec<f64> = d.inner[&id]
                .inputs
                .iter()
                .map(|p| {
                    value_of(&feeds[&PortRef::box_input(id.clone(), p.name.clone())], &box_out)
                })
                .collect();
            let path = match prefix {
                Some(pre) => pre.join(&id),
                None => id.clone(),
            };
            let outs = match node.children.get(&id) {
                Some(child) => self.eval_node(child, Some(&path), &ins)?,
                None => {
                    let unit = self.units.get(&path).expect("validated: unit per leaf");
                    vec![unit.output(&ins)]
                }
            };
            box_out.insert(id, outs);
        }
        Ok(d
            .outer
            .outputs
            .iter()
            .map(|p| value_of(&feeds[&PortRef::outer_output(p.name.clone())], &box_out))
            .collect())
    }

    /// Propagate output errors along the reversed wires.
    ///
    /// For a unit with summed incoming error `d` at its output: `dL/db =
    /// d*act'(z)`, `dL/dw_i = d*act'(z)*x_i`, and the error sent back along
    /// input wire i is `d*act'(z)*w_i`. Fan-out errors sum at their source.
    pub fn backward(&self, dy: &[f64]) -> Result<BackwardResult, LearnError> {
        let expected = self.flat.outer.outputs.len();
        if dy.len() != expected {
            return Err(LearnError::ArityMismatch { expected, got: dy.len() });
        }
        if self.units.values().any(|u| u.cache.is_none()) {
            return Err(LearnError::StaleCache);
        }
        let mut delta_out: BTreeMap<BoxId, f64> =
            self.flat.inner.keys().map(|id| (id.clone(), 0.0)).collect();
        let mut input_grads = vec![0.0; self.flat.outer.inputs.len()];

        fn credit(
            outer: &BoxInterface,
            src: &PortRef,
            amount: f64,
            delta_out: &mut BTreeMap<BoxId, f64>,
            input_grads: &mut [f64],
        ) {
            match src {
                PortRef::BoxOutput { box_id, .. } => {
                    *delta_out.get_mut(box_id).expect("validated") += amount;
                }
                PortRef::OuterInput { port } => {
                    let i = outer.input_index(port).expect("validated");
                    input_grads[i] += amount;
                }
                _ => unreachable!("wire sources are producers"),
            }
        }

        for (j, p) in self.flat.outer.outputs.iter().enumerate() {
            let src = &self.feeds[&PortRef::outer_output(p.name.clone())];
            credit(&self.flat.outer, src, dy[j], &mut delta_out, &mut input_grads);
        }

        let mut grads = BTreeMap::new();
        for id in self.topo.iter().rev() {
            let unit = &self.units[id];
            let cache = unit.cache.as_ref().expect("checked above");
            let scaled = delta_out[id] * unit.activation.derivative(cache.pre_activation);
            grads.insert(
                id.clone(),
                UnitGrads {
                    weights: cache.inputs.iter().map(|x| scaled * x).collect(),
                    bias: scaled,
                },
            );
            for (i, p) in self.flat.inner[id].inputs.iter().enumerate() {
                let src = &self.feeds[&PortRef::box_input(id.clone(), p.name.clone())];
                credit(
                    &self.flat.outer,
                    src,
                    scaled * unit.weights[i],
                    &mut delta_out,
                    &mut input_grads,
                );
            }
        }
        Ok(BackwardResult { input_grads, grads })
    }

    /// Apply a gradient step `w -= eta * dw`, `b -= eta * db` to every unit.
    pub fn apply_grads(&mut self, grads: &BTreeMap<BoxId, UnitGrads>, eta: f64) {
        for (id, g) in grads {
            let unit = self.units.get_mut(id).expect("validated");
            for (w, dw) in unit.weights.iter_mut().zip(&g.weights) {
                *w -= eta * dw;
            }
            unit.bias -= eta * g.bias;
        }
    }
}

#[derive(Serialize, Deserialize)]
struct NetRepr {
    tree: DiagramTree,
    units: BTreeMap<BoxId, LearnerUnit>,
    eta: f64,
}

impl Serialize for DiagramNet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        NetRepr { tree: self.tree.clone(), units: self.units.clone(), eta: self.eta }
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DiagramNet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = NetRepr::deserialize(deserializer)?;
        DiagramNet::new(repr.tree, repr.units, repr.eta).map_err(serde::de::Error::custom)
    }
}

fn unit_interface(fanin: usize) -> BoxInterface {
    BoxInterface::new(
        (0..fanin).map(|i| PortSpec::real(format!("in{i}"))).collect(),
        vec![PortSpec::real("out")],
    )
}

fn enclosure_interface(layer: usize, sizes: &[usize]) -> BoxInterface {
    BoxInterface::new(
        (0..sizes[0]).map(|i| PortSpec::real(format!("in{i}"))).collect(),
        (0..sizes[layer]).map(|i| PortSpec::real(format!("out{i}"))).collect(),
    )
}

fn unfold_node(layer: usize, sizes: &[usize]) -> DiagramTree {
    if layer == 0 {
        let mut d = WiringDiagram::new(enclosure_interface(0, sizes));
        for i in 0..sizes[0] {
            let id = BoxId::from(format!("l0_{i}"));
            d.add_box(id.clone(), unit_interface(1));
            d.add_wire(PortRef::outer_input(format!("in{i}")), PortRef::box_input(id.clone(), "in0"));
            d.add_wire(PortRef::box_output(id, "out"), PortRef::outer_output(format!("out{i}")));
        }
        return DiagramTree::leaf(d);
    }
    let fanin = sizes[layer - 1];
    let slot = BoxId::from(format!("s{}", layer - 1));
    let mut d = WiringDiagram::new(enclosure_interface(layer, sizes));
    d.add_box(slot.clone(), enclosure_interface(layer - 1, sizes));
    for j in 0..sizes[0] {
        d.add_wire(
            PortRef::outer_input(format!("in{j}")),
            PortRef::box_input(slot.clone(), format!("in{j}")),
        );
    }
    for k in 0..sizes[layer] {
        let id = BoxId::from(format!("l{layer}_{k}"));
        d.add_box(id.clone(), unit_interface(fanin));
        for i in 0..fanin {
            d.add_wire(
                PortRef::box_output(slot.clone(), format!("out{i}")),
                PortRef::box_input(id.clone(), format!("in{i}")),
            );
        }
        d.add_wire(
            PortRef::box_output(id, "out"),
            PortRef::outer_output(format!("out{k}")),
        );
    }
    DiagramTree::leaf(d).with_child(slot, unfold_node(layer - 1, sizes))
}

/// Flattened path id of unit `index` in `layer`, for a net of `num_layers` layers.
pub fn mlp_unit_id(num_layers: usize, layer: usize, index: usize) -> BoxId {
    let top = num_layers - 1;
    let mut path = String::new();
    for l in (layer..top).rev() {
        path.push_str(&format!("s{l}/"));
    }
    path.push_str(&format!("l{layer}_{index}"));
    BoxId::from(path)
}

/// Unfold a dense MLP into a nested interaction diagram.
///
/// Layer `l`'s units sit at nesting depth `(L - l)`: each layer's boxes are
/// interior to the next layer's enclosing box, every unit of a layer feeds
/// every unit of the enclosing layer, and no wires connect units within one
/// layer. The outer interface is `x0..` in, `y0..` out. Weights initialize
/// uniform on `[-1/sqrt(fanin), +1/sqrt(fanin)]` from the seeded generator;
/// biases start at zero. Layer-0 units have fanin 1 (their own input line).
pub fn unfold_mlp(
    layer_sizes: &[usize],
    activation: Activation,
    seed: u64,
) -> Result<DiagramNet, LearnError> {
    if layer_sizes.len() < 2 {
        return Err(LearnError::TooFewLayers);
    }
    if layer_sizes.iter().any(|&n| n == 0) {
        return Err(LearnError::EmptyLayer);
    }
    let top = layer_sizes.len() - 1;

    // top node carries the network-facing port names x*/y*
    let outer = BoxInterface::new(
        (0..layer_sizes[0]).map(|i| PortSpec::real(format!("x{i}"))).collect(),
        (0..layer_sizes[top]).map(|i| PortSpec::real(format!("y{i}"))).collect(),
    );
    let slot = BoxId::from(format!("s{}", top - 1));
    let mut d = WiringDiagram::new(outer);
    d.add_box(slot.clone(), enclosure_interface(top - 1, layer_sizes));
    for j in 0..layer_sizes[0] {
        d.add_wire(
            PortRef::outer_input(format!("x{j}")),
            PortRef::box_input(slot.clone(), format!("in{j}")),
        );
    }
    for k in 0..layer_sizes[top] {
        let id = BoxId::from(format!("l{top}_{k}"));
        d.add_box(id.clone(), unit_interface(layer_sizes[top - 1]));
        for i in 0..layer_sizes[top - 1] {
            d.add_wire(
                PortRef::box_output(slot.clone(), format!("out{i}")),
                PortRef::box_input(id.clone(), format!("in{i}")),
            );
        }
        d.add_wire(PortRef::box_output(id, "out"), PortRef::outer_output(format!("y{k}")));
    }
    let tree = DiagramTree::leaf(d).with_child(slot, unfold_node(top - 1, layer_sizes));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut units = BTreeMap::new();
    for (layer, &size) in layer_sizes.iter().enumerate() {
        let fanin = if layer == 0 { 1 } else { layer_sizes[layer - 1] };
        let bound = 1.0 / (fanin as f64).sqrt();
        for index in 0..size {
            let weights: Vec<f64> =
                (0..fanin).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound).collect();
            units.insert(
                mlp_unit_id(layer_sizes.len(), layer, index),
                LearnerUnit::new(weights, 0.0, activation),
            );
        }
    }
    DiagramNet::new(tree, units, 0.1)
}

/// Mean squared error over the output vector.
pub fn mse(y: &[f64], target: &[f64]) -> f64 {
    let m = y.len() as f64;
    y.iter().zip(target).map(|(yi, ti)| (yi - ti) * (yi - ti)).sum::<f64>() / m
}

/// d mse / d y.
pub fn mse_grad(y: &[f64], target: &[f64]) -> Vec<f64> {
    let m = y.len() as f64;
    y.iter().zip(target).map(|(yi, ti)| 2.0 * (yi - ti) / m).collect()
}

/// Supported training losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Loss {
    #[default]
    Mse,
}

/// Outcome of [`train`]: per-epoch mean losses plus the raw per-example record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub epoch_losses: Vec<f64>,
    pub step_losses: Vec<f64>,
}

/// Per-example SGD in dataset order.
///
/// Each example runs forward, measures the loss, backpropagates `dL/dy`, and
/// immediately applies `w -= eta*dw`, `b -= eta*db`. Deterministic given the
/// net, data, and order.
pub fn train(
    net: &mut DiagramNet,
    dataset: &[(Vec<f64>, Vec<f64>)],
    loss: Loss,
    epochs: usize,
    eta: f64,
) -> Result<TrainResult, LearnError> {
    let Loss::Mse = loss;
    if dataset.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    if eta < 0.0 || !eta.is_finite() {
        return Err(LearnError::BadEta(eta));
    }
    let mut epoch_losses = Vec::with_capacity(epochs);
    let mut step_losses = Vec::with_capacity(epochs * dataset.len());
    for epoch in 0..epochs {
        let mut total = 0.0;
        for (example, (x, t)) in dataset.iter().enumerate() {
            let y = net.forward(x)?;
            let l = mse(&y, t);
            if !l.is_finite() {
                return Err(LearnError::NonFiniteLoss { epoch, example });
            }
            step_losses.push(l);
            total += l;
            let back = net.backward(&mse_grad(&y, t))?;
            net.apply_grads(&back.grads, eta);
        }
        epoch_losses.push(total / dataset.len() as f64);
    }
    Ok(TrainResult { epoch_losses, step_losses })
}
