//! Deterministic fixed-step execution of composed systems.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csvio::format_value;
use crate::value::Value;

use super::OpenSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

impl std::str::FromStr for Integrator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euler" => Ok(Integrator::Euler),
            "rk4" => Ok(Integrator::Rk4),
            other => Err(format!("unknown integrator `{other}` (expected euler or rk4)")),
        }
    }
}

/// How long and how finely to run.
///
/// Discrete systems use `steps`; continuous systems take either `steps` or
/// `t_end` (rounded to whole steps of `dt`).
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub steps: Option<usize>,
    pub t_end: Option<f64>,
    pub dt: f64,
    pub integrator: Integrator,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { steps: None, t_end: None, dt: 1.0, integrator: Integrator::Rk4 }
    }
}

impl SimConfig {
    pub fn steps(n: usize) -> Self {
        Self { steps: Some(n), ..Self::default() }
    }

    pub fn until(t_end: f64, dt: f64) -> Self {
        Self { steps: None, t_end: Some(t_end), dt, ..Self::default() }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    fn resolve_steps(&self) -> Result<usize, SimError> {
        if self.dt <= 0.0 || !self.dt.is_finite() {
            return Err(SimError::BadDt(self.dt));
        }
        match (self.steps, self.t_end) {
            (Some(n), _) => Ok(n),
            (None, Some(t_end)) => {
                if t_end < 0.0 || !t_end.is_finite() {
                    return Err(SimError::BadHorizon(t_end));
                }
                Ok((t_end / self.dt).round() as usize)
            }
            (None, None) => Err(SimError::NoHorizon),
        }
    }
}

/// Values presented at the outer inputs, one row per time stamp.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InputTrace {
    pub rows: Vec<Vec<Value>>,
}

impl InputTrace {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: Vec<Vec<Value>>) -> Self {
        Self { rows }
    }

    /// Constant inputs repeated for the whole horizon.
    pub fn constant(row: Vec<Value>, len: usize) -> Self {
        Self { rows: vec![row; len] }
    }
}

/// Time-indexed record of every outer port's value.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    /// Outer port names, inputs before outputs.
    pub columns: Vec<String>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<Value>>,
    /// Per-time state snapshots, where the regime has state.
    pub states: Option<Vec<Vec<Value>>>,
}

impl SimTrace {
    /// Render as CSV: header `t,<outer ports...>`, floats at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.rows) {
            let _ = write!(out, "{}", crate::csvio::format_f64(*t));
            for v in row {
                out.push(',');
                out.push_str(&format_value(v));
            }
            out.push('\n');
        }
        out
    }

    /// Value of a named column at a given row.
    pub fn value_at(&self, row: usize, column: &str) -> Option<&Value> {
        let col = self.columns.iter().position(|c| c == column)?;
        self.rows.get(row)?.get(col)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("input trace covers {got} rows but the horizon needs {needed}")]
    HorizonMismatch { needed: usize, got: usize },
    #[error("input row {row} has {got} values but the system has {expected} input ports")]
    InputArity { row: usize, expected: usize, got: usize },
    #[error("non-finite value at t={time} on port `{port}`")]
    NonFinite { time: f64, port: String },
    #[error("dt must be positive and finite, got {0}")]
    BadDt(f64),
    #[error("t_end must be nonnegative and finite, got {0}")]
    BadHorizon(f64),
    #[error("simulation horizon missing: set steps or t_end")]
    NoHorizon,
    #[error("continuous simulation requires all-real inputs")]
    NonRealInput,
}

fn check_finite(values: &[Value], names: &[String], time: f64) -> Result<(), SimError> {
    for (v, name) in values.iter().zip(names) {
        if !v.is_finite() {
            return Err(SimError::NonFinite { time, port: name.clone() });
        }
    }
    Ok(())
}

fn input_row<'a>(
    inputs: &'a InputTrace,
    k: usize,
    arity: usize,
    needed: usize,
) -> Result<&'a [Value], SimError> {
    if arity == 0 {
        return Ok(&[]);
    }
    let row = inputs
        .rows
        .get(k)
        .ok_or(SimError::HorizonMismatch { needed, got: inputs.rows.len() })?;
    if row.len() != arity {
        return Err(SimError::InputArity { row: k, expected: arity, got: row.len() });
    }
    Ok(row)
}

/// Run a system for the configured horizon and record every outer port.
///
/// Discrete systems step synchronously; continuous systems integrate with the
/// configured fixed-step method under zero-order-hold inputs. The result is a
/// pure function of the arguments: equal calls produce identical traces.
pub fn simulate(
    system: &OpenSystem,
    inputs: &InputTrace,
    cfg: &SimConfig,
) -> Result<SimTrace, SimError> {
    let iface = system.interface();
    let in_names: Vec<String> = iface.inputs.iter().map(|p| p.name.clone()).collect();
    let out_names: Vec<String> = iface.outputs.iter().map(|p| p.name.clone()).collect();
    let columns: Vec<String> = in_names.iter().chain(out_names.iter()).cloned().collect();
    let arity = in_names.len();

    match system {
        OpenSystem::Combinational(sys) => {
            // evaluated once per provided input row
            let n_rows = if arity == 0 {
                cfg.steps.unwrap_or(1)
            } else {
                inputs.rows.len()
            };
            let mut times = Vec::with_capacity(n_rows);
            let mut rows = Vec::with_capacity(n_rows);
            for k in 0..n_rows {
                let t = k as f64 * cfg.dt;
                let ins = input_row(inputs, k, arity, n_rows)?;
                let outs = sys.eval(ins);
                check_finite(&outs, &out_names, t)?;
                let mut row = ins.to_vec();
                row.extend(outs);
                times.push(t);
                rows.push(row);
            }
            Ok(SimTrace { columns, times, rows, states: None })
        }
        OpenSystem::Moore(sys) => {
            let steps = cfg.resolve_steps()?;
            let needed = if arity == 0 { 0 } else { steps + 1 };
            if inputs.rows.len() < needed {
                return Err(SimError::HorizonMismatch { needed, got: inputs.rows.len() });
            }
            let mut state = sys.state.clone();
            let mut times = Vec::with_capacity(steps + 1);
            let mut rows = Vec::with_capacity(steps + 1);
            let mut states = Vec::with_capacity(steps + 1);
            for k in 0..=steps {
                let t = k as f64 * cfg.dt;
                let ins = input_row(inputs, k, arity, needed)?;
                let outs = sys.readout(&state);
                check_finite(&outs, &out_names, t)?;
                let mut row = ins.to_vec();
                row.extend(outs);
                times.push(t);
                rows.push(row);
                states.push(state.clone());
                if k < steps {
                    state = sys.update(&state, ins);
                }
            }
            Ok(SimTrace { columns, times, rows, states: Some(states) })
        }
        OpenSystem::Continuous(sys) => {
            let steps = cfg.resolve_steps()?;
            let needed = if arity == 0 { 0 } else { steps + 1 };
            if inputs.rows.len() < needed {
                return Err(SimError::HorizonMismatch { needed, got: inputs.rows.len() });
            }
            let mut state = sys.state.clone();
            let mut times = Vec::with_capacity(steps + 1);
            let mut rows = Vec::with_capacity(steps + 1);
            let mut states = Vec::with_capacity(steps + 1);
            let dt = cfg.dt;
            for k in 0..=steps {
                let t = k as f64 * dt;
                let ins = input_row(inputs, k, arity, needed)?;
                if ins.iter().any(|v| v.as_bool().is_some()) {
                    return Err(SimError::NonRealInput);
                }
                let outs = sys.readout(&state);
                check_finite(&outs, &out_names, t)?;
                for (i, x) in state.iter().enumerate() {
                    if !x.is_finite() {
                        return Err(SimError::NonFinite { time: t, port: format!("state[{i}]") });
                    }
                }
                let mut row = ins.to_vec();
                row.extend(outs);
                times.push(t);
                rows.push(row);
                states.push(state.iter().map(|x| Value::Real(*x)).collect());
                if k < steps {
                    // zero-order hold: the step uses the input row at its left edge
                    state = match cfg.integrator {
                        Integrator::Euler => {
                            let dx = sys.field(&state, ins);
                            axpy(&state, dt, &dx)
                        }
                        Integrator::Rk4 => {
                            let k1 = sys.field(&state, ins);
                            let k2 = sys.field(&axpy(&state, dt / 2.0, &k1), ins);
                            let k3 = sys.field(&axpy(&state, dt / 2.0, &k2), ins);
                            let k4 = sys.field(&axpy(&state, dt, &k3), ins);
                            state
                                .iter()
                                .enumerate()
                                .map(|(i, x)| {
                                    x + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                                })
                                .collect()
                        }
                    };
                }
            }
            Ok(SimTrace { columns, times, rows, states: Some(states) })
        }
    }
}

fn axpy(x: &[f64], a: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| xi + a * yi).collect()
}
