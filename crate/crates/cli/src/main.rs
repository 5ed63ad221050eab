//! `dils` — one command-line entry point over the wiring-diagram toolkit:
//! validate and flatten diagram documents, simulate attached systems, train
//! diagram-shaped nets, run soft-wired networks online, and export DOT.
//!
//! Exit codes are stable: 0 ok, 1 validation, 2 I/O, 3 parse, 4 shape,
//! 5 numeric. All randomness flows through `--seed`; reruns with equal inputs
//! produce byte-identical outputs. Log level comes from `DILS_LOG`
//! (error|info|debug).

mod build;
mod error;

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use dils_core::csvio::{load_dataset, load_port_rows, loss_curve_csv};
use dils_core::dils::{DilsNetwork, OnlineConfig};
use dils_core::dsl::{export_dot, parse, serialize, Document};
use dils_core::dynamics::{simulate, InputTrace, Integrator, SimConfig};
use dils_core::learn::{train, unfold_mlp, Activation, DiagramNet, Loss};

use error::CliError;

#[derive(Parser)]
#[command(name = "dils", version, about = "wiring diagrams, composed systems, and online learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a diagram document; print violations one per line.
    Validate { file: PathBuf },
    /// Collapse nesting; write the canonical flat document.
    Flatten {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the diagram as DOT (nesting becomes clusters).
    ExportDot {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the systems attached to a diagram and write the trace CSV.
    Simulate {
        file: PathBuf,
        /// CSV of input-port values, one row per time stamp.
        #[arg(long)]
        inputs: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
        #[arg(long, default_value = "rk4")]
        integrator: Integrator,
        #[arg(long)]
        out: PathBuf,
    },
    /// SGD-train a unit-attached diagram (or a fresh unfolded MLP).
    Train {
        /// Diagram document with unit attachments.
        #[arg(long, conflicts_with = "mlp")]
        diagram: Option<PathBuf>,
        /// Build an unfolded MLP instead, e.g. --mlp 2,2,1.
        #[arg(long, value_delimiter = ',')]
        mlp: Option<Vec<usize>>,
        #[arg(long, default_value = "tanh")]
        act: Activation,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        /// Loss-curve CSV (epoch,mean_loss).
        #[arg(long)]
        out: PathBuf,
        /// Final parameters as JSON.
        #[arg(long)]
        params_out: Option<PathBuf>,
    },
    /// Embed trained net parameters (JSON) as a soft-wired network.
    FromDnn {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Feed a stream through a soft-wired network, learning online.
    RunOnline {
        /// Network JSON (see from-dnn, or the routing fixture).
        network: PathBuf,
        /// Stream CSV with columns x0..xk,y0..ym, consumed in order.
        #[arg(long)]
        stream: PathBuf,
        /// Truncate the stream to this many arrivals.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 0.01)]
        eta: f64,
        #[arg(long, default_value_t = 0.0)]
        eta_wire: f64,
        /// Write a rewiring snapshot every N steps (0 = never).
        #[arg(long, default_value_t = 0)]
        snapshot_every: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DILS_LOG", "error"))
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Write via a temp file in the same directory, then rename into place.
fn write_atomic(path: &Path, content: &str) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(content.as_bytes())?;
    tmp.persist(path).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

fn emit(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(path, content),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// Load a document from DSL text or, for `.json` files, the JSON schema.
fn load_document(path: &Path) -> Result<Document, CliError> {
    let text = read_text(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        Ok(Document::from_json(&text)?)
    } else {
        Ok(parse(&text)?)
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate { file } => {
            let doc = load_document(&file)?;
            let report = doc.tree.validate();
            if report.is_ok() {
                println!("ok");
                Ok(())
            } else {
                for v in &report.violations {
                    println!("{v}");
                }
                Err(CliError::Validation(format!(
                    "{} violation(s) in {}",
                    report.violations.len(),
                    file.display()
                )))
            }
        }
        Command::Flatten { file, out } => {
            let doc = load_document(&file)?;
            let report = doc.tree.validate();
            if !report.is_ok() {
                return Err(CliError::Validation(report.to_string()));
            }
            let flat = doc
                .tree
                .flatten()
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let flat_doc = Document {
                tree: dils_core::diagram::DiagramTree::leaf(flat),
                attachments: doc.attachments,
            };
            emit(out.as_deref(), &serialize(&flat_doc))
        }
        Command::ExportDot { file, out } => {
            let doc = load_document(&file)?;
            let dot = export_dot(&doc).map_err(|e| CliError::Validation(e.to_string()))?;
            emit(out.as_deref(), &dot)
        }
        Command::Simulate { file, inputs, steps, t_end, dt, integrator, out } => {
            let doc = load_document(&file)?;
            let report = doc.tree.validate();
            if !report.is_ok() {
                return Err(CliError::Validation(report.to_string()));
            }
            let system = build::build_system(&doc)?;
            let input_ports = system.interface().inputs.clone();
            let trace_inputs = match (&inputs, input_ports.is_empty()) {
                (Some(path), _) => {
                    InputTrace::from_rows(load_port_rows(&read_text(path)?, &input_ports)?)
                }
                (None, true) => InputTrace::empty(),
                (None, false) => {
                    return Err(CliError::Shape(
                        "the system has input ports; provide --inputs".to_string(),
                    ))
                }
            };
            let cfg = SimConfig { steps, t_end, dt, integrator };
            let trace = simulate(&system, &trace_inputs, &cfg)?;
            log::info!("simulated {} rows", trace.rows.len());
            write_atomic(&out, &trace.to_csv())
        }
        Command::Train { diagram, mlp, act, seed, data, epochs, eta, out, params_out } => {
            let mut net: DiagramNet = match (diagram, mlp) {
                (Some(path), None) => build::build_net(&load_document(&path)?, eta)?,
                (None, Some(sizes)) => unfold_mlp(&sizes, act, seed)?,
                _ => {
                    return Err(CliError::Shape(
                        "pass exactly one of --diagram or --mlp".to_string(),
                    ))
                }
            };
            let dataset = load_dataset(&read_text(&data)?)?;
            if dataset.is_empty() {
                return Err(CliError::Shape("dataset has no rows".to_string()));
            }
            let n_in = net.flat().outer.inputs.len();
            let n_out = net.flat().outer.outputs.len();
            if dataset.inputs[0].len() != n_in || dataset.targets[0].len() != n_out {
                return Err(CliError::Shape(format!(
                    "dataset is {}-in/{}-out but the net is {}-in/{}-out",
                    dataset.inputs[0].len(),
                    dataset.targets[0].len(),
                    n_in,
                    n_out
                )));
            }
            let pairs: Vec<(Vec<f64>, Vec<f64>)> =
                dataset.pairs().map(|(x, y)| (x.clone(), y.clone())).collect();
            let result = train(&mut net, &pairs, Loss::Mse, epochs, eta)?;
            log::info!(
                "trained {} epochs, final mean loss {:?}",
                epochs,
                result.epoch_losses.last()
            );
            write_atomic(&out, &loss_curve_csv(&result.epoch_losses))?;
            if let Some(params_path) = params_out {
                let json = serde_json::to_string_pretty(&net)?;
                write_atomic(&params_path, &(json + "\n"))?;
            }
            Ok(())
        }
        Command::FromDnn { params, out } => {
            let net: DiagramNet = serde_json::from_str(&read_text(&params)?)?;
            let dils = DilsNetwork::from_dnn(&net);
            let json = serde_json::to_string_pretty(&dils)?;
            write_atomic(&out, &(json + "\n"))
        }
        Command::RunOnline { network, stream, steps, eta, eta_wire, snapshot_every, out } => {
            let mut net: DilsNetwork = serde_json::from_str(&read_text(&network)?)?;
            let dataset = load_dataset(&read_text(&stream)?)?;
            let mut pairs: Vec<(Vec<f64>, Vec<f64>)> =
                dataset.pairs().map(|(x, y)| (x.clone(), y.clone())).collect();
            if let Some(n) = steps {
                pairs.truncate(n);
            }
            if pairs.is_empty() {
                return Err(CliError::Shape("stream has no rows".to_string()));
            }
            let n_in = net.outer().inputs.len();
            let n_out = net.outer().outputs.len();
            if pairs[0].0.len() != n_in || pairs[0].1.len() != n_out {
                return Err(CliError::Shape(format!(
                    "stream is {}-in/{}-out but the network is {n_in}-in/{n_out}-out",
                    pairs[0].0.len(),
                    pairs[0].1.len()
                )));
            }
            let cfg = OnlineConfig { eta_param: eta, eta_wire, snapshot_every };
            let trace = net.run_online(&pairs, &cfg)?;
            write_atomic(&out, &trace.to_csv())?;
            let stem = out.with_extension("");
            for snap in &trace.snapshots {
                let path =
                    PathBuf::from(format!("{}.snapshot.{}.json", stem.display(), snap.step));
                let json = serde_json::to_string_pretty(snap)?;
                write_atomic(&path, &(json + "\n"))?;
            }
            if let Some(halt) = &trace.halted {
                return Err(CliError::Numeric(format!(
                    "run halted at step {}: {}",
                    halt.step, halt.reason
                )));
            }
            log::info!("processed {} arrivals", trace.rows.len());
            Ok(())
        }
    }
}
