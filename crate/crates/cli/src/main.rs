use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nearzero::metrics::{duty_cycle, tally, EnergyModel};
use nearzero::netrunner::io::{load_dataset, load_model, load_vector, vector_to_json};
use nearzero::netrunner::{accuracy, sweep, Engine, Layer, LayerGraph, ModeSchedule, SweepConfig, ThresholdSpec};
use nearzero::nzacore::{lzc_word, threshold_from_magnitude};
use nearzero::refmodel::{filtered_matvec, measure_sparsity};
use nearzero::selftest;
use nearzero::sim::{run_matvec, run_trace, CsvTrace, SimRun};
use nearzero::{AcceleratorConfig, FixedFormat, FixedVector, NzThreshold, SkipMode, WeightMatrix};

#[derive(Parser)]
#[command(name = "nearzero", version, about = "Near-zero multiplication skipping: reference model and 16-lane accelerator simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single-matrix model on one input vector.
    Matvec(RunArgs),
    /// Run a network on one input vector or a labeled dataset.
    Forward(RunArgs),
    /// Sweep LZC thresholds over a labeled dataset and write a CSV report.
    Sweep(SweepArgs),
    /// Simulate a single-matrix model and write the per-cycle CSV trace.
    Trace(RunArgs),
    /// Exhaustive 8-bit checks of the LZC product bound and skip safety.
    Selftest {
        /// Test hook: add one to every operand LZC.
        #[arg(long, hide = true)]
        corrupt_lzc: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Dense,
    Zeroskip,
    Nz,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Ref,
    Sim,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Ref => Engine::Reference,
            EngineArg::Sim => Engine::Simulator,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Model JSON file.
    #[arg(long)]
    model: PathBuf,
    /// Reinterpret every raw value in this `<bits>.<frac>` format.
    #[arg(long)]
    format: Option<String>,
    #[arg(long, value_enum, default_value = "ref")]
    engine: EngineArg,
    /// Cost table JSON for the energy report (simulator engine).
    #[arg(long)]
    energy_model: Option<PathBuf>,
    /// Write the data output here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Input vector JSON (array of raw integers).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Labeled dataset JSON (forward only).
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "nz")]
    mode: ModeArg,
    /// LZC-sum threshold L: pairs with lzc(|a|) + lzc(|b|) > L are skipped.
    #[arg(long)]
    lzc_threshold: Option<u32>,
    /// Threshold as a real product magnitude, converted to L.
    #[arg(long)]
    threshold_mag: Option<f64>,
    /// Apply ReLU to matvec outputs.
    #[arg(long)]
    relu: bool,
    /// Per-cycle CSV trace path (matvec with the simulator engine, trace).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: PathBuf,
    /// LZC-sum thresholds, comma separated (default: 2N down to 0).
    #[arg(long, value_delimiter = ',')]
    lzc_threshold: Vec<u32>,
    /// Real product-magnitude thresholds, comma separated.
    #[arg(long, value_delimiter = ',')]
    threshold_mag: Vec<f64>,
}

fn ensure_exists(p: &Path) -> Result<()> {
    if !p.exists() {
        bail!("{}: file not found", p.display());
    }
    Ok(())
}

fn load_graph(c: &Common) -> Result<LayerGraph> {
    ensure_exists(&c.model)?;
    let graph = load_model(&c.model)?;
    match &c.format {
        Some(f) => Ok(graph.with_format(FixedFormat::parse(f)?)?),
        None => Ok(graph),
    }
}

fn resolve_mode(a: &RunArgs, fmt: FixedFormat) -> Result<SkipMode> {
    let threshold = match (a.lzc_threshold, a.threshold_mag) {
        (Some(_), Some(_)) => bail!("give either --lzc-threshold or --threshold-mag, not both"),
        (Some(l), None) => Some(NzThreshold::new(l, fmt)?),
        (None, Some(t)) => Some(threshold_from_magnitude(t, fmt)?),
        (None, None) => None,
    };
    match (a.mode, threshold) {
        (ModeArg::Nz, Some(t)) => Ok(SkipMode::NzSkip(t)),
        (ModeArg::Nz, None) => bail!("--mode nz needs --lzc-threshold or --threshold-mag"),
        (_, Some(_)) => bail!("a threshold is only valid with --mode nz"),
        (ModeArg::Dense, None) => Ok(SkipMode::Dense),
        (ModeArg::Zeroskip, None) => Ok(SkipMode::ZeroSkip),
    }
}

fn single_matrix(graph: &LayerGraph) -> Result<&WeightMatrix> {
    match graph.layers() {
        [Layer::FullyConnected { weights, bias: None }] => Ok(weights),
        _ => bail!("matvec needs a model with exactly one fc layer and no bias"),
    }
}

fn load_input(a: &RunArgs, fmt: FixedFormat) -> Result<FixedVector> {
    let Some(p) = &a.input else { bail!("--input is required") };
    ensure_exists(p)?;
    Ok(load_vector(p, fmt)?)
}

fn write_out(path: &Option<PathBuf>, text: &str) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, text).with_context(|| format!("{}: cannot write", p.display()))?;
    }
    Ok(())
}

fn energy_model(c: &Common) -> Result<EnergyModel> {
    match &c.energy_model {
        Some(p) => {
            ensure_exists(p)?;
            Ok(EnergyModel::load(p)?)
        }
        None => Ok(EnergyModel::default()),
    }
}

fn print_sim_stats(run: &SimRun, model: &EnergyModel) -> Result<()> {
    let duty = duty_cycle(&run.stats)?;
    println!("cycles: {} ({} stream)", run.stats.total_cycles, run.stats.stream_cycles);
    println!("flushes per lane: {:?}", run.stats.flush_count);
    println!("duty cycle: {:.4} (lane max {:.4})", duty.aggregate, duty.per_lane.iter().cloned().fold(0.0, f64::max));
    println!("energy:\n{}", tally(&run.events, model));
    Ok(())
}

fn cmd_matvec(a: &RunArgs, with_trace: bool) -> Result<()> {
    let graph = load_graph(&a.common)?;
    let w = single_matrix(&graph)?;
    let fmt = graph.format();
    let x = load_input(a, fmt)?;
    let mode = resolve_mode(a, fmt)?;
    let energy = energy_model(&a.common)?;
    let trace_path = if with_trace { a.trace.clone().or_else(|| a.common.out.clone()) } else { a.trace.clone() };
    if with_trace && trace_path.is_none() {
        bail!("trace needs --trace or --out");
    }

    let engine = if with_trace { EngineArg::Sim } else { a.common.engine };
    let stats = measure_sparsity(w, &x, mode)?;
    let cfg = AcceleratorConfig::new(mode, fmt);
    let (output, sim) = match (engine, &trace_path) {
        (EngineArg::Ref, Some(_)) => bail!("--trace needs --engine sim"),
        (EngineArg::Ref, None) => (filtered_matvec(w, &x, mode, a.relu)?, None),
        (EngineArg::Sim, None) => {
            let run = run_matvec(w, &x, &cfg, a.relu)?;
            (run.output.clone(), Some(run))
        }
        (EngineArg::Sim, Some(p)) => {
            let file = File::create(p).with_context(|| format!("{}: cannot create", p.display()))?;
            let mut sink = CsvTrace::new(BufWriter::new(file))?;
            let run = run_trace(w, &x, &cfg, a.relu, &mut sink)?;
            sink.into_inner().flush()?;
            (run.output.clone(), Some(run))
        }
    };

    println!("mode: {mode}  format: {fmt}  shape: {}x{}", w.rows(), w.cols());
    println!("output: {}", vector_to_json(&output));
    println!(
        "sparsity: nz {:.4}  zero {:.4}  kept {}/{}",
        stats.nz_sparsity(),
        stats.zero_sparsity(),
        stats.kept_pairs(),
        stats.total_pairs
    );
    if let Some(run) = &sim {
        print_sim_stats(run, &energy)?;
    }
    if !with_trace {
        write_out(&a.common.out, &(vector_to_json(&output) + "\n"))?;
    }
    Ok(())
}

fn cmd_forward(a: &RunArgs) -> Result<()> {
    let graph = load_graph(&a.common)?;
    let fmt = graph.format();
    let mode = resolve_mode(a, fmt)?;
    let engine: Engine = a.common.engine.into();
    let schedule = ModeSchedule::from(mode);
    match (&a.input, &a.dataset) {
        (Some(_), None) => {
            let x = load_input(a, fmt)?;
            let r = graph.forward(&x, &schedule, engine)?;
            println!("mode: {mode}  format: {fmt}");
            println!("output: {}", vector_to_json(&r.output));
            if let Some(k) = r.output.argmax() {
                println!("argmax: {k}");
            }
            for l in &r.layers {
                println!(
                    "  {:<8} nz {:.4}  zero {:.4}  kept {}/{}",
                    l.name,
                    l.stats.nz_sparsity(),
                    l.stats.zero_sparsity(),
                    l.stats.kept_pairs(),
                    l.stats.total_pairs
                );
            }
            if engine == Engine::Simulator {
                println!("cycles: {}", r.cycles);
                println!("energy:\n{}", tally(&r.events, &energy_model(&a.common)?));
            }
            write_out(&a.common.out, &(vector_to_json(&r.output) + "\n"))
        }
        (None, Some(d)) => {
            ensure_exists(d)?;
            let data = load_dataset(d, fmt)?;
            let acc = accuracy(&graph, &data, &schedule, engine)?;
            println!("mode: {mode}  samples: {}  accuracy: {acc:.6}", data.len());
            write_out(&a.common.out, &format!("{acc:.6}\n"))
        }
        _ => bail!("forward needs exactly one of --input or --dataset"),
    }
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let graph = load_graph(&a.common)?;
    let fmt = graph.format();
    ensure_exists(&a.dataset)?;
    let data = load_dataset(&a.dataset, fmt)?;
    let engine = a.common.engine.into();
    let mut thresholds: Vec<ThresholdSpec> = a.lzc_threshold.iter().map(|&l| ThresholdSpec::Level(l)).collect();
    thresholds.extend(a.threshold_mag.iter().map(|&t| ThresholdSpec::Magnitude(t)));
    let cfg = if thresholds.is_empty() { SweepConfig::full_range(fmt, engine) } else { SweepConfig { thresholds, engine } };
    let report = sweep(&graph, &data, &cfg)?;
    let csv = report.to_csv();
    match &a.common.out {
        Some(_) => write_out(&a.common.out, &csv)?,
        None => print!("{csv}"),
    }
    for p in &report.points {
        if let Some(t) = p.magnitude {
            eprintln!("threshold magnitude {t} -> L = {}", p.label());
        }
    }
    Ok(())
}

fn cmd_selftest(corrupt: bool) -> ExitCode {
    let results = if corrupt {
        selftest::run_with(|u, bits| lzc_word(u, bits) + 1)
    } else {
        selftest::run()
    };
    let mut ok = true;
    for r in &results {
        ok &= r.passed();
        println!(
            "{} {:<20} cases={:<8} violations={:<6} {:.3}s",
            if r.passed() { "PASS" } else { "FAIL" },
            r.name,
            r.cases,
            r.violations,
            r.elapsed.as_secs_f64()
        );
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Matvec(a) => cmd_matvec(a, false),
        Command::Trace(a) => cmd_matvec(a, true),
        Command::Forward(a) => cmd_forward(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Selftest { corrupt_lzc } => return cmd_selftest(*corrupt_lzc),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
