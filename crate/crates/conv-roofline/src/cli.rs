//! Command-line front end: one subcommand per artifact the model or the
//! reference numerics can emit.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::layer::{accuracy_report, l2_rel_error, layer_forward, layer_forward_direct, LayerTensors, Precision};
use crate::model::{find_machine, machine_catalog, LayerShape, MachineConfig, MachineSpec, Method};
use crate::planner::{best_tile, speedup, sweep, total_runtime, MethodPlan, SweepParameter};
use crate::tables::{tile_search_space, CostTables};

/// One nameable layer of a reference network (batch size 64 throughout).
#[derive(Debug, Clone)]
pub struct LayerCatalogEntry {
    pub network: &'static str,
    pub layer: &'static str,
    pub shape: LayerShape,
}

impl LayerCatalogEntry {
    /// The name accepted by `--layer`, e.g. `vgg3.2`.
    pub fn name(&self) -> String {
        format!("{}{}", self.network, self.layer)
    }
}

/// The distinct convolutional layers of VGG-16 and AlexNet. `x` includes the
/// padding each network applies, so x - r + 1 is the true output edge.
pub fn layer_catalog() -> Vec<LayerCatalogEntry> {
    let rows: [(&str, &str, u64, u64, u64, u64); 13] = [
        ("vgg", "1.2", 64, 64, 226, 3),
        ("vgg", "2.1", 64, 128, 114, 3),
        ("vgg", "2.2", 128, 128, 114, 3),
        ("vgg", "3.1", 128, 256, 58, 3),
        ("vgg", "3.2", 256, 256, 58, 3),
        ("vgg", "4.1", 256, 512, 30, 3),
        ("vgg", "4.2", 512, 512, 30, 3),
        ("vgg", "5.1", 512, 512, 16, 3),
        ("vgg", "5.2", 512, 512, 16, 3),
        ("alexnet", "2", 96, 256, 31, 5),
        ("alexnet", "3", 256, 384, 15, 3),
        ("alexnet", "4", 384, 384, 15, 3),
        ("alexnet", "5", 384, 256, 15, 3),
    ];
    rows.iter()
        .map(|&(network, layer, c, c_out, x, r)| LayerCatalogEntry {
            network,
            layer,
            shape: LayerShape::new(64, c, c_out, x, r).expect("catalog shapes are valid"),
        })
        .collect()
}

#[derive(Parser, Debug)]
#[command(
    name = "conv-roofline",
    version,
    about = "Roofline runtime model and reference numerics for transform-based convolution"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full per-stage cost and runtime breakdown per method, as JSON.
    Plan(PlanArgs),
    /// Chosen tile sizes and pairwise method speedups for one layer/machine.
    Predict(PredictArgs),
    /// Pairwise speedups across a parameter grid, as CSV.
    Sweep(SweepArgs),
    /// Single-precision accuracy of each method against the direct oracle.
    Accuracy(AccuracyArgs),
    /// Run the oracle-equivalence suite on small random layers.
    Verify(VerifyArgs),
    /// List the cataloged machines.
    Machines,
    /// Emit the active transform cost tables as CSV.
    DumpTables,
}

#[derive(Args, Debug)]
struct MachineArgs {
    /// Cataloged machine name (full or unambiguous CPU name) or a JSON
    /// config path with fields name, gflops, gbps, cache_kb.
    #[arg(long)]
    machine: Option<String>,
    /// Override the core-exclusive cache size, KB.
    #[arg(long)]
    cache_kb: Option<u64>,
    /// Compute-to-memory ratio. With --machine, rescales that machine's peak
    /// at fixed bandwidth; alone, synthesizes a machine with 32 GB/s
    /// bandwidth and a 256 KB cache.
    #[arg(long)]
    cmr: Option<f64>,
}

impl MachineArgs {
    fn resolve(&self) -> anyhow::Result<MachineSpec> {
        let mut spec = match (&self.machine, self.cmr) {
            (Some(name), _) => resolve_machine(name)?,
            (None, Some(cmr)) => synthesize_machine(cmr, self.cache_kb.unwrap_or(256))?,
            (None, None) => bail!("specify --machine or --cmr"),
        };
        if let Some(kb) = self.cache_kb {
            if kb == 0 {
                bail!("--cache-kb must be positive");
            }
            spec.cache_bytes = kb * 1024;
        }
        if self.machine.is_some() {
            if let Some(cmr) = self.cmr {
                spec = MachineSpec::with_cmr_label(
                    format!("{} (cmr {cmr})", spec.name),
                    cmr * spec.mem_bandwidth,
                    spec.mem_bandwidth,
                    spec.cache_bytes,
                    cmr,
                )?;
            }
        }
        Ok(spec)
    }
}

fn synthesize_machine(cmr: f64, cache_kb: u64) -> crate::error::Result<MachineSpec> {
    let bandwidth = 32e9;
    MachineSpec::with_cmr_label(
        format!("cmr{cmr}"),
        cmr * bandwidth,
        bandwidth,
        cache_kb * 1024,
        cmr,
    )
}

fn resolve_machine(name: &str) -> anyhow::Result<MachineSpec> {
    match find_machine(name) {
        Ok(spec) => Ok(spec),
        Err(catalog_err) => {
            if Path::new(name).exists() {
                Ok(MachineConfig::load(Path::new(name))?)
            } else {
                Err(catalog_err.into())
            }
        }
    }
}

fn resolve_layer(value: &str) -> anyhow::Result<(String, LayerShape)> {
    let wanted = value.to_ascii_lowercase();
    if let Some(entry) = layer_catalog().iter().find(|e| e.name() == wanted) {
        return Ok((entry.name(), entry.shape));
    }
    if Path::new(value).exists() {
        let text = std::fs::read_to_string(value)
            .with_context(|| format!("reading layer config {value}"))?;
        let shape: LayerShape = serde_json::from_str(&text)
            .with_context(|| format!("parsing layer config {value}"))?;
        shape.validate()?;
        return Ok((value.to_string(), shape));
    }
    bail!(
        "unknown layer {value:?}; cataloged: {}; or pass a JSON config path \
         with fields b, c, c_out, x, r",
        layer_catalog()
            .iter()
            .map(|e| e.name())
            .collect::<Vec<_>>()
            .join(", ")
    )
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

fn parse_sweep_parameter(s: &str) -> Result<SweepParameter, String> {
    SweepParameter::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct PlanArgs {
    /// Cataloged layer name or JSON config path.
    #[arg(long)]
    layer: String,
    #[command(flatten)]
    machine: MachineArgs,
    /// Plan only this method (default: all three).
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Evaluate this output-tile size instead of searching for the best.
    #[arg(long)]
    m: Option<u64>,
    /// Largest Winograd input tile the search may use.
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(6..=8))]
    max_winograd_tile: u64,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    layer: String,
    #[command(flatten)]
    machine: MachineArgs,
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(6..=8))]
    max_winograd_tile: u64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    layer: String,
    #[command(flatten)]
    machine: MachineArgs,
    /// Which knob to vary: cache, channels, x, r or cmr.
    #[arg(long, value_parser = parse_sweep_parameter)]
    parameter: SweepParameter,
    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(6..=8))]
    max_winograd_tile: u64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Args, Debug)]
struct AccuracyArgs {
    #[arg(long)]
    layer: String,
    /// Restrict the report to one method.
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Restrict the report to one output-tile size.
    #[arg(long)]
    m: Option<u64>,
    #[arg(long, default_value_t = 30)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(6..=8))]
    max_winograd_tile: u64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Random layer draws per shape.
    #[arg(long, default_value_t = 2)]
    trials: u64,
}

/// Executes a parsed command, writing its artifact to `out`. Domain failures
/// come back as errors; the binary maps them to exit code 1.
pub fn run<W: Write>(cli: Cli, out: &mut W) -> anyhow::Result<()> {
    match cli.command {
        Command::Plan(args) => cmd_plan(args, out),
        Command::Predict(args) => cmd_predict(args, out),
        Command::Sweep(args) => cmd_sweep(args, out),
        Command::Accuracy(args) => cmd_accuracy(args, out),
        Command::Verify(args) => cmd_verify(args, out),
        Command::Machines => cmd_machines(out),
        Command::DumpTables => {
            out.write_all(CostTables::active().csv_text().as_bytes())?;
            Ok(())
        }
    }
}

fn plan_for(
    layer: &LayerShape,
    method: Method,
    machine: &MachineSpec,
    m: Option<u64>,
    max_winograd_tile: u64,
) -> crate::error::Result<MethodPlan> {
    match m {
        Some(m) => total_runtime(layer, method, m, machine),
        None => best_tile(layer, method, machine, max_winograd_tile),
    }
}

fn cmd_plan<W: Write>(args: PlanArgs, out: &mut W) -> anyhow::Result<()> {
    let (layer_name, layer) = resolve_layer(&args.layer)?;
    let machine = args.machine.resolve()?;
    let methods = match args.method {
        Some(method) => vec![method],
        None => Method::PLANNABLE.to_vec(),
    };
    let plans = methods
        .iter()
        .map(|&method| plan_for(&layer, method, &machine, args.m, args.max_winograd_tile))
        .collect::<crate::error::Result<Vec<_>>>()?;
    let doc = serde_json::json!({
        "layer_name": layer_name,
        "layer": layer,
        "machine": machine,
        "plans": plans,
    });
    serde_json::to_writer_pretty(&mut *out, &doc)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_predict<W: Write>(args: PredictArgs, out: &mut W) -> anyhow::Result<()> {
    let (layer_name, layer) = resolve_layer(&args.layer)?;
    let machine = args.machine.resolve()?;
    writeln!(out, "layer {layer_name} on {}", machine.name)?;
    for method in Method::PLANNABLE {
        let plan = best_tile(&layer, method, &machine, args.max_winograd_tile)?;
        writeln!(
            out,
            "{method}: m={} t={} predicted_total={:.6e} s",
            plan.m, plan.t, plan.total_runtime
        )?;
    }
    for (a, b) in [
        (Method::RegularFft, Method::Winograd),
        (Method::GaussFft, Method::Winograd),
        (Method::RegularFft, Method::GaussFft),
    ] {
        let ratio = speedup(&layer, a, b, &machine, args.max_winograd_tile)?;
        writeln!(out, "speedup {a} vs {b}: {ratio:.4}")?;
    }
    Ok(())
}

fn cmd_sweep<W: Write>(args: SweepArgs, out: &mut W) -> anyhow::Result<()> {
    let (_, layer) = resolve_layer(&args.layer)?;
    let machine = args.machine.resolve()?;
    let rows = sweep(
        &layer,
        &machine,
        args.parameter,
        &args.values,
        args.max_winograd_tile,
    )?;
    match args.format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, &rows)?;
            writeln!(out)?;
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            for row in &rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn cmd_accuracy<W: Write>(args: AccuracyArgs, out: &mut W) -> anyhow::Result<()> {
    let (name, layer) = resolve_layer(&args.layer)?;
    // The reference numerics are deliberately naive; refuse layers whose
    // direct oracle alone would grind for minutes.
    let oracle_ops = (layer.b * layer.c * layer.c_out * layer.r * layer.r) as f64
        * (layer.out_edge() * layer.out_edge()) as f64;
    if oracle_ops > 1e9 {
        bail!(
            "layer {name} needs about {oracle_ops:.1e} operations per trial in the \
             reference numerics; accuracy runs are meant for desk-scale layers \
             (B*C*C'*(x-r+1)^2*r^2 up to 1e9). Pass a smaller JSON layer config."
        );
    }
    let mut cases: Vec<(Method, u64)> = Vec::new();
    let methods = match args.method {
        Some(method) => vec![method],
        None => vec![
            Method::Direct,
            Method::Winograd,
            Method::RegularFft,
            Method::GaussFft,
        ],
    };
    for method in methods {
        match method {
            Method::Direct => cases.push((Method::Direct, 0)),
            Method::Winograd => match args.m {
                Some(m) => cases.push((method, m)),
                None => {
                    for m in tile_search_space(method, layer.r, args.max_winograd_tile)? {
                        cases.push((method, m));
                    }
                }
            },
            Method::RegularFft | Method::GaussFft => match args.m {
                Some(m) => cases.push((method, m)),
                None => {
                    // The t-grid the accuracy experiments report on.
                    for t in [8u64, 16, 24, 32] {
                        if t >= layer.r + 1 {
                            cases.push((method, t - layer.r + 1));
                        }
                    }
                }
            },
        }
    }
    let rows = accuracy_report(&layer, &cases, args.trials, args.seed)?;
    match args.format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, &rows)?;
            writeln!(out)?;
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            for row in &rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn cmd_machines<W: Write>(out: &mut W) -> anyhow::Result<()> {
    for spec in machine_catalog() {
        writeln!(
            out,
            "{:<24} peak {:>7.1} GFLOPS  bandwidth {:>6.1} GB/s  cache {:>5} KB  CMR {}",
            spec.name,
            spec.peak_flops / 1e9,
            spec.mem_bandwidth / 1e9,
            spec.cache_bytes / 1024,
            spec.cmr
        )?;
    }
    Ok(())
}

/// Single-precision tolerance for one comparison: Winograd transforms are
/// noticeably less accurate than the DFT-based ones.
fn single_tolerance(method: Method) -> f64 {
    match method {
        Method::Winograd => 1e-4,
        _ => 1e-5,
    }
}

fn cmd_verify<W: Write>(args: VerifyArgs, out: &mut W) -> anyhow::Result<()> {
    if args.trials < 1 {
        bail!("--trials must be >= 1");
    }
    let shapes = [
        (1, 2, 2, 8, 3),
        (2, 3, 2, 9, 3),
        (1, 1, 3, 7, 2),
        (2, 4, 4, 12, 5),
        (1, 3, 1, 6, 3),
        (2, 2, 2, 10, 2),
    ];
    writeln!(
        out,
        "verify: seed {}, {} trials per shape; single tolerance 1e-4 (winograd) / 1e-5 (fft), double 1e-9",
        args.seed, args.trials
    )?;
    let mut comparisons = 0u64;
    for (idx, &(b, c, c_out, x, r)) in shapes.iter().enumerate() {
        let layer = LayerShape::new(b, c, c_out, x, r)?;
        // Winograd stays within its accurate range; the FFT methods also get
        // a padded oversized tile.
        let mut cases: Vec<(Method, u64)> = tile_search_space(Method::Winograd, r, 6)?
            .into_iter()
            .map(|m| (Method::Winograd, m))
            .collect();
        for m in [2u64, 5, 8] {
            cases.push((Method::RegularFft, m));
            cases.push((Method::GaussFft, m));
        }
        let mut worst_single = 0.0f64;
        let mut worst_double = 0.0f64;
        for trial in 0..args.trials {
            let tensors = LayerTensors::random(layer, args.seed, (idx as u64) << 32 | trial)?;
            let oracle = layer_forward_direct(&tensors);
            for &(method, m) in &cases {
                let single = layer_forward(&tensors, method, m, Precision::Single)?;
                let err = l2_rel_error(&single, &oracle);
                if err > single_tolerance(method) {
                    bail!(
                        "B={b} C={c} C'={c_out} x={x} r={r}, {method} m={m} single: \
                         error {err:.3e} exceeds {:.0e}",
                        single_tolerance(method)
                    );
                }
                worst_single = worst_single.max(err);
                let double = layer_forward(&tensors, method, m, Precision::Double)?;
                let err = l2_rel_error(&double, &oracle);
                if err > 1e-9 {
                    bail!(
                        "B={b} C={c} C'={c_out} x={x} r={r}, {method} m={m} double: \
                         error {err:.3e} exceeds 1e-9"
                    );
                }
                worst_double = worst_double.max(err);
                comparisons += 2;
            }
        }
        writeln!(
            out,
            "  B={b} C={c} C'={c_out} x={x} r={r}: ok (worst single {worst_single:.3e}, \
             worst double {worst_double:.3e})"
        )?;
    }
    writeln!(out, "verify: {comparisons} comparisons within tolerance")?;
    Ok(())
}
