//! `camforge` command-line driver.
//!
//! Exit codes: 0 success, 1 compile error, 2 input error, 3 validation
//! mismatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::arch::load_arch_spec;
use crate::data;
use crate::ir::print_module;
use crate::pipeline::{compile, reference_outputs, simulate, CompileOptions, Compiled, Stage};
use crate::sim::{Metrics, Tensor, TRACE_HEADER};
use crate::sweep::{run_sweep, to_csv, SweepConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPILE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "camforge", version, about = "Compile and simulate similarity kernels on CAM accelerators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lower a kernel file and write the requested IR stages.
    Compile(CompileArgs),
    /// Compile, run on data files and print the cost report.
    Simulate(SimulateArgs),
    /// Evaluate a sweep file and print one CSV row per configuration.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
struct LoweringFlags {
    /// CAM cell type: tcam, mcam or acam.
    #[arg(long)]
    device: Option<String>,
    /// Match type: exact, best or threshold.
    #[arg(long = "match")]
    match_type: Option<String>,
    /// Search distance: hamming or euclidean.
    #[arg(long)]
    metric: Option<String>,
    /// Distance bound for threshold match.
    #[arg(long)]
    threshold: Option<i64>,
    /// Mapping mode: base, power, density or power_density.
    #[arg(long)]
    mode: Option<String>,
    /// Subarrays searched at once per array in power modes.
    #[arg(long)]
    max_active: Option<u32>,
    /// Keep fused blocks as written instead of rewriting them to
    /// similarity ops.
    #[arg(long)]
    no_rewrite: bool,
}

impl LoweringFlags {
    fn options(&self) -> CompileOptions {
        CompileOptions {
            device: self.device.clone(),
            match_type: self.match_type.clone(),
            metric: self.metric.clone(),
            threshold: self.threshold,
            mode: self.mode.clone(),
            max_active: self.max_active,
            rewrite: !self.no_rewrite,
        }
    }
}

#[derive(Args, Debug)]
struct CompileArgs {
    kernel: PathBuf,
    #[arg(long)]
    arch: PathBuf,
    /// Stage to write (repeatable): tensor, cim, cim-fused,
    /// cim-partitioned, cam, cam-mapped or all. Without it the mapped IR
    /// goes to stdout.
    #[arg(long)]
    emit: Vec<String>,
    /// Directory for emitted files.
    #[arg(long, short = 'o', default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    lowering: LoweringFlags,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReportFormat {
    Text,
    Csv,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    kernel: PathBuf,
    /// Input tensors in kernel parameter order (CAMT binary or text).
    data: Vec<PathBuf>,
    #[arg(long)]
    arch: PathBuf,
    /// Kernel to run when the file defines several.
    #[arg(long)]
    function: Option<String>,
    /// Stage to interpret.
    #[arg(long, default_value = "cam-mapped")]
    stage: String,
    /// Write a per-event CSV trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: ReportFormat,
    /// Append the energy-delay product to CSV output.
    #[arg(long)]
    edp: bool,
    /// Compare outputs against a dense reference; exit 3 on mismatch.
    #[arg(long)]
    check_oracle: bool,
    #[command(flatten)]
    lowering: LoweringFlags,
}

#[derive(Args, Debug)]
struct SweepArgs {
    file: PathBuf,
    /// Write the CSV here instead of stdout.
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
    #[arg(long)]
    edp: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

struct Failure {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

/// Run the CLI on `args` (including the program name).
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = if code == EXIT_OK { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Compile(a) => cmd_compile(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn read_source(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            fail(EXIT_COMPILE, format!("file not found: {}", path.display()))
        } else {
            fail(EXIT_COMPILE, format!("{}: {e}", path.display()))
        }
    })
}

fn build(kernel: &Path, arch: &Path, flags: &LoweringFlags) -> Result<(Compiled, crate::arch::ArchSpec), Failure> {
    let arch = load_arch_spec(arch).map_err(|e| fail(EXIT_COMPILE, e.to_string()))?;
    let src = read_source(kernel)?;
    let compiled = compile(&src, &arch, &flags.options())
        .map_err(|e| fail(EXIT_COMPILE, format!("{}: {e}", kernel.display())))?;
    Ok((compiled, arch))
}

fn io_fail(path: &Path, e: std::io::Error) -> Failure {
    fail(EXIT_INPUT, format!("{}: {e}", path.display()))
}

fn cmd_compile(a: &CompileArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut stages = Vec::new();
    for e in &a.emit {
        if e == "all" {
            stages.extend(Stage::ALL);
        } else {
            stages.push(Stage::parse(e).ok_or_else(|| fail(EXIT_INPUT, format!("unknown stage '{e}'")))?);
        }
    }
    stages.sort();
    stages.dedup();
    let (compiled, _) = build(&a.kernel, &a.arch, &a.lowering)?;
    if stages.is_empty() {
        let _ = write!(out, "{}", print_module(compiled.mapped()));
        return Ok(());
    }
    std::fs::create_dir_all(&a.out_dir).map_err(|e| io_fail(&a.out_dir, e))?;
    let stem = a.kernel.file_stem().and_then(|s| s.to_str()).unwrap_or("kernel");
    for s in stages {
        let path = a.out_dir.join(format!("{stem}.{}.ir", s.name()));
        std::fs::write(&path, print_module(compiled.stage(s))).map_err(|e| io_fail(&path, e))?;
        let _ = writeln!(out, "wrote {}", path.display());
    }
    Ok(())
}

fn load_inputs(a: &SimulateArgs, compiled: &Compiled) -> Result<Vec<Tensor>, Failure> {
    let sig = match &a.function {
        Some(n) => compiled.signatures.iter().find(|s| &s.name == n),
        None => compiled.signatures.first(),
    }
    .ok_or_else(|| fail(EXIT_INPUT, "no kernel to simulate"))?;
    if sig.params.len() != a.data.len() {
        return Err(fail(
            EXIT_INPUT,
            format!("kernel {} takes {} inputs, got {} data files", sig.name, sig.params.len(), a.data.len()),
        ));
    }
    let mut inputs = Vec::new();
    for ((name, ty), path) in sig.params.iter().zip(&a.data) {
        let t = data::load(path).map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
        if t.ty() != *ty {
            return Err(fail(
                EXIT_INPUT,
                format!("shape mismatch: {} holds {}, parameter '{name}' expects {ty}", path.display(), t.ty()),
            ));
        }
        inputs.push(t);
    }
    Ok(inputs)
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let stage = Stage::parse(&a.stage).ok_or_else(|| fail(EXIT_INPUT, format!("unknown stage '{}'", a.stage)))?;
    let (compiled, arch) = build(&a.kernel, &a.arch, &a.lowering)?;
    let inputs = load_inputs(a, &compiled)?;
    let run = simulate(&compiled, stage, a.function.as_deref(), &inputs, &arch, a.trace.is_some())
        .map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
    if let Some(path) = &a.trace {
        let mut text = String::from(TRACE_HEADER);
        text.push('\n');
        for ev in &run.trace {
            text.push_str(&ev.csv());
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| io_fail(path, e))?;
    }
    match a.format {
        ReportFormat::Text => {
            for (i, t) in run.outputs.iter().enumerate() {
                let _ = writeln!(out, "output {i}: {t}");
            }
            let _ = write!(out, "{}", run.metrics.report());
        }
        ReportFormat::Csv => {
            let _ = writeln!(out, "{}", Metrics::csv_header(a.edp));
            let _ = writeln!(out, "{}", run.metrics.csv_row(&a.kernel.display().to_string(), a.edp));
        }
    }
    if a.check_oracle {
        let want = reference_outputs(&compiled, a.function.as_deref(), &inputs, &a.lowering.options())
            .map_err(|e| fail(EXIT_INPUT, e))?;
        if want != run.outputs {
            let mut msg = String::from("oracle mismatch");
            for (i, (g, w)) in run.outputs.iter().zip(&want).enumerate() {
                if g != w {
                    msg.push_str(&format!("\n  output {i}: got {g}, expected {w}"));
                }
            }
            return Err(fail(EXIT_MISMATCH, msg));
        }
        let _ = writeln!(out, "oracle check passed");
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = SweepConfig::load(&a.file).map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
    let rows = match a.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| fail(EXIT_INPUT, e.to_string()))?
            .install(|| run_sweep(&cfg)),
        None => run_sweep(&cfg),
    }
    .map_err(|e| fail(EXIT_COMPILE, e.to_string()))?;
    let csv = to_csv(&rows, a.edp);
    match &a.out {
        Some(p) => std::fs::write(p, csv).map_err(|e| io_fail(p, e))?,
        None => {
            let _ = write!(out, "{csv}");
        }
    }
    Ok(())
}
