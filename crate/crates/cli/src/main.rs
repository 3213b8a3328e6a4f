//! Command-line driver: load a program, evaluate or inspect an expression.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bubbly_core::dominance::validate_attribute;
use bubbly_core::evaluator::{
    compute_values_observed, Computation, EvalConfig, EvalError, Observer, StepEvent, Strategy,
};
use bubbly_core::graph::Graph;
use bubbly_core::lang::{check_lois, parse_program, Program};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bubbly", version, about = "Term-graph evaluator with dominator-maintained bubbling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the values of an expression, one per line, then a summary.
    Eval(EvalArgs),
    /// Report rules that break the left-linear, constructor-based,
    /// inductively sequential restrictions.
    Check {
        /// Program file.
        program: PathBuf,
    },
    /// Print stored against immediate dominators of an expression's graph.
    Dominators {
        /// Program file.
        program: PathBuf,
        /// Expression to build.
        #[arg(short = 'e', long = "expr")]
        expr: String,
    },
    /// Evaluate and print one tab-separated line per step.
    Trace(EvalArgs),
}

#[derive(Args)]
struct EvalArgs {
    /// Program file.
    program: PathBuf,
    /// Expression to evaluate.
    #[arg(short = 'e', long = "expr")]
    expr: String,
    #[arg(long, value_enum, default_value_t = StrategyArg::Bubbling)]
    strategy: StrategyArg,
    /// Stop after this many distinct values.
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    max_values: u64,
    /// Total step budget across all computations.
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    max_steps: u64,
    /// Check structure and dominator soundness after every step.
    #[arg(long)]
    validate: bool,
    /// Write one numbered DOT file per step into this directory.
    #[arg(long, value_name = "DIR")]
    dot: Option<PathBuf>,
    /// Print evaluation statistics after the summary.
    #[arg(long)]
    stats: bool,
    /// Print step lines to standard error.
    #[arg(long)]
    trace: bool,
    /// Computations stepped in parallel.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Bubbling,
    Copying,
}

/// A message and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn eval(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
}

fn load(path: &Path) -> Result<Program, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    parse_program(&text).map_err(|e| Failure::usage(format!("{}:{e}", path.display())))
}

fn expression(program: &Program, text: &str) -> Result<Graph, Failure> {
    program.parse_expr(text).map_err(|e| Failure::usage(format!("expression: {e}")))
}

/// Rejects programs outside the restrictions before evaluation starts.
fn require_lois(program: &Program, path: &Path) -> Result<(), Failure> {
    let diags = check_lois(program);
    if diags.is_empty() {
        return Ok(());
    }
    let lines: Vec<String> = diags.iter().map(|d| format!("{}:{d}", path.display())).collect();
    Err(Failure::eval(lines.join("\n")))
}

/// Streams trace lines and DOT snapshots as the evaluator reports steps.
struct Recorder<'a> {
    trace: Option<Box<dyn Write + 'a>>,
    dot: Option<PathBuf>,
    error: Option<io::Error>,
}

impl Recorder<'_> {
    fn write_dot(&mut self, index: u64, computation: u64, g: &Graph) {
        let Some(dir) = &self.dot else { return };
        if self.error.is_none() {
            if let Err(e) = fs::write(dir.join(format!("{index:06}-c{computation}.dot")), g.to_dot()) {
                self.error = Some(e);
            }
        }
    }
}

impl Observer for Recorder<'_> {
    fn start(&mut self, c: &Computation) {
        self.write_dot(0, c.id, &c.graph);
    }

    fn step(&mut self, event: &StepEvent, graphs: &[&Graph]) {
        if let Some(out) = &mut self.trace {
            if let Err(e) = writeln!(out, "{}", event.trace_line()) {
                self.error.get_or_insert(e);
            }
        }
        let ids = if event.children.is_empty() { vec![event.computation] } else { event.children.clone() };
        for (id, g) in ids.into_iter().zip(graphs) {
            self.write_dot(event.index, id, g);
        }
    }
}

fn evaluate(args: &EvalArgs, trace_to_stdout: bool) -> Result<(), Failure> {
    let program = load(&args.program)?;
    require_lois(&program, &args.program)?;
    let g = expression(&program, &args.expr)?;
    if let Some(dir) = &args.dot {
        fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))?;
    }
    let cfg = EvalConfig {
        strategy: match args.strategy {
            StrategyArg::Bubbling => Strategy::Bubbling,
            StrategyArg::Copying => Strategy::Copying,
        },
        max_values: usize::try_from(args.max_values).unwrap_or(usize::MAX),
        max_steps: args.max_steps,
        validate: args.validate,
        jobs: usize::try_from(args.jobs).unwrap_or(usize::MAX),
    };
    let stdout = io::stdout();
    let trace: Option<Box<dyn Write>> = if trace_to_stdout {
        Some(Box::new(stdout.lock()))
    } else if args.trace {
        Some(Box::new(io::stderr().lock()))
    } else {
        None
    };
    let mut recorder = Recorder { trace, dot: args.dot.clone(), error: None };
    let result = compute_values_observed(&program, g, &cfg, &mut recorder);
    let io_error = recorder.error.take();
    drop(recorder);
    let e = result.map_err(|e| match e {
        EvalError::Config(m) => Failure::usage(m),
        other => Failure::eval(other.to_string()),
    })?;
    if let Some(err) = io_error {
        return Err(Failure::usage(format!("writing output: {err}")));
    }
    let mut out = stdout.lock();
    let summary = (|| -> io::Result<()> {
        for v in e.values.iter() {
            writeln!(out, "{v}")?;
        }
        writeln!(
            out,
            "-- {} values, {} steps, {} clones, {}",
            e.values.len(),
            e.stats.steps,
            match cfg.strategy {
                Strategy::Bubbling => e.stats.bubble_clones,
                Strategy::Copying => e.stats.copied_nodes,
            },
            if e.values.exhausted { "exhausted" } else { "not exhausted" }
        )?;
        if args.stats {
            for line in e.stats.to_string().lines() {
                writeln!(out, "-- {line}")?;
            }
        }
        out.flush()
    })();
    summary.map_err(|err| Failure::usage(format!("writing output: {err}")))?;
    if e.values.is_empty() && e.values.exhausted {
        return Err(Failure::eval("no values"));
    }
    Ok(())
}

fn check(path: &Path) -> Result<(), Failure> {
    let program = load(path)?;
    require_lois(&program, path)?;
    let user = program.operations().filter(|op| op.lines.first().is_some_and(|&l| l > 0)).count();
    println!("{}: {user} operations, all inductively sequential", path.display());
    Ok(())
}

fn dominators(path: &Path, expr: &str) -> Result<(), Failure> {
    let program = load(path)?;
    let g = expression(&program, expr)?;
    let report = validate_attribute(&g);
    print!("{report}");
    if report.is_sound() {
        Ok(())
    } else {
        Err(Failure::eval("stored dominators are unsound"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Eval(args) => evaluate(args, false),
        Command::Trace(args) => evaluate(args, true),
        Command::Check { program } => check(program),
        Command::Dominators { program, expr } => dominators(program, expr),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("bubbly: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
