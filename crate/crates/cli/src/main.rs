use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mixlab_cli::config::ScenarioConfig;
use mixlab_cli::scenario::{output_dir, report, run_scenario, write_bundle};
use mixlab_cli::series::fmt_f64;
use mixlab_cli::CliError;
use mixlab_core::bressan::{checkerboard, evolve_exact, step_budget, BressanState, Timeline};
use mixlab_core::grid::io;
use mixlab_core::mixing::MixParams;

#[derive(Parser, Debug)]
#[command(name = "mixlab", version, about = "Mixing-scale diagnostics for passive scalars on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario described by a TOML config
    Run(RunArgs),
    /// Exact slice-and-dice evolution of a checkerboard
    Bressan(BressanArgs),
    /// Write a checkerboard field
    Checker(CheckerArgs),
    /// Re-render plots and tables of a stored bundle
    Report {
        bundle: PathBuf,
    },
}

#[derive(Parser, Debug)]
struct RunArgs {
    config: PathBuf,
    /// Output directory (overrides outputs.directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides grid.resolution
    #[arg(long)]
    resolution: Option<usize>,
    /// Overrides time.end
    #[arg(long)]
    end: Option<f64>,
    /// Overrides time.dt
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TimelineArg {
    Dyadic,
    Unit,
}

#[derive(Parser, Debug)]
struct BressanArgs {
    #[arg(long)]
    steps: u32,
    #[arg(long, value_enum, default_value_t = TimelineArg::Unit)]
    timeline: TimelineArg,
    #[arg(long, default_value_t = 256)]
    resolution: usize,
    /// Starting checkerboard level
    #[arg(long, default_value_t = 0)]
    level: u32,
    /// CSV destination (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FieldFormat {
    Bin,
    Csv,
}

#[derive(Parser, Debug)]
struct CheckerArgs {
    #[arg(long)]
    level: u32,
    #[arg(long)]
    resolution: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FieldFormat::Bin)]
    format: FieldFormat,
}

fn config_err(e: impl ToString) -> CliError {
    CliError::Config(e.to_string())
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let mut cfg = ScenarioConfig::load(&args.config).map_err(config_err)?;
    if let Some(base) = args.config.parent() {
        cfg.rebase(base);
    }
    if let Some(n) = args.resolution {
        cfg.grid.resolution = n;
    }
    if let Some(t) = args.end {
        cfg.time.end = t;
    }
    if let Some(dt) = args.dt {
        cfg.time.dt = dt;
    }
    if let Some(out) = args.out {
        cfg.outputs.directory = Some(out);
    }
    cfg.validate().map_err(config_err)?;
    let bundle = run_scenario(&cfg)?;
    let dir = output_dir(&cfg);
    write_bundle(&bundle, &dir)?;
    let s = &bundle.series;
    let last = s.times.len() - 1;
    println!(
        "{}: {} snapshots, mix_f {} -> {}, mix_g {} -> {}; bundle in {}",
        cfg.name,
        s.times.len(),
        fmt_f64(s.mix_f[0]),
        fmt_f64(s.mix_f[last]),
        fmt_f64(s.mix_g[0].epsilon),
        fmt_f64(s.mix_g[last].epsilon),
        dir.display()
    );
    bundle.status()
}

fn bressan(args: BressanArgs) -> Result<(), CliError> {
    let timeline = match args.timeline {
        TimelineArg::Dyadic => Timeline::Dyadic,
        TimelineArg::Unit => Timeline::Unit,
    };
    let state = BressanState::new(args.level, timeline).map_err(config_err)?;
    let params = MixParams::default();
    let (_, rows) = evolve_exact(&state, args.steps, args.resolution, &params).map_err(config_err)?;
    let mut out = String::from("# mixlab-bressan v1\nstep,level,t,mix_f,mix_f_sampled,mix_g,mix_g_bracket,bv,kinetic,sup_norm\n");
    for r in &rows {
        let kinetic = step_budget(r.level, timeline, 2.0).kinetic;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.step,
            r.level,
            fmt_f64(r.time),
            fmt_f64(r.mix_f),
            fmt_f64(r.mix_f_sampled),
            fmt_f64(r.mix_g.epsilon),
            fmt_f64(r.mix_g.bracket),
            fmt_f64(r.bv),
            fmt_f64(kinetic),
            fmt_f64(r.sup_norm)
        ));
    }
    match args.out {
        Some(p) => fs::write(&p, out).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn checker(args: CheckerArgs) -> Result<(), CliError> {
    let f = checkerboard(args.level, args.resolution).map_err(config_err)?;
    let ext = match args.format {
        FieldFormat::Bin => "bin",
        FieldFormat::Csv => "csv",
    };
    let path = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("checker_L{}_N{}.{ext}", args.level, args.resolution)));
    let mut buf = Vec::new();
    match args.format {
        FieldFormat::Bin => io::write_binary(&f, &mut buf),
        FieldFormat::Csv => io::write_csv(&f, &mut buf),
    }
    .map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(&path, buf).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    println!("{}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Bressan(a) => bressan(a),
        Command::Checker(a) => checker(a),
        Command::Report { bundle } => report(&bundle).map(|r| {
            println!("{}: compliance {}", bundle.display(), if r.pass { "pass" } else { "informational failures only" });
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mixlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
