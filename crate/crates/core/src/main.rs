use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use banksim::engine::{batch_run, parse_sweep, write_summary, SeriesWriter, SimulationConfig, World};
use banksim::ledger::{read_audit, replay, write_audit, Layouts};

#[derive(Parser)]
#[command(name = "banksim", version, about = "Double-entry fractional-reserve banking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Simulation config (JSON).
    config: PathBuf,
    /// Override the number of steps.
    #[arg(long)]
    steps: Option<u32>,
    /// Override the seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config to completion and write the per-step CSV.
    Run {
        #[command(flatten)]
        common: Common,
        /// CSV output path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the posting audit log here.
        #[arg(long)]
        audit: Option<PathBuf>,
        /// Also write the event log (JSON lines) here.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Run a parameter sweep and write a summary table.
    Batch {
        #[command(flatten)]
        common: Common,
        /// `NAME=v1,v2,...` with values as fractions; repeat for a grid.
        #[arg(long, required = true)]
        sweep: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the control API for one simulation.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Start paused; a RESUME or STEP command advances it.
        #[arg(long)]
        paused: bool,
    },
    /// Replay an audit log and print the resulting balance sheets.
    Inspect {
        audit_log: PathBuf,
        /// Config whose ledger classification the log was produced under.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<SimulationConfig, String> {
    let mut config = SimulationConfig::from_path(&common.config).map_err(|e| format!("{}: {e}", common.config.display()))?;
    if let Some(s) = common.steps {
        config.steps = s;
    }
    if let Some(s) = common.seed {
        config.seed = s;
    }
    Ok(config)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, String> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| format!("{}: {e}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(common: &Common, out: Option<&Path>, audit: Option<&Path>, events: Option<&Path>) -> Result<(), String> {
    let config = load(common)?;
    let mut world = World::new(config, audit.is_some()).map_err(|e| e.to_string())?;
    for w in world.population.iter().filter(|c| !c.pass) {
        eprintln!("warning: {}: {}", w.rule, w.detail);
    }
    let mut writer = SeriesWriter::new(output(out)?, world.banks.len()).map_err(|e| e.to_string())?;
    let mut failure = None;
    while !world.is_done() {
        match world.run_step() {
            Ok(s) => writer.write(&s).map_err(|e| e.to_string())?,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }
    writer.finish().map_err(|e| e.to_string())?.flush().map_err(|e| e.to_string())?;
    if let Some(p) = audit {
        let f = BufWriter::new(File::create(p).map_err(|e| format!("{}: {e}", p.display()))?);
        write_audit(world.set.audit().entries(), f).map_err(|e| e.to_string())?;
    }
    if let Some(p) = events {
        let mut f = output(Some(p))?;
        for e in &world.events {
            writeln!(f, "{}", serde_json::to_string(e).expect("event serializes")).map_err(|e| e.to_string())?;
        }
        f.flush().map_err(|e| e.to_string())?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn batch(common: &Common, sweeps: &[String], out: Option<&Path>) -> Result<(), String> {
    let config = load(common)?;
    config.validate().map_err(|e| e.to_string())?;
    let sweeps = sweeps.iter().map(|s| parse_sweep(s)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let rows = batch_run(&config, &sweeps);
    let mut w = write_summary(&rows, output(out)?).map_err(|e| e.to_string())?;
    w.flush().map_err(|e| e.to_string())
}

fn inspect(log: &Path, config: Option<&Path>) -> Result<(), String> {
    let entries = read_audit::<i64, _>(File::open(log).map_err(|e| format!("{}: {e}", log.display()))?).map_err(|e| e.to_string())?;
    let layouts: Layouts = match config {
        Some(p) => {
            let c = SimulationConfig::from_path(p).map_err(|e| e.to_string())?;
            World::new(c, false).map_err(|e| e.to_string())?.layouts()
        }
        None => Layouts::new(),
    };
    let set = replay(&entries, &layouts).map_err(|e| e.to_string())?;
    let mut out = output(None)?;
    let w = |e: io::Error| e.to_string();
    writeln!(out, "{} postings, last step {}", entries.len(), entries.last().map_or(0, |p| p.step)).map_err(w)?;
    for gl in set.institutions() {
        let r = gl.report();
        writeln!(out, "\n{}  assets {}  liabilities {}  capital {}  {}", gl.owner, r.assets, r.liabilities, r.capital, if r.holds { "balanced" } else { "UNBALANCED" })
            .map_err(w)?;
        for l in gl.ledgers() {
            let dc = if l.deposit_class { " (deposit class)" } else { "" };
            writeln!(out, "  {:<22} {:<10} {:>16}{dc}", l.id.to_string(), format!("{:?}", l.class).to_lowercase(), l.total()).map_err(w)?;
        }
    }
    out.flush().map_err(w)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { common, out, audit, events } => run(common, out.as_deref(), audit.as_deref(), events.as_deref()),
        Command::Batch { common, sweep, out } => batch(common, sweep, out.as_deref()),
        Command::Serve { common, port, paused } => load(common).and_then(|c| banksim::control::serve_blocking(c, *port, *paused).map_err(|e| e.to_string())),
        Command::Inspect { audit_log, config } => inspect(audit_log, config.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
