use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use qsched_core::experiment::{run_experiment, ExperimentConfig, JitterPolicy, RATE_MENU};
use qsched_core::fixtures;
use qsched_core::model::{load_demands, Demand, NetworkSchedule, RepeaterProtocol, Topology};
use qsched_core::protoselect::{select_protocol, PivotRule, SelectionConfig};
use qsched_core::pts::{np_edf, PeriodicTask};
use qsched_core::schedule::{run_scheduler, Scheduler};
use qsched_core::validate::{brute_force_work_conserving, check_schedule, report};

#[derive(Parser)]
#[command(name = "qsched", version, about = "Entanglement distribution schedules for quantum networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select protocols for a demand file and schedule them.
    Schedule(ScheduleArgs),
    /// Monte-Carlo sweep over loads and fidelities.
    Sweep(SweepArgs),
    /// Re-check a schedule written by `schedule`.
    Validate(ValidateArgs),
    /// Compare NP-EDF with exhaustive search on a tiny task set.
    Oracle(OracleArgs),
    /// Print a built-in topology as JSON.
    Topology {
        #[arg(value_enum)]
        name: BuiltinTopology,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BuiltinTopology {
    Ring,
    Line3,
    Surfnet,
}

#[derive(Clone, Copy, ValueEnum)]
enum Pivot {
    Midpoint,
    First,
    Last,
}

#[derive(Clone, Copy, ValueEnum)]
enum Jitter {
    None,
    Zero,
    InverseRateSquared,
}

#[derive(Args)]
struct SelectionArgs {
    /// Slot length in milliseconds.
    #[arg(long, default_value_t = 10.0)]
    t_slot: f64,
    #[arg(long, value_enum, default_value = "midpoint")]
    pivot: Pivot,
    /// Deepest nested distillation tried on a link.
    #[arg(long, default_value_t = 4)]
    nesting_cap: u32,
    /// Link windows last this many expected generation times.
    #[arg(long, default_value_t = 1.0)]
    attempt_multiplier: f64,
    /// Keep the first swap input order instead of searching all of them.
    #[arg(long)]
    no_order_search: bool,
}

impl SelectionArgs {
    fn config(&self) -> SelectionConfig {
        SelectionConfig {
            t_slot_ms: self.t_slot,
            pivot: match self.pivot {
                Pivot::Midpoint => PivotRule::Midpoint,
                Pivot::First => PivotRule::First,
                Pivot::Last => PivotRule::Last,
            },
            nesting_cap: self.nesting_cap,
            attempt_multiplier: self.attempt_multiplier,
            order_search: !self.no_order_search,
            ..SelectionConfig::default()
        }
    }
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    demands: PathBuf,
    #[arg(long, default_value = "pts-np-edf")]
    scheduler: Scheduler,
    /// Schedule JSON goes here; the per-demand report CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the report CSV to this file instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    selection: SelectionArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    topology: PathBuf,
    /// Directory for rows.csv and aggregates.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    reps: u32,
    #[arg(long, value_delimiter = ',', default_value = "0.55")]
    fidelity: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "100")]
    loads: Vec<f64>,
    /// Defaults to all three.
    #[arg(long, value_delimiter = ',')]
    scheduler: Vec<Scheduler>,
    #[arg(long, value_enum, default_value = "none")]
    jitter: Jitter,
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    selection: SelectionArgs,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    demands: PathBuf,
    #[arg(long)]
    schedule: PathBuf,
    #[command(flatten)]
    selection: SelectionArgs,
}

#[derive(Args)]
struct OracleArgs {
    /// Tasks as `wcet/period`, comma separated; all released at slot 0.
    #[arg(value_delimiter = ',', required = true)]
    tasks: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Schedule(a) => schedule(a),
        Command::Sweep(a) => sweep(a),
        Command::Validate(a) => validate(a),
        Command::Oracle(a) => oracle(a),
        Command::Topology { name } => {
            let t = match name {
                BuiltinTopology::Ring => fixtures::symmetric_ring(),
                BuiltinTopology::Line3 => fixtures::line3(),
                BuiltinTopology::Surfnet => fixtures::surfnet_placeholder(),
            };
            println!("{}", t.to_json());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_topology(path: &Path) -> Result<Topology> {
    Topology::load(path).with_context(|| format!("loading topology {}", path.display()))
}

/// Protocols for every demand that has one; the rest are logged and dropped.
fn select_all(t: &Topology, demands: Vec<Demand>, cfg: &SelectionConfig) -> Vec<(Demand, RepeaterProtocol)> {
    let mut pairs = Vec::new();
    for d in demands {
        match select_protocol(t, &d, cfg) {
            Ok(p) => {
                log::info!("{}: latency {} slots, F_wc {:.4}", d.id, p.latency, p.worst_case_fidelity);
                pairs.push((d, p));
            }
            Err(e) => log::warn!("{}: no protocol ({e})", d.id),
        }
    }
    pairs
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn schedule(a: ScheduleArgs) -> Result<ExitCode> {
    let t = load_topology(&a.topology)?;
    let demands = load_demands(&a.demands).with_context(|| format!("loading demands {}", a.demands.display()))?;
    let cfg = a.selection.config();
    let pairs = select_all(&t, demands, &cfg);
    let outcome = run_scheduler(&pairs, a.scheduler, cfg.t_slot_ms)?;
    for (id, why) in &outcome.rejected {
        log::warn!("{id}: rejected ({why})");
    }
    let rep = report(&outcome, &pairs);
    if let Some(p) = &a.out {
        std::fs::write(p, outcome.schedule.to_json()).with_context(|| format!("writing {}", p.display()))?;
    }
    rep.write_csv(output(a.report.as_deref())?)?;
    if !rep.violations.is_empty() {
        bail!("scheduler produced {} violations", rep.violations.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(a: SweepArgs) -> Result<ExitCode> {
    let t = load_topology(&a.topology)?;
    let selection = a.selection.config();
    let cfg = ExperimentConfig {
        t_slot_ms: selection.t_slot_ms,
        fidelity_levels: a.fidelity,
        rate_menu: RATE_MENU.to_vec(),
        load_targets: a.loads,
        repetitions: a.reps,
        seed: a.seed,
        schedulers: if a.scheduler.is_empty() {
            Scheduler::ALL.to_vec()
        } else {
            a.scheduler
        },
        jitter: match a.jitter {
            Jitter::None => JitterPolicy::None,
            Jitter::Zero => JitterPolicy::Zero,
            Jitter::InverseRateSquared => JitterPolicy::InverseRateSquared,
        },
        selection,
        threads: a.threads,
    };
    let res = run_experiment(&cfg, &t)?;
    std::fs::create_dir_all(&a.out)?;
    res.write_rows_csv(output(Some(&a.out.join("rows.csv")))?)?;
    res.write_aggregates_csv(output(Some(&a.out.join("aggregates.csv")))?)?;
    for g in res.aggregates() {
        println!(
            "{:<13} F={:<5} load={:<6} throughput {:.3} ± {:.3}  jitter {:.3e}",
            g.scheduler, g.fidelity, g.load, g.throughput.mean, g.throughput.std_err, g.jitter.mean
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn validate(a: ValidateArgs) -> Result<ExitCode> {
    let t = load_topology(&a.topology)?;
    let demands = load_demands(&a.demands).with_context(|| format!("loading demands {}", a.demands.display()))?;
    let text = std::fs::read_to_string(&a.schedule).with_context(|| format!("reading {}", a.schedule.display()))?;
    let s = NetworkSchedule::from_json(&text)?;
    let pairs = select_all(&t, demands, &a.selection.config());
    let violations = check_schedule(&s, &pairs);
    if violations.is_empty() {
        println!("ok: {} instances, {} operations", s.entries.len(), s.ops.len());
        return Ok(ExitCode::SUCCESS);
    }
    for v in &violations {
        println!("{v:?}");
    }
    Ok(ExitCode::FAILURE)
}

fn parse_task(i: usize, s: &str) -> Result<PeriodicTask> {
    let parts: Vec<u64> = s
        .split('/')
        .map(|x| x.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad task {s:?}"))?;
    let task = match parts[..] {
        [c, t] => PeriodicTask::new(&format!("t{i}"), c, t),
        _ => bail!("task {s:?} is not wcet/period"),
    };
    if task.period == 0 || task.wcet == 0 || task.wcet > task.period {
        bail!("task {s:?} needs 0 < wcet <= period");
    }
    Ok(task)
}

fn oracle(a: OracleArgs) -> Result<ExitCode> {
    let tasks: Vec<PeriodicTask> = a.tasks.iter().enumerate().map(|(i, s)| parse_task(i, s)).collect::<Result<_>>()?;
    let h = qsched_core::pts::hyperperiod(&tasks)?;
    let heuristic = np_edf(&tasks, h);
    let exact = brute_force_work_conserving(&tasks, h)?;
    println!("hyperperiod {h}");
    for t in &tasks {
        println!("{} edf {:?}", t.task_id, heuristic.start_slots(&t.task_id));
    }
    match &exact {
        Some(w) => {
            for t in &tasks {
                println!("{} exhaustive {:?}", t.task_id, w.start_slots(&t.task_id));
            }
        }
        None => println!("exhaustive: no feasible work-conserving schedule"),
    }
    let edf_ok = heuristic.unscheduled.is_empty();
    println!("edf complete: {edf_ok}, exhaustive feasible: {}", exact.is_some());
    Ok(if edf_ok == exact.is_some() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
