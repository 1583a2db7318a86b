//! Monte-Carlo experiment harness: random demand sets, protocol selection,
//! every scheduler on the same demands, validation and CSV output.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Demand, RepeaterProtocol, Topology};
use crate::protoselect::{select_protocol, SelectionConfig};
use crate::schedule::{run_scheduler, Scheduler};
use crate::validate::report;

/// Rates a random demand may ask for, in ebit/s.
pub const RATE_MENU: [f64; 7] = [12.5, 6.25, 3.125, 1.5625, 0.78125, 0.390625, 0.1953125];

/// How demands get a jitter bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum JitterPolicy {
    #[default]
    None,
    /// Exactly periodic delivery.
    Zero,
    /// (1 / R_min)^2, the bound every schedule meets anyway.
    InverseRateSquared,
}

impl JitterPolicy {
    fn apply(self, d: Demand) -> Demand {
        match self {
            JitterPolicy::None => d,
            JitterPolicy::Zero => d.with_jitter(0.0),
            JitterPolicy::InverseRateSquared => {
                let j = (1.0 / d.r_min).powi(2);
                d.with_jitter(j)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub t_slot_ms: f64,
    pub fidelity_levels: Vec<f64>,
    pub rate_menu: Vec<f64>,
    pub load_targets: Vec<f64>,
    pub repetitions: u32,
    pub seed: u64,
    pub schedulers: Vec<Scheduler>,
    pub jitter: JitterPolicy,
    pub selection: SelectionConfig,
    /// Worker threads; None uses rayon's default pool.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            t_slot_ms: 10.0,
            fidelity_levels: vec![0.55],
            rate_menu: RATE_MENU.to_vec(),
            load_targets: vec![100.0],
            repetitions: 10,
            seed: 1,
            schedulers: Scheduler::ALL.to_vec(),
            jitter: JitterPolicy::None,
            selection: SelectionConfig::default(),
            threads: None,
        }
    }
}

/// Adds demands between uniformly drawn distinct end nodes, each with a
/// uniformly drawn rate, until their rates sum to at least `load_target`.
pub fn generate_demands(
    t: &Topology,
    load_target: f64,
    fidelity: f64,
    rate_menu: &[f64],
    rng: &mut impl Rng,
) -> Result<Vec<Demand>> {
    let ends: Vec<&str> = t.end_nodes().iter().map(|n| n.id.as_str()).collect();
    if ends.len() < 2 {
        return Err(Error::Invalid("fewer than two end nodes".into()));
    }
    if rate_menu.is_empty() || rate_menu.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Invalid("rate menu must be non-empty and positive".into()));
    }
    let mut out = Vec::new();
    let mut load = 0.0;
    while load < load_target {
        let src = rng.gen_range(0..ends.len());
        let mut dst = rng.gen_range(0..ends.len() - 1);
        if dst >= src {
            dst += 1;
        }
        let rate = *rate_menu.choose(rng).expect("non-empty menu");
        out.push(Demand::new(&format!("d{}", out.len()), ends[src], ends[dst], fidelity, rate));
        load += rate;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheduler: Scheduler,
    pub fidelity: f64,
    pub load: f64,
    pub repetition: u32,
    pub demand_id: String,
    pub r_min: f64,
    pub achieved_rate: f64,
    pub jitter: Option<f64>,
    pub satisfied: bool,
    pub network_throughput: f64,
}

/// One scheduler on one demand set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scheduler: Scheduler,
    pub fidelity: f64,
    pub load: f64,
    pub repetition: u32,
    /// Sum of R_min over demands that got a protocol.
    pub offered_load: f64,
    pub network_throughput: f64,
    /// Mean jitter over demands with at least one delivery.
    pub mean_jitter: Option<f64>,
    pub satisfied: usize,
    pub demands: usize,
    /// Demands without a protocol, left out of the offered load.
    pub excluded: usize,
    /// Demands with a protocol too slow for their rate.
    pub rejected: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub std_err: f64,
}

impl Stats {
    pub fn of(xs: &[f64]) -> Stats {
        let n = xs.len();
        if n == 0 {
            return Stats {
                n,
                mean: f64::NAN,
                std_dev: f64::NAN,
                std_err: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Stats {
            n,
            mean,
            std_dev: var.sqrt(),
            std_err: (var / n as f64).sqrt(),
        }
    }
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scheduler: Scheduler,
    pub fidelity: f64,
    pub load: f64,
    pub throughput: Stats,
    pub jitter: Stats,
    /// Throughput at the 10th, 25th, 50th, 75th and 90th percentile.
    pub throughput_quantiles: [f64; 5],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub runs: Vec<RunSummary>,
}

impl ExperimentResult {
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut groups: BTreeMap<(Scheduler, u64, u64), Vec<&RunSummary>> = BTreeMap::new();
        for r in &self.runs {
            groups
                .entry((r.scheduler, r.fidelity.to_bits(), r.load.to_bits()))
                .or_default()
                .push(r);
        }
        groups
            .into_values()
            .map(|runs| {
                let tp: Vec<f64> = runs.iter().map(|r| r.network_throughput).collect();
                let jit: Vec<f64> = runs.iter().filter_map(|r| r.mean_jitter).collect();
                Aggregate {
                    scheduler: runs[0].scheduler,
                    fidelity: runs[0].fidelity,
                    load: runs[0].load,
                    throughput: Stats::of(&tp),
                    jitter: Stats::of(&jit),
                    throughput_quantiles: [0.1, 0.25, 0.5, 0.75, 0.9].map(|q| quantile(&tp, q)),
                }
            })
            .collect()
    }

    pub fn aggregate(&self, s: Scheduler, fidelity: f64, load: f64) -> Option<Aggregate> {
        self.aggregates()
            .into_iter()
            .find(|a| a.scheduler == s && a.fidelity == fidelity && a.load == load)
    }

    /// Per-demand rows in the fixed column order.
    pub fn write_rows_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        out.write_record([
            "scheduler",
            "fidelity",
            "load",
            "repetition",
            "demand_id",
            "r_min",
            "achieved_rate",
            "jitter",
            "satisfied",
            "network_throughput",
        ])
        .map_err(io)?;
        for r in &self.rows {
            out.write_record([
                r.scheduler.name().to_string(),
                r.fidelity.to_string(),
                r.load.to_string(),
                r.repetition.to_string(),
                r.demand_id.clone(),
                r.r_min.to_string(),
                r.achieved_rate.to_string(),
                r.jitter.map(|j| j.to_string()).unwrap_or_default(),
                r.satisfied.to_string(),
                r.network_throughput.to_string(),
            ])
            .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_aggregates_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        out.write_record([
            "scheduler",
            "fidelity",
            "load",
            "repetitions",
            "throughput_mean",
            "throughput_std",
            "throughput_stderr",
            "throughput_p10",
            "throughput_p25",
            "throughput_p50",
            "throughput_p75",
            "throughput_p90",
            "jitter_mean",
            "jitter_std",
            "jitter_stderr",
        ])
        .map_err(io)?;
        for a in self.aggregates() {
            let mut rec = vec![
                a.scheduler.name().to_string(),
                a.fidelity.to_string(),
                a.load.to_string(),
                a.throughput.n.to_string(),
                a.throughput.mean.to_string(),
                a.throughput.std_dev.to_string(),
                a.throughput.std_err.to_string(),
            ];
            rec.extend(a.throughput_quantiles.iter().map(|q| q.to_string()));
            rec.extend([a.jitter.mean, a.jitter.std_dev, a.jitter.std_err].map(|x| x.to_string()));
            out.write_record(&rec).map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Independent stream for one repetition. Every fidelity level, load and
/// scheduler of a repetition sees the same draws, so loads share a prefix
/// of demands and schedulers are compared on identical inputs.
pub fn repetition_rng(seed: u64, repetition: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(repetition as u64);
    rng
}

type ProtocolCache = BTreeMap<(u64, String, String), std::result::Result<RepeaterProtocol, String>>;

fn protocols_for(t: &Topology, cfg: &ExperimentConfig) -> ProtocolCache {
    let ends: Vec<String> = t.end_nodes().iter().map(|n| n.id.clone()).collect();
    let mut keys = Vec::new();
    for &f in &cfg.fidelity_levels {
        for a in &ends {
            for b in &ends {
                if a != b {
                    keys.push((f, a.clone(), b.clone()));
                }
            }
        }
    }
    keys.into_par_iter()
        .map(|(f, a, b)| {
            let d = Demand::new("probe", &a, &b, f, 1.0);
            let p = select_protocol(t, &d, &cfg.selection).map_err(|e| e.to_string());
            ((f.to_bits(), a, b), p)
        })
        .collect()
}

fn run_repetition(
    t: &Topology,
    cfg: &ExperimentConfig,
    cache: &ProtocolCache,
    rep: u32,
) -> Result<(Vec<ResultRow>, Vec<RunSummary>)> {
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &fidelity in &cfg.fidelity_levels {
        for &load in &cfg.load_targets {
            let mut rng = repetition_rng(cfg.seed, rep);
            let demands = generate_demands(t, load, fidelity, &cfg.rate_menu, &mut rng)?;
            let mut pairs = Vec::new();
            let mut excluded = 0;
            for d in demands {
                match &cache[&(fidelity.to_bits(), d.src.clone(), d.dst.clone())] {
                    Ok(p) => pairs.push((cfg.jitter.apply(d), p.clone())),
                    Err(e) => {
                        log::debug!("demand {} {}->{} excluded: {e}", d.id, d.src, d.dst);
                        excluded += 1;
                    }
                }
            }
            let offered: f64 = pairs.iter().map(|(d, _)| d.r_min).sum();
            for &scheduler in &cfg.schedulers {
                let outcome = run_scheduler(&pairs, scheduler, cfg.t_slot_ms)?;
                let rep_report = report(&outcome, &pairs);
                if !rep_report.violations.is_empty() {
                    return Err(Error::Invalid(format!(
                        "{scheduler} emitted an invalid schedule (rep {rep}, F={fidelity}, load={load}): {:?}",
                        rep_report.violations[0]
                    )));
                }
                let jitters: Vec<f64> = rep_report.per_demand.values().filter_map(|r| r.jitter).collect();
                runs.push(RunSummary {
                    scheduler,
                    fidelity,
                    load,
                    repetition: rep,
                    offered_load: offered,
                    network_throughput: rep_report.network_throughput,
                    mean_jitter: (!jitters.is_empty()).then(|| jitters.iter().sum::<f64>() / jitters.len() as f64),
                    satisfied: rep_report.per_demand.values().filter(|r| r.satisfied).count(),
                    demands: pairs.len(),
                    excluded,
                    rejected: outcome.rejected.len(),
                });
                for (d, _) in &pairs {
                    let r = &rep_report.per_demand[&d.id];
                    rows.push(ResultRow {
                        scheduler,
                        fidelity,
                        load,
                        repetition: rep,
                        demand_id: d.id.clone(),
                        r_min: d.r_min,
                        achieved_rate: r.achieved_rate,
                        jitter: r.jitter,
                        satisfied: r.satisfied,
                        network_throughput: rep_report.network_throughput,
                    });
                }
            }
        }
    }
    Ok((rows, runs))
}

/// Runs the whole grid. Repetitions run in parallel; results are gathered
/// in repetition order so the output does not depend on the worker count.
pub fn run_experiment(cfg: &ExperimentConfig, t: &Topology) -> Result<ExperimentResult> {
    let work = || -> Result<ExperimentResult> {
        let cache = protocols_for(t, cfg);
        let parts: Vec<Result<(Vec<ResultRow>, Vec<RunSummary>)>> = (0..cfg.repetitions)
            .into_par_iter()
            .map(|rep| run_repetition(t, cfg, &cache, rep))
            .collect();
        let mut out = ExperimentResult::default();
        for p in parts {
            let (rows, runs) = p?;
            out.rows.extend(rows);
            out.runs.extend(runs);
        }
        Ok(out)
    };
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Invalid(e.to_string()))?
            .install(work),
        None => work(),
    }
}
