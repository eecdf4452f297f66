//! Command-line front end: single runs, parameter sweeps, canned
//! verification scenarios, and admissibility audits of trace files.
//!
//! Exit codes: 0 on success, 1 on configuration errors, 2 when an
//! invariant or admissibility check fails.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::adversary::InjectionTrace;
use crate::bds::bds_check_stability_invariants;
use crate::config::{
    execute_with_trace, parse_rate_list, parse_u64_list, sweep, RunConfig, SchedulerKind,
    SweepRow,
};
use crate::fds::fds_check_stability_invariants;
use crate::metrics::{summarize, MetricsTrace, Summary};
use crate::rate::Rate;
use crate::scenarios;

#[derive(Parser)]
#[command(
    name = "shardsched",
    about = "Deterministic simulator for sharded-ledger transaction scheduling under adversarial injection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and emit per-round CSV plus a summary.
    Run(RunArgs),
    /// Run a cartesian sweep over rho and b and emit an aggregate CSV.
    Sweep(SweepArgs),
    /// Replay the canned walkthrough scenarios and bound checks.
    Verify,
    /// Audit a trace file against a (rho, b) budget.
    CheckAdversary(CheckArgs),
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Flat `key = value` config file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scheduler: bds or fds.
    #[arg(long)]
    scheduler: Option<String>,
    /// Topology: uniform, line, or file:<path>.
    #[arg(long)]
    topology: Option<String>,
    /// Shard count.
    #[arg(long)]
    s: Option<String>,
    /// Maximum shards accessed per transaction.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    rounds: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Injection strategy: uniform_random or single_epoch_burst.
    #[arg(long)]
    strategy: Option<String>,
    /// Epoch-length constant (E0 = c * ceil(log2 s)).
    #[arg(long)]
    c: Option<String>,
    /// Latency-bound constant for the stability checker.
    #[arg(long)]
    c1: Option<String>,
    #[arg(long)]
    retry_aborts: Option<String>,
    /// Base-epoch window that receives the burst.
    #[arg(long)]
    burst_epoch: Option<String>,
    /// Extra transactions released in the burst (default: b).
    #[arg(long)]
    burst_txns: Option<String>,
    /// Probability a subtransaction fails its condition/validity check.
    #[arg(long)]
    fail_prob: Option<String>,
    #[arg(long)]
    accounts_per_shard: Option<String>,
}

impl ConfigArgs {
    fn build(&self) -> Result<RunConfig, String> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path).map_err(|e| e.to_string())?,
            None => RunConfig::default(),
        };
        let overrides: [(&str, &Option<String>); 13] = [
            ("scheduler", &self.scheduler),
            ("topology", &self.topology),
            ("s", &self.s),
            ("k", &self.k),
            ("rounds", &self.rounds),
            ("seed", &self.seed),
            ("strategy", &self.strategy),
            ("c", &self.c),
            ("c1", &self.c1),
            ("retry_aborts", &self.retry_aborts),
            ("burst_epoch", &self.burst_epoch),
            ("burst_txns", &self.burst_txns),
            ("fail_prob", &self.fail_prob),
        ];
        for (key, value) in overrides {
            if let Some(value) = value {
                config.set(key, value).map_err(|e| e.to_string())?;
            }
        }
        if let Some(v) = &self.accounts_per_shard {
            config.set("accounts_per_shard", v).map_err(|e| e.to_string())?;
        }
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Injection rate as a decimal or fraction (e.g. 0.15 or 1/144).
    #[arg(long)]
    rho: Option<String>,
    /// Burstiness.
    #[arg(long)]
    b: Option<String>,
    /// Write the per-round CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the one-row summary CSV here.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Replay this trace file instead of generating one.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Export the (generated or replayed) trace here.
    #[arg(long)]
    export_trace: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Rho values: comma list or range (0.05..0.30[:step]).
    #[arg(long, default_value = "0.05..0.30")]
    rho: String,
    /// Burstiness values, comma separated.
    #[arg(long, default_value = "1000,3000")]
    b: String,
    /// Aggregate CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for self-contained SVG plots (off by default).
    #[arg(long)]
    plot_dir: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 4)]
    workers: usize,
}

#[derive(Args)]
struct CheckArgs {
    /// Trace file to audit.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    rho: String,
    #[arg(long)]
    b: String,
    #[arg(long)]
    s: String,
    #[arg(long, default_value = "1")]
    accounts_per_shard: String,
}

/// Per-round CSV: `round,pending_total,in_flight,committed_cum,aborted_cum`.
pub fn per_round_csv(metrics: &MetricsTrace) -> String {
    let mut out = String::from("round,pending_total,in_flight,committed_cum,aborted_cum\n");
    for r in &metrics.rounds {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.round, r.pending_total, r.in_flight, r.committed_cum, r.aborted_cum
        ));
    }
    out
}

pub fn summary_csv(summary: &Summary) -> String {
    format!(
        "rounds,injected,committed,aborted,avg_pending,max_pending,avg_latency,max_latency,growing,slope\n{},{},{},{},{:.6},{},{:.6},{},{},{:.6}\n",
        summary.rounds,
        summary.injected,
        summary.committed,
        summary.aborted,
        summary.avg_pending,
        summary.max_pending,
        summary.avg_latency,
        summary.max_latency,
        summary.growth.is_growing(),
        summary.growth.slope(),
    )
}

pub fn summary_text(summary: &Summary) -> String {
    format!(
        "rounds          {}\n\
         injected        {}\n\
         committed       {}\n\
         aborted         {}\n\
         avg pending     {:.3}\n\
         max pending     {}\n\
         avg latency     {:.3}\n\
         max latency     {}\n\
         queue growth    {}\n",
        summary.rounds,
        summary.injected,
        summary.committed,
        summary.aborted,
        summary.avg_pending,
        summary.max_pending,
        summary.avg_latency,
        summary.max_latency,
        match summary.growth {
            crate::metrics::GrowthVerdict::Stable { slope } => format!("stable (slope {slope:.4})"),
            crate::metrics::GrowthVerdict::Growing { slope } =>
                format!("GROWING (slope {slope:.4})"),
        }
    )
}

/// Aggregate sweep CSV: `rho,b,avg_pending,avg_latency`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("rho,b,avg_pending,avg_latency\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6}\n",
            row.rho, row.b, row.summary.avg_pending, row.summary.avg_latency
        ));
    }
    out
}

fn svg_scaffold(title: &str, content: &str, legend: &[(String, &str)]) -> String {
    let mut legend_svg = String::new();
    for (i, (label, color)) in legend.iter().enumerate() {
        let y = 24 + i * 18;
        legend_svg.push_str(&format!(
            "<rect x=\"540\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\
             <text x=\"556\" y=\"{}\" font-size=\"12\">{}</text>",
            y,
            color,
            y + 10,
            label
        ));
    }
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"660\" height=\"420\" \
         font-family=\"sans-serif\">\n<rect width=\"660\" height=\"420\" fill=\"white\"/>\n\
         <text x=\"20\" y=\"20\" font-size=\"14\">{title}</text>\n{legend_svg}\n{content}\n</svg>\n"
    )
}

struct PlotFrame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    max_y: f64,
}

impl PlotFrame {
    fn new(max_y: f64) -> PlotFrame {
        PlotFrame {
            x0: 60.0,
            y0: 380.0,
            w: 460.0,
            h: 330.0,
            max_y: max_y.max(1.0),
        }
    }

    fn x(&self, frac: f64) -> f64 {
        self.x0 + frac * self.w
    }

    fn y(&self, value: f64) -> f64 {
        self.y0 - (value / self.max_y) * self.h
    }

    fn axes(&self, rows: &[(Rate, f64)]) -> String {
        let mut out = format!(
            "<line x1=\"{x0}\" y1=\"{y1}\" x2=\"{x0}\" y2=\"{y0}\" stroke=\"black\"/>\
             <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>",
            x0 = self.x0,
            y0 = self.y0,
            y1 = self.y0 - self.h,
            x1 = self.x0 + self.w,
        );
        for i in 0..=4 {
            let v = self.max_y * i as f64 / 4.0;
            let y = self.y(v);
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{:.0}</text>",
                self.x0 - 6.0,
                y + 3.0,
                v
            ));
        }
        for (i, (rho, _)) in rows.iter().enumerate() {
            let x = self.x((i as f64 + 0.5) / rows.len() as f64);
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
                x,
                self.y0 + 14.0,
                rho
            ));
        }
        out
    }
}

const PLOT_COLORS: [&str; 4] = ["#4477aa", "#ee6677", "#228833", "#ccbb44"];

type RhoPoint = (Rate, f64, f64);

fn group_rows(rows: &[SweepRow]) -> Vec<(u64, Vec<RhoPoint>)> {
    let mut groups: Vec<(u64, Vec<RhoPoint>)> = Vec::new();
    for row in rows {
        let entry = (row.rho, row.summary.avg_pending, row.summary.avg_latency);
        match groups.iter_mut().find(|(b, _)| *b == row.b) {
            Some((_, v)) => v.push(entry),
            None => groups.push((row.b, vec![entry])),
        }
    }
    groups
}

/// Bar chart of average pending-queue size per rho, grouped by b.
pub fn plot_pending_svg(rows: &[SweepRow]) -> String {
    let groups = group_rows(rows);
    let max_y = rows.iter().map(|r| r.summary.avg_pending).fold(0.0, f64::max);
    let frame = PlotFrame::new(max_y);
    let ticks: Vec<(Rate, f64)> = groups
        .first()
        .map(|(_, v)| v.iter().map(|&(r, p, _)| (r, p)).collect())
        .unwrap_or_default();
    let mut content = frame.axes(&ticks);
    let n = ticks.len().max(1);
    let slot = frame.w / n as f64;
    let bar = slot / (groups.len() as f64 + 1.0);
    for (gi, (_, values)) in groups.iter().enumerate() {
        for (i, &(_, pending, _)) in values.iter().enumerate() {
            let x = frame.x0 + i as f64 * slot + bar * (gi as f64 + 0.5);
            let y = frame.y(pending);
            content.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{}\"/>",
                x,
                y,
                bar,
                frame.y0 - y,
                PLOT_COLORS[gi % PLOT_COLORS.len()]
            ));
        }
    }
    let legend: Vec<(String, &str)> = groups
        .iter()
        .enumerate()
        .map(|(gi, (b, _))| (format!("b = {b}"), PLOT_COLORS[gi % PLOT_COLORS.len()]))
        .collect();
    svg_scaffold("Average pending transactions vs rho", &content, &legend)
}

/// Line chart of average latency per rho, one polyline per b.
pub fn plot_latency_svg(rows: &[SweepRow]) -> String {
    let groups = group_rows(rows);
    let max_y = rows.iter().map(|r| r.summary.avg_latency).fold(0.0, f64::max);
    let frame = PlotFrame::new(max_y);
    let ticks: Vec<(Rate, f64)> = groups
        .first()
        .map(|(_, v)| v.iter().map(|&(r, _, l)| (r, l)).collect())
        .unwrap_or_default();
    let mut content = frame.axes(&ticks);
    for (gi, (_, values)) in groups.iter().enumerate() {
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(i, &(_, _, latency))| {
                format!(
                    "{:.1},{:.1}",
                    frame.x((i as f64 + 0.5) / values.len() as f64),
                    frame.y(latency)
                )
            })
            .collect();
        content.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>",
            points.join(" "),
            PLOT_COLORS[gi % PLOT_COLORS.len()]
        ));
    }
    let legend: Vec<(String, &str)> = groups
        .iter()
        .enumerate()
        .map(|(gi, (b, _))| (format!("b = {b}"), PLOT_COLORS[gi % PLOT_COLORS.len()]))
        .collect();
    svg_scaffold("Average transaction latency vs rho", &content, &legend)
}

fn write_file(path: &PathBuf, content: &str) -> Result<(), String> {
    std::fs::write(path, content).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn cmd_run(args: &RunArgs) -> Result<i32, String> {
    let mut config = args.config.build()?;
    if let Some(v) = &args.rho {
        config.set("rho", v).map_err(|e| e.to_string())?;
    }
    if let Some(v) = &args.b {
        config.set("b", v).map_err(|e| e.to_string())?;
    }
    config.validate().map_err(|e| e.to_string())?;
    if args.dump_config {
        print!("{}", config.to_text());
        return Ok(0);
    }
    let trace = match &args.trace {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            InjectionTrace::from_text(&text).map_err(|e| e.to_string())?
        }
        None => config.generate_trace(),
    };
    if let Some(path) = &args.export_trace {
        write_file(path, &trace.to_text())?;
    }
    let out = execute_with_trace(&config, &trace).map_err(|e| e.to_string())?;
    if let Some(path) = &args.csv {
        write_file(path, &per_round_csv(&out.metrics))?;
    }
    let summary = summarize(&out.metrics);
    if let Some(path) = &args.summary {
        write_file(path, &summary_csv(&summary))?;
    }
    print!("{}", summary_text(&summary));
    let mut code = 0;
    if out.capacity_violations > 0 {
        eprintln!(
            "invariant violation: {} multi-commit rounds on a single shard",
            out.capacity_violations
        );
        code = 2;
    }
    match config.scheduler {
        SchedulerKind::Bds => {
            let report =
                bds_check_stability_invariants(&out.metrics, config.rho, config.b, config.k, config.s);
            if report.precondition_holds {
                println!(
                    "stability bounds (rate <= {}): pending {}/{}, latency {}/{}, epoch {}/{}",
                    report.rate_bound,
                    report.max_pending,
                    report.pending_bound,
                    report.max_latency,
                    report.latency_bound,
                    report.max_epoch_length,
                    report.epoch_bound
                );
                if let Some(v) = &report.violation {
                    eprintln!("invariant violation: {v}");
                    code = 2;
                }
            }
        }
        SchedulerKind::Fds => {
            let topology = config.build_topology().map_err(|e| e.to_string())?;
            let hierarchy =
                crate::cluster::ClusterHierarchy::build(&topology).map_err(|e| e.to_string())?;
            let report = fds_check_stability_invariants(
                &out.metrics,
                config.rho,
                config.b,
                config.k,
                config.s,
                topology.diameter() as u64,
                hierarchy.sublayer_count(),
                config.c1,
            );
            if report.precondition_holds {
                println!(
                    "stability bounds (rate <= {}): pending {}/{}, latency {}/{}",
                    report.rate_bound,
                    report.max_pending,
                    report.pending_bound,
                    report.max_latency,
                    report.latency_bound
                );
            }
            if let Some(v) = &report.violation {
                eprintln!("invariant violation: {v}");
                code = 2;
            }
        }
    }
    Ok(code)
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32, String> {
    let base = args.config.build()?;
    let rhos = parse_rate_list(&args.rho).map_err(|e| e.to_string())?;
    let bs = parse_u64_list("b", &args.b).map_err(|e| e.to_string())?;
    let rows = sweep(&base, &rhos, &bs, args.workers).map_err(|e| e.to_string())?;
    let csv = sweep_csv(&rows);
    match &args.out {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(dir) = &args.plot_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        write_file(&dir.join("pending_vs_rho.svg"), &plot_pending_svg(&rows))?;
        write_file(&dir.join("latency_vs_rho.svg"), &plot_latency_svg(&rows))?;
    }
    Ok(0)
}

fn cmd_verify() -> i32 {
    let mut all_pass = true;
    for report in [scenarios::bds_walkthrough().0, scenarios::fds_walkthrough().0] {
        for check in &report.checks {
            if check.pass {
                println!("PASS {}: {}", report.name, check.name);
            } else {
                println!("FAIL {}: {} ({})", report.name, check.name, check.detail);
                all_pass = false;
            }
        }
    }
    // Bound check at the guaranteed-stable rate.
    let config = RunConfig {
        s: 16,
        k: 4,
        b: 2,
        rho: Rate::new(1, 72),
        rounds: 4000,
        ..RunConfig::default()
    };
    match crate::config::execute(&config) {
        Ok(out) => {
            let report =
                bds_check_stability_invariants(&out.metrics, config.rho, config.b, config.k, config.s);
            let pass = report.precondition_holds && report.ok();
            all_pass &= pass;
            println!(
                "{} bds-bounds: pending {}/{}, latency {}/{}, epochs {}/{}",
                if pass { "PASS" } else { "FAIL" },
                report.max_pending,
                report.pending_bound,
                report.max_latency,
                report.latency_bound,
                report.max_epoch_length,
                report.epoch_bound
            );
        }
        Err(e) => {
            println!("FAIL bds-bounds: {e}");
            all_pass = false;
        }
    }
    // Admissibility self-check of the default generator.
    let config = RunConfig {
        s: 16,
        k: 4,
        b: 10,
        rho: Rate::new(15, 100),
        rounds: 2000,
        ..RunConfig::default()
    };
    let trace = config.generate_trace();
    let report = config.audit_trace(&trace);
    all_pass &= report.admissible;
    println!(
        "{} generator-admissibility: {} transactions within budget",
        if report.admissible { "PASS" } else { "FAIL" },
        trace.txn_count()
    );
    if all_pass {
        0
    } else {
        2
    }
}

fn cmd_check_adversary(args: &CheckArgs) -> Result<i32, String> {
    let rho: Rate = args.rho.parse().map_err(|e| format!("{e}"))?;
    let b: u64 = args.b.parse().map_err(|_| "bad b".to_string())?;
    let s: u32 = args.s.parse().map_err(|_| "bad s".to_string())?;
    let aps: u32 = args
        .accounts_per_shard
        .parse()
        .map_err(|_| "bad accounts_per_shard".to_string())?;
    let text = std::fs::read_to_string(&args.trace)
        .map_err(|e| format!("cannot read {}: {e}", args.trace.display()))?;
    let trace = InjectionTrace::from_text(&text).map_err(|e| e.to_string())?;
    let book = if aps == 1 {
        crate::model::AccountBook::one_per_shard(s)
    } else {
        crate::model::AccountBook::uniform(s, aps)
    };
    for (_, spec) in trace.iter() {
        if let Some(&account) = spec.accounts.iter().find(|a| book.owner(**a).is_none()) {
            return Err(format!(
                "trace references account {account}, unknown under s={s} with {aps} account(s) per shard"
            ));
        }
    }
    let report = crate::adversary::check_admissible(&trace, &book, s, rho, b);
    match report.violation {
        None => {
            println!(
                "admissible: {} transactions over {} rounds within rho={rho}, b={b}",
                trace.txn_count(),
                trace.max_round()
            );
            Ok(0)
        }
        Some(v) => {
            println!(
                "VIOLATION: shard {} carries {} transactions in rounds [{}, {}], budget {}",
                v.shard, v.congestion, v.from_round, v.to_round, v.budget
            );
            Ok(2)
        }
    }
}

/// Entry point; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Verify => Ok(cmd_verify()),
        Command::CheckAdversary(args) => cmd_check_adversary(args),
    };
    match result {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::execute;

    #[test]
    fn per_round_csv_has_header_for_empty_runs() {
        let mut config = RunConfig::default();
        config.rounds = 0;
        let out = execute(&config).unwrap();
        assert_eq!(
            per_round_csv(&out.metrics),
            "round,pending_total,in_flight,committed_cum,aborted_cum\n"
        );
    }

    #[test]
    fn csv_output_is_deterministic() {
        let mut config = RunConfig::default();
        config.s = 8;
        config.k = 3;
        config.b = 5;
        config.rho = Rate::new(1, 10);
        config.rounds = 400;
        let a = per_round_csv(&execute(&config).unwrap().metrics);
        let b = per_round_csv(&execute(&config).unwrap().metrics);
        assert_eq!(a, b);
        assert!(a.lines().count() == 401);
    }

    #[test]
    fn sweep_csv_schema() {
        let mut base = RunConfig::default();
        base.s = 4;
        base.k = 2;
        base.rounds = 60;
        base.b = 2;
        let rows = sweep(&base, &[Rate::new(1, 10), Rate::new(2, 10)], &[2], 2).unwrap();
        let csv = sweep_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("rho,b,avg_pending,avg_latency"));
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("1/10,2,"));
    }

    #[test]
    fn plots_are_valid_svg() {
        let mut base = RunConfig::default();
        base.s = 4;
        base.k = 2;
        base.rounds = 60;
        let rows = sweep(&base, &[Rate::new(1, 10)], &[2, 4], 2).unwrap();
        for svg in [plot_pending_svg(&rows), plot_latency_svg(&rows)] {
            assert!(svg.starts_with("<svg"));
            assert!(svg.trim_end().ends_with("</svg>"));
            assert!(svg.contains("b = 2") && svg.contains("b = 4"));
        }
    }
}
