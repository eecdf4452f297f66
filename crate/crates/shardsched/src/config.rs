//! Run configuration: defaults, flat `key = value` config files, flag
//! overrides, validation, and assembly of a full simulation run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::adversary::{
    check_admissible, token_bucket_generator, AdversaryParams, InjectionStrategy, InjectionTrace,
};
use crate::bds::BdsScheduler;
use crate::cluster::ClusterHierarchy;
use crate::engine::{run_simulation, RunOutput, SimParams};
use crate::fds::{epoch_base, FdsScheduler};
use crate::model::AccountBook;
use crate::rate::Rate;
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerKind {
    Bds,
    Fds,
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedulerKind::Bds => write!(f, "bds"),
            SchedulerKind::Fds => write!(f, "fds"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopologySpec {
    Uniform,
    Line,
    File(String),
}

impl fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologySpec::Uniform => write!(f, "uniform"),
            TopologySpec::Line => write!(f, "line"),
            TopologySpec::File(p) => write!(f, "file:{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    UniformRandom,
    SingleEpochBurst,
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyKind::UniformRandom => write!(f, "uniform_random"),
            StrategyKind::SingleEpochBurst => write!(f, "single_epoch_burst"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scheduler: SchedulerKind,
    pub topology: TopologySpec,
    pub s: u32,
    pub k: u32,
    pub rho: Rate,
    pub b: u64,
    pub rounds: u64,
    pub seed: u64,
    pub strategy: StrategyKind,
    /// Epoch-length constant: `E0 = c * ceil(log2 s)`.
    pub c: u64,
    /// Latency-bound constant used by the stability checker.
    pub c1: u64,
    pub retry_aborts: bool,
    /// Which base-epoch window receives the burst (strategy
    /// single_epoch_burst): the burst lands at round `burst_epoch*E0 + 1`.
    pub burst_epoch: u64,
    /// Extra transactions released in the burst window; defaults to `b`.
    pub burst_txns: Option<u64>,
    pub fail_prob: f64,
    pub accounts_per_shard: u32,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            scheduler: SchedulerKind::Bds,
            topology: TopologySpec::Uniform,
            s: 64,
            k: 8,
            rho: Rate::new(5, 100),
            b: 1000,
            rounds: 25000,
            seed: 1,
            strategy: StrategyKind::SingleEpochBurst,
            c: 4,
            c1: 4,
            retry_aborts: false,
            burst_epoch: 1,
            burst_txns: None,
            fail_prob: 0.0,
            accounts_per_shard: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {0}: expected `key = value`, got `{1}`")]
    Syntax(usize, String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Topology(#[from] crate::topology::TopologyError),
    #[error(transparent)]
    Cluster(#[from] crate::cluster::ClusterError),
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
    #[error(transparent)]
    Trace(#[from] crate::adversary::TraceError),
}

impl RunConfig {
    /// Applies one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: &str| ConfigError::BadValue {
            key: key.to_string(),
            reason: reason.to_string(),
        };
        match key {
            "scheduler" => {
                self.scheduler = match value {
                    "bds" => SchedulerKind::Bds,
                    "fds" => SchedulerKind::Fds,
                    _ => return Err(bad("expected bds or fds")),
                }
            }
            "topology" => {
                self.topology = match value {
                    "uniform" => TopologySpec::Uniform,
                    "line" => TopologySpec::Line,
                    v if v.starts_with("file:") => TopologySpec::File(v[5..].to_string()),
                    _ => return Err(bad("expected uniform, line, or file:<path>")),
                }
            }
            "s" => self.s = value.parse().map_err(|_| bad("expected an integer"))?,
            "k" => self.k = value.parse().map_err(|_| bad("expected an integer"))?,
            "rho" => self.rho = value.parse().map_err(|_| bad("expected a decimal or fraction"))?,
            "b" => self.b = value.parse().map_err(|_| bad("expected an integer"))?,
            "rounds" => self.rounds = value.parse().map_err(|_| bad("expected an integer"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("expected an integer"))?,
            "strategy" => {
                self.strategy = match value {
                    "uniform_random" => StrategyKind::UniformRandom,
                    "single_epoch_burst" => StrategyKind::SingleEpochBurst,
                    _ => return Err(bad("expected uniform_random or single_epoch_burst")),
                }
            }
            "c" => self.c = value.parse().map_err(|_| bad("expected an integer"))?,
            "c1" => self.c1 = value.parse().map_err(|_| bad("expected an integer"))?,
            "retry_aborts" => {
                self.retry_aborts = value.parse().map_err(|_| bad("expected true or false"))?
            }
            "burst_epoch" => {
                self.burst_epoch = value.parse().map_err(|_| bad("expected an integer"))?
            }
            "burst_txns" => {
                self.burst_txns = Some(value.parse().map_err(|_| bad("expected an integer"))?)
            }
            "fail_prob" => {
                self.fail_prob = value.parse().map_err(|_| bad("expected a probability"))?
            }
            "accounts_per_shard" => {
                self.accounts_per_shard = value.parse().map_err(|_| bad("expected an integer"))?
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Parses the flat `key = value` format; `#` starts a comment.
    pub fn from_text(text: &str) -> Result<RunConfig, ConfigError> {
        let mut config = RunConfig::default();
        config.merge_text(text)?;
        Ok(config)
    }

    pub fn merge_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax(lineno + 1, raw.to_string()))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        RunConfig::from_text(&text)
    }

    /// Serializes every field; `from_text(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut fields: Vec<(&str, String)> = vec![
            ("scheduler", self.scheduler.to_string()),
            ("topology", self.topology.to_string()),
            ("s", self.s.to_string()),
            ("k", self.k.to_string()),
            ("rho", self.rho.to_string()),
            ("b", self.b.to_string()),
            ("rounds", self.rounds.to_string()),
            ("seed", self.seed.to_string()),
            ("strategy", self.strategy.to_string()),
            ("c", self.c.to_string()),
            ("c1", self.c1.to_string()),
            ("retry_aborts", self.retry_aborts.to_string()),
            ("burst_epoch", self.burst_epoch.to_string()),
            ("fail_prob", self.fail_prob.to_string()),
            ("accounts_per_shard", self.accounts_per_shard.to_string()),
        ];
        if let Some(bt) = self.burst_txns {
            fields.push(("burst_txns", bt.to_string()));
        }
        fields
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.s < 1 {
            return Err(ConfigError::Invalid("s must be at least 1".into()));
        }
        if self.k < 1 || self.k > self.s {
            return Err(ConfigError::Invalid(format!(
                "k must lie in 1..={}, got {}",
                self.s, self.k
            )));
        }
        if self.rho > Rate::ONE {
            return Err(ConfigError::Invalid(
                "rho above 1 cannot be stable for any scheduler".into(),
            ));
        }
        if self.b < 1 {
            return Err(ConfigError::Invalid("b must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.fail_prob) {
            return Err(ConfigError::Invalid("fail_prob must lie in [0, 1)".into()));
        }
        if self.accounts_per_shard < 1 {
            return Err(ConfigError::Invalid(
                "accounts_per_shard must be at least 1".into(),
            ));
        }
        if self.scheduler == SchedulerKind::Bds {
            // File-loaded topologies are checked for uniformity when the
            // scheduler is built.
            if self.topology == TopologySpec::Line && self.s > 1 {
                return Err(ConfigError::Invalid(
                    "the bds scheduler requires the uniform topology".into(),
                ));
            }
            if self.accounts_per_shard != 1 {
                return Err(ConfigError::Invalid(
                    "the bds scheduler requires one account per shard".into(),
                ));
            }
        }
        if self.c < 1 {
            return Err(ConfigError::Invalid("c must be at least 1".into()));
        }
        Ok(())
    }

    pub fn build_topology(&self) -> Result<Topology, ConfigError> {
        Ok(match &self.topology {
            TopologySpec::Uniform => Topology::uniform(self.s)?,
            TopologySpec::Line => Topology::line(self.s)?,
            TopologySpec::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                let t = Topology::from_text(&text)?;
                if t.shards() != self.s {
                    return Err(ConfigError::Invalid(format!(
                        "topology file has {} shards but s = {}",
                        t.shards(),
                        self.s
                    )));
                }
                t
            }
        })
    }

    pub fn build_book(&self) -> AccountBook {
        if self.accounts_per_shard == 1 {
            AccountBook::one_per_shard(self.s)
        } else {
            AccountBook::uniform(self.s, self.accounts_per_shard)
        }
    }

    /// Round at which the burst strategy releases its extra transactions.
    pub fn burst_round(&self) -> u64 {
        self.burst_epoch * epoch_base(self.c, self.s) + 1
    }

    pub fn injection_strategy(&self) -> InjectionStrategy {
        match self.strategy {
            StrategyKind::UniformRandom => InjectionStrategy::UniformRandom,
            StrategyKind::SingleEpochBurst => InjectionStrategy::SingleEpochBurst {
                burst_round: self.burst_round(),
                burst_txns: self.burst_txns.unwrap_or(self.b),
            },
        }
    }

    pub fn generate_trace(&self) -> InjectionTrace {
        let params = AdversaryParams {
            rho: self.rho,
            b: self.b,
            k: self.k,
            seed: self.seed,
        };
        token_bucket_generator(
            &params,
            &self.build_book(),
            self.s,
            self.rounds,
            self.injection_strategy(),
        )
    }

    /// Audits a trace against this configuration's (rho, b).
    pub fn audit_trace(&self, trace: &InjectionTrace) -> crate::adversary::AdmissibilityReport {
        check_admissible(trace, &self.build_book(), self.s, self.rho, self.b)
    }
}

/// Runs the configured simulation over the given trace.
pub fn execute_with_trace(
    config: &RunConfig,
    trace: &InjectionTrace,
) -> Result<RunOutput, ConfigError> {
    config.validate()?;
    let topology = config.build_topology()?;
    let params = SimParams {
        book: config.build_book(),
        rounds: config.rounds,
        seed: config.seed,
        fail_prob: config.fail_prob,
        topology: topology.clone(),
    };
    let out = match config.scheduler {
        SchedulerKind::Bds => {
            let scheduler = BdsScheduler::new(&topology, config.retry_aborts)?;
            run_simulation(params, trace, Box::new(scheduler))?
        }
        SchedulerKind::Fds => {
            let hierarchy = ClusterHierarchy::build(&topology)?;
            let scheduler = FdsScheduler::new(
                hierarchy,
                epoch_base(config.c, config.s),
                config.retry_aborts,
            )?;
            run_simulation(params, trace, Box::new(scheduler))?
        }
    };
    Ok(out)
}

/// Generates the trace for the config and runs it.
pub fn execute(config: &RunConfig) -> Result<RunOutput, ConfigError> {
    config.validate()?;
    let trace = config.generate_trace();
    execute_with_trace(config, &trace)
}

/// Parses a sweep list: comma values (`0.1,0.2`) or an inclusive range
/// with optional step (`0.05..0.30` or `0.05..0.30:0.05`).
pub fn parse_rate_list(text: &str) -> Result<Vec<Rate>, ConfigError> {
    let bad = |reason: String| ConfigError::BadValue {
        key: "rho".into(),
        reason,
    };
    if let Some((range, step)) = split_range(text) {
        let (lo, hi) = range;
        let step: Rate = match step {
            Some(s) => s.parse().map_err(|e| bad(format!("{e}")))?,
            None => Rate::new(5, 100),
        };
        if step.is_zero() {
            return Err(bad("step must be positive".into()));
        }
        let mut out = Vec::new();
        let mut cur = lo;
        while cur <= hi {
            out.push(cur);
            cur = cur
                .checked_add(step)
                .ok_or_else(|| bad("range overflow".into()))?;
        }
        if out.is_empty() {
            return Err(bad("empty range".into()));
        }
        return Ok(out);
    }
    text.split(',')
        .map(|v| v.trim().parse().map_err(|e| bad(format!("{e}"))))
        .collect()
}

fn split_range(text: &str) -> Option<((Rate, Rate), Option<&str>)> {
    let (lo, rest) = text.split_once("..")?;
    let (hi, step) = match rest.split_once(':') {
        Some((hi, step)) => (hi, Some(step)),
        None => (rest, None),
    };
    Some(((lo.trim().parse().ok()?, hi.trim().parse().ok()?), step))
}

pub fn parse_u64_list(key: &str, text: &str) -> Result<Vec<u64>, ConfigError> {
    text.split(',')
        .map(|v| {
            v.trim().parse().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                reason: format!("bad integer `{v}`"),
            })
        })
        .collect()
}

/// Sweep results in configuration order.
pub struct SweepRow {
    pub rho: Rate,
    pub b: u64,
    pub summary: crate::metrics::Summary,
}

/// Runs the cartesian product of `rhos` x `bs` over worker threads;
/// results are returned in input order regardless of completion order.
pub fn sweep(
    base: &RunConfig,
    rhos: &[Rate],
    bs: &[u64],
    workers: usize,
) -> Result<Vec<SweepRow>, ConfigError> {
    let mut configs = Vec::new();
    for &b in bs {
        for &rho in rhos {
            let mut config = base.clone();
            config.rho = rho;
            config.b = b;
            config.validate()?;
            configs.push(config);
        }
    }
    let workers = workers.max(1).min(configs.len().max(1));
    let mut rows: BTreeMap<usize, SweepRow> = BTreeMap::new();
    let results: Vec<(usize, Result<SweepRow, ConfigError>)> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers {
            let configs = &configs;
            handles.push(scope.spawn(move || {
                let mut out = Vec::new();
                let mut i = w;
                while i < configs.len() {
                    let config = &configs[i];
                    let row = execute(config).map(|run| SweepRow {
                        rho: config.rho,
                        b: config.b,
                        summary: crate::metrics::summarize(&run.metrics),
                    });
                    out.push((i, row));
                    i += workers;
                }
                out
            }));
        }
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    for (i, row) in results {
        rows.insert(i, row?);
    }
    Ok(rows.into_values().collect())
}
