//! Seeded benchmark runs over (policy × seed) matrices, per-round records,
//! summaries and plot data.
//!
//! Record files are JSON lines: a header object carrying the schema tag and
//! the effective run configuration, then one [`ExperimentRecord`] per
//! `(policy, seed, round)` in that order. Round 0 is the initial backup
//! evaluation. Summaries and plot data are CSV preceded by a `# schema=`
//! comment line.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::env::{stream_rng, Environment, Stream};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::optimizer::{normalized_performance, BetaSchedule, EtsoConfig, Optimizer, PolicyKind};
use crate::safe_set::Candidates;
use crate::scenario::{Prepared, Scenario};
use crate::trigger::TriggerConfig;

pub const RECORD_SCHEMA: &str = "etso-records/1";
pub const SUMMARY_SCHEMA: &str = "etso-summary/1";
pub const CURVE_SCHEMA: &str = "etso-curve/1";
pub const EVENTS_SCHEMA: &str = "etso-events/1";

/// Rounds averaged for the final-performance statistic.
pub const FINAL_WINDOW: u32 = 10;

/// Tunable run parameters; every field can be overridden with `key=value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    /// Rounds per run, `T`.
    pub horizon: u32,
    /// Learning rounds per epoch, `T_L`.
    pub learn_rounds: u32,
    pub epsilon: f64,
    pub beta: BetaSchedule,
    pub trigger: TriggerConfig,
    pub recompute_safe_set_in_exploit: bool,
    pub expander_candidates: Candidates,
    /// Fly the backup after a reset in the following round instead of as an
    /// extra evaluation within the triggering round.
    pub backup_requery_own_round: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            horizon: 60,
            learn_rounds: 15,
            epsilon: 0.2,
            beta: BetaSchedule::default(),
            trigger: TriggerConfig::default(),
            recompute_safe_set_in_exploit: false,
            expander_candidates: Candidates::Boundary,
            backup_requery_own_round: false,
        }
    }
}

impl RunSettings {
    /// Applies a dotted `key=value` override; the value is read as a TOML
    /// literal, or as a bare string if it is not one.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut doc = toml::Value::try_from(&*self).map_err(|e| Error::config(e.to_string()))?;
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = slot
                .as_table_mut()
                .and_then(|t| t.get_mut(part))
                .ok_or_else(|| Error::config(format!("unknown setting `{key}`")))?;
        }
        *slot = coerce(slot, value);
        *self = doc.try_into().map_err(|e: toml::de::Error| {
            Error::config(format!("override `{assignment}`: {}", e.message()))
        })?;
        Ok(())
    }

    pub fn etso_config(&self, scenario: &Scenario, execution: Execution) -> EtsoConfig {
        EtsoConfig {
            learn_rounds: self.learn_rounds,
            epsilon: self.epsilon,
            beta: self.beta,
            trigger: self.trigger.clone(),
            recompute_safe_set_in_exploit: self.recompute_safe_set_in_exploit,
            expander_candidates: self.expander_candidates,
            execution,
            ..scenario.etso_config()
        }
    }
}

/// Integers written where a float is expected are promoted.
fn coerce(old: &toml::Value, new: toml::Value) -> toml::Value {
    match (old, new) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Catalog id or scenario file path.
    pub scenario: String,
    #[serde(default = "all_policies")]
    pub policies: Vec<PolicyKind>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub settings: RunSettings,
}

fn all_policies() -> Vec<PolicyKind> {
    PolicyKind::ALL.to_vec()
}

/// Seeds `1..=20`.
pub fn default_seeds() -> Vec<u64> {
    (1..=20).collect()
}

impl RunConfig {
    pub fn new(scenario: impl Into<String>, policies: Vec<PolicyKind>, seeds: Vec<u64>) -> Self {
        RunConfig {
            scenario: scenario.into(),
            policies,
            seeds,
            settings: RunSettings::default(),
        }
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        let s = &self.settings;
        if s.learn_rounds < 2 || s.horizon < s.learn_rounds {
            return Err(Error::config(format!(
                "need T >= T_L >= 2, got T = {} and T_L = {}",
                s.horizon, s.learn_rounds
            )));
        }
        if s.horizon > scenario.horizon {
            return Err(Error::config(format!(
                "T = {} exceeds the scenario horizon {}",
                s.horizon, scenario.horizon
            )));
        }
        if let Some(tau) = scenario
            .change_rounds()
            .into_iter()
            .find(|&tau| tau <= s.learn_rounds)
        {
            return Err(Error::config(format!(
                "change at round {tau} falls inside the first {} learning rounds",
                s.learn_rounds
            )));
        }
        if self.seeds.is_empty() || self.policies.is_empty() {
            return Err(Error::config(
                "at least one seed and one policy are required",
            ));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::config("seeds must be distinct"));
        }
        if self.policies.iter().collect::<BTreeSet<_>>().len() != self.policies.len() {
            return Err(Error::config("policies must be distinct"));
        }
        s.etso_config(scenario, Execution::Sequential).validate()
    }
}

/// Parses `1..20` (inclusive), `3`, or comma-separated mixtures of both.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || Error::config(format!("bad seed list `{spec}`"));
        match part.split_once("..") {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                let b: u64 = b
                    .trim_start_matches('=')
                    .trim()
                    .parse()
                    .map_err(|_| bad())?;
                if b < a {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    if seeds.is_empty() {
        return Err(Error::config("empty seed list"));
    }
    Ok(seeds)
}

/// One round of one run. Field order is the serialized order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentRecord {
    pub scenario: String,
    pub policy: PolicyKind,
    pub seed: u64,
    pub round: u32,
    /// Rounds since the last reset when the query was chosen.
    pub t_prime: u32,
    /// Queried parameters in search coordinates.
    pub theta: Vec<f64>,
    pub noisy_cost: f64,
    pub true_cost: f64,
    pub crashed: bool,
    /// The query is the backup controller.
    pub backup: bool,
    /// The trigger fired on this round's observation.
    pub reset: bool,
    /// Noisy cost of the backup re-flight charged to this round.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requery_cost: Option<f64>,
    pub mode: usize,
    pub normalized_performance: f64,
    pub safe_set_size: usize,
    /// The query lay in the safe mask it was selected from. Backup
    /// flights outside the selection rule count as inside.
    pub in_safe_set: bool,
    /// Safety threshold in raw units.
    pub j_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub policy: PolicyKind,
    pub seed: u64,
    pub evaluations: u32,
    pub resets: u32,
    /// Set when the run stopped early, e.g. on an unsafe backup.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixResult {
    pub scenario: String,
    pub records: Vec<ExperimentRecord>,
    pub outcomes: Vec<RunOutcome>,
}

impl MatrixResult {
    /// Non-backup queries of `policy` that crashed.
    pub fn unsafe_queries(&self, policy: PolicyKind) -> usize {
        self.records
            .iter()
            .filter(|r| r.policy == policy && r.crashed && !r.backup)
            .count()
    }
}

/// Runs every (policy, seed) pair of `config`; runs are independent and
/// the output is sorted by (policy, seed, round) whatever the execution.
pub fn run_matrix(config: &RunConfig, execution: Execution) -> Result<MatrixResult> {
    let scenario = Scenario::resolve(&config.scenario)?;
    config.validate(&scenario)?;
    let etso = config
        .settings
        .etso_config(&scenario, Execution::Sequential);
    let prepared = scenario.prepare(&etso)?;
    let jobs: Vec<(PolicyKind, u64)> = config
        .policies
        .iter()
        .flat_map(|&p| config.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let runs = execution.map_slice(&jobs, |&(policy, seed)| {
        run_single(&scenario, &prepared, &config.settings, &etso, policy, seed)
    });
    let mut records = Vec::new();
    let mut outcomes = Vec::new();
    for run in runs {
        let (recs, outcome) = run?;
        records.extend(recs);
        outcomes.push(outcome);
    }
    records.sort_by_key(|r| (r.policy, r.seed, r.round));
    outcomes.sort_by_key(|o| (o.policy, o.seed));
    Ok(MatrixResult {
        scenario: scenario.id,
        records,
        outcomes,
    })
}

/// One seeded run. Setup failures are errors; an unsafe backup during the
/// run ends it early and is reported in the outcome.
pub fn run_single(
    scenario: &Scenario,
    prepared: &Prepared,
    settings: &RunSettings,
    etso: &EtsoConfig,
    policy: PolicyKind,
    seed: u64,
) -> Result<(Vec<ExperimentRecord>, RunOutcome)> {
    let env = prepared.environment(seed)?;
    let mut run = Run {
        scenario: &scenario.id,
        env: &env,
        policy,
        seed,
        records: Vec::with_capacity(settings.horizon as usize + 1),
        evaluations: 0,
        resets: 0,
        j_b0: 0.0,
    };
    let result = run.execute(settings, etso);
    let error = match result {
        Ok(()) => {
            let expected = settings.horizon
                + 1
                + if settings.backup_requery_own_round {
                    0
                } else {
                    run.resets
                };
            if run.evaluations != expected {
                return Err(Error::domain(format!(
                    "{policy} seed {seed}: {} evaluations, expected {expected}",
                    run.evaluations
                )));
            }
            None
        }
        Err(Error::BackupUnsafe(msg)) => Some(msg),
        Err(e) => return Err(e),
    };
    let outcome = RunOutcome {
        policy,
        seed,
        evaluations: run.evaluations,
        resets: run.resets,
        error,
    };
    Ok((run.records, outcome))
}

struct Run<'a> {
    scenario: &'a str,
    env: &'a Environment,
    policy: PolicyKind,
    seed: u64,
    records: Vec<ExperimentRecord>,
    evaluations: u32,
    resets: u32,
    j_b0: f64,
}

impl Run<'_> {
    fn evaluate(&mut self, round: u32, slot: u32, theta: &[f64]) -> Result<crate::env::Evaluation> {
        self.evaluations += 1;
        self.env.evaluate(
            round,
            theta,
            &mut stream_rng(self.seed, Stream::Noise, round, slot),
        )
    }

    fn execute(&mut self, settings: &RunSettings, etso: &EtsoConfig) -> Result<()> {
        let grid = crate::grid::GridDomain::new(etso.grid.clone())?;
        let (b, _) = grid.nearest(&etso.backup, &etso.kernel.lengthscales)?;
        let backup = grid.point(b).to_vec();
        let init = self.evaluate(0, 0, &backup)?;
        if init.crashed {
            return Err(Error::BackupUnsafe(format!(
                "backup crashed in the initial round of seed {}",
                self.seed
            )));
        }
        self.j_b0 = init.true_cost;
        let mut opt = Optimizer::initialize(etso.clone(), self.policy, init.noisy_cost)?;
        self.push(
            0,
            1,
            &backup,
            init,
            true,
            false,
            None,
            (1, true),
            opt.j_min_raw(),
        )?;

        let mut deferred = false;
        for round in 1..=settings.horizon {
            if deferred {
                deferred = false;
                let ev = self.evaluate(round, 0, &backup)?;
                let t_prime = opt.state().t_prime;
                opt.reset_commit(ev.noisy_cost)?;
                self.push(
                    round,
                    t_prime,
                    &backup,
                    ev,
                    true,
                    false,
                    None,
                    (1, true),
                    opt.j_min_raw(),
                )?;
                continue;
            }
            let t_prime = opt.state().t_prime;
            let j_min = opt.j_min_raw();
            let q = opt.next_query()?;
            let ev = self.evaluate(round, 0, &q.theta)?;
            opt.observe(ev.noisy_cost)?;
            let reset = opt.reset_pending();
            let mut requery = None;
            if reset {
                self.resets += 1;
                if settings.backup_requery_own_round && round < settings.horizon {
                    deferred = true;
                } else if settings.backup_requery_own_round {
                    opt.reset_commit(self.peek_backup(round, &backup)?)?;
                } else {
                    let b = self.evaluate(round, 1, &backup)?;
                    requery = Some(b.noisy_cost);
                    opt.reset_commit(b.noisy_cost)?;
                }
            }
            let is_backup = q.index == opt.backup_index();
            let safe = (q.safe_size, q.selected_in_safe_set);
            self.push(
                round, t_prime, &q.theta, ev, is_backup, reset, requery, safe, j_min,
            )?;
        }
        Ok(())
    }

    /// Backup cost used to close a reset on the last round when the
    /// re-flight would fall outside the horizon; not charged.
    fn peek_backup(&self, round: u32, backup: &[f64]) -> Result<f64> {
        Ok(self
            .env
            .evaluate(
                round,
                backup,
                &mut stream_rng(self.seed, Stream::Noise, round, 1),
            )?
            .noisy_cost)
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        round: u32,
        t_prime: u32,
        theta: &[f64],
        ev: crate::env::Evaluation,
        backup: bool,
        reset: bool,
        requery_cost: Option<f64>,
        (safe_set_size, in_safe_set): (usize, bool),
        j_min: f64,
    ) -> Result<()> {
        self.records.push(ExperimentRecord {
            scenario: self.scenario.to_string(),
            policy: self.policy,
            seed: self.seed,
            round,
            t_prime,
            theta: theta.to_vec(),
            noisy_cost: ev.noisy_cost,
            true_cost: ev.true_cost,
            crashed: ev.crashed,
            backup,
            reset,
            requery_cost,
            mode: ev.mode,
            normalized_performance: normalized_performance(self.j_b0, ev.true_cost)?,
            safe_set_size,
            in_safe_set,
            j_min,
        });
        Ok(())
    }
}

/// First line of a record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordHeader {
    pub schema: String,
    pub scenario: String,
    pub config: RunConfig,
}

pub fn write_records<W: Write>(
    mut out: W,
    config: &RunConfig,
    result: &MatrixResult,
) -> Result<()> {
    let header = RecordHeader {
        schema: RECORD_SCHEMA.to_string(),
        scenario: result.scenario.clone(),
        config: config.clone(),
    };
    let io = |e: std::io::Error| Error::Io {
        path: "<records>".into(),
        source: e,
    };
    writeln!(
        out,
        "{}",
        serde_json::to_string(&header).expect("header serializes")
    )
    .map_err(io)?;
    for r in &result.records {
        writeln!(
            out,
            "{}",
            serde_json::to_string(r).expect("record serializes")
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads one record file; any header other than the current schema, or a
/// line that is not a record, is a schema error.
pub fn read_records<R: BufRead>(input: R) -> Result<(RecordHeader, Vec<ExperimentRecord>)> {
    let mut lines = input.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::Schema("empty record file".into()))?;
    let first = first.map_err(|e| Error::Schema(e.to_string()))?;
    let header: RecordHeader = serde_json::from_str(&first)
        .map_err(|e| Error::Schema(format!("line 1: bad header: {e}")))?;
    if header.schema != RECORD_SCHEMA {
        return Err(Error::Schema(format!(
            "unsupported schema `{}`, expected `{RECORD_SCHEMA}`",
            header.schema
        )));
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::Schema(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let r: ExperimentRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Schema(format!("line {}: {e}", i + 1)))?;
        if r.scenario != header.scenario {
            return Err(Error::Schema(format!(
                "line {}: record for scenario `{}` in a `{}` file",
                i + 1,
                r.scenario,
                header.scenario
            )));
        }
        records.push(r);
    }
    Ok((header, records))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub policy: PolicyKind,
    pub metric: &'static str,
    /// Round for per-round metrics, empty for totals.
    pub round: Option<u32>,
    pub value: f64,
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per (scenario, policy) group in canonical order.
fn groups(
    records: &[ExperimentRecord],
) -> BTreeMap<(String, PolicyKind), BTreeMap<u64, Vec<&ExperimentRecord>>> {
    let mut g: BTreeMap<(String, PolicyKind), BTreeMap<u64, Vec<&ExperimentRecord>>> =
        BTreeMap::new();
    for r in records {
        g.entry((r.scenario.clone(), r.policy))
            .or_default()
            .entry(r.seed)
            .or_default()
            .push(r);
    }
    for seeds in g.values_mut() {
        for rs in seeds.values_mut() {
            rs.sort_by_key(|r| r.round);
        }
    }
    g
}

/// Long-format summary: per-round mean/std of the normalized performance,
/// crash and reset counts, reset-round histogram and the mean over the
/// last [`FINAL_WINDOW`] rounds.
pub fn summarize(records: &[ExperimentRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::Schema("no records to summarize".into()));
    }
    let mut rows = Vec::new();
    for ((scenario, policy), seeds) in groups(records) {
        let mut row = |metric, round, value| {
            rows.push(SummaryRow {
                scenario: scenario.clone(),
                policy,
                metric,
                round,
                value,
            })
        };
        let rounds: BTreeSet<u32> = seeds.values().flatten().map(|r| r.round).collect();
        for &t in &rounds {
            let xs: Vec<f64> = seeds
                .values()
                .flat_map(|rs| {
                    rs.iter()
                        .filter(|r| r.round == t)
                        .map(|r| r.normalized_performance)
                })
                .collect();
            let (m, s) = mean_std(&xs);
            row("perf_mean", Some(t), m);
            row("perf_std", Some(t), s);
        }
        let all = || seeds.values().flatten();
        row("seeds", None, seeds.len() as f64);
        row("crashes", None, all().filter(|r| r.crashed).count() as f64);
        row(
            "crash_seeds",
            None,
            seeds
                .values()
                .filter(|rs| rs.iter().any(|r| r.crashed))
                .count() as f64,
        );
        row("resets", None, all().filter(|r| r.reset).count() as f64);
        row(
            "reset_seeds",
            None,
            seeds
                .values()
                .filter(|rs| rs.iter().any(|r| r.reset))
                .count() as f64,
        );
        let finals: Vec<f64> = seeds
            .values()
            .map(|rs| {
                let last = rs.last().map(|r| r.round).unwrap_or(0);
                let tail: Vec<f64> = rs
                    .iter()
                    .filter(|r| r.round + FINAL_WINDOW > last)
                    .map(|r| r.normalized_performance)
                    .collect();
                mean_std(&tail).0
            })
            .collect();
        let (m, s) = mean_std(&finals);
        row("final_mean", None, m);
        row("final_std", None, s);
        let mut hist: BTreeMap<u32, usize> = BTreeMap::new();
        for r in all().filter(|r| r.reset) {
            *hist.entry(r.round).or_default() += 1;
        }
        for (t, n) in hist {
            row("reset_count", Some(t), n as f64);
        }
    }
    Ok(rows)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: "<csv>".into(),
            source,
        },
        other => Error::Schema(format!("{other:?}")),
    }
}

fn schema_line<W: Write>(out: &mut W, schema: &str) -> Result<()> {
    writeln!(out, "# schema={schema}").map_err(|source| Error::Io {
        path: "<csv>".into(),
        source,
    })
}

pub fn write_summary<W: Write>(mut out: W, rows: &[SummaryRow]) -> Result<()> {
    schema_line(&mut out, SUMMARY_SCHEMA)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "policy", "metric", "round", "value"])
        .map_err(csv_error)?;
    for r in rows {
        let round = r.round.map(|t| t.to_string()).unwrap_or_default();
        w.write_record([
            &r.scenario,
            r.policy.name(),
            r.metric,
            &round,
            &r.value.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<csv>".into(),
        source,
    })
}

/// Plot-ready tables for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub scenario: String,
    /// Header row then one row per round: `round, <policy>_mean, <policy>_std, ...`.
    pub curve: Vec<Vec<String>>,
    /// Header row then `policy, seed, round, event` rows.
    pub events: Vec<Vec<String>>,
}

pub fn plot_data(records: &[ExperimentRecord]) -> Result<Vec<PlotData>> {
    if records.is_empty() {
        return Err(Error::Schema("no records to export".into()));
    }
    let grouped = groups(records);
    let scenarios: BTreeSet<&String> = grouped.keys().map(|(s, _)| s).collect();
    let mut out = Vec::new();
    for scenario in scenarios {
        let policies: Vec<(&PolicyKind, &BTreeMap<u64, Vec<&ExperimentRecord>>)> = grouped
            .iter()
            .filter(|((s, _), _)| s == scenario)
            .map(|((_, p), v)| (p, v))
            .collect();
        let mut header = vec!["round".to_string()];
        for (p, _) in &policies {
            header.push(format!("{p}_mean"));
            header.push(format!("{p}_std"));
        }
        let rounds: BTreeSet<u32> = policies
            .iter()
            .flat_map(|(_, seeds)| seeds.values().flatten().map(|r| r.round))
            .collect();
        let mut curve = vec![header];
        for t in rounds {
            let mut row = vec![t.to_string()];
            for (_, seeds) in &policies {
                let xs: Vec<f64> = seeds
                    .values()
                    .flatten()
                    .filter(|r| r.round == t)
                    .map(|r| r.normalized_performance)
                    .collect();
                if xs.is_empty() {
                    row.extend([String::new(), String::new()]);
                } else {
                    let (m, s) = mean_std(&xs);
                    row.extend([m.to_string(), s.to_string()]);
                }
            }
            curve.push(row);
        }
        let mut events = vec![vec!["policy", "seed", "round", "event"]
            .into_iter()
            .map(String::from)
            .collect()];
        for (p, seeds) in &policies {
            for (seed, rs) in seeds.iter() {
                for r in rs {
                    for (flag, name) in [(r.reset, "reset"), (r.crashed, "crash")] {
                        if flag {
                            events.push(vec![
                                p.to_string(),
                                seed.to_string(),
                                r.round.to_string(),
                                name.into(),
                            ]);
                        }
                    }
                }
            }
        }
        out.push(PlotData {
            scenario: scenario.clone(),
            curve,
            events,
        });
    }
    Ok(out)
}

pub fn write_table<W: Write>(mut out: W, schema: &str, rows: &[Vec<String>]) -> Result<()> {
    schema_line(&mut out, schema)?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.write_record(r).map_err(csv_error)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<csv>".into(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("1..3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("5, 1..=2").unwrap(), vec![5, 1, 2]);
        assert!(parse_seeds("3..1").is_err());
        assert!(parse_seeds("x").is_err());
        assert!(parse_seeds("").is_err());
    }

    #[test]
    fn overrides_round_trip() {
        let mut s = RunSettings::default();
        s.apply_override("trigger.delta_b=0.05").unwrap();
        s.apply_override("trigger.scaling=unscaled").unwrap();
        s.apply_override("epsilon=1").unwrap();
        s.apply_override("learn_rounds = 10").unwrap();
        s.apply_override("backup_requery_own_round=true").unwrap();
        assert_eq!(s.trigger.delta_b, 0.05);
        assert_eq!(
            s.trigger.scaling,
            crate::trigger::ThresholdScaling::Unscaled
        );
        assert_eq!(s.epsilon, 1.0);
        assert_eq!(s.learn_rounds, 10);
        assert!(s.backup_requery_own_round);
        assert!(s.apply_override("trigger.nope=1").is_err());
        assert!(s.apply_override("learn_rounds=abc").is_err());
        assert!(s.apply_override("no_equals_sign").is_err());
    }

    #[test]
    fn single_seed_std_is_zero() {
        let (m, s) = mean_std(&[0.25]);
        assert_eq!((m, s), (0.25, 0.0));
    }
}
