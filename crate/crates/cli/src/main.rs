//! `lockdown`: spend indices, case rates and lockdown event studies from
//! card transaction data.

mod config;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use lockdown_core::estimator::CrVariant;
use lockdown_core::index::{parse_benchmark, write_index_csv, write_series_csv, SeriesFilter};
use lockdown_core::ingest::{GeoExclusion, RowError, SkippedEvent};
use lockdown_core::pipeline::{
    group_case_rates, group_indices, run_all, validate, write_results_long, write_table,
    ClusterKey, Dataset, DidReport,
};
use lockdown_core::synth::gen_scenario;
use lockdown_core::Error;
use serde::Serialize;

use config::{Overrides, RunConfig};

/// A failed command: the message for stderr and the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub const INPUT: u8 = 2;
    pub const ESTIMATION: u8 = 1;

    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: Self::INPUT,
            message: message.into(),
        }
    }

    pub fn estimation(message: impl Into<String>) -> Self {
        Self {
            code: Self::ESTIMATION,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::input(e.to_string())
        } else {
            Failure::estimation(e.to_string())
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "lockdown", version, about)]
struct Cli {
    /// TOML run configuration; flags override its keys.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory holding the input CSVs.
    #[arg(long, global = true, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Fail on the first malformed row instead of skipping it.
    #[arg(long, global = true)]
    strict: bool,
    /// Moving-average window in days.
    #[arg(long, global = true, value_parser = ["7", "14", "28"])]
    window: Option<String>,
    /// Index baseline, inclusive.
    #[arg(long, global = true, num_args = 2, value_names = ["START", "END"])]
    baseline: Option<Vec<NaiveDate>>,
    #[arg(long, global = true, value_name = "N")]
    pre_weeks: Option<u32>,
    #[arg(long, global = true, value_name = "N")]
    post_weeks: Option<u32>,
    /// Small-sample correction of the cluster-robust covariance.
    #[arg(long, global = true, value_parser = ["cr0", "cr1"])]
    cr: Option<String>,
    /// Clustering unit of the event-study panel.
    #[arg(long, global = true, value_parser = ["group", "authority"])]
    cluster_key: Option<String>,
    /// Scenario seed for `synth`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Spend index per locality group, filter and window.
    Index,
    /// Smoothed case rate per locality group.
    Cases,
    /// Static and dynamic event studies for every scheduled lockdown.
    Did,
    /// Correlate monthly spend growth with a benchmark series.
    Validate,
    /// Generate a synthetic dataset with known effects.
    Synth,
}

impl Cli {
    fn overrides(&self) -> Result<Overrides, Failure> {
        Ok(Overrides {
            data: self.data.clone(),
            out: self.out.clone(),
            strict: self.strict,
            window: self
                .window
                .as_deref()
                .map(|w| w.parse().expect("validated")),
            baseline: self.baseline.clone(),
            pre_weeks: self.pre_weeks,
            post_weeks: self.post_weeks,
            cr: self
                .cr
                .as_deref()
                .map(str::parse::<CrVariant>)
                .transpose()?,
            cluster_key: self
                .cluster_key
                .as_deref()
                .map(str::parse::<ClusterKey>)
                .transpose()?,
            seed: self.seed,
        })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// File-name safe form of a group, event or filter label.
fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Serialize)]
struct IngestReport<'a> {
    kept: usize,
    dropped: &'a BTreeMap<lockdown_core::ingest::DropReason, usize>,
    geo_excluded: &'a BTreeMap<GeoExclusion, usize>,
    skipped_events: &'a [SkippedEvent],
    malformed_rows: BTreeMap<&'a str, usize>,
}

/// Loads the inputs and writes the ingest report plus one JSON-lines error
/// file per input with malformed rows.
fn load(cfg: &RunConfig) -> Result<Dataset, Failure> {
    for path in [
        &cfg.inputs.transactions,
        &cfg.inputs.cases,
        &cfg.inputs.lockdowns,
        &cfg.inputs.population,
        &cfg.inputs.geo_lookup,
    ] {
        if !path.is_file() {
            return Err(Failure::input(format!(
                "input file not found: {}",
                path.display()
            )));
        }
    }
    let data = Dataset::load(&cfg.inputs, &cfg.load).map_err(|e| Failure::input(e.to_string()))?;
    let report = IngestReport {
        kept: data.filter_report.kept,
        dropped: &data.filter_report.dropped,
        geo_excluded: &data.geo_excluded,
        skipped_events: &data.pairs.skipped,
        malformed_rows: data
            .row_errors
            .iter()
            .map(|(f, e)| (f.as_str(), e.len()))
            .collect(),
    };
    write_json(&cfg.out.join("ingest_report.json"), &report)?;
    for (file, errors) in &data.row_errors {
        write_row_errors(
            &cfg.out.join("errors").join(format!("{file}.jsonl")),
            errors,
        )?;
        eprintln!("warning: skipped {} malformed rows in {file}", errors.len());
    }
    Ok(data)
}

fn write_row_errors(path: &Path, errors: &[RowError]) -> Result<(), Failure> {
    let mut w = create(path)?;
    for e in errors {
        let line = serde_json::to_string(e).map_err(Error::from)?;
        writeln!(w, "{line}").map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    }
    w.flush()
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn cmd_index(cfg: &RunConfig) -> Result<(), Failure> {
    let data = load(cfg)?;
    let indices = group_indices(
        &data,
        &cfg.filters,
        &cfg.index_windows,
        cfg.analysis.baseline,
    )?;
    let dir = cfg.out.join("index");
    for ix in &indices {
        let filter = SeriesFilter {
            category: ix.meta.category.clone(),
            channel: ix.meta.channel,
        };
        let stem = format!(
            "{}__{}__k{}",
            slug(&ix.meta.geography),
            slug(&filter.label()),
            ix.meta.window_days
        );
        write_index_csv(create(&dir.join(format!("{stem}.csv")))?, ix)?;
        write_json(&dir.join(format!("{stem}.json")), &ix.meta)?;
    }
    println!("wrote {} index series to {}", indices.len(), dir.display());
    Ok(())
}

#[derive(Serialize)]
struct CaseMeta<'a> {
    geography: &'a str,
    population: u64,
    window_days: u32,
}

fn cmd_cases(cfg: &RunConfig) -> Result<(), Failure> {
    let data = load(cfg)?;
    let rates = group_case_rates(&data, &cfg.analysis)?;
    let dir = cfg.out.join("cases");
    let mut missing = Vec::new();
    for (series, gaps) in &rates {
        let stem = format!("{}__k{}", slug(&series.group), series.window_days);
        write_series_csv(
            create(&dir.join(format!("{stem}.csv")))?,
            "rate",
            &series.values,
        )?;
        write_json(
            &dir.join(format!("{stem}.json")),
            &CaseMeta {
                geography: &series.group,
                population: series.population,
                window_days: series.window_days,
            },
        )?;
        missing.extend(gaps.iter().cloned());
    }
    if !missing.is_empty() {
        missing.sort_by(|a, b| (&a.authority, a.date).cmp(&(&b.authority, b.date)));
        missing.dedup();
        write_json(&dir.join("missing_days.json"), &missing)?;
        eprintln!(
            "warning: {} authority-days without case data counted as zero",
            missing.len()
        );
    }
    println!(
        "wrote {} case rate series to {}",
        rates.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_did(cfg: &RunConfig) -> Result<(), Failure> {
    let data = load(cfg)?;
    if data.pairs.pairs.is_empty() {
        return Err(Failure::input("the lockdown schedule has no usable events"));
    }
    let results = run_all(&data, &cfg.outcomes, &cfg.specs, &cfg.analysis);
    let dir = cfg.out.join("did");
    let fingerprint = cfg.analysis.fingerprint();
    let mut failures = Vec::new();
    let mut ok: Vec<&DidReport> = Vec::new();
    for (job, result) in &results {
        let event = &data.pairs.pairs[job.event].event;
        match result {
            Ok(r) => {
                let name = format!("{}__{}__{}.json", slug(event), job.outcome, job.spec);
                write_json(&dir.join(name), r)?;
                ok.push(r);
            }
            Err(e) => failures.push((format!("{event} {} {}", job.outcome, job.spec), e)),
        }
    }
    for &outcome in &cfg.outcomes {
        for &spec in &cfg.specs {
            let reports: Vec<&DidReport> = ok
                .iter()
                .copied()
                .filter(|r| r.outcome == outcome && r.spec == spec)
                .collect();
            if reports.is_empty() {
                continue;
            }
            let path = dir.join(format!("table__{outcome}__{spec}.csv"));
            write_table(create(&path)?, &reports, &fingerprint)?;
            println!("{outcome} {spec}: {}", path.display());
        }
    }
    write_results_long(create(&dir.join("results_long.csv"))?, &ok)?;
    if failures.is_empty() {
        return Ok(());
    }
    let code = if failures.iter().all(|(_, e)| e.is_input_error()) {
        Failure::INPUT
    } else {
        Failure::ESTIMATION
    };
    let message = failures
        .iter()
        .map(|(job, e)| format!("{job}: {e}"))
        .collect::<Vec<_>>()
        .join("\n");
    Err(Failure { code, message })
}

fn cmd_validate(cfg: &RunConfig) -> Result<(), Failure> {
    let bench_path = cfg.inputs.benchmark.as_ref().expect("always set");
    let bench_file = File::open(bench_path)
        .map_err(|e| Failure::input(format!("{}: {e}", bench_path.display())))?;
    let benchmark = parse_benchmark(bench_file)
        .map_err(|e| Failure::input(format!("{}: {e}", bench_path.display())))?;
    let data = load(cfg)?;
    let report = validate(&data, &benchmark, &cfg.validate_windows)
        .map_err(|e| Failure::estimation(e.to_string()))?;
    for w in &report {
        println!(
            "{}..{}  months={}  r={:.6}",
            w.start, w.end, w.n_months, w.correlation
        );
    }
    write_json(&cfg.out.join("validate").join("correlation.json"), &report)
}

fn cmd_synth(cfg: &RunConfig) -> Result<(), Failure> {
    let mut scenario = cfg.scenario.clone();
    if let Some(seed) = cfg.seed {
        scenario.seed = seed;
    }
    let s = gen_scenario(&scenario).map_err(|e| Failure::input(e.to_string()))?;
    s.write_to(&cfg.out)?;
    println!(
        "wrote {} transactions for {} authorities to {} (seed {}, config {})",
        s.transactions.len(),
        s.authorities.len(),
        cfg.out.display(),
        s.ground_truth.seed,
        s.ground_truth.config_hash
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = RunConfig::load(cli.config.as_deref(), cli.overrides()?)?;
    match cli.command {
        Command::Index => cmd_index(&cfg),
        Command::Cases => cmd_cases(&cfg),
        Command::Did => cmd_did(&cfg),
        Command::Validate => cmd_validate(&cfg),
        Command::Synth => cmd_synth(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
