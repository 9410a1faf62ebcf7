//! End-to-end runs over a loaded dataset: group indices, case rates and
//! event-study estimations, plus the table layouts written by the CLI.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::dates::{DateSpan, YearMonth};
use crate::epi::{case_rate_for, CaseRateSeries, MissingCaseDay};
use crate::error::{Error, Result};
use crate::estimator::{
    build_panel, estimate, week_bucket, Coefficient, CrVariant, Specification, UnitSeries,
};
use crate::index::{
    correlate_growth, date_fmt, default_baseline, index_from_daily, monthly_totals,
    monthly_yoy_growth, required_daily_span, DailySeries, IndexSeries, IndexSpec, MonthWindow,
    RealSeries, Series, SeriesFilter, WindowCorrelation, WindowDays,
};
use crate::ingest::{
    self, build_locality_groups, filter_transactions, resolve_geography, CaseRecord, EventPair,
    FilterReport, FilterRules, GeoBasis, GeoExclusion, GeoLookup, LocalityPairs, LockdownEvent,
    ParseConfig, PopulationTable, RowError, TaggedTransaction, Transaction,
};

pub const TRANSACTIONS_FILE: &str = "transactions.csv";
pub const CASES_FILE: &str = "cases.csv";
pub const LOCKDOWNS_FILE: &str = "lockdowns.csv";
pub const POPULATION_FILE: &str = "population.csv";
pub const GEO_LOOKUP_FILE: &str = "geo_lookup.csv";
pub const BENCHMARK_FILE: &str = "benchmark.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputPaths {
    pub transactions: PathBuf,
    pub cases: PathBuf,
    pub lockdowns: PathBuf,
    pub population: PathBuf,
    pub geo_lookup: PathBuf,
    pub benchmark: Option<PathBuf>,
}

impl InputPaths {
    /// Standard file names inside one directory.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            transactions: dir.join(TRANSACTIONS_FILE),
            cases: dir.join(CASES_FILE),
            lockdowns: dir.join(LOCKDOWNS_FILE),
            population: dir.join(POPULATION_FILE),
            geo_lookup: dir.join(GEO_LOOKUP_FILE),
            benchmark: Some(dir.join(BENCHMARK_FILE)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    SpendIndex,
    CaseRate,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::SpendIndex => "spend_index",
            Outcome::CaseRate => "case_rate",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spend_index" => Ok(Outcome::SpendIndex),
            "case_rate" => Ok(Outcome::CaseRate),
            other => Err(Error::invalid(format!("unknown outcome `{other}`"))),
        }
    }
}

/// Level at which observations are clustered. `Authority` also splits the
/// panel into one unit per member authority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterKey {
    #[default]
    Group,
    Authority,
}

impl ClusterKey {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClusterKey::Group => "group",
            ClusterKey::Authority => "authority",
        }
    }
}

impl fmt::Display for ClusterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClusterKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "group" => Ok(ClusterKey::Group),
            "authority" => Ok(ClusterKey::Authority),
            other => Err(Error::invalid(format!("unknown cluster key `{other}`"))),
        }
    }
}

/// Parses a series filter label: `all`, `offline`, `online`, or either
/// channel (or `all`) followed by `:category`.
pub fn parse_filter(label: &str) -> Result<SeriesFilter> {
    let (channel, category) = match label.split_once(':') {
        Some((c, cat)) if !cat.is_empty() => (c, Some(cat.to_string())),
        Some(_) => {
            return Err(Error::invalid(format!(
                "empty category in filter `{label}`"
            )))
        }
        None => (label, None),
    };
    let channel = match channel {
        "all" => None,
        c => Some(c.parse()?),
    };
    Ok(SeriesFilter { category, channel })
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub strict: bool,
    pub basis: GeoBasis,
    pub rules: FilterRules,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            strict: false,
            basis: GeoBasis::Cardholder,
            rules: FilterRules::default(),
        }
    }
}

/// Filtered, geo-tagged inputs ready for analysis.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub transactions: Vec<TaggedTransaction>,
    pub cases: Vec<CaseRecord>,
    pub schedule: Vec<LockdownEvent>,
    pub population: PopulationTable,
    pub lookup: GeoLookup,
    pub pairs: LocalityPairs,
    pub filter_report: FilterReport,
    pub geo_excluded: BTreeMap<GeoExclusion, usize>,
    /// Malformed rows by input file name.
    pub row_errors: BTreeMap<String, Vec<RowError>>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Prefixes a parse error with the file it came from.
fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Io { .. } => e,
        other => Error::Invalid(format!("{}: {other}", path.display())),
    }
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

impl Dataset {
    pub fn load(paths: &InputPaths, options: &LoadOptions) -> Result<Self> {
        let config = ParseConfig {
            strict: options.strict,
            window: None,
        };
        let mut row_errors = BTreeMap::new();
        let mut keep_errors = |path: &Path, errors: Vec<RowError>| {
            if !errors.is_empty() {
                row_errors.insert(file_label(path), errors);
            }
        };
        let txns = ingest::parse_transactions(open(&paths.transactions)?, &config)
            .map_err(|e| in_file(&paths.transactions, e))?;
        keep_errors(&paths.transactions, txns.errors);
        let cases = ingest::parse_cases(open(&paths.cases)?, &config)
            .map_err(|e| in_file(&paths.cases, e))?;
        keep_errors(&paths.cases, cases.errors);
        let schedule = ingest::parse_lockdowns(open(&paths.lockdowns)?, &config)
            .map_err(|e| in_file(&paths.lockdowns, e))?;
        keep_errors(&paths.lockdowns, schedule.errors);
        let population = ingest::parse_population(open(&paths.population)?, &config)
            .map_err(|e| in_file(&paths.population, e))?;
        let sectors = ingest::parse_geo_lookup(open(&paths.geo_lookup)?, &config)
            .map_err(|e| in_file(&paths.geo_lookup, e))?;
        keep_errors(&paths.geo_lookup, sectors.errors);

        let mut data = Self::from_records(
            txns.records,
            cases.records,
            schedule.records,
            population,
            sectors.records,
            options,
        )?;
        data.row_errors = row_errors;
        Ok(data)
    }

    pub fn from_records(
        transactions: Vec<Transaction>,
        cases: Vec<CaseRecord>,
        schedule: Vec<LockdownEvent>,
        population: PopulationTable,
        sectors: Vec<(String, String)>,
        options: &LoadOptions,
    ) -> Result<Self> {
        let pairs = build_locality_groups(&schedule, &population)?;
        let lookup = GeoLookup::new(sectors, &population);
        let (kept, filter_report) = filter_transactions(transactions, &options.rules);
        let resolved = resolve_geography(kept, &lookup, options.basis);
        let mut geo_excluded = BTreeMap::new();
        for e in &resolved.excluded {
            *geo_excluded.entry(e.reason).or_insert(0) += 1;
        }
        Ok(Self {
            transactions: resolved.tagged,
            cases,
            schedule,
            population,
            lookup,
            pairs,
            filter_report,
            geo_excluded,
            row_errors: BTreeMap::new(),
        })
    }

    /// First and last transaction date.
    pub fn transaction_span(&self) -> Option<DateSpan> {
        let mut dates = self.transactions.iter().map(|t| t.txn.date);
        let first = dates.next()?;
        let (lo, hi) = dates.fold((first, first), |(lo, hi), d| (lo.min(d), hi.max(d)));
        Some(DateSpan { start: lo, end: hi })
    }

    pub fn case_span(&self) -> Option<DateSpan> {
        let lo = self.cases.iter().map(|c| c.date).min()?;
        let hi = self.cases.iter().map(|c| c.date).max()?;
        Some(DateSpan { start: lo, end: hi })
    }

    /// Daily totals per authority in one pass over the transactions.
    pub fn authority_daily(
        &self,
        filter: &SeriesFilter,
        span: DateSpan,
    ) -> HashMap<&str, Vec<u64>> {
        let mut out: HashMap<&str, Vec<u64>> = HashMap::new();
        for t in &self.transactions {
            if let Some(i) = span.offset(t.txn.date) {
                if filter.matches(&t.txn) {
                    out.entry(t.authority.as_str())
                        .or_insert_with(|| vec![0; span.len()])[i] += t.txn.amount_pence;
                }
            }
        }
        out
    }

    fn authority_population(&self, a: &str) -> Result<u64> {
        self.population
            .get(a)
            .map(|e| e.population_2019)
            .ok_or_else(|| Error::UnknownAuthority(a.to_string()))
    }

    /// All distinct locality groups of the estimable events.
    pub fn groups(&self) -> Vec<&ingest::LocalityGroup> {
        let mut seen = BTreeSet::new();
        self.pairs
            .pairs
            .iter()
            .flat_map(|p| [&p.treatment, &p.control])
            .filter(|g| seen.insert(g.name.clone()))
            .collect()
    }
}

fn sum_daily(
    daily: &HashMap<&str, Vec<u64>>,
    authorities: &BTreeSet<String>,
    len: usize,
) -> Vec<u64> {
    let mut out = vec![0u64; len];
    for a in authorities {
        if let Some(v) = daily.get(a.as_str()) {
            for (acc, x) in out.iter_mut().zip(v) {
                *acc += x;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub window: WindowDays,
    pub baseline: DateSpan,
    pub pre_weeks: u32,
    pub post_weeks: u32,
    pub cr: CrVariant,
    pub cluster_key: ClusterKey,
    /// Transactions entering the spend-index outcome.
    pub filter: SeriesFilter,
    /// Zero-fill missing authority-days of case data instead of failing.
    pub lenient_cases: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            window: WindowDays::SEVEN,
            baseline: default_baseline(),
            pre_weeks: 4,
            post_weeks: 4,
            cr: CrVariant::Cr1,
            cluster_key: ClusterKey::Group,
            filter: SeriesFilter::offline(),
            lenient_cases: false,
        }
    }
}

impl AnalysisOptions {
    /// One-line summary of every analysis choice, written into each table.
    pub fn fingerprint(&self) -> String {
        format!(
            "cr_variant={} cluster_key={} p_reference=normal window_days={} baseline={}..{} pre_weeks={} post_weeks={} spend_filter={}",
            self.cr,
            self.cluster_key,
            self.window.days(),
            self.baseline.start,
            self.baseline.end,
            self.pre_weeks,
            self.post_weeks,
            self.filter.label(),
        )
    }
}

struct Unit {
    name: String,
    cluster: String,
    treated: bool,
    authorities: BTreeSet<String>,
    population: u64,
}

fn units(data: &Dataset, pair: &EventPair, key: ClusterKey) -> Result<Vec<Unit>> {
    let mut out = Vec::new();
    for (group, treated) in [(&pair.treatment, true), (&pair.control, false)] {
        match key {
            ClusterKey::Group => out.push(Unit {
                name: group.name.clone(),
                cluster: group.name.clone(),
                treated,
                authorities: group.authorities.clone(),
                population: group.population_2019,
            }),
            ClusterKey::Authority => {
                for a in &group.authorities {
                    out.push(Unit {
                        name: a.clone(),
                        cluster: a.clone(),
                        treated,
                        authorities: BTreeSet::from([a.clone()]),
                        population: data.authority_population(a)?,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Outcome series of every panel unit of one event, covering the event
/// window (clipped at the end of the data).
pub fn unit_series(
    data: &Dataset,
    pair: &EventPair,
    outcome: Outcome,
    options: &AnalysisOptions,
) -> Result<Vec<UnitSeries>> {
    let ann = pair.announcement_date;
    let first = ann - Duration::days(7 * options.pre_weeks as i64);
    let wanted_end = ann + Duration::days(7 * options.post_weeks as i64 - 1);
    let units = units(data, pair, options.cluster_key)?;
    match outcome {
        Outcome::SpendIndex => {
            let data_end = data
                .transaction_span()
                .ok_or_else(|| Error::invalid("no transactions survive filtering"))?
                .end;
            let end = wanted_end.min(data_end);
            if end < first {
                return Err(Error::MissingDate {
                    what: format!("spend for {}", pair.event),
                    date: first,
                });
            }
            let spec = IndexSpec {
                filter: options.filter.clone(),
                window: options.window,
                baseline: options.baseline,
                span: DateSpan::new(
                    options.baseline.start.min(first),
                    end.max(options.baseline.end),
                )?,
            };
            let needed = required_daily_span(&spec);
            let daily = data.authority_daily(&options.filter, needed);
            let panel_span = DateSpan::new(first, end)?;
            units
                .into_iter()
                .map(|u| {
                    let series = DailySeries {
                        geography: u.name.clone(),
                        filter: options.filter.clone(),
                        totals: Series::new(
                            needed.start,
                            sum_daily(&daily, &u.authorities, needed.len()),
                        ),
                    };
                    let index = index_from_daily(&series, &spec)?;
                    Ok(UnitSeries {
                        unit: u.name,
                        cluster: u.cluster,
                        treated: u.treated,
                        weight: u.population as f64,
                        values: index.defined_over(panel_span)?,
                    })
                })
                .collect()
        }
        Outcome::CaseRate => {
            let case_end = data
                .case_span()
                .ok_or_else(|| Error::invalid("no case data"))?
                .end;
            let end = wanted_end.min(case_end);
            let span = DateSpan::new(
                first - Duration::days(options.window.days() as i64 - 1),
                end.max(first),
            )?;
            units
                .into_iter()
                .map(|u| {
                    let (rate, _) = case_rate_for(
                        &data.cases,
                        &u.name,
                        &u.authorities,
                        u.population,
                        options.window,
                        span,
                        !options.lenient_cases,
                    )?;
                    Ok(UnitSeries {
                        unit: u.name,
                        cluster: u.cluster,
                        treated: u.treated,
                        weight: u.population as f64,
                        values: rate.values,
                    })
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowWeeks {
    pub pre_weeks: u32,
    pub post_weeks: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub cr_variant: CrVariant,
    pub cluster_key: ClusterKey,
    pub p_reference: String,
    pub window_days: u32,
    #[serde(with = "date_fmt")]
    pub baseline_start: NaiveDate,
    #[serde(with = "date_fmt")]
    pub baseline_end: NaiveDate,
}

/// Serializable result of one (event, outcome, specification) estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DidReport {
    pub event: String,
    pub outcome: Outcome,
    pub spec: Specification,
    pub coefficients: Vec<Coefficient>,
    pub n_obs: usize,
    pub n_clusters: usize,
    /// Window actually estimated; `post_weeks` shrinks when data end early.
    pub window: WindowWeeks,
    pub requested_window: WindowWeeks,
    pub options: ReportOptions,
}

impl DidReport {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    /// Treatment interaction rows in table order.
    pub fn interactions(&self) -> impl Iterator<Item = &Coefficient> + '_ {
        self.coefficients
            .iter()
            .filter(|c| term_order(&c.name).is_some())
    }
}

/// Sort key of an interaction term; `None` for other coefficients.
fn term_order(name: &str) -> Option<i64> {
    if name == crate::estimator::TREAT_AFTER {
        return Some(0);
    }
    name.strip_prefix("Treat*After_")?.parse().ok()
}

pub fn run_event(
    data: &Dataset,
    pair: &EventPair,
    outcome: Outcome,
    spec: Specification,
    options: &AnalysisOptions,
) -> Result<DidReport> {
    let units = unit_series(data, pair, outcome, options)?;
    let panel = build_panel(
        &units,
        pair.announcement_date,
        options.pre_weeks,
        options.post_weeks,
    )?;
    let result = estimate(&panel, spec, options.cr)?;
    Ok(DidReport {
        event: pair.event.clone(),
        outcome,
        spec,
        coefficients: result.coefficients,
        n_obs: result.n_obs,
        n_clusters: result.n_clusters,
        window: WindowWeeks {
            pre_weeks: panel.window.pre_weeks,
            post_weeks: panel.window.post_weeks,
        },
        requested_window: WindowWeeks {
            pre_weeks: panel.requested.pre_weeks,
            post_weeks: panel.requested.post_weeks,
        },
        options: ReportOptions {
            cr_variant: options.cr,
            cluster_key: options.cluster_key,
            p_reference: "normal".into(),
            window_days: options.window.days(),
            baseline_start: options.baseline.start,
            baseline_end: options.baseline.end,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub event: usize,
    pub outcome: Outcome,
    pub spec: Specification,
}

/// Every (event, outcome, specification) combination, estimated in parallel
/// and returned in job order.
pub fn run_all(
    data: &Dataset,
    outcomes: &[Outcome],
    specs: &[Specification],
    options: &AnalysisOptions,
) -> Vec<(Job, Result<DidReport>)> {
    let mut jobs = Vec::new();
    for &outcome in outcomes {
        for &spec in specs {
            for event in 0..data.pairs.pairs.len() {
                jobs.push(Job {
                    event,
                    outcome,
                    spec,
                });
            }
        }
    }
    let run = |job: &Job| {
        run_event(
            data,
            &data.pairs.pairs[job.event],
            job.outcome,
            job.spec,
            options,
        )
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<DidReport>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<DidReport>> = jobs.iter().map(run).collect();
    jobs.into_iter().zip(results).collect()
}

fn format_estimate(c: &Coefficient) -> String {
    format!("{:.6}{}", c.estimate, c.stars)
}

/// Events as columns and interaction terms as rows, each estimate followed
/// by its standard error in parentheses. Terms an event lacks (a truncated
/// post window) are left blank. The first line is a `#` comment carrying
/// the option fingerprint.
pub fn write_table<W: Write>(mut w: W, reports: &[&DidReport], fingerprint: &str) -> Result<()> {
    let io = |e| Error::io("<table>", e);
    writeln!(w, "# {fingerprint}").map_err(io)?;
    let mut terms: BTreeMap<i64, String> = BTreeMap::new();
    for r in reports {
        for c in r.interactions() {
            terms.insert(term_order(&c.name).expect("interaction"), c.name.clone());
        }
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["term".to_string()];
    header.extend(reports.iter().map(|r| r.event.clone()));
    out.write_record(&header)?;
    for name in terms.values() {
        let cells = |f: &dyn Fn(&Coefficient) -> String| -> Vec<String> {
            reports
                .iter()
                .map(|r| r.coefficient(name).map(f).unwrap_or_default())
                .collect()
        };
        let mut row = vec![name.clone()];
        row.extend(cells(&format_estimate));
        out.write_record(&row)?;
        let mut row = vec![String::new()];
        row.extend(cells(&|c| format!("({:.6})", c.se)));
        out.write_record(&row)?;
    }
    let mut row = vec!["Observations".to_string()];
    row.extend(reports.iter().map(|r| r.n_obs.to_string()));
    out.write_record(&row)?;
    let mut row = vec!["Clusters".to_string()];
    row.extend(reports.iter().map(|r| r.n_clusters.to_string()));
    out.write_record(&row)?;
    out.flush().map_err(io)?;
    Ok(())
}

/// One row per coefficient of every report, at full precision.
pub fn write_results_long<W: Write>(w: W, reports: &[&DidReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "event",
        "outcome",
        "spec",
        "term",
        "estimate",
        "se",
        "p",
        "stars",
        "n_obs",
        "n_clusters",
    ])?;
    for r in reports {
        for c in &r.coefficients {
            out.write_record([
                r.event.clone(),
                r.outcome.to_string(),
                r.spec.to_string(),
                c.name.clone(),
                c.estimate.to_string(),
                c.se.to_string(),
                c.p.map(|p| p.to_string()).unwrap_or_default(),
                c.stars.clone(),
                r.n_obs.to_string(),
                r.n_clusters.to_string(),
            ])?;
        }
    }
    out.flush().map_err(|e| Error::io("<results>", e))?;
    Ok(())
}

/// Spend indices of every locality group for each filter and window, from
/// the baseline start to the last transaction date.
pub fn group_indices(
    data: &Dataset,
    filters: &[SeriesFilter],
    windows: &[WindowDays],
    baseline: DateSpan,
) -> Result<Vec<IndexSeries>> {
    let data_end = data
        .transaction_span()
        .ok_or_else(|| Error::invalid("no transactions survive filtering"))?
        .end;
    let mut out = Vec::new();
    for filter in filters {
        for &window in windows {
            let spec = IndexSpec {
                filter: filter.clone(),
                window,
                baseline,
                span: DateSpan::new(baseline.start, data_end.max(baseline.end))?,
            };
            let needed = required_daily_span(&spec);
            let daily = data.authority_daily(filter, needed);
            for g in data.groups() {
                let series = DailySeries {
                    geography: g.name.clone(),
                    filter: filter.clone(),
                    totals: Series::new(
                        needed.start,
                        sum_daily(&daily, &g.authorities, needed.len()),
                    ),
                };
                out.push(index_from_daily(&series, &spec)?);
            }
        }
    }
    Ok(out)
}

/// Case rates of every locality group over the case data span.
pub fn group_case_rates(
    data: &Dataset,
    options: &AnalysisOptions,
) -> Result<Vec<(CaseRateSeries, Vec<MissingCaseDay>)>> {
    let span = data
        .case_span()
        .ok_or_else(|| Error::invalid("no case data"))?;
    data.groups()
        .into_iter()
        .map(|g| {
            case_rate_for(
                &data.cases,
                &g.name,
                &g.authorities,
                g.population_2019,
                options.window,
                span,
                !options.lenient_cases,
            )
        })
        .collect()
}

/// Correlation of own monthly year-on-year spend growth with a benchmark.
pub fn validate(
    data: &Dataset,
    benchmark: &BTreeMap<YearMonth, f64>,
    windows: &[MonthWindow],
) -> Result<Vec<WindowCorrelation>> {
    let own = monthly_yoy_growth(&monthly_totals(data.transactions.iter().map(|t| &t.txn)));
    correlate_growth(&own, benchmark, windows)
}

/// Mean of treated minus control outcome by event week, relative to week 0;
/// the quantity the dynamic interactions estimate on a two-group panel.
pub fn week_mean_differences(
    treated: &RealSeries,
    control: &RealSeries,
    announcement: NaiveDate,
) -> BTreeMap<i64, f64> {
    let mut sums: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for (d, a) in treated.iter() {
        if let Some(b) = control.get(d) {
            let w = week_bucket((d - announcement).num_days());
            let e = sums.entry(w).or_insert((0.0, 0));
            e.0 += a - b;
            e.1 += 1;
        }
    }
    let Some(&(s0, n0)) = sums.get(&0) else {
        return BTreeMap::new();
    };
    let base = s0 / n0 as f64;
    sums.into_iter()
        .filter(|(w, _)| *w != 0)
        .map(|(w, (s, n))| (w, s / n as f64 - base))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Channel;

    #[test]
    fn filter_labels() {
        assert_eq!(parse_filter("all").unwrap(), SeriesFilter::default());
        assert_eq!(parse_filter("offline").unwrap(), SeriesFilter::offline());
        let f = parse_filter("online:retail").unwrap();
        assert_eq!(f.channel, Some(Channel::Online));
        assert_eq!(f.category.as_deref(), Some("retail"));
        assert_eq!(parse_filter("all:retail").unwrap().channel, None);
        assert!(parse_filter("instore").is_err());
        assert!(parse_filter("offline:").is_err());
    }

    #[test]
    fn term_ordering() {
        assert_eq!(term_order("Treat*After_-3"), Some(-3));
        assert_eq!(term_order("Treat*After_4"), Some(4));
        assert_eq!(term_order("Treat*After"), Some(0));
        assert_eq!(term_order("Treat"), None);
        assert_eq!(term_order("day_-5"), None);
    }
}
