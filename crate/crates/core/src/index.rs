//! De-seasoned daily spend indices.
//!
//! Spend is summed by day for a geography, smoothed with a trailing K-day
//! moving average, divided by the moving average on the same calendar day a
//! year earlier, and finally rescaled so that its mean over a baseline
//! window equals one. A leap day is compared against the mean of 28 February
//! and 1 March of the prior year.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::dates::{parse_date, prior_year_dates, DateSpan, YearMonth, DATE_FORMAT};
use crate::error::{Error, Result};
use crate::ingest::{Channel, LocalityGroup, TaggedTransaction, Transaction};

/// Default normalisation window, 8 to 28 January 2020.
pub fn default_baseline() -> DateSpan {
    DateSpan {
        start: NaiveDate::from_ymd_opt(2020, 1, 8).expect("valid date"),
        end: NaiveDate::from_ymd_opt(2020, 1, 28).expect("valid date"),
    }
}

/// Moving-average window length in days: 7, 14 or 28.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct WindowDays(u32);

impl WindowDays {
    pub const SEVEN: WindowDays = WindowDays(7);

    pub fn new(days: u32) -> Result<Self> {
        match days {
            7 | 14 | 28 => Ok(WindowDays(days)),
            other => Err(Error::invalid(format!(
                "moving-average window must be 7, 14 or 28 days, got {other}"
            ))),
        }
    }

    pub fn days(self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for WindowDays {
    type Error = Error;

    fn try_from(v: u32) -> Result<Self> {
        WindowDays::new(v)
    }
}

impl From<WindowDays> for u32 {
    fn from(w: WindowDays) -> u32 {
        w.0
    }
}

/// A contiguous run of daily values starting at `start`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Series<T> {
    pub start: NaiveDate,
    pub values: Vec<T>,
}

pub type RealSeries = Series<f64>;
/// Ratio series; `None` marks a gap (zero denominator).
pub type RatioSeries = Series<Option<f64>>;

impl<T: Clone> Series<T> {
    pub fn new(start: NaiveDate, values: Vec<T>) -> Self {
        Self { start, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Last covered date. Meaningless for an empty series.
    pub fn end(&self) -> NaiveDate {
        self.start + Duration::days(self.values.len() as i64 - 1)
    }

    pub fn span(&self) -> Option<DateSpan> {
        (!self.is_empty()).then(|| DateSpan {
            start: self.start,
            end: self.end(),
        })
    }

    pub fn get(&self, d: NaiveDate) -> Option<&T> {
        let off = (d - self.start).num_days();
        if off < 0 {
            return None;
        }
        self.values.get(off as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NaiveDate, &T)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, v)| (self.start + Duration::days(i as i64), v))
    }

    /// Restriction to `span`; errors if the series does not cover it.
    pub fn slice(&self, span: DateSpan) -> Result<Self> {
        let covered = self
            .span()
            .is_some_and(|s| s.start <= span.start && s.end >= span.end);
        if !covered {
            return Err(Error::invalid(format!(
                "series starting {} with {} days does not cover {span}",
                self.start,
                self.len()
            )));
        }
        let from = (span.start - self.start).num_days() as usize;
        Ok(Series::new(
            span.start,
            self.values[from..from + span.len()].to_vec(),
        ))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeriesFilter {
    pub category: Option<String>,
    pub channel: Option<Channel>,
}

impl SeriesFilter {
    pub fn offline() -> Self {
        Self {
            category: None,
            channel: Some(Channel::Offline),
        }
    }

    pub fn matches(&self, t: &Transaction) -> bool {
        self.channel.is_none_or(|c| c == t.channel)
            && self.category.as_deref().is_none_or(|c| c == t.category)
    }

    /// Short label used in file names, e.g. `all`, `offline`,
    /// `offline-food_beverage`.
    pub fn label(&self) -> String {
        match (&self.channel, &self.category) {
            (None, None) => "all".to_string(),
            (Some(ch), None) => ch.to_string(),
            (None, Some(cat)) => cat.clone(),
            (Some(ch), Some(cat)) => format!("{ch}-{cat}"),
        }
    }
}

/// Daily spend totals (pence) of one geography; days without spend are
/// explicit zeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailySeries {
    pub geography: String,
    pub filter: SeriesFilter,
    pub totals: Series<u64>,
}

impl DailySeries {
    pub fn to_real(&self) -> RealSeries {
        Series::new(
            self.totals.start,
            self.totals.values.iter().map(|&v| v as f64).collect(),
        )
    }
}

/// Sums amounts by day over the group's authorities.
pub fn aggregate_daily(
    tagged: &[TaggedTransaction],
    group: &LocalityGroup,
    filter: &SeriesFilter,
    span: DateSpan,
) -> DailySeries {
    aggregate_authorities(tagged, &group.name, &group.authorities, filter, span)
}

pub fn aggregate_authorities(
    tagged: &[TaggedTransaction],
    geography: &str,
    authorities: &BTreeSet<String>,
    filter: &SeriesFilter,
    span: DateSpan,
) -> DailySeries {
    let mut totals = vec![0u64; span.len()];
    accumulate(&mut totals, tagged, authorities, filter, span);
    DailySeries {
        geography: geography.to_string(),
        filter: filter.clone(),
        totals: Series::new(span.start, totals),
    }
}

fn accumulate(
    totals: &mut [u64],
    tagged: &[TaggedTransaction],
    authorities: &BTreeSet<String>,
    filter: &SeriesFilter,
    span: DateSpan,
) {
    for t in tagged {
        if let Some(i) = span.offset(t.txn.date) {
            if filter.matches(&t.txn) && authorities.contains(&t.authority) {
                totals[i] += t.txn.amount_pence;
            }
        }
    }
}

/// Shard-wise aggregation followed by an exact integer merge. Produces the
/// same series as a single pass over the concatenated shards.
pub fn aggregate_sharded(
    shards: &[&[TaggedTransaction]],
    geography: &str,
    authorities: &BTreeSet<String>,
    filter: &SeriesFilter,
    span: DateSpan,
) -> DailySeries {
    let partial = |shard: &&[TaggedTransaction]| {
        let mut totals = vec![0u64; span.len()];
        accumulate(&mut totals, shard, authorities, filter, span);
        totals
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<Vec<u64>> = {
        use rayon::prelude::*;
        shards.par_iter().map(partial).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Vec<u64>> = shards.iter().map(partial).collect();

    let mut totals = vec![0u64; span.len()];
    for p in partials {
        for (acc, v) in totals.iter_mut().zip(p) {
            *acc += v;
        }
    }
    DailySeries {
        geography: geography.to_string(),
        filter: filter.clone(),
        totals: Series::new(span.start, totals),
    }
}

/// Trailing moving average: the value at `d` is the mean over
/// `[d - K + 1, d]`, so the output starts `K - 1` days after the input.
pub fn moving_average(series: &RealSeries, window: WindowDays) -> Result<RealSeries> {
    let k = window.days() as usize;
    if series.len() < k {
        return Err(Error::invalid(format!(
            "series of {} days is shorter than the {k}-day window",
            series.len()
        )));
    }
    // Each window is summed from scratch so results never carry drift from a
    // running sum.
    let values = series
        .values
        .windows(k)
        .map(|w| w.iter().sum::<f64>() / k as f64)
        .collect();
    Ok(Series::new(
        series.start + Duration::days(k as i64 - 1),
        values,
    ))
}

/// Year-on-year ratio of `current` to `prior`, evaluated on every date of
/// `current`. Dates whose prior-year denominator is zero become gaps.
pub fn yoy_deseason(current: &RealSeries, prior: &RealSeries) -> Result<RatioSeries> {
    let mut values = Vec::with_capacity(current.len());
    for (d, &num) in current.iter() {
        let prior_dates = prior_year_dates(d);
        let mut denom = 0.0;
        for p in &prior_dates {
            denom += prior.get(*p).copied().ok_or_else(|| Error::MissingDate {
                what: "prior-year moving average".into(),
                date: *p,
            })?;
        }
        denom /= prior_dates.len() as f64;
        values.push((denom != 0.0).then(|| num / denom));
    }
    Ok(Series::new(current.start, values))
}

/// Divides by the mean over `baseline`, which must be fully defined.
pub fn normalize_baseline(ratio: &RatioSeries, baseline: DateSpan) -> Result<RatioSeries> {
    let mut sum = 0.0;
    for d in baseline.days() {
        sum += ratio
            .get(d)
            .copied()
            .flatten()
            .ok_or_else(|| Error::MissingDate {
                what: "baseline ratio".into(),
                date: d,
            })?;
    }
    let mean = sum / baseline.len() as f64;
    if mean == 0.0 {
        return Err(Error::Numerical(format!(
            "baseline mean is zero over {baseline}"
        )));
    }
    Ok(Series::new(
        ratio.start,
        ratio.values.iter().map(|v| v.map(|r| r / mean)).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub geography: String,
    pub category: Option<String>,
    pub channel: Option<Channel>,
    pub window_days: u32,
    #[serde(with = "date_fmt")]
    pub baseline_start: NaiveDate,
    #[serde(with = "date_fmt")]
    pub baseline_end: NaiveDate,
}

/// Spans of the daily series the index was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub current: DateSpan,
    pub prior: DateSpan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSeries {
    pub meta: IndexMeta,
    pub provenance: Provenance,
    pub values: RatioSeries,
}

impl IndexSeries {
    pub fn baseline(&self) -> DateSpan {
        DateSpan {
            start: self.meta.baseline_start,
            end: self.meta.baseline_end,
        }
    }

    pub fn get(&self, d: NaiveDate) -> Option<f64> {
        self.values.get(d).copied().flatten()
    }

    /// Mean over the baseline dates; one by construction.
    pub fn baseline_mean(&self) -> Option<f64> {
        let b = self.baseline();
        let sum: Option<f64> = b.days().map(|d| self.get(d)).sum();
        sum.map(|s| s / b.len() as f64)
    }

    /// The defined values as a real series over `span`, or the first missing
    /// date.
    pub fn defined_over(&self, span: DateSpan) -> Result<RealSeries> {
        let values = span
            .days()
            .map(|d| {
                self.get(d).ok_or_else(|| Error::MissingDate {
                    what: format!("index for {}", self.meta.geography),
                    date: d,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Series::new(span.start, values))
    }
}

#[derive(Debug, Clone)]
pub struct IndexSpec {
    pub filter: SeriesFilter,
    pub window: WindowDays,
    pub baseline: DateSpan,
    /// Dates the index is reported for; must contain the baseline.
    pub span: DateSpan,
}

/// Span of daily data needed to compute an index over `spec.span`.
pub fn required_daily_span(spec: &IndexSpec) -> DateSpan {
    let earliest_prior = prior_year_dates(spec.span.start)[0];
    DateSpan {
        start: earliest_prior - Duration::days(spec.window.days() as i64 - 1),
        end: spec.span.end,
    }
}

/// Full pipeline: daily totals, moving average over both years, year-on-year
/// ratio and baseline normalisation.
pub fn build_index(
    tagged: &[TaggedTransaction],
    geography: &str,
    authorities: &BTreeSet<String>,
    spec: &IndexSpec,
) -> Result<IndexSeries> {
    let daily = aggregate_authorities(
        tagged,
        geography,
        authorities,
        &spec.filter,
        required_daily_span(spec),
    );
    index_from_daily(&daily, spec)
}

pub fn build_group_index(
    tagged: &[TaggedTransaction],
    group: &LocalityGroup,
    spec: &IndexSpec,
) -> Result<IndexSeries> {
    build_index(tagged, &group.name, &group.authorities, spec)
}

/// Index computation from an already aggregated daily series covering
/// [`required_daily_span`].
pub fn index_from_daily(daily: &DailySeries, spec: &IndexSpec) -> Result<IndexSeries> {
    if !(spec.span.contains(spec.baseline.start) && spec.span.contains(spec.baseline.end)) {
        return Err(Error::invalid(format!(
            "baseline {} lies outside index span {}",
            spec.baseline, spec.span
        )));
    }
    let ma = moving_average(&daily.to_real(), spec.window)?;
    let current = ma.slice(spec.span)?;
    let ratio = yoy_deseason(&current, &ma)?;
    let values = normalize_baseline(&ratio, spec.baseline)?;
    let prior_start = prior_year_dates(spec.span.start)[0];
    Ok(IndexSeries {
        meta: IndexMeta {
            geography: daily.geography.clone(),
            category: spec.filter.category.clone(),
            channel: spec.filter.channel,
            window_days: spec.window.days(),
            baseline_start: spec.baseline.start,
            baseline_end: spec.baseline.end,
        },
        provenance: Provenance {
            current: spec.span,
            prior: DateSpan {
                start: prior_start,
                end: prior_year_dates(spec.span.end)
                    .last()
                    .copied()
                    .unwrap_or(prior_start),
            },
        },
        values,
    })
}

/// Writes `date,value,flag` rows; gaps have an empty value and flag `gap`.
pub fn write_index_csv<W: Write>(w: W, index: &IndexSeries) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["date", "value", "flag"])?;
    for (d, v) in index.values.iter() {
        let date = d.format(DATE_FORMAT).to_string();
        match v {
            Some(v) => out.write_record([date, v.to_string(), "ok".into()])?,
            None => out.write_record([date, String::new(), "gap".into()])?,
        }
    }
    out.flush().map_err(|e| Error::io("<index csv>", e))?;
    Ok(())
}

pub fn write_series_csv<W: Write>(w: W, value_column: &str, series: &RealSeries) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["date", value_column])?;
    for (d, v) in series.iter() {
        out.write_record([d.format(DATE_FORMAT).to_string(), v.to_string()])?;
    }
    out.flush().map_err(|e| Error::io("<series csv>", e))?;
    Ok(())
}

/// Reads back an index CSV written by [`write_index_csv`].
pub fn read_index_csv<R: Read>(r: R) -> Result<RatioSeries> {
    let mut reader = csv::Reader::from_reader(r);
    let mut start = None;
    let mut values = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let d = parse_date(rec.get(0).unwrap_or(""))?;
        let expected = start.map(|s: NaiveDate| s + Duration::days(values.len() as i64));
        if expected.is_some_and(|e| e != d) {
            return Err(Error::invalid(format!("index csv not contiguous at {d}")));
        }
        start.get_or_insert(d);
        let v = match rec.get(2) {
            Some("gap") => None,
            _ => Some(
                rec.get(1)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad index value on {d}")))?,
            ),
        };
        values.push(v);
    }
    let start = start.ok_or_else(|| Error::invalid("empty index csv"))?;
    Ok(Series::new(start, values))
}

pub(crate) mod date_fmt {
    use chrono::NaiveDate;
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::dates::DATE_FORMAT;

    pub fn serialize<S: Serializer>(d: &NaiveDate, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&d.format(DATE_FORMAT))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDate, D::Error> {
        let s = String::deserialize(d)?;
        NaiveDate::parse_from_str(&s, DATE_FORMAT).map_err(serde::de::Error::custom)
    }
}

/// Calendar-month spend totals in pence.
pub fn monthly_totals<'a>(
    txns: impl IntoIterator<Item = &'a Transaction>,
) -> BTreeMap<YearMonth, u64> {
    let mut out = BTreeMap::new();
    for t in txns {
        *out.entry(YearMonth::of(t.date)).or_insert(0) += t.amount_pence;
    }
    out
}

/// Year-on-year growth `total(m) / total(m - 12) - 1`, for months whose
/// prior-year total is known and positive.
pub fn monthly_yoy_growth(totals: &BTreeMap<YearMonth, u64>) -> BTreeMap<YearMonth, f64> {
    totals
        .iter()
        .filter_map(|(m, &v)| {
            let prior = *totals.get(&m.prior_year())?;
            (prior > 0).then(|| (*m, v as f64 / prior as f64 - 1.0))
        })
        .collect()
}

/// Pearson correlation coefficient, computed from centred sums.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid(
            "pearson needs two equal-length samples of size >= 2",
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numerical(
            "correlation undefined for a constant series".into(),
        ));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthWindow {
    pub start: YearMonth,
    pub end: YearMonth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowCorrelation {
    pub start: YearMonth,
    pub end: YearMonth,
    pub n_months: usize,
    pub correlation: f64,
}

/// Correlates own monthly year-on-year growth with a benchmark series over
/// each window. With no windows given, all overlapping months form one
/// window.
pub fn validate_against_benchmark<'a>(
    txns: impl IntoIterator<Item = &'a Transaction>,
    benchmark: &BTreeMap<YearMonth, f64>,
    windows: &[MonthWindow],
) -> Result<Vec<WindowCorrelation>> {
    let own = monthly_yoy_growth(&monthly_totals(txns));
    correlate_growth(&own, benchmark, windows)
}

pub fn correlate_growth(
    own: &BTreeMap<YearMonth, f64>,
    benchmark: &BTreeMap<YearMonth, f64>,
    windows: &[MonthWindow],
) -> Result<Vec<WindowCorrelation>> {
    let overlap: Vec<(YearMonth, f64, f64)> = own
        .iter()
        .filter_map(|(m, &x)| benchmark.get(m).map(|&y| (*m, x, y)))
        .collect();
    let windows: Vec<MonthWindow> = if windows.is_empty() {
        match (overlap.first(), overlap.last()) {
            (Some(a), Some(b)) => vec![MonthWindow {
                start: a.0,
                end: b.0,
            }],
            _ => vec![],
        }
    } else {
        windows.to_vec()
    };
    if windows.is_empty() {
        return Err(Error::invalid("no months overlap with the benchmark"));
    }
    windows
        .iter()
        .map(|w| {
            let (x, y): (Vec<f64>, Vec<f64>) = overlap
                .iter()
                .filter(|(m, _, _)| *m >= w.start && *m <= w.end)
                .map(|(_, x, y)| (*x, *y))
                .unzip();
            if x.len() < 3 {
                return Err(Error::invalid(format!(
                    "window {}..{} has {} overlapping months, need at least 3",
                    w.start,
                    w.end,
                    x.len()
                )));
            }
            Ok(WindowCorrelation {
                start: w.start,
                end: w.end,
                n_months: x.len(),
                correlation: pearson(&x, &y)?,
            })
        })
        .collect()
}

/// Parses a `month,yoy_growth` benchmark file.
pub fn parse_benchmark<R: Read>(r: R) -> Result<BTreeMap<YearMonth, f64>> {
    let mut reader = csv::Reader::from_reader(r);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn {
                column: name.into(),
            })
    };
    let (mi, gi) = (col("month")?, col("yoy_growth")?);
    let mut out = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let month: YearMonth =
            rec.get(mi)
                .unwrap_or("")
                .parse()
                .map_err(|e: Error| Error::Row {
                    row,
                    reason: e.to_string(),
                })?;
        let growth: f64 = rec
            .get(gi)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::Row {
                row,
                reason: "bad yoy_growth".into(),
            })?;
        out.insert(month, growth);
    }
    Ok(out)
}

pub fn write_benchmark<W: Write>(w: W, series: &BTreeMap<YearMonth, f64>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["month", "yoy_growth"])?;
    for (m, g) in series {
        out.write_record([m.to_string(), g.to_string()])?;
    }
    out.flush().map_err(|e| Error::io("<benchmark csv>", e))?;
    Ok(())
}
