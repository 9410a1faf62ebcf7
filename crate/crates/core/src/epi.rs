//! Smoothed COVID-19 case rates per 100,000 residents.

use std::collections::{BTreeSet, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dates::DateSpan;
use crate::error::{Error, Result};
use crate::index::{moving_average, RealSeries, Series, WindowDays};
use crate::ingest::{CaseRecord, LocalityGroup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRateSeries {
    pub group: String,
    pub window_days: u32,
    pub population: u64,
    /// Cases per 100,000 residents; starts `K - 1` days into the input span.
    pub values: RealSeries,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingCaseDay {
    pub authority: String,
    pub date: NaiveDate,
}

/// Pooled daily cases of `authorities` over `span`.
///
/// In strict mode a missing authority-day is an error; otherwise it counts
/// as zero and is listed in the returned warnings.
pub fn pooled_daily_cases(
    cases: &[CaseRecord],
    authorities: &BTreeSet<String>,
    span: DateSpan,
    strict: bool,
) -> Result<(RealSeries, Vec<MissingCaseDay>)> {
    let mut seen: HashMap<(&str, NaiveDate), u64> = HashMap::new();
    for c in cases {
        if span.contains(c.date) && authorities.contains(&c.authority) {
            *seen.entry((c.authority.as_str(), c.date)).or_insert(0) += c.new_cases;
        }
    }
    let mut warnings = Vec::new();
    let mut totals = vec![0u64; span.len()];
    for (i, d) in span.days().enumerate() {
        for a in authorities {
            match seen.get(&(a.as_str(), d)) {
                Some(n) => totals[i] += n,
                None if strict => {
                    return Err(Error::MissingDate {
                        what: format!("cases for {a}"),
                        date: d,
                    })
                }
                None => warnings.push(MissingCaseDay {
                    authority: a.clone(),
                    date: d,
                }),
            }
        }
    }
    Ok((
        Series::new(span.start, totals.into_iter().map(|v| v as f64).collect()),
        warnings,
    ))
}

/// K-day moving average of pooled group cases over the pooled 2019
/// population, scaled to 100,000 residents.
pub fn case_rate(
    cases: &[CaseRecord],
    group: &LocalityGroup,
    window: WindowDays,
    span: DateSpan,
    strict: bool,
) -> Result<(CaseRateSeries, Vec<MissingCaseDay>)> {
    case_rate_for(
        cases,
        &group.name,
        &group.authorities,
        group.population_2019,
        window,
        span,
        strict,
    )
}

pub fn case_rate_for(
    cases: &[CaseRecord],
    name: &str,
    authorities: &BTreeSet<String>,
    population: u64,
    window: WindowDays,
    span: DateSpan,
    strict: bool,
) -> Result<(CaseRateSeries, Vec<MissingCaseDay>)> {
    if population == 0 {
        return Err(Error::invalid(format!("population of {name} is zero")));
    }
    let (daily, warnings) = pooled_daily_cases(cases, authorities, span, strict)?;
    let ma = moving_average(&daily, window)?;
    let scale = 100_000.0 / population as f64;
    Ok((
        CaseRateSeries {
            group: name.to_string(),
            window_days: window.days(),
            population,
            values: Series::new(ma.start, ma.values.iter().map(|v| v * scale).collect()),
        },
        warnings,
    ))
}
