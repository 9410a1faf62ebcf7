use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::RealSeries;

/// Outcome series of one unit (a locality group or a member authority).
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSeries {
    pub unit: String,
    /// Label of the cluster the unit's observations belong to.
    pub cluster: String,
    pub treated: bool,
    /// Regression weight, the unit's 2019 resident population.
    pub weight: f64,
    pub values: RealSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Index into [`Panel::units`].
    pub unit: usize,
    pub treated: bool,
    pub date: NaiveDate,
    /// Days since the announcement; 0 is the announcement day.
    pub rel_day: i64,
    pub outcome: f64,
    pub weight: f64,
    /// Index into [`Panel::clusters`].
    pub cluster: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelWindow {
    pub pre_weeks: u32,
    pub post_weeks: u32,
}

impl PanelWindow {
    pub fn first_day(&self) -> i64 {
        -7 * self.pre_weeks as i64
    }

    pub fn last_day(&self) -> i64 {
        7 * self.post_weeks as i64 - 1
    }

    pub fn rel_days(&self) -> impl Iterator<Item = i64> {
        self.first_day()..=self.last_day()
    }

    /// Event weeks carrying an interaction in the dynamic specification.
    pub fn interaction_weeks(&self) -> Vec<i64> {
        (1 - self.pre_weeks as i64..=self.post_weeks as i64)
            .filter(|&w| w != 0)
            .collect()
    }
}

/// Balanced stack of unit-day observations around one announcement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub announcement: NaiveDate,
    pub units: Vec<String>,
    pub clusters: Vec<String>,
    pub observations: Vec<Observation>,
    /// Window actually covered; the post side may be shorter than requested
    /// when the data end early.
    pub window: PanelWindow,
    pub requested: PanelWindow,
}

impl Panel {
    pub fn n_obs(&self) -> usize {
        self.observations.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.outcome).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.weight).collect()
    }

    pub fn cluster_ids(&self) -> Vec<usize> {
        self.observations.iter().map(|o| o.cluster).collect()
    }
}

/// Event week of a relative day: week 0 is days -7..-1, week 1 is days
/// 0..6 (the announcement day opens the first post week), week -1 is days
/// -14..-8, and so on.
pub fn week_bucket(rel_day: i64) -> i64 {
    rel_day.div_euclid(7) + 1
}

/// Aligns unit series on the announcement date.
///
/// All pre-announcement days must be present. Post weeks are kept while every
/// unit covers the whole week; when the data end earlier the window shrinks
/// to the complete weeks available, so the panel stays balanced.
pub fn build_panel(
    units: &[UnitSeries],
    announcement: NaiveDate,
    pre_weeks: u32,
    post_weeks: u32,
) -> Result<Panel> {
    if pre_weeks == 0 || post_weeks == 0 {
        return Err(Error::invalid(
            "panel needs at least one pre and one post week",
        ));
    }
    if !units.iter().any(|u| u.treated) || !units.iter().any(|u| !u.treated) {
        return Err(Error::invalid("panel needs treated and control units"));
    }
    if let Some(u) = units
        .iter()
        .find(|u| !(u.weight > 0.0 && u.weight.is_finite()))
    {
        return Err(Error::invalid(format!(
            "unit {} has non-positive weight",
            u.unit
        )));
    }
    let requested = PanelWindow {
        pre_weeks,
        post_weeks,
    };
    let date_of = |t: i64| announcement + Duration::days(t);

    let first = date_of(requested.first_day());
    for u in units {
        let missing = if u.values.is_empty() || u.values.start > first {
            Some(first)
        } else if u.values.end() < date_of(-1) {
            Some(u.values.end() + Duration::days(1))
        } else {
            None
        };
        if let Some(date) = missing {
            return Err(Error::MissingDate {
                what: format!("outcome for {}", u.unit),
                date,
            });
        }
    }

    let data_end = units
        .iter()
        .map(|u| u.values.end())
        .min()
        .expect("non-empty");
    let available = ((data_end - announcement).num_days() + 1)
        .div_euclid(7)
        .max(0) as u32;
    let covered = available.min(post_weeks);
    if covered == 0 {
        return Err(Error::MissingDate {
            what: "post-announcement outcome".into(),
            date: data_end + Duration::days(1),
        });
    }
    let window = PanelWindow {
        pre_weeks,
        post_weeks: covered,
    };

    let mut clusters: Vec<String> = Vec::new();
    let mut observations = Vec::with_capacity(units.len() * window.rel_days().count());
    let ordered = units
        .iter()
        .filter(|u| u.treated)
        .chain(units.iter().filter(|u| !u.treated));
    let mut names = Vec::with_capacity(units.len());
    for u in ordered {
        let cluster = match clusters.iter().position(|c| *c == u.cluster) {
            Some(i) => i,
            None => {
                clusters.push(u.cluster.clone());
                clusters.len() - 1
            }
        };
        if names.contains(&u.unit) {
            return Err(Error::invalid(format!("duplicate unit {}", u.unit)));
        }
        names.push(u.unit.clone());
        let unit = names.len() - 1;
        for t in window.rel_days() {
            let date = date_of(t);
            let outcome = *u.values.get(date).ok_or_else(|| Error::MissingDate {
                what: format!("outcome for {}", u.unit),
                date,
            })?;
            if !outcome.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite outcome for {} on {date}",
                    u.unit
                )));
            }
            observations.push(Observation {
                unit,
                treated: u.treated,
                date,
                rel_day: t,
                outcome,
                weight: u.weight,
                cluster,
            });
        }
    }
    Ok(Panel {
        announcement,
        units: names,
        clusters,
        observations,
        window,
        requested,
    })
}
