use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::panel::{week_bucket, Panel};
use super::wls::check_rank;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Specification {
    /// One `Treat*After` interaction.
    Static,
    /// One `Treat*After_W` interaction per event week, week 0 omitted.
    Dynamic,
}

impl Specification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Specification::Static => "static",
            Specification::Dynamic => "dynamic",
        }
    }
}

impl fmt::Display for Specification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Specification {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Specification::Static),
            "dynamic" => Ok(Specification::Dynamic),
            other => Err(Error::invalid(format!("unknown specification `{other}`"))),
        }
    }
}

pub const INTERCEPT: &str = "(Intercept)";
pub const TREAT: &str = "Treat";
pub const TREAT_AFTER: &str = "Treat*After";

pub fn day_column(t: i64) -> String {
    format!("day_{t}")
}

pub fn week_column(w: i64) -> String {
    format!("Treat*After_{w}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub specification: Specification,
    pub columns: Vec<String>,
    /// Rows aligned with the panel observations.
    pub x: DMatrix<f64>,
    /// Positions of the treatment interaction columns, in report order.
    pub interactions: Vec<usize>,
}

impl DesignMatrix {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }
}

/// Intercept, `Treat`, then one dummy per relative day except day -1.
fn base_columns(panel: &Panel) -> (Vec<String>, Vec<i64>) {
    let days: Vec<i64> = panel.window.rel_days().filter(|&t| t != -1).collect();
    let mut cols = vec![INTERCEPT.to_string(), TREAT.to_string()];
    cols.extend(days.iter().map(|&t| day_column(t)));
    (cols, days)
}

fn fill_base(x: &mut DMatrix<f64>, panel: &Panel, days: &[i64]) {
    let first = panel.window.first_day();
    for (i, o) in panel.observations.iter().enumerate() {
        x[(i, 0)] = 1.0;
        if o.treated {
            x[(i, 1)] = 1.0;
        }
        if o.rel_day != -1 {
            // days skips -1, so positions after it shift down by one
            let pos = (o.rel_day - first) as usize - usize::from(o.rel_day > -1);
            debug_assert_eq!(days[pos], o.rel_day);
            x[(i, 2 + pos)] = 1.0;
        }
    }
}

fn finish(
    specification: Specification,
    columns: Vec<String>,
    x: DMatrix<f64>,
    interactions: Vec<usize>,
) -> Result<DesignMatrix> {
    let design = DesignMatrix {
        specification,
        columns,
        x,
        interactions,
    };
    check_rank(&design.x).map_err(|cols| Error::RankDeficient {
        columns: cols
            .into_iter()
            .map(|j| design.columns[j].clone())
            .collect(),
    })?;
    Ok(design)
}

pub fn design_static(panel: &Panel) -> Result<DesignMatrix> {
    let (mut columns, days) = base_columns(panel);
    columns.push(TREAT_AFTER.to_string());
    let k = columns.len();
    let mut x = DMatrix::zeros(panel.n_obs(), k);
    fill_base(&mut x, panel, &days);
    for (i, o) in panel.observations.iter().enumerate() {
        if o.treated && o.rel_day >= 0 {
            x[(i, k - 1)] = 1.0;
        }
    }
    finish(Specification::Static, columns, x, vec![k - 1])
}

pub fn design_dynamic(panel: &Panel) -> Result<DesignMatrix> {
    let (mut columns, days) = base_columns(panel);
    let weeks = panel.window.interaction_weeks();
    let first_interaction = columns.len();
    columns.extend(weeks.iter().map(|&w| week_column(w)));
    let mut x = DMatrix::zeros(panel.n_obs(), columns.len());
    fill_base(&mut x, panel, &days);
    for (i, o) in panel.observations.iter().enumerate() {
        if !o.treated {
            continue;
        }
        let w = week_bucket(o.rel_day);
        if let Some(pos) = weeks.iter().position(|&v| v == w) {
            x[(i, first_interaction + pos)] = 1.0;
        }
    }
    let interactions = (first_interaction..columns.len()).collect();
    finish(Specification::Dynamic, columns, x, interactions)
}

pub fn design(panel: &Panel, spec: Specification) -> Result<DesignMatrix> {
    match spec {
        Specification::Static => design_static(panel),
        Specification::Dynamic => design_dynamic(panel),
    }
}
