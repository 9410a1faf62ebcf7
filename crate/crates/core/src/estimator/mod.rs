//! Difference-in-difference estimation around a lockdown announcement.
//!
//! Outcomes of treated and control units are stacked into a balanced,
//! event-aligned [`Panel`], expanded into a design matrix with an intercept,
//! a treatment indicator, daily dummies (day -1 omitted) and treatment
//! interactions, then fitted by population-weighted least squares with a
//! cluster-robust sandwich covariance.
//!
//! Two interaction layouts are supported: a single `Treat*After` term for the
//! static specification, and one `Treat*After_W` term per event week (week 0,
//! days -7..-1, omitted) for the dynamic one.

mod covariance;
mod design;
mod did;
mod panel;
mod wls;

pub use covariance::{cluster_cov, CrVariant};
pub use design::{
    day_column, design, design_dynamic, design_static, week_column, DesignMatrix, Specification,
    INTERCEPT, TREAT, TREAT_AFTER,
};
pub use did::{estimate, p_value, stars, Coefficient, DidResult};
pub use panel::{build_panel, week_bucket, Observation, Panel, PanelWindow, UnitSeries};
pub use wls::{check_rank, wls_fit, WlsFit};
