//! Consumption indices, COVID-19 case rates and difference-in-difference
//! event studies for evaluating local lockdowns.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`ingest`] parses and filters card transactions, case counts, the
//!    lockdown schedule and the population/geography tables.
//! 2. [`index`] turns geo-tagged spend into a de-seasoned daily index
//!    (moving average, year-on-year ratio, January baseline), and [`epi`]
//!    turns case counts into smoothed rates per 100,000 residents.
//! 3. [`estimator`] stacks treated and control outcomes into an
//!    event-aligned panel and fits the static and dynamic
//!    difference-in-difference regressions with population weights and
//!    cluster-robust standard errors.
//! 4. [`synth`] generates scenarios with planted effects and holds
//!    independent brute-force oracles for the estimator.
//!
//! [`pipeline`] glues the stages together for the command line tool and
//! the browser demo.

pub mod dates;
pub mod epi;
pub mod error;
pub mod estimator;
pub mod index;
pub mod ingest;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
