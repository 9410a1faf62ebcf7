//! Browser demo: a synthetic lockdown scenario explored through spend index
//! curves, event-study estimates and the transaction amount model.
//!
//! Every export takes and returns JSON strings. The `*_json` functions hold
//! the logic and run natively; the `#[wasm_bindgen]` wrappers only convert
//! errors.

use std::cell::RefCell;
use std::collections::BTreeMap;

use chrono::NaiveDate;
use lockdown_core::estimator::{CrVariant, Specification};
use lockdown_core::index::{default_baseline, WindowDays};
use lockdown_core::ingest::Role;
use lockdown_core::pipeline::{
    group_indices, parse_filter, run_event, AnalysisOptions, ClusterKey, Dataset, LoadOptions,
    Outcome,
};
use lockdown_core::synth::{gen_scenario, AmountModel, ScenarioConfig, WeekEffect};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

struct Session {
    data: Dataset,
    truth: BTreeMap<String, BTreeMap<i64, f64>>,
    planted: BTreeMap<i64, f64>,
}

thread_local! {
    static SESSION: RefCell<Option<Session>> = const { RefCell::new(None) };
}

fn parse<'a, T: Deserialize<'a>>(json: &'a str) -> Result<T, String> {
    serde_json::from_str(json).map_err(|e| format!("bad request: {e}"))
}

fn reply<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn with_session<T>(f: impl FnOnce(&Session) -> Result<T, String>) -> Result<T, String> {
    SESSION.with(|s| match s.borrow().as_ref() {
        Some(session) => f(session),
        None => Err("no scenario loaded; call generate first".into()),
    })
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateRequest {
    pub seed: u64,
    /// Log-normal noise on authority-day totals.
    pub noise_scale: f64,
    /// Multiplies every planted weekly effect.
    pub effect_scale: f64,
    pub daily_spend_pence: f64,
}

impl Default for GenerateRequest {
    fn default() -> Self {
        Self {
            seed: 1,
            noise_scale: 0.05,
            effect_scale: 1.0,
            daily_spend_pence: 20_000.0,
        }
    }
}

#[derive(Debug, Serialize)]
struct EventSummary {
    event: String,
    announcement_date: NaiveDate,
    treated: Vec<String>,
    control: Vec<String>,
}

#[derive(Debug, Serialize)]
struct GenerateReply {
    transactions: usize,
    kept: usize,
    dropped: usize,
    authorities: usize,
    config_hash: String,
    events: Vec<EventSummary>,
    skipped: Vec<String>,
}

/// Generates a scenario and keeps its loaded dataset for later calls.
pub fn generate_json(request: &str) -> Result<String, String> {
    let req: GenerateRequest = parse(request)?;
    let defaults = ScenarioConfig::default();
    let cfg = ScenarioConfig {
        seed: req.seed,
        noise_scale: req.noise_scale,
        daily_spend_pence: req.daily_spend_pence,
        planted_effects: defaults
            .planted_effects
            .iter()
            .map(|e| WeekEffect {
                week: e.week,
                delta: e.delta * req.effect_scale,
            })
            .collect(),
        ..defaults
    };
    let s = gen_scenario(&cfg).map_err(|e| e.to_string())?;
    let n_txns = s.transactions.len();
    let data = Dataset::from_records(
        s.transactions,
        s.cases,
        s.lockdowns,
        s.population,
        s.geo_lookup,
        &LoadOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let out = GenerateReply {
        transactions: n_txns,
        kept: data.filter_report.kept,
        dropped: data.filter_report.total_dropped(),
        authorities: s.authorities.len(),
        config_hash: s.ground_truth.config_hash.clone(),
        events: data
            .pairs
            .pairs
            .iter()
            .map(|p| EventSummary {
                event: p.event.clone(),
                announcement_date: p.announcement_date,
                treated: p.treatment.authorities.iter().cloned().collect(),
                control: p.control.authorities.iter().cloned().collect(),
            })
            .collect(),
        skipped: data.pairs.skipped.iter().map(|e| e.event.clone()).collect(),
    };
    SESSION.with(|cell| {
        *cell.borrow_mut() = Some(Session {
            data,
            truth: s.ground_truth.induced_index_effects,
            planted: s.ground_truth.planted_effects,
        })
    });
    reply(&out)
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesRequest {
    pub window: u32,
    pub filter: String,
}

impl Default for CurvesRequest {
    fn default() -> Self {
        Self {
            window: 7,
            filter: "offline".into(),
        }
    }
}

#[derive(Debug, Serialize)]
struct Curve {
    group: String,
    role: Role,
    event: String,
    values: Vec<Option<f64>>,
}

#[derive(Debug, Serialize)]
struct CurvesReply {
    start: NaiveDate,
    filter: String,
    window_days: u32,
    curves: Vec<Curve>,
}

/// Spend index of every locality group for one filter and window.
pub fn index_curves_json(request: &str) -> Result<String, String> {
    let req: CurvesRequest = parse(request)?;
    let window = WindowDays::new(req.window).map_err(|e| e.to_string())?;
    let filter = parse_filter(&req.filter).map_err(|e| e.to_string())?;
    with_session(|s| {
        let indices = group_indices(
            &s.data,
            std::slice::from_ref(&filter),
            &[window],
            default_baseline(),
        )
        .map_err(|e| e.to_string())?;
        let start = indices
            .first()
            .map(|ix| ix.values.start)
            .ok_or("no locality groups")?;
        let groups = s.data.groups();
        let curves = indices
            .iter()
            .zip(&groups)
            .map(|(ix, g)| Curve {
                group: g.name.clone(),
                role: g.role,
                event: s
                    .data
                    .pairs
                    .pairs
                    .iter()
                    .find(|p| p.treatment.name == g.name || p.control.name == g.name)
                    .map(|p| p.event.clone())
                    .unwrap_or_default(),
                values: ix.values.values.clone(),
            })
            .collect();
        reply(&CurvesReply {
            start,
            filter: filter.label(),
            window_days: window.days(),
            curves,
        })
    })
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyRequest {
    pub event: String,
    pub outcome: Outcome,
    pub spec: Specification,
    pub cluster_key: ClusterKey,
    pub cr: CrVariant,
    pub window: u32,
}

impl Default for StudyRequest {
    fn default() -> Self {
        Self {
            event: String::new(),
            outcome: Outcome::SpendIndex,
            spec: Specification::Dynamic,
            cluster_key: ClusterKey::Authority,
            cr: CrVariant::Cr1,
            window: 7,
        }
    }
}

#[derive(Debug, Serialize)]
struct StudyRow {
    term: String,
    /// Event week; `None` for the pooled static interaction.
    week: Option<i64>,
    estimate: f64,
    se: f64,
    lo: f64,
    hi: f64,
    stars: String,
    /// Effect the estimate should recover, when known.
    truth: Option<f64>,
    planted: Option<f64>,
}

#[derive(Debug, Serialize)]
struct StudyReply {
    event: String,
    announcement_date: NaiveDate,
    fingerprint: String,
    n_obs: usize,
    n_clusters: usize,
    post_weeks: u32,
    rows: Vec<StudyRow>,
}

/// Event-study interactions of one event with 95% normal intervals.
pub fn event_study_json(request: &str) -> Result<String, String> {
    let req: StudyRequest = parse(request)?;
    let window = WindowDays::new(req.window).map_err(|e| e.to_string())?;
    with_session(|s| {
        let pair = s
            .data
            .pairs
            .pairs
            .iter()
            .find(|p| p.event == req.event)
            .ok_or_else(|| format!("unknown event `{}`", req.event))?;
        let options = AnalysisOptions {
            window,
            cr: req.cr,
            cluster_key: req.cluster_key,
            ..AnalysisOptions::default()
        };
        let r =
            run_event(&s.data, pair, req.outcome, req.spec, &options).map_err(|e| e.to_string())?;
        // ground truth is measured on the 7-day spend index
        let truth = (req.outcome == Outcome::SpendIndex && window.days() == 7)
            .then(|| s.truth.get(&pair.event))
            .flatten();
        let rows = r
            .interactions()
            .map(|c| {
                let week = c
                    .name
                    .strip_prefix("Treat*After_")
                    .and_then(|w| w.parse::<i64>().ok());
                StudyRow {
                    term: c.name.clone(),
                    week,
                    estimate: c.estimate,
                    se: c.se,
                    lo: c.estimate - 1.959963984540054 * c.se,
                    hi: c.estimate + 1.959963984540054 * c.se,
                    stars: c.stars.clone(),
                    truth: week.and_then(|w| truth.and_then(|t| t.get(&w).copied())),
                    planted: week.and_then(|w| s.planted.get(&w).copied()),
                }
            })
            .collect();
        reply(&StudyReply {
            event: pair.event.clone(),
            announcement_date: pair.announcement_date,
            fingerprint: options.fingerprint(),
            n_obs: r.n_obs,
            n_clusters: r.n_clusters,
            post_weeks: r.window.post_weeks,
            rows,
        })
    })
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramRequest {
    pub median_pence: f64,
    pub mean_pence: f64,
    pub n: usize,
    pub bins: usize,
    pub seed: u64,
}

impl Default for HistogramRequest {
    fn default() -> Self {
        let m = AmountModel::default();
        Self {
            median_pence: m.median_pence,
            mean_pence: m.mean_pence,
            n: 20_000,
            bins: 40,
            seed: 1,
        }
    }
}

#[derive(Debug, Serialize)]
struct HistogramReply {
    /// Bin edges in pence, log-spaced; `counts[i]` covers `[edges[i], edges[i+1])`.
    edges: Vec<f64>,
    counts: Vec<u64>,
    sample_median: f64,
    sample_mean: f64,
    mu: f64,
    sigma: f64,
}

/// Log-binned histogram of draws from the transaction amount model.
pub fn amount_histogram_json(request: &str) -> Result<String, String> {
    let req: HistogramRequest = parse(request)?;
    if req.n == 0 || req.n > 1_000_000 || req.bins == 0 || req.bins > 500 {
        return Err("n must be in 1..=1000000 and bins in 1..=500".into());
    }
    let model = AmountModel {
        median_pence: req.median_pence,
        mean_pence: req.mean_pence,
    };
    let (mu, sigma) = model.parameters().map_err(|e| e.to_string())?;
    let mut draws = model.sample(req.n, req.seed).map_err(|e| e.to_string())?;
    draws.sort_unstable();
    let hi = (*draws.last().expect("n > 0") as f64 + 1.0).log10();
    let step = hi / req.bins as f64;
    let edges: Vec<f64> = (0..=req.bins)
        .map(|i| 10f64.powf(i as f64 * step))
        .collect();
    let mut counts = vec![0u64; req.bins];
    for &d in &draws {
        let b = (((d as f64).log10() / step) as usize).min(req.bins - 1);
        counts[b] += 1;
    }
    let n = draws.len();
    let sample_median = if n % 2 == 1 {
        draws[n / 2] as f64
    } else {
        (draws[n / 2 - 1] + draws[n / 2]) as f64 / 2.0
    };
    reply(&HistogramReply {
        edges,
        counts,
        sample_median,
        sample_mean: draws.iter().sum::<u64>() as f64 / n as f64,
        mu,
        sigma,
    })
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn generate(request: &str) -> Result<String, JsError> {
    js(generate_json(request))
}

#[wasm_bindgen]
pub fn index_curves(request: &str) -> Result<String, JsError> {
    js(index_curves_json(request))
}

#[wasm_bindgen]
pub fn event_study(request: &str) -> Result<String, JsError> {
    js(event_study_json(request))
}

#[wasm_bindgen]
pub fn amount_histogram(request: &str) -> Result<String, JsError> {
    js(amount_histogram_json(request))
}
