//! Synthetic scenarios with planted lockdown effects, and brute-force
//! least-squares oracles used to cross-check the estimator.
//!
//! A scenario is built from an integer spend template per (segment, day):
//! base intensity times weekday, seasonal and common-shock factors. Every
//! authority spends its group offset times the template, treated authorities
//! additionally scaled by `1 + delta_W` in planted event weeks. Daily totals
//! are then split into individual card transactions with log-normal amounts
//! rescaled to the exact total, so the noiseless pipeline sees precisely the
//! planned totals.
//!
//! Randomness comes from ChaCha8 seeded with `seed`, using a separate stream
//! per data kind and authority (`kind << 32 | authority index`), so output
//! does not depend on thread scheduling.

mod oracle;

pub use oracle::{oracle_ols, oracle_sandwich};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dates::{parse_date, DateSpan, YearMonth};
use crate::error::{Error, Result};
use crate::estimator::week_bucket;
use crate::index::{
    date_fmt, default_baseline, index_from_daily, required_daily_span, DailySeries, IndexSpec,
    Series, SeriesFilter, WindowDays,
};
use crate::ingest::{
    self, CardType, CaseRecord, Channel, LockdownEvent, PopulationEntry, PopulationTable,
    Transaction, WatchlistCategory, MAX_AMOUNT_PENCE,
};
use crate::pipeline::InputPaths;

const STREAM_NOISE: u64 = 1;
const STREAM_AMOUNTS: u64 = 2;
const STREAM_CASES: u64 = 3;
const STREAM_BENCHMARK: u64 = 4;

fn rng(seed: u64, kind: u64, index: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(kind << 32 | index as u64);
    r
}

/// Log-normal transaction amounts pinned by their median and mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmountModel {
    pub median_pence: f64,
    pub mean_pence: f64,
}

impl Default for AmountModel {
    fn default() -> Self {
        Self {
            median_pence: 1500.0,
            mean_pence: 3900.0,
        }
    }
}

impl AmountModel {
    /// Location and scale: `mu = ln(median)`, `sigma^2 = 2 ln(mean / median)`.
    pub fn parameters(&self) -> Result<(f64, f64)> {
        if !(self.median_pence > 0.0 && self.mean_pence > self.median_pence) {
            return Err(Error::invalid("amount model needs 0 < median < mean"));
        }
        Ok((
            self.median_pence.ln(),
            (2.0 * (self.mean_pence / self.median_pence).ln()).sqrt(),
        ))
    }

    pub fn distribution(&self) -> Result<LogNormal<f64>> {
        let (mu, sigma) = self.parameters()?;
        LogNormal::new(mu, sigma).map_err(|e| Error::invalid(format!("amount model: {e}")))
    }

    /// Draws `n` amounts in whole pence (at least 1p each).
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<u64>> {
        let dist = self.distribution()?;
        let mut r = rng(seed, STREAM_AMOUNTS, 0);
        Ok((0..n)
            .map(|_| (dist.sample(&mut r).round() as u64).max(1))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub channel: Channel,
    pub category: String,
    /// Share of an authority's daily spend.
    pub share: f64,
}

/// Multiplier applied to every authority's spend on `[start, end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shock {
    #[serde(with = "date_fmt")]
    pub start: NaiveDate,
    #[serde(with = "date_fmt")]
    pub end: NaiveDate,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub name: String,
    #[serde(with = "date_fmt")]
    pub announcement_date: NaiveDate,
    #[serde(default = "intervention")]
    pub category: WatchlistCategory,
    pub treated_authorities: u32,
    pub control_authorities: u32,
}

fn intervention() -> WatchlistCategory {
    WatchlistCategory::Intervention
}

/// Integer spend multipliers of one authority, by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupOffsets {
    pub treated: u32,
    pub control: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeekEffect {
    pub week: i64,
    pub delta: f64,
}

/// Index options under which the induced effects in the ground truth are
/// measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthOptions {
    pub window_days: WindowDays,
    pub pre_weeks: u32,
    pub post_weeks: u32,
    #[serde(with = "date_fmt")]
    pub baseline_start: NaiveDate,
    #[serde(with = "date_fmt")]
    pub baseline_end: NaiveDate,
}

impl Default for TruthOptions {
    fn default() -> Self {
        let b = default_baseline();
        Self {
            window_days: WindowDays::SEVEN,
            pre_weeks: 4,
            post_weeks: 4,
            baseline_start: b.start,
            baseline_end: b.end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(with = "date_fmt")]
    pub start: NaiveDate,
    #[serde(with = "date_fmt")]
    pub end: NaiveDate,
    pub events: Vec<EventConfig>,
    pub accounts_per_authority: u32,
    pub sectors_per_authority: u32,
    /// Expected daily spend (pence) of one offset unit before weekday,
    /// seasonal and shock factors.
    pub daily_spend_pence: f64,
    pub amounts: AmountModel,
    pub segments: Vec<Segment>,
    pub common_shocks: Vec<Shock>,
    pub group_offsets: GroupOffsets,
    /// Residents per offset unit; also the regression weight.
    pub population_per_offset: u64,
    /// Multiplicative effects on treated spend in event weeks.
    pub planted_effects: Vec<WeekEffect>,
    /// Standard deviation of the mean-one log-normal noise on each
    /// authority-day total; 0 gives the exact planned totals.
    pub noise_scale: f64,
    /// Extra records (foreign currency, other cards, over the cap) per
    /// regular transaction. They never survive the filters.
    pub contaminant_share: f64,
    /// Scale of the synthetic epidemic curve, cases per 100,000 per day.
    pub cases_per_100k: f64,
    pub treated_case_multiplier: f64,
    /// Standard deviation of the noise added to the benchmark growth series.
    pub benchmark_noise: f64,
    pub truth: TruthOptions,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let d = |s: &str| parse_date(s).expect("valid literal");
        let seg = |channel, category: &str, share| Segment {
            channel,
            category: category.into(),
            share,
        };
        Self {
            seed: 1,
            start: d("2018-12-01"),
            end: d("2020-10-31"),
            events: vec![
                EventConfig {
                    name: "Northtown".into(),
                    announcement_date: d("2020-07-30"),
                    category: WatchlistCategory::Intervention,
                    treated_authorities: 3,
                    control_authorities: 3,
                },
                EventConfig {
                    name: "Eastborough".into(),
                    announcement_date: d("2020-10-08"),
                    category: WatchlistCategory::Intervention,
                    treated_authorities: 2,
                    control_authorities: 2,
                },
                EventConfig {
                    name: "Lakeside".into(),
                    announcement_date: d("2020-09-10"),
                    category: WatchlistCategory::Intervention,
                    treated_authorities: 1,
                    control_authorities: 0,
                },
            ],
            accounts_per_authority: 2000,
            sectors_per_authority: 4,
            daily_spend_pence: 200_000.0,
            amounts: AmountModel::default(),
            segments: vec![
                seg(Channel::Offline, "food_beverage", 0.30),
                seg(Channel::Offline, "retail", 0.25),
                seg(Channel::Offline, "hospitality", 0.15),
                seg(Channel::Online, "retail", 0.20),
                seg(Channel::Online, "digital", 0.10),
            ],
            common_shocks: vec![
                Shock {
                    start: d("2020-03-23"),
                    end: d("2020-05-12"),
                    multiplier: 0.55,
                },
                Shock {
                    start: d("2020-05-13"),
                    end: d("2020-07-03"),
                    multiplier: 0.8,
                },
                Shock {
                    start: d("2020-08-03"),
                    end: d("2020-08-31"),
                    multiplier: 1.08,
                },
            ],
            group_offsets: GroupOffsets {
                treated: 3,
                control: 2,
            },
            population_per_offset: 100_000,
            planted_effects: vec![
                WeekEffect {
                    week: -3,
                    delta: 0.0,
                },
                WeekEffect {
                    week: -2,
                    delta: 0.0,
                },
                WeekEffect {
                    week: -1,
                    delta: -0.02,
                },
                WeekEffect {
                    week: 1,
                    delta: -0.10,
                },
                WeekEffect {
                    week: 2,
                    delta: -0.15,
                },
                WeekEffect {
                    week: 3,
                    delta: -0.12,
                },
                WeekEffect {
                    week: 4,
                    delta: -0.08,
                },
            ],
            noise_scale: 0.0,
            contaminant_share: 0.01,
            cases_per_100k: 1.0,
            treated_case_multiplier: 1.5,
            benchmark_noise: 0.02,
            truth: TruthOptions::default(),
        }
    }
}

impl ScenarioConfig {
    /// Hex SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn span(&self) -> DateSpan {
        DateSpan {
            start: self.start,
            end: self.end,
        }
    }

    pub fn planted(&self) -> BTreeMap<i64, f64> {
        self.planted_effects
            .iter()
            .map(|e| (e.week, e.delta))
            .collect()
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if self.end <= self.start {
            return Err(Error::invalid(format!(
                "degenerate scenario span {}..{}",
                self.start, self.end
            )));
        }
        if self.events.is_empty() {
            return Err(Error::invalid("scenario has no events"));
        }
        let n_auth: u32 = self
            .events
            .iter()
            .map(|e| e.treated_authorities + e.control_authorities)
            .sum();
        if self.events.iter().any(|e| e.treated_authorities == 0) || n_auth > 676 {
            return Err(Error::invalid(
                "every event needs treated authorities; at most 676 authorities in total",
            ));
        }
        if !(1..=90).contains(&self.sectors_per_authority) || self.accounts_per_authority == 0 {
            return Err(Error::invalid(
                "need 1..=90 sectors and at least one account per authority",
            ));
        }
        if self.segments.is_empty() || self.segments.iter().any(|s| !(s.share > 0.0)) {
            return Err(Error::invalid("segments need positive shares"));
        }
        if self.group_offsets.treated == 0 || self.group_offsets.control == 0 {
            return Err(Error::invalid("group offsets must be positive"));
        }
        if !(self.daily_spend_pence > 0.0) || self.population_per_offset == 0 {
            return Err(Error::invalid(
                "spend intensity and population must be positive",
            ));
        }
        let mut weeks = std::collections::BTreeSet::new();
        for e in &self.planted_effects {
            if !((-3..=-1).contains(&e.week) || (1..=4).contains(&e.week)) {
                return Err(Error::invalid(format!(
                    "planted effect for week {} outside -3..-1, 1..4",
                    e.week
                )));
            }
            if !weeks.insert(e.week) || !(e.delta > -1.0) {
                return Err(Error::invalid(format!(
                    "bad planted effect for week {}",
                    e.week
                )));
            }
        }
        if !(self.noise_scale >= 0.0
            && self.contaminant_share >= 0.0
            && self.benchmark_noise >= 0.0)
        {
            return Err(Error::invalid("noise scales must be non-negative"));
        }
        if !(self.cases_per_100k >= 0.0 && self.treated_case_multiplier >= 0.0) {
            return Err(Error::invalid("case intensity must be non-negative"));
        }
        self.amounts.parameters()?;
        Ok(())
    }
}

/// One synthetic authority.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthAuthority {
    pub code: String,
    pub event: usize,
    pub treated: bool,
    pub offset: u32,
    pub population: u64,
    pub region: String,
    pub urban_class: String,
    pub sectors: Vec<String>,
}

fn sector_code(authority: usize, k: usize) -> String {
    let a = (b'A' + (authority / 26) as u8) as char;
    let b = (b'A' + (authority % 26) as u8) as char;
    format!("{a}{b}{} {}", 1 + k / 10, k % 10)
}

fn authorities(cfg: &ScenarioConfig) -> Vec<SynthAuthority> {
    let mut out = Vec::new();
    for (ei, e) in cfg.events.iter().enumerate() {
        let roles = std::iter::repeat_n(true, e.treated_authorities as usize)
            .chain(std::iter::repeat_n(false, e.control_authorities as usize));
        for treated in roles {
            let i = out.len();
            let offset = if treated {
                cfg.group_offsets.treated
            } else {
                cfg.group_offsets.control
            };
            out.push(SynthAuthority {
                code: format!("E{:08}", 6_000_001 + i),
                event: ei,
                treated,
                offset,
                population: offset as u64 * cfg.population_per_offset,
                region: format!("R{}", ei + 1),
                urban_class: if i % 2 == 0 { "urban" } else { "rural" }.into(),
                sectors: (0..cfg.sectors_per_authority as usize)
                    .map(|k| sector_code(i, k))
                    .collect(),
            });
        }
    }
    out
}

const WEEKDAY_FACTORS: [f64; 7] = [0.92, 0.95, 0.97, 1.0, 1.12, 1.22, 0.82];

/// Integer spend template in pence, indexed `[day][segment]`.
fn template(cfg: &ScenarioConfig) -> Vec<Vec<u64>> {
    cfg.span()
        .days()
        .map(|d| {
            let weekday = WEEKDAY_FACTORS[d.weekday().num_days_from_monday() as usize];
            let phase = 2.0 * std::f64::consts::PI * (d.ordinal0() as f64 - 350.0) / 365.25;
            let season = 1.0 + 0.12 * phase.cos();
            let shock: f64 = cfg
                .common_shocks
                .iter()
                .filter(|s| s.start <= d && d <= s.end)
                .map(|s| s.multiplier)
                .product();
            cfg.segments
                .iter()
                .map(|s| {
                    (cfg.daily_spend_pence * s.share * weekday * season * shock).round() as u64
                })
                .collect()
        })
        .collect()
}

fn planted_delta(
    cfg: &ScenarioConfig,
    planted: &BTreeMap<i64, f64>,
    a: &SynthAuthority,
    d: NaiveDate,
) -> f64 {
    if !a.treated {
        return 0.0;
    }
    let t = (d - cfg.events[a.event].announcement_date).num_days();
    planted.get(&week_bucket(t)).copied().unwrap_or(0.0)
}

/// Daily spend totals `[day][segment]` of one authority.
fn authority_totals(
    cfg: &ScenarioConfig,
    template: &[Vec<u64>],
    planted: &BTreeMap<i64, f64>,
    index: usize,
    a: &SynthAuthority,
    noisy: bool,
) -> Vec<Vec<u64>> {
    let mut r = rng(cfg.seed, STREAM_NOISE, index);
    let sigma = if noisy { cfg.noise_scale } else { 0.0 };
    cfg.span()
        .days()
        .zip(template)
        .map(|(d, day)| {
            let delta = planted_delta(cfg, planted, a, d);
            let noise = if sigma > 0.0 {
                let z: f64 = r.sample(StandardNormal);
                (sigma * z - 0.5 * sigma * sigma).exp()
            } else {
                1.0
            };
            day.iter()
                .map(|&t| {
                    let exact = a.offset as u64 * t;
                    if delta == 0.0 && noise == 1.0 {
                        exact
                    } else {
                        (exact as f64 * (1.0 + delta) * noise).round() as u64
                    }
                })
                .collect()
        })
        .collect()
}

/// Splits `total` pence into log-normal shaped amounts summing exactly to
/// `total`, none above the cap.
fn split_total(total: u64, mean: f64, dist: &LogNormal<f64>, r: &mut ChaCha8Rng) -> Vec<u64> {
    if total == 0 {
        return Vec::new();
    }
    let by_mean = (total as f64 / mean).round().max(1.0) as u64;
    let n = by_mean.max(total.div_ceil(MAX_AMOUNT_PENCE / 2)).min(total) as usize;
    let raw: Vec<f64> = (0..n)
        .map(|_| dist.sample(r).min(MAX_AMOUNT_PENCE as f64 / 4.0))
        .collect();
    let sum: f64 = raw.iter().sum();
    let spare = (total - n as u64) as f64;
    let mut amounts: Vec<u64> = raw
        .iter()
        .map(|v| 1 + (v * spare / sum).floor() as u64)
        .collect();
    let assigned: u64 = amounts.iter().sum();
    let mut remainder = total - assigned;
    for a in amounts.iter_mut() {
        if remainder == 0 {
            break;
        }
        *a += 1;
        remainder -= 1;
    }
    if remainder > 0 || amounts.iter().any(|&a| a > MAX_AMOUNT_PENCE) {
        let base = total / n as u64;
        let extra = (total % n as u64) as usize;
        amounts = (0..n).map(|i| base + u64::from(i < extra)).collect();
    }
    amounts
}

fn contaminant(t: &Transaction, r: &mut ChaCha8Rng) -> Transaction {
    let mut c = t.clone();
    match r.random_range(0..10u32) {
        0..=4 => c.currency = "EUR".into(),
        5..=8 => c.card_type = CardType::Other,
        _ => c.amount_pence = MAX_AMOUNT_PENCE + 1 + r.random_range(0..1_000_000u64),
    }
    c
}

/// Transactions of one authority, grouped by day.
fn authority_transactions(
    cfg: &ScenarioConfig,
    totals: &[Vec<u64>],
    index: usize,
    a: &SynthAuthority,
    dist: &LogNormal<f64>,
) -> Vec<Vec<Transaction>> {
    let mut r = rng(cfg.seed, STREAM_AMOUNTS, index);
    cfg.span()
        .days()
        .zip(totals)
        .map(|(date, day)| {
            let mut out = Vec::new();
            for (seg, &total) in cfg.segments.iter().zip(day) {
                for amount_pence in split_total(total, cfg.amounts.mean_pence, dist, &mut r) {
                    let account = r.random_range(0..cfg.accounts_per_authority) as usize;
                    out.push(Transaction {
                        account_id: format!("{}-{account:05}", a.code),
                        date,
                        amount_pence,
                        currency: "GBP".into(),
                        card_type: CardType::ConsumerCredit,
                        channel: seg.channel,
                        category: seg.category.clone(),
                        cardholder_sector: a.sectors[account % a.sectors.len()].clone(),
                        merchant_authority: (seg.channel == Channel::Offline)
                            .then(|| a.code.clone()),
                    });
                }
            }
            let expected = out.len() as f64 * cfg.contaminant_share;
            let mut n_extra = expected.floor() as usize;
            if !out.is_empty() && r.random::<f64>() < expected.fract() {
                n_extra += 1;
            }
            for _ in 0..n_extra {
                let i = r.random_range(0..out.len());
                let c = contaminant(&out[i], &mut r);
                out.push(c);
            }
            out
        })
        .collect()
}

/// Synthetic epidemic curve in cases per 100,000 per day.
fn epidemic_curve(d: NaiveDate) -> f64 {
    let day = |s: &str| parse_date(s).expect("valid literal");
    if d < day("2020-02-01") {
        return 0.0;
    }
    let first = (d - day("2020-04-12")).num_days() as f64 / 20.0;
    let second = (d - day("2020-07-01")).num_days() as f64 / 30.0;
    0.2 + 6.0 * (-0.5 * first * first).exp() + 0.5 * second.max(0.0).exp()
        - 0.5 * f64::from(second > 0.0)
}

fn authority_cases(cfg: &ScenarioConfig, index: usize, a: &SynthAuthority) -> Vec<CaseRecord> {
    let mut r = rng(cfg.seed, STREAM_CASES, index);
    let multiplier = if a.treated {
        cfg.treated_case_multiplier
    } else {
        1.0
    };
    let first = parse_date("2020-01-01")
        .expect("valid literal")
        .max(cfg.start);
    cfg.span()
        .days()
        .filter(|&d| d >= first)
        .map(|date| {
            let lambda =
                cfg.cases_per_100k * epidemic_curve(date) * multiplier * a.population as f64 / 1e5;
            let new_cases = if cfg.noise_scale == 0.0 || lambda <= 0.0 {
                lambda.round() as u64
            } else {
                Poisson::new(lambda)
                    .map(|p| p.sample(&mut r) as u64)
                    .unwrap_or(0)
            };
            CaseRecord {
                authority: a.code.clone(),
                date,
                new_cases,
            }
        })
        .collect()
}

fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(usize, &T) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Multiplicative effects on treated spend, by event week.
    pub planted_effects: BTreeMap<i64, f64>,
    /// Effects on the offline spend index implied by the noiseless scenario,
    /// by event and event week: the week mean of the treated minus control
    /// index, less the same difference in week 0.
    pub induced_index_effects: BTreeMap<String, BTreeMap<i64, f64>>,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub authorities: Vec<SynthAuthority>,
    pub transactions: Vec<Transaction>,
    pub cases: Vec<CaseRecord>,
    pub lockdowns: Vec<LockdownEvent>,
    pub population: PopulationTable,
    pub geo_lookup: Vec<(String, String)>,
    pub benchmark: BTreeMap<YearMonth, f64>,
    pub ground_truth: GroundTruth,
}

/// Offline daily totals of a set of authorities.
fn offline_daily(
    cfg: &ScenarioConfig,
    totals: &[Vec<Vec<u64>>],
    members: impl Iterator<Item = usize> + Clone,
    name: &str,
) -> DailySeries {
    let values = (0..cfg.span().len())
        .map(|d| {
            members
                .clone()
                .map(|a| {
                    cfg.segments
                        .iter()
                        .zip(&totals[a][d])
                        .filter(|(s, _)| s.channel == Channel::Offline)
                        .map(|(_, v)| v)
                        .sum::<u64>()
                })
                .sum()
        })
        .collect();
    DailySeries {
        geography: name.to_string(),
        filter: SeriesFilter::offline(),
        totals: Series::new(cfg.start, values),
    }
}

fn induced_effects(
    cfg: &ScenarioConfig,
    auths: &[SynthAuthority],
    totals: &[Vec<Vec<u64>>],
) -> Result<BTreeMap<String, BTreeMap<i64, f64>>> {
    let truth = cfg.truth;
    let baseline = DateSpan::new(truth.baseline_start, truth.baseline_end)?;
    let mut out = BTreeMap::new();
    for (ei, e) in cfg.events.iter().enumerate() {
        if e.control_authorities == 0 || e.category != WatchlistCategory::Intervention {
            continue;
        }
        let ann = e.announcement_date;
        let available = ((cfg.end - ann).num_days() + 1).div_euclid(7).max(0) as u32;
        let post = truth.post_weeks.min(available);
        if post == 0 {
            continue;
        }
        let first = ann - Duration::days(7 * truth.pre_weeks as i64);
        let last = ann + Duration::days(7 * post as i64 - 1);
        let spec = IndexSpec {
            filter: SeriesFilter::offline(),
            window: truth.window_days,
            baseline,
            span: DateSpan::new(baseline.start.min(first), last)?,
        };
        let needed = required_daily_span(&spec);
        if needed.start < cfg.start {
            return Err(Error::invalid(format!(
                "scenario must start by {} to index event {}",
                needed.start, e.name
            )));
        }
        let index_of = |treated: bool| -> Result<Vec<f64>> {
            let members = auths
                .iter()
                .enumerate()
                .filter(|(_, a)| a.event == ei && a.treated == treated)
                .map(|(i, _)| i);
            let daily = offline_daily(cfg, totals, members, &e.name);
            let daily = DailySeries {
                totals: daily.totals.slice(needed)?,
                ..daily
            };
            let index = index_from_daily(&daily, &spec)?;
            Ok(index.defined_over(DateSpan::new(first, last)?)?.values)
        };
        let (it, ic) = (index_of(true)?, index_of(false)?);
        let mut sums: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
        for (i, (a, b)) in it.iter().zip(&ic).enumerate() {
            let w = week_bucket(i as i64 - 7 * truth.pre_weeks as i64);
            let entry = sums.entry(w).or_insert((0.0, 0));
            entry.0 += a - b;
            entry.1 += 1;
        }
        let mean = |w: i64| sums[&w].0 / sums[&w].1 as f64;
        let base = mean(0);
        let effects = sums
            .keys()
            .filter(|&&w| w != 0)
            .map(|&w| (w, mean(w) - base))
            .collect();
        out.insert(e.name.clone(), effects);
    }
    Ok(out)
}

fn benchmark(cfg: &ScenarioConfig, totals: &[Vec<Vec<u64>>]) -> BTreeMap<YearMonth, f64> {
    let mut monthly: BTreeMap<YearMonth, u64> = BTreeMap::new();
    for (d, date) in cfg.span().days().enumerate() {
        let day: u64 = totals.iter().map(|a| a[d].iter().sum::<u64>()).sum();
        *monthly.entry(YearMonth::of(date)).or_insert(0) += day;
    }
    // only complete months
    let first = YearMonth::of(cfg.start);
    let last = YearMonth::of(cfg.end);
    if cfg.start.day() != 1 {
        monthly.remove(&first);
    }
    if (cfg.end + Duration::days(1)).day() != 1 {
        monthly.remove(&last);
    }
    let mut r = rng(cfg.seed, STREAM_BENCHMARK, 0);
    crate::index::monthly_yoy_growth(&monthly)
        .into_iter()
        .map(|(m, g)| {
            let z: f64 = r.sample(StandardNormal);
            (m, g + cfg.benchmark_noise * z)
        })
        .collect()
}

/// Generates a full scenario. The same configuration always yields the same
/// data.
pub fn gen_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let auths = authorities(cfg);
    let template = template(cfg);
    let planted = cfg.planted();
    let dist = cfg.amounts.distribution()?;

    let exact: Vec<Vec<Vec<u64>>> = par_map(&auths, |i, a| {
        authority_totals(cfg, &template, &planted, i, a, false)
    });
    let induced_index_effects = induced_effects(cfg, &auths, &exact)?;
    let totals = if cfg.noise_scale > 0.0 {
        par_map(&auths, |i, a| {
            authority_totals(cfg, &template, &planted, i, a, true)
        })
    } else {
        exact
    };

    let per_authority: Vec<Vec<Vec<Transaction>>> = par_map(&auths, |i, a| {
        authority_transactions(cfg, &totals[i], i, a, &dist)
    });
    let mut transactions = Vec::new();
    for d in 0..cfg.span().len() {
        for days in &per_authority {
            transactions.extend_from_slice(&days[d]);
        }
    }

    let cases = par_map(&auths, |i, a| authority_cases(cfg, i, a))
        .into_iter()
        .flatten()
        .collect();

    let lockdowns = cfg
        .events
        .iter()
        .enumerate()
        .map(|(ei, e)| {
            let members = |treated: bool| {
                auths
                    .iter()
                    .filter(|a| a.event == ei && a.treated == treated)
                    .map(|a| a.code.clone())
                    .collect()
            };
            LockdownEvent {
                name: e.name.clone(),
                announcement_date: e.announcement_date,
                category: e.category,
                treated_authorities: members(true),
                control_authorities: members(false),
            }
        })
        .collect();

    let population = auths
        .iter()
        .map(|a| {
            (
                a.code.clone(),
                PopulationEntry {
                    region: a.region.clone(),
                    population_2019: a.population,
                    urban_class: Some(a.urban_class.clone()),
                },
            )
        })
        .collect();
    let geo_lookup = auths
        .iter()
        .flat_map(|a| a.sectors.iter().map(|s| (s.clone(), a.code.clone())))
        .collect();

    Ok(Scenario {
        benchmark: benchmark(cfg, &totals),
        ground_truth: GroundTruth {
            planted_effects: planted,
            induced_index_effects,
            seed: cfg.seed,
            config_hash: cfg.hash(),
        },
        config: cfg.clone(),
        authorities: auths,
        transactions,
        cases,
        lockdowns,
        population,
        geo_lookup,
    })
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const SCENARIO_FILE: &str = "scenario.json";

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

impl Scenario {
    /// Writes the five input tables, the benchmark series, the ground truth
    /// and the configuration into `dir` using the standard file names.
    pub fn write_to(&self, dir: &Path) -> Result<InputPaths> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = InputPaths::in_dir(dir);
        ingest::write_transactions(create(&paths.transactions)?, &self.transactions)?;
        ingest::write_cases(create(&paths.cases)?, &self.cases)?;
        ingest::write_lockdowns(create(&paths.lockdowns)?, &self.lockdowns)?;
        ingest::write_population(create(&paths.population)?, &self.population)?;
        ingest::write_geo_lookup(create(&paths.geo_lookup)?, &self.geo_lookup)?;
        let bench = paths
            .benchmark
            .clone()
            .expect("in_dir sets a benchmark path");
        crate::index::write_benchmark(create(&bench)?, &self.benchmark)?;
        write_json(&dir.join(GROUND_TRUTH_FILE), &self.ground_truth)?;
        write_json(&dir.join(SCENARIO_FILE), &self.config)?;
        Ok(paths)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
