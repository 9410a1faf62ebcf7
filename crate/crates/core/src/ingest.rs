//! Parsing, validation and filtering of the input tables.
//!
//! Five UTF-8 CSV files feed the pipeline: card transactions, daily case
//! counts per authority, the lockdown schedule, 2019 resident populations
//! and the postcode-sector lookup. Malformed rows are collected into a
//! row-indexed [`RowError`] report and skipped, unless strict mode is on, in
//! which case the first bad row aborts the parse.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dates::{parse_date, DateSpan, DATE_FORMAT};
use crate::error::{Error, Result};

pub const TRANSACTION_COLUMNS: [&str; 9] = [
    "account_id",
    "date",
    "amount_pence",
    "currency",
    "card_type",
    "channel",
    "category",
    "cardholder_sector",
    "merchant_authority",
];
pub const CASE_COLUMNS: [&str; 3] = ["authority", "date", "new_cases"];
pub const LOCKDOWN_COLUMNS: [&str; 5] = [
    "name",
    "announcement_date",
    "category",
    "treated_authorities",
    "control_authorities",
];
pub const POPULATION_COLUMNS: [&str; 3] = ["authority", "region", "population_2019"];
pub const GEO_COLUMNS: [&str; 2] = ["sector", "authority"];

/// Largest amount kept by the default filter: £50,000.00.
pub const MAX_AMOUNT_PENCE: u64 = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardType {
    ConsumerCredit,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Online,
    Offline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WatchlistCategory {
    Concern,
    EnhancedSupport,
    Intervention,
}

macro_rules! text_enum {
    ($ty:ty, $what:literal, { $($variant:path => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self {
                    $($variant => $text,)+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($text => Ok($variant),)+
                    other => Err(Error::invalid(format!("unknown {} `{}`", $what, other))),
                }
            }
        }
    };
}

text_enum!(CardType, "card_type", {
    CardType::ConsumerCredit => "consumer_credit",
    CardType::Other => "other",
});
text_enum!(Channel, "channel", {
    Channel::Online => "online",
    Channel::Offline => "offline",
});
text_enum!(WatchlistCategory, "watchlist category", {
    WatchlistCategory::Concern => "concern",
    WatchlistCategory::EnhancedSupport => "enhanced_support",
    WatchlistCategory::Intervention => "intervention",
});

/// One card spend record.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Transaction {
    pub account_id: String,
    pub date: NaiveDate,
    pub amount_pence: u64,
    pub currency: String,
    pub card_type: CardType,
    pub channel: Channel,
    pub category: String,
    /// Canonical postcode sector of the cardholder's address, e.g. `M1 4`.
    pub cardholder_sector: String,
    pub merchant_authority: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub authority: String,
    pub date: NaiveDate,
    pub new_cases: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockdownEvent {
    pub name: String,
    pub announcement_date: NaiveDate,
    pub category: WatchlistCategory,
    pub treated_authorities: Vec<String>,
    pub control_authorities: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Treatment,
    Control,
}

/// A named set of authorities analysed as one unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalityGroup {
    pub name: String,
    pub authorities: BTreeSet<String>,
    pub population_2019: u64,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationEntry {
    pub region: String,
    pub population_2019: u64,
    pub urban_class: Option<String>,
}

pub type PopulationTable = BTreeMap<String, PopulationEntry>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GeoLookup {
    pub sector_to_authority: HashMap<String, String>,
    pub authority_to_region: HashMap<String, String>,
    pub authority_to_urbanclass: Option<HashMap<String, String>>,
}

impl GeoLookup {
    /// Combines the sector table with the region and urban-class columns of
    /// the population table.
    pub fn new(sectors: Vec<(String, String)>, population: &PopulationTable) -> Self {
        let authority_to_region = population
            .iter()
            .map(|(a, e)| (a.clone(), e.region.clone()))
            .collect();
        let classes: HashMap<_, _> = population
            .iter()
            .filter_map(|(a, e)| e.urban_class.clone().map(|c| (a.clone(), c)))
            .collect();
        Self {
            sector_to_authority: sectors.into_iter().collect(),
            authority_to_region,
            authority_to_urbanclass: (!classes.is_empty()).then_some(classes),
        }
    }

    pub fn authorities_in_region(&self, region: &str) -> BTreeSet<String> {
        self.authority_to_region
            .iter()
            .filter(|(_, r)| r.as_str() == region)
            .map(|(a, _)| a.clone())
            .collect()
    }

    pub fn authorities_in_urban_class(&self, class: &str) -> BTreeSet<String> {
        self.authority_to_urbanclass
            .iter()
            .flatten()
            .filter(|(_, c)| c.as_str() == class)
            .map(|(a, _)| a.clone())
            .collect()
    }
}

/// Canonical single-space uppercase form of a postcode sector.
///
/// Whitespace is removed and one space inserted before the final digit, so
/// `m14`, `M1  4` and ` m1 4` all become `M1 4`. Returns `None` when the
/// result does not have the sector shape `A[A]9[A9] 9`.
pub fn normalize_sector(raw: &str) -> Option<String> {
    let compact: String = raw
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| c.to_ascii_uppercase())
        .collect();
    if compact.len() < 3 || !compact.is_ascii() {
        return None;
    }
    let (outward, digit) = compact.split_at(compact.len() - 1);
    let canonical = format!("{outward} {digit}");
    is_sector_shape(&canonical).then_some(canonical)
}

fn is_sector_shape(s: &str) -> bool {
    let b = s.as_bytes();
    let letters = b.iter().take_while(|c| c.is_ascii_uppercase()).count();
    if !(1..=2).contains(&letters) {
        return false;
    }
    let rest = &b[letters..];
    // rest is `9[A9] 9`
    match rest {
        [d, b' ', s] => d.is_ascii_digit() && s.is_ascii_digit(),
        [d, x, b' ', s] => {
            d.is_ascii_digit()
                && (x.is_ascii_uppercase() || x.is_ascii_digit())
                && s.is_ascii_digit()
        }
        _ => false,
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseConfig {
    /// Abort on the first malformed row instead of recording it.
    pub strict: bool,
    /// Transactions dated outside this window are malformed.
    pub window: Option<DateSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based data row number (the header is row 0).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub errors: Vec<RowError>,
}

impl<T> Parsed<T> {
    /// Concatenates shard results in shard order, renumbering rows so they
    /// stay unique across the merged report.
    pub fn merge(shards: Vec<Parsed<T>>, shard_rows: &[usize]) -> Parsed<T> {
        let mut out = Parsed {
            records: Vec::new(),
            errors: Vec::new(),
        };
        let mut offset = 0;
        for (shard, rows) in shards.into_iter().zip(shard_rows) {
            out.records.extend(shard.records);
            out.errors
                .extend(shard.errors.into_iter().map(|e| RowError {
                    row: e.row + offset,
                    reason: e.reason,
                }));
            offset += rows;
        }
        out
    }
}

/// Writes the error report as JSON lines `{"row":..,"reason":..}`.
pub fn write_error_report<W: Write>(mut w: W, errors: &[RowError]) -> Result<()> {
    for e in errors {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")
            .map_err(|source| Error::io("<error report>", source))?;
    }
    Ok(())
}

struct Columns(Vec<usize>);

impl Columns {
    fn locate(headers: &csv::StringRecord, required: &[&str]) -> Result<Self> {
        required
            .iter()
            .map(|col| {
                headers
                    .iter()
                    .position(|h| h.trim() == *col)
                    .ok_or_else(|| Error::MissingColumn {
                        column: col.to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()
            .map(Columns)
    }

    fn optional(headers: &csv::StringRecord, col: &str) -> Option<usize> {
        headers.iter().position(|h| h.trim() == col)
    }

    fn get<'r>(&self, rec: &'r csv::StringRecord, i: usize) -> &'r str {
        rec.get(self.0[i]).unwrap_or("").trim()
    }
}

/// Drives a CSV table through `parse_row`, collecting row errors.
fn parse_table<R, T, F>(
    input: R,
    required: &[&str],
    optional: &[&str],
    config: &ParseConfig,
    mut parse_row: F,
) -> Result<Parsed<T>>
where
    R: Read,
    F: FnMut(&Columns, &[Option<usize>], &csv::StringRecord) -> std::result::Result<T, String>,
{
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let cols = Columns::locate(&headers, required)?;
    let opt: Vec<Option<usize>> = optional
        .iter()
        .map(|c| Columns::optional(&headers, c))
        .collect();
    let width = headers.len();

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let outcome = match rec {
            Ok(rec) if rec.len() != width => Err(format!(
                "wrong field count: expected {width}, found {}",
                rec.len()
            )),
            Ok(rec) => parse_row(&cols, &opt, &rec),
            Err(e) => Err(format!("unreadable row: {e}")),
        };
        match outcome {
            Ok(t) => records.push(t),
            Err(reason) if config.strict => return Err(Error::Row { row, reason }),
            Err(reason) => errors.push(RowError { row, reason }),
        }
    }
    Ok(Parsed { records, errors })
}

fn field_date(s: &str) -> std::result::Result<NaiveDate, String> {
    parse_date(s).map_err(|e| e.to_string())
}

fn non_empty(s: &str, what: &str) -> std::result::Result<String, String> {
    if s.is_empty() {
        Err(format!("empty {what}"))
    } else {
        Ok(s.to_string())
    }
}

pub fn parse_transactions<R: Read>(input: R, config: &ParseConfig) -> Result<Parsed<Transaction>> {
    parse_table(input, &TRANSACTION_COLUMNS, &[], config, |c, _, rec| {
        let date = field_date(c.get(rec, 1))?;
        if let Some(window) = config.window {
            if !window.contains(date) {
                return Err(format!("date {date} outside data window {window}"));
            }
        }
        let amount: i64 = c
            .get(rec, 2)
            .parse()
            .map_err(|_| format!("unparseable amount `{}`", c.get(rec, 2)))?;
        if amount <= 0 {
            return Err("non-positive amount".to_string());
        }
        let sector_raw = c.get(rec, 7);
        let cardholder_sector = normalize_sector(sector_raw)
            .ok_or_else(|| format!("malformed postcode sector `{sector_raw}`"))?;
        let merchant = c.get(rec, 8);
        Ok(Transaction {
            account_id: non_empty(c.get(rec, 0), "account_id")?,
            date,
            amount_pence: amount as u64,
            currency: non_empty(c.get(rec, 3), "currency")?.to_ascii_uppercase(),
            card_type: c.get(rec, 4).parse().map_err(|e: Error| e.to_string())?,
            channel: c.get(rec, 5).parse().map_err(|e: Error| e.to_string())?,
            category: non_empty(c.get(rec, 6), "category")?,
            cardholder_sector,
            merchant_authority: (!merchant.is_empty()).then(|| merchant.to_string()),
        })
    })
}

/// Parses several complete CSV shards (each with its own header) and merges
/// them in input order. Shards are parsed in parallel when the `parallel`
/// feature is on; the merged result does not depend on scheduling.
pub fn parse_transaction_shards(
    shards: &[&[u8]],
    config: &ParseConfig,
) -> Result<Parsed<Transaction>> {
    let parse = |s: &&[u8]| parse_transactions(*s, config).map(|p| (count_rows(s), p));
    #[cfg(feature = "parallel")]
    let results: Vec<_> = {
        use rayon::prelude::*;
        shards.par_iter().map(parse).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = shards.iter().map(parse).collect::<Result<_>>()?;
    let rows: Vec<usize> = results.iter().map(|(n, _)| *n).collect();
    Ok(Parsed::merge(
        results.into_iter().map(|(_, p)| p).collect(),
        &rows,
    ))
}

fn count_rows(shard: &[u8]) -> usize {
    csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(shard)
        .records()
        .count()
}

pub fn parse_cases<R: Read>(input: R, config: &ParseConfig) -> Result<Parsed<CaseRecord>> {
    parse_table(input, &CASE_COLUMNS, &[], config, |c, _, rec| {
        Ok(CaseRecord {
            authority: non_empty(c.get(rec, 0), "authority")?,
            date: field_date(c.get(rec, 1))?,
            new_cases: c
                .get(rec, 2)
                .parse()
                .map_err(|_| format!("bad case count `{}`", c.get(rec, 2)))?,
        })
    })
}

fn split_authorities(s: &str) -> Vec<String> {
    s.split(';')
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn parse_lockdowns<R: Read>(input: R, config: &ParseConfig) -> Result<Parsed<LockdownEvent>> {
    parse_table(input, &LOCKDOWN_COLUMNS, &[], config, |c, _, rec| {
        let treated = split_authorities(c.get(rec, 3));
        let control = split_authorities(c.get(rec, 4));
        if treated.is_empty() {
            return Err("no treated authorities".to_string());
        }
        if let Some(a) = treated.iter().find(|a| control.contains(a)) {
            return Err(format!("authority `{a}` is both treated and control"));
        }
        Ok(LockdownEvent {
            name: non_empty(c.get(rec, 0), "name")?,
            announcement_date: field_date(c.get(rec, 1))?,
            category: c.get(rec, 2).parse().map_err(|e: Error| e.to_string())?,
            treated_authorities: treated,
            control_authorities: control,
        })
    })
}

/// Parses `population.csv`; an optional `urban_class` column is carried
/// into [`PopulationEntry::urban_class`].
pub fn parse_population<R: Read>(input: R, config: &ParseConfig) -> Result<PopulationTable> {
    let parsed = parse_table(
        input,
        &POPULATION_COLUMNS,
        &["urban_class"],
        config,
        |c, opt, rec| {
            let pop: u64 = c
                .get(rec, 2)
                .parse()
                .map_err(|_| format!("bad population `{}`", c.get(rec, 2)))?;
            if pop == 0 {
                return Err("population must be positive".to_string());
            }
            let urban_class = opt[0]
                .and_then(|i| rec.get(i))
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string);
            Ok((
                non_empty(c.get(rec, 0), "authority")?,
                PopulationEntry {
                    region: c.get(rec, 1).to_string(),
                    population_2019: pop,
                    urban_class,
                },
            ))
        },
    )?;
    let mut table = PopulationTable::new();
    for (row, (authority, entry)) in parsed.records.into_iter().enumerate() {
        if table.insert(authority.clone(), entry).is_some() {
            return Err(Error::Row {
                row: row + 1,
                reason: format!("duplicate authority `{authority}`"),
            });
        }
    }
    Ok(table)
}

/// Parses `geo_lookup.csv` into sector → authority pairs. A sector listed
/// twice with different authorities is a row error.
pub fn parse_geo_lookup<R: Read>(
    input: R,
    config: &ParseConfig,
) -> Result<Parsed<(String, String)>> {
    let mut seen: HashMap<String, String> = HashMap::new();
    parse_table(input, &GEO_COLUMNS, &[], config, |c, _, rec| {
        let raw = c.get(rec, 0);
        let sector =
            normalize_sector(raw).ok_or_else(|| format!("malformed postcode sector `{raw}`"))?;
        let authority = non_empty(c.get(rec, 1), "authority")?;
        match seen.get(&sector) {
            Some(prev) if *prev != authority => Err(format!(
                "sector `{sector}` mapped to both `{prev}` and `{authority}`"
            )),
            _ => {
                seen.insert(sector.clone(), authority.clone());
                Ok((sector, authority))
            }
        }
    })
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

pub fn write_transactions<W: Write>(w: W, txns: &[Transaction]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(TRANSACTION_COLUMNS)?;
    for t in txns {
        out.write_record([
            t.account_id.as_str(),
            &t.date.format(DATE_FORMAT).to_string(),
            &t.amount_pence.to_string(),
            &t.currency,
            t.card_type.as_str(),
            t.channel.as_str(),
            &t.category,
            &t.cardholder_sector,
            t.merchant_authority.as_deref().unwrap_or(""),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<transactions>", e))?;
    Ok(())
}

pub fn write_cases<W: Write>(w: W, cases: &[CaseRecord]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(CASE_COLUMNS)?;
    for c in cases {
        out.write_record([
            c.authority.as_str(),
            &c.date.format(DATE_FORMAT).to_string(),
            &c.new_cases.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<cases>", e))?;
    Ok(())
}

pub fn write_lockdowns<W: Write>(w: W, events: &[LockdownEvent]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(LOCKDOWN_COLUMNS)?;
    for e in events {
        out.write_record([
            e.name.as_str(),
            &e.announcement_date.format(DATE_FORMAT).to_string(),
            e.category.as_str(),
            &e.treated_authorities.join(";"),
            &e.control_authorities.join(";"),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<lockdowns>", e))?;
    Ok(())
}

pub fn write_population<W: Write>(w: W, table: &PopulationTable) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(POPULATION_COLUMNS)?;
    for (a, e) in table {
        out.write_record([a.as_str(), &e.region, &e.population_2019.to_string()])?;
    }
    out.flush().map_err(|e| Error::io("<population>", e))?;
    Ok(())
}

pub fn write_geo_lookup<W: Write>(w: W, sectors: &[(String, String)]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(GEO_COLUMNS)?;
    for (s, a) in sectors {
        out.write_record([s, a])?;
    }
    out.flush().map_err(|e| Error::io("<geo lookup>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterRules {
    pub currency: String,
    pub card_type: CardType,
    pub max_amount_pence: u64,
}

impl Default for FilterRules {
    fn default() -> Self {
        Self {
            currency: "GBP".to_string(),
            card_type: CardType::ConsumerCredit,
            max_amount_pence: MAX_AMOUNT_PENCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Currency,
    CardType,
    OverCap,
}

impl DropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::Currency => "non_gbp",
            DropReason::CardType => "not_consumer_credit",
            DropReason::OverCap => "over_cap",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: usize,
    /// Drops keyed by the first rule each row failed.
    pub dropped: BTreeMap<DropReason, usize>,
}

impl FilterReport {
    pub fn dropped(&self, reason: DropReason) -> usize {
        self.dropped.get(&reason).copied().unwrap_or(0)
    }

    pub fn total_dropped(&self) -> usize {
        self.dropped.values().sum()
    }
}

impl FilterRules {
    pub fn check(&self, t: &Transaction) -> Option<DropReason> {
        if t.currency != self.currency {
            Some(DropReason::Currency)
        } else if t.card_type != self.card_type {
            Some(DropReason::CardType)
        } else if t.amount_pence > self.max_amount_pence {
            Some(DropReason::OverCap)
        } else {
            None
        }
    }
}

/// Keeps sterling consumer-credit spend at or below the amount cap.
pub fn filter_transactions(
    txns: Vec<Transaction>,
    rules: &FilterRules,
) -> (Vec<Transaction>, FilterReport) {
    let mut report = FilterReport::default();
    let kept: Vec<Transaction> = txns
        .into_iter()
        .filter(|t| match rules.check(t) {
            None => true,
            Some(reason) => {
                *report.dropped.entry(reason).or_default() += 1;
                false
            }
        })
        .collect();
    report.kept = kept.len();
    (kept, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoBasis {
    /// Where the account holder lives.
    #[default]
    Cardholder,
    /// Where the spend happened.
    Merchant,
}

impl FromStr for GeoBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cardholder" => Ok(GeoBasis::Cardholder),
            "merchant" => Ok(GeoBasis::Merchant),
            other => Err(Error::invalid(format!("unknown geography basis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedTransaction {
    pub txn: Transaction,
    pub authority: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoExclusion {
    UnmappedSector,
    MissingMerchantAuthority,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Excluded {
    /// Position in the input list.
    pub index: usize,
    pub reason: GeoExclusion,
}

#[derive(Debug, Clone, Default)]
pub struct GeoResolution {
    pub tagged: Vec<TaggedTransaction>,
    pub excluded: Vec<Excluded>,
}

/// Tags each transaction with a local authority under the chosen basis.
/// Every input ends up either tagged or excluded.
pub fn resolve_geography(
    txns: Vec<Transaction>,
    lookup: &GeoLookup,
    basis: GeoBasis,
) -> GeoResolution {
    let mut out = GeoResolution::default();
    for (index, txn) in txns.into_iter().enumerate() {
        let authority = match basis {
            GeoBasis::Merchant => txn
                .merchant_authority
                .clone()
                .ok_or(GeoExclusion::MissingMerchantAuthority),
            GeoBasis::Cardholder => lookup
                .sector_to_authority
                .get(&txn.cardholder_sector)
                .cloned()
                .ok_or(GeoExclusion::UnmappedSector),
        };
        match authority {
            Ok(authority) => out.tagged.push(TaggedTransaction { txn, authority }),
            Err(reason) => out.excluded.push(Excluded { index, reason }),
        }
    }
    out
}

/// A lockdown event with its aggregated treatment and control groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventPair {
    pub event: String,
    pub announcement_date: NaiveDate,
    pub treatment: LocalityGroup,
    pub control: LocalityGroup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedEvent {
    pub event: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LocalityPairs {
    pub pairs: Vec<EventPair>,
    pub skipped: Vec<SkippedEvent>,
}

fn make_group(
    name: String,
    authorities: &[String],
    role: Role,
    population: &PopulationTable,
) -> Result<LocalityGroup> {
    let authorities: BTreeSet<String> = authorities.iter().cloned().collect();
    let population_2019 = authorities
        .iter()
        .map(|a| {
            population
                .get(a)
                .map(|e| e.population_2019)
                .ok_or_else(|| Error::UnknownAuthority(a.clone()))
        })
        .sum::<Result<u64>>()?;
    Ok(LocalityGroup {
        name,
        authorities,
        population_2019,
        role,
    })
}

/// Builds one aggregated (treatment, control) pair per intervention event.
///
/// Events outside the intervention category, and events with no control
/// authorities, go to the skip list.
pub fn build_locality_groups(
    schedule: &[LockdownEvent],
    population: &PopulationTable,
) -> Result<LocalityPairs> {
    for e in schedule {
        if let Some(a) = e
            .treated_authorities
            .iter()
            .chain(&e.control_authorities)
            .find(|a| !population.contains_key(*a))
        {
            return Err(Error::UnknownAuthority(a.clone()));
        }
    }
    let mut out = LocalityPairs::default();
    for e in schedule {
        let skip = if e.category != WatchlistCategory::Intervention {
            Some("not_intervention")
        } else if e.control_authorities.is_empty() {
            Some("no_control")
        } else {
            None
        };
        if let Some(reason) = skip {
            out.skipped.push(SkippedEvent {
                event: e.name.clone(),
                reason: reason.to_string(),
            });
            continue;
        }
        out.pairs.push(EventPair {
            event: e.name.clone(),
            announcement_date: e.announcement_date,
            treatment: make_group(
                e.name.clone(),
                &e.treated_authorities,
                Role::Treatment,
                population,
            )?,
            control: make_group(
                format!("{} (control)", e.name),
                &e.control_authorities,
                Role::Control,
                population,
            )?,
        });
    }
    Ok(out)
}
