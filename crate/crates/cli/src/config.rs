//! Run configuration: a TOML file merged with command line flags.
//!
//! Precedence is flags, then the file, then built-in defaults. Relative
//! paths in the file resolve against the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use lockdown_core::dates::{DateSpan, YearMonth};
use lockdown_core::estimator::{CrVariant, Specification};
use lockdown_core::index::{default_baseline, MonthWindow, SeriesFilter, WindowDays};
use lockdown_core::ingest::GeoBasis;
use lockdown_core::pipeline::{
    parse_filter, AnalysisOptions, ClusterKey, InputPaths, LoadOptions, Outcome, BENCHMARK_FILE,
};
use lockdown_core::synth::ScenarioConfig;
use serde::Deserialize;

use crate::Failure;

/// Keys accepted in the config file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub transactions: Option<PathBuf>,
    pub cases: Option<PathBuf>,
    pub lockdowns: Option<PathBuf>,
    pub population: Option<PathBuf>,
    pub geo_lookup: Option<PathBuf>,
    pub benchmark: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub strict: Option<bool>,
    pub lenient_cases: Option<bool>,
    pub basis: Option<String>,
    pub window_days: Option<u32>,
    /// Windows written by `index` when `--window` is not given.
    pub index_windows: Option<Vec<u32>>,
    /// Series filters written by `index`.
    pub filters: Option<Vec<String>>,
    /// Filter of the spend outcome in `did`.
    pub spend_filter: Option<String>,
    pub baseline: Option<[DateValue; 2]>,
    pub pre_weeks: Option<u32>,
    pub post_weeks: Option<u32>,
    pub outcomes: Option<Vec<String>>,
    pub specs: Option<Vec<String>>,
    pub cr: Option<String>,
    pub cluster_key: Option<String>,
    /// Month windows for `validate`, e.g. `[["2019-12", "2020-06"]]`.
    pub validate_windows: Option<Vec<[String; 2]>>,
    pub seed: Option<u64>,
    /// Scenario file (JSON or TOML) for `synth`.
    pub scenario_file: Option<PathBuf>,
    /// Inline scenario for `synth`.
    pub scenario: Option<ScenarioConfig>,
}

/// A date written either as a TOML date or as a quoted string.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum DateValue {
    Toml(toml::value::Datetime),
    Text(String),
}

impl DateValue {
    fn date(&self) -> Result<NaiveDate, Failure> {
        let text = match self {
            DateValue::Toml(d) => d.to_string(),
            DateValue::Text(s) => s.clone(),
        };
        text.trim()
            .parse()
            .map_err(|_| Failure::input(format!("bad date `{text}`, expected YYYY-MM-DD")))
    }
}

/// Values given on the command line.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub strict: bool,
    pub window: Option<u32>,
    pub baseline: Option<Vec<NaiveDate>>,
    pub pre_weeks: Option<u32>,
    pub post_weeks: Option<u32>,
    pub cr: Option<CrVariant>,
    pub cluster_key: Option<ClusterKey>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub inputs: InputPaths,
    pub out: PathBuf,
    pub load: LoadOptions,
    pub analysis: AnalysisOptions,
    pub index_windows: Vec<WindowDays>,
    pub filters: Vec<SeriesFilter>,
    pub outcomes: Vec<Outcome>,
    pub specs: Vec<Specification>,
    pub validate_windows: Vec<MonthWindow>,
    pub seed: Option<u64>,
    pub scenario: ScenarioConfig,
}

fn input<E: std::fmt::Display>(e: E) -> Failure {
    Failure::input(e.to_string())
}

fn parse_all<T, E: std::fmt::Display>(
    items: Vec<String>,
    f: impl Fn(&str) -> Result<T, E>,
) -> Result<Vec<T>, Failure> {
    items.iter().map(|s| f(s).map_err(input)).collect()
}

fn read_scenario(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

impl RunConfig {
    pub fn load(config: Option<&Path>, flags: Overrides) -> Result<Self, Failure> {
        let (file, root) = match config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
                let file: FileConfig = toml::from_str(&text)
                    .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
                let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (file, root)
            }
            None => (FileConfig::default(), PathBuf::new()),
        };
        Self::merge(file, &root, flags)
    }

    pub fn merge(file: FileConfig, root: &Path, flags: Overrides) -> Result<Self, Failure> {
        let rel = |p: PathBuf| if p.is_absolute() { p } else { root.join(p) };

        let data = flags
            .data
            .or(file.data.map(rel))
            .unwrap_or_else(|| PathBuf::from("."));
        let mut inputs = InputPaths::in_dir(&data);
        if let Some(p) = file.transactions {
            inputs.transactions = rel(p);
        }
        if let Some(p) = file.cases {
            inputs.cases = rel(p);
        }
        if let Some(p) = file.lockdowns {
            inputs.lockdowns = rel(p);
        }
        if let Some(p) = file.population {
            inputs.population = rel(p);
        }
        if let Some(p) = file.geo_lookup {
            inputs.geo_lookup = rel(p);
        }
        inputs.benchmark = Some(
            file.benchmark
                .map(rel)
                .unwrap_or_else(|| data.join(BENCHMARK_FILE)),
        );
        let out = flags
            .out
            .or(file.out.map(rel))
            .unwrap_or_else(|| PathBuf::from("out"));

        let load = LoadOptions {
            strict: flags.strict || file.strict.unwrap_or(false),
            basis: match file.basis {
                Some(b) => b.parse::<GeoBasis>().map_err(input)?,
                None => GeoBasis::default(),
            },
            ..LoadOptions::default()
        };

        let defaults = AnalysisOptions::default();
        let window = match flags.window.or(file.window_days) {
            Some(k) => WindowDays::new(k).map_err(input)?,
            None => defaults.window,
        };
        let baseline = match flags.baseline {
            Some(b) => DateSpan::new(b[0], b[1]).map_err(input)?,
            None => match file.baseline {
                Some([a, b]) => DateSpan::new(a.date()?, b.date()?).map_err(input)?,
                None => default_baseline(),
            },
        };
        let analysis = AnalysisOptions {
            window,
            baseline,
            pre_weeks: flags
                .pre_weeks
                .or(file.pre_weeks)
                .unwrap_or(defaults.pre_weeks),
            post_weeks: flags
                .post_weeks
                .or(file.post_weeks)
                .unwrap_or(defaults.post_weeks),
            cr: match (flags.cr, file.cr) {
                (Some(c), _) => c,
                (None, Some(c)) => c.parse().map_err(input)?,
                (None, None) => defaults.cr,
            },
            cluster_key: match (flags.cluster_key, file.cluster_key) {
                (Some(k), _) => k,
                (None, Some(k)) => k.parse().map_err(input)?,
                (None, None) => defaults.cluster_key,
            },
            filter: match file.spend_filter {
                Some(f) => parse_filter(&f).map_err(input)?,
                None => defaults.filter,
            },
            lenient_cases: file.lenient_cases.unwrap_or(false),
        };
        if analysis.pre_weeks == 0 || analysis.post_weeks == 0 {
            return Err(Failure::input("pre and post weeks must be at least 1"));
        }

        let index_windows = match (flags.window, file.index_windows) {
            (Some(_), _) => vec![window],
            (None, Some(ks)) => ks
                .into_iter()
                .map(|k| WindowDays::new(k).map_err(input))
                .collect::<Result<_, _>>()?,
            (None, None) if file.window_days.is_some() => vec![window],
            (None, None) => [7, 14, 28]
                .into_iter()
                .map(|k| WindowDays::new(k).expect("valid window"))
                .collect(),
        };
        let filters = parse_all(
            file.filters
                .unwrap_or_else(|| vec!["all".into(), "offline".into(), "online".into()]),
            parse_filter,
        )?;
        let outcomes = parse_all(
            file.outcomes
                .unwrap_or_else(|| vec!["spend_index".into(), "case_rate".into()]),
            str::parse::<Outcome>,
        )?;
        let specs = parse_all(
            file.specs
                .unwrap_or_else(|| vec!["static".into(), "dynamic".into()]),
            str::parse::<Specification>,
        )?;
        let validate_windows = file
            .validate_windows
            .unwrap_or_default()
            .into_iter()
            .map(|[a, b]| {
                Ok(MonthWindow {
                    start: a.parse::<YearMonth>().map_err(input)?,
                    end: b.parse::<YearMonth>().map_err(input)?,
                })
            })
            .collect::<Result<_, Failure>>()?;

        let scenario = match (file.scenario, file.scenario_file) {
            (Some(_), Some(_)) => {
                return Err(Failure::input(
                    "give either `scenario` or `scenario_file`, not both",
                ))
            }
            (Some(s), None) => s,
            (None, Some(p)) => read_scenario(&rel(p))?,
            (None, None) => ScenarioConfig::default(),
        };

        Ok(Self {
            inputs,
            out,
            load,
            analysis,
            index_windows,
            filters,
            outcomes,
            specs,
            validate_windows,
            seed: flags.seed.or(file.seed),
            scenario,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn defaults_without_file() {
        let c =
            RunConfig::merge(FileConfig::default(), Path::new(""), Overrides::default()).unwrap();
        assert_eq!(c.analysis, AnalysisOptions::default());
        assert_eq!(c.index_windows.len(), 3);
        assert_eq!(c.filters.len(), 3);
        assert_eq!(c.outcomes, vec![Outcome::SpendIndex, Outcome::CaseRate]);
        assert_eq!(c.inputs.transactions, PathBuf::from("./transactions.csv"));
    }

    #[test]
    fn flags_beat_file_beats_defaults() {
        let file: FileConfig = toml::from_str(
            r#"
            data = "inputs"
            window_days = 14
            pre_weeks = 3
            cr = "cr0"
            baseline = [2020-01-06, "2020-01-26"]
            "#,
        )
        .unwrap();
        let flags = Overrides {
            window: Some(28),
            cluster_key: Some(ClusterKey::Authority),
            ..Overrides::default()
        };
        let c = RunConfig::merge(file, Path::new("/cfg"), flags).unwrap();
        assert_eq!(c.analysis.window.days(), 28);
        assert_eq!(c.index_windows.len(), 1);
        assert_eq!(c.analysis.pre_weeks, 3);
        assert_eq!(c.analysis.post_weeks, 4);
        assert_eq!(c.analysis.cr, CrVariant::Cr0);
        assert_eq!(c.analysis.cluster_key, ClusterKey::Authority);
        assert_eq!(c.analysis.baseline.start, d("2020-01-06"));
        assert_eq!(
            c.inputs.cases,
            PathBuf::from("/cfg/inputs").join("cases.csv")
        );
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "window_days = 10",
            "cr = \"hc3\"",
            "outcomes = [\"gdp\"]",
            "unknown_key = 1",
            "baseline = [2020-01-28, 2020-01-08]",
            "baseline = [\"2020-13-01\", 2020-01-08]",
        ] {
            let parsed: Result<FileConfig, _> = toml::from_str(text);
            let merged = parsed
                .map_err(|e| Failure::input(e.to_string()))
                .and_then(|f| RunConfig::merge(f, Path::new(""), Overrides::default()));
            assert!(merged.is_err(), "{text}");
        }
    }
}
