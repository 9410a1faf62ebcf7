use std::collections::BTreeSet;

use chrono::{Duration, NaiveDate};
use nalgebra::DMatrix;
use proptest::prelude::*;

use lockdown_core::dates::{parse_date, DateSpan};
use lockdown_core::epi::case_rate_for;
use lockdown_core::estimator::{
    build_panel, cluster_cov, design, estimate, wls_fit, CrVariant, Specification, UnitSeries,
};
use lockdown_core::index::{
    index_from_daily, moving_average, required_daily_span, yoy_deseason, DailySeries, IndexSpec,
    Series, SeriesFilter, WindowDays,
};
use lockdown_core::ingest::{
    build_locality_groups, filter_transactions, parse_transactions, resolve_geography,
    write_transactions, CardType, CaseRecord, Channel, FilterRules, GeoBasis, GeoLookup,
    LockdownEvent, ParseConfig, PopulationEntry, PopulationTable, Transaction, WatchlistCategory,
};

fn d(s: &str) -> NaiveDate {
    parse_date(s).unwrap()
}

fn transaction() -> impl Strategy<Value = Transaction> {
    (
        0u32..5,
        0i64..400,
        1u64..6_000_000,
        prop_oneof![Just("GBP"), Just("EUR"), Just("USD")],
        any::<bool>(),
        any::<bool>(),
        prop_oneof![Just("food_beverage"), Just("retail"), Just("hospitality")],
        prop_oneof![Just("M1 4"), Just("M2 1"), Just("SW1A 1"), Just("ZZ9 9")],
        proptest::option::of(prop_oneof![Just("A"), Just("B")]),
    )
        .prop_map(
            |(acc, day, amount, cur, credit, offline, cat, sector, merchant)| Transaction {
                account_id: format!("acc{acc}"),
                date: d("2019-06-01") + Duration::days(day),
                amount_pence: amount,
                currency: cur.into(),
                card_type: if credit {
                    CardType::ConsumerCredit
                } else {
                    CardType::Other
                },
                channel: if offline {
                    Channel::Offline
                } else {
                    Channel::Online
                },
                category: cat.into(),
                cardholder_sector: sector.into(),
                merchant_authority: merchant.map(str::to_string),
            },
        )
}

fn lookup() -> GeoLookup {
    let mut pop = PopulationTable::new();
    for a in ["A", "B"] {
        pop.insert(
            a.into(),
            PopulationEntry {
                region: "R".into(),
                population_2019: 100_000,
                urban_class: None,
            },
        );
    }
    GeoLookup::new(
        vec![
            ("M1 4".into(), "A".into()),
            ("M2 1".into(), "A".into()),
            ("SW1A 1".into(), "B".into()),
        ],
        &pop,
    )
}

fn real_series(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1000.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filtering_is_idempotent(txns in proptest::collection::vec(transaction(), 0..60)) {
        let rules = FilterRules::default();
        let (once, _) = filter_transactions(txns, &rules);
        let (twice, report) = filter_transactions(once.clone(), &rules);
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(report.total_dropped(), 0);
    }

    #[test]
    fn geography_partitions_input(txns in proptest::collection::vec(transaction(), 0..60), merchant in any::<bool>()) {
        let n = txns.len();
        let basis = if merchant { GeoBasis::Merchant } else { GeoBasis::Cardholder };
        let r = resolve_geography(txns, &lookup(), basis);
        prop_assert_eq!(r.tagged.len() + r.excluded.len(), n);
    }

    #[test]
    fn transactions_round_trip(txns in proptest::collection::vec(transaction(), 0..40)) {
        let mut buf = Vec::new();
        write_transactions(&mut buf, &txns).unwrap();
        let parsed = parse_transactions(buf.as_slice(), &ParseConfig { strict: true, window: None }).unwrap();
        prop_assert_eq!(parsed.records, txns);
    }

    #[test]
    fn moving_average_is_linear_and_bounded(
        x in real_series(40),
        y in real_series(40),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        k in prop_oneof![Just(7u32), Just(14), Just(28)],
    ) {
        let k = WindowDays::new(k).unwrap();
        let s = |v: Vec<f64>| Series::new(d("2020-01-01"), v);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let mx = moving_average(&s(x.clone()), k).unwrap();
        let my = moving_average(&s(y), k).unwrap();
        let mc = moving_average(&s(combo), k).unwrap();
        let kd = k.days() as usize;
        for i in 0..mc.len() {
            prop_assert!((mc.values[i] - (a * mx.values[i] + b * my.values[i])).abs() < 1e-9);
            let window = &x[i..i + kd];
            let lo = window.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(mx.values[i] >= lo - 1e-9 && mx.values[i] <= hi + 1e-9);
        }
    }

    #[test]
    fn year_shifted_copy_has_unit_ratio(values in proptest::collection::vec(1.0f64..100.0, 366)) {
        // prior covers all of 2020; the current series repeats each month-day in 2021
        let prior = Series::new(d("2020-01-01"), values.clone());
        let current: Vec<f64> = DateSpan::new(d("2021-01-01"), d("2021-12-31"))
            .unwrap()
            .days()
            .map(|day| *prior.get(day - chrono::Months::new(12)).unwrap())
            .collect();
        let ratio = yoy_deseason(&Series::new(d("2021-01-01"), current), &prior).unwrap();
        for v in &ratio.values {
            prop_assert!((v.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn index_ignores_current_year_scale(
        values in proptest::collection::vec(1u64..100_000, 500),
        factor in 2u64..9,
        k in prop_oneof![Just(7u32), Just(14), Just(28)],
    ) {
        let spec = IndexSpec {
            filter: SeriesFilter::default(),
            window: WindowDays::new(k).unwrap(),
            baseline: lockdown_core::index::default_baseline(),
            span: DateSpan::new(d("2020-01-08"), d("2020-03-31")).unwrap(),
        };
        let span = required_daily_span(&spec);
        let vals: Vec<u64> = values.iter().cycle().take(span.len()).copied().collect();
        let scaled: Vec<u64> = span
            .days()
            .zip(&vals)
            .map(|(day, v)| if day >= d("2019-11-01") { v * factor } else { *v })
            .collect();
        let daily = |v: Vec<u64>| DailySeries {
            geography: "G".into(),
            filter: SeriesFilter::default(),
            totals: Series::new(span.start, v),
        };
        let a = index_from_daily(&daily(vals), &spec).unwrap();
        let b = index_from_daily(&daily(scaled), &spec).unwrap();
        prop_assert!((a.baseline_mean().unwrap() - 1.0).abs() < 1e-12);
        for (x, y) in a.values.values.iter().zip(&b.values.values) {
            prop_assert!((x.unwrap() - y.unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn case_rates_scale(cases in proptest::collection::vec(0u64..500, 21), c in 1u64..6) {
        let span = DateSpan::new(d("2020-09-01"), d("2020-09-21")).unwrap();
        let rec = |mult: u64| -> Vec<CaseRecord> {
            span.days()
                .zip(&cases)
                .map(|(date, n)| CaseRecord { authority: "A".into(), date, new_cases: n * mult })
                .collect()
        };
        let auths: BTreeSet<String> = ["A".to_string()].into();
        let rate = |recs: &[CaseRecord], pop: u64| {
            case_rate_for(recs, "G", &auths, pop, WindowDays::SEVEN, span, true).unwrap().0.values.values
        };
        let base = rate(&rec(1), 100_000);
        let scaled = rate(&rec(c), 100_000);
        let doubled_pop = rate(&rec(1), 200_000);
        for i in 0..base.len() {
            prop_assert!((scaled[i] - c as f64 * base[i]).abs() < 1e-9);
            prop_assert!((doubled_pop[i] * 2.0 - base[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn groups_sum_populations(pops in proptest::collection::vec(1u64..1_000_000, 5)) {
        let names = ["A", "B", "C", "D", "E"];
        let table: PopulationTable = names
            .iter()
            .zip(&pops)
            .map(|(n, p)| (n.to_string(), PopulationEntry { region: "R".into(), population_2019: *p, urban_class: None }))
            .collect();
        let event = LockdownEvent {
            name: "X".into(),
            announcement_date: d("2020-07-30"),
            category: WatchlistCategory::Intervention,
            treated_authorities: vec!["A".into(), "B".into()],
            control_authorities: vec!["C".into(), "D".into(), "E".into()],
        };
        let pairs = build_locality_groups(&[event], &table).unwrap();
        let p = &pairs.pairs[0];
        prop_assert_eq!(p.treatment.population_2019, pops[0] + pops[1]);
        prop_assert_eq!(p.control.population_2019, pops[2] + pops[3] + pops[4]);
        prop_assert!(p.treatment.authorities.is_disjoint(&p.control.authorities));
    }
}

/// Random balanced panel over a 2+2 week window.
fn panel_units() -> impl Strategy<Value = Vec<UnitSeries>> {
    (
        proptest::collection::vec(proptest::collection::vec(0.0f64..2.0, 28), 4),
        proptest::collection::vec(1.0f64..10.0, 4),
    )
        .prop_map(|(values, weights)| {
            values
                .into_iter()
                .zip(weights)
                .enumerate()
                .map(|(u, (v, w))| UnitSeries {
                    unit: format!("u{u}"),
                    cluster: format!("u{u}"),
                    treated: u < 2,
                    weight: w,
                    values: Series::new(d("2020-07-16"), v),
                })
                .collect()
        })
}

fn spec() -> impl Strategy<Value = Specification> {
    prop_oneof![Just(Specification::Static), Just(Specification::Dynamic)]
}

const ANN: &str = "2020-07-30";

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn residuals_are_weighted_orthogonal(units in panel_units(), spec in spec()) {
        let panel = build_panel(&units, d(ANN), 2, 2).unwrap();
        let x = design(&panel, spec).unwrap().x;
        let w = panel.weights();
        let fit = wls_fit(&x, &panel.outcomes(), &w).unwrap();
        for j in 0..x.ncols() {
            let s: f64 = (0..x.nrows()).map(|i| x[(i, j)] * w[i] * fit.residuals[i]).sum();
            prop_assert!(s.abs() < 1e-8, "column {j}: {s}");
        }
    }

    #[test]
    fn covariance_is_symmetric_psd(units in panel_units(), spec in spec()) {
        let panel = build_panel(&units, d(ANN), 2, 2).unwrap();
        let r = estimate(&panel, spec, CrVariant::Cr1).unwrap();
        let v = &r.covariance;
        prop_assert_eq!(v.clone(), v.transpose());
        let eig = v.clone().symmetric_eigen().eigenvalues;
        prop_assert!(eig.iter().all(|&e| e >= -1e-10), "{eig}");
        for (j, c) in r.coefficients.iter().enumerate() {
            prop_assert!((c.se - v[(j, j)].max(0.0).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn outcome_scaling_scales_estimates(units in panel_units(), spec in spec(), c in 0.1f64..20.0) {
        let scaled: Vec<UnitSeries> = units
            .iter()
            .map(|u| UnitSeries {
                values: Series::new(u.values.start, u.values.values.iter().map(|v| v * c).collect()),
                ..u.clone()
            })
            .collect();
        let a = estimate(&build_panel(&units, d(ANN), 2, 2).unwrap(), spec, CrVariant::Cr1).unwrap();
        let b = estimate(&build_panel(&scaled, d(ANN), 2, 2).unwrap(), spec, CrVariant::Cr1).unwrap();
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            prop_assert!((y.estimate - c * x.estimate).abs() < 1e-8 * (1.0 + c * x.estimate.abs()));
            prop_assert!((y.se - c * x.se).abs() < 1e-8 * (1.0 + c * x.se));
        }
    }

    #[test]
    fn weight_scaling_changes_nothing(units in panel_units(), spec in spec(), c in 0.01f64..1e4) {
        let scaled: Vec<UnitSeries> = units.iter().map(|u| UnitSeries { weight: u.weight * c, ..u.clone() }).collect();
        let a = estimate(&build_panel(&units, d(ANN), 2, 2).unwrap(), spec, CrVariant::Cr1).unwrap();
        let b = estimate(&build_panel(&scaled, d(ANN), 2, 2).unwrap(), spec, CrVariant::Cr1).unwrap();
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            prop_assert!((x.estimate - y.estimate).abs() < 1e-9);
            prop_assert!((x.se - y.se).abs() < 1e-9 * (1.0 + x.se));
        }
    }

    #[test]
    fn static_equals_double_difference(t in proptest::collection::vec(0.0f64..2.0, 28), c in proptest::collection::vec(0.0f64..2.0, 28)) {
        let unit = |name: &str, treated, v: Vec<f64>| UnitSeries {
            unit: name.into(),
            cluster: name.into(),
            treated,
            weight: 1.0,
            values: Series::new(d("2020-07-16"), v),
        };
        let units = [unit("T", true, t.clone()), unit("C", false, c.clone())];
        let r = estimate(&build_panel(&units, d(ANN), 2, 2).unwrap(), Specification::Static, CrVariant::Cr1).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let dd = (mean(&t[14..]) - mean(&t[..14])) - (mean(&c[14..]) - mean(&c[..14]));
        prop_assert!((r.coefficient("Treat*After").unwrap().estimate - dd).abs() < 1e-10);
    }
}

#[test]
fn two_cluster_sandwich_matches_hand_loop() {
    // 12 observations, 2 clusters, intercept and slope.
    let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 0.5, 1.5, 2.5, 3.5, 4.5, 5.5];
    let y = [1.0, 1.9, 3.2, 3.8, 5.1, 6.2, 0.7, 2.4, 2.9, 4.6, 5.2, 6.9];
    let w = [1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0];
    let clusters: Vec<usize> = (0..12).map(|i| i / 6).collect();
    let x = DMatrix::from_fn(12, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
    let fit = wls_fit(&x, &y, &w).unwrap();
    let e: Vec<f64> = fit.residuals.iter().copied().collect();
    let v = cluster_cov(&x, &e, &w, &clusters, CrVariant::Cr1).unwrap();

    // closed-form 2x2 bread and scores
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for i in 0..12 {
        s0 += w[i];
        s1 += w[i] * xs[i];
        s2 += w[i] * xs[i] * xs[i];
    }
    let det = s0 * s2 - s1 * s1;
    let bread = [[s2 / det, -s1 / det], [-s1 / det, s0 / det]];
    let mut meat = [[0.0; 2]; 2];
    for g in 0..2 {
        let mut sc = [0.0; 2];
        for i in (0..12).filter(|&i| clusters[i] == g) {
            sc[0] += w[i] * e[i];
            sc[1] += w[i] * e[i] * xs[i];
        }
        for a in 0..2 {
            for b in 0..2 {
                meat[a][b] += sc[a] * sc[b];
            }
        }
    }
    let c = 2.0 / 1.0 * 11.0 / 10.0;
    for a in 0..2 {
        for b in 0..2 {
            let mut want = 0.0;
            for p in 0..2 {
                for q in 0..2 {
                    want += bread[a][p] * meat[p][q] * bread[q][b];
                }
            }
            assert!((v[(a, b)] - c * want).abs() < 1e-12, "{a}{b}");
        }
    }
}
