use lockdown_web::{amount_histogram_json, event_study_json, generate_json, index_curves_json};
use serde_json::Value;

fn call(f: fn(&str) -> Result<String, String>, req: &str) -> Value {
    serde_json::from_str(&f(req).unwrap()).unwrap()
}

fn noiseless() -> Value {
    call(generate_json, r#"{"noise_scale": 0.0}"#)
}

#[test]
fn generate_lists_usable_events() {
    let g = noiseless();
    let events: Vec<&str> = g["events"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["event"].as_str().unwrap())
        .collect();
    assert_eq!(events, ["Northtown", "Eastborough"]);
    assert_eq!(g["skipped"][0], "Lakeside");
    assert!(g["dropped"].as_u64().unwrap() > 0);
    assert_eq!(
        g["kept"].as_u64().unwrap() + g["dropped"].as_u64().unwrap(),
        g["transactions"].as_u64().unwrap()
    );
}

#[test]
fn curves_are_normalised_to_the_baseline() {
    noiseless();
    for window in [7, 14, 28] {
        let c = call(
            index_curves_json,
            &format!(r#"{{"window": {window}, "filter": "all"}}"#),
        );
        assert_eq!(c["start"], "2020-01-08");
        let curves = c["curves"].as_array().unwrap();
        assert_eq!(curves.len(), 4);
        for curve in curves {
            let baseline: f64 = curve["values"].as_array().unwrap()[..21]
                .iter()
                .map(|v| v.as_f64().unwrap())
                .sum();
            assert!((baseline / 21.0 - 1.0).abs() < 1e-12);
        }
    }
    assert!(index_curves_json(r#"{"window": 5}"#).is_err());
}

#[test]
fn event_study_recovers_truth() {
    noiseless();
    for event in ["Northtown", "Eastborough"] {
        let r = call(
            event_study_json,
            &format!(r#"{{"event": "{event}", "spec": "dynamic"}}"#),
        );
        let rows = r["rows"].as_array().unwrap();
        let weeks: Vec<i64> = rows
            .iter()
            .map(|row| row["week"].as_i64().unwrap())
            .collect();
        let expected: Vec<i64> = if event == "Eastborough" {
            vec![-3, -2, -1, 1, 2, 3]
        } else {
            vec![-3, -2, -1, 1, 2, 3, 4]
        };
        assert_eq!(weeks, expected, "{event}");
        for row in rows {
            let got = row["estimate"].as_f64().unwrap();
            let want = row["truth"].as_f64().unwrap();
            assert!((got - want).abs() < 1e-10, "{event} {row}");
            assert!(row["lo"].as_f64().unwrap() <= got && got <= row["hi"].as_f64().unwrap());
        }
    }
    let s = call(
        event_study_json,
        r#"{"event": "Northtown", "spec": "static", "outcome": "case_rate", "cluster_key": "group"}"#,
    );
    assert_eq!(s["rows"].as_array().unwrap().len(), 1);
    assert!(s["rows"][0]["truth"].is_null());
    assert!(s["fingerprint"]
        .as_str()
        .unwrap()
        .contains("cluster_key=group"));
    assert!(event_study_json(r#"{"event": "Atlantis"}"#).is_err());
}

#[test]
fn histogram_tracks_the_requested_median() {
    let h = call(
        amount_histogram_json,
        r#"{"median_pence": 800, "mean_pence": 2000}"#,
    );
    let median = h["sample_median"].as_f64().unwrap();
    assert!((median / 800.0 - 1.0).abs() < 0.05, "{median}");
}
