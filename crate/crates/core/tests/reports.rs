use std::collections::HashMap;

use povmap_core::reports::geojson::{emit_geojson, GeoEstimate};
use povmap_core::reports::*;
use povmap_core::survey_design::{direct_proportion, PersonRecord};
use proptest::prelude::*;
use serde_json::{json, Value};

proptest! {
    #[test]
    fn shares_sum_to_one_and_ignore_scale(
        theta in prop::collection::vec(0.001f64..1.0, 1..6),
        scale in 1e-3f64..1e3,
    ) {
        let e = eta(&theta, 0).unwrap();
        prop_assert!((e.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(e.iter().all(|&v| v > 0.0 && v <= 1.0));
        let scaled: Vec<f64> = theta.iter().map(|t| t * scale).collect();
        for (a, b) in e.iter().zip(eta(&scaled, 0).unwrap()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn quantiles_are_monotone(draws in prop::collection::vec(-5.0f64..5.0, 8..200)) {
        let half = draws.len() / 2;
        let chains = vec![draws[..half].to_vec(), draws[half..2 * half].to_vec()];
        let s = summarize_chains("x", &chains, Transform::InvLogit, &DEFAULT_PROBS).unwrap();
        prop_assert!(s.quantiles.windows(2).all(|w| w[0].1 <= w[1].1));
        let p: Vec<f64> = chains.iter().flatten().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s.mean >= lo && s.mean <= hi);
    }

    #[test]
    fn equal_area_draws_give_that_constant(
        value in 0.01f64..0.99,
        pops in prop::collection::vec(1.0f64..1e5, 4),
    ) {
        let ids: Vec<String> = (0..4).map(|i| format!("a{i}")).collect();
        let populations: HashMap<String, f64> = ids.iter().cloned().zip(pops).collect();
        let map = vec![
            ("a0".to_string(), "D1".to_string()),
            ("a1".to_string(), "D1".to_string()),
            ("a2".to_string(), "D2".to_string()),
            ("a3".to_string(), "D2".to_string()),
        ];
        let direct: HashMap<String, f64> = [("D1".to_string(), 0.4), ("D2".to_string(), 0.6)].into();
        let draws = vec![vec![value; 4]; 10];
        for d in district_aggregate(&ids, &draws, &populations, &map, &direct).unwrap() {
            prop_assert!((d.estimate - value).abs() < 1e-14);
            prop_assert_eq!(d.bm_ratio, d.estimate / d.direct);
        }
    }
}

#[test]
fn summary_of_mixed_chains_and_mean_within_range() {
    let chains = vec![vec![0.1, 0.4, 0.2, 0.9, 0.5], vec![0.3, 0.3, 0.8, 0.2, 0.6]];
    let s = summarize_chains("p", &chains, Transform::Identity, &DEFAULT_PROBS).unwrap();
    assert!(s.mean >= 0.1 && s.mean <= 0.9);
    assert_eq!(s.quantiles.len(), 7);
    assert!(s.q(0.025) <= s.q(0.16) && s.q(0.16) <= s.q(0.5) && s.q(0.5) <= s.q(0.84) && s.q(0.84) <= s.q(0.975));
    assert!(summarize_chains("p", &[vec![], vec![]], Transform::Identity, &DEFAULT_PROBS).is_err());
}

#[test]
fn summarize_transforms_each_draw() {
    let draws = vec![vec![vec![0.0, -3.0], vec![2.0, 3.0]], vec![vec![-2.0, 1.0], vec![0.5, -1.0]]];
    let names = vec!["a".to_string(), "b".to_string()];
    let s = summarize(&names, &draws, Transform::InvLogit).unwrap();
    let want: f64 = [0.0f64, 2.0, -2.0, 0.5].iter().map(|x| 1.0 / (1.0 + (-x).exp())).sum::<f64>() / 4.0;
    assert!((s[0].mean - want).abs() < 1e-15);
    assert_ne!(s[0].mean, 1.0 / (1.0 + (-0.125f64).exp()));
    assert_eq!(s[1].name, "b");
}

#[test]
fn published_contribution_row_sums_to_one() {
    let row: f64 = [0.242, 0.470, 0.288].iter().sum();
    assert!((row - 1.0).abs() < 1e-12);
    // Emitted rows: mean shares over draws sum to one.
    let ids = vec!["x".to_string()];
    let theta: Vec<Vec<Vec<f64>>> = (0..50).map(|r| vec![vec![0.1 + 0.001 * r as f64, 0.2, 0.12 + 0.002 * r as f64]]).collect();
    let c = contributions(&ids, &theta).unwrap();
    assert!((c[0].shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for (k, (lo, hi)) in c[0].share_intervals.iter().enumerate() {
        assert!(lo <= &c[0].shares[k] && &c[0].shares[k] <= hi);
    }
}

#[test]
fn nonpositive_theta_is_rejected() {
    let ids = vec!["x".to_string(), "y".to_string()];
    let theta = vec![vec![vec![0.1, 0.2], vec![0.3, -0.1]]];
    assert_eq!(contributions(&ids, &theta), Err(povmap_core::ReportError::InvalidThetaDraw(1)));
}

#[test]
fn benchmark_ratio_reproduces_published_divisions() {
    for (est, direct, ratio) in [(0.529, 0.523, 1.0115), (0.589, 0.623, 0.9454)] {
        let ids = vec!["a".to_string()];
        let pops: HashMap<String, f64> = [("a".to_string(), 1000.0)].into();
        let map = vec![("a".to_string(), "D".to_string())];
        let directs: HashMap<String, f64> = [("D".to_string(), direct)].into();
        let d = district_aggregate(&ids, &vec![vec![est]; 20], &pops, &map, &directs).unwrap();
        assert!((d[0].estimate - est).abs() < 1e-15);
        assert!((d[0].bm_ratio - ratio).abs() < 5e-5, "{}", d[0].bm_ratio);
    }
}

#[test]
fn district_errors() {
    let ids = vec!["a".to_string(), "b".to_string()];
    let pops: HashMap<String, f64> = [("a".to_string(), 1.0), ("b".to_string(), 1.0)].into();
    let direct: HashMap<String, f64> = [("D".to_string(), 0.5)].into();
    let partial = vec![("a".to_string(), "D".to_string())];
    let draws = vec![vec![0.5, 0.5]; 3];
    assert_eq!(
        district_aggregate(&ids, &draws, &pops, &partial, &direct),
        Err(povmap_core::ReportError::UnmappedArea("b".into()))
    );
    let full = vec![("a".to_string(), "D".to_string()), ("b".to_string(), "E".to_string())];
    assert_eq!(
        district_aggregate(&ids, &draws, &pops, &full, &direct),
        Err(povmap_core::ReportError::MissingDistrictDirect("E".into()))
    );
}

#[test]
fn district_direct_pools_areas_with_local_psu_ids() {
    let p = |area: &str, psu: &str, hh: &str, poor: bool| PersonRecord {
        area_id: area.into(),
        psu_id: psu.into(),
        household_id: hh.into(),
        person_id: hh.into(),
        weight: 1.0,
        poor,
        scores: None,
    };
    let records = vec![p("a", "1", "h1", true), p("a", "2", "h2", false), p("b", "1", "h3", true), p("b", "2", "h4", true)];
    let map = vec![("a".to_string(), "D".to_string()), ("b".to_string(), "D".to_string())];
    let d = district_direct(&records, &map).unwrap();
    assert_eq!(d[0].0, "D");
    assert_eq!(d[0].1.n_psu, 4);
    let relabeled: Vec<PersonRecord> = records
        .iter()
        .map(|r| PersonRecord { area_id: "D".into(), psu_id: format!("{}{}", r.area_id, r.psu_id), ..r.clone() })
        .collect();
    assert_eq!(d[0].1, direct_proportion(&relabeled).unwrap());
}

fn collection(n: usize) -> Value {
    let features: Vec<Value> = (0..n)
        .map(|i| {
            json!({
                "type": "Feature",
                "id": i,
                "geometry": {"type": "Point", "coordinates": [80.0 + i as f64 * 0.1, 7.0]},
                "properties": {"area_id": format!("a{i}")}
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "name": "areas", "features": features})
}

#[test]
fn geojson_round_trip() {
    let input = collection(4);
    let estimates: Vec<GeoEstimate> = (0..3)
        .map(|i| GeoEstimate {
            area_id: format!("a{i}"),
            estimate: 0.1 * i as f64,
            se: 0.01,
            ci_low: 0.0,
            ci_high: 0.5,
            shares: vec![0.2, 0.3, 0.5],
        })
        .collect();
    let dims = vec!["md".to_string(), "sd".to_string(), "hc".to_string()];
    let out = emit_geojson(&input, &estimates, &dims, "area_id").unwrap();
    assert_eq!(out.unmatched_features, vec!["a3".to_string()]);
    let text = serde_json::to_string(&out.collection).unwrap();
    let parsed: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed["type"], "FeatureCollection");
    assert_eq!(parsed["features"].as_array().unwrap().len(), 4);
    assert_eq!(parsed["name"], "areas");
    for (i, f) in parsed["features"].as_array().unwrap().iter().enumerate() {
        assert_eq!(f["geometry"], input["features"][i]["geometry"]);
        assert_eq!(f["id"], json!(i));
    }
    assert_eq!(parsed["features"][1]["properties"]["HC_C"], json!(0.5));
    assert_eq!(parsed["features"][3]["properties"]["MD_C"], Value::Null);

    // A key that is missing everywhere still yields a valid collection.
    let unkeyed = emit_geojson(&input, &estimates, &dims, "code").unwrap();
    assert_eq!(unkeyed.unmatched_estimates.len(), 3);
}
