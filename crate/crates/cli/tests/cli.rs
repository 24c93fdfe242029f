use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const FAST: [&str; 6] = ["--iter", "200", "--warmup", "100", "--seed", "5"];

fn povmap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_povmap"))
        .args(args)
        .current_dir(dir)
        .env_remove("POVMAP_THREADS")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = povmap(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A scratch directory with a simulated survey in `sim/` and model configs.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--out", "sim", "--seed", "3"]);
    fs::write(dir.path().join("nl_rs.json"), r#"{"family": "NL_RS", "covariates": ["x1"]}"#).unwrap();
    fs::write(dir.path().join("fh.json"), r#"{"family": "FH", "covariates": ["x1"]}"#).unwrap();
    fs::write(dir.path().join("plugin.json"), r#"{"family": "NL_PLUGIN", "covariates": ["x1"]}"#).unwrap();
    fs::write(dir.path().join("mv.json"), r#"{"family": "MV_LOGIT", "K": 3, "covariates": ["x1"]}"#).unwrap();
    dir
}

fn fit(dir: &Path, config: &str, out: &str, extra: &[&str]) -> Output {
    let mut args = vec!["fit", "--config", config, "--persons", "sim/persons.csv", "--areas", "sim/areas.csv", "--out", out];
    args.extend(FAST);
    args.extend(extra);
    povmap(dir, &args)
}

fn read(path: PathBuf) -> String {
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&read(path)).unwrap()
}

#[test]
fn direct_writes_summary_and_stable_digests() {
    let w = workspace();
    let d = w.path();
    ok(d, &["direct", "--persons", "sim/persons.csv", "--areas", "sim/areas.csv", "--out", "a"]);
    ok(d, &["direct", "--persons", "sim/persons.csv", "--areas", "sim/areas.csv", "--out", "b"]);
    let (ma, mb) = (json(d.join("a/manifest.json")), json(d.join("b/manifest.json")));
    assert_eq!(ma["outputs"], mb["outputs"]);
    assert_eq!(ma["inputs"], mb["inputs"]);
    assert_eq!(ma["status"], "ok");
    let summary = read(d.join("a/design_summary.csv"));
    assert!(summary.starts_with("area_id,n_households,n_adjusted,z_direct"));
    let effects = json(d.join("a/design_effects.json"));
    assert!(effects["deff_poverty"].as_f64().unwrap() > 0.0);
}

#[test]
fn direct_with_one_dimension_and_empty_scores() {
    let d = tempfile::tempdir().unwrap();
    let mut csv = String::from("area_id,psu_id,household_id,person_id,weight,poor,score_1\n");
    for (a, poor_hh) in [("A", [true, false, false, true]), ("B", [false, true, false, false])] {
        for (h, poor) in poor_hh.iter().enumerate() {
            for p in 0..2 {
                let score = if *poor { format!("0.{}", 2 + h + p) } else { String::new() };
                csv.push_str(&format!("{a},{a}{},{a}{h},{a}{h}{p},1.5,{},{score}\n", h % 2, u8::from(*poor)));
            }
        }
    }
    fs::write(d.path().join("p.csv"), csv).unwrap();
    ok(d.path(), &["direct", "--persons", "p.csv", "--out", "o"]);
    let summary = read(d.path().join("o/design_summary.csv"));
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn missing_column_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("p.csv"), "area_id,psu_id,household_id,person_id,poor\nA,1,h,p,0\n").unwrap();
    let out = povmap(d.path(), &["direct", "--persons", "p.csv", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("'weight'"), "{}", stderr(&out));
}

#[test]
fn malformed_cell_is_a_data_error() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("p.csv"), "area_id,psu_id,household_id,person_id,weight,poor\nA,1,h,p,heavy,0\n").unwrap();
    let out = povmap(d.path(), &["direct", "--persons", "p.csv", "--out", "o"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn fit_is_reproducible_across_seeds_and_threads() {
    let w = workspace();
    let d = w.path();
    for (out, extra) in [("one", vec!["--threads", "1"]), ("four", vec!["--threads", "4"]), ("again", vec![])] {
        let o = fit(d, "nl_rs.json", out, &extra);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let draws = read(d.join("one/draws.csv"));
    assert_eq!(draws, read(d.join("four/draws.csv")));
    assert_eq!(draws, read(d.join("again/draws.csv")));
    assert_eq!(draws.lines().count(), 1 + 4 * 100);
    let diag = json(d.join("one/diagnostics.json"));
    assert_eq!(diag["status"], "ok");
    assert_eq!(diag["chains"], 4);

    let o = Command::new(env!("CARGO_BIN_EXE_povmap"))
        .args(["fit", "--config", "nl_rs.json", "--persons", "sim/persons.csv", "--areas", "sim/areas.csv", "--out", "env"])
        .args(FAST)
        .env("POVMAP_THREADS", "2")
        .current_dir(d)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(draws, read(d.join("env/draws.csv")));
    assert_eq!(json(d.join("env/manifest.json"))["effective_config"]["threads"], 2);

    ok(d, &["fit", "--config", "nl_rs.json", "--persons", "sim/persons.csv", "--areas", "sim/areas.csv", "--out", "seed6", "--iter", "200", "--warmup", "100", "--seed", "6"]);
    assert_ne!(read(d.join("seed6/draws.csv")), draws);
}

#[test]
fn fit_from_design_directory_matches_fit_from_persons() {
    let w = workspace();
    let d = w.path();
    ok(d, &["direct", "--persons", "sim/persons.csv", "--areas", "sim/areas.csv", "--out", "direct"]);
    let mut args = vec!["fit", "--config", "fh.json", "--design", "direct", "--areas", "sim/areas.csv", "--out", "from_design"];
    args.extend(FAST);
    ok(d, &args);
    assert!(fit(d, "fh.json", "from_persons", &[]).status.success());
    assert_eq!(read(d.join("from_design/draws.csv")), read(d.join("from_persons/draws.csv")));
}

#[test]
fn fit_config_errors_exit_with_usage_code() {
    let w = workspace();
    let d = w.path();
    fs::write(d.join("bad.json"), r#"{"family": "ZIP", "covariates": ["x1"]}"#).unwrap();
    assert_eq!(fit(d, "bad.json", "o", &[]).status.code(), Some(2));
    fs::write(d.join("extra.json"), r#"{"family": "NL", "covariates": ["x1"], "colour": 1}"#).unwrap();
    assert_eq!(fit(d, "extra.json", "o", &[]).status.code(), Some(2));
    let o = povmap(d, &["fit", "--config", "nl_rs.json", "--persons", "sim/persons.csv", "--areas", "sim/areas.csv", "--out", "o", "--iter", "10", "--warmup", "10"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let both = povmap(d, &["fit", "--config", "nl_rs.json", "--persons", "p", "--design", "x", "--areas", "sim/areas.csv", "--out", "o"]);
    assert_eq!(both.status.code(), Some(2));
    fs::write(d.join("unknown_cov.json"), r#"{"family": "NL", "covariates": ["floor"]}"#).unwrap();
    assert_ne!(fit(d, "unknown_cov.json", "o", &[]).status.code(), Some(0));
}

#[test]
fn plugin_fit_records_first_stage_means() {
    let w = workspace();
    let d = w.path();
    let o = fit(d, "plugin.json", "plugin", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let record = json(d.join("plugin/fit.json"));
    let plugin = record["plugin"].as_array().unwrap();
    assert_eq!(plugin.len(), record["area_ids"].as_array().unwrap().len());
    assert!(plugin.iter().all(|p| p.as_f64().is_some_and(|p| p > 0.0 && p < 1.0)));
}

#[test]
fn compare_orders_models_and_checks_observations() {
    let w = workspace();
    let d = w.path();
    for (config, out) in [("nl_rs.json", "rs"), ("fh.json", "fh")] {
        assert!(fit(d, config, out, &[]).status.success());
    }
    assert_eq!(povmap(d, &["compare", "rs", "--out", "c"]).status.code(), Some(2));

    ok(d, &["compare", "rs", "fh", "--out", "c1"]);
    ok(d, &["compare", "fh", "rs", "--out", "c2"]);
    let (a, b) = (read(d.join("c1/comparison.csv")), read(d.join("c2/comparison.csv")));
    assert_eq!(a, b);
    let best = a.lines().nth(1).unwrap();
    assert!(best.contains(",0,0,"), "best row has zero difference: {best}");

    ok(d, &["compare", "rs", "rs", "--out", "self"]);
    for line in read(d.join("self/comparison.csv")).lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!((cols[5], cols[6]), ("0", "0"), "{line}");
    }

    // Dropping one observation makes the fits incomparable.
    let ll = read(d.join("fh/loglik.csv"));
    let trimmed: String = ll.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n").collect();
    fs::write(d.join("fh/loglik.csv"), trimmed).unwrap();
    let o = povmap(d, &["compare", "rs", "fh", "--out", "bad"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn report_outputs_and_geojson_annotation() {
    let w = workspace();
    let d = w.path();
    assert!(fit(d, "nl_rs.json", "rs", &[]).status.success());
    ok(d, &["report", "--fit", "rs", "--out", "plain"]);
    let names: Vec<String> = fs::read_dir(d.join("plain")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert!(names.contains(&"estimates.csv".to_string()));
    assert!(!names.iter().any(|n| n.ends_with(".geojson")));

    // One feature with no estimate and one area with no feature.
    let areas: Vec<String> = read(d.join("sim/areas.csv")).lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    let mut features: Vec<Value> = areas[1..]
        .iter()
        .map(|a| serde_json::json!({"type": "Feature", "geometry": null, "properties": {"area_id": a, "name": a.to_lowercase()}}))
        .collect();
    features.push(serde_json::json!({"type": "Feature", "geometry": null, "properties": {"area_id": "ZZ"}}));
    let input = serde_json::json!({"type": "FeatureCollection", "features": features});
    fs::write(d.join("in.geojson"), input.to_string()).unwrap();
    let o = ok(d, &["report", "--fit", "rs", "--geojson", "in.geojson", "--out", "geo"]);
    let err = stderr(&o);
    assert!(err.contains("ZZ") && err.contains(&areas[0]), "{err}");
    let out = json(d.join("geo/estimates.geojson"));
    let feats = out["features"].as_array().unwrap();
    assert_eq!(feats.len(), features.len());
    let last = &feats[feats.len() - 1]["properties"];
    assert_eq!(last["area_id"], "ZZ");
    assert!(last.as_object().unwrap().values().filter(|v| v.is_null()).count() >= 1);
    let first = &feats[0]["properties"];
    assert_eq!(first["name"], areas[1].to_lowercase());
    assert!(first.as_object().unwrap().values().filter_map(Value::as_f64).any(|v| v > 0.0 && v < 1.0));
}

#[test]
fn report_districts_need_persons_and_areas() {
    let w = workspace();
    let d = w.path();
    assert!(fit(d, "nl_rs.json", "rs", &[]).status.success());
    let areas: Vec<String> = read(d.join("sim/areas.csv")).lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    let map: String = areas.iter().enumerate().map(|(i, a)| format!("{a},D{}\n", i % 3)).collect();
    fs::write(d.join("map.csv"), format!("area_id,district_id\n{map}")).unwrap();
    let o = povmap(d, &["report", "--fit", "rs", "--district-map", "map.csv", "--out", "r"]);
    assert_eq!(o.status.code(), Some(2));
    ok(d, &["report", "--fit", "rs", "--district-map", "map.csv", "--persons", "sim/persons.csv", "--areas", "sim/areas.csv", "--out", "r"]);
    let districts = read(d.join("r/districts.csv"));
    assert_eq!(districts.lines().count(), 4);
    for line in districts.lines().skip(1) {
        let c: Vec<f64> = line.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert!((c[8] - c[0] / c[6]).abs() < 1e-12, "{line}");
    }
}

#[test]
fn multivariate_report_has_contributions() {
    let w = workspace();
    let d = w.path();
    let o = fit(d, "mv.json", "mv", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    ok(d, &["report", "--fit", "mv", "--out", "r"]);
    let c = read(d.join("r/contributions.csv"));
    assert!(c.lines().next().unwrap().starts_with("area_id,"));
    for line in c.lines().skip(1) {
        let v: Vec<f64> = line.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        let shares: f64 = v.chunks(4).map(|d| d[0]).sum();
        assert!((shares - 1.0).abs() < 1e-12, "{line}");
    }
}

#[test]
fn simulate_is_deterministic_and_validates_config() {
    let d = tempfile::tempdir().unwrap();
    let d = d.path();
    ok(d, &["simulate", "--out", "a", "--seed", "9"]);
    ok(d, &["simulate", "--out", "b", "--seed", "9"]);
    ok(d, &["simulate", "--out", "c", "--seed", "10"]);
    assert_eq!(read(d.join("a/persons.csv")), read(d.join("b/persons.csv")));
    assert_ne!(read(d.join("a/persons.csv")), read(d.join("c/persons.csv")));
    assert_eq!(json(d.join("a/truth.json"))["seed"], 9);

    fs::write(d.join("bad.json"), r#"{"true_rho": [0.9, 0.9, -0.9]}"#).unwrap();
    let o = povmap(d, &["simulate", "--config", "bad.json", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = ok(d, &["simulate", "--out", "v", "--validate", "10"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("|z|"));
    let rows = read(d.join("v/unbiasedness.csv"));
    assert!(rows.starts_with("area_id,mean_error,mc_se,z"));
}

#[test]
fn every_output_directory_has_one_manifest() {
    let w = workspace();
    let d = w.path();
    ok(d, &["direct", "--persons", "sim/persons.csv", "--out", "direct"]);
    assert!(fit(d, "nl_rs.json", "rs", &[]).status.success());
    ok(d, &["report", "--fit", "rs", "--out", "rep"]);
    for dir in ["sim", "direct", "rs", "rep"] {
        let manifests = fs::read_dir(d.join(dir)).unwrap().filter(|e| e.as_ref().unwrap().file_name() == "manifest.json").count();
        assert_eq!(manifests, 1, "{dir}");
        let m = json(d.join(dir).join("manifest.json"));
        assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
        for o in m["outputs"].as_array().unwrap() {
            assert!(d.join(dir).join(o["path"].as_str().unwrap()).is_file());
        }
    }
    assert_eq!(json(d.join("rs/manifest.json"))["seed"], 5);
}
