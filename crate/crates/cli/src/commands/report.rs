use std::collections::HashMap;

use log::warn;
use povmap_core::io;
use povmap_core::model::Family;
use povmap_core::reports::geojson::{emit_geojson, GeoEstimate};
use povmap_core::reports::{contributions, district_aggregate, district_direct, summarize_chains, AreaEstimate, Transform};
use serde_json::{json, Value};

use super::fit::{FitRecord, DRAWS_FILE, FIT_FILE};
use super::{num, prepare_out, quantile_label, read_draws};
use crate::args::ReportArgs;
use crate::error::CliError;
use crate::manifest::ManifestBuilder;

pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const CONTRIBUTIONS_FILE: &str = "contributions.csv";
pub const DISTRICTS_FILE: &str = "districts.csv";
pub const GEOJSON_FILE: &str = "estimates.geojson";

const PROBS: [f64; 4] = [0.025, 0.16, 0.84, 0.975];

fn column(names: &[String], name: &str) -> Result<usize, CliError> {
    names.iter().position(|n| n == name).ok_or_else(|| CliError::Data(format!("draws have no column '{name}'")))
}

/// One parameter across chains.
fn chains_of(draws: &[Vec<Vec<f64>>], j: usize) -> Vec<Vec<f64>> {
    draws.iter().map(|c| c.iter().map(|d| d[j]).collect()).collect()
}

fn estimate_row(prefix: Vec<String>, s: &AreaEstimate) -> Vec<String> {
    let mut row = prefix;
    row.push(num(s.mean));
    row.push(num(s.sd));
    row.extend(s.quantiles.iter().map(|(_, v)| num(*v)));
    row.push(num(s.n_eff));
    row.push(num(s.rhat));
    row
}

pub fn run(args: &ReportArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::start("report");
    let fit_path = args.fit.join(FIT_FILE);
    let draws_path = args.fit.join(DRAWS_FILE);
    manifest.input(&fit_path)?;
    manifest.input(&draws_path)?;
    let record: FitRecord = io::read_json(&fit_path)?;
    let (names, draws) = read_draws(&draws_path)?;
    let univariate = record.family.is_univariate();
    let dims = &record.dimension_names;
    let mut outputs = vec![ESTIMATES_FILE];
    prepare_out(&args.out)?;

    // Area estimates: π_i for univariate fits, θ_ik for the multivariate one.
    let mut header = vec!["area_id".to_string()];
    if !univariate {
        header.push("dimension".into());
    }
    header.extend(["mean", "sd"].map(String::from));
    header.extend(PROBS.iter().map(|&p| quantile_label(p)));
    header.extend(["n_eff", "rhat"].map(String::from));
    let mut rows = Vec::new();
    let mut area_estimates: Vec<AreaEstimate> = Vec::new();
    for a in &record.area_ids {
        if univariate {
            let s = summarize_chains(a, &chains_of(&draws, column(&names, &format!("pi[{a}]"))?), Transform::Identity, &PROBS)?;
            rows.push(estimate_row(vec![a.clone()], &s));
            area_estimates.push(s);
        } else {
            for d in dims {
                let j = column(&names, &format!("theta[{a},{d}]"))?;
                let s = summarize_chains(a, &chains_of(&draws, j), Transform::Identity, &PROBS)?;
                rows.push(estimate_row(vec![a.clone(), d.clone()], &s));
            }
        }
    }
    io::write_table(&args.out.join(ESTIMATES_FILE), &header, &rows)?;

    let shares = if univariate {
        None
    } else {
        let cols: Vec<Vec<usize>> = record
            .area_ids
            .iter()
            .map(|a| dims.iter().map(|d| column(&names, &format!("theta[{a},{d}]"))).collect())
            .collect::<Result<_, _>>()?;
        let theta: Vec<Vec<Vec<f64>>> =
            draws.iter().flatten().map(|d| cols.iter().map(|c| c.iter().map(|&j| d[j]).collect()).collect()).collect();
        let shares = contributions(&record.area_ids, &theta)?;
        let mut header = vec!["area_id".to_string()];
        for d in dims {
            header.extend([d.clone(), format!("{d}_se"), format!("{d}_2.5%"), format!("{d}_97.5%")]);
        }
        let rows: Vec<Vec<String>> = shares
            .iter()
            .map(|c| {
                let mut row = vec![c.area_id.clone()];
                for k in 0..dims.len() {
                    row.extend([num(c.shares[k]), num(c.share_se[k]), num(c.share_intervals[k].0), num(c.share_intervals[k].1)]);
                }
                row
            })
            .collect();
        io::write_table(&args.out.join(CONTRIBUTIONS_FILE), &header, &rows)?;
        outputs.push(CONTRIBUTIONS_FILE);
        Some(shares)
    };

    if let Some(map_path) = &args.district_map {
        if !univariate {
            return Err(CliError::Usage("district aggregates need a univariate fit".into()));
        }
        let (areas_path, persons_path) = (args.areas.as_ref().expect("clap"), args.persons.as_ref().expect("clap"));
        manifest.input(map_path)?;
        manifest.input(areas_path)?;
        manifest.input(persons_path)?;
        let map = io::read_district_map(map_path)?;
        let table = io::read_areas(areas_path)?;
        let pops = table
            .population
            .as_ref()
            .ok_or_else(|| CliError::Data(format!("{} has no population column", areas_path.display())))?;
        let populations: HashMap<String, f64> = table.area_ids.iter().cloned().zip(pops.iter().copied()).collect();
        let persons = io::read_persons(persons_path)?;
        let direct = district_direct(&persons.records, &map)?;
        let direct_by_id: HashMap<String, f64> = direct.iter().map(|(d, e)| (d.clone(), e.estimate)).collect();
        let pi_cols: Vec<usize> =
            record.area_ids.iter().map(|a| column(&names, &format!("pi[{a}]"))).collect::<Result<_, _>>()?;
        let pi: Vec<Vec<f64>> = draws.iter().flatten().map(|d| pi_cols.iter().map(|&j| d[j]).collect()).collect();
        let districts = district_aggregate(&record.area_ids, &pi, &populations, &map, &direct_by_id)?;
        let mut header: Vec<String> = ["district_id", "estimate", "se"].map(String::from).to_vec();
        header.extend(PROBS.iter().map(|&p| quantile_label(p)));
        header.extend(["direct", "direct_se", "bm_ratio"].map(String::from));
        let rows: Vec<Vec<String>> = districts
            .iter()
            .map(|d| {
                let direct_se = direct.iter().find(|(id, _)| *id == d.district_id).map_or(f64::NAN, |(_, e)| e.se);
                let mut row = vec![d.district_id.clone(), num(d.estimate), num(d.se)];
                row.extend(d.intervals.iter().map(|&v| num(v)));
                row.extend([num(d.direct), num(direct_se), num(d.bm_ratio)]);
                row
            })
            .collect();
        io::write_table(&args.out.join(DISTRICTS_FILE), &header, &rows)?;
        outputs.push(DISTRICTS_FILE);
    }

    if let Some(geo_path) = &args.geojson {
        manifest.input(geo_path)?;
        let input: Value = io::read_json(geo_path)?;
        let estimates: Vec<GeoEstimate> = record
            .area_ids
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let s = area_estimates.get(i);
                GeoEstimate {
                    area_id: a.clone(),
                    estimate: s.map_or(f64::NAN, |s| s.mean),
                    se: s.map_or(f64::NAN, |s| s.sd),
                    ci_low: s.map_or(f64::NAN, |s| s.q(0.025)),
                    ci_high: s.map_or(f64::NAN, |s| s.q(0.975)),
                    shares: shares.as_ref().map_or(Vec::new(), |c| c[i].shares.clone()),
                }
            })
            .collect();
        let share_dims: &[String] = if univariate { &[] } else { dims };
        let annotated = emit_geojson(&input, &estimates, share_dims, &args.key)?;
        if !annotated.unmatched_features.is_empty() {
            warn!(
                "{} features match no area and get null properties: {}",
                annotated.unmatched_features.len(),
                annotated.unmatched_features.join(", ")
            );
        }
        if !annotated.unmatched_estimates.is_empty() {
            warn!(
                "{} areas have no feature in {}: {}",
                annotated.unmatched_estimates.len(),
                geo_path.display(),
                annotated.unmatched_estimates.join(", ")
            );
        }
        io::write_json(&args.out.join(GEOJSON_FILE), &annotated.collection)?;
        outputs.push(GEOJSON_FILE);
    }

    manifest.config(json!({
        "fit": args.fit.display().to_string(),
        "family": Family::as_str(&record.family),
        "areas": args.areas.as_ref().map(|p| p.display().to_string()),
        "geojson": args.geojson.as_ref().map(|p| p.display().to_string()),
        "key": args.key,
        "district_map": args.district_map.as_ref().map(|p| p.display().to_string()),
        "persons": args.persons.as_ref().map(|p| p.display().to_string()),
    }));
    manifest.finish(&args.out, &outputs, "ok")?;
    println!("{} report for {} areas: wrote {}", record.family, record.area_ids.len(), args.out.display());
    Ok(())
}
