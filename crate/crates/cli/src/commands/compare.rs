use log::warn;
use povmap_core::io;
use povmap_core::psis::{compare, elpd_loo, LooResult, PARETO_K_WARN};
use serde::Serialize;
use serde_json::json;

use super::fit::{FitRecord, FIT_FILE, LOGLIK_FILE};
use super::{num, prepare_out};
use crate::args::CompareArgs;
use crate::error::CliError;
use crate::manifest::ManifestBuilder;

pub const COMPARISON_FILE: &str = "comparison.csv";
pub const LOO_FILE: &str = "loo.json";

#[derive(Serialize)]
struct PerModel<'a> {
    model: &'a str,
    family: String,
    observations: &'a [String],
    #[serde(flatten)]
    loo: &'a LooResult,
}

pub fn run(args: &CompareArgs) -> Result<(), CliError> {
    if args.fits.len() < 2 {
        return Err(CliError::Usage("compare needs at least two fit directories".into()));
    }
    let mut manifest = ManifestBuilder::start("compare");
    let mut results: Vec<(String, LooResult)> = Vec::new();
    let mut families = Vec::new();
    let mut columns: Option<Vec<String>> = None;
    for dir in &args.fits {
        let label = dir.display().to_string();
        let loglik_path = dir.join(LOGLIK_FILE);
        let fit_path = dir.join(FIT_FILE);
        manifest.input(&fit_path)?;
        manifest.input(&loglik_path)?;
        let record: FitRecord = io::read_json(&fit_path)?;
        let (header, rows) = io::read_numeric_table(&loglik_path)?;
        match &columns {
            None => columns = Some(header),
            Some(first) if *first != header => {
                return Err(CliError::Data(format!(
                    "{label} was fitted to different observations than {}",
                    args.fits[0].display()
                )))
            }
            Some(_) => {}
        }
        let loo = elpd_loo(&rows)?;
        if loo.n_high_k() > 0 {
            warn!("{label}: {} observations have Pareto k > {PARETO_K_WARN}", loo.n_high_k());
        }
        families.push(record.family.to_string());
        results.push((label, loo));
    }

    let ranked = compare(&results)?;
    let header: Vec<String> = ["model", "family", "elpd_loo", "se_elpd", "p_loo", "elpd_diff", "se_diff", "n_high_k"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = ranked
        .iter()
        .map(|r| {
            let i = results.iter().position(|(name, _)| *name == r.model).expect("ranked rows come from the inputs");
            let loo = &results[i].1;
            vec![
                r.model.clone(),
                families[i].clone(),
                num(r.elpd_loo),
                num(r.se_elpd),
                num(loo.p_loo),
                num(r.elpd_diff),
                num(r.se_diff),
                loo.n_high_k().to_string(),
            ]
        })
        .collect();
    prepare_out(&args.out)?;
    io::write_table(&args.out.join(COMPARISON_FILE), &header, &rows)?;
    let observations = columns.unwrap_or_default();
    let per_model: Vec<PerModel> = results
        .iter()
        .zip(&families)
        .map(|((model, loo), family)| PerModel { model, family: family.clone(), observations: &observations, loo })
        .collect();
    io::write_json(&args.out.join(LOO_FILE), &per_model)?;
    manifest.config(json!({"fits": results.iter().map(|(n, _)| n).collect::<Vec<_>>()}));
    manifest.finish(&args.out, &[COMPARISON_FILE, LOO_FILE], "ok")?;
    println!("best: {} ({} models), wrote {}", ranked[0].model, ranked.len(), args.out.display());
    Ok(())
}
