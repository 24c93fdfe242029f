use std::path::Path;

use log::warn;
use povmap_core::hmc::{sample, PosteriorDraws, SamplerConfig};
use povmap_core::io;
use povmap_core::model::spec::{build_model, pointwise_loglik, BuiltModel, ModelConfig, ModelInputs};
use povmap_core::model::Family;
use povmap_core::reports::{summarize, Transform, DEFAULT_PROBS};
use povmap_core::survey_design::{summarize_areas, AreaDesignSummary, DesignEffects};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{direct, num, prepare_out, quantile_label, read_config, write_draws};
use crate::args::FitArgs;
use crate::error::CliError;
use crate::manifest::ManifestBuilder;

pub const RHAT_WARN: f64 = 1.05;
pub const FIT_FILE: &str = "fit.json";
pub const DRAWS_FILE: &str = "draws.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const LOGLIK_FILE: &str = "loglik.csv";

/// What later commands need to know about a fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRecord {
    pub family: Family,
    /// Effective model configuration, sampler settings included.
    pub config: ModelConfig,
    pub area_ids: Vec<String>,
    /// Columns of the pointwise log-likelihood.
    pub observed_area_ids: Vec<String>,
    pub dimension_names: Vec<String>,
    pub coefficient_names: Vec<String>,
    pub covariate_center: Vec<f64>,
    pub covariate_scale: Vec<f64>,
    pub deff_poverty: f64,
    /// First-stage posterior means of `π_i` (NL_PLUGIN only).
    pub plugin: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    status: &'static str,
    chains: usize,
    post_warmup: usize,
    divergences: Vec<usize>,
    total_divergences: usize,
    step_size: Vec<f64>,
    mean_accept: Vec<f64>,
    n_leapfrog: Vec<usize>,
    rhat_threshold: f64,
    max_rhat: Option<f64>,
    min_ess: Option<f64>,
    high_rhat: Vec<String>,
}

fn load_design(args: &FitArgs, manifest: &mut ManifestBuilder) -> Result<(Vec<AreaDesignSummary>, DesignEffects), CliError> {
    if let Some(dir) = &args.design {
        let summary = dir.join(direct::SUMMARY_FILE);
        let effects = dir.join(direct::EFFECTS_FILE);
        manifest.input(&summary)?;
        manifest.input(&effects)?;
        let (rows, _) = io::read_design_summary(&summary)?;
        let effects: DesignEffects = io::read_json(&effects)?;
        Ok((rows, effects))
    } else {
        let path = args.persons.as_ref().expect("clap requires --design or --persons");
        manifest.input(path)?;
        let persons = io::read_persons(path)?;
        Ok(summarize_areas(&persons.records)?)
    }
}

/// Posterior means of `π_i` from an NL_RS fit, for the second NL_PLUGIN stage.
fn plugin_means(config: &ModelConfig, sampler: &SamplerConfig, inputs: &ModelInputs<'_>) -> Result<Vec<f64>, CliError> {
    let stage1 = ModelConfig { family: Family::NlRs, ..config.clone() };
    let built = build_model(&stage1, inputs)?;
    let draws = sample(&built.model, sampler)?;
    let names = built.output_names();
    let first = names.iter().position(|n| n.starts_with("pi[")).expect("univariate outputs include pi");
    let m = built.area_ids.len();
    let mut sums = vec![0.0; m];
    for d in draws.iter() {
        let c = built.constrain(d);
        for (s, v) in sums.iter_mut().zip(&c[first..first + m]) {
            *s += v;
        }
    }
    let n = draws.total_draws() as f64;
    Ok(sums.into_iter().map(|s| s / n).collect())
}

struct Fitted {
    built: BuiltModel,
    draws: PosteriorDraws,
    plugin: Option<Vec<f64>>,
}

fn fit(config: &ModelConfig, sampler: &SamplerConfig, inputs: &ModelInputs<'_>) -> Result<Fitted, (CliError, &'static str)> {
    let plugin = if config.family == Family::NlPlugin {
        Some(plugin_means(config, sampler, inputs).map_err(|e| (e, "plug-in first stage"))?)
    } else {
        None
    };
    let inputs = ModelInputs { plugin: plugin.as_deref(), ..*inputs };
    let built = build_model(config, &inputs).map_err(|e| (e.into(), "model"))?;
    let draws = sample(&built.model, sampler).map_err(|e| (e.into(), "sampling"))?;
    Ok(Fitted { built, draws, plugin })
}

fn write_summary(path: &Path, summary: &[povmap_core::reports::AreaEstimate]) -> Result<(), CliError> {
    let mut header: Vec<String> = ["name", "mean", "se_mean", "sd"].iter().map(|s| s.to_string()).collect();
    header.extend(DEFAULT_PROBS.iter().map(|&p| quantile_label(p)));
    header.push("n_eff".into());
    header.push("Rhat".into());
    let rows: Vec<Vec<String>> = summary
        .iter()
        .map(|s| {
            let mut row = vec![s.name.clone(), num(s.mean), num(s.se_mean), num(s.sd)];
            row.extend(s.quantiles.iter().map(|(_, v)| num(*v)));
            row.push(num(s.n_eff));
            row.push(num(s.rhat));
            row
        })
        .collect();
    io::write_table(path, &header, &rows)?;
    Ok(())
}

pub fn run(args: &FitArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::start("fit");
    manifest.input(&args.config)?;
    let mut config: ModelConfig = read_config(&args.config)?;
    let mut sampler = config.sampler.clone().unwrap_or_default();
    if let Some(v) = args.chains {
        sampler.chains = v;
    }
    if let Some(v) = args.iterations {
        sampler.iterations = v;
    }
    if let Some(v) = args.warmup {
        sampler.warmup = v;
    }
    if let Some(v) = args.seed {
        sampler.seed = v;
    }
    config.sampler = Some(sampler.clone());
    config.validate()?;
    sampler.validate()?;
    let threads = args.threads.unwrap_or(sampler.chains);
    if threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    manifest.seed(sampler.seed);

    manifest.input(&args.areas)?;
    let areas = io::read_areas(&args.areas)?;
    let (summaries, effects) = load_design(args, &mut manifest)?;
    manifest.config(json!({
        "model": config,
        "threads": threads,
        "design": args.design.as_ref().map(|p| p.display().to_string()),
        "persons": args.persons.as_ref().map(|p| p.display().to_string()),
        "areas": args.areas.display().to_string(),
    }));

    let inputs = ModelInputs { areas: &areas, summaries: &summaries, effects: &effects, plugin: None };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))?;
    let result = pool.install(|| fit(&config, &sampler, &inputs));
    prepare_out(&args.out)?;
    let fitted = match result {
        Ok(f) => f,
        Err((e, stage)) => {
            if let CliError::Numerical(_) = e {
                // Keep what is known about the failed run next to the manifest.
                io::write_json(
                    &args.out.join(DIAGNOSTICS_FILE),
                    &json!({"status": "failed", "stage": stage, "error": e.to_string(), "sampler": sampler}),
                )?;
                manifest.finish(&args.out, &[DIAGNOSTICS_FILE], "failed")?;
            }
            return Err(e);
        }
    };

    let built = &fitted.built;
    let names = built.output_names();
    let constrained = fitted.draws.map(names.clone(), |x| built.constrain(x));
    write_draws(&args.out.join(DRAWS_FILE), &names, &constrained.draws)?;

    let loglik = pointwise_loglik(built, &fitted.draws)?;
    let observed = built.observed_area_ids();
    let rows: Vec<Vec<String>> = loglik.iter().map(|r| r.iter().map(|v| v.to_string()).collect()).collect();
    io::write_table(&args.out.join(LOGLIK_FILE), &observed, &rows)?;

    let summary = pool.install(|| summarize(&names, &constrained.draws, Transform::Identity))?;
    write_summary(&args.out.join(SUMMARY_FILE), &summary)?;

    let high_rhat: Vec<String> = summary.iter().filter(|s| s.rhat >= RHAT_WARN).map(|s| s.name.clone()).collect();
    let max_rhat = summary.iter().map(|s| s.rhat).filter(|r| r.is_finite()).reduce(f64::max);
    let min_ess = summary.iter().map(|s| s.n_eff).filter(|r| r.is_finite()).reduce(f64::min);
    let draws = &fitted.draws;
    let total_divergences = draws.divergences.iter().sum();
    if !high_rhat.is_empty() {
        warn!(
            "{} quantities have R-hat >= {RHAT_WARN} (max {:.3}), e.g. {}",
            high_rhat.len(),
            max_rhat.unwrap_or(f64::NAN),
            high_rhat[0]
        );
    }
    if total_divergences > 0 {
        warn!("{total_divergences} divergent transitions after warmup");
    }
    let diagnostics = Diagnostics {
        status: "ok",
        chains: draws.n_chains(),
        post_warmup: draws.n_iterations(),
        divergences: draws.divergences.clone(),
        total_divergences,
        step_size: draws.step_size.clone(),
        mean_accept: draws.mean_accept.clone(),
        n_leapfrog: draws.n_leapfrog.clone(),
        rhat_threshold: RHAT_WARN,
        max_rhat,
        min_ess,
        high_rhat,
    };
    io::write_json(&args.out.join(DIAGNOSTICS_FILE), &diagnostics)?;

    let record = FitRecord {
        family: config.family,
        config: config.clone(),
        area_ids: built.area_ids.clone(),
        observed_area_ids: observed,
        dimension_names: built.dimension_names.clone(),
        coefficient_names: built.design.names.clone(),
        covariate_center: built.design.center.clone(),
        covariate_scale: built.design.scale.clone(),
        deff_poverty: effects.deff_poverty,
        plugin: fitted.plugin,
    };
    io::write_json(&args.out.join(FIT_FILE), &record)?;
    manifest.finish(&args.out, &[DRAWS_FILE, SUMMARY_FILE, DIAGNOSTICS_FILE, LOGLIK_FILE, FIT_FILE], "ok")?;
    println!(
        "{} fit: {} chains x {} draws, max R-hat {}, wrote {}",
        config.family,
        draws.n_chains(),
        draws.n_iterations(),
        max_rhat.map_or("NA".into(), |r| format!("{r:.3}")),
        args.out.display()
    );
    Ok(())
}
