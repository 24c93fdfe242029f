use log::warn;
use povmap_core::io;
use povmap_core::survey_design::summarize_areas;
use serde_json::json;

use super::prepare_out;
use crate::args::DirectArgs;
use crate::error::CliError;
use crate::manifest::ManifestBuilder;

pub const SUMMARY_FILE: &str = "design_summary.csv";
pub const EFFECTS_FILE: &str = "design_effects.json";

pub fn run(args: &DirectArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::start("direct");
    manifest.input(&args.persons)?;
    let persons = io::read_persons(&args.persons)?;
    if persons.poor_without_scores > 0 {
        warn!(
            "{} poor respondents have no dimensional scores; score outputs are omitted",
            persons.poor_without_scores
        );
    }
    if let Some(path) = &args.areas {
        manifest.input(path)?;
        let table = io::read_areas(path)?;
        if let Some(r) = persons.records.iter().find(|r| table.index_of(&r.area_id).is_none()) {
            return Err(CliError::Data(format!("surveyed area '{}' is missing from {}", r.area_id, path.display())));
        }
    }
    let (rows, effects) = summarize_areas(&persons.records)?;
    let degenerate = rows.iter().filter(|r| r.se_degenerate).count();
    if degenerate > 0 {
        warn!("{degenerate} areas have a single PSU; their direct standard errors are not estimable");
    }

    prepare_out(&args.out)?;
    io::write_design_summary(&args.out.join(SUMMARY_FILE), &rows, effects.k)?;
    io::write_json(&args.out.join(EFFECTS_FILE), &effects)?;
    manifest.config(json!({
        "persons": args.persons.display().to_string(),
        "areas": args.areas.as_ref().map(|p| p.display().to_string()),
    }));
    manifest.finish(&args.out, &[SUMMARY_FILE, EFFECTS_FILE], "ok")?;
    println!("{} areas, K = {}: wrote {}", rows.len(), effects.k, args.out.display());
    Ok(())
}
