use povmap_core::io;
use povmap_core::synthetic::{generate, unbiasedness_check, SimConfig};
use serde_json::json;

use super::{num, prepare_out, read_config};
use crate::args::SimulateArgs;
use crate::error::CliError;
use crate::manifest::ManifestBuilder;

pub const PERSONS_FILE: &str = "persons.csv";
pub const AREAS_FILE: &str = "areas.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const UNBIASEDNESS_FILE: &str = "unbiasedness.csv";

pub fn run(args: &SimulateArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::start("simulate");
    let mut config = match &args.config {
        Some(path) => {
            manifest.input(path)?;
            read_config::<SimConfig>(path)?
        }
        None => SimConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    manifest.seed(config.seed);
    manifest.config(json!({"simulation": config, "validate": args.validate}));

    let sim = generate(&config)?;
    prepare_out(&args.out)?;
    io::write_persons(&args.out.join(PERSONS_FILE), &sim.persons, config.k)?;
    io::write_areas(&args.out.join(AREAS_FILE), &sim.areas)?;
    io::write_json(&args.out.join(TRUTH_FILE), &sim.truth)?;
    let mut outputs = vec![PERSONS_FILE, AREAS_FILE, TRUTH_FILE];

    if let Some(reps) = args.validate {
        let rows = unbiasedness_check(&config, reps)?;
        let header: Vec<String> = ["area_id", "mean_error", "mc_se", "z"].map(String::from).to_vec();
        let table: Vec<Vec<String>> =
            rows.iter().map(|r| vec![r.area_id.clone(), num(r.mean_error), num(r.mc_se), num(r.z)]).collect();
        io::write_table(&args.out.join(UNBIASEDNESS_FILE), &header, &table)?;
        outputs.push(UNBIASEDNESS_FILE);
        let max_z = rows.iter().map(|r| r.z.abs()).filter(|z| z.is_finite()).fold(0.0, f64::max);
        let flagged = rows.iter().filter(|r| r.z.abs() > 3.0).count();
        println!(
            "unbiasedness over {reps} replications: max |z| = {max_z:.2}, {flagged} of {} areas beyond 3 Monte Carlo SEs",
            rows.len()
        );
    }
    manifest.finish(&args.out, &outputs, "ok")?;
    println!("{} persons in {} areas: wrote {}", sim.persons.len(), sim.areas.area_ids.len(), args.out.display());
    Ok(())
}
