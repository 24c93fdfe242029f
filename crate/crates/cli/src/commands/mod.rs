pub mod compare;
pub mod direct;
pub mod fit;
pub mod report;
pub mod simulate;

use std::fs;
use std::path::Path;

use povmap_core::io;
use serde::de::DeserializeOwned;

use crate::args::{Cli, Command};
use crate::error::CliError;

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Direct(a) => direct::run(a),
        Command::Fit(a) => fit::run(a),
        Command::Compare(a) => compare::run(a),
        Command::Report(a) => report::run(a),
        Command::Simulate(a) => simulate::run(a),
    }
}

pub(crate) fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

/// Shortest round-trip text for finite values, `NA` otherwise.
pub(crate) fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        "NA".into()
    }
}

/// Reads a JSON configuration file; any failure is a usage error naming the file.
pub(crate) fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    io::read_json(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Column label for a probability, e.g. 0.025 -> `q2.5`.
pub(crate) fn quantile_label(p: f64) -> String {
    format!("q{}", (p * 1000.0).round() / 10.0)
}

/// Writes `draws[chain][iter][param]` with leading `chain` and `iteration` columns.
pub(crate) fn write_draws(path: &Path, names: &[String], draws: &[Vec<Vec<f64>>]) -> Result<(), CliError> {
    let mut header = vec!["chain".to_string(), "iteration".to_string()];
    header.extend(names.iter().cloned());
    let rows: Vec<Vec<String>> = draws
        .iter()
        .enumerate()
        .flat_map(|(c, chain)| {
            chain.iter().enumerate().map(move |(i, d)| {
                let mut row = vec![c.to_string(), i.to_string()];
                row.extend(d.iter().map(|v| v.to_string()));
                row
            })
        })
        .collect();
    io::write_table(path, &header, &rows)?;
    Ok(())
}

/// Inverse of [`write_draws`]: parameter names and `draws[chain][iter][param]`.
pub(crate) fn read_draws(path: &Path) -> Result<(Vec<String>, Vec<Vec<Vec<f64>>>), CliError> {
    let (header, rows) = io::read_numeric_table(path)?;
    if header.len() < 2 || header[0] != "chain" || header[1] != "iteration" {
        return Err(CliError::Data(format!("{}: expected leading chain and iteration columns", path.display())));
    }
    let mut draws: Vec<Vec<Vec<f64>>> = Vec::new();
    for row in rows {
        let chain = row[0] as usize;
        if chain > draws.len() {
            return Err(CliError::Data(format!("{}: chains out of order", path.display())));
        }
        if chain == draws.len() {
            draws.push(Vec::new());
        }
        draws[chain].push(row[2..].to_vec());
    }
    if draws.is_empty() {
        return Err(CliError::Data(format!("{}: no draws", path.display())));
    }
    Ok((header[2..].to_vec(), draws))
}
