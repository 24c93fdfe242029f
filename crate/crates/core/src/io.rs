//! Readers and writers for the pipeline's CSV and JSON files.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so output bytes depend
//! only on the values.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::IoError;
use crate::survey_design::{AreaDesignSummary, PersonRecord};

pub const PERSON_COLUMNS: [&str; 6] = ["area_id", "psu_id", "household_id", "person_id", "weight", "poor"];

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

struct Header {
    path: String,
    index: HashMap<String, usize>,
    names: Vec<String>,
}

impl Header {
    fn new(path: &Path, record: &csv::StringRecord) -> Result<Self, IoError> {
        let names: Vec<String> = record.iter().map(|s| s.trim().to_string()).collect();
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(IoError::Schema { path: path_str(path), message: format!("duplicate column '{n}'") });
            }
        }
        Ok(Self { path: path_str(path), index, names })
    }

    fn require(&self, column: &str) -> Result<usize, IoError> {
        self.index
            .get(column)
            .copied()
            .ok_or_else(|| IoError::MissingColumn { path: self.path.clone(), column: column.to_string() })
    }

    fn cell_error(&self, row: usize, column: &str, message: impl Into<String>) -> IoError {
        IoError::Cell { path: self.path.clone(), row, column: column.to_string(), message: message.into() }
    }

    fn number(&self, rec: &csv::StringRecord, row: usize, col: usize) -> Result<f64, IoError> {
        let raw = rec.get(col).unwrap_or("").trim();
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.cell_error(row, &self.names[col], format!("expected a finite number, got '{raw}'"))),
        }
    }

    fn optional_number(&self, rec: &csv::StringRecord, row: usize, col: usize) -> Result<Option<f64>, IoError> {
        if rec.get(col).unwrap_or("").trim().is_empty() {
            Ok(None)
        } else {
            self.number(rec, row, col).map(Some)
        }
    }

    fn text(&self, rec: &csv::StringRecord, row: usize, col: usize) -> Result<String, IoError> {
        let v = rec.get(col).unwrap_or("").trim();
        if v.is_empty() {
            return Err(self.cell_error(row, &self.names[col], "empty identifier"));
        }
        Ok(v.to_string())
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>, IoError> {
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(false).from_path(path)?)
}

/// Ordered `score_1..score_K` column positions.
fn score_columns(header: &Header) -> Result<Vec<usize>, IoError> {
    let mut found: Vec<(usize, usize)> = Vec::new();
    for (i, name) in header.names.iter().enumerate() {
        if let Some(k) = name.strip_prefix("score_") {
            let k: usize = k.parse().map_err(|_| IoError::Schema {
                path: header.path.clone(),
                message: format!("score column '{name}' must be named score_<k>"),
            })?;
            found.push((k, i));
        }
    }
    found.sort();
    for (expect, (k, _)) in (1..).zip(&found) {
        if *k != expect {
            return Err(IoError::MissingColumn { path: header.path.clone(), column: format!("score_{expect}") });
        }
    }
    Ok(found.into_iter().map(|(_, i)| i).collect())
}

/// Persons file plus the number of score columns it declares.
#[derive(Debug, Clone)]
pub struct PersonsFile {
    pub records: Vec<PersonRecord>,
    pub k: usize,
    /// Poor respondents whose score cells were empty.
    pub poor_without_scores: usize,
}

pub fn read_persons(path: &Path) -> Result<PersonsFile, IoError> {
    let mut rdr = reader(path)?;
    let header = Header::new(path, rdr.headers()?)?;
    let cols: Vec<usize> = PERSON_COLUMNS.iter().map(|c| header.require(c)).collect::<Result<_, _>>()?;
    let scores = score_columns(&header)?;
    let mut records = Vec::new();
    let mut poor_without_scores = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let weight = header.number(&rec, row, cols[4])?;
        if weight <= 0.0 {
            return Err(header.cell_error(row, "weight", "weight must be positive"));
        }
        let poor = match rec.get(cols[5]).unwrap_or("").trim() {
            "1" | "true" | "TRUE" => true,
            "0" | "false" | "FALSE" => false,
            other => return Err(header.cell_error(row, "poor", format!("expected 0 or 1, got '{other}'"))),
        };
        let mut values = Vec::with_capacity(scores.len());
        let mut missing = false;
        for &c in &scores {
            match header.optional_number(&rec, row, c)? {
                Some(v) if (0.0..=1.0).contains(&v) => values.push(v),
                Some(_) => return Err(header.cell_error(row, &header.names[c], "score must lie in [0, 1]")),
                None => {
                    missing = true;
                    values.push(0.0);
                }
            }
        }
        if !poor && values.iter().any(|&v| v != 0.0) {
            return Err(header.cell_error(row, "poor", "non-poor person has a non-zero score"));
        }
        let scores = if missing && poor {
            poor_without_scores += 1;
            None
        } else {
            Some(values)
        };
        records.push(PersonRecord {
            area_id: header.text(&rec, row, cols[0])?,
            psu_id: header.text(&rec, row, cols[1])?,
            household_id: header.text(&rec, row, cols[2])?,
            person_id: header.text(&rec, row, cols[3])?,
            weight,
            poor,
            scores,
        });
    }
    Ok(PersonsFile { records, k: scores.len(), poor_without_scores })
}

pub fn write_persons(path: &Path, records: &[PersonRecord], k: usize) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = PERSON_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((1..=k).map(|j| format!("score_{j}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.area_id.clone(),
            r.psu_id.clone(),
            r.household_id.clone(),
            r.person_id.clone(),
            r.weight.to_string(),
            (r.poor as u8).to_string(),
        ];
        match &r.scores {
            Some(s) => row.extend(s.iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), k)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Area frame: identifiers, optional census populations and numeric covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaTable {
    pub area_ids: Vec<String>,
    pub population: Option<Vec<f64>>,
    /// Covariate name and one value per area.
    pub covariates: Vec<(String, Vec<f64>)>,
}

impl AreaTable {
    pub fn covariate(&self, name: &str) -> Option<&[f64]> {
        self.covariates.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn index_of(&self, area: &str) -> Option<usize> {
        self.area_ids.iter().position(|a| a == area)
    }
}

/// Reads `area_id[,population][,covariate...]`; every other column must be numeric.
pub fn read_areas(path: &Path) -> Result<AreaTable, IoError> {
    let mut rdr = reader(path)?;
    let header = Header::new(path, rdr.headers()?)?;
    let id = header.require("area_id")?;
    let pop = header.index.get("population").copied();
    let cov_cols: Vec<usize> = (0..header.names.len()).filter(|&c| c != id && Some(c) != pop).collect();
    let mut area_ids = Vec::new();
    let mut population = Vec::new();
    let mut covariates: Vec<(String, Vec<f64>)> = cov_cols.iter().map(|&c| (header.names[c].clone(), Vec::new())).collect();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let area = header.text(&rec, row, id)?;
        if area_ids.contains(&area) {
            return Err(header.cell_error(row, "area_id", format!("duplicate area '{area}'")));
        }
        area_ids.push(area);
        if let Some(p) = pop {
            let v = header.number(&rec, row, p)?;
            if v <= 0.0 {
                return Err(header.cell_error(row, "population", "population must be positive"));
            }
            population.push(v);
        }
        for (slot, &c) in covariates.iter_mut().zip(&cov_cols) {
            slot.1.push(header.number(&rec, row, c)?);
        }
    }
    Ok(AreaTable { area_ids, population: pop.map(|_| population), covariates })
}

pub fn write_areas(path: &Path, table: &AreaTable) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["area_id".to_string()];
    if table.population.is_some() {
        header.push("population".into());
    }
    header.extend(table.covariates.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    for (i, id) in table.area_ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        if let Some(p) = &table.population {
            row.push(p[i].to_string());
        }
        row.extend(table.covariates.iter().map(|(_, v)| v[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Two-column `area_id,district_id` mapping, in file order.
pub fn read_district_map(path: &Path) -> Result<Vec<(String, String)>, IoError> {
    let mut rdr = reader(path)?;
    let header = Header::new(path, rdr.headers()?)?;
    let a = header.require("area_id")?;
    let d = header.require("district_id")?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push((header.text(&rec, i + 2, a)?, header.text(&rec, i + 2, d)?));
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn design_summary_header(k: usize) -> Vec<String> {
    let mut h: Vec<String> = ["area_id", "n_households", "n_adjusted", "z_direct", "z_direct_se", "D_smoothed"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=k).map(|j| format!("y_{j}")));
    for a in 1..=k {
        for b in 1..=a {
            h.push(format!("sigma_{a}_{b}"));
        }
    }
    h.push("n_poor_adjusted".into());
    h.push("se_degenerate".into());
    h
}

pub fn write_design_summary(path: &Path, rows: &[AreaDesignSummary], k: usize) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(design_summary_header(k))?;
    for r in rows {
        let mut row = vec![
            r.area_id.clone(),
            r.n_households.to_string(),
            r.n_adjusted.to_string(),
            r.z_direct.to_string(),
            r.z_direct_se.to_string(),
            r.d_smoothed.to_string(),
        ];
        for j in 0..k {
            row.push(fmt_opt(r.y_direct.as_ref().map(|y| y[j])));
        }
        for a in 0..k {
            for b in 0..=a {
                row.push(fmt_opt(r.sigma_hat.as_ref().map(|s| s[(a, b)])));
            }
        }
        row.push(fmt_opt(r.n_poor_adjusted));
        row.push((r.se_degenerate as u8).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_design_summary(path: &Path) -> Result<(Vec<AreaDesignSummary>, usize), IoError> {
    let mut rdr = reader(path)?;
    let header = Header::new(path, rdr.headers()?)?;
    let k = header.names.iter().filter(|n| n.starts_with("y_")).count();
    let expected = design_summary_header(k);
    let cols: Vec<usize> = expected.iter().map(|c| header.require(c)).collect::<Result<_, _>>()?;
    let n_tri = k * (k + 1) / 2;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let num = |j: usize| header.number(&rec, row, cols[j]);
        let n_households = num(1)?;
        if n_households < 1.0 || n_households.fract() != 0.0 {
            return Err(header.cell_error(row, "n_households", "expected a positive integer"));
        }
        let y: Vec<Option<f64>> = (0..k).map(|j| header.optional_number(&rec, row, cols[6 + j])).collect::<Result<_, _>>()?;
        let tri: Vec<Option<f64>> =
            (0..n_tri).map(|j| header.optional_number(&rec, row, cols[6 + k + j])).collect::<Result<_, _>>()?;
        let present = k > 0 && y.iter().chain(&tri).all(|v| v.is_some());
        let (y_direct, sigma_hat) = if present {
            let mut s = DMatrix::zeros(k, k);
            let mut t = 0;
            for a in 0..k {
                for b in 0..=a {
                    s[(a, b)] = tri[t].unwrap();
                    s[(b, a)] = tri[t].unwrap();
                    t += 1;
                }
            }
            (Some(y.iter().map(|v| v.unwrap()).collect()), Some(s))
        } else {
            (None, None)
        };
        let degenerate = rec.get(cols[6 + k + n_tri + 1]).unwrap_or("").trim();
        out.push(AreaDesignSummary {
            area_id: header.text(&rec, row, cols[0])?,
            n_households: n_households as usize,
            n_adjusted: num(2)?,
            z_direct: num(3)?,
            z_direct_se: num(4)?,
            se_degenerate: degenerate == "1",
            d_smoothed: num(5)?,
            n_poor_adjusted: header.optional_number(&rec, row, cols[6 + k + n_tri])?,
            y_direct,
            sigma_hat,
        });
    }
    Ok((out, k))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let mut s = String::new();
    File::open(path)?.read_to_string(&mut s)?;
    Ok(serde_json::from_str(&s)?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Writes a header and rows of pre-formatted cells.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a whole numeric CSV with a header, returning column names and rows.
pub fn read_numeric_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), IoError> {
    let mut rdr = reader(path)?;
    let header = Header::new(path, rdr.headers()?)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        rows.push((0..header.names.len()).map(|c| header.number(&rec, i + 2, c)).collect::<Result<Vec<_>, _>>()?);
    }
    Ok((header.names, rows))
}
