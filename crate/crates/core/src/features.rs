//! Forward-osmosis feature engineering: raw plant measurements become the
//! osmotic pressure difference across the membrane and the mean velocity,
//! and records are grouped by membrane configuration.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{read_table, read_table_from, Dataset};
use crate::error::{Error, Result};

/// Universal gas constant, J/(mol K).
pub const GAS_CONSTANT: f64 = 8.314;

const PASCAL_PER_BAR: f64 = 1e5;

/// Raw column names in file order.
pub const RAW_COLUMNS: [&str; 10] = ["MT", "MO", "FSM", "DSM", "DSmw", "FSV", "DSV", "FST", "DST", "Fx"];

/// Engineered column names in file order.
pub const ENGINEERED_COLUMNS: [&str; 6] = ["MT", "MO", "DSmw", "dP", "V", "Fx"];

/// Model inputs of every configuration subset.
pub const MODEL_FEATURES: [&str; 3] = ["DSmw", "dP", "V"];
pub const MODEL_TARGET: &str = "Fx";

/// One plant measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub membrane_type: u8,
    pub membrane_orientation: u8,
    /// mol/m^3
    pub fs_molarity: f64,
    /// mol/m^3
    pub ds_molarity: f64,
    /// g/mol
    pub ds_molecular_weight: f64,
    /// cm/s
    pub fs_velocity: f64,
    /// cm/s
    pub ds_velocity: f64,
    /// K
    pub fs_temperature: f64,
    /// K
    pub ds_temperature: f64,
    /// L/(m^2 h)
    pub membrane_flux: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineeredRecord {
    pub membrane_type: u8,
    pub membrane_orientation: u8,
    pub ds_molecular_weight: f64,
    /// Draw minus feed osmotic pressure, bar. May be negative.
    pub delta_pi: f64,
    pub velocity_mean: f64,
    pub membrane_flux: f64,
}

impl EngineeredRecord {
    pub fn config(&self) -> (u8, u8) {
        (self.membrane_type, self.membrane_orientation)
    }
}

/// Van't Hoff factors for the two solutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsConstants {
    pub vant_hoff_feed: f64,
    pub vant_hoff_draw: f64,
}

impl Default for PhysicsConstants {
    fn default() -> Self {
        Self {
            vant_hoff_feed: 2.0,
            vant_hoff_draw: 2.0,
        }
    }
}

/// `pi = i M R T`, with molarity in mol/m^3 and the result in bar.
pub fn osmotic_pressure(molarity: f64, temperature: f64, vant_hoff: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::Domain(format!("temperature must be positive, got {temperature} K")));
    }
    if !(molarity >= 0.0) {
        return Err(Error::Domain(format!("molarity must be >= 0, got {molarity}")));
    }
    if !(vant_hoff >= 1.0) {
        return Err(Error::Domain(format!("van't Hoff factor must be >= 1, got {vant_hoff}")));
    }
    Ok(vant_hoff * molarity * GAS_CONSTANT * temperature / PASCAL_PER_BAR)
}

fn check_binary(v: u8, what: &str, row: usize) -> Result<()> {
    if v > 1 {
        return Err(Error::Domain(format!("row {row}: {what} must be 0 or 1, got {v}")));
    }
    Ok(())
}

/// Derives the pressure difference and mean velocity for every record.
/// Errors carry the 1-based record index.
pub fn engineer(raw: &[RawRecord], constants: &PhysicsConstants) -> Result<Vec<EngineeredRecord>> {
    raw.iter()
        .enumerate()
        .map(|(i, r)| {
            let row = i + 1;
            let wrap = |e: Error| Error::Domain(format!("row {row}: {e}"));
            check_binary(r.membrane_type, "membrane type", row)?;
            check_binary(r.membrane_orientation, "membrane orientation", row)?;
            if !(r.fs_velocity >= 0.0 && r.ds_velocity >= 0.0) {
                return Err(Error::Domain(format!("row {row}: velocities must be >= 0")));
            }
            let feed = osmotic_pressure(r.fs_molarity, r.fs_temperature, constants.vant_hoff_feed).map_err(wrap)?;
            let draw = osmotic_pressure(r.ds_molarity, r.ds_temperature, constants.vant_hoff_draw).map_err(wrap)?;
            Ok(EngineeredRecord {
                membrane_type: r.membrane_type,
                membrane_orientation: r.membrane_orientation,
                ds_molecular_weight: r.ds_molecular_weight,
                delta_pi: draw - feed,
                velocity_mean: 0.5 * (r.fs_velocity + r.ds_velocity),
                membrane_flux: r.membrane_flux,
            })
        })
        .collect()
}

fn as_binary(v: f64, row: usize, column: &str) -> Result<u8> {
    if v == 0.0 || v == 1.0 {
        Ok(v as u8)
    } else {
        Err(Error::Parse {
            row,
            column: column.to_string(),
            value: v.to_string(),
        })
    }
}

fn names<const N: usize>(cols: [&str; N]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

fn raw_from_rows(rows: Vec<Vec<f64>>) -> Result<Vec<RawRecord>> {
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(RawRecord {
                membrane_type: as_binary(r[0], i + 1, "MT")?,
                membrane_orientation: as_binary(r[1], i + 1, "MO")?,
                fs_molarity: r[2],
                ds_molarity: r[3],
                ds_molecular_weight: r[4],
                fs_velocity: r[5],
                ds_velocity: r[6],
                fs_temperature: r[7],
                ds_temperature: r[8],
                membrane_flux: r[9],
            })
        })
        .collect()
}

fn engineered_from_rows(rows: Vec<Vec<f64>>) -> Result<Vec<EngineeredRecord>> {
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(EngineeredRecord {
                membrane_type: as_binary(r[0], i + 1, "MT")?,
                membrane_orientation: as_binary(r[1], i + 1, "MO")?,
                ds_molecular_weight: r[2],
                delta_pi: r[3],
                velocity_mean: r[4],
                membrane_flux: r[5],
            })
        })
        .collect()
}

pub fn read_raw_csv(path: &Path) -> Result<Vec<RawRecord>> {
    raw_from_rows(read_table(path, &names(RAW_COLUMNS))?)
}

pub fn read_raw_from<R: std::io::Read>(reader: R) -> Result<Vec<RawRecord>> {
    raw_from_rows(read_table_from(reader, &names(RAW_COLUMNS))?)
}

pub fn read_engineered_csv(path: &Path) -> Result<Vec<EngineeredRecord>> {
    engineered_from_rows(read_table(path, &names(ENGINEERED_COLUMNS))?)
}

pub fn read_engineered_from<R: std::io::Read>(reader: R) -> Result<Vec<EngineeredRecord>> {
    engineered_from_rows(read_table_from(reader, &names(ENGINEERED_COLUMNS))?)
}

pub fn write_engineered_csv<W: Write>(records: &[EngineeredRecord], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(ENGINEERED_COLUMNS)?;
    for r in records {
        wtr.write_record([
            r.membrane_type.to_string(),
            r.membrane_orientation.to_string(),
            r.ds_molecular_weight.to_string(),
            r.delta_pi.to_string(),
            r.velocity_mean.to_string(),
            r.membrane_flux.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

fn units() -> Vec<Option<String>> {
    ["g/mol", "bar", "cm/s", "L/(m2.h)"].iter().map(|u| Some(u.to_string())).collect()
}

/// Engineered records as a (DSmw, dP, V) -> Fx dataset.
pub fn records_to_dataset(records: &[EngineeredRecord]) -> Result<Dataset> {
    let rows: Vec<Vec<f64>> = records
        .iter()
        .map(|r| vec![r.ds_molecular_weight, r.delta_pi, r.velocity_mean])
        .collect();
    let target = records.iter().map(|r| r.membrane_flux).collect();
    Dataset::from_rows(names(MODEL_FEATURES), MODEL_TARGET, &rows, target)?.with_units(units())
}

/// One dataset per (membrane type, membrane orientation) present.
pub fn split_by_config(records: &[EngineeredRecord]) -> Result<BTreeMap<(u8, u8), Dataset>> {
    let mut groups: BTreeMap<(u8, u8), Vec<EngineeredRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.config()).or_default().push(*r);
    }
    groups
        .into_iter()
        .map(|(k, rs)| Ok((k, records_to_dataset(&rs)?)))
        .collect()
}
