//! Flat-file formats: data CSVs, estimates, traces and ground truth.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{
    validate_dataset, Dataset, DayCdf, DoublyObs, Grid, MassFunction, Mode, SinglyObs,
};
use crate::scalar::Real;
use crate::solver::IterationTrace;

/// Reads a data CSV with header `e,s` (singly) or `e,sl,sr` (doubly),
/// without normalizing the records.
pub fn read_dataset_raw<R: Read>(input: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let mode = match header
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .as_slice()
    {
        ["e", "s"] => Mode::Single,
        ["e", "sl", "sr"] => Mode::Double,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unrecognized header {other:?}; expected `e,s` or `e,sl,sr`"
            )))
        }
    };
    let mut single = Vec::new();
    let mut double = Vec::new();
    for (index, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::InvalidRecord {
            index,
            reason: e.to_string(),
        })?;
        let field = |k: usize| -> Result<i64> {
            rec.get(k)
                .ok_or_else(|| Error::InvalidRecord {
                    index,
                    reason: format!("missing column {}", k + 1),
                })?
                .parse::<i64>()
                .map_err(|e| Error::InvalidRecord {
                    index,
                    reason: format!("column {}: {e}", k + 1),
                })
        };
        match mode {
            Mode::Single => single.push(SinglyObs {
                e: field(0)?,
                s: field(1)?,
            }),
            Mode::Double => double.push(DoublyObs {
                e: field(0)?,
                s_l: field(1)?,
                s_r: field(2)?,
            }),
        }
    }
    Ok(match mode {
        Mode::Single => Dataset::Single(single),
        Mode::Double => Dataset::Double(double),
    })
}

/// Reads and normalizes a data CSV.
pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    validate_dataset(read_dataset_raw(input)?)
}

pub fn read_dataset_path(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

pub fn write_dataset<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    match data {
        Dataset::Single(recs) => {
            wtr.write_record(["e", "s"])?;
            for r in recs {
                wtr.write_record([r.e.to_string(), r.s.to_string()])?;
            }
        }
        Dataset::Double(recs) => {
            wtr.write_record(["e", "sl", "sr"])?;
            for r in recs {
                wtr.write_record([r.e.to_string(), r.s_l.to_string(), r.s_r.to_string()])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Estimate CSV `day,mass,fbar` over the days `1..=grid.last()`; `mass` is
/// the day's increment `F̄(i) − F̄(i − 1)`.
pub fn write_estimate<T: Real, W: Write>(
    mass: &MassFunction<T>,
    cdf: &DayCdf<T>,
    grid: &Grid,
    mode: Mode,
    out: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["day", "mass", "fbar"])?;
    for day in 1..=grid.last() {
        wtr.write_record([
            day.to_string(),
            format!("{:.12}", mass.mass_at(day - mode.day_offset())),
            format!("{:.12}", cdf.at(day)),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads back an estimate CSV as `(day, mass, fbar)` rows.
pub fn read_estimate<R: Read>(input: R) -> Result<Vec<(i64, f64, f64)>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (index, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |reason: String| Error::InvalidRecord { index, reason };
        let day = rec
            .get(0)
            .unwrap_or("")
            .parse::<i64>()
            .map_err(|e| bad(e.to_string()))?;
        let mass = rec
            .get(1)
            .unwrap_or("")
            .parse::<f64>()
            .map_err(|e| bad(e.to_string()))?;
        let fbar = rec
            .get(2)
            .unwrap_or("")
            .parse::<f64>()
            .map_err(|e| bad(e.to_string()))?;
        out.push((day, mass, fbar));
    }
    Ok(out)
}

pub fn write_trace<W: Write>(trace: &IterationTrace, mut out: W) -> Result<()> {
    out.write_all(trace.to_table().as_bytes())?;
    out.flush()?;
    Ok(())
}

/// Ground-truth CSV `day,fbar`.
pub fn write_truth<W: Write>(table: &[(i64, f64)], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["day", "fbar"])?;
    for &(day, v) in table {
        wtr.write_record([day.to_string(), format!("{v:.12}")])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn with_file<F>(path: impl AsRef<Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}
