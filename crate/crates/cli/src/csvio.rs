//! Delimited-file input and output of trial cases.

use std::io::{Read, Write};
use std::path::Path;

use aidecide_core::model::{Dataset, RawTable, SCORE_COLUMNS};

use crate::error::CliError;

pub fn read_raw(path: &Path) -> Result<RawTable, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_raw(file).map_err(|e| CliError::io(path, e))
}

/// Header plus string cells; row lengths are checked later against the
/// header so that ragged rows get a row number.
pub fn parse_raw(reader: impl Read) -> Result<RawTable, csv::Error> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok(RawTable { header, rows })
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_to(std::io::BufWriter::new(file), ds).map_err(|e| CliError::io(path, e))
}

pub fn write_to(writer: impl Write, ds: &Dataset) -> Result<(), csv::Error> {
    let schema = ds.schema();
    let has_score: Vec<bool> = (0..3).map(|k| ds.records().iter().any(|r| r.scores[k].is_some())).collect();
    let mut header: Vec<String> = ["id", "z", "d", "a", "y"].iter().map(|s| s.to_string()).collect();
    header.extend(schema.covariates.iter().map(|c| c.column()));
    header.extend((0..3).filter(|&k| has_score[k]).map(|k| SCORE_COLUMNS[k].to_string()));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&header)?;
    for r in ds.records() {
        let mut row = vec![r.id.clone(), r.z.to_string(), r.d.to_string(), r.a.to_string(), r.y.to_string()];
        row.extend(schema.covariates.iter().zip(&r.covariates).map(|(c, &l)| c.levels[l as usize].clone()));
        for k in (0..3).filter(|&k| has_score[k]) {
            row.push(r.scores[k].map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use aidecide_core::model::{validate_dataset, DatasetSchema};

    #[test]
    fn round_trip() {
        let text = "id,z,d,a,y,x_sex,score_fta\n7,0,0,1,1,f,3\n8,1,1,1,0,m,6\n9,1,0,0,0,m,1\n";
        let raw = parse_raw(text.as_bytes()).unwrap();
        let ds = validate_dataset(&raw, &DatasetSchema::infer(&raw).unwrap()).unwrap();
        let mut out = Vec::new();
        write_to(&mut out, &ds).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn ragged_rows_survive_parsing() {
        let raw = parse_raw("z,d,a,y\n0,0,0\n".as_bytes()).unwrap();
        assert_eq!(raw.rows[0].len(), 3);
    }
}
