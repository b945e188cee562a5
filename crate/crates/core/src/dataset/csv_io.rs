use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{FeatureSchema, Sample, SampleEncoder};

use super::USER_FEATURE;

/// Ingestion aborts when more than this fraction of rows is malformed.
pub const MAX_REJECT_FRACTION: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct CsvData {
    pub schema: FeatureSchema,
    pub samples: Vec<Sample>,
    /// `(line, reason)` for every skipped row.
    pub rejected: Vec<(u64, String)>,
    /// Values outside a given schema's vocabulary, read as MISSING.
    pub unknown_values: u64,
}

/// Reads `label,user_id,<features...>`. With `schema`, columns must match it
/// and vocabularies stay fixed; without, vocabularies are built in
/// first-seen order and a column named `user` marks the user feature.
pub fn read_csv(path: &Path, schema: Option<&FeatureSchema>) -> Result<CsvData> {
    let file = File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_csv_from(BufReader::new(file), schema)
}

pub fn read_csv_from<R: Read>(reader: R, schema: Option<&FeatureSchema>) -> Result<CsvData> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.len() < 3 || header[0] != "label" || header[1] != "user_id" {
        return Err(Error::Record {
            line: 1,
            reason: "header must start with 'label,user_id' followed by feature columns".into(),
        });
    }
    let names = &header[2..];
    let mut encoder = match schema {
        Some(s) => {
            let expected: Vec<&str> = s.names().collect();
            if expected != names {
                return Err(Error::SchemaMismatch {
                    expected: expected.join(","),
                    found: names.join(","),
                });
            }
            SampleEncoder::frozen(s)
        }
        None => SampleEncoder::growing(names, names.iter().position(|n| n == USER_FEATURE))?,
    };

    let mut samples = Vec::new();
    let mut rejected = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut rows = 0u64;
    loop {
        let line = rdr.position().line();
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                rows += 1;
                let line = record.position().map_or(line, |p| p.line());
                let fields: Vec<&str> = record.iter().collect();
                match encoder.encode_sample(&fields, line) {
                    Ok(s) => samples.push(s),
                    Err(Error::Record { line, reason }) => {
                        log::warn!("line {line}: {reason}");
                        rejected.push((line, reason));
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(e) => {
                rows += 1;
                let line = e.position().map_or(line, |p| p.line());
                rejected.push((line, e.to_string()));
            }
        }
    }
    if rows == 0 {
        return Err(Error::Data("CSV has a header but no rows".into()));
    }
    if rejected.len() as f64 > MAX_REJECT_FRACTION * rows as f64 {
        let (line, reason) = rejected[0].clone();
        return Err(Error::Record {
            line,
            reason: format!(
                "{reason} ({} of {rows} rows rejected, limit {}%)",
                rejected.len(),
                MAX_REJECT_FRACTION * 100.0
            ),
        });
    }
    Ok(CsvData {
        schema: match schema {
            Some(s) => s.clone(),
            None => encoder.schema()?,
        },
        samples,
        rejected,
        unknown_values: encoder.unknown_values(),
    })
}

pub fn write_csv(path: &Path, schema: &FeatureSchema, samples: &[Sample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv_to(&mut w, schema, samples)?;
    w.flush()?;
    Ok(())
}

/// Writes raw vocabulary values; MISSING becomes an empty cell.
pub fn write_csv_to<W: Write>(writer: W, schema: &FeatureSchema, samples: &[Sample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["label", "user_id"];
    header.extend(schema.names());
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for s in samples {
        schema.validate(s)?;
        row.clear();
        row.push(if s.label { "1" } else { "0" }.to_string());
        row.push(s.user_id.to_string());
        for (f, &tok) in s.features.iter().enumerate() {
            row.push(schema.feature(f).vocabulary[tok as usize].clone());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
