use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Corpus, ServiceRecord, Subnet};
use crate::error::{Error, Result};

/// Reads a newline-delimited JSON corpus file.
pub fn ingest(path: impl AsRef<Path>, universe: Subnet) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(file, universe).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses corpus records from any reader. Blank lines are skipped.
pub fn parse_corpus(reader: impl Read, universe: Subnet) -> Result<Corpus> {
    let mut records = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io("<input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ServiceRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        record.validate().map_err(|message| Error::Parse {
            line: i + 1,
            message,
        })?;
        records.push(record);
    }
    Corpus::new(universe, records)
}

/// Writes records one JSON object per line.
pub fn write_records_to<'a>(
    mut out: impl Write,
    records: impl IntoIterator<Item = &'a ServiceRecord>,
) -> std::io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_records<'a>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = &'a ServiceRecord>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_records_to(BufWriter::new(file), records).map_err(|e| Error::io(path, e))
}
