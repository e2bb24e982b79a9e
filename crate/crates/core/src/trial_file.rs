//! Trial data files: CSV with the exact header `id,stage1,response,stage2,outcome`.
//!
//! Parsing is all-or-nothing and every diagnostic carries the 1-based line
//! number of the offending row.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::inference::TrialRecord;

pub const HEADER: [&str; 5] = ["id", "stage1", "response", "stage2", "outcome"];

fn line_err(line: u64, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("line {line}: {msg}"))
}

/// Parses trial records from any reader.
pub fn read_trial_csv<R: Read>(reader: R) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows = rdr.records();
    let header = match rows.next() {
        None => return Err(Error::Parse("missing header".into())),
        Some(h) => h.map_err(|e| Error::Parse(e.to_string()))?,
    };
    if header.iter().ne(HEADER) {
        return Err(line_err(1, format!("header must be exactly `{}`", HEADER.join(","))));
    }
    let mut out = Vec::new();
    for row in rows {
        let row = row.map_err(|e| Error::Parse(e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() == 1 && row[0].trim().is_empty() {
            continue;
        }
        if row.len() != HEADER.len() {
            return Err(line_err(line, format!("expected {} fields, found {}", HEADER.len(), row.len())));
        }
        let field = |i: usize| row[i].trim();
        let stage1 = field(1).parse().map_err(|e| line_err(line, e))?;
        let response = match field(2) {
            "0" => false,
            "1" => true,
            other => return Err(line_err(line, format!("response must be 0 or 1, got {other:?}"))),
        };
        let stage2 = field(3).parse().map_err(|e| line_err(line, e))?;
        let outcome: f64 = field(4)
            .parse()
            .map_err(|_| line_err(line, format!("outcome {:?} is not a number", field(4))))?;
        let rec = TrialRecord {
            id: field(0).to_string(),
            stage1,
            response,
            stage2,
            outcome,
        };
        rec.check().map_err(|reason| line_err(line, reason))?;
        out.push(rec);
    }
    Ok(out)
}

/// Parses a trial file from disk.
pub fn parse_trial_csv(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    read_trial_csv(std::io::BufReader::new(file))
}

/// Writes records with LF line endings and shortest round-trip decimals.
pub fn write_trial_csv<W: Write>(records: &[TrialRecord], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let io = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(HEADER).map_err(io)?;
    for r in records {
        w.write_record([
            r.id.as_str(),
            r.stage1.label(),
            if r.response { "1" } else { "0" },
            r.stage2.label(),
            &r.outcome.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}
