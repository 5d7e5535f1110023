use std::io::{BufWriter, Read, Write};

use serde::{Deserialize, Serialize};

use super::{ExperimentError, TrialRecord};

pub const CSV_HEADER: &str = "target,k,latency_ms,timed_out,bytes_sent_total,bytes_received_total,timestamp";

#[derive(Serialize, Deserialize)]
struct CsvRow {
    target: String,
    k: usize,
    latency_ms: Option<f64>,
    timed_out: bool,
    bytes_sent_total: u64,
    bytes_received_total: u64,
    timestamp: String,
}

fn records_err(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Records(e.to_string())
}

/// Writes the summary columns; per-server detail goes in the JSON sidecar.
pub fn write_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow {
            target: r.target.clone(),
            k: r.k,
            latency_ms: r.latency_ms,
            timed_out: r.timed_out,
            bytes_sent_total: r.bytes_sent_total,
            bytes_received_total: r.bytes_received_total,
            timestamp: r.timestamp.clone(),
        })
        .map_err(records_err)?;
    }
    if records.is_empty() {
        w.write_record(CSV_HEADER.split(',')).map_err(records_err)?;
    }
    w.flush().map_err(records_err)
}

/// Reads trial records from CSV, e.g. page-load measurements taken by other
/// tools. Only the summary columns are known afterwards.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<TrialRecord>, ExperimentError> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader
        .headers()
        .map_err(records_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != CSV_HEADER {
        return Err(ExperimentError::Records(format!(
            "unexpected header {:?}, expected {CSV_HEADER:?}",
            header.join(",")
        )));
    }
    let mut records = Vec::new();
    for (line, row) in reader.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(records_err)?;
        let record = TrialRecord {
            target: row.target,
            k: row.k,
            latency_ms: row.latency_ms,
            timed_out: row.timed_out,
            bytes_sent_total: row.bytes_sent_total,
            bytes_received_total: row.bytes_received_total,
            timestamp: row.timestamp,
            baseline_bytes: None,
            winner_index: None,
            per_server: Vec::new(),
        };
        record
            .validate()
            .map_err(|e| ExperimentError::Records(format!("row {}: {e}", line + 2)))?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_json<W: Write>(records: &[TrialRecord], out: W) -> Result<(), ExperimentError> {
    let mut out = BufWriter::new(out);
    serde_json::to_writer_pretty(&mut out, records).map_err(records_err)?;
    out.flush().map_err(records_err)
}

pub fn read_json<R: Read>(mut input: R) -> Result<Vec<TrialRecord>, ExperimentError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(records_err)?;
    let records: Vec<TrialRecord> = serde_json::from_slice(&bytes).map_err(records_err)?;
    for r in &records {
        r.validate().map_err(ExperimentError::Records)?;
    }
    Ok(records)
}
