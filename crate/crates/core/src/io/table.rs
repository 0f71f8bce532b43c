//! CSV emitters and readers. Files are UTF-8 with LF line endings and a
//! header row; numbers use the shortest representation that round-trips.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::analysis::{Histogram, RateCurve};
use crate::error::{Error, Result};
use crate::sim::TruthRecord;

pub fn writer(path: impl AsRef<Path>) -> Result<csv::Writer<BufWriter<File>>> {
    let f = BufWriter::with_capacity(1 << 20, File::create(path)?);
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(f))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new().has_headers(true).from_path(path)?)
}

/// Writes `header` then every row.
pub fn write_rows<I, R>(path: impl AsRef<Path>, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn num(x: f64) -> String {
    x.to_string()
}

pub const HISTOGRAM_HEADER: [&str; 3] = ["bin_lo_ps", "bin_hi_ps", "count"];

pub fn write_histogram(path: impl AsRef<Path>, h: &Histogram) -> Result<()> {
    let e = &h.bin_edges;
    write_rows(
        path,
        &HISTOGRAM_HEADER,
        h.counts.iter().enumerate().map(|(i, c)| [num(e[i]), num(e[i + 1]), num(*c)]),
    )
}

pub fn read_histogram(path: impl AsRef<Path>) -> Result<Histogram> {
    let path = path.as_ref();
    let mut r = reader(path)?;
    check_header(&mut r, &HISTOGRAM_HEADER, path)?;
    let mut edges = Vec::new();
    let mut counts = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let lo = field(&rec, 0, i, path)?;
        let hi = field(&rec, 1, i, path)?;
        match edges.last() {
            None => edges.push(lo),
            Some(&last) if last == lo => {}
            Some(_) => return Err(Error::Format(format!("{}: row {} is not contiguous with the previous bin", path.display(), i + 1))),
        }
        edges.push(hi);
        counts.push(field(&rec, 2, i, path)?);
    }
    if counts.is_empty() {
        return Err(Error::Format(format!("{}: histogram has no bins", path.display())));
    }
    Histogram::with_counts(edges, counts)
}

pub const RATE_HEADER: [&str; 3] = ["incident_rate_per_s", "measured_rate_cps", "relative_efficiency"];

pub fn write_rate_curve(path: impl AsRef<Path>, c: &RateCurve) -> Result<()> {
    write_rows(
        path,
        &RATE_HEADER,
        c.points.iter().map(|p| [num(p.incident_rate), num(p.measured_rate), num(p.relative_efficiency)]),
    )
}

pub const TRUTH_HEADER: [&str; 6] =
    ["photon_time_ps", "detection_time_ps", "channel", "dt_prev_ps", "dt_prev2_ps", "pulse_amplitude_mv"];

pub fn write_truth(path: impl AsRef<Path>, truth: &[TruthRecord]) -> Result<()> {
    write_rows(
        path,
        &TRUTH_HEADER,
        truth.iter().map(|r| {
            [
                num(r.photon_time),
                num(r.detection_time),
                r.channel.to_string(),
                num(r.dt_prev),
                num(r.dt_prev2),
                num(r.pulse_amplitude),
            ]
        }),
    )
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<Vec<TruthRecord>> {
    let path = path.as_ref();
    let mut r = reader(path)?;
    check_header(&mut r, &TRUTH_HEADER, path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let ch = field(&rec, 2, i, path)?;
        if !(ch >= 0.0 && ch <= u16::MAX as f64 && ch.fract() == 0.0) {
            return Err(Error::Format(format!("{}: row {}: bad channel", path.display(), i + 1)));
        }
        out.push(TruthRecord {
            photon_time: field(&rec, 0, i, path)?,
            detection_time: field(&rec, 1, i, path)?,
            channel: ch as u16,
            dt_prev: field(&rec, 3, i, path)?,
            dt_prev2: field(&rec, 4, i, path)?,
            pulse_amplitude: field(&rec, 5, i, path)?,
        });
    }
    Ok(out)
}

/// Two-column `(a, b)` numeric table with the given header.
pub fn read_pairs(path: impl AsRef<Path>, header: &[&str; 2]) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let mut r = reader(path)?;
    check_header(&mut r, header, path)?;
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            Ok((field(&rec, 0, i, path)?, field(&rec, 1, i, path)?))
        })
        .collect()
}

fn check_header(r: &mut csv::Reader<File>, want: &[&str], path: &Path) -> Result<()> {
    let got = r.headers()?;
    if got.iter().ne(want.iter().copied()) {
        return Err(Error::Format(format!(
            "{}: expected columns {}, found {}",
            path.display(),
            want.join(","),
            got.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn field(rec: &csv::StringRecord, col: usize, row: usize, path: &Path) -> Result<f64> {
    rec.get(col)
        .and_then(|s| s.trim().parse::<f64>().ok())
        .ok_or_else(|| Error::Format(format!("{}: row {} column {}: not a number", path.display(), row + 1, col + 1)))
}

/// Writes a JSON value pretty-printed with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
