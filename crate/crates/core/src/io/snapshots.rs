//! Snapshot files.
//!
//! Binary layout (little endian): the magic `QBSNAP01`, then `u64` state
//! dimension `n`, `u64` snapshot count `k`, `u64` input dimension `m`, `f64`
//! uniform step `dt` (NaN for non-uniform grids), `k` times, the `n x k`
//! state block column-major, and the `m x k` input block column-major.
//!
//! CSV layout: header `t,x1..xn,u1..um`, one snapshot per line.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sim::SnapshotSet;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"QBSNAP01";

pub fn write_snapshots_binary<W: Write>(mut w: W, snap: &SnapshotSet) -> Result<()> {
    let (n, k) = snap.x.shape();
    let m = snap.u.as_ref().map_or(0, |u| u.nrows());
    w.write_all(SNAPSHOT_MAGIC)?;
    for v in [n as u64, k as u64, m as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&snap.uniform_step().unwrap_or(f64::NAN).to_le_bytes())?;
    let inputs = snap.u.iter().flat_map(|u| u.iter());
    for v in snap.t.iter().chain(snap.x.iter()).chain(inputs) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * count];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn read_snapshots_binary<R: Read>(mut r: R) -> Result<SnapshotSet> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Invalid("not a snapshot file (bad magic)".into()));
    }
    let n = read_u64(&mut r)? as usize;
    let k = read_u64(&mut r)? as usize;
    let m = read_u64(&mut r)? as usize;
    let _dt = read_f64s(&mut r, 1)?;
    let t = read_f64s(&mut r, k)?;
    let x = DMatrix::from_vec(n, k, read_f64s(&mut r, n * k)?);
    let u = (m > 0)
        .then(|| read_f64s(&mut r, m * k).map(|d| DMatrix::from_vec(m, k, d)))
        .transpose()?;
    SnapshotSet::new(t, x, u)
}

pub fn save_snapshots(path: impl AsRef<Path>, snap: &SnapshotSet) -> Result<()> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "csv") {
        std::fs::write(path, snapshots_to_csv(snap))?;
        return Ok(());
    }
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_snapshots_binary(file, snap)
}

pub fn load_snapshots(path: impl AsRef<Path>) -> Result<SnapshotSet> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "csv") {
        return snapshots_from_csv(&std::fs::read_to_string(path)?);
    }
    read_snapshots_binary(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn snapshots_to_csv(snap: &SnapshotSet) -> String {
    let (n, k) = snap.x.shape();
    let m = snap.u.as_ref().map_or(0, |u| u.nrows());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    let mut out = header.join(",");
    out.push('\n');
    for j in 0..k {
        let mut row = vec![format!("{:e}", snap.t[j])];
        row.extend(snap.x.column(j).iter().map(|v| format!("{v:e}")));
        if let Some(u) = &snap.u {
            row.extend(u.column(j).iter().map(|v| format!("{v:e}")));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn snapshots_from_csv(text: &str) -> Result<SnapshotSet> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(csv_error)?.clone();
    let n = headers.iter().filter(|h| h.starts_with('x')).count();
    let m = headers.iter().filter(|h| h.starts_with('u')).count();
    if headers.len() != 1 + n + m || headers.get(0) != Some("t") {
        return Err(Error::Invalid(
            "snapshot CSV header must be t,x1..xn,u1..um".into(),
        ));
    }
    let mut t = Vec::new();
    let mut cols: Vec<f64> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let values = record
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Invalid(format!("bad number {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        t.push(values[0]);
        cols.extend_from_slice(&values[1..]);
    }
    let k = t.len();
    let all = DMatrix::from_vec(n + m, k, cols);
    let x = all.rows(0, n).into_owned();
    let u = (m > 0).then(|| all.rows(n, m).into_owned());
    SnapshotSet::new(t, x, u)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Invalid(format!("csv: {e}"))
}

/// Plain numeric CSV, one matrix row per line, no header.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        rows.push(
            record
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Invalid(format!("bad number {s:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension("ragged matrix CSV".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}
