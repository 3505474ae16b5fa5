//! CSV artifacts. Numbers are written with 17 significant digits so a
//! read-back reproduces every double exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::dynamics::{SnapshotSet, Trajectory};
use crate::error::{Error, Result};
use crate::measures::AtomicMeasure;

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn row<W: Write>(w: &mut W, vals: impl IntoIterator<Item = f64>) -> Result<()> {
    let line: Vec<String> = vals.into_iter().map(fmt).collect();
    writeln!(w, "{}", line.join(","))?;
    Ok(())
}

/// Header `x1,…,xn,y1,…,yn`, one pair per row.
pub fn write_snapshots(path: &Path, s: &SnapshotSet) -> Result<()> {
    let n = s.dim();
    let mut w = create(path)?;
    let head: Vec<String> = (1..=n).map(|i| format!("x{i}")).chain((1..=n).map(|i| format!("y{i}"))).collect();
    writeln!(w, "{}", head.join(","))?;
    for c in 0..s.len() {
        row(&mut w, s.x.column(c).iter().chain(s.y.column(c).iter()).copied())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshots(path: &Path) -> Result<SnapshotSet> {
    let rows = read_numeric(path)?;
    let (header, data) = rows;
    if header.len() % 2 != 0 || header.is_empty() {
        return Err(Error::Parse(format!("{}: expected x1..xn,y1..yn columns", path.display())));
    }
    let n = header.len() / 2;
    let m = data.len();
    let x = DMatrix::from_fn(n, m, |i, c| data[c][i]);
    let y = DMatrix::from_fn(n, m, |i, c| data[c][n + i]);
    Ok(SnapshotSet { x, y, h: None, seed: 0 })
}

/// Header `w,x1,…,xn`.
pub fn write_particles(path: &Path, mu: &AtomicMeasure) -> Result<()> {
    let mut w = create(path)?;
    let head: Vec<String> = std::iter::once("w".to_string()).chain((1..=mu.dim()).map(|i| format!("x{i}"))).collect();
    writeln!(w, "{}", head.join(","))?;
    for (a, p) in mu.weights().iter().zip(mu.positions()) {
        row(&mut w, std::iter::once(*a).chain(p.iter().copied()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_particles(path: &Path) -> Result<AtomicMeasure> {
    let (header, data) = read_numeric(path)?;
    if header.first().map(String::as_str) != Some("w") {
        return Err(Error::Parse(format!("{}: first column must be 'w'", path.display())));
    }
    let dim = header.len() - 1;
    let weights = data.iter().map(|r| r[0]).collect();
    let positions = data.iter().flat_map(|r| r[1..].iter().copied()).collect();
    AtomicMeasure::new(dim, weights, positions)
}

/// Header `t,x1,…,xn`.
pub fn write_trajectory(path: &Path, t: &Trajectory) -> Result<()> {
    let n = t.states.first().map_or(0, Vec::len);
    let mut w = create(path)?;
    let head: Vec<String> = std::iter::once("t".to_string()).chain((1..=n).map(|i| format!("x{i}"))).collect();
    writeln!(w, "{}", head.join(","))?;
    for (ti, s) in t.times.iter().zip(&t.states) {
        row(&mut w, std::iter::once(*ti).chain(s.iter().copied()))?;
    }
    w.flush()?;
    Ok(())
}

/// Plain matrix, no header.
pub fn write_matrix(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    let mut w = create(path)?;
    for r in 0..a.nrows() {
        row(&mut w, a.row(r).iter().copied())?;
    }
    w.flush()?;
    Ok(())
}

/// `t,coord,truth,full_edmd,sparse_edmd`.
pub fn write_comparison(path: &Path, rows: &[(f64, usize, f64, f64, f64)]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "t,coord,truth,full_edmd,sparse_edmd")?;
    for &(t, j, a, b, c) in rows {
        writeln!(w, "{},{j},{},{},{}", fmt(t), fmt(a), fmt(b), fmt(c))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_numeric(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut data = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("{}: row {}: {e}", path.display(), k + 2)))?;
        if vals.len() != header.len() {
            return Err(Error::Parse(format!("{}: row {} has {} fields", path.display(), k + 2, vals.len())));
        }
        data.push(vals);
    }
    Ok((header, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn particles_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mu.csv");
        let mu = AtomicMeasure::new(2, vec![0.1, 0.2, 0.7], vec![0.1, 1.0 / 3.0, -2.5e-300, 7.0, 1e10, -0.0]).unwrap();
        write_particles(&p, &mu).unwrap();
        assert_eq!(read_particles(&p).unwrap(), mu);
    }

    #[test]
    fn snapshots_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = SnapshotSet {
            x: DMatrix::from_row_slice(2, 2, &[0.1, std::f64::consts::PI, 2.0, -1.0 / 7.0]),
            y: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            h: None,
            seed: 0,
        };
        write_snapshots(&p, &s).unwrap();
        let r = read_snapshots(&p).unwrap();
        assert_eq!((r.x, r.y), (s.x, s.y));
    }
}
