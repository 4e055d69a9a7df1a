//! CSV tables and legacy VTK structured-points files.
//!
//! Floats are written with `{:e}`, which prints the shortest string that
//! parses back to the same `f64`, so files round-trip bit for bit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Shortest round-trip representation of `v`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// A CSV table held as strings.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Source file, for error messages.
    pub path: PathBuf,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: self.path.display().to_string(),
            line: 1,
            message: format!("missing column `{name}`"),
        })
    }

    /// Column `name` of row `row` as `f64`.
    pub fn f64_at(&self, row: usize, name: &str) -> Result<f64> {
        let c = self.column(name)?;
        let raw = &self.rows[row][c];
        raw.trim().parse::<f64>().map_err(|e| Error::Parse {
            path: self.path.display().to_string(),
            line: row + 2,
            message: format!("column `{name}`: {e}"),
        })
    }

    pub fn usize_at(&self, row: usize, name: &str) -> Result<usize> {
        let c = self.column(name)?;
        let raw = &self.rows[row][c];
        raw.trim().parse::<usize>().map_err(|e| Error::Parse {
            path: self.path.display().to_string(),
            line: row + 2,
            message: format!("column `{name}`: {e}"),
        })
    }

    pub fn str_at(&self, row: usize, name: &str) -> Result<&str> {
        let c = self.column(name)?;
        Ok(&self.rows[row][c])
    }

    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>> {
        (0..self.rows.len()).map(|r| self.f64_at(r, name)).collect()
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: e.to_string(),
    }
}

pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[&str], rows: &[Vec<S>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(r.iter().map(|s| s.as_ref())).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok(Table {
        header,
        rows,
        path: path.to_path_buf(),
    })
}

/// Cell data of a legacy VTK structured-points file.
pub enum CellData<'a> {
    Scalar(&'a str, &'a [f64]),
    Vector(&'a str, &'a [[f64; 3]]),
}

/// Writes an ASCII `STRUCTURED_POINTS` dataset with `dims` voxels per axis
/// and one value per voxel, voxels in `i + nx (j + ny k)` order.
pub fn write_vtk(path: &Path, title: &str, dims: [usize; 3], origin: [f64; 3], spacing: [f64; 3], data: &[CellData]) -> Result<()> {
    let cells = dims[0] * dims[1] * dims[2];
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str(title.lines().next().unwrap_or(""));
    out.push_str("\nASCII\nDATASET STRUCTURED_POINTS\n");
    out.push_str(&format!("DIMENSIONS {} {} {}\n", dims[0] + 1, dims[1] + 1, dims[2] + 1));
    out.push_str(&format!(
        "ORIGIN {} {} {}\n",
        fmt_f64(origin[0]),
        fmt_f64(origin[1]),
        fmt_f64(origin[2])
    ));
    out.push_str(&format!(
        "SPACING {} {} {}\n",
        fmt_f64(spacing[0]),
        fmt_f64(spacing[1]),
        fmt_f64(spacing[2])
    ));
    out.push_str(&format!("CELL_DATA {cells}\n"));
    for d in data {
        match d {
            CellData::Scalar(name, v) => {
                check_len(name, v.len(), cells)?;
                out.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
                for x in v.iter() {
                    out.push_str(&fmt_f64(*x));
                    out.push('\n');
                }
            }
            CellData::Vector(name, v) => {
                check_len(name, v.len(), cells)?;
                out.push_str(&format!("VECTORS {name} double\n"));
                for x in v.iter() {
                    out.push_str(&format!("{} {} {}\n", fmt_f64(x[0]), fmt_f64(x[1]), fmt_f64(x[2])));
                }
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn check_len(name: &str, got: usize, cells: usize) -> Result<()> {
    if got != cells {
        return Err(Error::GridMismatch(format!("VTK array `{name}` has {got} values for {cells} cells")));
    }
    Ok(())
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, &["a", "b"], &[vec![fmt_f64(0.1), "x".to_string()], vec![fmt_f64(2.0), "y".into()]]).unwrap();
        let t = read_csv(&p).unwrap();
        assert_eq!(t.f64_column("a").unwrap(), vec![0.1, 2.0]);
        assert_eq!(t.str_at(1, "b").unwrap(), "y");
        match t.f64_at(0, "b") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(t.column("c").is_err());
    }

    #[test]
    fn vtk_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.vtk");
        write_vtk(
            &p,
            "test",
            [2, 1, 1],
            [0.0; 3],
            [0.5; 3],
            &[CellData::Scalar("p", &[1.0, 2.0]), CellData::Vector("u", &[[1.0, 0.0, 0.0]; 2])],
        )
        .unwrap();
        let s = std::fs::read_to_string(&p).unwrap();
        assert!(s.contains("DIMENSIONS 3 2 2"));
        assert!(s.contains("CELL_DATA 2"));
        assert!(s.contains("VECTORS u double\n1e0 0e0 0e0\n"));
        assert!(write_vtk(&p, "t", [2, 2, 1], [0.0; 3], [1.0; 3], &[CellData::Scalar("p", &[1.0])]).is_err());
    }
}
