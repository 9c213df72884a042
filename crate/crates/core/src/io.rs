//! Output formats: CSV tables, and raw snapshots in the `HWKB1` layout
//! (64-byte ASCII header `HWKB1 dim M L count`, then little-endian `f64`
//! pairs `(re, im)` in row-major order, one field after another).

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid;

pub const SNAPSHOT_MAGIC: &str = "HWKB1";
pub const HEADER_LEN: usize = 64;

/// 17 significant digits; parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Cell {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Cell {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Cell {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Cell {
        Cell::Text(x.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> CsvTable {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::Structural(format!(
                "row of {} cells for {} columns",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// LF line endings, no quoting (cells never contain commas).
    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Float(x) => format_float(*x),
                    Cell::Int(i) => i.to_string(),
                    Cell::Text(s) => s.replace([',', '\n'], " "),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn encode_snapshots(fields: &[Field]) -> Result<Vec<u8>> {
    let first = fields
        .first()
        .ok_or_else(|| Error::Format("no fields to encode".into()))?;
    let grid = first.grid();
    for f in fields {
        grid.check_same(f.grid())?;
    }
    let mut header = String::new();
    write!(
        header,
        "{SNAPSHOT_MAGIC} {} {} {} {}",
        grid.dim(),
        grid.points(),
        grid.box_length(),
        fields.len()
    )
    .expect("string write");
    if header.len() > HEADER_LEN - 1 {
        return Err(Error::Format("header does not fit in 64 bytes".into()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + fields.len() * grid.len() * 16);
    out.extend_from_slice(header.as_bytes());
    out.resize(HEADER_LEN - 1, b' ');
    out.push(b'\n');
    for f in fields {
        for z in f.values() {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_snapshots(bytes: &[u8]) -> Result<Vec<Field>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("shorter than the 64-byte header".into()));
    }
    let header = std::str::from_utf8(&bytes[..HEADER_LEN])
        .map_err(|_| Error::Format("header is not ASCII".into()))?;
    let tokens: Vec<&str> = header.split_ascii_whitespace().collect();
    if tokens.len() != 5 || tokens[0] != SNAPSHOT_MAGIC {
        return Err(Error::Format(format!("bad header {:?}", header.trim_end())));
    }
    let bad = |what: &str| Error::Format(format!("bad {what} in header"));
    let dim: usize = tokens[1].parse().map_err(|_| bad("dim"))?;
    let points: usize = tokens[2].parse().map_err(|_| bad("M"))?;
    let length: f64 = tokens[3].parse().map_err(|_| bad("L"))?;
    let count: usize = tokens[4].parse().map_err(|_| bad("count"))?;
    let grid = Grid::new(dim, points, length)?;
    let n = grid.len();
    let expected = HEADER_LEN + count * n * 16;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let word = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"));
    (0..count)
        .map(|k| {
            let base = HEADER_LEN + k * n * 16;
            let values = (0..n)
                .map(|i| Complex64::new(word(base + 16 * i), word(base + 16 * i + 8)))
                .collect();
            Field::from_values(&grid, values)
        })
        .collect()
}

pub fn write_snapshots(path: &Path, fields: &[Field]) -> Result<()> {
    let bytes = encode_snapshots(fields)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_snapshots(path: &Path) -> Result<Vec<Field>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshots(&bytes)
}
