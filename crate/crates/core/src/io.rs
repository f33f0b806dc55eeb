//! Self-describing text matrix files.
//!
//! ```text
//! gfra-matrix v1
//! name = y
//! rows = 73
//! cols = 4
//! layout = symbol-major
//! rng = ChaCha8
//! seeds = pool:1 realization:2 noise:3
//! data
//! <re> <im>        (one entry per line, row-major)
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces every double exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::system_model::SeedRecord;

pub const MATRIX_MAGIC: &str = "gfra-matrix v1";
pub const LAYOUT_SYMBOL_MAJOR: &str = "symbol-major";

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub name: String,
    pub layout: String,
    pub seeds: SeedRecord,
    pub matrix: CMatrix,
}

fn fmt_seed(s: Option<u64>) -> String {
    s.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn parse_seed(s: &str) -> Result<Option<u64>> {
    if s == "-" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Format {
        what: "matrix header",
        reason: format!("bad seed `{s}`"),
    })
}

impl MatrixFile {
    pub fn to_text(&self) -> String {
        let m = &self.matrix;
        let mut out = String::with_capacity(64 + m.len() * 48);
        let _ = writeln!(out, "{MATRIX_MAGIC}");
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "rows = {}", m.nrows());
        let _ = writeln!(out, "cols = {}", m.ncols());
        let _ = writeln!(out, "layout = {}", self.layout);
        let _ = writeln!(out, "rng = {}", self.seeds.algorithm);
        let _ = writeln!(
            out,
            "seeds = pool:{} realization:{} noise:{}",
            fmt_seed(self.seeds.pool),
            fmt_seed(self.seeds.realization),
            fmt_seed(self.seeds.noise)
        );
        out.push_str("data\n");
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                let _ = writeln!(out, "{:?} {:?}", z.re, z.im);
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::Format { what: "matrix file", reason };
        let mut lines = text.lines();
        if lines.next() != Some(MATRIX_MAGIC) {
            return Err(bad("missing `gfra-matrix v1` header".into()));
        }
        let (mut name, mut layout, mut rng) = (String::new(), String::new(), String::new());
        let (mut rows, mut cols) = (None, None);
        let mut seeds = (None, None, None);
        for line in lines.by_ref() {
            if line == "data" {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| bad(format!("bad header line `{line}`")))?;
            match k {
                "name" => name = v.to_string(),
                "rows" => rows = v.parse::<usize>().ok(),
                "cols" => cols = v.parse::<usize>().ok(),
                "layout" => layout = v.to_string(),
                "rng" => rng = v.to_string(),
                "seeds" => {
                    for part in v.split_whitespace() {
                        match part.split_once(':') {
                            Some(("pool", s)) => seeds.0 = parse_seed(s)?,
                            Some(("realization", s)) => seeds.1 = parse_seed(s)?,
                            Some(("noise", s)) => seeds.2 = parse_seed(s)?,
                            _ => return Err(bad(format!("bad seed entry `{part}`"))),
                        }
                    }
                }
                _ => return Err(bad(format!("unknown header key `{k}`"))),
            }
        }
        let (rows, cols) = rows.zip(cols).ok_or_else(|| bad("missing rows/cols".into()))?;
        let mut values = Vec::with_capacity(rows * cols);
        for line in lines {
            let mut it = line.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(re)), Some(Ok(im)), None) => values.push(Complex64::new(re, im)),
                _ => return Err(bad(format!("bad data line `{line}`"))),
            }
        }
        if values.len() != rows * cols {
            return Err(bad(format!("expected {} entries, found {}", rows * cols, values.len())));
        }
        Ok(MatrixFile {
            name,
            layout,
            seeds: SeedRecord {
                algorithm: rng,
                pool: seeds.0,
                realization: seeds.1,
                noise: seeds.2,
            },
            matrix: CMatrix::from_row_slice(rows, cols, &values),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io("writing matrix", path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io("reading matrix", path, e))?;
        Self::parse(&text)
    }
}
