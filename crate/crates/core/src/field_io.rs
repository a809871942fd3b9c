//! Text serialization of scalar fields.
//!
//! Layout (one header line per field, then one value per line):
//!
//! ```text
//! cma-field v1
//! name = <identifier>
//! n = <complex dimension>
//! m = <points per real axis>
//! <value 0>
//! ...
//! <value m^(2n) - 1>
//! ```
//!
//! Values are row-major over the real axes (x^1, y^1, x^2, y^2), last axis
//! fastest, printed with 17 significant digits so rewriting a parsed field
//! reproduces the bytes exactly.

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{ScalarField, TorusGrid};

pub const FIELD_MAGIC: &str = "cma-field v1";

/// Fixed float formatting shared by every text artifact.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_field(w: &mut impl Write, name: &str, field: &ScalarField) -> std::io::Result<()> {
    let grid = field.grid();
    writeln!(w, "{FIELD_MAGIC}")?;
    writeln!(w, "name = {name}")?;
    writeln!(w, "n = {}", grid.complex_dim())?;
    writeln!(w, "m = {}", grid.points_per_axis())?;
    for &v in field.values() {
        writeln!(w, "{}", format_float(v))?;
    }
    Ok(())
}

pub fn read_field(r: impl BufRead) -> Result<(String, ScalarField)> {
    let mut lines = r.lines();
    let mut next_line = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()
            .map_err(|e| Error::InvalidConfig(format!("field read failed at {what}: {e}")))?
            .ok_or_else(|| Error::InvalidConfig(format!("field truncated before {what}")))
    };
    let magic = next_line("magic")?;
    if magic.trim() != FIELD_MAGIC {
        return Err(Error::InvalidConfig(format!("not a field file (header {magic:?})")));
    }
    let parse_kv = |line: &str, key: &str| -> Result<String> {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("malformed header line {line:?}")))?;
        if k.trim() != key {
            return Err(Error::InvalidConfig(format!(
                "expected header key {key}, found {}",
                k.trim()
            )));
        }
        Ok(v.trim().to_string())
    };
    let name = parse_kv(&next_line("name")?, "name")?;
    let n: usize = parse_kv(&next_line("n")?, "n")?
        .parse()
        .map_err(|e| Error::InvalidConfig(format!("bad dimension: {e}")))?;
    let m: usize = parse_kv(&next_line("m")?, "m")?
        .parse()
        .map_err(|e| Error::InvalidConfig(format!("bad resolution: {e}")))?;
    let grid: Arc<TorusGrid> = TorusGrid::new(n, m)?;
    let mut values = Vec::with_capacity(grid.num_points());
    for _ in 0..grid.num_points() {
        let line = next_line("value")?;
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|e| Error::InvalidConfig(format!("bad value {line:?}: {e}")))?;
        values.push(v);
    }
    Ok((name, ScalarField::from_values(&grid, values)?))
}
