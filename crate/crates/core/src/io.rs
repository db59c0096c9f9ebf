//! Small text-format helpers shared by the exporters and the CLI.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

/// Reads a two-column numeric CSV (`delay_ns,counts` or `delay_ns,value`).
/// Lines starting with `#` and a non-numeric header line are skipped.
pub fn read_two_column_csv<R: BufRead>(reader: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let (Some(a), Some(b)) = (cols.next(), cols.next()) else {
            return Err(Error::Parse(format!(
                "line {}: expected two columns",
                lineno + 1
            )));
        };
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(x), Ok(y)) => {
                xs.push(x);
                ys.push(y);
            }
            _ if xs.is_empty() && a.parse::<f64>().is_err() => continue,
            _ => {
                return Err(Error::Parse(format!(
                    "line {}: non-numeric value in `{line}`",
                    lineno + 1
                )))
            }
        }
    }
    Ok((xs, ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, -2.5e-300, 1.0 / 3.0, 6.02e23, 0.0, 123456.789] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn reads_histogram_with_header_and_comments() {
        let text = "# run 7\ndelay_ns,counts\n-1,0\n0,12\n1,30.5\n";
        let (x, y) = read_two_column_csv(text.as_bytes()).unwrap();
        assert_eq!(x, vec![-1.0, 0.0, 1.0]);
        assert_eq!(y, vec![0.0, 12.0, 30.5]);
        assert!(read_two_column_csv("delay_ns,counts\n1,abc\n".as_bytes()).is_err());
    }
}
