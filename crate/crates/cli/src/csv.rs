//! Plain CSV output with 17 significant digits, and observation files.

use std::fmt::Write as _;
use std::path::Path;

use crate::CliError;

/// `d.dddddddddddddddde±x`: 17 significant digits, enough to round-trip f64.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

/// In-memory CSV document.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Csv {
    text: String,
    columns: usize,
}

/// One CSV cell.
pub enum Cell<'a> {
    Real(f64),
    Int(u64),
    Text(&'a str),
    Empty,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[Cell<'_>]) {
        debug_assert_eq!(cells.len(), self.columns);
        let mut line = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            match c {
                Cell::Real(x) => line.push_str(&real(*x)),
                Cell::Int(n) => {
                    let _ = write!(line, "{n}");
                }
                Cell::Text(s) => line.push_str(s),
                Cell::Empty => {}
            }
        }
        self.text.push_str(&line);
        self.text.push('\n');
    }

    pub fn real_row(&mut self, xs: &[f64]) {
        let cells: Vec<Cell> = xs.iter().map(|x| Cell::Real(*x)).collect();
        self.row(&cells);
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, &self.text).map_err(|e| CliError::io(path, e))
    }
}

/// Numbers separated by commas, whitespace or newlines. A first line that is
/// not numeric is taken as a header and skipped.
pub fn parse_observation(text: &str) -> Result<Vec<f64>, CliError> {
    let mut lines = text.lines().peekable();
    if let Some(first) = lines.peek() {
        let numeric = first
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .all(|t| t.parse::<f64>().is_ok());
        if !numeric {
            lines.next();
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = tok
                .parse()
                .map_err(|_| CliError::Data(format!("observation line {}: '{tok}' is not a number", i + 1)))?;
            if !v.is_finite() {
                return Err(CliError::Data(format!("observation line {}: non-finite value", i + 1)));
            }
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(CliError::Data("observation file holds no numbers".into()));
    }
    Ok(out)
}

pub fn read_observation(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_observation(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            let s = real(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
            let digits = s.split('e').next().unwrap().chars().filter(char::is_ascii_digit).count();
            assert_eq!(digits, 17);
        }
    }

    #[test]
    fn csv_layout() {
        let mut c = Csv::new(&["a", "b", "c"]);
        c.row(&[Cell::Int(3), Cell::Text("x"), Cell::Empty]);
        c.real_row(&[0.5, 1.0, 2.0]);
        let lines: Vec<&str> = c.as_str().lines().collect();
        assert_eq!(lines[0], "a,b,c");
        assert_eq!(lines[1], "3,x,");
        assert_eq!(lines[2], "5.0000000000000000e-1,1.0000000000000000e0,2.0000000000000000e0");
    }

    #[test]
    fn observation_formats() {
        assert_eq!(parse_observation("1,2,3\n4 5\n").unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(parse_observation("y\n0.5\n1.5\n").unwrap(), vec![0.5, 1.5]);
        assert!(parse_observation("y\n").is_err());
        assert!(parse_observation("1,abc\n2,x").is_err());
    }
}
