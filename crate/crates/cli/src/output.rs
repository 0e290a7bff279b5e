//! Text encodings shared by the subcommands: round-trip real formatting, the
//! survival-table CSV, and gnuplot data files.

use std::io::{self, Write};

use ranked_core::analytic::SurvivalTable;
use ranked_core::ModelError;

/// Shortest decimal that parses back to exactly `x` (at most 17 significant
/// digits). Very large or very small magnitudes use exponent notation.
pub fn fmt_real(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub const SURVIVAL_HEADER: &str = "lambda,l,d,survival";

pub fn emit_survival_csv<W: Write + ?Sized>(table: &SurvivalTable, sink: &mut W) -> io::Result<()> {
    writeln!(sink, "{SURVIVAL_HEADER}")?;
    let lambda = fmt_real(table.lambda());
    for (l, (&d, &s)) in table.d().iter().zip(table.survival()).enumerate() {
        writeln!(sink, "{lambda},{l},{},{}", fmt_real(d), fmt_real(s))?;
    }
    Ok(())
}

#[derive(Debug)]
pub enum CsvError {
    Header(String),
    Row { line: usize, reason: String },
    Table(ModelError),
}

impl std::fmt::Display for CsvError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CsvError::Header(h) => write!(f, "unexpected header `{h}`, want `{SURVIVAL_HEADER}`"),
            CsvError::Row { line, reason } => write!(f, "line {line}: {reason}"),
            CsvError::Table(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CsvError {}

/// Inverse of [`emit_survival_csv`].
pub fn parse_survival_csv(text: &str) -> Result<SurvivalTable, CsvError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header.trim() != SURVIVAL_HEADER {
        return Err(CsvError::Header(header.to_string()));
    }
    let mut lambda = None;
    let (mut d, mut survival) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = i + 2;
        let bad = |reason: String| CsvError::Row { line: row, reason };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", fields.len())));
        }
        let real = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
        let lam = real(fields[0])?;
        let l: usize = fields[1]
            .trim()
            .parse()
            .map_err(|e| bad(format!("`{}`: {e}", fields[1])))?;
        if l != d.len() {
            return Err(bad(format!("rows out of order: expected l = {}, got {l}", d.len())));
        }
        match lambda {
            None => lambda = Some(lam),
            Some(prev) if prev.to_bits() != lam.to_bits() => {
                return Err(bad(format!("lambda changed from {prev} to {lam}")));
            }
            _ => {}
        }
        d.push(real(fields[2])?);
        survival.push(real(fields[3])?);
    }
    let lambda = lambda.ok_or_else(|| CsvError::Row {
        line: 2,
        reason: "no data rows".into(),
    })?;
    SurvivalTable::from_parts(lambda, d, survival).map_err(CsvError::Table)
}

/// Whitespace-separated columns with a `#` comment header, as read by
/// gnuplot's `plot 'file' using 1:2`.
pub fn write_plot_data<W: Write + ?Sized>(
    sink: &mut W,
    columns: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> io::Result<()> {
    writeln!(sink, "# {}", columns.join(" "))?;
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt_real).collect();
        writeln!(sink, "{}", cells.join(" "))?;
    }
    Ok(())
}
