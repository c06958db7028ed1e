//! Plain CSV emission with 17-significant-digit floats.

/// Formats `v` with 17 significant digits in scientific notation, which
/// round-trips every finite `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Builds a CSV document from a header and pre-formatted rows.
pub fn to_csv<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: AsRef<[String]>,
{
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let row = row.as_ref();
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(cell);
        }
        out.push('\n');
    }
    out
}

/// Parses a CSV produced by [`to_csv`]: returns the header and numeric-or-text cells.
pub fn parse(text: &str) -> Option<(Vec<String>, Vec<Vec<String>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next()?.split(',').map(|s| s.trim().to_string()).collect();
    let rows = lines.map(|l| l.split(',').map(|s| s.trim().to_string()).collect()).collect();
    Some((header, rows))
}

pub(crate) fn row(cells: &[f64]) -> Vec<String> {
    cells.iter().map(|&v| fmt_f64(v)).collect()
}
