//! Two-column text files with a gnuplot-style `#` header.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::CliError;

pub fn write_columns(
    path: &Path,
    title: &str,
    columns: (&str, &str),
    rows: impl IntoIterator<Item = (f64, f64)>,
) -> Result<(), CliError> {
    let mut out = String::new();
    writeln!(out, "# {title}").unwrap();
    writeln!(out, "# {} {}", columns.0, columns.1).unwrap();
    for (x, y) in rows {
        writeln!(out, "{x} {y}").unwrap();
    }
    fs::write(path, out).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

/// Equal-width histogram of values in `[0, 1]`; rows are (bin center, count).
pub fn histogram(values: impl IntoIterator<Item = f64>, bins: usize) -> Vec<(f64, f64)> {
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = ((v * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(b, &c)| ((b as f64 + 0.5) / bins as f64, c as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_edges() {
        let h = histogram([0.0, 0.49, 0.5, 1.0], 2);
        assert_eq!(h, vec![(0.25, 2.0), (0.75, 2.0)]);
    }
}
