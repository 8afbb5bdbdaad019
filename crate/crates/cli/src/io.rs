//! CSV and JSON files with a provenance header.

use std::path::Path;

use infodesign::estimation::format_float;
use infodesign::model::InputSignal;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn header_line(digest: &str, seed: u64) -> String {
    format!("# config_digest={digest} seed={seed}\n")
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

/// CSV document: header comment, column row, one line per row.
pub fn csv(digest: &str, seed: u64, columns: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header_line(digest, seed);
    out += &columns.join(",");
    out.push('\n');
    for r in rows {
        out += &r.join(",");
        out.push('\n');
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

pub fn indexed_columns(prefix: &str, n: usize) -> Vec<String> {
    if n == 1 {
        vec![prefix.to_string()]
    } else {
        (0..n).map(|i| format!("{prefix}_{i}")).collect()
    }
}

/// Rows `k, v_k[0..width)` for a flat series.
pub fn series_rows(values: &[f64], width: usize) -> Vec<Vec<String>> {
    values
        .chunks(width)
        .enumerate()
        .map(|(k, c)| std::iter::once(k.to_string()).chain(c.iter().map(|v| format_float(*v))).collect())
        .collect()
}

/// Numeric table of `k, v[0..width)` rows; `#` lines are skipped, the first
/// other line is the column header.
pub fn read_series(path: &Path) -> CliResult<(usize, Vec<f64>)> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: name.clone(), source })?;
    let err = |line: usize, msg: String| CliError::Csv { path: name.clone(), line, msg };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim_start().starts_with('#') && !l.trim().is_empty());
    let Some((hline, header)) = lines.next() else {
        return Err(err(1, "missing column header".into()));
    };
    let width = header.split(',').count();
    if width < 2 || header.split(',').next().map(str::trim) != Some("k") {
        return Err(err(hline + 1, format!("expected header `k,...`, got `{header}`")));
    }
    let mut values = Vec::new();
    let mut expected_k = 0usize;
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(err(i + 1, format!("expected {width} fields, found {}", fields.len())));
        }
        let k: usize = fields[0].parse().map_err(|_| err(i + 1, format!("bad index `{}`", fields[0])))?;
        if k != expected_k {
            return Err(err(i + 1, format!("expected index {expected_k}, found {k}")));
        }
        expected_k += 1;
        for f in &fields[1..] {
            let v: f64 = f.parse().map_err(|_| err(i + 1, format!("bad number `{f}`")))?;
            if !v.is_finite() {
                return Err(err(i + 1, format!("non-finite value `{f}`")));
            }
            values.push(v);
        }
    }
    if expected_k == 0 {
        return Err(err(hline + 1, "no data rows".into()));
    }
    Ok((width - 1, values))
}

pub fn read_signal(path: &Path) -> CliResult<InputSignal> {
    let (width, values) = read_series(path)?;
    Ok(InputSignal::new(width, values)?)
}
