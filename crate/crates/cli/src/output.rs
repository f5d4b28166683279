use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use desceval::report::EvalReport;
use serde::Serialize;

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

pub fn write_csv<R: Serialize>(path: &Path, records: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Stamps the wall time and writes the report if a path was requested.
pub fn finish_report(mut report: EvalReport, started: Instant, path: Option<&Path>) -> Result<()> {
    report.wall_time_seconds = Some(started.elapsed().as_secs_f64());
    if let Some(p) = path {
        fs::write(p, report.to_json_string(true)).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

/// Non-blank lines of a text file, trimmed.
pub fn read_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}
