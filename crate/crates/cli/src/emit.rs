//! Output files: the versioned time-series CSV and the JSON report.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lamb_lab::monitors::DiagnosticsRecord;

use crate::runner::Outcome;
use crate::CliError;

pub const CSV_NAME: &str = "diagnostics.csv";
pub const REPORT_NAME: &str = "report.json";

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(path.to_path_buf(), e)
}

/// Writes the series as CSV: a `# schema: …` line, the header, one row per sample.
pub fn write_csv<W: Write>(w: W, records: &[DiagnosticsRecord], n_pieces: usize, n_borders: usize) -> std::io::Result<()> {
    let mut w = w;
    writeln!(w, "# schema: {}", DiagnosticsRecord::SCHEMA)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(DiagnosticsRecord::header(n_pieces, n_borders))?;
    for r in records {
        out.write_record(r.row().iter().map(|v| v.to_string()))?;
    }
    out.flush()
}

/// Writes `diagnostics.csv` (particle scenarios only) and `report.json` into `dir`.
pub fn emit(outcome: &Outcome, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    if outcome.geometry.is_some() {
        let path = dir.join(CSV_NAME);
        let (p, b) = outcome.layout();
        let f = File::create(&path).map_err(io(&path))?;
        write_csv(BufWriter::new(f), &outcome.records, p, b).map_err(io(&path))?;
        written.push(path);
    }
    let path = dir.join(REPORT_NAME);
    let mut text = serde_json::to_string_pretty(&outcome.report).map_err(|e| CliError::Parse(e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(io(&path))?;
    written.push(path);
    Ok(written)
}
