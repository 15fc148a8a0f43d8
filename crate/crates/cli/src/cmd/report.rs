use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;

use csigan::evaluation::{ReportRow, REPORT_CSV_HEADER};

use crate::config::Settings;
use crate::{create_dir, svg, write_file, CliError, Common};

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output directories of `eval` runs, each holding a `report.csv`.
    #[arg(required = true, value_name = "RUN_DIR")]
    runs: Vec<PathBuf>,
}

fn read_rows(dir: &PathBuf) -> Result<Vec<ReportRow>, String> {
    let path = dir.join("report.csv");
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let rows = ReportRow::parse_csv(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if rows.is_empty() {
        return Err(format!("{}: no metrics", path.display()));
    }
    Ok(rows)
}

pub fn run(a: ReportArgs, s: Settings) -> Result<(), CliError> {
    s.finish()?;
    let parsed: Vec<Result<Vec<ReportRow>, String>> = a.runs.par_iter().map(read_rows).collect();
    let mut rows = Vec::new();
    for r in parsed {
        match r {
            Ok(mut r) => rows.append(&mut r),
            Err(msg) => log::warn!("skipping run: {msg}"),
        }
    }
    if rows.is_empty() {
        return Err(CliError::Usage("no readable run directories".into()));
    }
    let out = &a.common.out;
    create_dir(out)?;
    let mut csv = format!("{REPORT_CSV_HEADER}\n");
    for r in &rows {
        r.csv_lines(&mut csv);
    }
    write_file(&out.join("report.csv"), csv)?;
    let table = ReportRow::table(&rows);
    write_file(&out.join("table.txt"), &table)?;
    write_file(&out.join("metrics.svg"), svg::metric_bars("Accuracy per run", &rows))?;
    print!("{table}");
    Ok(())
}
