//! CSV rows and plot-ready aggregate tables.

use std::path::Path;

use crate::error::{HarnessError, Result};
use crate::experiment::MetricsTable;
use crate::stats::Summary;

const ROW_COLUMNS: &[&str] = &[
    "algorithm",
    "topology",
    "seed",
    "n",
    "edges",
    "status",
    "valid",
    "t_min",
    "avg_stretch",
    "dominators",
    "channel_conflicts",
    "convergence_time",
];

const PLOT_COLUMNS: &[&str] = &[
    "algorithm",
    "topology",
    "n",
    "runs",
    "validity_rate",
    "t_min_mean",
    "t_min_ci95",
    "stretch_mean",
    "stretch_ci95",
    "conflicts_mean",
    "conflicts_ci95",
    "convergence_mean",
    "convergence_ci95",
];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn mean_ci(s: Option<Summary>) -> [String; 2] {
    [opt(s.map(|s| s.mean)), opt(s.and_then(|s| s.half_width))]
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_rows<W: std::io::Write>(table: &MetricsTable, w: &mut csv::Writer<W>) -> csv::Result<()> {
    let mut header: Vec<&str> = ROW_COLUMNS.to_vec();
    if table.include_wall_time {
        header.push("wall_time");
    }
    w.write_record(&header)?;
    for r in &table.rows {
        let mut rec = vec![
            r.algorithm.to_string(),
            r.topology.clone(),
            r.seed.to_string(),
            r.n.to_string(),
            r.edges.to_string(),
            r.status.to_string(),
            r.valid.to_string(),
            opt(r.t_min),
            opt(r.avg_stretch),
            r.dominators.to_string(),
            r.conflicts.to_string(),
            opt(r.convergence_time),
        ];
        if table.include_wall_time {
            rec.push(r.wall_time.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_plot<W: std::io::Write>(table: &MetricsTable, w: &mut csv::Writer<W>) -> csv::Result<()> {
    w.write_record(PLOT_COLUMNS)?;
    for a in &table.aggregates {
        let mut rec = vec![
            a.algorithm.to_string(),
            a.topology.clone(),
            a.n.to_string(),
            a.runs.to_string(),
            a.validity_rate.to_string(),
        ];
        rec.extend(mean_ci(a.t_min));
        rec.extend(mean_ci(a.avg_stretch));
        rec.extend(mean_ci(a.conflicts));
        rec.extend(mean_ci(a.convergence_time));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn to_string(
    table: &MetricsTable,
    f: fn(&MetricsTable, &mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
) -> Result<String> {
    if table.rows.is_empty() {
        return Err(HarnessError::EmptyTable);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    f(table, &mut w).map_err(csv_err(Path::new("<memory>")))?;
    let bytes = w.into_inner().expect("writing to memory cannot fail");
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_csv_string(table: &MetricsTable) -> Result<String> {
    to_string(table, write_rows)
}

/// Aggregates with means and 95% half-widths, one line per algorithm and
/// topology, ready for plotting against `n`.
pub fn plot_data_string(table: &MetricsTable) -> Result<String> {
    to_string(table, write_plot)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn emit_csv(table: &MetricsTable, path: &Path) -> Result<()> {
    write_file(path, &rows_csv_string(table)?)
}

pub fn emit_plot_data(table: &MetricsTable, path: &Path) -> Result<()> {
    write_file(path, &plot_data_string(table)?)
}
