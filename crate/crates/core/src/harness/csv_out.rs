use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::sweep::AggregateResult;
use super::HarnessError;

/// Result columns following the swept-parameter columns.
pub const CSV_COLUMNS: &[&str] = &[
    "sim_collision_mean",
    "sim_collision_ci",
    "sim_per_mean",
    "sim_per_ci",
    "sim_delay_ms_mean",
    "sim_delay_ms_ci",
    "ana_pc",
    "ana_per",
    "ana_delay_ms",
    "ana_valid",
    "sim_per_interior_mean",
    "sim_per_interior_ci",
];

/// `Display` for `f64` prints the shortest decimal that parses back to the
/// same value.
fn num(x: f64) -> String {
    format!("{x}")
}

/// Writes one wide row per sweep point. Swept-parameter columns come from
/// the first row and are shared by all rows of a sweep.
pub fn emit_csv<W: Write>(results: &[AggregateResult], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let swept: Vec<&str> = results
        .first()
        .map(|r| r.point.iter().map(|(k, _)| k.as_str()).collect())
        .unwrap_or_default();
    w.write_record(swept.iter().copied().chain(CSV_COLUMNS.iter().copied()))?;
    for r in results {
        let mut row: Vec<String> = r.point.iter().map(|(_, v)| v.to_string()).collect();
        let s = &r.sim;
        row.extend([
            num(s.collision.mean),
            num(s.collision.ci),
            num(s.per.mean),
            num(s.per.ci),
            num(s.delay_ms.mean),
            num(s.delay_ms.ci),
        ]);
        match r.analytic.valid() {
            Some(a) => row.extend([num(a.p_c), num(a.per), num(a.delay_ms), "true".into()]),
            None => row.extend([String::new(), String::new(), String::new(), "false".into()]),
        }
        row.extend([num(s.per_interior.mean), num(s.per_interior.ci)]);
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Long format: one row per (point, location bin).
pub fn emit_locations_csv<W: Write>(results: &[AggregateResult], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["point_id", "bin_center_m", "per_mean", "per_ci"])?;
    for (id, r) in results.iter().enumerate() {
        for bin in &r.sim.per_by_location {
            w.write_record([
                id.to_string(),
                num(bin.center_m),
                num(bin.per.mean),
                num(bin.per.ci),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn create(path: &Path) -> Result<File, HarnessError> {
    File::create(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn with_path(path: &Path, e: HarnessError) -> HarnessError {
    match e {
        HarnessError::Csv(c) if c.is_io_error() => match c.into_kind() {
            csv::ErrorKind::Io(source) => HarnessError::Io {
                path: path.to_path_buf(),
                source,
            },
            _ => unreachable!("checked is_io_error"),
        },
        other => other,
    }
}

pub fn emit_csv_file(results: &[AggregateResult], path: &Path) -> Result<(), HarnessError> {
    emit_csv(results, create(path)?).map_err(|e| with_path(path, e))
}

pub fn emit_locations_file(results: &[AggregateResult], path: &Path) -> Result<(), HarnessError> {
    emit_locations_csv(results, create(path)?).map_err(|e| with_path(path, e))
}
