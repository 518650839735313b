//! Atomic file output and the fixed CSV layouts.

use std::fs;
use std::io::Write;
use std::path::Path;

use diffsteer::control::ErrorState;
use diffsteer::dynamics::PlantState;
use diffsteer::sysid::{CurvePoint, EpochRecord, Split};
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::CliError;

pub const TRAJECTORY_HEADER: [&str; 8] = ["t", "s_x", "s_y", "delta", "v", "psi", "psidot", "beta"];
pub const ERROR_HEADER: [&str; 5] = ["t", "e1", "e1_dot", "e2", "e2_dot"];
pub const LOSS_HEADER: [&str; 3] = ["epoch", "split", "loss"];

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Shortest round-trip form; non-finite values become empty fields.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn csv_bytes<H: AsRef<[u8]>>(header: &[H], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))
}

fn split_name(s: Split) -> String {
    match s {
        Split::Train => "train".into(),
        Split::Val => "val".into(),
    }
}

pub fn trajectory_csv(states: &[PlantState<f64>], dt: f64) -> Result<Vec<u8>, CliError> {
    csv_bytes(
        &TRAJECTORY_HEADER,
        states.iter().enumerate().map(|(i, s)| {
            let mut row = vec![num(i as f64 * dt)];
            row.extend(s.to_array().map(num));
            row
        }),
    )
}

pub fn errors_csv(errors: &[ErrorState<f64>], dt: f64) -> Result<Vec<u8>, CliError> {
    csv_bytes(
        &ERROR_HEADER,
        errors.iter().enumerate().map(|(i, e)| {
            let mut row = vec![num(i as f64 * dt)];
            row.extend(e.as_array().map(num));
            row
        }),
    )
}

/// One train row per epoch and a val row on validation epochs.
pub fn loss_csv(records: &[EpochRecord]) -> Result<Vec<u8>, CliError> {
    let mut rows = Vec::new();
    for r in records {
        rows.push(vec![r.epoch.to_string(), split_name(Split::Train), opt(r.train_loss)]);
        if r.val_loss.is_some() {
            rows.push(vec![r.epoch.to_string(), split_name(Split::Val), opt(r.val_loss)]);
        }
    }
    csv_bytes(&LOSS_HEADER, rows)
}

pub fn params_csv(names: &[String], records: &[EpochRecord]) -> Result<Vec<u8>, CliError> {
    let mut header = vec!["epoch".to_string()];
    header.extend(names.iter().cloned());
    csv_bytes(
        &header,
        records.iter().map(|r| {
            let mut row = vec![r.epoch.to_string()];
            row.extend(r.params.iter().copied().map(num));
            row
        }),
    )
}

pub fn curve_csv(points: &[CurvePoint]) -> Result<Vec<u8>, CliError> {
    csv_bytes(
        &LOSS_HEADER,
        points
            .iter()
            .map(|p| vec![p.epoch.to_string(), split_name(p.split), opt(p.loss)]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(epoch: usize, train: Option<f64>, val: Option<f64>) -> EpochRecord {
        EpochRecord {
            epoch,
            train_loss: train,
            val_loss: val,
            full_train_loss: None,
            params: vec![0.5, f64::NAN],
            grad_norm: None,
            evaluations: 0,
            non_finite: 0,
            wallclock: 0.0,
        }
    }

    #[test]
    fn missing_losses_are_empty_fields() {
        let bytes = loss_csv(&[record(1, None, None), record(2, Some(0.25), Some(1.5))]).unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "epoch,split,loss\n1,train,\n2,train,0.25\n2,val,1.5\n"
        );
    }

    #[test]
    fn params_header_lists_names() {
        let bytes = params_csv(&["c_af=c_ar".into(), "m".into()], &[record(1, None, None)]).unwrap();
        assert_eq!(String::from_utf8(bytes).unwrap(), "epoch,c_af=c_ar,m\n1,0.5,\n");
    }

    #[test]
    fn trajectory_rows() {
        let s = PlantState::<f64>::moving(1.0, 2.0, 0.5, 1.0);
        let bytes = trajectory_csv(&[s, s], 0.002).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,s_x,s_y,delta,v,psi,psidot,beta");
        assert_eq!(lines[2], "0.002,1,2,0,1,0.5,0,0");
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
