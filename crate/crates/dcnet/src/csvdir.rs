//! Directories of per-trial CSV files named `trial_<i>_<label>.csv`, each
//! holding one row per channel and one column per sample.

use std::path::{Path, PathBuf};

use dcnet_core::data::TrialSet;

use crate::error::{CliError, FormatError, Result};

/// `(index, label)` from a `trial_<i>_<label>.csv` file name.
pub fn parse_name(name: &str) -> Option<(usize, usize)> {
    let stem = name.strip_prefix("trial_")?.strip_suffix(".csv")?;
    let (i, label) = stem.split_once('_')?;
    Some((i.parse().ok()?, label.parse().ok()?))
}

fn read_trial(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::format(path, FormatError::Invalid(e.to_string())))?;
    let mut width = None;
    let mut rows = 0;
    let mut values = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::format(path, FormatError::Invalid(e.to_string())))?;
        let line = record.position().map_or(r + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                let message = format!("ragged row: {} values, earlier rows have {w}", record.len());
                return Err(CliError::format(path, FormatError::Line { line, message }));
            }
            _ => {}
        }
        for (c, field) in record.iter().enumerate() {
            let v: f32 = field.parse().map_err(|_| CliError::format(path, FormatError::Number { line, column: c + 1, text: field.to_string() }))?;
            if !v.is_finite() {
                let message = format!("column {}: non-finite value {field}", c + 1);
                return Err(CliError::format(path, FormatError::Line { line, message }));
            }
            values.push(v);
        }
        rows += 1;
    }
    match width {
        Some(w) => Ok((rows, w, values)),
        None => Err(CliError::format(path, FormatError::Invalid("no rows".into()))),
    }
}

/// Reads every `trial_<i>_<label>.csv` in `dir`, ordered by `i`. Other
/// files are ignored. The class count is one more than the largest label
/// unless `n_classes` is given.
pub fn from_csv(dir: &Path, n_classes: Option<usize>) -> Result<TrialSet> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files: Vec<(usize, usize, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let name = entry.file_name();
        if let Some((i, label)) = name.to_str().and_then(parse_name) {
            files.push((i, label, entry.path()));
        }
    }
    if files.is_empty() {
        return Err(CliError::format(dir, FormatError::Invalid("no trial_<i>_<label>.csv files".into())));
    }
    files.sort_by_key(|f| f.0);
    if let Some(w) = files.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(CliError::format(&w[1].2, FormatError::Invalid(format!("duplicate trial index {}", w[1].0))));
    }
    let mut dims = None;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (_, label, path) in &files {
        let (c, t, values) = read_trial(path)?;
        match dims {
            None => dims = Some((c, t)),
            Some(d) if d != (c, t) => {
                let msg = format!("trial is {c}x{t}, earlier trials are {}x{}", d.0, d.1);
                return Err(CliError::format(path, FormatError::Invalid(msg)));
            }
            _ => {}
        }
        data.extend(values);
        labels.push(*label);
    }
    let (c, t) = dims.expect("at least one file");
    let n = n_classes.unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    let mut set = TrialSet::new(c, t, n, data, labels).map_err(|e| CliError::format(dir, FormatError::Invalid(e.to_string())))?;
    set.metadata.insert("source".into(), dir.display().to_string());
    Ok(set)
}

/// Writes `trial_<i>_<label>.csv` for every trial, values in shortest
/// round-trip `f32` form.
pub fn to_csv(set: &TrialSet, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for i in 0..set.len() {
        let path = dir.join(format!("trial_{i}_{}.csv", set.labels()[i]));
        let mut writer = csv::Writer::from_path(&path).map_err(|e| CliError::format(&path, FormatError::Invalid(e.to_string())))?;
        for row in set.trial(i).chunks(set.samples()) {
            writer.write_record(row.iter().map(|v| v.to_string())).map_err(|e| CliError::format(&path, FormatError::Invalid(e.to_string())))?;
        }
        writer.flush().map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names() {
        assert_eq!(parse_name("trial_12_3.csv"), Some((12, 3)));
        assert_eq!(parse_name("trial_1.csv"), None);
        assert_eq!(parse_name("trial_a_1.csv"), None);
        assert_eq!(parse_name("notes.txt"), None);
    }

    fn write(dir: &Path, name: &str, text: &str) {
        std::fs::write(dir.join(name), text).unwrap();
    }

    #[test]
    fn reads_two_trials() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "trial_0_0.csv", "1,2,3,4\n5,6,7,8\n9,10,11,12\n");
        write(dir.path(), "trial_1_1.csv", "0,0,0,0\n1,1,1,1\n2,2,2,2\n");
        write(dir.path(), "README", "ignored");
        let set = from_csv(dir.path(), None).unwrap();
        assert_eq!((set.len(), set.channels(), set.samples(), set.n_classes()), (2, 3, 4, 2));
        assert_eq!(set.trial(0)[4], 5.0);
    }

    #[test]
    fn errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "trial_0_0.csv", "1,2,3,4\n5,6,7,8\n9,10,11,12\n");
        write(dir.path(), "trial_1_1.csv", "1,2,3,4,5\n5,6,7,8,9\n9,10,11,12,13\n");
        let err = from_csv(dir.path(), None).unwrap_err().to_string();
        assert!(err.contains("trial_1_1.csv"), "{err}");

        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "trial_0_0.csv", "1,2\n3,x\n");
        let err = from_csv(dir.path(), None).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        let msg = err.to_string();
        assert!(msg.contains("trial_0_0.csv") && msg.contains("line 2") && msg.contains("column 2"), "{msg}");
    }
}
