//! CSV ingestion: map named columns onto a `CaseTable`, one-hot expanding
//! categorical controls with a dropped base level.

use std::collections::BTreeSet;
use std::path::Path;

use glate::data::CaseTable;

use crate::errors::{CliError, CliResult};

pub struct ColumnSpec {
    pub outcome: String,
    pub treatment: String,
    pub judge: String,
    pub case_id: Option<String>,
    pub controls: Vec<String>,
}

/// Load the file and report (table, expanded control names).
pub fn load_cases(path: &Path, spec: &ColumnSpec) -> CliResult<(CaseTable, Vec<String>)> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let col = |name: &str| -> CliResult<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::validation(format!("missing column {name:?}")))
    };
    let outcome_i = col(&spec.outcome)?;
    let treatment_i = col(&spec.treatment)?;
    let judge_i = col(&spec.judge)?;
    let case_i = spec.case_id.as_deref().map(col).transpose()?;
    let control_i: Vec<usize> = spec.controls.iter().map(|c| col(c)).collect::<CliResult<_>>()?;

    let mut table = CaseTable::default();
    // Raw control cells; numeric vs categorical decided after the full scan.
    let mut raw_controls: Vec<Vec<String>> = vec![Vec::new(); control_i.len()];
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |i: usize| -> CliResult<&str> {
            record
                .get(i)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| {
                    CliError::validation(format!("row {}: missing value in {:?}", row_no + 2, headers[i]))
                })
        };
        let y: f64 = cell(outcome_i)?
            .parse()
            .map_err(|_| CliError::validation(format!("row {}: non-numeric outcome", row_no + 2)))?;
        let d_raw = cell(treatment_i)?;
        let d: f64 = match d_raw {
            "0" => 0.0,
            "1" => 1.0,
            other => {
                return Err(CliError::validation(format!(
                    "row {}: non-binary treatment {other:?}",
                    row_no + 2
                )))
            }
        };
        table.outcome.push(y);
        table.treatment.push(d);
        table.judge_ids.push(cell(judge_i)?.to_string());
        table.case_ids.push(match case_i {
            Some(i) => cell(i)?.to_string(),
            None => format!("row{}", row_no + 1),
        });
        for (k, &i) in control_i.iter().enumerate() {
            raw_controls[k].push(cell(i)?.to_string());
        }
    }
    if table.is_empty() {
        return Err(CliError::validation(format!("{}: no data rows", path.display())));
    }

    let mut control_names = Vec::new();
    for (name, raw) in spec.controls.iter().zip(raw_controls) {
        let numeric: Option<Vec<f64>> = raw.iter().map(|v| v.parse().ok()).collect();
        match numeric {
            Some(values) => {
                control_names.push(name.clone());
                table.controls.push((name.clone(), values));
            }
            None => {
                // Categorical: one dummy per level except the first (base).
                let levels: BTreeSet<&String> = raw.iter().collect();
                for level in levels.iter().skip(1) {
                    let dummy_name = format!("{name}={level}");
                    let values: Vec<f64> = raw
                        .iter()
                        .map(|v| if v == *level { 1.0 } else { 0.0 })
                        .collect();
                    control_names.push(dummy_name.clone());
                    table.controls.push((dummy_name, values));
                }
            }
        }
    }
    table.validate()?;
    Ok((table, control_names))
}
