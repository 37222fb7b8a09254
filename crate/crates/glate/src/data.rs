//! Case-level estimation input and its numeric view.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::regress::{self, DesignMatrix};

/// Case-level records: one row per court case.
#[derive(Debug, Clone, Default)]
pub struct CaseTable {
    pub case_ids: Vec<String>,
    pub judge_ids: Vec<String>,
    pub outcome: Vec<f64>,
    /// Binary treatment, stored as 0.0 / 1.0.
    pub treatment: Vec<f64>,
    /// Named real control columns (categoricals pre-expanded by the loader).
    pub controls: Vec<(String, Vec<f64>)>,
}

impl CaseTable {
    pub fn len(&self) -> usize {
        self.outcome.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcome.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.judge_ids.len() != n || self.treatment.len() != n || self.case_ids.len() != n {
            return Err(Error::DimensionMismatch("case table column lengths".into()));
        }
        if self.outcome.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("outcome".into()));
        }
        if self.treatment.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Invalid("treatment must be 0/1".into()));
        }
        for (name, col) in &self.controls {
            if col.len() != n {
                return Err(Error::DimensionMismatch(format!("control {name} length")));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("control {name}")));
            }
        }
        let mut judges: Vec<&String> = self.judge_ids.iter().collect();
        judges.sort();
        judges.dedup();
        if judges.len() < 2 {
            return Err(Error::Invalid("need at least two distinct judges".into()));
        }
        Ok(())
    }
}

/// Numeric view of a [`CaseTable`] used by the estimators.
///
/// When controls are present, `y`, `d`, and the judge dummies are all
/// residualized on the controls once, over the full sample; estimators then
/// subset rows. Without controls the judge dummies stay implicit 0/1
/// indicators, reconstructed from `judge_of_case`.
#[derive(Debug, Clone)]
pub struct EstimationData {
    /// Unique judge labels, sorted.
    pub judge_ids: Vec<String>,
    /// Per case, index into `judge_ids`.
    pub judge_of_case: Vec<usize>,
    pub y: DVector<f64>,
    pub d: DVector<f64>,
    /// Residualized judge-dummy columns (n x J); `None` when no controls.
    pub z_resid: Option<DMatrix<f64>>,
}

impl EstimationData {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n_judges(&self) -> usize {
        self.judge_ids.len()
    }

    pub fn partialled(&self) -> bool {
        self.z_resid.is_some()
    }

    pub fn judge_index(&self, id: &str) -> Option<usize> {
        self.judge_ids.binary_search_by(|j| j.as_str().cmp(id)).ok()
    }

    pub fn cases_per_judge(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_judges()];
        for &j in &self.judge_of_case {
            counts[j] += 1;
        }
        counts
    }

    /// Build from a validated case table, partialling out the listed control
    /// columns (plus an intercept) when any are given.
    pub fn from_case_table(table: &CaseTable, control_names: &[String]) -> Result<Self> {
        table.validate()?;
        let n = table.len();
        let mut judge_ids: Vec<String> = table.judge_ids.clone();
        judge_ids.sort();
        judge_ids.dedup();
        let judge_of_case: Vec<usize> = table
            .judge_ids
            .iter()
            .map(|id| judge_ids.binary_search(id).expect("judge present"))
            .collect();
        let y = DVector::from_column_slice(&table.outcome);
        let d = DVector::from_column_slice(&table.treatment);
        if control_names.is_empty() {
            return Ok(Self { judge_ids, judge_of_case, y, d, z_resid: None });
        }
        let mut cols: Vec<(&str, &[f64])> = Vec::new();
        for name in control_names {
            let col = table
                .controls
                .iter()
                .find(|(c, _)| c == name)
                .ok_or_else(|| Error::Invalid(format!("unknown control column {name}")))?;
            cols.push((name.as_str(), &col.1));
        }
        let controls = DesignMatrix::intercept(n).hstack(&DesignMatrix::from_columns(&cols)?)?;
        // Residualize y, d, and every judge dummy on the controls.
        let mut targets = vec![y, d];
        for j in 0..judge_ids.len() {
            let dummy: Vec<f64> = judge_of_case
                .iter()
                .map(|&ji| if ji == j { 1.0 } else { 0.0 })
                .collect();
            targets.push(DVector::from_column_slice(&dummy));
        }
        let mut resid = regress::partial_out(&targets, &controls)?;
        let y_t = resid.remove(0);
        let d_t = resid.remove(0);
        let mut z = DMatrix::zeros(n, judge_ids.len());
        for (j, col) in resid.iter().enumerate() {
            z.column_mut(j).copy_from(col);
        }
        Ok(Self { judge_ids, judge_of_case, y: y_t, d: d_t, z_resid: Some(z) })
    }

    /// Row indices of cases heard by any judge in `judges` (judge indices).
    pub fn rows_for_judges(&self, judges: &[usize]) -> Vec<usize> {
        let mut member = vec![false; self.n_judges()];
        for &j in judges {
            member[j] = true;
        }
        (0..self.n())
            .filter(|&i| member[self.judge_of_case[i]])
            .collect()
    }

    /// Instrument column over the given rows for a judge set: the membership
    /// indicator without controls, or the sum of residualized dummy columns.
    pub fn instrument_column(&self, rows: &[usize], judges: &[usize]) -> Vec<f64> {
        let mut member = vec![false; self.n_judges()];
        for &j in judges {
            member[j] = true;
        }
        match &self.z_resid {
            None => rows
                .iter()
                .map(|&i| if member[self.judge_of_case[i]] { 1.0 } else { 0.0 })
                .collect(),
            Some(z) => rows
                .iter()
                .map(|&i| {
                    judges.iter().map(|&j| z[(i, j)]).sum::<f64>()
                })
                .collect(),
        }
    }

    /// One instrument column per judge in `judges`, over the given rows.
    pub fn judge_columns(&self, rows: &[usize], judges: &[usize]) -> Vec<Vec<f64>> {
        judges
            .iter()
            .map(|&j| match &self.z_resid {
                None => rows
                    .iter()
                    .map(|&i| if self.judge_of_case[i] == j { 1.0 } else { 0.0 })
                    .collect(),
                Some(z) => rows.iter().map(|&i| z[(i, j)]).collect(),
            })
            .collect()
    }

    pub fn gather(v: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
        DVector::from_iterator(rows.len(), rows.iter().map(|&i| v[i]))
    }
}
