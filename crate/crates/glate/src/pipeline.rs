//! Application-style utilities: the leave-one-out stringency instrument and
//! the covariate balance check.

use nalgebra::DVector;

use crate::data::CaseTable;
use crate::error::{Error, Result};
use crate::regress::{self, DesignMatrix, RestrictionTest, SeKind};

/// Leave-current-case-out judge stringency: for each case, the treatment mean
/// over the same judge's other cases. Equals (n_j * p_hat_j - D_i) / (n_j - 1).
pub fn stringency_instrument(table: &CaseTable) -> Result<Vec<f64>> {
    table.validate()?;
    use std::collections::BTreeMap;
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (j, &d) in table.judge_ids.iter().zip(&table.treatment) {
        let e = sums.entry(j).or_insert((0.0, 0));
        e.0 += d;
        e.1 += 1;
    }
    if let Some((judge, _)) = sums.iter().find(|(_, &(_, n))| n < 2) {
        return Err(Error::SingletonJudge(judge.to_string()));
    }
    Ok(table
        .judge_ids
        .iter()
        .zip(&table.treatment)
        .map(|(j, &d)| {
            let (sum, n) = sums[j.as_str()];
            (sum - d) / (n - 1) as f64
        })
        .collect())
}

/// Joint F test that all control coefficients are zero in the regression of
/// the stringency instrument on an intercept and the named controls.
pub fn balance_check(table: &CaseTable, control_names: &[String]) -> Result<RestrictionTest> {
    if control_names.is_empty() {
        return Err(Error::Invalid("balance check needs at least one control".into()));
    }
    let stringency = DVector::from_column_slice(&stringency_instrument(table)?);
    let mut cols: Vec<(&str, &[f64])> = Vec::new();
    for name in control_names {
        let col = table
            .controls
            .iter()
            .find(|(c, _)| c == name)
            .ok_or_else(|| Error::Invalid(format!("unknown control column {name}")))?;
        cols.push((name.as_str(), &col.1));
    }
    let design = DesignMatrix::intercept(table.len()).hstack(&DesignMatrix::from_columns(&cols)?)?;
    let fit = regress::ols(&stringency, &design, SeKind::Homoskedastic)?;
    // Exclude the intercept from the restriction.
    let q = control_names.len();
    let mut r_mat = nalgebra::DMatrix::zeros(q, design.cols());
    for i in 0..q {
        r_mat[(i, i + 1)] = 1.0;
    }
    let r_vec = DVector::zeros(q);
    regress::f_test_restrictions(&fit, &design, &r_mat, &r_vec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table(judges: &[&str], d: &[f64], controls: Vec<(String, Vec<f64>)>) -> CaseTable {
        CaseTable {
            case_ids: (0..d.len()).map(|i| format!("c{i}")).collect(),
            judge_ids: judges.iter().map(|s| s.to_string()).collect(),
            outcome: vec![0.0; d.len()],
            treatment: d.to_vec(),
            controls,
        }
    }

    #[test]
    fn two_case_judge_swaps_values() {
        let t = table(&["a", "a", "b", "b"], &[1.0, 0.0, 1.0, 1.0], vec![]);
        let s = stringency_instrument(&t).unwrap();
        assert_eq!(s, vec![0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn constant_treatment_gives_constant_stringency() {
        let t = table(&["a", "a", "a", "b", "b"], &[1.0, 1.0, 1.0, 0.0, 1.0], vec![]);
        let s = stringency_instrument(&t).unwrap();
        assert_eq!(&s[..3], &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn leave_one_out_identity() {
        let t = table(
            &["a", "a", "a", "a", "b", "b", "b"],
            &[1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0],
            vec![],
        );
        let s = stringency_instrument(&t).unwrap();
        // (n_j p_hat - D_i) / (n_j - 1) row by row.
        let p_a = 0.75;
        let p_b = 1.0 / 3.0;
        for i in 0..4 {
            assert_relative_eq!(s[i], (4.0 * p_a - t.treatment[i]) / 3.0, epsilon = 1e-12);
        }
        for i in 4..7 {
            assert_relative_eq!(s[i], (3.0 * p_b - t.treatment[i]) / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn singleton_judge_rejected() {
        let t = table(&["a", "a", "b"], &[1.0, 0.0, 1.0], vec![]);
        assert!(matches!(stringency_instrument(&t), Err(Error::SingletonJudge(_))));
    }

    #[test]
    fn perfect_predictor_rejects_balance() {
        let t0 = table(
            &["a", "a", "a", "b", "b", "b", "c", "c", "c"],
            &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0],
            vec![],
        );
        let s = stringency_instrument(&t0).unwrap();
        let mut t = t0.clone();
        t.controls = vec![("leak".into(), s)];
        let test = balance_check(&t, &["leak".to_string()]).unwrap();
        assert!(test.p_value < 1e-8, "p = {}", test.p_value);
    }

    #[test]
    fn empty_control_set_is_an_error() {
        let t = table(&["a", "a", "b", "b"], &[1.0, 0.0, 1.0, 1.0], vec![]);
        assert!(balance_check(&t, &[]).is_err());
    }
}
