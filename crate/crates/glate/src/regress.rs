//! Dense linear-model primitives: OLS, residualization, linear-restriction
//! F tests, 2SLS with first-stage and overidentification diagnostics.
//!
//! All fits go through a column-pivoted QR factorization; a column is flagged
//! collinear when its pivot magnitude falls below `RANK_TOL` times the largest
//! pivot. Dummy designs routinely produce exact collinearity, so the check is
//! relative rather than absolute.

use nalgebra::{DMatrix, DVector};

use crate::dist;
use crate::error::{Error, Result};

/// Relative pivot threshold for rank detection.
pub const RANK_TOL: f64 = 1e-10;

/// Standard-error flavor for coefficient covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeKind {
    Homoskedastic,
    /// HC1 sandwich (degrees-of-freedom corrected heteroskedasticity-robust).
    #[default]
    HcRobust,
}

/// A labelled dense regressor matrix.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    pub column_labels: Vec<String>,
}

impl DesignMatrix {
    pub fn new(values: DMatrix<f64>, column_labels: Vec<String>) -> Result<Self> {
        if values.ncols() != column_labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns but {} labels",
                values.ncols(),
                column_labels.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix".into()));
        }
        Ok(Self { values, column_labels })
    }

    pub fn from_columns(cols: &[(&str, &[f64])]) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::Invalid("empty column set".into()));
        }
        let n = cols[0].1.len();
        let mut m = DMatrix::zeros(n, cols.len());
        let mut labels = Vec::with_capacity(cols.len());
        for (j, (name, col)) in cols.iter().enumerate() {
            if col.len() != n {
                return Err(Error::DimensionMismatch(format!("column {name} length")));
            }
            m.column_mut(j).copy_from_slice(col);
            labels.push((*name).to_string());
        }
        Self::new(m, labels)
    }

    /// A single all-ones column.
    pub fn intercept(n: usize) -> Self {
        Self {
            values: DMatrix::repeat(n, 1, 1.0),
            column_labels: vec!["const".into()],
        }
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hstack(&self, other: &DesignMatrix) -> Result<DesignMatrix> {
        if self.rows() != other.rows() {
            return Err(Error::DimensionMismatch("hstack row counts".into()));
        }
        let mut m = DMatrix::zeros(self.rows(), self.cols() + other.cols());
        m.view_mut((0, 0), (self.rows(), self.cols())).copy_from(&self.values);
        m.view_mut((0, self.cols()), (self.rows(), other.cols()))
            .copy_from(&other.values);
        let mut labels = self.column_labels.clone();
        labels.extend(other.column_labels.iter().cloned());
        DesignMatrix::new(m, labels)
    }
}

/// Output of an OLS fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Residual variance s^2 = SSR / (N - k).
    pub sigma2: f64,
    /// Coefficient covariance per `se_kind`.
    pub cov: DMatrix<f64>,
    pub se_kind: SeKind,
    /// (X'X)^-1, kept for restriction tests.
    pub xtx_inv: DMatrix<f64>,
}

impl FitResult {
    pub fn se(&self) -> Vec<f64> {
        (0..self.cov.nrows()).map(|i| self.cov[(i, i)].max(0.0).sqrt()).collect()
    }
}

/// A Wald-type test of the linear restrictions R beta = r.
#[derive(Debug, Clone)]
pub struct RestrictionTest {
    pub f_stat: f64,
    pub df1: usize,
    pub df2: usize,
    pub p_value: f64,
}

/// Output of a 2SLS fit with one endogenous regressor.
#[derive(Debug, Clone)]
pub struct TslsResult {
    /// Coefficient on the endogenous treatment.
    pub beta: f64,
    pub se: f64,
    /// Joint F that all excluded-instrument coefficients are zero in the
    /// first stage.
    pub first_stage_f: f64,
    /// Sargan N*R^2 statistic; present only when overidentified.
    pub sargan_stat: Option<f64>,
    pub sargan_p: Option<f64>,
    pub n: usize,
    pub n_instruments: usize,
}

/// Least-squares core: coefficients and (X'X)^-1 through pivoted QR.
fn lstsq(x: &DMatrix<f64>, y: &DVector<f64>, labels: &[String]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    let k = x.ncols();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "y has {} rows, X has {n}",
            y.len()
        )));
    }
    if n < k {
        return Err(Error::RankDeficient(format!("{n} rows < {k} columns")));
    }
    let qr = x.clone().col_piv_qr();
    let r = qr.r();
    let max_pivot = (0..k).map(|i| r[(i, i)].abs()).fold(0.0f64, f64::max);
    if max_pivot == 0.0 {
        return Err(Error::RankDeficient("all-zero design".into()));
    }
    for i in 0..k {
        if r[(i, i)].abs() < RANK_TOL * max_pivot {
            let label = labels.get(i).map(String::as_str).unwrap_or("?");
            return Err(Error::RankDeficient(format!(
                "collinear columns (pivot {i}, near {label})"
            )));
        }
    }
    // X P = Q R  =>  beta = P (R^-1 Q' y)
    let q = qr.q();
    let qty = q.transpose() * y;
    let z = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient("singular R".into()))?;
    let mut beta = z.clone();
    qr.p().inv_permute_rows(&mut beta);
    // (X'X)^-1 = P R^-1 R^-T P'
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(Error::RankDeficient("singular R".into()))?;
    let mut xtx_inv = &rinv * rinv.transpose();
    qr.p().inv_permute_rows(&mut xtx_inv);
    let mut xtx_inv_t = xtx_inv.transpose();
    qr.p().inv_permute_rows(&mut xtx_inv_t);
    Ok((beta, xtx_inv_t.transpose()))
}

fn sandwich_hc1(
    x: &DMatrix<f64>,
    resid: &DVector<f64>,
    xtx_inv: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = x.nrows();
    let k = x.ncols();
    // meat = X' diag(e^2) X, built as (diag(e^2) X)' X
    let mut scaled = x.clone();
    for i in 0..n {
        let e2 = resid[i] * resid[i];
        scaled.row_mut(i).scale_mut(e2);
    }
    let meat = scaled.transpose() * x;
    let scale = n as f64 / (n - k) as f64;
    xtx_inv * meat * xtx_inv * scale
}

/// Ordinary least squares of `y` on the columns of `x`.
pub fn ols(y: &DVector<f64>, x: &DesignMatrix, se_kind: SeKind) -> Result<FitResult> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response vector".into()));
    }
    let (beta, xtx_inv) = lstsq(&x.values, y, &x.column_labels)?;
    let residuals = y - &x.values * &beta;
    let n = x.rows();
    let k = x.cols();
    let ssr = residuals.norm_squared();
    let sigma2 = if n > k { ssr / (n - k) as f64 } else { 0.0 };
    let cov = match se_kind {
        SeKind::Homoskedastic => &xtx_inv * sigma2,
        SeKind::HcRobust => sandwich_hc1(&x.values, &residuals, &xtx_inv),
    };
    Ok(FitResult {
        coefficients: beta,
        residuals,
        sigma2,
        cov,
        se_kind,
        xtx_inv,
    })
}

/// Residualize each target on the control columns (Frisch-Waugh-Lovell).
pub fn partial_out(targets: &[DVector<f64>], controls: &DesignMatrix) -> Result<Vec<DVector<f64>>> {
    // Factor once, reuse for every target.
    let mut out = Vec::with_capacity(targets.len());
    for t in targets {
        let fit = ols(t, controls, SeKind::Homoskedastic)?;
        out.push(fit.residuals);
    }
    Ok(out)
}

/// F test of R beta = r against the unrestricted fit.
///
/// The statistic is (Rb - r)'[R (X'X)^-1 R']^-1 (Rb - r) / q, divided by the
/// unrestricted s^2; the p-value comes from F(q, N - k).
pub fn f_test_restrictions(
    fit: &FitResult,
    x: &DesignMatrix,
    r_mat: &DMatrix<f64>,
    r_vec: &DVector<f64>,
) -> Result<RestrictionTest> {
    let k = x.cols();
    let q = r_mat.nrows();
    if r_mat.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "R has {} columns, X has {k}",
            r_mat.ncols()
        )));
    }
    if q == 0 || r_vec.len() != q {
        return Err(Error::DimensionMismatch("restriction rows".into()));
    }
    if r_mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("restriction matrix".into()));
    }
    let n = x.rows();
    if n <= k {
        return Err(Error::DimensionMismatch("no residual degrees of freedom".into()));
    }
    let d = r_mat * &fit.coefficients - r_vec;
    let middle = r_mat * &fit.xtx_inv * r_mat.transpose();
    let chol = middle.cholesky().ok_or(Error::SingularRestriction)?;
    let solved = chol.solve(&d);
    let quad = d.dot(&solved);
    let df2 = n - k;
    let f_stat = if fit.sigma2 > 0.0 {
        (quad / q as f64) / fit.sigma2
    } else if quad.abs() < 1e-300 {
        0.0
    } else {
        f64::INFINITY
    };
    let p_value = dist::f_sf(f_stat, q as f64, df2 as f64);
    Ok(RestrictionTest {
        f_stat,
        df1: q,
        df2,
        p_value,
    })
}

/// Two-stage least squares of `y` on the single endogenous regressor `d`,
/// instrumented by the columns of `z`. An intercept is always included; any
/// additional exogenous regressors go in `exog`.
pub fn tsls(
    y: &DVector<f64>,
    d: &DVector<f64>,
    z: &DesignMatrix,
    exog: Option<&DesignMatrix>,
    se_kind: SeKind,
) -> Result<TslsResult> {
    let n = y.len();
    if d.len() != n || z.rows() != n {
        return Err(Error::DimensionMismatch("tsls input lengths".into()));
    }
    let n_instruments = z.cols();
    let exog_all = match exog {
        Some(e) => DesignMatrix::intercept(n).hstack(e)?,
        None => DesignMatrix::intercept(n),
    };
    if n <= n_instruments + exog_all.cols() {
        return Err(Error::DimensionMismatch("too few observations for 2SLS".into()));
    }
    // Full instrument set W = [const, exog, Z].
    let w = exog_all.hstack(z)?;
    let first = ols(d, &w, SeKind::Homoskedastic)?;
    let d_hat = d - &first.residuals;

    // First-stage F: excluded instruments jointly zero.
    let mut r_mat = DMatrix::zeros(n_instruments, w.cols());
    for (i, j) in (exog_all.cols()..w.cols()).enumerate() {
        r_mat[(i, j)] = 1.0;
    }
    let r_vec = DVector::zeros(n_instruments);
    let fs_test = f_test_restrictions(&first, &w, &r_mat, &r_vec)?;

    // Fitted treatment must vary beyond the exogenous span.
    let dhat_resid = ols(&d_hat, &exog_all, SeKind::Homoskedastic)?.residuals;
    if dhat_resid.norm_squared() < 1e-12 {
        return Err(Error::WeakDenominator);
    }

    // Second stage on [d_hat, const, exog]; residuals use the original d.
    let dhat_col = DesignMatrix::new(
        DMatrix::from_column_slice(n, 1, d_hat.as_slice()),
        vec!["treatment".into()],
    )?;
    let x2 = dhat_col.hstack(&exog_all)?;
    let (coefs, xtx_inv) = lstsq(&x2.values, y, &x2.column_labels)?;
    let beta = coefs[0];
    let mut structural = x2.values.clone();
    structural.column_mut(0).copy_from(d);
    let residuals = y - &structural * &coefs;
    let k2 = x2.cols();
    let sigma2 = residuals.norm_squared() / (n - k2) as f64;
    let cov = match se_kind {
        SeKind::Homoskedastic => &xtx_inv * sigma2,
        SeKind::HcRobust => sandwich_hc1(&x2.values, &residuals, &xtx_inv),
    };
    let se = cov[(0, 0)].max(0.0).sqrt();

    // Overidentification statistic: the classical Sargan N * R^2 under
    // homoskedasticity, or the heteroskedasticity-robust Hansen J (two-step
    // GMM criterion) to match the robust covariance choice.
    let (sargan_stat, sargan_p) = if n_instruments >= 2 {
        let stat = match se_kind {
            SeKind::Homoskedastic => sargan_nr2(&residuals, &w)?,
            SeKind::HcRobust => hansen_j(y, &structural, &w.values, &residuals)
                .map_or_else(|| sargan_nr2(&residuals, &w), Ok)?,
        };
        let p = dist::chi2_sf(stat, (n_instruments - 1) as f64);
        (Some(stat), Some(p))
    } else {
        (None, None)
    };

    Ok(TslsResult {
        beta,
        se,
        first_stage_f: fs_test.f_stat,
        sargan_stat,
        sargan_p,
        n,
        n_instruments,
    })
}

/// Classical Sargan statistic: N * R^2 from regressing the 2SLS residuals on
/// the full instrument set.
fn sargan_nr2(residuals: &DVector<f64>, w: &DesignMatrix) -> Result<f64> {
    let aux = ols(residuals, w, SeKind::Homoskedastic)?;
    let mean = residuals.mean();
    let sst: f64 = residuals.iter().map(|e| (e - mean) * (e - mean)).sum();
    let r2 = if sst > 0.0 {
        1.0 - aux.residuals.norm_squared() / sst
    } else {
        0.0
    };
    Ok((residuals.len() as f64 * r2).max(0.0))
}

/// Hansen J statistic: the two-step GMM criterion with a
/// heteroskedasticity-robust weight matrix built from the 2SLS residuals.
/// Returns `None` when the weight matrix is numerically singular.
fn hansen_j(
    y: &DVector<f64>,
    x_struct: &DMatrix<f64>,
    w: &DMatrix<f64>,
    resid_2sls: &DVector<f64>,
) -> Option<f64> {
    let n = w.nrows();
    // S = sum_i e_i^2 w_i w_i', built as (diag(e^2) W)' W.
    let mut scaled = w.clone();
    for i in 0..n {
        let e2 = resid_2sls[i] * resid_2sls[i];
        scaled.row_mut(i).scale_mut(e2);
    }
    let s = scaled.transpose() * w;
    let chol = s.cholesky()?;
    let g = w.transpose() * x_struct; // moment Jacobian
    let wy = w.transpose() * y;
    let s_inv_g = chol.solve(&g);
    let gsg = g.transpose() * &s_inv_g;
    let rhs = s_inv_g.transpose() * &wy;
    let beta = gsg.cholesky()?.solve(&rhs);
    let e = y - x_struct * &beta;
    let moments = w.transpose() * e;
    Some((moments.transpose() * chol.solve(&moments))[(0, 0)].max(0.0))
}

/// Wald estimand for one binary instrument: reduced-form difference over the
/// first-stage difference. Returns (beta, complier_share).
pub fn wald(y: &DVector<f64>, d: &DVector<f64>, z_binary: &[bool]) -> Result<(f64, f64)> {
    let n = y.len();
    if d.len() != n || z_binary.len() != n {
        return Err(Error::DimensionMismatch("wald input lengths".into()));
    }
    let n1 = z_binary.iter().filter(|&&b| b).count();
    let n0 = n - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::Invalid("binary instrument takes a single value".into()));
    }
    let (mut y1, mut y0, mut d1, mut d0) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        if z_binary[i] {
            y1 += y[i];
            d1 += d[i];
        } else {
            y0 += y[i];
            d0 += d[i];
        }
    }
    let dy = y1 / n1 as f64 - y0 / n0 as f64;
    let dd = d1 / n1 as f64 - d0 / n0 as f64;
    if dd == 0.0 {
        return Err(Error::ZeroFirstStage);
    }
    Ok((dy / dd, dd))
}
