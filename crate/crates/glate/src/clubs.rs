//! First-step club selection: propensity estimation, Ward clustering of the
//! propensity scores, and the iterated F test that picks the number of clubs.

use nalgebra::{DMatrix, DVector};

use crate::ahc::{self, Partition, WeightedPoint};
use crate::data::EstimationData;
use crate::error::{Error, Result};
use crate::regress::{self, DesignMatrix, FitResult, SeKind};

/// Per-judge estimated propensity score with the case count behind it.
///
/// Without controls this is the judge-level treatment mean; with controls it
/// is the coefficient on the judge dummy in the regression of partialled
/// treatment on judge dummies (numerically still the judge mean of the
/// residualized treatment), so it may leave [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityProfile {
    pub judge: String,
    pub p_hat: f64,
    pub n_cases: usize,
}

/// Why a judge was removed before or after clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExclusionReason {
    TooFewCases,
    SingletonClub,
    MeanOutOfRange,
}

impl ExclusionReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExclusionReason::TooFewCases => "too_few_cases",
            ExclusionReason::SingletonClub => "singleton_club",
            ExclusionReason::MeanOutOfRange => "mean_out_of_range",
        }
    }
}

/// One entry of the K-selection loop.
#[derive(Debug, Clone, Copy)]
pub struct FTraceEntry {
    pub k: usize,
    pub f_stat: f64,
    pub p_value: f64,
}

/// Result of the first-step selection.
#[derive(Debug, Clone)]
pub struct ClubAssignment {
    pub k_selected: usize,
    /// Clubs over the judges that survived screening; cluster means are
    /// case-weighted propensity means.
    pub clubs: Partition,
    /// Every K visited by the selection loop, ending at the first
    /// non-rejection (or at K = J - 1 when no K was accepted).
    pub f_trace: Vec<FTraceEntry>,
    pub excluded_judges: Vec<(String, ExclusionReason)>,
    /// True when the F test still rejected at K = J - 1 and K = J was
    /// returned without a test.
    pub no_stop: bool,
    pub partialled: bool,
}

impl ClubAssignment {
    pub fn club_means(&self) -> &[f64] {
        &self.clubs.cluster_means
    }

    pub fn n_clubs(&self) -> usize {
        self.clubs.members.len()
    }
}

/// Estimate per-judge propensity scores as judge means of the (possibly
/// residualized) treatment.
pub fn estimate_propensities(data: &EstimationData) -> Result<Vec<PropensityProfile>> {
    let j = data.n_judges();
    let mut sums = vec![0.0f64; j];
    let mut counts = vec![0usize; j];
    for (i, &ji) in data.judge_of_case.iter().enumerate() {
        sums[ji] += data.d[i];
        counts[ji] += 1;
    }
    let mut out = Vec::with_capacity(j);
    for ji in 0..j {
        if counts[ji] == 0 {
            return Err(Error::EmptyJudge(data.judge_ids[ji].clone()));
        }
        out.push(PropensityProfile {
            judge: data.judge_ids[ji].clone(),
            p_hat: sums[ji] / counts[ji] as f64,
            n_cases: counts[ji],
        });
    }
    Ok(out)
}

/// Unrestricted judge-dummy regression of `response` over the given judges'
/// cases.
///
/// The design has one 0/1 dummy per judge and no intercept, so the F test's
/// s² comes from the saturated within-judge fit with df2 = N - J.
pub(crate) fn judge_dummy_fit(
    data: &EstimationData,
    judges: &[usize],
    response: &DVector<f64>,
) -> Result<(FitResult, DesignMatrix, Vec<String>)> {
    let rows = data.rows_for_judges(judges);
    let n = rows.len();
    let mut x = DMatrix::zeros(n, judges.len());
    for (r, &i) in rows.iter().enumerate() {
        let pos = judges
            .iter()
            .position(|&j| j == data.judge_of_case[i])
            .expect("case judge in subset");
        x[(r, pos)] = 1.0;
    }
    let labels: Vec<String> = judges.iter().map(|&j| data.judge_ids[j].clone()).collect();
    let design = DesignMatrix::new(x, labels.clone())?;
    let resp_sub = EstimationData::gather(response, &rows);
    let fit = regress::ols(&resp_sub, &design, SeKind::Homoskedastic)?;
    Ok((fit, design, labels))
}

/// Rows of R for H0 "all coefficients inside each cluster are equal": one
/// (beta_first - beta_other = 0) contrast per non-leading club member.
pub(crate) fn equality_restrictions(partition: &Partition, labels: &[String]) -> DMatrix<f64> {
    let col_of = |id: &String| labels.iter().position(|l| l == id).expect("label");
    let q: usize = partition.members.iter().map(|m| m.len() - 1).sum();
    let mut r = DMatrix::zeros(q, labels.len());
    let mut row = 0;
    for members in &partition.members {
        let lead = col_of(&members[0]);
        for id in &members[1..] {
            r[(row, lead)] = 1.0;
            r[(row, col_of(id))] = -1.0;
            row += 1;
        }
    }
    r
}

/// Cluster propensity scores and choose K by iterated F tests: return the
/// first K (from 1 upward) whose within-club equality hypothesis is not
/// rejected at `alpha`. Judges with fewer than `min_cases` cases are dropped
/// first.
pub fn select_clubs(
    profiles: &[PropensityProfile],
    data: &EstimationData,
    alpha: f64,
    min_cases: usize,
) -> Result<ClubAssignment> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Invalid(format!("alpha {alpha} outside (0,1)")));
    }
    let mut excluded = Vec::new();
    let mut kept: Vec<&PropensityProfile> = Vec::new();
    for p in profiles {
        if p.n_cases < min_cases {
            excluded.push((p.judge.clone(), ExclusionReason::TooFewCases));
        } else {
            kept.push(p);
        }
    }
    if kept.len() < 2 {
        return Err(Error::TooFewJudges);
    }
    let judge_idx: Vec<usize> = kept
        .iter()
        .map(|p| data.judge_index(&p.judge).ok_or_else(|| Error::EmptyJudge(p.judge.clone())))
        .collect::<Result<_>>()?;
    let (fit, design, labels) = judge_dummy_fit(data, &judge_idx, &data.d)?;

    let points: Vec<WeightedPoint> = kept
        .iter()
        .map(|p| WeightedPoint::new(p.judge.clone(), p.p_hat, p.n_cases as f64))
        .collect();
    let path = ahc::build_merge_path(&points)?;
    let j = kept.len();

    let mut f_trace = Vec::new();
    let mut selected = None;
    for k in 1..j {
        let part = ahc::cut(&path, k)?;
        let r_mat = equality_restrictions(&part, &labels);
        let r_vec = DVector::zeros(r_mat.nrows());
        let test = regress::f_test_restrictions(&fit, &design, &r_mat, &r_vec)?;
        f_trace.push(FTraceEntry { k, f_stat: test.f_stat, p_value: test.p_value });
        if test.p_value > alpha {
            selected = Some((k, part));
            break;
        }
    }
    let (k_selected, clubs, no_stop) = match selected {
        Some((k, part)) => (k, part, false),
        // Rejected all the way to K = J - 1: return the trivial K = J
        // partition, flagged.
        None => (j, ahc::cut(&path, j)?, true),
    };
    Ok(ClubAssignment {
        k_selected,
        clubs,
        f_trace,
        excluded_judges: excluded,
        no_stop,
        partialled: data.partialled(),
    })
}

/// Remove singleton clubs and (without controls) clubs whose propensity mean
/// falls outside [0, 1]; removed judges are recorded with reasons.
pub fn drop_degenerate_clubs(assignment: &ClubAssignment) -> ClubAssignment {
    let mut excluded = assignment.excluded_judges.clone();
    let mut members = Vec::new();
    let mut means = Vec::new();
    let mut sizes = Vec::new();
    for (c, ids) in assignment.clubs.members.iter().enumerate() {
        let mean = assignment.clubs.cluster_means[c];
        let reason = if ids.len() == 1 {
            Some(ExclusionReason::SingletonClub)
        } else if !assignment.partialled && !(0.0..=1.0).contains(&mean) {
            Some(ExclusionReason::MeanOutOfRange)
        } else {
            None
        };
        match reason {
            Some(r) => excluded.extend(ids.iter().map(|id| (id.clone(), r))),
            None => {
                members.push(ids.clone());
                means.push(mean);
                sizes.push(ids.len());
            }
        }
    }
    let assignment_map = members
        .iter()
        .enumerate()
        .flat_map(|(c, ids)| ids.iter().map(move |id| (id.clone(), c)))
        .collect();
    ClubAssignment {
        k_selected: assignment.k_selected,
        clubs: Partition {
            k: members.len(),
            assignment: assignment_map,
            members,
            cluster_means: means,
            cluster_sizes: sizes,
        },
        f_trace: assignment.f_trace.clone(),
        excluded_judges: excluded,
        no_stop: assignment.no_stop,
        partialled: assignment.partialled,
    }
}
