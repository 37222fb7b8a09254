//! Second-step LATE estimation over club pairs: single-dummy IV, union 2SLS,
//! the median-of-Wald estimator, plurality-valid group selection inside each
//! club, and post-selection estimates.

use nalgebra::DVector;

use crate::ahc::{self, Partition, WeightedPoint};
use crate::clubs::{self, ClubAssignment, FTraceEntry};
use crate::data::EstimationData;
use crate::error::{Error, Result};
use crate::regress::{self, DesignMatrix, SeKind};

/// Default first-stage screening threshold ("F >= 10").
pub const FS_THRESHOLD_DEFAULT: f64 = 10.0;

/// Knobs shared by the pair estimators.
#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions {
    pub se_kind: SeKind,
    /// Pairs with first-stage F below this are flagged weak, not dropped.
    pub fs_threshold: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self { se_kind: SeKind::HcRobust, fs_threshold: FS_THRESHOLD_DEFAULT }
    }
}

/// An oriented pair of clubs; the focal club has the strictly higher
/// propensity mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ClubPair {
    pub reference_club: usize,
    pub focal_club: usize,
    pub judges_ref: Vec<String>,
    pub judges_focal: Vec<String>,
}

/// Union instrument for a pair: one dummy per focal-club judge, reference
/// club as base category, on the two clubs' cases only.
#[derive(Debug, Clone)]
pub struct UnionSpec {
    pub pair: ClubPair,
    pub instruments: Vec<String>,
}

impl UnionSpec {
    pub fn new(pair: ClubPair) -> Self {
        let instruments = pair.judges_focal.clone();
        Self { pair, instruments }
    }
}

/// Which estimator produced a [`ClubPairEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMode {
    Single,
    Union,
    Median,
    PostSelection,
}

impl EstimateMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimateMode::Single => "single",
            EstimateMode::Union => "union",
            EstimateMode::Median => "median",
            EstimateMode::PostSelection => "post-selection",
        }
    }
}

/// One LATE estimate for one club pair.
#[derive(Debug, Clone)]
pub struct ClubPairEstimate {
    pub pair: ClubPair,
    pub mode: EstimateMode,
    pub beta: f64,
    pub se: Option<f64>,
    pub ci95: Option<(f64, f64)>,
    pub first_stage_f: Option<f64>,
    pub weak: bool,
    pub sargan_p: Option<f64>,
    pub complier_share: Option<f64>,
    pub n: usize,
    /// Judges kept by the plurality selection (post-selection mode only).
    pub selected_valid: Option<Vec<String>>,
}

/// Outcome of the second-step clustering inside one club.
#[derive(Debug, Clone)]
pub struct GroupSelection {
    pub club: usize,
    /// Groups over the club's judges by reduced-form coefficient.
    pub groups: Partition,
    pub largest_group: Vec<String>,
    pub f_trace: Vec<FTraceEntry>,
    pub no_stop: bool,
}

/// Inputs to the analytic Wald-bias formula.
#[derive(Debug, Clone, Copy)]
pub struct BiasInputs {
    pub p_z: f64,
    pub p_zprime: f64,
    pub gamma11: f64,
    pub gamma00: f64,
    pub gamma10: f64,
}

/// All K(K-1)/2 club pairs, oriented so the focal club has the higher mean.
/// Pairs are ordered by descending focal mean, then descending reference
/// mean, so with four clubs the first pair joins the two most lenient clubs.
pub fn enumerate_pairs(assignment: &ClubAssignment) -> Result<Vec<ClubPair>> {
    let k = assignment.clubs.members.len();
    if k < 2 {
        return Err(Error::TooFewClubs);
    }
    // Club indices sorted by descending propensity mean.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        assignment.clubs.cluster_means[b]
            .partial_cmp(&assignment.clubs.cluster_means[a])
            .expect("finite club means")
    });
    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            let (hi, lo) = (order[i], order[j]);
            if assignment.clubs.cluster_means[hi] == assignment.clubs.cluster_means[lo] {
                return Err(Error::Invalid("clubs with identical means".into()));
            }
            pairs.push(ClubPair {
                reference_club: lo,
                focal_club: hi,
                judges_ref: assignment.clubs.members[lo].clone(),
                judges_focal: assignment.clubs.members[hi].clone(),
            });
        }
    }
    Ok(pairs)
}

fn judge_indices(data: &EstimationData, ids: &[String]) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| data.judge_index(id).ok_or_else(|| Error::EmptyJudge(id.clone())))
        .collect()
}

/// Difference of subset treatment means (focal minus reference).
fn mean_treatment_gap(
    data: &EstimationData,
    rows: &[usize],
    focal: &[usize],
) -> (f64, f64) {
    let mut member = vec![false; data.n_judges()];
    for &j in focal {
        member[j] = true;
    }
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for &i in rows {
        if member[data.judge_of_case[i]] {
            s1 += data.d[i];
            n1 += 1;
        } else {
            s0 += data.d[i];
            n0 += 1;
        }
    }
    let p1 = if n1 > 0 { s1 / n1 as f64 } else { f64::NAN };
    let p0 = if n0 > 0 { s0 / n0 as f64 } else { f64::NAN };
    (p1, p0)
}

/// Run 2SLS on a pair subset with the given instrument columns.
fn pair_tsls(
    data: &EstimationData,
    ref_ids: &[String],
    focal_ids: &[String],
    instrument_judges: Option<&[usize]>,
    mode: EstimateMode,
    opts: EstimateOptions,
) -> Result<ClubPairEstimate> {
    let ref_idx = judge_indices(data, ref_ids)?;
    let focal_idx = judge_indices(data, focal_ids)?;
    let mut all = ref_idx.clone();
    all.extend(&focal_idx);
    let rows = data.rows_for_judges(&all);
    let (p_focal, p_ref) = mean_treatment_gap(data, &rows, &focal_idx);
    if p_focal == p_ref {
        return Err(Error::ZeroFirstStage);
    }
    let y = EstimationData::gather(&data.y, &rows);
    let d = EstimationData::gather(&data.d, &rows);
    let z = match instrument_judges {
        None => {
            let col = data.instrument_column(&rows, &focal_idx);
            DesignMatrix::from_columns(&[("focal", &col)])?
        }
        Some(js) => {
            let cols = data.judge_columns(&rows, js);
            let named: Vec<(&str, &[f64])> = js
                .iter()
                .zip(&cols)
                .map(|(&j, c)| (data.judge_ids[j].as_str(), c.as_slice()))
                .collect();
            DesignMatrix::from_columns(&named)?
        }
    };
    let fit = regress::tsls(&y, &d, &z, None, opts.se_kind)?;
    Ok(ClubPairEstimate {
        pair: ClubPair {
            reference_club: 0,
            focal_club: 0,
            judges_ref: ref_ids.to_vec(),
            judges_focal: focal_ids.to_vec(),
        },
        mode,
        beta: fit.beta,
        se: Some(fit.se),
        ci95: Some((fit.beta - 1.96 * fit.se, fit.beta + 1.96 * fit.se)),
        first_stage_f: Some(fit.first_stage_f),
        weak: fit.first_stage_f < opts.fs_threshold,
        sargan_p: fit.sargan_p,
        complier_share: Some(p_focal - p_ref),
        n: fit.n,
        selected_valid: None,
    })
}

fn with_pair(mut est: ClubPairEstimate, pair: &ClubPair) -> ClubPairEstimate {
    est.pair.reference_club = pair.reference_club;
    est.pair.focal_club = pair.focal_club;
    est
}

/// Single-dummy IV: instrument = focal-club membership on the two clubs'
/// cases.
pub fn estimate_pair_single(
    data: &EstimationData,
    pair: &ClubPair,
    opts: EstimateOptions,
) -> Result<ClubPairEstimate> {
    let est = pair_tsls(
        data,
        &pair.judges_ref,
        &pair.judges_focal,
        None,
        EstimateMode::Single,
        opts,
    )?;
    Ok(with_pair(est, pair))
}

/// Union 2SLS: one instrument per focal-club judge, reference club as base.
pub fn estimate_pair_union(
    data: &EstimationData,
    union: &UnionSpec,
    opts: EstimateOptions,
) -> Result<ClubPairEstimate> {
    let pair = &union.pair;
    let focal_idx = judge_indices(data, &pair.judges_focal)?;
    let est = pair_tsls(
        data,
        &pair.judges_ref,
        &pair.judges_focal,
        Some(&focal_idx),
        EstimateMode::Union,
        opts,
    )?;
    Ok(with_pair(est, pair))
}

/// Median-of-Wald estimator: all |J_ref| x |J_focal| judge-pair estimates on
/// two-judge subsets, reduced by the median (mean of central two when even).
/// Degenerate judge pairs are skipped; the error surfaces only when every
/// pair is degenerate.
pub fn estimate_pair_median(
    data: &EstimationData,
    pair: &ClubPair,
    opts: EstimateOptions,
) -> Result<ClubPairEstimate> {
    let ref_idx = judge_indices(data, &pair.judges_ref)?;
    let focal_idx = judge_indices(data, &pair.judges_focal)?;
    let mut betas = Vec::with_capacity(ref_idx.len() * focal_idx.len());
    for &a in &ref_idx {
        for &b in &focal_idx {
            let rows = data.rows_for_judges(&[a, b]);
            let y = EstimationData::gather(&data.y, &rows);
            let d = EstimationData::gather(&data.d, &rows);
            let result = if data.partialled() {
                let col = data.instrument_column(&rows, &[b]);
                let z = DesignMatrix::from_columns(&[("focal", &col)])?;
                regress::tsls(&y, &d, &z, None, opts.se_kind).map(|t| t.beta)
            } else {
                let z: Vec<bool> = rows.iter().map(|&i| data.judge_of_case[i] == b).collect();
                regress::wald(&y, &d, &z).map(|(beta, _)| beta)
            };
            match result {
                Ok(beta) => betas.push(beta),
                Err(Error::ZeroFirstStage | Error::WeakDenominator) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    if betas.is_empty() {
        return Err(Error::ZeroFirstStage);
    }
    betas.sort_by(|a, b| a.partial_cmp(b).expect("finite estimates"));
    let m = betas.len();
    let beta = if m % 2 == 1 {
        betas[m / 2]
    } else {
        0.5 * (betas[m / 2 - 1] + betas[m / 2])
    };
    let mut all = ref_idx.clone();
    all.extend(&focal_idx);
    let rows = data.rows_for_judges(&all);
    let (p_focal, p_ref) = mean_treatment_gap(data, &rows, &focal_idx);
    Ok(ClubPairEstimate {
        pair: pair.clone(),
        mode: EstimateMode::Median,
        beta,
        se: None,
        ci95: None,
        first_stage_f: None,
        weak: false,
        sargan_p: None,
        complier_share: Some(p_focal - p_ref),
        n: rows.len(),
        selected_valid: None,
    })
}

/// Second-step clustering inside one club: cluster the per-judge outcome
/// means and keep the largest group as the plurality-valid set.
///
/// Ties on size are broken by the smallest internal spread of the reduced-form
/// coefficients, then by the smallest minimum judge id.
pub fn select_valid_in_club(
    data: &EstimationData,
    club: usize,
    club_judges: &[String],
    alpha: f64,
) -> Result<GroupSelection> {
    if club_judges.len() < 2 {
        return Err(Error::TooFewJudges);
    }
    let idx = judge_indices(data, club_judges)?;
    let counts = data.cases_per_judge();
    // Reduced-form coefficients: per-judge means of the (possibly
    // residualized) outcome within the club.
    let mut gamma = Vec::with_capacity(idx.len());
    for (pos, &j) in idx.iter().enumerate() {
        let rows = data.rows_for_judges(&[j]);
        if rows.is_empty() {
            return Err(Error::EmptyJudge(club_judges[pos].clone()));
        }
        let sum: f64 = rows.iter().map(|&i| data.y[i]).sum();
        gamma.push(sum / rows.len() as f64);
    }
    let points: Vec<WeightedPoint> = idx
        .iter()
        .zip(club_judges)
        .zip(&gamma)
        .map(|((&j, id), &g)| WeightedPoint::new(id.clone(), g, counts[j] as f64))
        .collect();
    let path = ahc::build_merge_path(&points)?;
    let (fit, design, labels) = clubs::judge_dummy_fit(data, &idx, &data.y)?;

    let j = idx.len();
    let mut f_trace = Vec::new();
    let mut selected = None;
    for k in 1..j {
        let part = ahc::cut(&path, k)?;
        let r_mat = clubs::equality_restrictions(&part, &labels);
        let r_vec = DVector::zeros(r_mat.nrows());
        let test = regress::f_test_restrictions(&fit, &design, &r_mat, &r_vec)?;
        f_trace.push(FTraceEntry { k, f_stat: test.f_stat, p_value: test.p_value });
        if test.p_value > alpha {
            selected = Some((k, part));
            break;
        }
    }
    let (groups, no_stop) = match selected {
        Some((_, part)) => (part, false),
        None => (ahc::cut(&path, j)?, true),
    };

    // Largest group, with the documented deterministic tie-breaks.
    let gamma_of = |id: &String| {
        let pos = club_judges.iter().position(|c| c == id).expect("club judge");
        gamma[pos]
    };
    let mut best: Option<(usize, f64, String, &Vec<String>)> = None;
    for members in &groups.members {
        let vals: Vec<f64> = members.iter().map(gamma_of).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        let min_id = members.iter().min().expect("non-empty group").clone();
        let better = match &best {
            None => true,
            Some((sz, bvar, bmin, _)) => {
                members.len() > *sz
                    || (members.len() == *sz && var < *bvar)
                    || (members.len() == *sz && var == *bvar && min_id < *bmin)
            }
        };
        if better {
            best = Some((members.len(), var, min_id, members));
        }
    }
    let largest_group = best.expect("at least one group").3.clone();
    Ok(GroupSelection { club, groups, largest_group, f_trace, no_stop })
}

/// Like [`select_valid_in_club`], but a club too small to cluster is kept
/// whole: its single judge is its own (trivially largest) group.
pub fn select_valid_or_whole(
    data: &EstimationData,
    club: usize,
    club_judges: &[String],
    alpha: f64,
) -> Result<GroupSelection> {
    if club_judges.is_empty() {
        return Err(Error::EmptySelection);
    }
    if club_judges.len() < 2 {
        return Ok(GroupSelection {
            club,
            groups: Partition {
                k: 1,
                assignment: club_judges.iter().map(|j| (j.clone(), 0)).collect(),
                members: vec![club_judges.to_vec()],
                cluster_means: vec![f64::NAN],
                cluster_sizes: vec![club_judges.len()],
            },
            largest_group: club_judges.to_vec(),
            f_trace: vec![],
            no_stop: false,
        });
    }
    select_valid_in_club(data, club, club_judges, alpha)
}

/// Post-selection estimate on the two clubs' largest groups. With
/// `union_instruments` the focal group's judge dummies are the instruments
/// (overidentified when the group has more than one judge); otherwise a
/// single focal-group membership dummy is used.
pub fn estimate_pair_post_selection(
    data: &EstimationData,
    pair: &ClubPair,
    selection_ref: &GroupSelection,
    selection_focal: &GroupSelection,
    union_instruments: bool,
    opts: EstimateOptions,
) -> Result<ClubPairEstimate> {
    if selection_ref.largest_group.is_empty() || selection_focal.largest_group.is_empty() {
        return Err(Error::EmptySelection);
    }
    let focal_idx = judge_indices(data, &selection_focal.largest_group)?;
    let instruments = if union_instruments { Some(focal_idx.as_slice()) } else { None };
    let est = pair_tsls(
        data,
        &selection_ref.largest_group,
        &selection_focal.largest_group,
        instruments,
        EstimateMode::PostSelection,
        opts,
    )?;
    let mut est = with_pair(est, pair);
    let mut kept = selection_ref.largest_group.clone();
    kept.extend(selection_focal.largest_group.iter().cloned());
    est.selected_valid = Some(kept);
    Ok(est)
}

/// Analytic bias of the Wald estimand under instrument invalidity:
/// (p_z' γ¹¹ + (1 − p_z) γ⁰⁰) / (p_z − p_z') + γ¹⁰.
pub fn wald_bias(inputs: &BiasInputs) -> Result<f64> {
    let denom = inputs.p_z - inputs.p_zprime;
    if denom == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok((inputs.p_zprime * inputs.gamma11 + (1.0 - inputs.p_z) * inputs.gamma00) / denom
        + inputs.gamma10)
}
