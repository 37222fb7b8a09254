//! Reference data-generating process, oracle LATEs, and the Monte Carlo
//! harness.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::clubs;
use crate::data::EstimationData;
use crate::error::{Error, Result};
use crate::late::{self, ClubPair, EstimateOptions, GroupSelection, UnionSpec};
use crate::regress::{self, DesignMatrix};

/// Per-judge case-count scale: counts are round(scale * U(0.3, 5)).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSize {
    Small,
    Large,
}

impl SampleSize {
    pub fn scale(&self) -> f64 {
        match self {
            SampleSize::Small => 50.0,
            SampleSize::Large => 100.0,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SampleSize::Small => "small",
            SampleSize::Large => "large",
        }
    }
}

/// Full description of one simulation design.
#[derive(Debug, Clone)]
pub struct SimScenario {
    pub n_judges: usize,
    /// Club propensities, strictly decreasing.
    pub club_props: Vec<f64>,
    pub club_sizes: Vec<usize>,
    /// Per-judge direct effect; zero for valid judges.
    pub gamma: Vec<f64>,
    pub case_scale: SampleSize,
    pub treatment_effect_base: f64,
    pub seed: u64,
    pub alpha_grid: Vec<f64>,
    pub reps: usize,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        if self.club_sizes.iter().sum::<usize>() != self.n_judges {
            return Err(Error::Invalid("club sizes must sum to n_judges".into()));
        }
        if self.gamma.len() != self.n_judges {
            return Err(Error::Invalid("gamma length must equal n_judges".into()));
        }
        if !self.club_props.windows(2).all(|w| w[0] > w[1]) {
            return Err(Error::Invalid("club propensities must be strictly decreasing".into()));
        }
        Ok(())
    }

    /// True club index of each judge.
    pub fn club_of_judge(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_judges);
        for (c, &sz) in self.club_sizes.iter().enumerate() {
            out.extend(std::iter::repeat(c).take(sz));
        }
        out
    }

    /// True propensity of each judge.
    pub fn prop_of_judge(&self) -> Vec<f64> {
        self.club_of_judge().iter().map(|&c| self.club_props[c]).collect()
    }

    /// Zero-padded judge labels, lexicographically ordered like the indices.
    pub fn judge_labels(&self) -> Vec<String> {
        (0..self.n_judges).map(|j| format!("j{j:02}")).collect()
    }

    /// The K(K-1)/2 true club pairs as (focal, reference) club indices, in
    /// the fixed reporting order (most lenient pairs first).
    pub fn club_pairs(&self) -> Vec<(usize, usize)> {
        let k = self.club_props.len();
        let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
        for a in 0..k {
            for b in (a + 1)..k {
                pairs.push((a, b));
            }
        }
        pairs
    }
}

/// Named designs: which judges carry nonzero direct effects.
pub fn scenario_preset(name: &str, size: SampleSize) -> Result<SimScenario> {
    let gamma: Vec<f64> = match name {
        "no-invalid" => vec![0.0; 30],
        "few-invalid" => {
            let mut g = vec![0.0; 30];
            g[0] = 0.1;
            g[1] = 0.2;
            g[2] = 0.3;
            g[12] = -1.0;
            g[13] = -1.5;
            g[14] = -2.0;
            g
        }
        "many-invalid" => {
            let mut g = vec![0.0; 30];
            for (i, v) in [0.1, 0.2, 0.3, 0.4, 0.5, 0.6].into_iter().enumerate() {
                g[i] = v;
            }
            for (i, v) in [-1.0, -1.5, -2.0, -2.5].into_iter().enumerate() {
                g[12 + i] = v;
            }
            g[24] = 0.7;
            g[27] = 0.8;
            g
        }
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(SimScenario {
        n_judges: 30,
        club_props: vec![0.97, 0.5, 0.2, 0.05],
        club_sizes: vec![12, 12, 3, 3],
        gamma,
        case_scale: size,
        treatment_effect_base: 0.5,
        seed: 0,
        alpha_grid: vec![0.001, 0.01, 0.05],
        reps: 1000,
    })
}

/// One simulated dataset with the latent first-stage error retained.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDraw {
    pub judge_of_case: Vec<usize>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub d: Vec<f64>,
    pub y: Vec<f64>,
    pub cases_per_judge: Vec<usize>,
}

const STREAM_DRAW: u64 = 0;
const STREAM_ORACLE: u64 = 1;

/// Counter-mode RNG keyed by (seed, index, stream): parallel replications
/// are reproducible independent of execution order.
fn keyed_rng(seed: u64, index: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..24].copy_from_slice(&stream.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Generate one replication of the design.
pub fn draw(scenario: &SimScenario, rep_index: u64) -> Result<SimDraw> {
    scenario.validate()?;
    let mut rng = keyed_rng(scenario.seed, rep_index, STREAM_DRAW);
    let scale = scenario.case_scale.scale();
    let props = scenario.prop_of_judge();
    let cases_per_judge: Vec<usize> = (0..scenario.n_judges)
        .map(|_| (scale * rng.gen_range(0.3..5.0)).round() as usize)
        .collect();
    let n: usize = cases_per_judge.iter().sum();
    let mut out = SimDraw {
        judge_of_case: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        w: Vec::with_capacity(n),
        d: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        cases_per_judge,
    };
    for j in 0..scenario.n_judges {
        for _ in 0..out.cases_per_judge[j] {
            let v: f64 = rng.gen();
            let w: f64 = rng.gen();
            let u = 0.5 * v + w;
            let d = if props[j] > v { 1.0 } else { 0.0 };
            let inner = d * scenario.treatment_effect_base + d * u + scenario.gamma[j] + u;
            out.judge_of_case.push(j);
            out.v.push(v);
            out.w.push(w);
            out.d.push(d);
            out.y.push(inner.powi(4));
        }
    }
    Ok(out)
}

/// View a draw as estimator input.
pub fn to_estimation_data(scenario: &SimScenario, draw: &SimDraw) -> EstimationData {
    EstimationData {
        judge_ids: scenario.judge_labels(),
        judge_of_case: draw.judge_of_case.clone(),
        y: DVector::from_column_slice(&draw.y),
        d: DVector::from_column_slice(&draw.d),
        z_resid: None,
    }
}

/// Oracle LATE for one club pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOracle {
    pub focal_club: usize,
    pub reference_club: usize,
    pub late: f64,
}

/// Oracle table holding one LATE per club pair, in reporting order.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTable {
    pub pairs: Vec<PairOracle>,
}

/// Monte Carlo oracle LATEs: mean of Y(1) - Y(0) at gamma = 0 over compliers,
/// i.e. units with V uniform on the pair's propensity interval.
pub fn oracle_lates(scenario: &SimScenario, n_oracle: usize) -> Result<OracleTable> {
    scenario.validate()?;
    let mut pairs = Vec::new();
    for (idx, (a, b)) in scenario.club_pairs().into_iter().enumerate() {
        let p_a = scenario.club_props[a];
        let p_b = scenario.club_props[b];
        if p_a == p_b {
            return Err(Error::ZeroDenominator);
        }
        let mut rng = keyed_rng(scenario.seed, idx as u64, STREAM_ORACLE);
        let mut sum = 0.0;
        for _ in 0..n_oracle {
            let v = p_b + (p_a - p_b) * rng.gen::<f64>();
            let u = 0.5 * v + rng.gen::<f64>();
            let y1 = (scenario.treatment_effect_base + 2.0 * u).powi(4);
            let y0 = u.powi(4);
            sum += y1 - y0;
        }
        pairs.push(PairOracle { focal_club: a, reference_club: b, late: sum / n_oracle as f64 });
    }
    Ok(OracleTable { pairs })
}

/// Harness knobs.
#[derive(Debug, Clone)]
pub struct McConfig {
    pub oracle_draws: usize,
    pub min_cases: usize,
    pub estimate: EstimateOptions,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { oracle_draws: 1_000_000, min_cases: 1, estimate: EstimateOptions::default() }
    }
}

/// Running aggregate for one estimator in one pair row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimatorCell {
    pub n_reps: usize,
    pub mean_beta: f64,
    pub mean_se: Option<f64>,
    /// Fraction of reps whose 95% CI contains the oracle LATE.
    pub coverage: Option<f64>,
    /// Fraction of reps whose 95% CI excludes zero.
    pub power: Option<f64>,
    pub mean_sargan_p: Option<f64>,
}

/// One per-pair table row (all three estimator modes).
#[derive(Debug, Clone, PartialEq)]
pub struct PairBlock {
    pub focal_club: usize,
    pub reference_club: usize,
    pub oracle: f64,
    pub tsls: EstimatorCell,
    pub median: EstimatorCell,
    pub ahc: EstimatorCell,
}

/// Aggregates for one alpha level.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaBlock {
    pub alpha: f64,
    /// Fraction of reps with a fully correct judge classification.
    pub cons_class: f64,
    pub mean_clubs: f64,
    /// Fraction of reps selecting the true club count.
    pub rep_k_true: f64,
    /// Reps entering the per-pair rows (correct K and bijective club match).
    pub n_pair_reps: usize,
    /// Reps with correct K whose clubs could not be matched one-to-one.
    pub n_mismatched: usize,
    /// Reps where a pair-level estimator failed; skipped, not fatal.
    pub n_pair_errors: usize,
    pub pairs: Vec<PairBlock>,
}

/// One raw estimate, emitted for histogram rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEstimate {
    pub rep: usize,
    pub alpha: f64,
    pub pair: usize,
    pub estimator: &'static str,
    pub beta: f64,
}

/// Full Monte Carlo output.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub reps: usize,
    /// Mean all-instrument 2SLS coefficient and mean robust SE.
    pub tsls_all_mean_beta: f64,
    pub tsls_all_mean_se: f64,
    pub oracle: OracleTable,
    pub alphas: Vec<AlphaBlock>,
    pub raw: Vec<RawEstimate>,
}

/// Per-rep, per-pair, per-estimator record.
#[derive(Debug, Clone)]
struct PairRep {
    beta: f64,
    se: Option<f64>,
    sargan_p: Option<f64>,
}

#[derive(Debug, Clone)]
struct RepOutcome {
    all_iv: Option<(f64, f64)>,
    /// Per alpha: (k_selected, fully_correct, matched pair estimates).
    per_alpha: Vec<AlphaRep>,
}

#[derive(Debug, Clone)]
struct AlphaRep {
    k_selected: usize,
    cons_class: bool,
    /// Some when K = K0 and club means matched the true clubs bijectively.
    pairs: Option<Vec<[Option<PairRep>; 3]>>,
    mismatched: bool,
    pair_error: bool,
}

/// Map estimated clubs to true clubs by nearest mean; `None` unless the map
/// is a bijection.
fn match_clubs(est_means: &[f64], true_props: &[f64]) -> Option<Vec<usize>> {
    let mut hit = vec![false; true_props.len()];
    let mut map = Vec::with_capacity(est_means.len());
    for &m in est_means {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, &p) in true_props.iter().enumerate() {
            let d = (m - p).abs();
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        if hit[best] {
            return None;
        }
        hit[best] = true;
        map.push(best);
    }
    Some(map)
}

/// Whether the estimated partition equals the true judge classification.
fn fully_correct(
    assignment: &clubs::ClubAssignment,
    labels: &[String],
    true_club: &[usize],
) -> bool {
    if assignment.clubs.members.len() != true_club.iter().max().map_or(0, |m| m + 1) {
        return false;
    }
    // Same-club relation must agree for every judge pair.
    let est_of = |id: &String| assignment.clubs.cluster_of(id);
    for (i, a) in labels.iter().enumerate() {
        for (j, b) in labels.iter().enumerate().skip(i + 1) {
            let (Some(ca), Some(cb)) = (est_of(a), est_of(b)) else {
                return false;
            };
            if (ca == cb) != (true_club[i] == true_club[j]) {
                return false;
            }
        }
    }
    true
}

fn run_rep(scenario: &SimScenario, cfg: &McConfig, rep: usize) -> Result<RepOutcome> {
    let drawn = draw(scenario, rep as u64)?;
    let data = to_estimation_data(scenario, &drawn);
    let labels = scenario.judge_labels();
    let true_club = scenario.club_of_judge();
    let k0 = scenario.club_props.len();

    // All-instrument 2SLS: one dummy per judge except the first.
    let all_iv = {
        let rows: Vec<usize> = (0..data.n()).collect();
        let judges: Vec<usize> = (1..data.n_judges()).collect();
        let cols = data.judge_columns(&rows, &judges);
        let named: Vec<(&str, &[f64])> = judges
            .iter()
            .zip(&cols)
            .map(|(&j, c)| (data.judge_ids[j].as_str(), c.as_slice()))
            .collect();
        let z = DesignMatrix::from_columns(&named)?;
        match regress::tsls(&data.y, &data.d, &z, None, cfg.estimate.se_kind) {
            Ok(t) => Some((t.beta, t.se)),
            Err(_) => None,
        }
    };

    let profiles = clubs::estimate_propensities(&data)?;
    let mut per_alpha = Vec::with_capacity(scenario.alpha_grid.len());
    for &alpha in &scenario.alpha_grid {
        let assignment = clubs::select_clubs(&profiles, &data, alpha, cfg.min_cases)?;
        let cons = fully_correct(&assignment, &labels, &true_club);
        let k = assignment.clubs.members.len();
        let mut rep_alpha = AlphaRep {
            k_selected: assignment.k_selected,
            cons_class: cons,
            pairs: None,
            mismatched: false,
            pair_error: false,
        };
        if k == k0 {
            match match_clubs(&assignment.clubs.cluster_means, &scenario.club_props) {
                None => rep_alpha.mismatched = true,
                Some(club_map) => {
                    // est cluster index for each true club.
                    let mut est_of_true = vec![0usize; k0];
                    for (est, &truec) in club_map.iter().enumerate() {
                        est_of_true[truec] = est;
                    }
                    let mut selections: Vec<Option<GroupSelection>> = vec![None; k0];
                    let mut pair_cells = Vec::with_capacity(k0 * (k0 - 1) / 2);
                    for (a, b) in scenario.club_pairs() {
                        let (ea, eb) = (est_of_true[a], est_of_true[b]);
                        let pair = ClubPair {
                            reference_club: eb,
                            focal_club: ea,
                            judges_ref: assignment.clubs.members[eb].clone(),
                            judges_focal: assignment.clubs.members[ea].clone(),
                        };
                        let mut cells: [Option<PairRep>; 3] = [None, None, None];
                        match late::estimate_pair_union(
                            &data,
                            &UnionSpec::new(pair.clone()),
                            cfg.estimate,
                        ) {
                            Ok(e) => {
                                cells[0] = Some(PairRep {
                                    beta: e.beta,
                                    se: e.se,
                                    sargan_p: e.sargan_p,
                                })
                            }
                            Err(_) => rep_alpha.pair_error = true,
                        }
                        match late::estimate_pair_median(&data, &pair, cfg.estimate) {
                            Ok(e) => {
                                cells[1] =
                                    Some(PairRep { beta: e.beta, se: None, sargan_p: None })
                            }
                            Err(_) => rep_alpha.pair_error = true,
                        }
                        for (club_true, est_idx) in [(a, ea), (b, eb)] {
                            if selections[club_true].is_none() {
                                selections[club_true] = late::select_valid_or_whole(
                                    &data,
                                    est_idx,
                                    &assignment.clubs.members[est_idx],
                                    alpha,
                                )
                                .ok();
                            }
                        }
                        match (&selections[b], &selections[a]) {
                            (Some(sel_ref), Some(sel_focal)) => {
                                match late::estimate_pair_post_selection(
                                    &data,
                                    &pair,
                                    sel_ref,
                                    sel_focal,
                                    true,
                                    cfg.estimate,
                                ) {
                                    Ok(e) => {
                                        cells[2] = Some(PairRep {
                                            beta: e.beta,
                                            se: e.se,
                                            sargan_p: e.sargan_p,
                                        })
                                    }
                                    Err(_) => rep_alpha.pair_error = true,
                                }
                            }
                            _ => rep_alpha.pair_error = true,
                        }
                        pair_cells.push(cells);
                    }
                    rep_alpha.pairs = Some(pair_cells);
                }
            }
        }
        per_alpha.push(rep_alpha);
    }
    Ok(RepOutcome { all_iv, per_alpha })
}

const ESTIMATOR_NAMES: [&str; 3] = ["tsls", "median", "ahc"];

/// Run the full harness: parallel replications, deterministic ordered
/// aggregation. Failed replications are counted, not fatal.
pub fn run_monte_carlo(scenario: &SimScenario, cfg: &McConfig) -> Result<McReport> {
    scenario.validate()?;
    if scenario.reps == 0 {
        return Err(Error::Invalid("reps must be at least 1".into()));
    }
    let oracle = oracle_lates(scenario, cfg.oracle_draws)?;
    let outcomes: Vec<Result<RepOutcome>> = (0..scenario.reps)
        .into_par_iter()
        .map(|rep| run_rep(scenario, cfg, rep))
        .collect();

    let mut all_sum = (0.0, 0.0, 0usize);
    let n_pairs = scenario.club_pairs().len();
    struct CellAcc {
        n: usize,
        beta: f64,
        se: (f64, usize),
        cover: (usize, usize),
        power: (usize, usize),
        sargan: (f64, usize),
    }
    impl CellAcc {
        fn new() -> Self {
            Self { n: 0, beta: 0.0, se: (0.0, 0), cover: (0, 0), power: (0, 0), sargan: (0.0, 0) }
        }
    }
    let mut blocks: Vec<AlphaBlock> = scenario
        .alpha_grid
        .iter()
        .map(|&alpha| AlphaBlock {
            alpha,
            cons_class: 0.0,
            mean_clubs: 0.0,
            rep_k_true: 0.0,
            n_pair_reps: 0,
            n_mismatched: 0,
            n_pair_errors: 0,
            pairs: Vec::new(),
        })
        .collect();
    let mut accs: Vec<Vec<[CellAcc; 3]>> = (0..scenario.alpha_grid.len())
        .map(|_| (0..n_pairs).map(|_| [CellAcc::new(), CellAcc::new(), CellAcc::new()]).collect())
        .collect();
    let mut raw = Vec::new();
    let mut n_ok = 0usize;
    let k0 = scenario.club_props.len();

    for (rep, outcome) in outcomes.iter().enumerate() {
        let Ok(out) = outcome else { continue };
        n_ok += 1;
        if let Some((b, s)) = out.all_iv {
            all_sum.0 += b;
            all_sum.1 += s;
            all_sum.2 += 1;
        }
        for (ai, ar) in out.per_alpha.iter().enumerate() {
            let block = &mut blocks[ai];
            if ar.cons_class {
                block.cons_class += 1.0;
            }
            block.mean_clubs += ar.k_selected as f64;
            if ar.k_selected == k0 {
                block.rep_k_true += 1.0;
            }
            if ar.mismatched {
                block.n_mismatched += 1;
            }
            if ar.pair_error {
                block.n_pair_errors += 1;
            }
            if let Some(pairs) = &ar.pairs {
                block.n_pair_reps += 1;
                for (pi, cells) in pairs.iter().enumerate() {
                    let oracle_v = oracle.pairs[pi].late;
                    for (ei, cell) in cells.iter().enumerate() {
                        let Some(c) = cell else { continue };
                        let acc = &mut accs[ai][pi][ei];
                        acc.n += 1;
                        acc.beta += c.beta;
                        raw.push(RawEstimate {
                            rep,
                            alpha: scenario.alpha_grid[ai],
                            pair: pi,
                            estimator: ESTIMATOR_NAMES[ei],
                            beta: c.beta,
                        });
                        if let Some(se) = c.se {
                            acc.se.0 += se;
                            acc.se.1 += 1;
                            let half = 1.96 * se;
                            acc.cover.1 += 1;
                            if (c.beta - oracle_v).abs() <= half {
                                acc.cover.0 += 1;
                            }
                            acc.power.1 += 1;
                            if c.beta.abs() > half {
                                acc.power.0 += 1;
                            }
                        }
                        if let Some(sp) = c.sargan_p {
                            acc.sargan.0 += sp;
                            acc.sargan.1 += 1;
                        }
                    }
                }
            }
        }
    }
    if n_ok == 0 {
        return Err(Error::Invalid("every replication failed".into()));
    }

    for (ai, block) in blocks.iter_mut().enumerate() {
        let n = n_ok as f64;
        block.cons_class /= n;
        block.mean_clubs /= n;
        block.rep_k_true /= n;
        for (pi, (a, b)) in scenario.club_pairs().into_iter().enumerate() {
            let mk = |acc: &CellAcc| EstimatorCell {
                n_reps: acc.n,
                mean_beta: if acc.n > 0 { acc.beta / acc.n as f64 } else { f64::NAN },
                mean_se: (acc.se.1 > 0).then(|| acc.se.0 / acc.se.1 as f64),
                coverage: (acc.cover.1 > 0).then(|| acc.cover.0 as f64 / acc.cover.1 as f64),
                power: (acc.power.1 > 0).then(|| acc.power.0 as f64 / acc.power.1 as f64),
                mean_sargan_p: (acc.sargan.1 > 0).then(|| acc.sargan.0 / acc.sargan.1 as f64),
            };
            let cells = &accs[ai][pi];
            block.pairs.push(PairBlock {
                focal_club: a,
                reference_club: b,
                oracle: oracle.pairs[pi].late,
                tsls: mk(&cells[0]),
                median: mk(&cells[1]),
                ahc: mk(&cells[2]),
            });
        }
    }

    Ok(McReport {
        reps: n_ok,
        tsls_all_mean_beta: if all_sum.2 > 0 { all_sum.0 / all_sum.2 as f64 } else { f64::NAN },
        tsls_all_mean_se: if all_sum.2 > 0 { all_sum.1 / all_sum.2 as f64 } else { f64::NAN },
        oracle,
        alphas: blocks,
        raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn preset_gamma_vectors() {
        let none = scenario_preset("no-invalid", SampleSize::Small).unwrap();
        assert!(none.gamma.iter().all(|&g| g == 0.0));
        let few = scenario_preset("few-invalid", SampleSize::Small).unwrap();
        assert_eq!(few.gamma.iter().filter(|&&g| g != 0.0).count(), 6);
        assert_eq!(few.gamma[14], -2.0);
        let many = scenario_preset("many-invalid", SampleSize::Large).unwrap();
        assert_eq!(many.gamma.iter().filter(|&&g| g != 0.0).count(), 12);
        assert_eq!(many.gamma[24], 0.7);
        assert_eq!(many.gamma[27], 0.8);
        assert!(matches!(
            scenario_preset("some-invalid", SampleSize::Small),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn draws_are_deterministic_and_distinct() {
        let sc = scenario_preset("no-invalid", SampleSize::Small).unwrap();
        let d1 = draw(&sc, 3).unwrap();
        let d2 = draw(&sc, 3).unwrap();
        assert_eq!(d1, d2);
        let d3 = draw(&sc, 4).unwrap();
        assert_ne!(d1.y, d3.y);
    }

    #[test]
    fn case_counts_within_bounds() {
        let sc = scenario_preset("no-invalid", SampleSize::Large).unwrap();
        let d = draw(&sc, 0).unwrap();
        for &n in &d.cases_per_judge {
            assert!(n >= 30 && n <= 500, "count {n}");
        }
    }

    #[test]
    fn judge_treatment_rates_match_propensities() {
        let sc = scenario_preset("no-invalid", SampleSize::Large).unwrap();
        let d = draw(&sc, 1).unwrap();
        let props = sc.prop_of_judge();
        let mut sums = vec![0.0; 30];
        let mut counts = vec![0usize; 30];
        for (i, &j) in d.judge_of_case.iter().enumerate() {
            sums[j] += d.d[i];
            counts[j] += 1;
        }
        for j in 0..30 {
            let p = props[j];
            let n = counts[j] as f64;
            let se = (p * (1.0 - p) / n).sqrt();
            assert!(
                (sums[j] / n - p).abs() <= 3.0 * se + 1.0 / n,
                "judge {j}: mean {} vs {p}",
                sums[j] / n
            );
        }
        let u_mean: f64 = d
            .v
            .iter()
            .zip(&d.w)
            .map(|(&v, &w)| 0.5 * v + w)
            .sum::<f64>()
            / d.v.len() as f64;
        assert_relative_eq!(u_mean, 0.75, epsilon = 0.02);
    }

    #[test]
    fn oracle_monotone_and_gamma_invariant() {
        let sc = scenario_preset("no-invalid", SampleSize::Small).unwrap();
        let t = oracle_lates(&sc, 200_000).unwrap();
        assert_eq!(t.pairs.len(), 6);
        for w in t.pairs.windows(2) {
            assert!(w[0].late > w[1].late, "{:?}", t.pairs);
        }
        let sc2 = scenario_preset("many-invalid", SampleSize::Small).unwrap();
        let t2 = oracle_lates(&sc2, 200_000).unwrap();
        assert_eq!(t, t2);
    }

    #[test]
    fn small_harness_runs_and_is_deterministic() {
        let mut sc = scenario_preset("no-invalid", SampleSize::Small).unwrap();
        sc.reps = 4;
        sc.alpha_grid = vec![0.05];
        let cfg = McConfig { oracle_draws: 20_000, ..McConfig::default() };
        let r1 = run_monte_carlo(&sc, &cfg).unwrap();
        let r2 = run_monte_carlo(&sc, &cfg).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.reps, 4);
        let block = &r1.alphas[0];
        assert!(block.cons_class >= 0.0 && block.cons_class <= 1.0);
        assert!(block.mean_clubs >= 1.0);
        assert!(block.n_pair_reps <= 4);
        assert!(r1.tsls_all_mean_beta.is_finite());
    }
}
