//! Result serialization: 10-significant-digit floats, atomic CSV writes.

use std::path::{Path, PathBuf};

use glate::clubs::ClubAssignment;
use glate::late::{ClubPairEstimate, GroupSelection};
use glate::clubs::PropensityProfile;
use glate::sim::McReport;

use crate::errors::{CliError, CliResult};

/// Format with 10 significant digits; plain decimal for moderate exponents,
/// scientific otherwise. Empty marker for absent values is handled by callers.
pub fn sig10(x: f64) -> String {
    if x.is_nan() {
        return "NA".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..10).contains(&exp) {
        format!("{:.*}", (9 - exp).max(0) as usize, x)
    } else {
        format!("{:.9e}", x)
    }
}

pub fn opt_sig10(x: Option<f64>) -> String {
    x.map(sig10).unwrap_or_default()
}

/// Write bytes via a temporary file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)
        .map_err(|e| CliError::io(format!("{}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn write_csv(path: &Path, rows: Vec<Vec<String>>) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(e.to_string()))?;
    atomic_write(path, &bytes)
}

fn s(v: &str) -> String {
    v.to_string()
}

/// clubs.csv: one row per judge, including screened-out judges.
pub fn write_clubs(
    dir: &Path,
    profiles: &[PropensityProfile],
    assignment: &ClubAssignment,
) -> CliResult<PathBuf> {
    let mut rows = vec![vec![
        s("judge"),
        s("p_hat"),
        s("n_cases"),
        s("club"),
        s("club_mean"),
        s("status"),
        s("reason"),
    ]];
    for p in profiles {
        let (club, club_mean, status, reason) = match assignment.clubs.cluster_of(&p.judge) {
            Some(c) => (
                c.to_string(),
                sig10(assignment.clubs.cluster_means[c]),
                s("included"),
                String::new(),
            ),
            None => {
                let reason = assignment
                    .excluded_judges
                    .iter()
                    .find(|(id, _)| id == &p.judge)
                    .map(|(_, r)| r.as_str().to_string())
                    .unwrap_or_default();
                (String::new(), String::new(), s("excluded"), reason)
            }
        };
        rows.push(vec![
            p.judge.clone(),
            sig10(p.p_hat),
            p.n_cases.to_string(),
            club,
            club_mean,
            status,
            reason,
        ]);
    }
    let path = dir.join("clubs.csv");
    write_csv(&path, rows)?;
    Ok(path)
}

const PAIRS_HEADER: [&str; 13] = [
    "pair_id",
    "ref_club",
    "focal_club",
    "mode",
    "beta",
    "se",
    "ci_lo",
    "ci_hi",
    "first_stage_f",
    "weak_flag",
    "sargan_p",
    "complier_share",
    "n",
];

/// pairs.csv: one row per (pair, estimator mode).
pub fn write_pairs(dir: &Path, estimates: &[(usize, ClubPairEstimate)]) -> CliResult<PathBuf> {
    let mut rows = vec![PAIRS_HEADER.iter().map(|h| s(h)).collect::<Vec<_>>()];
    for (pair_id, e) in estimates {
        rows.push(vec![
            pair_id.to_string(),
            e.pair.reference_club.to_string(),
            e.pair.focal_club.to_string(),
            s(e.mode.as_str()),
            sig10(e.beta),
            opt_sig10(e.se),
            opt_sig10(e.ci95.map(|c| c.0)),
            opt_sig10(e.ci95.map(|c| c.1)),
            opt_sig10(e.first_stage_f),
            if e.weak { s("1") } else { s("0") },
            opt_sig10(e.sargan_p),
            opt_sig10(e.complier_share),
            e.n.to_string(),
        ]);
    }
    let path = dir.join("pairs.csv");
    write_csv(&path, rows)?;
    Ok(path)
}

/// pairs.csv placeholder when no pair can be formed.
pub fn write_pairs_note(dir: &Path, note: &str) -> CliResult<PathBuf> {
    let mut rows = vec![PAIRS_HEADER.iter().map(|h| s(h)).collect::<Vec<_>>()];
    let mut row = vec![format!("NOTE: {note}")];
    row.resize(PAIRS_HEADER.len(), String::new());
    rows.push(row);
    let path = dir.join("pairs.csv");
    write_csv(&path, rows)?;
    Ok(path)
}

/// selection.csv: second-step groups per club with the kept flag.
pub fn write_selection(dir: &Path, selections: &[GroupSelection]) -> CliResult<PathBuf> {
    let mut rows = vec![vec![
        s("club"),
        s("judge"),
        s("group"),
        s("group_mean"),
        s("selected"),
    ]];
    for sel in selections {
        for (g, members) in sel.groups.members.iter().enumerate() {
            for judge in members {
                rows.push(vec![
                    sel.club.to_string(),
                    judge.clone(),
                    g.to_string(),
                    sig10(sel.groups.cluster_means[g]),
                    if sel.largest_group.contains(judge) { s("1") } else { s("0") },
                ]);
            }
        }
    }
    let path = dir.join("selection.csv");
    write_csv(&path, rows)?;
    Ok(path)
}

/// classification.csv: one row per alpha.
pub fn write_classification(dir: &Path, report: &McReport) -> CliResult<PathBuf> {
    let mut rows = vec![vec![
        s("alpha"),
        s("tsls"),
        s("se"),
        s("cons_class"),
        s("mean_clubs"),
        s("rep_k_true"),
        s("n_pair_reps"),
        s("n_mismatched"),
    ]];
    for b in &report.alphas {
        rows.push(vec![
            sig10(b.alpha),
            sig10(report.tsls_all_mean_beta),
            sig10(report.tsls_all_mean_se),
            sig10(b.cons_class),
            sig10(b.mean_clubs),
            sig10(b.rep_k_true),
            b.n_pair_reps.to_string(),
            b.n_mismatched.to_string(),
        ]);
    }
    let path = dir.join("classification.csv");
    write_csv(&path, rows)?;
    Ok(path)
}

/// late.csv: one row per (estimator, alpha, pair).
pub fn write_late(dir: &Path, report: &McReport) -> CliResult<PathBuf> {
    let mut rows = vec![vec![
        s("est"),
        s("alpha"),
        s("pair"),
        s("focal_club"),
        s("ref_club"),
        s("oracle"),
        s("beta"),
        s("se"),
        s("ci_cov"),
        s("power"),
        s("hs"),
        s("n_reps"),
    ]];
    for b in &report.alphas {
        for (pi, p) in b.pairs.iter().enumerate() {
            for (est, cell) in [("tsls", &p.tsls), ("median", &p.median), ("ahc", &p.ahc)] {
                rows.push(vec![
                    s(est),
                    sig10(b.alpha),
                    (pi + 1).to_string(),
                    p.focal_club.to_string(),
                    p.reference_club.to_string(),
                    sig10(p.oracle),
                    sig10(cell.mean_beta),
                    opt_sig10(cell.mean_se),
                    opt_sig10(cell.coverage),
                    opt_sig10(cell.power),
                    opt_sig10(cell.mean_sargan_p),
                    cell.n_reps.to_string(),
                ]);
            }
        }
    }
    let path = dir.join("late.csv");
    write_csv(&path, rows)?;
    Ok(path)
}

/// raw_estimates.csv: per-rep estimates for histogram rendering.
pub fn write_raw(dir: &Path, report: &McReport) -> CliResult<PathBuf> {
    let mut rows = vec![vec![s("rep"), s("alpha"), s("pair"), s("estimator"), s("beta")]];
    for r in &report.raw {
        rows.push(vec![
            r.rep.to_string(),
            sig10(r.alpha),
            (r.pair + 1).to_string(),
            s(r.estimator),
            sig10(r.beta),
        ]);
    }
    let path = dir.join("raw_estimates.csv");
    write_csv(&path, rows)?;
    Ok(path)
}
