//! Text formats: `theta # mu` sample files and trajectory CSV.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::sde::{Trajectory, TripleTrajectory};

const SAMPLE_HEADER: &str = "# theta_mu_samples m=";

/// One sample per line, whitespace separated, after a
/// `# theta_mu_samples m=<dim>` header.
pub fn write_theta_mu_samples(samples: &[f64], m: usize) -> Result<String> {
    if m == 0 || !samples.len().is_multiple_of(m) {
        return Err(Error::InvalidParameter {
            name: "theta_mu_samples",
            reason: "flat sample array must hold whole rows of dimension m".into(),
        });
    }
    let mut s = format!("{SAMPLE_HEADER}{m}\n");
    for row in samples.chunks_exact(m) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    Ok(s)
}

/// Parses a sample file; returns the flat samples and `m`. Blank lines are
/// skipped.
pub fn read_theta_mu_samples(text: &str) -> Result<(Vec<f64>, usize)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, reason: "empty file".into() })?;
    let m: usize = header
        .trim()
        .strip_prefix(SAMPLE_HEADER)
        .and_then(|d| d.trim().parse().ok())
        .filter(|&m| m > 0)
        .ok_or(Error::Parse { line: 1, reason: format!("expected header `{SAMPLE_HEADER}<dim>`") })?;
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let before = out.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Parse { line: i + 1, reason: format!("not a number: `{tok}`") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line: i + 1, reason: "non-finite sample".into() });
            }
            out.push(v);
        }
        if out.len() - before != m {
            return Err(Error::Parse { line: i + 1, reason: format!("expected {m} values, found {}", out.len() - before) });
        }
    }
    Ok((out, m))
}

fn header(n: usize, m: usize, tilde: bool) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((0..n).map(|i| format!("x{i}")));
    cols.extend((0..m).map(|i| format!("y{i}")));
    if tilde {
        cols.extend((0..n).map(|i| format!("xtilde{i}")));
    }
    cols.join(",")
}

/// Columns `t, x0.., y0..`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = header(traj.n, traj.m, false);
    s.push('\n');
    for k in 0..traj.len() {
        let _ = write!(s, "{:.12e}", traj.times[k]);
        for v in traj.x_at(k).iter().chain(traj.y_at(k)) {
            let _ = write!(s, ",{v:.12e}");
        }
        s.push('\n');
    }
    s
}

/// Columns `t, x0.., y0.., xtilde0..`.
pub fn triple_csv(triple: &TripleTrajectory) -> String {
    let base = &triple.base;
    let mut s = header(base.n, base.m, true);
    s.push('\n');
    for k in 0..base.len() {
        let _ = write!(s, "{:.12e}", base.times[k]);
        for v in base.x_at(k).iter().chain(base.y_at(k)).chain(triple.xtilde_at(k)) {
            let _ = write!(s, ",{v:.12e}");
        }
        s.push('\n');
    }
    s
}
