//! Strong-error measurements, epsilon sweeps with slope fitting, and the
//! stopped TAMD experiment.

pub mod oracle;

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::averaging::{simulate_averaged_stopped, AveragedDrift};
use crate::error::{invalid, Error, Result};
use crate::model::{BoxDomain, ModelSpec, TamdModelParams};
use crate::noise::{auxiliary_rng, REFINEMENT_REPLICA_OFFSET};
use crate::sde::{initial_fast_states, simulate_coupled_with, ReplicaNoise, SimConfig, Trajectory};
use crate::stats::{map_replicas, mean_and_se, quantile, weighted_linear_fit};

pub use oracle::{linear_oracle, OracleResult};

/// Fraction of replicas re-run at `dt / 2` for the refinement check.
pub const REFINEMENT_FRACTION: f64 = 0.1;
/// Bootstrap resamples for the slope interval.
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Steps within which an exit counts as immediate.
pub const IMMEDIATE_EXIT_STEPS: usize = 10;
/// Largest tolerated fraction of immediate exits.
pub const IMMEDIATE_EXIT_FRACTION: f64 = 0.5;

/// What to do with the `dt` versus `dt / 2` comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RefinementPolicy {
    /// Fail with `DtBiasTooLarge` when the ratio is outside `1 +/- 3 SE`.
    #[default]
    Enforce,
    /// Record the ratio without failing.
    Report,
    Skip,
}

/// Stopping at the first exit of the slow variables from `domain`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stopping {
    pub domain: BoxDomain,
    /// Stop `Y` and `Ybar` each at their own exit instead of both at the
    /// first exit of either.
    pub own_exit: bool,
}

impl Stopping {
    pub fn symmetric(domain: BoxDomain) -> Self {
        Self { domain, own_exit: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongErrorResult {
    pub epsilon: f64,
    pub replicas: usize,
    pub mean_sup_error: f64,
    pub stderr: f64,
    pub dt: f64,
    pub substeps: usize,
    pub seed: u64,
    /// Mean at `dt` over mean at `dt / 2` on the refinement subsample.
    pub dt_refinement_ratio: Option<f64>,
    pub dt_refinement_se: Option<f64>,
    /// Mean of `min(tau, T)` under stopping.
    pub mean_exit_time: Option<f64>,
    /// True when every replica's coupled and averaged runs recorded the same
    /// `B^Y` stream.
    pub shared_by_stream: bool,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

struct ReplicaOutcome {
    sup: f64,
    exit_step: Option<usize>,
    shared: bool,
}

fn first_exit(traj: &Trajectory, domain: &BoxDomain) -> Option<usize> {
    (0..traj.len()).find(|&k| !domain.contains(traj.y_at(k)))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

fn replica_outcome(
    model: &ModelSpec,
    bbar: &AveragedDrift,
    cfg: &SimConfig,
    replica: u64,
    noise: &ReplicaNoise,
    stopping: Option<&Stopping>,
) -> Result<ReplicaOutcome> {
    let (x0, _) = initial_fast_states(model, cfg, replica)?;
    let coupled = simulate_coupled_with(model, cfg, &x0, noise)?;
    let (averaged, bar_exit) = simulate_averaged_stopped(bbar, &model.sigma_y, cfg, &noise.by, stopping.map(|s| &s.domain))?;
    let by_id = noise.by.stream_id;
    let shared = coupled.seed_record.streams.contains(&by_id) && averaged.seed_record.streams == [by_id];
    let last = coupled.len() - 1;
    let (sup, exit_step) = match stopping {
        None => {
            let sup = (0..=last).map(|k| distance(coupled.y_at(k), averaged.y_at(k))).fold(0.0, f64::max);
            (sup, None)
        }
        Some(s) => {
            let y_exit = first_exit(&coupled, &s.domain);
            let tau = match (y_exit, bar_exit) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
            let sup = if s.own_exit {
                let ty = y_exit.unwrap_or(last);
                let tb = bar_exit.unwrap_or(last);
                (0..=last).map(|k| distance(coupled.y_at(k.min(ty)), averaged.y_at(k.min(tb)))).fold(0.0, f64::max)
            } else {
                let end = tau.unwrap_or(last);
                (0..=end).map(|k| distance(coupled.y_at(k), averaged.y_at(k))).fold(0.0, f64::max)
            };
            (sup, tau)
        }
    };
    Ok(ReplicaOutcome { sup, exit_step, shared })
}

/// `E sup_k |Y_k - Ybar_k|` over the slow grid, with the coupled and averaged
/// processes driven by the same `B^Y` increments.
pub fn strong_error(
    model: &ModelSpec,
    bbar: &AveragedDrift,
    cfg: &SimConfig,
    replicas: usize,
    stopping: Option<&Stopping>,
    policy: RefinementPolicy,
) -> Result<StrongErrorResult> {
    if replicas < 2 {
        return Err(invalid("replicas", "need at least 2"));
    }
    if bbar.m != model.m {
        return Err(invalid("bbar", "dimension differs from the model's slow dimension"));
    }
    let steps = cfg.validate(model)?;
    let outcomes = map_replicas(replicas, |r| {
        let noise = ReplicaNoise::generate(model, cfg, r, false)?;
        replica_outcome(model, bbar, cfg, r, &noise, stopping)
    })?;
    let samples: Vec<f64> = outcomes.iter().map(|o| o.sup).collect();
    let (mean, se) = mean_and_se(&samples);
    let shared = outcomes.iter().all(|o| o.shared);
    debug_assert!(shared, "coupled and averaged runs must share B^Y");

    let mut mean_exit_time = None;
    if stopping.is_some() {
        let immediate = outcomes.iter().filter(|o| o.exit_step.is_some_and(|k| k <= IMMEDIATE_EXIT_STEPS)).count();
        let fraction = immediate as f64 / replicas as f64;
        if fraction > IMMEDIATE_EXIT_FRACTION {
            return Err(Error::ImmediateExit { fraction });
        }
        let times: Vec<f64> = outcomes.iter().map(|o| o.exit_step.unwrap_or(steps) as f64 * cfg.dt).collect();
        mean_exit_time = Some(mean_and_se(&times).0);
    }

    let (ratio, ratio_se) = match policy {
        RefinementPolicy::Skip => (None, None),
        _ => {
            let (ratio, ratio_se) = refinement_ratio(model, bbar, cfg, replicas, stopping)?;
            if policy == RefinementPolicy::Enforce && (ratio - 1.0).abs() > 3.0 * ratio_se {
                return Err(Error::DtBiasTooLarge { ratio, se: ratio_se });
            }
            (Some(ratio), Some(ratio_se))
        }
    };

    Ok(StrongErrorResult {
        epsilon: model.epsilon,
        replicas,
        mean_sup_error: mean,
        stderr: se,
        dt: cfg.dt,
        substeps: cfg.substeps,
        seed: cfg.seed,
        dt_refinement_ratio: ratio,
        dt_refinement_se: ratio_se,
        mean_exit_time,
        shared_by_stream: shared,
        samples,
    })
}

/// Ratio of the `dt` and `dt / 2` means on a subsample, each coarse path
/// driven by the pairwise sums of its fine path's increments. The SE pools
/// the two standard errors.
fn refinement_ratio(
    model: &ModelSpec,
    bbar: &AveragedDrift,
    cfg: &SimConfig,
    replicas: usize,
    stopping: Option<&Stopping>,
) -> Result<(f64, f64)> {
    let count = ((replicas as f64 * REFINEMENT_FRACTION).ceil() as usize).max(2);
    let mut fine_cfg = cfg.clone();
    fine_cfg.dt = 0.5 * cfg.dt;
    let pairs = map_replicas(count, |r| {
        let id = r + REFINEMENT_REPLICA_OFFSET;
        let fine_noise = ReplicaNoise::generate(model, &fine_cfg, id, false)?;
        let coarse_noise = fine_noise.coarsen(2);
        let fine = replica_outcome(model, bbar, &fine_cfg, id, &fine_noise, stopping)?;
        let coarse = replica_outcome(model, bbar, cfg, id, &coarse_noise, stopping)?;
        Ok((coarse.sup, fine.sup))
    })?;
    let coarse: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let fine: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (mc, sc) = mean_and_se(&coarse);
    let (mf, sf) = mean_and_se(&fine);
    if mf == 0.0 {
        return Ok((if mc == 0.0 { 1.0 } else { f64::INFINITY }, 0.0));
    }
    let ratio = mc / mf;
    let se = ratio * ((sc / mc.max(f64::MIN_POSITIVE)).powi(2) + (sf / mf).powi(2)).sqrt();
    Ok((ratio, se))
}

/// `dt = min(cap, factor * eps)`, shrunk so that it divides `T` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtRule {
    pub factor: f64,
    pub cap: Option<f64>,
}

impl DtRule {
    pub fn proportional(factor: f64) -> Self {
        Self { factor, cap: None }
    }

    pub fn dt(&self, epsilon: f64, t_final: f64) -> f64 {
        let raw = self.cap.map_or(self.factor * epsilon, |c| c.min(self.factor * epsilon));
        let steps = (t_final / raw * (1.0 - 1e-12)).ceil();
        t_final / steps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceFit {
    pub slope: f64,
    pub slope_lo: f64,
    pub slope_hi: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Ordered by decreasing epsilon.
    pub results: Vec<StrongErrorResult>,
    /// `None` when some mean error is zero (`DegenerateErrors`).
    pub fit: Option<ConvergenceFit>,
    pub degenerate_errors: bool,
}

/// Weighted least squares of `log mean` on `log eps` with weights
/// `mean^2 / se^2`, plus a replicate bootstrap interval.
/// Returns `None` if any mean is zero.
pub fn fit_convergence(epsilons: &[f64], samples: &[Vec<f64>], seed: u64) -> Result<Option<ConvergenceFit>> {
    if epsilons.len() != samples.len() || epsilons.len() < 2 {
        return Err(invalid("epsilons", "need one sample set per epsilon and at least 2 points"));
    }
    let point = |sets: &[&[f64]]| -> Option<(f64, f64)> {
        let mut ys = Vec::with_capacity(sets.len());
        let mut ws = Vec::with_capacity(sets.len());
        for s in sets {
            let (m, se) = mean_and_se(s);
            if !(m > 0.0) {
                return None;
            }
            ys.push(m.ln());
            ws.push(if se > 0.0 { (m / se).powi(2) } else { 1.0 });
        }
        let xs: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
        Some(weighted_linear_fit(&xs, &ys, &ws))
    };
    let refs: Vec<&[f64]> = samples.iter().map(|s| s.as_slice()).collect();
    let Some((slope, intercept)) = point(&refs) else {
        return Ok(None);
    };
    let mut rng = auxiliary_rng(seed, u64::MAX);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut buffers: Vec<Vec<f64>> = samples.iter().map(|s| vec![0.0; s.len()]).collect();
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for (buf, s) in buffers.iter_mut().zip(samples) {
            for v in buf.iter_mut() {
                *v = s[rng.random_range(0..s.len())];
            }
        }
        let refs: Vec<&[f64]> = buffers.iter().map(|b| b.as_slice()).collect();
        if let Some((s, _)) = point(&refs) {
            slopes.push(s);
        }
    }
    slopes.sort_by(|a, b| a.total_cmp(b));
    let (slope_lo, slope_hi) = if slopes.is_empty() { (f64::NAN, f64::NAN) } else { (quantile(&slopes, 0.025), quantile(&slopes, 0.975)) };
    Ok(Some(ConvergenceFit { slope, slope_lo, slope_hi, intercept }))
}

/// Model and averaged drift for one value of epsilon.
pub type ModelFamily<'a> = dyn Fn(f64) -> Result<(ModelSpec, AveragedDrift)> + Sync + 'a;

/// Simulation settings shared by every epsilon of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub t_final: f64,
    pub dt_rule: DtRule,
    pub replicas: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub init_fast_from_mu: bool,
    pub policy: RefinementPolicy,
}

impl SweepConfig {
    pub fn sim_config(&self, model: &ModelSpec) -> SimConfig {
        SimConfig {
            t_final: self.t_final,
            dt: self.dt_rule.dt(model.epsilon, self.t_final),
            substeps: 1,
            seed: self.seed,
            x0: self.x0.clone(),
            y0: self.y0.clone(),
            init_fast_from_mu: self.init_fast_from_mu,
        }
        .with_default_substeps(model)
    }
}

/// Strong error for each epsilon (at least 4, strictly decreasing, spanning
/// a factor of 8 or more) and the fitted log-log slope.
pub fn convergence_study(
    family: &ModelFamily<'_>,
    epsilons: &[f64],
    sweep: &SweepConfig,
    stopping: Option<&Stopping>,
) -> Result<ConvergenceReport> {
    if epsilons.len() < 4 {
        return Err(invalid("epsilons", "need at least 4 values"));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) || epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(invalid("epsilons", "must be positive and strictly decreasing"));
    }
    if epsilons[0] / epsilons[epsilons.len() - 1] < 8.0 * (1.0 - 1e-12) {
        return Err(invalid("epsilons", "must span at least a factor of 8"));
    }
    let mut results = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let (model, bbar) = family(eps)?;
        let cfg = sweep.sim_config(&model);
        results.push(strong_error(&model, &bbar, &cfg, sweep.replicas, stopping, sweep.policy)?);
    }
    report_from_results(results, sweep.seed)
}

fn report_from_results(results: Vec<StrongErrorResult>, seed: u64) -> Result<ConvergenceReport> {
    let eps: Vec<f64> = results.iter().map(|r| r.epsilon).collect();
    let samples: Vec<Vec<f64>> = results.iter().map(|r| r.samples.clone()).collect();
    let fit = fit_convergence(&eps, &samples, seed)?;
    Ok(ConvergenceReport { degenerate_errors: fit.is_none(), fit, results })
}

impl ConvergenceReport {
    /// Rows `epsilon,replicas,mean_sup_error,stderr,dt,substeps,seed`, then
    /// `slope`, `slope_lo`, `slope_hi`, `intercept` footer rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,replicas,mean_sup_error,stderr,dt,substeps,seed\n");
        for r in &self.results {
            let _ = writeln!(
                s,
                "{:.12e},{},{:.12e},{:.12e},{:.12e},{},{}",
                r.epsilon, r.replicas, r.mean_sup_error, r.stderr, r.dt, r.substeps, r.seed
            );
        }
        for (key, value) in self.footer() {
            let _ = writeln!(s, "{key},{}", value.map_or("degenerate".to_string(), |v| format!("{v:.12e}")));
        }
        s
    }

    fn footer(&self) -> [(&'static str, Option<f64>); 4] {
        let f = self.fit.as_ref();
        [
            ("slope", f.map(|f| f.slope)),
            ("slope_lo", f.map(|f| f.slope_lo)),
            ("slope_hi", f.map(|f| f.slope_hi)),
            ("intercept", f.map(|f| f.intercept)),
        ]
    }

    /// JSON mirror of [`ConvergenceReport::to_csv`] with identical keys.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .results
            .iter()
            .map(|r| {
                serde_json::json!({
                    "epsilon": r.epsilon,
                    "replicas": r.replicas,
                    "mean_sup_error": r.mean_sup_error,
                    "stderr": r.stderr,
                    "dt": r.dt,
                    "substeps": r.substeps,
                    "seed": r.seed,
                })
            })
            .collect();
        let mut obj = serde_json::Map::new();
        obj.insert("results".into(), serde_json::Value::Array(rows));
        for (key, value) in self.footer() {
            obj.insert(key.into(), value.map_or(serde_json::Value::Null, |v| serde_json::json!(v)));
        }
        obj.insert("degenerate_errors".into(), serde_json::Value::Bool(self.degenerate_errors));
        serde_json::Value::Object(obj)
    }
}

/// Strong error of the TAMD system stopped at the first exit from the
/// parameter domain. `bbar` should be trusted on the whole domain.
pub fn stopped_strong_error(
    tamd: &TamdModelParams,
    bbar: &AveragedDrift,
    epsilon: f64,
    cfg: &SimConfig,
    replicas: usize,
    own_exit: bool,
    policy: RefinementPolicy,
) -> Result<StrongErrorResult> {
    let model = tamd.model(epsilon)?;
    if !tamd.domain.contains(&cfg.y0) {
        return Err(invalid("y0", "must lie inside the domain"));
    }
    let stopping = Stopping { domain: tamd.domain.clone(), own_exit };
    strong_error(&model, bbar, cfg, replicas, Some(&stopping), policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearParams;
    use std::sync::Arc;

    fn params() -> LinearParams {
        LinearParams { kappa_x: 1.0, kappa_y: 1.0, sigma_x: 2f64.sqrt(), sigma_y: 2f64.sqrt() }
    }

    fn cfg(model: &ModelSpec, seed: u64) -> SimConfig {
        SimConfig {
            t_final: 1.0,
            dt: DtRule::proportional(0.1).dt(model.epsilon, 1.0),
            substeps: 1,
            seed,
            x0: vec![0.0],
            y0: vec![0.0],
            init_fast_from_mu: true,
        }
        .with_default_substeps(model)
    }

    fn zero_drift() -> AveragedDrift {
        AveragedDrift::analytic(1, |_, o| o[0] = 0.0)
    }

    #[test]
    fn x_independent_slow_drift_gives_exact_zero() {
        let mut m = params().model(1.0 / 16.0).unwrap();
        m.b_y = Arc::new(|_x, y, o| o[0] = -y[0].sin());
        let bbar = AveragedDrift::from_x_independent(&m);
        let r = strong_error(&m, &bbar, &cfg(&m, 1), 20, None, RefinementPolicy::Report).unwrap();
        assert_eq!(r.mean_sup_error, 0.0);
        assert!(r.samples.iter().all(|v| *v == 0.0));
        assert!(r.shared_by_stream);
    }

    #[test]
    fn identical_inputs_are_bit_identical() {
        let m = params().model(1.0 / 16.0).unwrap();
        let a = strong_error(&m, &zero_drift(), &cfg(&m, 3), 40, None, RefinementPolicy::Report).unwrap();
        let b = strong_error(&m, &zero_drift(), &cfg(&m, 3), 40, None, RefinementPolicy::Report).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn stderr_scales_like_clt() {
        let m = params().model(1.0 / 16.0).unwrap();
        let c = cfg(&m, 4);
        let a = strong_error(&m, &zero_drift(), &c, 400, None, RefinementPolicy::Skip).unwrap();
        let b = strong_error(&m, &zero_drift(), &c, 800, None, RefinementPolicy::Skip).unwrap();
        let ratio = a.stderr / b.stderr;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn refinement_ratio_is_near_one() {
        let m = params().model(1.0 / 16.0).unwrap();
        let r = strong_error(&m, &zero_drift(), &cfg(&m, 5), 200, None, RefinementPolicy::Enforce).unwrap();
        let ratio = r.dt_refinement_ratio.unwrap();
        assert!((ratio - 1.0).abs() <= 3.0 * r.dt_refinement_se.unwrap(), "{r:?}");
    }

    #[test]
    fn synthetic_power_law_is_fit_exactly() {
        let eps: Vec<f64> = (3..=8).map(|k| 2f64.powi(-k)).collect();
        let samples: Vec<Vec<f64>> = eps.iter().map(|e| vec![0.7 * e.sqrt(); 3]).collect();
        let fit = fit_convergence(&eps, &samples, 0).unwrap().unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-6);
        assert!((fit.intercept - 0.7f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn degenerate_errors_are_flagged() {
        let eps = [0.4, 0.2, 0.1, 0.05];
        let family = |e: f64| {
            let mut m = params().model(e)?;
            m.b_y = Arc::new(|_x, y, o| o[0] = -y[0]);
            let bbar = AveragedDrift::from_x_independent(&m);
            Ok((m, bbar))
        };
        let sweep = SweepConfig {
            t_final: 1.0,
            dt_rule: DtRule::proportional(0.1),
            replicas: 8,
            seed: 1,
            x0: vec![0.0],
            y0: vec![0.0],
            init_fast_from_mu: true,
            policy: RefinementPolicy::Report,
        };
        let report = convergence_study(&family, &eps, &sweep, None).unwrap();
        assert!(report.degenerate_errors && report.fit.is_none());
        assert!(report.to_csv().ends_with("intercept,degenerate\n"));
        assert_eq!(report.to_json()["slope"], serde_json::Value::Null);
    }

    #[test]
    fn sweep_grid_is_validated() {
        let family = |e: f64| Ok((params().model(e)?, zero_drift()));
        let sweep = SweepConfig {
            t_final: 1.0,
            dt_rule: DtRule::proportional(0.1),
            replicas: 8,
            seed: 1,
            x0: vec![0.0],
            y0: vec![0.0],
            init_fast_from_mu: true,
            policy: RefinementPolicy::Skip,
        };
        assert!(convergence_study(&family, &[0.4, 0.2, 0.1], &sweep, None).is_err());
        assert!(convergence_study(&family, &[0.4, 0.3, 0.2, 0.1], &sweep, None).is_err());
        assert!(convergence_study(&family, &[0.1, 0.2, 0.4, 0.8], &sweep, None).is_err());
    }

    #[test]
    fn dt_rule_divides_horizon() {
        let r = DtRule { factor: 0.1, cap: Some(0.01) };
        assert_eq!(r.dt(0.125, 1.0), 0.01);
        let dt = DtRule::proportional(0.3).dt(0.1, 1.0);
        assert!(dt <= 0.03 && ((1.0 / dt).round() * dt - 1.0).abs() < 1e-12);
    }

    fn tamd() -> TamdModelParams {
        TamdModelParams::one_dimensional(1.0, 2.0, 1.0, 1.0, BoxDomain::symmetric(1, 1e6).unwrap()).unwrap()
    }

    fn tamd_bbar() -> AveragedDrift {
        AveragedDrift::analytic(1, |y, o| o[0] = -y[0] / 1.5)
    }

    #[test]
    fn huge_domain_matches_unstopped_run() {
        let t = tamd();
        let m = t.model(1.0 / 16.0).unwrap();
        let c = cfg(&m, 6);
        let stopped = stopped_strong_error(&t, &tamd_bbar(), 1.0 / 16.0, &c, 30, false, RefinementPolicy::Skip).unwrap();
        let plain = strong_error(&m, &tamd_bbar(), &c, 30, None, RefinementPolicy::Skip).unwrap();
        assert_eq!(stopped.samples, plain.samples);
        assert_eq!(stopped.mean_sup_error, plain.mean_sup_error);
        assert_eq!(stopped.mean_exit_time, Some(1.0));
    }

    #[test]
    fn smaller_domain_exits_sooner() {
        let eps = 1.0 / 16.0;
        let run = |half: f64| {
            let mut t = tamd();
            t.domain = BoxDomain::symmetric(1, half).unwrap();
            let m = t.model(eps).unwrap();
            stopped_strong_error(&t, &tamd_bbar(), eps, &cfg(&m, 7), 400, false, RefinementPolicy::Skip).unwrap()
        };
        let (wide, narrow) = (run(1.0), run(0.5));
        assert!(narrow.mean_exit_time.unwrap() < wide.mean_exit_time.unwrap());
        assert!(narrow.mean_sup_error <= wide.mean_sup_error);
    }

    #[test]
    fn immediate_exits_are_rejected() {
        let eps = 1.0 / 16.0;
        let mut t = tamd();
        t.domain = BoxDomain::symmetric(1, 0.01).unwrap();
        let m = t.model(eps).unwrap();
        let err = stopped_strong_error(&t, &tamd_bbar(), eps, &cfg(&m, 8), 50, false, RefinementPolicy::Skip).unwrap_err();
        assert!(matches!(err, Error::ImmediateExit { .. }));
    }

    #[test]
    fn own_exit_flag_changes_only_stopped_paths() {
        let eps = 1.0 / 16.0;
        let mut t = tamd();
        t.domain = BoxDomain::symmetric(1, 0.8).unwrap();
        let m = t.model(eps).unwrap();
        let c = cfg(&m, 9);
        let sym = stopped_strong_error(&t, &tamd_bbar(), eps, &c, 200, false, RefinementPolicy::Skip).unwrap();
        let own = stopped_strong_error(&t, &tamd_bbar(), eps, &c, 200, true, RefinementPolicy::Skip).unwrap();
        for (a, b) in sym.samples.iter().zip(&own.samples) {
            assert!(b >= a);
        }
    }
}
