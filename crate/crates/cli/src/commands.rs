//! Subcommand bodies. Each returns its artifacts; nothing touches the disk here.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use slowfast::averaging::{gaussian61_averaged_drift, sample_theta_mu, tamd_drift, AveragedDrift, ErgodicOptions, Provenance};
use slowfast::constants::{
    admissible_p, averaging_app_constants, gamma_threshold, gamma_threshold_quoted, tamd_constants, theorem1_bound,
    timescale_gamma, AveragingAppConstants, CoefficientBounds, ConstantsReport, TheoremConstants,
};
use slowfast::decoupling::{check_exponential_moment, check_law_equivalence, mean_terminal_weight, PathFunctional};
use slowfast::diagnostics::{entropy_decay_curve, DecayMode, FastInitializer, MuDensity};
use slowfast::experiments::{convergence_study, ConvergenceReport, DtRule, Stopping, SweepConfig};
use slowfast::io::{read_theta_mu_samples, triple_csv, write_theta_mu_samples};
use slowfast::model::{
    AffineMap, AffineSlowDrift, BoundedPerturbation, BoxDomain, GradientModelParams, ModelSpec, TamdModelParams,
};
use slowfast::noise::{standard_normals, Channel, StreamId};
use slowfast::quadrature::QuadGrid;
use slowfast::sde::{simulate_triple, SimConfig};
use slowfast::{Error, Result};

use crate::config::{DriftMethod, EntropyMode, Family, Format, GradientScalar, RunConfig, TamdScalar};
use crate::output::{plot_data, Artifact, Plot, Series, Style};

type MeanFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type LogDensity = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Seed offsets for auxiliary randomness, so that no two uses share a stream.
const SEED_BBAR: u64 = 1;
const SEED_LIP: u64 = 2;
const SEED_THETA: u64 = 3;
const SEED_ENTROPY_INIT: u64 = 4;

fn gradient_params(g: &GradientScalar) -> Result<GradientModelParams> {
    let params = GradientModelParams {
        n: 1,
        m: 1,
        q: DMatrix::from_element(1, 1, g.q),
        g: AffineMap::new(DMatrix::from_element(1, 1, g.g_slope), DVector::from_element(1, g.g_offset))?,
        h: (g.h_amplitude != 0.0).then(|| BoundedPerturbation::cosine(1, g.h_amplitude, g.h_frequency)),
        beta_x: g.beta_x,
        beta_y: g.beta_y,
    };
    params.validate()?;
    Ok(params)
}

fn slow_drift(g: &GradientScalar) -> Result<AffineSlowDrift> {
    AffineSlowDrift::new(
        DMatrix::from_element(1, 1, g.by_x),
        DMatrix::from_element(1, 1, g.by_y),
        DVector::from_element(1, g.by_c),
    )
}

fn tamd_params(t: &TamdScalar) -> Result<TamdModelParams> {
    let domain = BoxDomain::new(vec![t.domain.0], vec![t.domain.1])?;
    let params = TamdModelParams::one_dimensional(t.v_stiffness, t.kappa, t.beta_bar, t.gamma_bar, domain)?;
    params.validate()?;
    Ok(params)
}

pub fn build_model(family: &Family, epsilon: f64) -> Result<ModelSpec> {
    match family {
        Family::Linear(p) => p.model(epsilon),
        Family::Gradient(g) => gradient_params(g)?.model(epsilon, slow_drift(g)?.drift()),
        Family::Tamd(t) => tamd_params(t)?.model(epsilon),
    }
}

/// `(mean(y), variance)` of a Gaussian `mu^y`, when the family has one.
fn gaussian_mu(family: &Family) -> Option<(MeanFn, f64)> {
    match family {
        Family::Linear(p) => Some((Arc::new(|y| y), p.frozen_variance())),
        Family::Gradient(g) if g.h_amplitude == 0.0 => {
            let (a, c) = (g.g_slope, g.g_offset);
            Some((Arc::new(move |y| a * y + c), 1.0 / (g.beta_x * g.q)))
        }
        Family::Gradient(_) => None,
        Family::Tamd(t) => {
            let (c, k) = (t.v_stiffness, t.kappa);
            Some((Arc::new(move |y| k * y / (c + k)), 1.0 / (c + k)))
        }
    }
}

/// Mixing rate of the frozen process in fast time.
fn fast_rate(family: &Family) -> f64 {
    match family {
        Family::Linear(p) => p.kappa_x,
        Family::Gradient(g) => g.q,
        Family::Tamd(t) => t.v_stiffness + t.kappa,
    }
}

fn y_range(cfg: &RunConfig) -> (f64, f64) {
    match &cfg.model.family {
        Family::Tamd(t) => t.domain,
        _ => (cfg.experiment.y_lo, cfg.experiment.y_hi),
    }
}

pub struct BbarBuild {
    pub drift: AveragedDrift,
    /// `theta # mu` samples and whether this run generated them.
    pub theta_samples: Option<(Vec<f64>, bool)>,
}

fn not_supported(what: &str) -> Error {
    Error::InvalidParameter { name: "experiment.method", reason: what.to_string() }
}

/// Averaged drift for the configured family and method. Non-analytic
/// drifts are tabulated on the `y` range (the domain for TAMD).
pub fn build_bbar(cfg: &RunConfig) -> Result<BbarBuild> {
    let family = &cfg.model.family;
    let model = build_model(family, cfg.model.epsilon)?;
    let ex = &cfg.experiment;
    let seed = cfg.sim.seed;
    let (lo, hi) = y_range(cfg);
    let method = match (ex.method, family) {
        (DriftMethod::Auto, Family::Gradient(g)) if g.h_amplitude != 0.0 => DriftMethod::Quadrature,
        (DriftMethod::Auto, Family::Tamd(_)) => DriftMethod::Tamd,
        (DriftMethod::Auto, _) => DriftMethod::Analytic,
        (m, _) => m,
    };
    let drift = match method {
        DriftMethod::Analytic => match family {
            Family::Linear(_) => AveragedDrift::analytic(1, |_, o| o[0] = 0.0),
            Family::Gradient(g) => {
                if g.h_amplitude != 0.0 {
                    return Err(not_supported("analytic averaged drift needs h_amplitude = 0"));
                }
                let params = gradient_params(g)?;
                let b_y = slow_drift(g)?.drift();
                AveragedDrift::new(
                    1,
                    Provenance::Analytic,
                    Arc::new(move |y, out| {
                        out.copy_from_slice(&gaussian61_averaged_drift(&params, &b_y, y)?);
                        Ok(())
                    }),
                )
            }
            Family::Tamd(t) => {
                let (c, k, gb) = (t.v_stiffness, t.kappa, t.gamma_bar);
                AveragedDrift::analytic(1, move |y, o| o[0] = -k * c * y[0] / ((c + k) * gb))
            }
        },
        DriftMethod::Quadrature => {
            let log_density: LogDensity = match family {
                Family::Linear(p) => {
                    let v = p.frozen_variance();
                    Arc::new(move |x, y| -0.5 * (x[0] - y[0]).powi(2) / v)
                }
                Family::Gradient(g) => {
                    let params = gradient_params(g)?;
                    let bx = g.beta_x;
                    Arc::new(move |x, y| -bx * params.potential(x, y))
                }
                Family::Tamd(t) => {
                    let (c, k) = (t.v_stiffness, t.kappa);
                    Arc::new(move |x, y| -0.5 * c * x[0] * x[0] - 0.5 * k * (x[0] - y[0]).powi(2))
                }
            };
            let grid = quadrature_grid(family, lo, hi)?;
            AveragedDrift::quadrature(&model, move |x, y| log_density(x, y).exp(), grid).tabulate_1d(lo, hi, ex.y_points)?
        }
        DriftMethod::Ergodic => {
            AveragedDrift::ergodic(&model, ErgodicOptions::defaults(fast_rate(family)), seed.wrapping_add(SEED_BBAR))
                .tabulate_1d(lo, hi, ex.y_points)?
        }
        DriftMethod::Tamd => {
            let Family::Tamd(t) = family else {
                return Err(not_supported("the tamd estimator needs model.family = \"tamd\""));
            };
            let params = tamd_params(t)?;
            let (samples, generated) = match &ex.theta_mu_file {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidParameter {
                        name: "experiment.theta_mu_file",
                        reason: format!("{}: {e}", path.display()),
                    })?;
                    let (samples, m) = read_theta_mu_samples(&text)?;
                    if m != 1 {
                        return Err(Error::InvalidParameter {
                            name: "experiment.theta_mu_file",
                            reason: format!("expected m = 1 samples, found m = {m}"),
                        });
                    }
                    (samples, false)
                }
                None => {
                    let s = sample_theta_mu(
                        &params,
                        ex.theta_samples,
                        ex.sampler_dt,
                        ex.sampler_burn_in,
                        ex.sampler_thin,
                        seed.wrapping_add(SEED_THETA),
                    )?;
                    (s, true)
                }
            };
            let drift = tamd_drift(&params, samples.clone())?.tabulate_1d(lo, hi, ex.y_points)?;
            return Ok(BbarBuild { drift, theta_samples: Some((samples, generated)) });
        }
        DriftMethod::Auto => unreachable!("resolved above"),
    };
    Ok(BbarBuild { drift, theta_samples: None })
}

/// Box in `x` covering `mu^y` for every `y` in `[lo, hi]` with 12 standard
/// deviations to spare.
fn quadrature_grid(family: &Family, lo: f64, hi: f64) -> Result<QuadGrid> {
    let (mean, var): (Box<dyn Fn(f64) -> f64>, f64) = match family {
        Family::Linear(p) => (Box::new(|y| y), p.frozen_variance()),
        Family::Gradient(g) => {
            let (a, c) = (g.g_slope, g.g_offset);
            (Box::new(move |y| a * y + c), 1.0 / (g.beta_x * g.q))
        }
        Family::Tamd(t) => {
            let (c, k) = (t.v_stiffness, t.kappa);
            (Box::new(move |y| k * y / (c + k)), 1.0 / (c + k))
        }
    };
    let (a, b) = (mean(lo), mean(hi));
    let pad = 12.0 * var.sqrt() + 1.0;
    QuadGrid::uniform_1d(a.min(b) - pad, a.max(b) + pad, 4000)
}

pub fn sim_config(cfg: &RunConfig, model: &ModelSpec) -> SimConfig {
    let s = &cfg.sim;
    let rule = DtRule { factor: cfg.experiment.dt_factor, cap: cfg.experiment.dt_cap };
    let mut c = SimConfig {
        t_final: s.t_final,
        dt: s.dt.unwrap_or_else(|| rule.dt(model.epsilon, s.t_final)),
        substeps: 1,
        seed: s.seed,
        x0: s.x0.clone(),
        y0: s.y0.clone(),
        init_fast_from_mu: s.init_fast_from_mu.unwrap_or(model.mu_sampler.is_some()),
    }
    .with_default_substeps(model);
    if let Some(k) = s.substeps {
        c.substeps = k;
    }
    c
}

fn wants(cfg: &RunConfig, f: Format) -> bool {
    cfg.output.formats.contains(&f)
}

pub fn simulate(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let model = build_model(&cfg.model.family, cfg.model.epsilon)?;
    let sc = sim_config(cfg, &model);
    let triple = simulate_triple(&model, &sc)?;
    let mut out = Vec::new();
    if wants(cfg, Format::Csv) {
        out.push(Artifact::text("trajectory.csv", triple_csv(&triple)));
    }
    let base = &triple.base;
    let last = base.len() - 1;
    if wants(cfg, Format::Json) {
        out.push(Artifact::json(
            "simulate.json",
            &json!({
                "epsilon": model.epsilon,
                "t_final": sc.t_final,
                "dt": sc.dt,
                "substeps": sc.substeps,
                "steps": last,
                "seed": sc.seed,
                "x_final": base.x_at(last),
                "y_final": base.y_at(last),
                "xtilde_final": triple.xtilde_at(last),
            }),
        ));
    }
    if wants(cfg, Format::SvgPlotdata) {
        let rows: Vec<Vec<f64>> = (0..base.len()).map(|k| vec![base.times[k], base.x_at(k)[0], base.y_at(k)[0]]).collect();
        out.push(Artifact::text("trajectory.dat", plot_data(&["t", "x0", "y0"], &rows)));
        let plot = Plot {
            title: format!("trajectory, eps = {}", model.epsilon),
            x_label: "t".into(),
            y_label: "state".into(),
            log_x: false,
            log_y: false,
            series: vec![
                Series { label: "x".into(), points: rows.iter().map(|r| (r[0], r[1])).collect(), style: Style::Line },
                Series { label: "y".into(), points: rows.iter().map(|r| (r[0], r[2])).collect(), style: Style::Line },
            ],
        };
        out.push(Artifact::text("trajectory.svg", plot.to_svg()));
    }
    Ok(out)
}

fn y_nodes(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect()
}

fn drift_artifacts(cfg: &RunConfig, build: &BbarBuild, prefix: &str) -> Result<Vec<Artifact>> {
    let (lo, hi) = y_range(cfg);
    let ys = y_nodes(lo, hi, cfg.experiment.y_points);
    let mut values = Vec::with_capacity(ys.len());
    for &y in &ys {
        values.push(build.drift.eval(&[y])?[0]);
    }
    let lip = build.drift.estimate_lipschitz(&[lo], &[hi], 1000, cfg.sim.seed.wrapping_add(SEED_LIP))?;
    let mut out = Vec::new();
    if let Some((samples, true)) = &build.theta_samples {
        out.push(Artifact::text("theta_mu_samples.txt", write_theta_mu_samples(samples, 1)?));
    }
    if wants(cfg, Format::Csv) {
        let mut s = String::from("y,bbar\n");
        for (y, v) in ys.iter().zip(&values) {
            s.push_str(&format!("{y:.12e},{v:.12e}\n"));
        }
        out.push(Artifact::text(&format!("{prefix}.csv"), s));
    }
    if wants(cfg, Format::Json) {
        out.push(Artifact::json(
            &format!("{prefix}.json"),
            &json!({
                "provenance": build.drift.provenance,
                "y_lo": lo,
                "y_hi": hi,
                "points": ys.len(),
                "lipschitz_estimate": lip,
                "error_estimate": build.drift.error_estimate,
                "theta_mu_samples": build.theta_samples.as_ref().map(|(s, _)| s.len()),
                "y": ys,
                "bbar": values,
            }),
        ));
    }
    if wants(cfg, Format::SvgPlotdata) {
        let rows: Vec<Vec<f64>> = ys.iter().zip(&values).map(|(y, v)| vec![*y, *v]).collect();
        out.push(Artifact::text(&format!("{prefix}.dat"), plot_data(&["y", "bbar"], &rows)));
        let plot = Plot {
            title: "averaged drift".into(),
            x_label: "y".into(),
            y_label: "bbar(y)".into(),
            log_x: false,
            log_y: false,
            series: vec![Series { label: "bbar".into(), points: rows.iter().map(|r| (r[0], r[1])).collect(), style: Style::Line }],
        };
        out.push(Artifact::text(&format!("{prefix}.svg"), plot.to_svg()));
    }
    Ok(out)
}

pub fn average(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let build = build_bbar(cfg)?;
    drift_artifacts(cfg, &build, "averaged_drift")
}

fn push_opt(r: &mut ConstantsReport, name: &str, v: Option<f64>) {
    r.push(name, v.unwrap_or(f64::NAN));
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Gradient-family view of the linear and gradient families, with
/// `sup |grad_x b_Y|` and the default `c_V = beta_X q g^2`.
fn app_constants(cfg: &RunConfig) -> Result<(AveragingAppConstants, f64)> {
    let eps = cfg.model.epsilon;
    let (params, sup_grad_by, lip_dyv) = match &cfg.model.family {
        Family::Linear(p) => {
            let gp = p.gradient_params();
            let lip = gp.beta_x * p.kappa_x;
            (gp, p.kappa_y, lip)
        }
        Family::Gradient(g) => (gradient_params(g)?, slow_drift(g)?.grad_x_sup(), g.beta_x * g.q * g.g_slope.abs()),
        Family::Tamd(_) => unreachable!("tamd has its own constants"),
    };
    let c_v = cfg.experiment.c_v.unwrap_or(lip_dyv * params.g.matrix[(0, 0)].abs());
    let app = averaging_app_constants(&params, eps, sup_grad_by, params.grad_h_sup(), c_v)?;
    Ok((app, lip_dyv))
}

fn tamd_bounds(t: &TamdScalar, eps: f64) -> Result<CoefficientBounds> {
    let tc = tamd_constants(&tamd_params(t)?, eps)?;
    Ok(CoefficientBounds {
        n: 1,
        m: 1,
        kappa_x: tc.kappa_x,
        alpha: tc.alpha,
        kappa_y: tc.kappa_y_sq_bound.sqrt(),
        lambda_x: tc.big_lambda_x,
        big_lambda_x: tc.big_lambda_x,
        lambda_bar_x: tc.big_lambda_x,
        lambda_y: tc.lambda_y,
        big_lambda_y: tc.lambda_y,
        c_p: 0.0,
        c_l: 0.0,
        c_v: tc.c_v_sq_bound.sqrt(),
        lip_bbar: 0.0,
    })
}

/// Coefficient bounds used for `gamma`, the exponential-moment bound and
/// the strong-error bound.
fn coefficient_bounds(cfg: &RunConfig, lip_bbar: f64) -> Result<CoefficientBounds> {
    match &cfg.model.family {
        Family::Tamd(t) => tamd_bounds(t, cfg.model.epsilon),
        _ => {
            let (app, _) = app_constants(cfg)?;
            Ok(app.bounds(cfg.experiment.c_p.unwrap_or(app.c_l), lip_bbar))
        }
    }
}

fn constants_report(cfg: &RunConfig) -> Result<ConstantsReport> {
    let eps = cfg.model.epsilon;
    let ex = &cfg.experiment;
    let mut r = ConstantsReport::default();
    r.push("epsilon", eps);

    let (bounds, app, psi_sup) = match &cfg.model.family {
        Family::Tamd(t) => {
            let tc = tamd_constants(&tamd_params(t)?, eps)?;
            r.push("kappa_y_sq_bound", tc.kappa_y_sq_bound);
            r.push("c_v_sq_bound", tc.c_v_sq_bound);
            r.push("eps_threshold", tc.eps_threshold);
            (tamd_bounds(t, eps)?, None, None)
        }
        _ => {
            let (app, lip_dyv) = app_constants(cfg)?;
            let (lo, hi) = (ex.y_lo, ex.y_hi);
            let bbar = build_bbar(cfg)?.drift;
            let lip_bbar = match ex.lip_bbar {
                Some(l) => l,
                None => bbar.estimate_lipschitz(&[lo], &[hi], 1000, cfg.sim.seed.wrapping_add(SEED_LIP))?,
            };
            let mut psi_sup = 0.0f64;
            for y in y_nodes(lo, hi, ex.y_points) {
                let b = bbar.eval(&[y])?[0];
                psi_sup = psi_sup.max(app.psi_bound(b * b, lip_dyv * lip_dyv));
            }
            let bounds = app.bounds(ex.c_p.unwrap_or(app.c_l), lip_bbar);
            (bounds, Some(app), Some(psi_sup))
        }
    };

    let gamma = timescale_gamma(&bounds)?;
    let adm = admissible_p(gamma)?;
    r.push("gamma", gamma);
    r.push("gamma_threshold", gamma_threshold());
    r.push("gamma_threshold_quoted", gamma_threshold_quoted());
    r.push("novikov_ok", flag(adm.novikov_ok));
    r.push("theorem_applicable", flag(adm.theorem_applicable));
    r.push("p", ex.p);
    r.push("p_max", adm.p_max);
    let beta = ex.beta.unwrap_or(gamma / 8.0);
    let tc = TheoremConstants::evaluate(&bounds, ex.p, beta)?;
    push_opt(&mut r, "p_prime", tc.p_prime);
    r.push("p_minus", tc.p_minus);
    r.push("p_plus", tc.p_plus);
    push_opt(&mut r, "q_minus", tc.q_minus);
    push_opt(&mut r, "q_plus", tc.q_plus);
    r.push("beta", beta);
    r.push("r_minus", tc.r_minus);
    r.push("r_plus", tc.r_plus);
    r.push("exp_moment_bound", slowfast::constants::exp_moment_bound(&bounds, beta, cfg.sim.t_final)?.bound);
    r.push("kappa_x", bounds.kappa_x);
    r.push("alpha", bounds.alpha);
    r.push("lambda_x", bounds.lambda_x);
    r.push("big_lambda_x", bounds.big_lambda_x);
    r.push("kappa_y", bounds.kappa_y);
    r.push("lambda_y", bounds.lambda_y);

    if let (Some(app), Some(psi_sup)) = (app, psi_sup) {
        r.push("c_p", bounds.c_p);
        r.push("c_l", bounds.c_l);
        r.push("c_v", bounds.c_v);
        r.push("lip_bbar", bounds.lip_bbar);
        r.push("C1", app.c1);
        r.push("C2", app.c2);
        r.push("C3", app.c3);
        r.push("c2_le_one", flag(app.c2_le_one));
        r.push("eps_threshold_c2", app.eps_threshold_c2);
        r.push("eps_threshold_c2_exact", app.eps_threshold_c2_exact);
        r.push("psi_sup", psi_sup);
        let psi_integral = ex.psi_integral.unwrap_or(cfg.sim.t_final * psi_sup);
        r.push("psi_integral", psi_integral);
        // Outside the theorem's regime the bound is undefined, not an error.
        let bound = match theorem1_bound(&bounds, cfg.sim.t_final, ex.p, psi_integral) {
            Ok(b) => b,
            Err(e) if is_regime(&e) => f64::NAN,
            Err(e) => return Err(e),
        };
        r.push("theorem1_bound", bound);
    }
    Ok(r)
}

pub fn is_regime(e: &Error) -> bool {
    matches!(
        e,
        Error::NovikovRegime { .. }
            | Error::PNotAdmissible { .. }
            | Error::BetaTooLarge { .. }
            | Error::DenominatorNonpositive { .. }
    )
}

pub fn constants(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let r = constants_report(cfg)?;
    let mut out = vec![Artifact::text("constants.txt", r.to_key_value())];
    if wants(cfg, Format::Csv) {
        let mut s = String::from("name,value\n");
        for (k, v) in &r.entries {
            s.push_str(&format!("{k},{v:.12e}\n"));
        }
        out.push(Artifact::text("constants.csv", s));
    }
    if wants(cfg, Format::Json) {
        out.push(Artifact::json("constants.json", &r.to_json()));
    }
    Ok(out)
}

fn sweep_config(cfg: &RunConfig) -> SweepConfig {
    SweepConfig {
        t_final: cfg.sim.t_final,
        dt_rule: DtRule { factor: cfg.experiment.dt_factor, cap: cfg.experiment.dt_cap },
        replicas: cfg.experiment.replicas,
        seed: cfg.sim.seed,
        x0: cfg.sim.x0.clone(),
        y0: cfg.sim.y0.clone(),
        init_fast_from_mu: cfg.sim.init_fast_from_mu.unwrap_or(gaussian_mu(&cfg.model.family).is_some()),
        policy: cfg.experiment.refinement,
    }
}

fn run_sweep(cfg: &RunConfig, bbar: &AveragedDrift) -> Result<ConvergenceReport> {
    let family = cfg.model.family.clone();
    let stopping = match &family {
        Family::Tamd(t) => {
            let domain = BoxDomain::new(vec![t.domain.0], vec![t.domain.1])?;
            if !domain.contains(&cfg.sim.y0) {
                return Err(Error::InvalidParameter { name: "sim.y0", reason: "must lie inside the domain".into() });
            }
            Some(Stopping { domain, own_exit: cfg.experiment.own_exit })
        }
        _ => None,
    };
    let make = |eps: f64| Ok((build_model(&family, eps)?, bbar.clone()));
    convergence_study(&make, &cfg.experiment.epsilons, &sweep_config(cfg), stopping.as_ref())
}

fn convergence_artifacts(cfg: &RunConfig, report: &ConvergenceReport, prefix: &str) -> Vec<Artifact> {
    let mut out = Vec::new();
    if wants(cfg, Format::Csv) {
        out.push(Artifact::text(&format!("{prefix}.csv"), report.to_csv()));
    }
    if wants(cfg, Format::Json) {
        out.push(Artifact::json(&format!("{prefix}.json"), &report.to_json()));
    }
    if wants(cfg, Format::SvgPlotdata) {
        let fit_at = |e: f64| report.fit.as_ref().map_or(f64::NAN, |f| (f.intercept + f.slope * e.ln()).exp());
        let rows: Vec<Vec<f64>> =
            report.results.iter().map(|r| vec![r.epsilon, r.mean_sup_error, r.stderr, fit_at(r.epsilon)]).collect();
        out.push(Artifact::text(
            &format!("{prefix}.dat"),
            plot_data(&["epsilon", "mean_sup_error", "stderr", "fit"], &rows),
        ));
        let mut series =
            vec![Series { label: "E sup |Y - Ybar|".into(), points: rows.iter().map(|r| (r[0], r[1])).collect(), style: Style::Markers }];
        if let Some(f) = &report.fit {
            series.push(Series {
                label: format!("fit, slope {:.3}", f.slope),
                points: rows.iter().map(|r| (r[0], r[3])).collect(),
                style: Style::Line,
            });
        }
        let plot = Plot {
            title: "strong averaging error".into(),
            x_label: "epsilon".into(),
            y_label: "mean sup error".into(),
            log_x: true,
            log_y: true,
            series,
        };
        out.push(Artifact::text(&format!("{prefix}.svg"), plot.to_svg()));
    }
    out
}

pub fn converge(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let build = build_bbar(cfg)?;
    let report = run_sweep(cfg, &build.drift)?;
    let mut out = convergence_artifacts(cfg, &report, "convergence");
    if let Some((samples, true)) = &build.theta_samples {
        out.push(Artifact::text("theta_mu_samples.txt", write_theta_mu_samples(samples, 1)?));
    }
    Ok(out)
}

pub fn tamd(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    if !matches!(cfg.model.family, Family::Tamd(_)) {
        return Err(Error::InvalidParameter { name: "model.family", reason: "the tamd subcommand needs family = \"tamd\"".into() });
    }
    let build = build_bbar(cfg)?;
    let report = run_sweep(cfg, &build.drift)?;
    let mut out = drift_artifacts(cfg, &build, "averaged_drift")?;
    out.extend(convergence_artifacts(cfg, &report, "tamd_convergence"));
    Ok(out)
}

pub fn decouple_check(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let eps = cfg.model.epsilon;
    let ex = &cfg.experiment;
    let bounds = coefficient_bounds(cfg, ex.lip_bbar.unwrap_or(0.0))?;
    let gamma = timescale_gamma(&bounds)?;
    if !(gamma > slowfast::constants::NOVIKOV_GAMMA) {
        return Err(Error::NovikovRegime { gamma });
    }
    let beta = ex.beta.unwrap_or(gamma / 8.0);
    let model = build_model(&cfg.model.family, eps)?;
    let sc = sim_config(cfg, &model);
    let (mean_w, se_w) = mean_terminal_weight(&model, &sc, ex.replicas)?;
    let em = check_exponential_moment(&model, &bounds, beta, &sc, ex.replicas)?;
    let rows = check_law_equivalence(&model, &sc, gamma, &PathFunctional::defaults(), ex.replicas)?;

    let mut out = Vec::new();
    if wants(cfg, Format::Csv) {
        let mut s = String::from("functional_id,lhs,rhs,pooled_se,pass\n");
        for r in &rows {
            s.push_str(&format!("{},{:.12e},{:.12e},{:.12e},{}\n", r.functional_id, r.lhs, r.rhs, r.pooled_se, r.pass));
        }
        out.push(Artifact::text("law_equivalence.csv", s));
    }
    if wants(cfg, Format::Json) {
        out.push(Artifact::json(
            "decouple_check.json",
            &json!({
                "epsilon": eps,
                "gamma": gamma,
                "replicas": ex.replicas,
                "mean_terminal_weight": mean_w,
                "mean_terminal_weight_se": se_w,
                "weight_within_3se": (mean_w - 1.0).abs() <= 3.0 * se_w,
                "exp_moment": em,
                "law_equivalence": rows,
            }),
        ));
    }
    Ok(out)
}

pub fn entropy(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let ex = &cfg.experiment;
    let family = &cfg.model.family;
    let (mean, var) = gaussian_mu(family).ok_or_else(|| Error::InvalidParameter {
        name: "model.h_amplitude",
        reason: "entropy curves need a Gaussian mu^y (h_amplitude = 0)".into(),
    })?;
    let model = build_model(family, cfg.model.epsilon)?;
    let sd = var.sqrt();
    let norm = 1.0 / (2.0 * PI * var).sqrt();
    let mu_mean = mean.clone();
    let mu: MuDensity = Arc::new(move |x: &[f64], y: &[f64]| norm * (-0.5 * (x[0] - mu_mean(y[0])).powi(2) / var).exp());

    let t_final = *ex.checkpoints.last().expect("validated nonempty");
    let sc = SimConfig {
        t_final,
        dt: ex.entropy_dt,
        substeps: 1,
        seed: cfg.sim.seed,
        x0: cfg.sim.x0.clone(),
        y0: cfg.sim.y0.clone(),
        init_fast_from_mu: cfg.sim.init_fast_from_mu.unwrap_or(model.mu_sampler.is_some()),
    }
    .with_default_substeps(&model);
    let mode = match ex.entropy_mode {
        EntropyMode::Frozen => {
            let y = ex.y.unwrap_or(cfg.sim.y0[0]);
            let start = mean(y) + ex.init_shift;
            let seed = cfg.sim.seed.wrapping_add(SEED_ENTROPY_INIT);
            let init: FastInitializer = Arc::new(move |r, x| {
                x[0] = start + sd * standard_normals(seed, StreamId::new(r, Channel::Init), 1)[0];
            });
            DecayMode::Frozen { y: vec![y], init: Some(init) }
        }
        EntropyMode::Coupled => DecayMode::Coupled,
    };
    let curve = entropy_decay_curve(&model, &mode, &mu, ex.ensemble, &ex.checkpoints, &sc)?;

    let mut out = Vec::new();
    if wants(cfg, Format::Csv) {
        out.push(Artifact::text("entropy.csv", curve.to_csv()));
    }
    if wants(cfg, Format::Json) {
        let mode_name = match ex.entropy_mode {
            EntropyMode::Frozen => "frozen",
            EntropyMode::Coupled => "coupled",
        };
        let mut v: Value = serde_json::to_value(&curve).expect("curve serializes");
        v["mode"] = json!(mode_name);
        v["ensemble"] = json!(ex.ensemble);
        out.push(Artifact::json("entropy.json", &v));
    }
    if wants(cfg, Format::SvgPlotdata) {
        let rows: Vec<Vec<f64>> = curve.points.iter().map(|p| vec![p.t, p.h_hat, p.se]).collect();
        out.push(Artifact::text("entropy.dat", plot_data(&["t", "H_hat", "se"], &rows)));
        let plot = Plot {
            title: "relative entropy to mu^y".into(),
            x_label: "t".into(),
            y_label: "H".into(),
            log_x: false,
            log_y: true,
            series: vec![Series { label: "H_hat".into(), points: rows.iter().map(|r| (r[0], r[1])).collect(), style: Style::Markers }],
        };
        out.push(Artifact::text("entropy.svg", plot.to_svg()));
    }
    Ok(out)
}
