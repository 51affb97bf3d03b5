//! Strict TOML run configuration. Every problem found is collected, so a
//! broken file is reported in one pass.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use toml::{Table, Value};

use slowfast::experiments::RefinementPolicy;
use slowfast::model::LinearParams;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Format {
    Csv,
    Json,
    SvgPlotdata,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Self::Csv),
            "json" => Some(Self::Json),
            "svg-plotdata" => Some(Self::SvgPlotdata),
            _ => None,
        }
    }
}

/// Quadratic gradient family in one fast and one slow dimension:
/// `V = q (x - g_slope y - g_offset)^2 / 2 + h_amplitude cos(h_frequency x)`,
/// `b_Y = by_x x + by_y y + by_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientScalar {
    pub q: f64,
    pub g_slope: f64,
    pub g_offset: f64,
    pub beta_x: f64,
    pub beta_y: f64,
    pub h_amplitude: f64,
    pub h_frequency: f64,
    pub by_x: f64,
    pub by_y: f64,
    pub by_c: f64,
}

/// TAMD with `theta(x) = x` and `V = v_stiffness x^2 / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TamdScalar {
    pub v_stiffness: f64,
    pub kappa: f64,
    pub beta_bar: f64,
    pub gamma_bar: f64,
    pub domain: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Linear(LinearParams),
    Gradient(GradientScalar),
    Tamd(TamdScalar),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub family: Family,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSection {
    pub t_final: f64,
    /// `None` applies the experiment's dt rule at the model epsilon.
    pub dt: Option<f64>,
    pub substeps: Option<usize>,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    /// `None` draws from `mu^y` whenever the family has a sampler for it.
    pub init_fast_from_mu: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftMethod {
    Auto,
    Analytic,
    Quadrature,
    Ergodic,
    Tamd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyMode {
    Frozen,
    Coupled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSection {
    pub epsilons: Vec<f64>,
    pub replicas: usize,
    pub dt_factor: f64,
    pub dt_cap: Option<f64>,
    pub refinement: RefinementPolicy,
    pub own_exit: bool,
    pub beta: Option<f64>,
    pub p: f64,
    pub c_p: Option<f64>,
    pub c_v: Option<f64>,
    pub lip_bbar: Option<f64>,
    pub psi_integral: Option<f64>,
    pub method: DriftMethod,
    pub y_lo: f64,
    pub y_hi: f64,
    pub y_points: usize,
    pub y: Option<f64>,
    pub entropy_mode: EntropyMode,
    pub ensemble: usize,
    pub checkpoints: Vec<f64>,
    pub entropy_dt: f64,
    pub init_shift: f64,
    pub theta_samples: usize,
    pub sampler_dt: f64,
    pub sampler_thin: usize,
    pub sampler_burn_in: usize,
    pub theta_mu_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSection,
    pub sim: SimSection,
    pub experiment: ExperimentSection,
    pub output: OutputSection,
}

/// Reads typed values from one table and remembers which keys were used.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    used: BTreeSet<&'static str>,
    errors: &'a mut Vec<ConfigError>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'static str, errors: &'a mut Vec<ConfigError>) -> Self {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                errors.push(ConfigError { path: name.into(), reason: "must be a table".into() });
                None
            }
        };
        Self { name, table, used: BTreeSet::new(), errors }
    }

    fn err(&mut self, key: &str, reason: impl Into<String>) {
        self.errors.push(ConfigError { path: format!("{}.{key}", self.name), reason: reason.into() });
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Value> {
        self.used.insert(key);
        self.table.and_then(|t| t.get(key))
    }

    fn f64_opt(&mut self, key: &'static str) -> Option<f64> {
        match self.raw(key)? {
            Value::Float(v) if v.is_finite() => Some(*v),
            Value::Integer(v) => Some(*v as f64),
            _ => {
                self.err(key, "expected a finite number");
                None
            }
        }
    }

    fn f64_or(&mut self, key: &'static str, default: f64) -> f64 {
        self.f64_opt(key).unwrap_or(default)
    }

    fn positive(&mut self, key: &'static str, default: f64) -> f64 {
        let v = self.f64_or(key, default);
        if !(v > 0.0) {
            self.err(key, "must be positive");
        }
        v
    }

    fn positive_opt(&mut self, key: &'static str) -> Option<f64> {
        let v = self.f64_opt(key)?;
        if !(v > 0.0) {
            self.err(key, "must be positive");
        }
        Some(v)
    }

    fn nonnegative_opt(&mut self, key: &'static str) -> Option<f64> {
        let v = self.f64_opt(key)?;
        if !(v >= 0.0) {
            self.err(key, "must be nonnegative");
        }
        Some(v)
    }

    fn int_opt(&mut self, key: &'static str, min: i64) -> Option<i64> {
        match self.raw(key)? {
            Value::Integer(v) if *v >= min => Some(*v),
            Value::Integer(_) => {
                self.err(key, format!("must be at least {min}"));
                None
            }
            _ => {
                self.err(key, "expected an integer");
                None
            }
        }
    }

    fn usize_or(&mut self, key: &'static str, default: usize, min: usize) -> usize {
        self.int_opt(key, min as i64).map_or(default, |v| v as usize)
    }

    fn bool_or(&mut self, key: &'static str, default: bool) -> bool {
        match self.raw(key) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(_) => {
                self.err(key, "expected true or false");
                default
            }
        }
    }

    fn str_opt(&mut self, key: &'static str) -> Option<&'a str> {
        match self.raw(key)? {
            Value::String(s) => Some(s.as_str()),
            _ => {
                self.err(key, "expected a string");
                None
            }
        }
    }

    fn f64_list(&mut self, key: &'static str) -> Option<Vec<f64>> {
        let Value::Array(items) = self.raw(key)? else {
            self.err(key, "expected an array of numbers");
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        for v in items {
            match v {
                Value::Float(f) if f.is_finite() => out.push(*f),
                Value::Integer(i) => out.push(*i as f64),
                _ => {
                    self.err(key, "expected an array of finite numbers");
                    return None;
                }
            }
        }
        Some(out)
    }

    fn str_list(&mut self, key: &'static str) -> Option<Vec<&'a str>> {
        let Value::Array(items) = self.raw(key)? else {
            self.err(key, "expected an array of strings");
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        for v in items {
            let Value::String(s) = v else {
                self.err(key, "expected an array of strings");
                return None;
            };
            out.push(s.as_str());
        }
        Some(out)
    }

    /// Reports every key of the table that no accessor asked for.
    fn finish(self) {
        let Some(t) = self.table else { return };
        for key in t.keys() {
            if !self.used.contains(key.as_str()) {
                self.errors.push(ConfigError { path: format!("{}.{key}", self.name), reason: "unknown key".into() });
            }
        }
    }
}

const SECTIONS: [&str; 4] = ["model", "sim", "experiment", "output"];

/// Parses and validates a configuration. Relative paths are resolved
/// against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig, Vec<ConfigError>> {
    let root: Table = match text.parse() {
        Ok(t) => t,
        Err(e) => return Err(vec![ConfigError { path: "<document>".into(), reason: e.to_string() }]),
    };
    let mut errors = Vec::new();
    for key in root.keys() {
        if !SECTIONS.contains(&key.as_str()) {
            errors.push(ConfigError { path: key.clone(), reason: "unknown section".into() });
        }
    }

    let model = parse_model(&root, &mut errors);
    let sim = parse_sim(&root, &mut errors);
    let experiment = parse_experiment(&root, base_dir, &mut errors);
    let output = parse_output(&root, base_dir, &mut errors);

    match (model, sim) {
        (Some(model), Some(sim)) if errors.is_empty() => Ok(RunConfig { model, sim, experiment, output }),
        _ => Err(errors),
    }
}

fn parse_model(root: &Table, errors: &mut Vec<ConfigError>) -> Option<ModelSection> {
    let mut s = Section::new(root, "model", errors);
    let family_name = s.str_opt("family");
    let epsilon = s.positive("epsilon", 1.0 / 32.0);
    let family = match family_name {
        Some("linear") => {
            let p = LinearParams {
                kappa_x: s.positive("kappa_x", 1.0),
                kappa_y: s.f64_or("kappa_y", 1.0),
                sigma_x: s.f64_or("sigma_x", 2f64.sqrt()),
                sigma_y: s.positive("sigma_y", 2f64.sqrt()),
            };
            if p.kappa_y < 0.0 {
                s.err("kappa_y", "must be nonnegative");
            }
            if p.sigma_x < 0.0 {
                s.err("sigma_x", "must be nonnegative");
            }
            Some(Family::Linear(p))
        }
        Some("gradient") => Some(Family::Gradient(GradientScalar {
            q: s.positive("q", 1.0),
            g_slope: s.f64_or("g_slope", 1.0),
            g_offset: s.f64_or("g_offset", 0.0),
            beta_x: s.positive("beta_x", 1.0),
            beta_y: s.positive("beta_y", 1.0),
            h_amplitude: s.f64_or("h_amplitude", 0.0),
            h_frequency: s.f64_or("h_frequency", 1.0),
            by_x: s.f64_or("by_x", 1.0),
            by_y: s.f64_or("by_y", -1.0),
            by_c: s.f64_or("by_c", 0.0),
        })),
        Some("tamd") => {
            let v_stiffness = s.f64_or("v_stiffness", 1.0);
            if v_stiffness < 0.0 {
                s.err("v_stiffness", "must be nonnegative");
            }
            let kappa = s.positive("kappa", 2.0);
            if kappa <= 1.0 {
                s.err("kappa", "must exceed 1 (lambda_theta kappa > Lambda_theta / beta with beta = 1)");
            }
            let domain = match s.f64_list("domain") {
                None => (-3.0, 3.0),
                Some(d) if d.len() == 2 && d[0] < d[1] => (d[0], d[1]),
                Some(_) => {
                    s.err("domain", "expected [lo, hi] with lo < hi");
                    (-3.0, 3.0)
                }
            };
            Some(Family::Tamd(TamdScalar {
                v_stiffness,
                kappa,
                beta_bar: s.positive("beta_bar", 1.0),
                gamma_bar: s.positive("gamma_bar", 1.0),
                domain,
            }))
        }
        Some(other) => {
            s.err("family", format!("unknown family `{other}` (expected linear, gradient or tamd)"));
            None
        }
        None => {
            s.err("family", "required");
            None
        }
    };
    s.finish();
    family.map(|family| ModelSection { family, epsilon })
}

fn parse_sim(root: &Table, errors: &mut Vec<ConfigError>) -> Option<SimSection> {
    let mut s = Section::new(root, "sim", errors);
    let t_final = s.positive("t_final", 1.0);
    let dt = s.positive_opt("dt");
    if let Some(dt) = dt {
        if dt > t_final {
            s.err("dt", "must not exceed t_final");
        }
    }
    let substeps = s.int_opt("substeps", 1).map(|v| v as usize);
    let seed = match s.raw("seed") {
        Some(Value::Integer(v)) if *v >= 0 => Some(*v as u64),
        Some(_) => {
            s.err("seed", "expected a nonnegative integer");
            None
        }
        None => {
            s.err("seed", "required");
            None
        }
    };
    let x0 = s.f64_list("x0").unwrap_or_else(|| vec![0.0]);
    let y0 = s.f64_list("y0").unwrap_or_else(|| vec![0.0]);
    if x0.len() != 1 {
        s.err("x0", "expected one component");
    }
    if y0.len() != 1 {
        s.err("y0", "expected one component");
    }
    let init_fast_from_mu = match s.raw("init_fast_from_mu") {
        None => None,
        Some(Value::Boolean(b)) => Some(*b),
        Some(_) => {
            s.err("init_fast_from_mu", "expected true or false");
            None
        }
    };
    s.finish();
    Some(SimSection { t_final, dt, substeps, seed: seed?, x0, y0, init_fast_from_mu })
}

fn parse_experiment(root: &Table, base_dir: &Path, errors: &mut Vec<ConfigError>) -> ExperimentSection {
    let mut s = Section::new(root, "experiment", errors);
    let epsilons = s.f64_list("epsilons").unwrap_or_else(|| (3..=6).map(|k| 2f64.powi(-k)).collect());
    if epsilons.iter().any(|e| !(*e > 0.0)) {
        s.err("epsilons", "must be positive");
    }
    let replicas = s.usize_or("replicas", 128, 2);
    let dt_factor = s.positive("dt_factor", 0.1);
    let dt_cap = match s.f64_opt("dt_cap") {
        None => Some(0.01),
        Some(v) if v > 0.0 => Some(v),
        Some(v) if v == 0.0 => None,
        Some(_) => {
            s.err("dt_cap", "must be positive (or 0 for no cap)");
            None
        }
    };
    let refinement = match s.str_opt("refinement") {
        None | Some("enforce") => RefinementPolicy::Enforce,
        Some("report") => RefinementPolicy::Report,
        Some("skip") => RefinementPolicy::Skip,
        Some(other) => {
            s.err("refinement", format!("unknown policy `{other}` (expected enforce, report or skip)"));
            RefinementPolicy::Enforce
        }
    };
    let own_exit = s.bool_or("own_exit", false);
    let beta = s.nonnegative_opt("beta");
    let p = s.f64_or("p", 1.0);
    if p < 1.0 {
        s.err("p", "must be at least 1");
    }
    let c_p = s.nonnegative_opt("c_p");
    let c_v = s.nonnegative_opt("c_v");
    let lip_bbar = s.nonnegative_opt("lip_bbar");
    let psi_integral = s.nonnegative_opt("psi_integral");
    let method = match s.str_opt("method") {
        None | Some("auto") => DriftMethod::Auto,
        Some("analytic") => DriftMethod::Analytic,
        Some("quadrature") => DriftMethod::Quadrature,
        Some("ergodic") => DriftMethod::Ergodic,
        Some("tamd") => DriftMethod::Tamd,
        Some(other) => {
            s.err("method", format!("unknown method `{other}`"));
            DriftMethod::Auto
        }
    };
    let y_lo = s.f64_or("y_lo", -3.0);
    let y_hi = s.f64_or("y_hi", 3.0);
    if !(y_lo < y_hi) {
        s.err("y_hi", "must exceed y_lo");
    }
    let y_points = s.usize_or("y_points", 25, 2);
    let y = s.f64_opt("y");
    let entropy_mode = match s.str_opt("entropy_mode") {
        None | Some("frozen") => EntropyMode::Frozen,
        Some("coupled") => EntropyMode::Coupled,
        Some(other) => {
            s.err("entropy_mode", format!("unknown mode `{other}` (expected frozen or coupled)"));
            EntropyMode::Frozen
        }
    };
    let ensemble = s.usize_or("ensemble", 20_000, 2);
    let checkpoints = s.f64_list("checkpoints").unwrap_or_else(|| vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    if checkpoints.is_empty() || checkpoints[0] < 0.0 || checkpoints.windows(2).any(|w| !(w[1] > w[0])) {
        s.err("checkpoints", "must be nonnegative and strictly increasing");
    }
    let entropy_dt = s.positive("entropy_dt", 0.005);
    let init_shift = s.f64_or("init_shift", 1.0);
    let theta_samples = s.usize_or("theta_samples", 100_000, 1000);
    let sampler_dt = s.positive("sampler_dt", 0.005);
    let sampler_thin = s.usize_or("sampler_thin", 400, 1);
    let sampler_burn_in = s.usize_or("sampler_burn_in", 2000, 0);
    let theta_mu_file = s.str_opt("theta_mu_file").map(|p| base_dir.join(p));
    if let Some(p) = &theta_mu_file {
        if !p.is_file() {
            s.err("theta_mu_file", format!("file not found: {}", p.display()));
        }
    }
    s.finish();
    ExperimentSection {
        epsilons,
        replicas,
        dt_factor,
        dt_cap,
        refinement,
        own_exit,
        beta,
        p,
        c_p,
        c_v,
        lip_bbar,
        psi_integral,
        method,
        y_lo,
        y_hi,
        y_points,
        y,
        entropy_mode,
        ensemble,
        checkpoints,
        entropy_dt,
        init_shift,
        theta_samples,
        sampler_dt,
        sampler_thin,
        sampler_burn_in,
        theta_mu_file,
    }
}

fn parse_output(root: &Table, base_dir: &Path, errors: &mut Vec<ConfigError>) -> OutputSection {
    let mut s = Section::new(root, "output", errors);
    let directory = base_dir.join(s.str_opt("directory").unwrap_or("out"));
    let mut formats = Vec::new();
    for name in s.str_list("formats").unwrap_or_else(|| vec!["csv", "json"]) {
        match Format::parse(name) {
            Some(f) => formats.push(f),
            None => s.err("formats", format!("unknown format `{name}` (expected csv, json or svg-plotdata)")),
        }
    }
    formats.sort();
    formats.dedup();
    s.finish();
    OutputSection { directory, formats }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, Vec<ConfigError>> {
        parse_config(text, Path::new("/tmp"))
    }

    #[test]
    fn minimal_linear_config_gets_defaults() {
        let c = parse("[model]\nfamily = \"linear\"\n[sim]\nseed = 7\n").unwrap();
        assert_eq!(c.model.epsilon, 1.0 / 32.0);
        let Family::Linear(p) = c.model.family else { panic!() };
        assert_eq!(p.sigma_x, 2f64.sqrt());
        assert_eq!(c.sim.seed, 7);
        assert_eq!(c.sim.dt, None);
        assert_eq!(c.sim.init_fast_from_mu, None);
        assert_eq!(c.experiment.replicas, 128);
        assert_eq!(c.experiment.refinement, RefinementPolicy::Enforce);
        assert_eq!(c.output.formats, vec![Format::Csv, Format::Json]);
        assert_eq!(c.output.directory, Path::new("/tmp/out"));
    }

    #[test]
    fn all_errors_are_collected() {
        let text = "[model]\nfamily = \"linear\"\nepsilon = -1.0\nfo = 2\n[sim]\ndt = \"x\"\n[extra]\n";
        let errs = parse(text).unwrap_err();
        let paths: Vec<&str> = errs.iter().map(|e| e.path.as_str()).collect();
        assert!(paths.contains(&"model.epsilon"), "{errs:?}");
        assert!(paths.contains(&"model.fo"), "{errs:?}");
        assert!(paths.contains(&"sim.dt"), "{errs:?}");
        assert!(paths.contains(&"sim.seed"), "{errs:?}");
        assert!(paths.contains(&"extra"), "{errs:?}");
    }

    #[test]
    fn family_keys_are_family_specific() {
        let errs = parse("[model]\nfamily = \"linear\"\nkappa = 2.0\n[sim]\nseed = 1\n").unwrap_err();
        assert_eq!(errs, vec![ConfigError { path: "model.kappa".into(), reason: "unknown key".into() }]);
        assert!(parse("[model]\nfamily = \"tamd\"\nkappa = 2.0\n[sim]\nseed = 1\n").is_ok());
        let errs = parse("[model]\nfamily = \"tamd\"\nkappa = 0.5\n[sim]\nseed = 1\n").unwrap_err();
        assert_eq!(errs[0].path, "model.kappa");
    }

    #[test]
    fn bad_formats_and_missing_files() {
        let text = "[model]\nfamily = \"linear\"\n[sim]\nseed = 1\n[experiment]\ntheta_mu_file = \"nope.txt\"\n[output]\nformats = [\"csv\", \"png\"]\n";
        let errs = parse(text).unwrap_err();
        assert_eq!(errs.len(), 2, "{errs:?}");
        assert_eq!(errs[0].path, "experiment.theta_mu_file");
        assert_eq!(errs[1].path, "output.formats");
    }

    #[test]
    fn syntax_errors_are_reported() {
        let errs = parse("[model\n").unwrap_err();
        assert_eq!(errs[0].path, "<document>");
    }
}
