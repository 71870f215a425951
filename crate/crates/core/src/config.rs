//! Run configuration read from TOML.
//!
//! ```toml
//! [market]
//! n = 2
//! lambda = [3.0, 0.0, 0.0, 0.2]   # row-major
//! sigma = [1.0, 0.9, 0.9, 1.0]    # row-major
//! alpha = 4.0
//! theta = [0.5, 3.0]
//! horizon = 1.0
//! x = [1.0, -1.0]                  # portfolio for printed values, optional
//!
//! [solver]
//! steps = 4096
//! tol = 1e-6
//!
//! [simulate]
//! n_paths = 10000
//! perturbation = "scale_xi:0.8"
//!
//! [sweep]
//! parameter = "rho"
//! start = -1.0
//! stop = 1.0
//! points = 41
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::checks::BatteryConfig;
use crate::linalg::Mat;
use crate::market::MarketParams;
use crate::sim::Perturbation;
use crate::solver::{GridSpec, LadderSpec, Penalty};

pub const OUT_DIR_ENV: &str = "DARKPOOL_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub n: usize,
    pub lambda: Vec<f64>,
    pub sigma: Vec<f64>,
    pub alpha: f64,
    pub theta: Vec<f64>,
    pub horizon: f64,
    pub x: Option<Vec<f64>>,
}

impl MarketSection {
    /// Builds the parameters without validating them; shapes are checked.
    pub fn params(&self) -> Result<MarketParams, ConfigError> {
        let n = self.n;
        if n == 0 {
            return Err(invalid("market.n must be at least 1"));
        }
        for (name, len, want) in [
            ("lambda", self.lambda.len(), n * n),
            ("sigma", self.sigma.len(), n * n),
            ("theta", self.theta.len(), n),
        ] {
            if len != want {
                return Err(invalid(format!("market.{name} has {len} entries, expected {want}")));
            }
        }
        Ok(MarketParams {
            lambda: Mat::from_row_slice(n, n, &self.lambda),
            sigma: Mat::from_row_slice(n, n, &self.sigma),
            alpha: self.alpha,
            theta: self.theta.clone(),
            horizon: self.horizon,
        })
    }

    pub fn portfolio(&self) -> Result<Vec<f64>, ConfigError> {
        let x = self.x.clone().unwrap_or_else(|| vec![1.0; self.n]);
        check_portfolio("market.x", &x, self.n)?;
        Ok(x)
    }
}

fn check_portfolio(field: &str, x: &[f64], n: usize) -> Result<(), ConfigError> {
    if x.len() != n {
        return Err(invalid(format!("{field} has {} entries, expected {n}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!("{field} contains a non-finite value")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub steps: usize,
    pub tol: f64,
    pub ladder_start: Option<f64>,
    pub ladder_factor: f64,
    pub ladder_max: usize,
    /// Principal cut-off `delta` in time units; defaults to `1e-3 T`.
    pub delta_cut: Option<f64>,
    pub grading: f64,
    pub substeps: usize,
    pub probes: usize,
    pub probe_seed: u64,
    /// Finite terminal penalty `l`; the principal solution when absent.
    pub penalty: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let g = GridSpec::default();
        let l = LadderSpec::default();
        Self {
            steps: g.steps,
            tol: l.tol,
            ladder_start: None,
            ladder_factor: l.factor,
            ladder_max: l.max_rungs,
            delta_cut: None,
            grading: g.grading,
            substeps: g.substeps,
            probes: l.probes,
            probe_seed: l.probe_seed,
            penalty: None,
        }
    }
}

impl SolverSection {
    pub fn grid(&self, horizon: f64) -> GridSpec {
        let fraction = self.delta_cut.map_or(GridSpec::default().delta_cut_fraction, |d| d / horizon);
        GridSpec { steps: self.steps, grading: self.grading, substeps: self.substeps, delta_cut_fraction: fraction }
    }

    pub fn ladder(&self) -> LadderSpec {
        LadderSpec {
            start: self.ladder_start,
            factor: self.ladder_factor,
            tol: self.tol,
            max_rungs: self.ladder_max,
            probes: self.probes,
            probe_seed: self.probe_seed,
        }
    }

    pub fn penalty(&self) -> Penalty {
        self.penalty.map_or(Penalty::Infinite, Penalty::Finite)
    }

    fn validate(&self, horizon: f64) -> Result<(), ConfigError> {
        self.grid(horizon).validate().map_err(|e| invalid(format!("solver: {e}")))?;
        if !(self.tol > 0.0) {
            return Err(invalid("solver.tol must be positive"));
        }
        if !(self.ladder_factor > 1.0) {
            return Err(invalid("solver.ladder_factor must exceed 1"));
        }
        if self.ladder_max == 0 {
            return Err(invalid("solver.ladder_max must be at least 1"));
        }
        if let Some(l) = self.penalty.filter(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(invalid(format!("solver.penalty = {l} must be positive and finite")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    /// Starting position; `market.x` when absent.
    pub x0: Option<Vec<f64>>,
    pub t0: f64,
    pub n_paths: usize,
    pub base_seed: u64,
    pub ode_step_divisor: usize,
    /// `none`, `scale_xi:<f>`, `scale_eta:<f>` or `shift_xi:<dt>`.
    pub perturbation: String,
    /// Number of `trajectory_<k>.csv` files written.
    pub trajectories: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            x0: None,
            t0: 0.0,
            n_paths: 10_000,
            base_seed: 1,
            ode_step_divisor: crate::sim::DEFAULT_STEP_DIVISOR,
            perturbation: "none".into(),
            trajectories: 5,
        }
    }
}

/// Parses a perturbation spec.
pub fn parse_perturbation(s: &str) -> Result<Option<Perturbation>, ConfigError> {
    let s = s.trim();
    if s.is_empty() || s == "none" {
        return Ok(None);
    }
    let (kind, value) = s
        .split_once(':')
        .ok_or_else(|| invalid(format!("perturbation {s:?} is not of the form kind:value")))?;
    let v: f64 = value.trim().parse().map_err(|_| invalid(format!("perturbation value {value:?} is not a number")))?;
    if !v.is_finite() {
        return Err(invalid("perturbation value must be finite"));
    }
    match kind.trim() {
        "scale_xi" => Ok(Some(Perturbation::ScaleXi(v))),
        "scale_eta" => Ok(Some(Perturbation::ScaleEta(v))),
        "shift_xi" if v >= 0.0 => Ok(Some(Perturbation::ShiftXi(v))),
        "shift_xi" => Err(invalid("shift_xi needs a nonnegative shift")),
        k => Err(invalid(format!("unknown perturbation kind {k:?}"))),
    }
}

/// Swept market parameter (indices are zero-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepParam {
    Rho,
    Theta(usize),
    Lambda(usize),
    LambdaCross(usize, usize),
    Alpha,
}

impl SweepParam {
    /// Parses `rho`, `alpha`, `theta_i`, `lambda_i` or `lambda_ij` (1-based)
    /// against `n` assets. Two digits after `lambda_` mean an off-diagonal
    /// entry when `n < 10`.
    pub fn parse(name: &str, n: usize) -> Result<Self, ConfigError> {
        let index = |s: &str| -> Result<usize, ConfigError> {
            let i: usize = s.parse().map_err(|_| invalid(format!("bad index in sweep parameter {name:?}")))?;
            if i == 0 || i > n {
                return Err(invalid(format!("sweep parameter {name:?} refers to asset {i} of {n}")));
            }
            Ok(i - 1)
        };
        match name {
            "rho" if n == 2 => Ok(Self::Rho),
            "rho" => Err(invalid(format!("sweep parameter rho needs n = 2, got {n}"))),
            "alpha" => Ok(Self::Alpha),
            _ => {
                if let Some(s) = name.strip_prefix("theta_") {
                    Ok(Self::Theta(index(s)?))
                } else if let Some(s) = name.strip_prefix("lambda_") {
                    if n < 10 && s.len() == 2 {
                        let (i, j) = (index(&s[..1])?, index(&s[1..])?);
                        if i == j {
                            return Err(invalid(format!("{name:?} is diagonal; use lambda_{}", i + 1)));
                        }
                        Ok(Self::LambdaCross(i, j))
                    } else {
                        Ok(Self::Lambda(index(s)?))
                    }
                } else {
                    Err(invalid(format!("unknown sweep parameter {name:?}")))
                }
            }
        }
    }

    /// `base` with the parameter set to `v`. Correlation keeps the diagonal
    /// of `sigma` and sets `sigma_12 = rho sqrt(sigma_11 sigma_22)`.
    pub fn apply(&self, base: &MarketParams, v: f64) -> MarketParams {
        let mut p = base.clone();
        match *self {
            Self::Rho => {
                let s = v * (p.sigma[(0, 0)] * p.sigma[(1, 1)]).sqrt();
                p.sigma[(0, 1)] = s;
                p.sigma[(1, 0)] = s;
            }
            Self::Theta(i) => p.theta[i] = v,
            Self::Lambda(i) => p.lambda[(i, i)] = v,
            Self::LambdaCross(i, j) => {
                p.lambda[(i, j)] = v;
                p.lambda[(j, i)] = v;
            }
            Self::Alpha => p.alpha = v,
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: String,
    /// Explicit grid; otherwise `points` values from `start` to `stop`.
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: Option<usize>,
    #[serde(default)]
    pub t: f64,
    /// Evaluation portfolios; `[market.x]` when absent.
    pub portfolios: Option<Vec<Vec<f64>>>,
}

impl SweepSection {
    pub fn grid(&self) -> Result<Vec<f64>, ConfigError> {
        let values = match (&self.values, self.start, self.stop, self.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(k)) => match k {
                0 => Vec::new(),
                1 => vec![a],
                _ => (0..k).map(|j| if j + 1 == k { b } else { a + (b - a) * j as f64 / (k - 1) as f64 }).collect(),
            },
            _ => return Err(invalid("sweep needs either values or start, stop and points")),
        };
        if values.is_empty() {
            return Err(invalid("sweep grid is empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("sweep grid contains a non-finite value"));
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("sweep grid is not strictly increasing"));
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSection {
    pub seed: u64,
    pub matrix_samples: usize,
    pub max_dim: usize,
    pub riccati_specs: usize,
    pub riccati_steps: usize,
    pub scalar_draws: usize,
    pub structure_seeds: usize,
    pub cross_seeds: usize,
    pub figure_points: usize,
    /// Further configs whose markets are solved by the battery, relative to
    /// this file.
    pub markets: Vec<PathBuf>,
}

impl Default for CheckSection {
    fn default() -> Self {
        let b = BatteryConfig::default();
        Self {
            seed: b.seed,
            matrix_samples: b.matrix_samples,
            max_dim: b.max_dim,
            riccati_specs: b.riccati_specs,
            riccati_steps: b.riccati_steps,
            scalar_draws: b.scalar_draws,
            structure_seeds: b.structure_seeds,
            cross_seeds: b.cross_seeds,
            figure_points: b.figure_points,
            markets: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: Option<MarketSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub check: CheckSection,
    /// File the config was read from, for relative paths.
    #[serde(skip)]
    pub source: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text)
            .map_err(|e| ConfigError::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
        cfg.source = Some(origin.to_path_buf());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path)
    }

    /// Shape and range checks; market assumptions are left to the solver.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let horizon = self.market.as_ref().map_or(1.0, |m| m.horizon);
        self.solver.validate(horizon)?;
        parse_perturbation(&self.simulate.perturbation)?;
        if self.simulate.ode_step_divisor == 0 {
            return Err(invalid("simulate.ode_step_divisor must be at least 1"));
        }
        if let Some(m) = &self.market {
            m.params()?;
            m.portfolio()?;
            if let Some(x0) = &self.simulate.x0 {
                check_portfolio("simulate.x0", x0, m.n)?;
            }
            if let Some(s) = &self.sweep {
                SweepParam::parse(&s.parameter, m.n)?;
                s.grid()?;
                for x in s.portfolios.iter().flatten() {
                    check_portfolio("sweep.portfolios", x, m.n)?;
                }
            }
        } else if self.sweep.is_some() {
            return Err(invalid("sweep needs a market section"));
        }
        if self.check.max_dim == 0 {
            return Err(invalid("check.max_dim must be at least 1"));
        }
        Ok(())
    }

    pub fn market(&self) -> Result<&MarketSection, ConfigError> {
        self.market.as_ref().ok_or_else(|| invalid("missing market section"))
    }

    /// Output directory: `--out`, then the environment, then the config.
    pub fn output_dir(&self, cli: Option<&Path>) -> PathBuf {
        if let Some(p) = cli {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(p);
        }
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn battery(&self) -> BatteryConfig {
        let horizon = self.market.as_ref().map_or(1.0, |m| m.horizon);
        let c = &self.check;
        BatteryConfig {
            seed: c.seed,
            matrix_samples: c.matrix_samples,
            max_dim: c.max_dim,
            riccati_specs: c.riccati_specs,
            riccati_steps: c.riccati_steps,
            scalar_draws: c.scalar_draws,
            structure_seeds: c.structure_seeds,
            cross_seeds: c.cross_seeds,
            figure_points: c.figure_points,
            grid: self.solver.grid(horizon),
            ladder: self.solver.ladder(),
        }
    }

    /// Resolves `check.markets` against the directory of this file.
    pub fn market_files(&self) -> Vec<PathBuf> {
        let base = self.source.as_deref().and_then(Path::parent).unwrap_or(Path::new("."));
        self.check.markets.iter().map(|p| base.join(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR_CASE: &str = "[market]\nn = 1\nlambda = [1.0]\nsigma = [1.0]\nalpha = 6.0\ntheta = [4.0]\nhorizon = 1.0\n";

    fn parse(s: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::parse(s, Path::new("test.toml"))
    }

    #[test]
    fn minimal_market() {
        let c = parse(SCALAR_CASE).unwrap();
        let p = c.market().unwrap().params().unwrap();
        assert_eq!(p, MarketParams::scalar(1.0, 1.0, 6.0, 4.0, 1.0));
        assert_eq!(c.market().unwrap().portfolio().unwrap(), vec![1.0]);
        assert_eq!(c.solver.grid(1.0), GridSpec::default());
        assert_eq!(c.solver.ladder(), LadderSpec::default());
    }

    #[test]
    fn row_major_matrices() {
        let s = "[market]\nn = 2\nlambda = [1.0, 0.1, 0.2, 2.0]\nsigma = [1.0, 0.0, 0.0, 1.0]\nalpha = 1.0\ntheta = [1.0, 1.0]\nhorizon = 1.0\n";
        let p = parse(s).unwrap().market().unwrap().params().unwrap();
        assert_eq!(p.lambda[(0, 1)], 0.1);
        assert_eq!(p.lambda[(1, 0)], 0.2);
        // asymmetry is a market error, reported when solving
        assert!(p.validate().is_err());
    }

    #[test]
    fn shape_errors() {
        let s = SCALAR_CASE.replace("theta = [4.0]", "theta = [4.0, 1.0]");
        assert!(matches!(parse(&s), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse("[market]\nn = 1\n"), Err(ConfigError::Parse { .. })));
        let s = format!("{SCALAR_CASE}typo = 1\n");
        assert!(matches!(parse(&s), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn sweep_params() {
        assert_eq!(SweepParam::parse("rho", 2).unwrap(), SweepParam::Rho);
        assert!(SweepParam::parse("rho", 3).is_err());
        assert_eq!(SweepParam::parse("theta_2", 2).unwrap(), SweepParam::Theta(1));
        assert!(SweepParam::parse("theta_3", 2).is_err());
        assert!(SweepParam::parse("theta_0", 2).is_err());
        assert_eq!(SweepParam::parse("lambda_1", 2).unwrap(), SweepParam::Lambda(0));
        assert_eq!(SweepParam::parse("lambda_12", 2).unwrap(), SweepParam::LambdaCross(0, 1));
        assert!(SweepParam::parse("lambda_11", 2).is_err());
        assert_eq!(SweepParam::parse("lambda_12", 12).unwrap(), SweepParam::Lambda(11));
        assert!(SweepParam::parse("beta", 2).is_err());
    }

    #[test]
    fn rho_keeps_volatilities() {
        let base = MarketParams::two_asset([1.0, 1.0], 0.0, [2.0, 0.5], 0.0, 1.0, [1.0, 1.0], 1.0);
        let p = SweepParam::Rho.apply(&base, -0.5);
        assert!((p.sigma[(0, 1)] - (-0.5)).abs() < 1e-15);
        assert_eq!(p.sigma[(0, 0)], base.sigma[(0, 0)]);
    }

    #[test]
    fn sweep_grids() {
        let s = format!("{SCALAR_CASE}[sweep]\nparameter = \"theta_1\"\nstart = 0.0\nstop = 2.0\npoints = 5\n");
        let c = parse(&s).unwrap();
        assert_eq!(c.sweep.unwrap().grid().unwrap(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        let s = format!("{SCALAR_CASE}[sweep]\nparameter = \"theta_1\"\nvalues = [1.0, 0.5]\n");
        assert!(parse(&s).is_err());
        let s = format!("{SCALAR_CASE}[sweep]\nparameter = \"theta_1\"\nvalues = []\n");
        assert!(parse(&s).is_err());
        let s = format!("{SCALAR_CASE}[sweep]\nparameter = \"rho\"\nvalues = [0.0]\n");
        assert!(parse(&s).is_err());
    }

    #[test]
    fn perturbations() {
        assert_eq!(parse_perturbation("none").unwrap(), None);
        assert_eq!(parse_perturbation("scale_xi:0.8").unwrap(), Some(Perturbation::ScaleXi(0.8)));
        assert_eq!(parse_perturbation("scale_eta: 0").unwrap(), Some(Perturbation::ScaleEta(0.0)));
        assert_eq!(parse_perturbation("shift_xi:0.05").unwrap(), Some(Perturbation::ShiftXi(0.05)));
        assert!(parse_perturbation("shift_xi:-1").is_err());
        assert!(parse_perturbation("scale_xi").is_err());
        assert!(parse_perturbation("wobble:1").is_err());
    }

    #[test]
    fn delta_cut_is_absolute() {
        let s = SCALAR_CASE.replace("horizon = 1.0", "horizon = 2.0") + "[solver]\ndelta_cut = 0.01\n";
        let c = parse(&s).unwrap();
        assert!((c.solver.grid(2.0).delta_cut(2.0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn output_dir_precedence() {
        let s = format!("{SCALAR_CASE}[output]\ndir = \"from_config\"\n");
        let c = parse(&s).unwrap();
        assert_eq!(c.output_dir(Some(Path::new("cli"))), PathBuf::from("cli"));
        if std::env::var_os(OUT_DIR_ENV).is_none() {
            assert_eq!(c.output_dir(None), PathBuf::from("from_config"));
        }
    }
}
