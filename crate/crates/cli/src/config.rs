//! TOML run configuration.

use std::collections::BTreeMap;
use std::path::Path;

use qtraj_core::bayes::{linspace, Prior};
use qtraj_core::{BimodalModel, MeasurementKind, ParametricModel, TwoLevelModel};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    TwoLevel,
    Bimodal,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::TwoLevel => "two_level",
            ModelKind::Bimodal => "bimodal",
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "two_level" => Ok(ModelKind::TwoLevel),
            "bimodal" => Ok(ModelKind::Bimodal),
            other => Err(CliError::Config(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    Ground,
    Excited,
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl AxisSpec {
    pub fn points(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.n)
    }

    fn check(&self, what: &str) -> CliResult<()> {
        if self.n == 0 || !self.lo.is_finite() || !self.hi.is_finite() || (self.n > 1 && self.hi < self.lo) {
            return Err(CliError::Config(format!("invalid axis for {what}: {self:?}")));
        }
        Ok(())
    }
}

/// Two parameters scanned on a product grid.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneGrid {
    pub x: String,
    pub y: String,
    pub xs: AxisSpec,
    pub ys: AxisSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// Write the conditional state every this many steps.
    pub sample_every: Option<usize>,
    /// Width of the bins in the click-count table.
    pub bin_width: Option<f64>,
    /// Starting configuration of the bimodal atom, `"a"` or `"b"`; stationary draw if absent.
    pub start_config: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoglikSection {
    /// Write `l_t` every this many steps.
    pub every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub axes: BTreeMap<String, AxisSpec>,
    #[serde(default)]
    pub times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcSection {
    pub steps: usize,
    pub burnin: usize,
    /// Initial proposal variances by parameter name.
    #[serde(default)]
    pub proposal_variance: BTreeMap<String, f64>,
    /// Full initial proposal covariance in free-parameter order; overrides the variances.
    pub covariance: Option<Vec<Vec<f64>>>,
    /// Steps of proposal adaptation; defaults to `burnin`.
    pub adapt_burnin: Option<usize>,
    #[serde(default)]
    pub learn_covariance: bool,
    pub bins: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisherSection {
    pub n_traj: usize,
    #[serde(default)]
    pub params: Vec<String>,
    pub grid: Option<PlaneGrid>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropySection {
    pub n_traj: usize,
    pub grid: Option<PlaneGrid>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: ModelKind,
    kind: Option<MeasurementKind>,
    #[serde(alias = "T")]
    horizon: Option<f64>,
    dt: Option<f64>,
    seed: Option<u64>,
    lambda: Option<f64>,
    units: Option<String>,
    initial_state: Option<InitialState>,
    #[serde(default)]
    theta: BTreeMap<String, f64>,
    #[serde(default)]
    priors: BTreeMap<String, Prior>,
    simulate: Option<SimulateSection>,
    loglik: Option<LoglikSection>,
    grid: Option<GridSection>,
    mcmc: Option<McmcSection>,
    fisher: Option<FisherSection>,
    entropy: Option<EntropySection>,
}

/// A parsed and validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: ModelKind,
    pub kind: MeasurementKind,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub lambda: Option<f64>,
    pub units: Option<String>,
    pub initial_state: InitialState,
    pub theta: BTreeMap<String, f64>,
    pub priors: BTreeMap<String, Prior>,
    pub simulate: SimulateSection,
    pub loglik: LoglikSection,
    pub grid: Option<GridSection>,
    pub mcmc: Option<McmcSection>,
    pub fisher: Option<FisherSection>,
    pub entropy: Option<EntropySection>,
    /// Hex SHA-256 of the configuration text.
    pub digest: String,
}

/// The configured model.
pub struct AnyModel(Box<dyn ParametricModel>);

impl AnyModel {
    pub fn as_dyn(&self) -> &dyn ParametricModel {
        self.0.as_ref()
    }
}

pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let cfg = RunConfig {
            model: raw.model,
            kind: raw.kind.unwrap_or(MeasurementKind::Jump),
            horizon: raw.horizon.unwrap_or(10.0),
            dt: raw.dt.unwrap_or(0.01),
            seed: raw.seed.unwrap_or(0),
            lambda: raw.lambda,
            units: raw.units,
            initial_state: raw.initial_state.unwrap_or(InitialState::Ground),
            theta: raw.theta,
            priors: raw.priors,
            simulate: raw.simulate.unwrap_or_default(),
            loglik: raw.loglik.unwrap_or_default(),
            grid: raw.grid,
            mcmc: raw.mcmc,
            fisher: raw.fisher,
            entropy: raw.entropy,
            digest: digest(text),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn build_model(&self) -> AnyModel {
        AnyModel(match (self.model, self.initial_state) {
            (ModelKind::TwoLevel, InitialState::Ground) => Box::new(TwoLevelModel::new()),
            (ModelKind::TwoLevel, InitialState::Excited) => Box::new(TwoLevelModel::excited()),
            (ModelKind::Bimodal, _) => Box::new(BimodalModel::new()),
        })
    }

    pub fn parameter_names(&self) -> Vec<String> {
        self.build_model().as_dyn().parameter_names()
    }

    pub fn index_of(&self, name: &str) -> CliResult<usize> {
        self.parameter_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| self.unknown(name))
    }

    fn unknown(&self, name: &str) -> CliError {
        CliError::Config(format!(
            "unknown parameter `{name}` for model {} (expected one of {})",
            self.model.as_str(),
            self.parameter_names().join(", ")
        ))
    }

    /// Applies `name=value` overrides to `theta`.
    pub fn override_theta(&mut self, spec: &str) -> CliResult<()> {
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("expected name=value in --theta, got `{part}`")))?;
            let k = k.trim();
            self.index_of(k)?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("bad value for {k} in --theta: `{v}`")))?;
            if !v.is_finite() {
                return Err(CliError::Config(format!("non-finite value for {k}")));
            }
            self.theta.insert(k.to_string(), v);
        }
        Ok(())
    }

    /// Full parameter vector, every parameter required.
    pub fn full_theta(&self) -> CliResult<Vec<f64>> {
        self.theta_with_free(&[])
    }

    /// Parameter vector in model order; entries at `free` may be missing (set to 0).
    pub fn theta_with_free(&self, free: &[usize]) -> CliResult<Vec<f64>> {
        let names = self.parameter_names();
        let mut missing = Vec::new();
        let values = names
            .iter()
            .enumerate()
            .map(|(i, n)| match self.theta.get(n) {
                Some(&v) => v,
                None => {
                    if !free.contains(&i) {
                        missing.push(n.clone());
                    }
                    0.0
                }
            })
            .collect();
        if !missing.is_empty() {
            return Err(CliError::Config(format!("missing theta values for {}", missing.join(", "))));
        }
        Ok(values)
    }

    /// Free parameters (those with priors) in model order, with their priors.
    pub fn free_parameters(&self) -> CliResult<(Vec<usize>, Vec<Prior>)> {
        if self.priors.is_empty() {
            return Err(CliError::Config("no [priors] given".into()));
        }
        let mut pairs: Vec<(usize, Prior)> = self
            .priors
            .iter()
            .map(|(n, p)| Ok((self.index_of(n)?, *p)))
            .collect::<CliResult<_>>()?;
        pairs.sort_by_key(|&(i, _)| i);
        Ok(pairs.into_iter().unzip())
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.dt) {
            return bad(format!("horizon {} must be at least dt = {}", self.horizon, self.dt));
        }
        if let Some(l) = self.lambda {
            if !(l.is_finite() && l > 0.0) {
                return bad(format!("lambda must be positive, got {l}"));
            }
        }
        if self.initial_state == InitialState::Excited && self.model == ModelKind::Bimodal {
            return bad("initial_state applies only to the two_level model".into());
        }
        for (k, v) in &self.theta {
            self.index_of(k)?;
            if !v.is_finite() {
                return bad(format!("non-finite theta value for {k}"));
            }
        }
        for (k, p) in &self.priors {
            self.index_of(k)?;
            p.validated().map_err(|e| CliError::Config(format!("prior for {k}: {e}")))?;
        }
        if let Some(s) = &self.simulate.start_config {
            if s != "a" && s != "b" {
                return bad(format!("start_config must be \"a\" or \"b\", got `{s}`"));
            }
            if self.model != ModelKind::Bimodal {
                return bad("start_config applies only to the bimodal model".into());
            }
        }
        if let Some(w) = self.simulate.bin_width {
            if !(w.is_finite() && w > 0.0) {
                return bad(format!("bin_width must be positive, got {w}"));
            }
        }
        if self.simulate.sample_every == Some(0) || self.loglik.every == Some(0) {
            return bad("sampling intervals must be at least 1".into());
        }
        if let Some(g) = &self.grid {
            if g.axes.is_empty() {
                return bad("[grid] needs at least one axis".into());
            }
            for (k, a) in &g.axes {
                self.index_of(k)?;
                a.check(k)?;
                if !self.priors.contains_key(k) {
                    return bad(format!("grid axis {k} has no prior"));
                }
            }
            for k in self.priors.keys() {
                if !g.axes.contains_key(k) {
                    return bad(format!("parameter {k} has a prior but no grid axis"));
                }
            }
            if g.times.iter().any(|t| !t.is_finite() || *t < 0.0) || g.times.windows(2).any(|w| w[1] < w[0]) {
                return bad("grid times must be non-negative and sorted".into());
            }
        }
        if let Some(m) = &self.mcmc {
            if m.steps == 0 {
                return bad("mcmc steps must be positive".into());
            }
            if m.burnin >= m.steps {
                return bad(format!(
                    "mcmc burnin ({}) must be smaller than steps ({})",
                    m.burnin, m.steps
                ));
            }
            for (k, v) in &m.proposal_variance {
                if !self.priors.contains_key(k) {
                    return bad(format!("proposal variance given for {k}, which has no prior"));
                }
                if !(v.is_finite() && *v > 0.0) {
                    return bad(format!("proposal variance for {k} must be positive"));
                }
            }
            if let Some(c) = &m.covariance {
                let d = self.priors.len();
                if c.len() != d || c.iter().any(|r| r.len() != d) {
                    return bad(format!("mcmc covariance must be {d}x{d}"));
                }
            }
            if m.bins == Some(0) {
                return bad("mcmc bins must be positive".into());
            }
        }
        if let Some(f) = &self.fisher {
            if f.n_traj < 2 {
                return bad("fisher n_traj must be at least 2".into());
            }
            for p in &f.params {
                self.index_of(p)?;
            }
            if let Some(g) = &f.grid {
                self.check_plane(g)?;
            }
        }
        if let Some(e) = &self.entropy {
            if e.n_traj < 2 {
                return bad("entropy n_traj must be at least 2".into());
            }
            if let Some(g) = &e.grid {
                self.check_plane(g)?;
            }
        }
        Ok(())
    }

    fn check_plane(&self, g: &PlaneGrid) -> CliResult<()> {
        let (ix, iy) = (self.index_of(&g.x)?, self.index_of(&g.y)?);
        if ix == iy {
            return Err(CliError::Config("grid axes must be distinct parameters".into()));
        }
        g.xs.check(&g.x)?;
        g.ys.check(&g.y)
    }
}
