//! Posterior inference over a subset of the model parameters from one record.

mod grid;
mod mcmc;
mod summary;

pub use grid::{grid_posterior, linspace, posterior_evolution, GridPosterior};
pub use mcmc::{metropolis_hastings, mh_sample, MCMCChain, ProposalConfig};
pub use summary::{summarize, DEFAULT_BINS, Histogram, Histogram2d, ParameterSummary, Summary};

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{loglik, ReferenceRate};
use crate::models::ParametricModel;
use crate::record::Record;

/// Independent one-dimensional prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum Prior {
    Uniform { lo: f64, hi: f64 },
    Normal { mu: f64, sigma: f64 },
    /// Shape `alpha`, rate `beta`.
    Gamma { alpha: f64, beta: f64 },
}

impl Prior {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Prior::Uniform { lo, hi }.validated()
    }

    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        Prior::Normal { mu, sigma }.validated()
    }

    pub fn gamma(alpha: f64, beta: f64) -> Result<Self> {
        Prior::Gamma { alpha, beta }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let ok = match self {
            Prior::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Prior::Normal { mu, sigma } => mu.is_finite() && sigma > 0.0 && sigma.is_finite(),
            Prior::Gamma { alpha, beta } => alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite(),
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::InvalidArgument(format!("invalid prior {self:?}")))
        }
    }

    /// Log density; `−∞` outside the support.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Prior::Uniform { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Prior::Gamma { alpha, beta } => {
                if x > 0.0 {
                    alpha * beta.ln() - statrs::function::gamma::ln_gamma(alpha) + (alpha - 1.0) * x.ln() - beta * x
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            Prior::Uniform { lo, hi } => rng.random_range(lo..hi),
            Prior::Normal { mu, sigma } => Normal::new(mu, sigma).expect("validated prior").sample(rng),
            Prior::Gamma { alpha, beta } => Gamma::new(alpha, 1.0 / beta).expect("validated prior").sample(rng),
        }
    }
}

/// A log-posterior `log L(x) + log P(x)` over a free-parameter vector `x`.
pub trait Target: Sync {
    fn dim(&self) -> usize;

    fn log_prior(&self, x: &[f64]) -> f64;

    /// Evaluated only where the prior is finite.
    fn log_likelihood(&self, x: &[f64]) -> Result<f64>;

    fn sample_prior(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64>;
}

/// A record, a model with some parameters held fixed, and priors on the rest.
#[derive(Clone)]
pub struct InferenceProblem<'a> {
    model: &'a dyn ParametricModel,
    record: &'a Record,
    base: Vec<f64>,
    free: Vec<usize>,
    priors: Vec<Prior>,
    lambda: ReferenceRate,
}

impl<'a> InferenceProblem<'a> {
    /// `base` supplies values for the fixed parameters; entries at `free` indices are ignored.
    pub fn new(
        model: &'a dyn ParametricModel,
        record: &'a Record,
        base: Vec<f64>,
        free: Vec<usize>,
        priors: Vec<Prior>,
    ) -> Result<Self> {
        let n = model.n_params();
        if base.len() != n {
            return Err(Error::InvalidParameters(format!(
                "expected {n} base parameter values, got {}",
                base.len()
            )));
        }
        if free.is_empty() || free.len() != priors.len() {
            return Err(Error::InvalidArgument(format!(
                "{} free parameters with {} priors",
                free.len(),
                priors.len()
            )));
        }
        for (k, &i) in free.iter().enumerate() {
            if i >= n || free[..k].contains(&i) {
                return Err(Error::InvalidArgument(format!("bad free parameter index {i}")));
            }
        }
        for p in &priors {
            p.validated()?;
        }
        Ok(Self {
            model,
            record,
            base,
            free,
            priors,
            lambda: ReferenceRate::default(),
        })
    }

    /// Same problem with a different photon-counting reference rate.
    pub fn with_reference_rate(mut self, lambda: ReferenceRate) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn model(&self) -> &dyn ParametricModel {
        self.model
    }

    pub fn record(&self) -> &Record {
        self.record
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn priors(&self) -> &[Prior] {
        &self.priors
    }

    pub fn reference_rate(&self) -> ReferenceRate {
        self.lambda
    }

    pub fn free_names(&self) -> Vec<String> {
        let names = self.model.parameter_names();
        self.free.iter().map(|&i| names[i].clone()).collect()
    }

    /// Full parameter vector with the free entries replaced by `x`.
    pub fn theta(&self, x: &[f64]) -> Vec<f64> {
        let mut theta = self.base.clone();
        for (&i, &v) in self.free.iter().zip(x) {
            theta[i] = v;
        }
        theta
    }
}

impl Target for InferenceProblem<'_> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn log_prior(&self, x: &[f64]) -> f64 {
        self.priors.iter().zip(x).map(|(p, &v)| p.ln_pdf(v)).sum()
    }

    /// Parameters outside the model domain have zero likelihood.
    fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        let theta = self.theta(x);
        if self.model.check_domain(&theta).is_err() {
            return Ok(f64::NEG_INFINITY);
        }
        loglik(self.model, &theta, self.record, self.lambda)
    }

    fn sample_prior(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
        self.priors.iter().map(|p| p.sample(rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::TwoLevelModel;
    use crate::record::JumpRecord;
    use rand::SeedableRng;
    use statrs::distribution::{Continuous, Gamma as SGamma, Normal as SNormal};

    #[test]
    fn prior_densities_match_reference() {
        let g = Prior::gamma(3.5, 2.0).unwrap();
        let sg = SGamma::new(3.5, 2.0).unwrap();
        let n = Prior::normal(2.0, 0.8).unwrap();
        let sn = SNormal::new(2.0, 0.8).unwrap();
        for x in [0.1, 0.7, 1.9, 4.2] {
            assert!((g.ln_pdf(x) - sg.ln_pdf(x)).abs() < 1e-12);
            assert!((n.ln_pdf(x) - sn.ln_pdf(x)).abs() < 1e-12);
        }
        assert_eq!(g.ln_pdf(-1.0), f64::NEG_INFINITY);
        let u = Prior::uniform(1.0, 3.0).unwrap();
        assert!((u.ln_pdf(2.0) + 2f64.ln()).abs() < 1e-15);
        assert_eq!(u.ln_pdf(3.5), f64::NEG_INFINITY);
    }

    #[test]
    fn prior_validation() {
        assert!(Prior::uniform(1.0, 1.0).is_err());
        assert!(Prior::normal(0.0, 0.0).is_err());
        assert!(Prior::gamma(1.0, -1.0).is_err());
    }

    #[test]
    fn prior_samples_stay_in_support() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let u = Prior::uniform(-1.0, 2.0).unwrap();
        let g = Prior::gamma(0.5, 3.0).unwrap();
        for _ in 0..1000 {
            assert!(u.ln_pdf(u.sample(&mut rng)).is_finite());
            assert!(g.ln_pdf(g.sample(&mut rng)).is_finite());
        }
    }

    #[test]
    fn prior_config_format() {
        let p: Prior = serde_json::from_str(r#"{"dist":"normal","mu":2.0,"sigma":0.8}"#).unwrap();
        assert_eq!(p, Prior::Normal { mu: 2.0, sigma: 0.8 });
    }

    #[test]
    fn problem_maps_free_parameters() {
        let m = TwoLevelModel::new();
        let r: Record = JumpRecord::new(1.0, 0.01, vec![]).unwrap().into();
        let p = InferenceProblem::new(&m, &r, vec![1.3, 0.0, 0.55], vec![1], vec![Prior::normal(2.0, 1.0).unwrap()])
            .unwrap();
        assert_eq!(p.theta(&[1.43]), vec![1.3, 1.43, 0.55]);
        assert_eq!(p.free_names(), vec!["Delta".to_string()]);
        let q = InferenceProblem::new(&m, &r, vec![1.3, 0.0, 0.55], vec![2], vec![Prior::normal(0.5, 1.0).unwrap()])
            .unwrap();
        assert_eq!(q.log_likelihood(&[-0.1]).unwrap(), f64::NEG_INFINITY);
        assert!(InferenceProblem::new(&m, &r, vec![1.3, 0.0, 0.55], vec![1, 1], vec![Prior::normal(0.0, 1.0).unwrap(); 2]).is_err());
        assert!(InferenceProblem::new(&m, &r, vec![1.3, 0.0], vec![1], vec![Prior::normal(0.0, 1.0).unwrap()]).is_err());
    }
}
