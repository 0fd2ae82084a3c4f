use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{InferenceProblem, Target};
use crate::error::{Error, Result};
use crate::trajectory::trajectory_rng;

/// Attempts at drawing a starting point with finite posterior density.
pub const MAX_INIT_ATTEMPTS: usize = 100;

fn default_window() -> [f64; 2] {
    [0.10, 0.50]
}

fn default_batch() -> usize {
    100
}

/// Gaussian random-walk proposal and its burn-in adaptation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposalConfig {
    pub covariance: Vec<Vec<f64>>,
    /// Steps at the start of the chain during which the proposal adapts.
    pub adapt_burnin: usize,
    #[serde(default = "default_window")]
    pub acceptance_window: [f64; 2],
    /// Replace the covariance by the empirical covariance of the second
    /// quarter of the burn-in before adapting the scale further.
    #[serde(default)]
    pub learn_covariance: bool,
    #[serde(default = "default_batch")]
    pub batch: usize,
}

impl ProposalConfig {
    pub fn new(covariance: Vec<Vec<f64>>, adapt_burnin: usize) -> Self {
        Self {
            covariance,
            adapt_burnin,
            acceptance_window: default_window(),
            learn_covariance: false,
            batch: default_batch(),
        }
    }

    pub fn diagonal(variances: &[f64], adapt_burnin: usize) -> Self {
        let d = variances.len();
        let cov = (0..d)
            .map(|i| (0..d).map(|j| if i == j { variances[i] } else { 0.0 }).collect())
            .collect();
        Self::new(cov, adapt_burnin)
    }

    pub fn learning_covariance(mut self, learn: bool) -> Self {
        self.learn_covariance = learn;
        self
    }

    fn target_rate(&self) -> f64 {
        0.5 * (self.acceptance_window[0] + self.acceptance_window[1])
    }

    fn validate(&self, d: usize) -> Result<DMatrix<f64>> {
        if self.covariance.len() != d || self.covariance.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: self.covariance.len(),
            });
        }
        let [lo, hi] = self.acceptance_window;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::InvalidArgument(format!("bad acceptance window [{lo}, {hi}]")));
        }
        if self.batch == 0 {
            return Err(Error::InvalidArgument("adaptation batch must be positive".into()));
        }
        let m = DMatrix::from_fn(d, d, |i, j| self.covariance[i][j]);
        if (&m - m.transpose()).abs().max() > 1e-12 * m.abs().max().max(1.0) {
            return Err(Error::InvalidArgument("proposal covariance is not symmetric".into()));
        }
        cholesky_factor(&m).ok_or_else(|| Error::InvalidArgument("proposal covariance is not positive definite".into()))
    }
}

fn cholesky_factor(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.l())
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Samples of a Metropolis-Hastings run, one entry per step (including burn-in).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MCMCChain {
    pub names: Vec<String>,
    pub samples: Vec<Vec<f64>>,
    pub logliks: Vec<f64>,
    pub log_priors: Vec<f64>,
    pub accepted_flags: Vec<bool>,
    pub accepted: usize,
    /// Steps during which the proposal adapted; excluded from summaries by default.
    pub burnin: usize,
    /// Final proposal covariance, scale included.
    pub proposal_cov: Vec<Vec<f64>>,
    pub init_attempts: usize,
}

impl MCMCChain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.len().max(1) as f64
    }

    /// Acceptance rate over steps `from..`.
    pub fn acceptance_rate_after(&self, from: usize) -> f64 {
        let flags = &self.accepted_flags[from.min(self.len())..];
        flags.iter().filter(|&&a| a).count() as f64 / flags.len().max(1) as f64
    }
}

fn empirical_covariance(xs: &[Vec<f64>]) -> DMatrix<f64> {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let mut mean = DVector::zeros(d);
    for x in xs {
        mean += DVector::from_column_slice(x);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for x in xs {
        let v = DVector::from_column_slice(x) - &mean;
        cov += &v * v.transpose();
    }
    cov / (n - 1.0).max(1.0)
}

/// Random-walk Metropolis-Hastings on `target`, started from a prior draw.
///
/// Three independent streams of `seed` drive the start, the proposals and
/// the accept/reject decisions. Proposals outside the prior support are
/// rejected without evaluating the likelihood.
pub fn metropolis_hastings(
    target: &dyn Target,
    names: Vec<String>,
    proposal: &ProposalConfig,
    n_steps: usize,
    seed: u64,
) -> Result<MCMCChain> {
    let d = target.dim();
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    let mut chol = proposal.validate(d)?;
    let mut cov = DMatrix::from_fn(d, d, |i, j| proposal.covariance[i][j]);
    let mut rng_init = trajectory_rng(seed, 0);
    let mut rng_prop = trajectory_rng(seed, 1);
    let mut rng_acc = trajectory_rng(seed, 2);

    let mut start = None;
    for attempt in 1..=MAX_INIT_ATTEMPTS {
        let x = target.sample_prior(&mut rng_init);
        let lp = target.log_prior(&x);
        if !lp.is_finite() {
            continue;
        }
        let ll = target.log_likelihood(&x)?;
        if ll.is_finite() {
            start = Some((x, ll, lp, attempt));
            break;
        }
    }
    let (mut x, mut ll, mut lp, init_attempts) = start.ok_or(Error::NoValidStart(MAX_INIT_ATTEMPTS))?;

    let mut chain = MCMCChain {
        names,
        samples: Vec::with_capacity(n_steps),
        logliks: Vec::with_capacity(n_steps),
        log_priors: Vec::with_capacity(n_steps),
        accepted_flags: Vec::with_capacity(n_steps),
        accepted: 0,
        burnin: proposal.adapt_burnin.min(n_steps),
        proposal_cov: Vec::new(),
        init_attempts,
    };
    let mut ln_scale: f64 = 0.0;
    let mut batch_accepted = 0usize;
    let mut batch_index = 0usize;
    let target_rate = proposal.target_rate();
    let learn_at = proposal.adapt_burnin / 2;

    for k in 0..n_steps {
        let z = DVector::from_fn(d, |_, _| rng_prop.sample::<f64, _>(StandardNormal));
        let step = &chol * z * ln_scale.exp();
        let xc: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let u: f64 = rng_acc.random();
        let lpc = target.log_prior(&xc);
        let mut accept = false;
        if lpc > f64::NEG_INFINITY {
            let llc = target.log_likelihood(&xc)?;
            if llc > f64::NEG_INFINITY {
                let log_alpha = (llc + lpc) - (ll + lp);
                accept = log_alpha >= 0.0 || u.ln() < log_alpha;
            }
            if accept {
                x = xc;
                ll = llc;
                lp = lpc;
            }
        }
        if accept {
            chain.accepted += 1;
            batch_accepted += 1;
        }
        chain.samples.push(x.clone());
        chain.logliks.push(ll);
        chain.log_priors.push(lp);
        chain.accepted_flags.push(accept);

        if k < proposal.adapt_burnin {
            if (k + 1) % proposal.batch == 0 {
                batch_index += 1;
                let rate = batch_accepted as f64 / proposal.batch as f64;
                ln_scale += 3.0 * (rate - target_rate) / (batch_index as f64).sqrt();
                batch_accepted = 0;
            }
            if proposal.learn_covariance && k + 1 == learn_at && learn_at >= 4 * (d + 1) {
                let emp = empirical_covariance(&chain.samples[learn_at / 2..]);
                if let Some(l) = cholesky_factor(&emp) {
                    log::debug!("learned proposal covariance {emp}");
                    cov = emp;
                    chol = l;
                    ln_scale = (2.38 / (d as f64).sqrt()).ln();
                    batch_index = 0;
                } else {
                    log::warn!("empirical covariance not positive definite; keeping the configured proposal");
                }
            }
        }
    }
    chain.proposal_cov = to_rows(&(cov * (2.0 * ln_scale).exp()));
    Ok(chain)
}

/// Samples the posterior of an inference problem.
pub fn mh_sample(
    problem: &InferenceProblem<'_>,
    proposal: &ProposalConfig,
    n_steps: usize,
    seed: u64,
) -> Result<MCMCChain> {
    metropolis_hastings(problem, problem.free_names(), proposal, n_steps, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    struct Custom<F: Fn(&[f64]) -> f64 + Sync> {
        lo: f64,
        hi: f64,
        ll: F,
    }

    impl<F: Fn(&[f64]) -> f64 + Sync> Target for Custom<F> {
        fn dim(&self) -> usize {
            1
        }

        fn log_prior(&self, x: &[f64]) -> f64 {
            if (self.lo..=self.hi).contains(&x[0]) {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }

        fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
            Ok((self.ll)(x))
        }

        fn sample_prior(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
            vec![rng.random_range(self.lo..self.hi)]
        }
    }

    #[test]
    fn flat_target_accepts_every_in_support_proposal() {
        let t = Custom { lo: -1e6, hi: 1e6, ll: |_: &[f64]| 0.0 };
        let c = metropolis_hastings(&t, vec!["x".into()], &ProposalConfig::diagonal(&[1.0], 0), 500, 1).unwrap();
        assert_eq!(c.accepted, 500);
    }

    #[test]
    fn impossible_proposals_never_accepted() {
        let t = Custom {
            lo: -10.0,
            hi: 10.0,
            ll: |x: &[f64]| if x[0] > 0.0 { f64::NEG_INFINITY } else { 0.0 },
        };
        let c = metropolis_hastings(&t, vec!["x".into()], &ProposalConfig::diagonal(&[4.0], 0), 2000, 3).unwrap();
        assert!(c.samples.iter().all(|x| x[0] <= 0.0 && x[0] >= -10.0));
        assert!(c.accepted > 0 && c.accepted < 2000);
    }

    #[test]
    fn no_valid_start() {
        let t = Custom { lo: 0.0, hi: 1.0, ll: |_: &[f64]| f64::NEG_INFINITY };
        let r = metropolis_hastings(&t, vec!["x".into()], &ProposalConfig::diagonal(&[1.0], 0), 10, 3);
        assert_eq!(r, Err(Error::NoValidStart(MAX_INIT_ATTEMPTS)));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn flux_balance_on_discretized_chain() {
        let t = Custom { lo: -50.0, hi: 50.0, ll: |x: &[f64]| -0.5 * x[0] * x[0] };
        let c = metropolis_hastings(&t, vec!["x".into()], &ProposalConfig::diagonal(&[1.5], 0), 200_000, 7).unwrap();
        let bin = |x: f64| ((x + 2.5).floor().clamp(0.0, 4.0)) as usize;
        let mut counts = [[0usize; 5]; 5];
        for w in c.samples.windows(2) {
            counts[bin(w[0][0])][bin(w[1][0])] += 1;
        }
        for i in 0..5 {
            for j in (i + 1)..5 {
                let (a, b) = (counts[i][j] as f64, counts[j][i] as f64);
                assert!((a - b).abs() <= 4.0 * (a + b).sqrt().max(1.0), "{i}->{j}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn adaptation_reaches_window_and_freezes() {
        let t = Custom { lo: -1e3, hi: 1e3, ll: |x: &[f64]| -0.5 * (x[0] / 0.05).powi(2) };
        let c = metropolis_hastings(&t, vec!["x".into()], &ProposalConfig::diagonal(&[100.0], 5000), 20_000, 2).unwrap();
        let r = c.acceptance_rate_after(5000);
        assert!((0.1..=0.5).contains(&r), "{r}");
    }

    #[test]
    fn same_seed_same_chain() {
        let t = Custom { lo: -5.0, hi: 5.0, ll: |x: &[f64]| -x[0].abs() };
        let p = ProposalConfig::diagonal(&[1.0], 100);
        let a = metropolis_hastings(&t, vec!["x".into()], &p, 1000, 9).unwrap();
        let b = metropolis_hastings(&t, vec!["x".into()], &p, 1000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_proposals() {
        let t = Custom { lo: -5.0, hi: 5.0, ll: |_: &[f64]| 0.0 };
        assert!(metropolis_hastings(&t, vec!["x".into()], &ProposalConfig::diagonal(&[-1.0], 0), 10, 1).is_err());
        assert!(metropolis_hastings(&t, vec!["x".into()], &ProposalConfig::diagonal(&[1.0, 1.0], 0), 10, 1).is_err());
        assert!(metropolis_hastings(&t, vec!["x".into()], &ProposalConfig::diagonal(&[1.0], 0), 0, 1).is_err());
    }
}
