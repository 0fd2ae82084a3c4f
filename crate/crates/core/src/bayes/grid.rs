use rayon::prelude::*;
use serde::Serialize;

use super::{InferenceProblem, Target};
use crate::error::{Error, Result};
use crate::likelihood::loglik_snapshots;

/// Normalized posterior on a product grid, stored as log probabilities with
/// the last axis varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridPosterior {
    pub names: Vec<String>,
    pub axes: Vec<Vec<f64>>,
    pub log_weights: Vec<f64>,
    pub normalized: bool,
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl GridPosterior {
    /// Normalizes unnormalized log weights by log-sum-exp.
    pub fn from_log_weights(names: Vec<String>, axes: Vec<Vec<f64>>, mut log_weights: Vec<f64>) -> Result<Self> {
        let expected: usize = axes.iter().map(Vec::len).product();
        if axes.is_empty() || expected != log_weights.len() || expected == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid with {expected} points and {} weights",
                log_weights.len()
            )));
        }
        let lse = log_sum_exp(&log_weights);
        if !lse.is_finite() {
            return Err(Error::ImpossibleEverywhere);
        }
        for w in log_weights.iter_mut() {
            *w -= lse;
        }
        Ok(Self {
            names,
            axes,
            log_weights,
            normalized: true,
        })
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// Coordinates of flat index `idx`.
    pub fn point(&self, mut idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.axes.len()];
        for (k, axis) in self.axes.iter().enumerate().rev() {
            x[k] = axis[idx % axis.len()];
            idx /= axis.len();
        }
        x
    }

    pub fn marginal(&self, k: usize) -> Vec<f64> {
        let stride: usize = self.axes[k + 1..].iter().map(Vec::len).product();
        let n = self.axes[k].len();
        let mut out = vec![0.0; n];
        for (idx, p) in self.probabilities().into_iter().enumerate() {
            out[(idx / stride) % n] += p;
        }
        out
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.axes.len()];
        for (idx, p) in self.probabilities().into_iter().enumerate() {
            for (mk, xk) in m.iter_mut().zip(self.point(idx)) {
                *mk += p * xk;
            }
        }
        m
    }

    pub fn std(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut v = vec![0.0; self.axes.len()];
        for (idx, p) in self.probabilities().into_iter().enumerate() {
            for (k, xk) in self.point(idx).into_iter().enumerate() {
                v[k] += p * (xk - mean[k]).powi(2);
            }
        }
        v.into_iter().map(f64::sqrt).collect()
    }

    /// Grid point of highest probability.
    pub fn mode(&self) -> Vec<f64> {
        let best = self
            .log_weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.point(best)
    }

    pub fn total_variation(&self, other: &Self) -> Result<f64> {
        if self.axes != other.axes {
            return Err(Error::InvalidArgument("posteriors are on different grids".into()));
        }
        Ok(0.5
            * self
                .probabilities()
                .iter()
                .zip(other.probabilities())
                .map(|(p, q)| (p - q).abs())
                .sum::<f64>())
    }
}

fn grid_points(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::with_capacity(axes.len())];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    points
}

fn check_axes(problem: &InferenceProblem<'_>, axes: &[Vec<f64>]) -> Result<()> {
    if axes.len() != problem.dim() {
        return Err(Error::InvalidArgument(format!(
            "{} grid axes for {} free parameters",
            axes.len(),
            problem.dim()
        )));
    }
    if axes.iter().any(Vec::is_empty) {
        return Err(Error::InvalidArgument("empty grid axis".into()));
    }
    Ok(())
}

/// Posterior `∝ L(θ) P(θ)` on the product grid `axes` (one axis per free parameter).
pub fn grid_posterior(problem: &InferenceProblem<'_>, axes: &[Vec<f64>]) -> Result<GridPosterior> {
    check_axes(problem, axes)?;
    let points = grid_points(axes);
    let log_weights: Vec<f64> = points
        .par_iter()
        .map(|x| {
            let lp = problem.log_prior(x);
            if lp == f64::NEG_INFINITY {
                return Ok(lp);
            }
            Ok(problem.log_likelihood(x)? + lp)
        })
        .collect::<Result<_>>()?;
    GridPosterior::from_log_weights(problem.free_names(), axes.to_vec(), log_weights)
}

/// Grid posteriors conditioned on the record up to each of `times`, from a
/// single replay per grid point. A time of zero gives the prior on the grid.
pub fn posterior_evolution(
    problem: &InferenceProblem<'_>,
    axes: &[Vec<f64>],
    times: &[f64],
) -> Result<Vec<GridPosterior>> {
    check_axes(problem, axes)?;
    let record = problem.record();
    let dt = record.dt();
    let horizon = record.horizon();
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("times must be sorted".into()));
    }
    if times.iter().any(|&t| t.is_nan() || t < 0.0 || t > horizon * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!("times must lie in [0, {horizon}]")));
    }
    let steps: Vec<usize> = times
        .iter()
        .map(|&t| ((t / dt).round() as usize).min(record.n_steps()))
        .collect();
    let model = problem.model();
    let lambda = problem.reference_rate();
    let points = grid_points(axes);
    let per_point: Vec<Vec<f64>> = points
        .par_iter()
        .map(|x| {
            let lp = problem.log_prior(x);
            let theta = problem.theta(x);
            if lp == f64::NEG_INFINITY {
                return Ok(vec![lp; steps.len()]);
            }
            if model.check_domain(&theta).is_err() {
                return Ok(steps.iter().map(|&s| if s == 0 { lp } else { f64::NEG_INFINITY }).collect());
            }
            let ls = loglik_snapshots(model, &theta, record, lambda, &steps)?;
            Ok(ls.into_iter().map(|l| l + lp).collect())
        })
        .collect::<Result<_>>()?;
    let names = problem.free_names();
    (0..times.len())
        .map(|k| {
            let w = per_point.iter().map(|row| row[k]).collect();
            GridPosterior::from_log_weights(names.clone(), axes.to_vec(), w)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::Prior;
    use crate::likelihood::ReferenceRate;
    use crate::models::{StaticModel, TwoLevelModel};
    use crate::record::{JumpRecord, Record};
    use crate::trajectory::{simulate_jump, SimOptions};

    fn prior_on_grid(prior: &Prior, axis: &[f64]) -> Vec<f64> {
        let w: Vec<f64> = axis.iter().map(|&x| prior.ln_pdf(x).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn uninformative_record_returns_prior() {
        let m = StaticModel::unobserved_atom(1.0, 0.3);
        let r: Record = JumpRecord::new(5.0, 0.01, vec![]).unwrap().into();
        let prior = Prior::normal(0.2, 0.7).unwrap();
        let p = InferenceProblem::new(&m, &r, vec![0.0], vec![0], vec![prior]).unwrap();
        let axis = linspace(-2.0, 2.0, 41);
        let post = grid_posterior(&p, std::slice::from_ref(&axis)).unwrap();
        for (a, b) in post.probabilities().iter().zip(prior_on_grid(&prior, &axis)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_grid() {
        let m = TwoLevelModel::new();
        let r = simulate_jump(&m, &[1.3, 1.43, 0.55], &SimOptions::new(20.0, 0.01, 1)).unwrap().record;
        let p = InferenceProblem::new(&m, &r, vec![1.3, 0.0, 0.55], vec![1], vec![Prior::normal(2.0, 1.0).unwrap()])
            .unwrap();
        let post = grid_posterior(&p, &[vec![1.4]]).unwrap();
        assert_eq!(post.probabilities(), vec![1.0]);
    }

    #[test]
    fn impossible_everywhere_is_an_error() {
        let m = TwoLevelModel::new();
        let r: Record = JumpRecord::new(2.0, 0.01, vec![0.5]).unwrap().into();
        // no drive: the atom never leaves the ground state, so no click is possible
        let p = InferenceProblem::new(&m, &r, vec![0.0, 0.0, 1.0], vec![2], vec![Prior::uniform(0.5, 2.0).unwrap()])
            .unwrap();
        assert_eq!(grid_posterior(&p, &[linspace(0.5, 2.0, 5)]), Err(Error::ImpossibleEverywhere));
    }

    #[test]
    fn evolution_matches_truncated_records() {
        let m = TwoLevelModel::new();
        let r = simulate_jump(&m, &[1.3, 1.43, 0.55], &SimOptions::new(40.0, 0.01, 3)).unwrap().record;
        let prior = Prior::normal(2.0, 1.0).unwrap();
        let p = InferenceProblem::new(&m, &r, vec![1.3, 0.0, 0.55], vec![1], vec![prior]).unwrap();
        let axis = linspace(-1.0, 5.0, 31);
        let times = [0.0, 10.0, 25.0, 40.0];
        let evo = posterior_evolution(&p, std::slice::from_ref(&axis), &times).unwrap();
        for (a, b) in evo[0].probabilities().iter().zip(prior_on_grid(&prior, &axis)) {
            assert!((a - b).abs() < 1e-12);
        }
        for (k, &t) in times.iter().enumerate().skip(1) {
            let rt = r.truncated(t).unwrap();
            let pt = InferenceProblem::new(&m, &rt, vec![1.3, 0.0, 0.55], vec![1], vec![prior]).unwrap();
            assert_eq!(evo[k], grid_posterior(&pt, std::slice::from_ref(&axis)).unwrap());
        }
    }

    #[test]
    fn reference_rate_does_not_change_posterior() {
        let m = TwoLevelModel::new();
        let r = simulate_jump(&m, &[1.3, 1.43, 0.55], &SimOptions::new(40.0, 0.01, 5)).unwrap().record;
        let priors = vec![Prior::normal(2.0, 1.0).unwrap(), Prior::uniform(0.2, 1.0).unwrap()];
        let p = InferenceProblem::new(&m, &r, vec![1.3, 0.0, 0.0], vec![1, 2], priors).unwrap();
        let axes = [linspace(0.0, 3.0, 13), linspace(0.3, 0.9, 7)];
        let a = grid_posterior(&p, &axes).unwrap();
        let b = grid_posterior(&p.clone().with_reference_rate(ReferenceRate::new(0.05).unwrap()), &axes).unwrap();
        for (x, y) in a.log_weights.iter().zip(b.log_weights.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!((a.marginal(1).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_indexing_is_row_major() {
        let post = GridPosterior::from_log_weights(
            vec!["a".into(), "b".into()],
            vec![vec![0.0, 1.0], vec![10.0, 20.0, 30.0]],
            vec![0.0; 6],
        )
        .unwrap();
        assert_eq!(post.point(4), vec![1.0, 20.0]);
        assert!((post.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(post.marginal(0), vec![0.5, 0.5]);
    }
}
