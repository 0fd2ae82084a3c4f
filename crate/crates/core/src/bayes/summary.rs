use serde::Serialize;

use super::MCMCChain;
use crate::error::{Error, Result};

/// Default number of histogram bins per parameter.
pub const DEFAULT_BINS: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// `bins` equal bins spanning `[lo, hi]`; values outside are dropped.
    pub fn new(values: impl Iterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Self {
        let (lo, hi) = widen(lo, hi);
        let bins = bins.max(1);
        let edges: Vec<f64> = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
        let mut counts = vec![0; bins];
        for v in values {
            if let Some(b) = bin_index(v, lo, hi, bins) {
                counts[b] += 1;
            }
        }
        Self { edges, counts }
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram2d {
    pub x: String,
    pub y: String,
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// `counts[i][j]` for x bin `i`, y bin `j`.
    pub counts: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
    /// Center of the fullest histogram bin.
    pub mode: f64,
    pub histogram: Histogram,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub n_steps: usize,
    pub burnin: usize,
    pub n_samples: usize,
    pub accepted: usize,
    /// Over all steps, `accepted / n_steps`.
    pub acceptance_rate: f64,
    pub post_burnin_acceptance_rate: f64,
    pub parameters: Vec<ParameterSummary>,
    pub covariance: Vec<Vec<f64>>,
    pub pairs: Vec<Histogram2d>,
}

fn widen(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let pad = 0.5 * lo.abs().max(1.0) * 1e-6;
        (lo - pad, hi + pad)
    }
}

fn bin_index(v: f64, lo: f64, hi: f64, bins: usize) -> Option<usize> {
    if !(lo..=hi).contains(&v) {
        return None;
    }
    Some((((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1))
}

/// Linearly interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let (i, frac) = (h.floor() as usize, h - h.floor());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Moments, quantiles and histograms of the samples after `burnin`.
pub fn summarize(chain: &MCMCChain, burnin: usize, bins: usize) -> Result<Summary> {
    if burnin >= chain.len() {
        return Err(Error::EmptyChain {
            burnin,
            len: chain.len(),
        });
    }
    let xs = &chain.samples[burnin..];
    let n = xs.len();
    let d = chain.names.len();
    let mut means = vec![0.0; d];
    for x in xs {
        for (m, v) in means.iter_mut().zip(x) {
            *m += v;
        }
    }
    for m in means.iter_mut() {
        *m /= n as f64;
    }
    let denom = (n.max(2) - 1) as f64;
    let mut covariance = vec![vec![0.0; d]; d];
    for x in xs {
        for i in 0..d {
            for j in 0..d {
                covariance[i][j] += (x[i] - means[i]) * (x[j] - means[j]);
            }
        }
    }
    for row in covariance.iter_mut() {
        for v in row.iter_mut() {
            *v = if n > 1 { *v / denom } else { 0.0 };
        }
    }
    let mut ranges = Vec::with_capacity(d);
    let mut parameters = Vec::with_capacity(d);
    for k in 0..d {
        let mut col: Vec<f64> = xs.iter().map(|x| x[k]).collect();
        col.sort_by(f64::total_cmp);
        let (lo, hi) = widen(col[0], col[n - 1]);
        ranges.push((lo, hi));
        let histogram = Histogram::new(col.iter().copied(), lo, hi, bins);
        let fullest = histogram
            .counts
            .iter()
            .enumerate()
            .max_by_key(|&(i, &c)| (c, std::cmp::Reverse(i)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mode = if col[0] == col[n - 1] { col[0] } else { histogram.centers()[fullest] };
        parameters.push(ParameterSummary {
            name: chain.names[k].clone(),
            mean: means[k],
            std: covariance[k][k].sqrt(),
            q05: quantile(&col, 0.05),
            median: quantile(&col, 0.5),
            q95: quantile(&col, 0.95),
            mode,
            histogram,
        });
    }
    let mut pairs = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            let (xl, xh) = ranges[i];
            let (yl, yh) = ranges[j];
            let bins = bins.max(1);
            let mut counts = vec![vec![0; bins]; bins];
            for x in xs {
                if let (Some(a), Some(b)) = (bin_index(x[i], xl, xh, bins), bin_index(x[j], yl, yh, bins)) {
                    counts[a][b] += 1;
                }
            }
            pairs.push(Histogram2d {
                x: chain.names[i].clone(),
                y: chain.names[j].clone(),
                x_edges: parameters[i].histogram.edges.clone(),
                y_edges: parameters[j].histogram.edges.clone(),
                counts,
            });
        }
    }
    Ok(Summary {
        n_steps: chain.len(),
        burnin,
        n_samples: n,
        accepted: chain.accepted,
        acceptance_rate: chain.acceptance_rate(),
        post_burnin_acceptance_rate: chain.acceptance_rate_after(burnin),
        parameters,
        covariance,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(samples: Vec<Vec<f64>>, flags: Vec<bool>) -> MCMCChain {
        let n = samples.len();
        let d = samples[0].len();
        MCMCChain {
            names: (0..d).map(|i| format!("p{i}")).collect(),
            samples,
            logliks: vec![0.0; n],
            log_priors: vec![0.0; n],
            accepted: flags.iter().filter(|&&a| a).count(),
            accepted_flags: flags,
            burnin: 0,
            proposal_cov: vec![vec![1.0; d]; d],
            init_attempts: 1,
        }
    }

    #[test]
    fn identical_samples() {
        let c = chain(vec![vec![1.5, -2.0]; 50], vec![false; 50]);
        let s = summarize(&c, 10, 20).unwrap();
        for p in &s.parameters {
            assert_eq!(p.std, 0.0);
            assert_eq!(p.q05, p.q95);
            assert_eq!(p.q05, p.median);
            assert_eq!(p.mode, p.mean);
            assert_eq!(p.histogram.counts.iter().sum::<usize>(), 40);
        }
        assert_eq!(s.pairs.len(), 1);
    }

    #[test]
    fn acceptance_from_counters() {
        let flags: Vec<bool> = (0..30).map(|i| i % 3 == 0).collect();
        let c = chain((0..30).map(|i| vec![i as f64]).collect(), flags);
        let s = summarize(&c, 0, 10).unwrap();
        assert_eq!(s.acceptance_rate, 10.0 / 30.0);
        assert_eq!(s.accepted, 10);
    }

    #[test]
    fn quantiles_of_a_ramp() {
        let c = chain((0..=100).map(|i| vec![i as f64]).collect(), vec![true; 101]);
        let s = summarize(&c, 0, 10).unwrap();
        let p = &s.parameters[0];
        assert!((p.q05 - 5.0).abs() < 1e-12 && (p.q95 - 95.0).abs() < 1e-12 && (p.mean - 50.0).abs() < 1e-12);
    }

    #[test]
    fn empty_after_burnin() {
        let c = chain(vec![vec![0.0]; 5], vec![true; 5]);
        assert_eq!(summarize(&c, 5, 10), Err(Error::EmptyChain { burnin: 5, len: 5 }));
    }
}
