//! Likelihood tangents and Monte Carlo Fisher information.
//!
//! The tangent `ρⁱ = ∂ᵢρ̃ / tr ρ̃` is carried along the filter by
//! differentiating the linear step maps; its trace is the score `∂ᵢ l`.
//! The Fisher matrix is the ensemble mean of the score outer product over
//! records simulated at the true parameters.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::likelihood::ReferenceRate;
use crate::models::ParametricModel;
use crate::propagator::{Propagator, StepInput};
use crate::quantum::{ComplexMatrix, DensityMatrix};
use crate::record::{step_count, MeasurementKind, Record};
use crate::trajectory::{run_diffusion, run_jump, trajectory_rng, Noise};

/// One tangent matrix per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentState {
    pub mats: Vec<ComplexMatrix>,
}

impl TangentState {
    pub fn zeros(dim: usize, n: usize) -> Self {
        Self {
            mats: vec![ComplexMatrix::zeros(dim); n],
        }
    }

    /// `tr(ρⁱ)` for each parameter.
    pub fn scores(&self) -> Vec<f64> {
        self.mats.iter().map(|m| m.trace().re).collect()
    }
}

/// Advances `(ρ, ρⁱ)` by one measurement step, tracking every model parameter.
pub fn propagate_tangent(
    model: &dyn ParametricModel,
    theta: &[f64],
    rho: &DensityMatrix,
    tangent: &TangentState,
    input: StepInput,
    dt: f64,
) -> Result<(DensityMatrix, TangentState)> {
    let n = model.n_params();
    if tangent.mats.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: tangent.mats.len(),
        });
    }
    let tracked: Vec<usize> = (0..n).collect();
    let prop = Propagator::new(model, theta, dt, &tracked)?;
    let mut state = prop.state_from(rho, &tangent.mats)?;
    prop.step(&mut state, input, ReferenceRate::default().value());
    if state.is_impossible() {
        return Err(Error::NonPositiveTrace { trace: 0.0, step: 0 });
    }
    Ok((state.density_matrix(), TangentState { mats: state.tangents }))
}

/// Log-likelihood and score `(∂ᵢ l)` for the parameters `params` on a fixed record.
pub fn score(
    model: &dyn ParametricModel,
    theta: &[f64],
    record: &Record,
    lambda: ReferenceRate,
    params: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let prop = Propagator::new(model, theta, record.dt(), params)?;
    let mut state = prop.initial_state();
    for input in record.inputs() {
        prop.step(&mut state, input, lambda.value());
    }
    if state.is_impossible() {
        return Err(Error::NonPositiveTrace {
            trace: 0.0,
            step: state.step,
        });
    }
    Ok((state.loglik, state.scores()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FisherMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub std_err: Vec<Vec<f64>>,
    pub n_traj: usize,
    /// Ensemble mean of the score and its standard error; both should vanish.
    pub mean_score: Vec<f64>,
    pub score_std_err: Vec<f64>,
}

impl FisherMatrix {
    /// Builds the estimate from per-trajectory scores, summed in input order.
    pub fn from_scores(names: Vec<String>, scores: &[Vec<f64>]) -> Result<Self> {
        let n_traj = scores.len();
        if n_traj < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 trajectories, got {n_traj}")));
        }
        let d = names.len();
        if let Some(s) = scores.iter().find(|s| s.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: s.len(),
            });
        }
        let nf = n_traj as f64;
        let mut values = vec![vec![0.0; d]; d];
        let mut std_err = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in i..d {
                let mean = scores.iter().map(|s| s[i] * s[j]).sum::<f64>() / nf;
                let var = scores.iter().map(|s| (s[i] * s[j] - mean).powi(2)).sum::<f64>() / (nf - 1.0);
                let se = (var / nf).sqrt();
                values[i][j] = mean;
                values[j][i] = mean;
                std_err[i][j] = se;
                std_err[j][i] = se;
            }
        }
        let mut mean_score = vec![0.0; d];
        let mut score_std_err = vec![0.0; d];
        for i in 0..d {
            let mean = scores.iter().map(|s| s[i]).sum::<f64>() / nf;
            let var = scores.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            mean_score[i] = mean;
            score_std_err[i] = (var / nf).sqrt();
        }
        Ok(Self {
            names,
            values,
            std_err,
            n_traj,
            mean_score,
            score_std_err,
        })
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn max_std_err(&self) -> f64 {
        self.std_err.iter().flatten().fold(0.0, |a, &b| a.max(b))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let d = self.dim();
        let m = nalgebra::DMatrix::from_fn(d, d, |i, j| self.values[i][j]);
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// Scores of `n_traj` simulated records, trajectory `k` on stream `stream_base + k`.
fn simulate_scores(
    prop: &Propagator,
    n_steps: usize,
    n_traj: usize,
    seed: u64,
    stream_base: u64,
    kind: MeasurementKind,
) -> Result<Vec<Vec<f64>>> {
    (0..n_traj as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = trajectory_rng(seed, stream_base + k);
            let run = match kind {
                MeasurementKind::Jump => run_jump(prop, n_steps, 1.0, &mut rng, None)?,
                MeasurementKind::Diffusion => run_diffusion(prop, n_steps, Noise::Draw(&mut rng), None)?,
            };
            Ok(run.last.scores())
        })
        .collect()
}

/// Monte Carlo Fisher information for the parameters `params` at `theta`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_fisher(
    model: &dyn ParametricModel,
    theta: &[f64],
    params: &[usize],
    horizon: f64,
    dt: f64,
    n_traj: usize,
    seed: u64,
    kind: MeasurementKind,
) -> Result<FisherMatrix> {
    estimate_fisher_on_streams(model, theta, params, horizon, dt, n_traj, seed, 0, kind)
}

#[allow(clippy::too_many_arguments)]
fn estimate_fisher_on_streams(
    model: &dyn ParametricModel,
    theta: &[f64],
    params: &[usize],
    horizon: f64,
    dt: f64,
    n_traj: usize,
    seed: u64,
    stream_base: u64,
    kind: MeasurementKind,
) -> Result<FisherMatrix> {
    if n_traj < 2 {
        return Err(Error::InvalidArgument(format!("n_traj must be at least 2, got {n_traj}")));
    }
    if params.is_empty() {
        return Err(Error::InvalidArgument("no parameters selected".into()));
    }
    let n = step_count(horizon, dt)?;
    let prop = Propagator::new(model, theta, dt, params)?;
    let scores = simulate_scores(&prop, n, n_traj, seed, stream_base, kind)?;
    let all = model.parameter_names();
    FisherMatrix::from_scores(params.iter().map(|&i| all[i].clone()).collect(), &scores)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FisherGridPoint {
    pub x: f64,
    pub y: f64,
    pub fisher: FisherMatrix,
}

/// Fisher matrices for `(θ_x, θ_y)` on the product grid `xs × ys` (row-major in
/// `xs`), other parameters fixed at `base`. Each point uses its own block of
/// random streams, so points are statistically independent.
#[allow(clippy::too_many_arguments)]
pub fn fisher_grid(
    model: &dyn ParametricModel,
    base: &[f64],
    axes: (usize, usize),
    xs: &[f64],
    ys: &[f64],
    horizon: f64,
    dt: f64,
    n_traj: usize,
    seed: u64,
    kind: MeasurementKind,
) -> Result<Vec<FisherGridPoint>> {
    let (ix, iy) = axes;
    if ix == iy {
        return Err(Error::InvalidArgument("grid axes must be distinct parameters".into()));
    }
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for (a, &x) in xs.iter().enumerate() {
        for (b, &y) in ys.iter().enumerate() {
            let mut theta = base.to_vec();
            theta[ix] = x;
            theta[iy] = y;
            let point = (a * ys.len() + b) as u64;
            let fisher = estimate_fisher_on_streams(
                model,
                &theta,
                &[ix, iy],
                horizon,
                dt,
                n_traj,
                seed,
                point * n_traj as u64,
                kind,
            )?;
            out.push(FisherGridPoint { x, y, fisher });
        }
    }
    Ok(out)
}
