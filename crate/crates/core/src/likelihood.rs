//! Log-likelihood of a fixed record under candidate parameters.
//!
//! The record is replayed through the filter; the log of the trace removed at
//! each renormalization accumulates to `l_T = log L_T`, the log density of the
//! record relative to a reference process (Poisson of rate `λ` for photon
//! counting, Wiener for homodyne detection).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ParametricModel;
use crate::propagator::{Propagator, StepInput};
use crate::quantum::DensityMatrix;
use crate::record::{step_count, DiffusionRecord, JumpRecord, Record};
use crate::trajectory::{run_jump, trajectory_rng};

/// Rate of the reference Poisson process for photon counting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ReferenceRate(f64);

impl ReferenceRate {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda > 0.0 && lambda.is_finite() {
            Ok(Self(lambda))
        } else {
            Err(Error::OutOfDomain {
                name: "lambda".into(),
                value: lambda,
                reason: "reference rate must be positive",
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for ReferenceRate {
    fn default() -> Self {
        Self(1.0)
    }
}

impl TryFrom<f64> for ReferenceRate {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ReferenceRate> for f64 {
    fn from(r: ReferenceRate) -> f64 {
        r.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LikelihoodResult {
    /// `−∞` when the record is impossible under the parameters.
    pub loglik: f64,
    /// `(t, l_t, ρ_t)` at the sampled steps, when requested.
    pub trajectory: Option<Vec<(f64, f64, DensityMatrix)>>,
}

impl LikelihoodResult {
    pub fn is_impossible(&self) -> bool {
        self.loglik == f64::NEG_INFINITY
    }
}

fn replay(
    model: &dyn ParametricModel,
    theta: &[f64],
    record: &Record,
    lambda: ReferenceRate,
    sample_every: Option<usize>,
) -> Result<LikelihoodResult> {
    let prop = Propagator::new(model, theta, record.dt(), &[])?;
    let mut state = prop.initial_state();
    let mut trajectory = sample_every.map(|_| Vec::new());
    let dt = record.dt();
    let mut reported = false;
    for (k, input) in record.inputs().enumerate() {
        if let (Some(every), Some(traj)) = (sample_every, trajectory.as_mut()) {
            if k % every == 0 && !state.is_impossible() {
                traj.push((k as f64 * dt, state.loglik, state.density_matrix()));
            }
        }
        prop.step(&mut state, input, lambda.value());
        if state.is_impossible() && !reported {
            log::debug!("record impossible under {theta:?} at step {k}");
            reported = true;
        }
    }
    if let Some(traj) = trajectory.as_mut() {
        if !state.is_impossible() {
            traj.push((record.n_steps() as f64 * dt, state.loglik, state.density_matrix()));
        }
    }
    Ok(LikelihoodResult {
        loglik: state.loglik,
        trajectory,
    })
}

/// Photon-counting log-likelihood relative to a Poisson process of rate `λ`.
pub fn loglik_jump(
    model: &dyn ParametricModel,
    theta: &[f64],
    record: &JumpRecord,
    lambda: ReferenceRate,
) -> Result<LikelihoodResult> {
    replay(model, theta, &Record::Jump(record.clone()), lambda, None)
}

/// Homodyne log-likelihood relative to the Wiener measure.
pub fn loglik_diffusion(
    model: &dyn ParametricModel,
    theta: &[f64],
    record: &DiffusionRecord,
) -> Result<LikelihoodResult> {
    replay(model, theta, &Record::Diffusion(record.clone()), ReferenceRate::default(), None)
}

/// Log-likelihood of either record kind; `λ` is ignored for homodyne records.
pub fn loglik(model: &dyn ParametricModel, theta: &[f64], record: &Record, lambda: ReferenceRate) -> Result<f64> {
    let prop = Propagator::new(model, theta, record.dt(), &[])?;
    if let Record::Jump(r) = record {
        return Ok(jump_snapshots(&prop, r, lambda.value(), &[r.n_steps()])[0]);
    }
    let mut state = prop.initial_state();
    for input in record.inputs() {
        prop.step(&mut state, input, lambda.value());
        if state.is_impossible() {
            return Ok(f64::NEG_INFINITY);
        }
    }
    Ok(state.loglik)
}

/// Photon-counting replay that jumps over no-click stretches, reading `l_t`
/// at each of the sorted step counts `stops`. The main pass always advances
/// click to click, so a snapshot equals the replay of the truncated record.
fn jump_snapshots(prop: &Propagator, record: &JumpRecord, lambda: f64, stops: &[usize]) -> Vec<f64> {
    let powers = prop.no_click_powers();
    let mut state = prop.initial_state();
    let mut out = Vec::with_capacity(stops.len());
    let mut stops = stops.iter().copied().peekable();
    let mut emit = |state: &crate::propagator::FilterState, until: usize, out: &mut Vec<f64>| {
        while let Some(s) = stops.next_if(|&s| s <= until) {
            let mut probe = state.clone();
            prop.advance_no_click(&powers, &mut probe, s - state.step, lambda);
            out.push(probe.loglik);
        }
    };
    for &c in record.click_steps() {
        emit(&state, c, &mut out);
        let gap = c - state.step;
        prop.advance_no_click(&powers, &mut state, gap, lambda);
        prop.step(&mut state, StepInput::Jump { click: true }, lambda);
    }
    emit(&state, usize::MAX, &mut out);
    out
}

/// Like [`loglik`], also returning `(t, l_t, ρ_t)` every `every` steps.
pub fn loglik_trajectory(
    model: &dyn ParametricModel,
    theta: &[f64],
    record: &Record,
    lambda: ReferenceRate,
    every: usize,
) -> Result<LikelihoodResult> {
    replay(model, theta, record, lambda, Some(every.max(1)))
}

/// `l_t` after each of the given step counts (sorted, at most the record length).
pub fn loglik_snapshots(
    model: &dyn ParametricModel,
    theta: &[f64],
    record: &Record,
    lambda: ReferenceRate,
    steps: &[usize],
) -> Result<Vec<f64>> {
    if steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("snapshot steps must be sorted".into()));
    }
    if let Some(&last) = steps.last() {
        if last > record.n_steps() {
            return Err(Error::InvalidArgument(format!(
                "snapshot step {last} beyond record length {}",
                record.n_steps()
            )));
        }
    }
    let prop = Propagator::new(model, theta, record.dt(), &[])?;
    if let Record::Jump(r) = record {
        return Ok(jump_snapshots(&prop, r, lambda.value(), steps));
    }
    let mut state = prop.initial_state();
    let mut out = Vec::with_capacity(steps.len());
    let mut next = 0;
    let mut inputs = record.inputs();
    for k in 0..=record.n_steps() {
        while next < steps.len() && steps[next] == k {
            out.push(state.loglik);
            next += 1;
        }
        if next == steps.len() {
            break;
        }
        if let Some(input) = inputs.next() {
            prop.step(&mut state, input, lambda.value());
        }
    }
    Ok(out)
}

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    /// Mean and standard error of the mean; summation is sequential in input order.
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 samples, got {n}")));
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(Self {
            mean,
            std_err: (var / n as f64).sqrt(),
        })
    }
}

/// Relative entropy of the photon-counting record law with respect to a
/// Poisson process of rate `λ`, `S = E[l_T]`, estimated from `n_traj` records.
pub fn relative_entropy(
    model: &dyn ParametricModel,
    theta: &[f64],
    lambda: ReferenceRate,
    horizon: f64,
    dt: f64,
    n_traj: usize,
    seed: u64,
) -> Result<Estimate> {
    if n_traj < 2 {
        return Err(Error::InvalidArgument(format!("n_traj must be at least 2, got {n_traj}")));
    }
    let n = step_count(horizon, dt)?;
    let prop = Propagator::new(model, theta, dt, &[])?;
    let samples: Vec<f64> = (0..n_traj as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = trajectory_rng(seed, k);
            run_jump(&prop, n, lambda.value(), &mut rng, None).map(|run| run.last.loglik)
        })
        .collect::<Result<_>>()?;
    Estimate::from_samples(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{StaticModel, TwoLevelModel};
    use crate::quantum::ComplexMatrix;
    use crate::trajectory::{simulate_diffusion, simulate_jump, SimOptions};
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    type M = DMatrix<Complex64>;

    fn to_na(m: &ComplexMatrix) -> M {
        M::from_fn(m.dim(), m.dim(), |i, j| m[(i, j)])
    }

    /// Direct integration of the unnormalized linear recursion, using
    /// nalgebra's matrix exponential and no renormalization.
    fn unnormalized_trace(model: &dyn ParametricModel, theta: &[f64], record: &Record, lambda: f64) -> f64 {
        let ops = model.build(theta).unwrap();
        let dt = record.dt();
        let h = to_na(&ops.hamiltonian);
        let c = to_na(&ops.collapse);
        let js: Vec<M> = ops.hidden.iter().map(to_na).collect();
        let mut damping = c.adjoint() * &c;
        for j in &js {
            damping += j.adjoint() * j;
        }
        let i = Complex64::new(0.0, 1.0);
        let k = h - damping * Complex64::new(0.0, 0.5);
        let u0 = (k * (-i * dt)).exp();
        let mut rho = to_na(model.initial_state(theta).unwrap().matrix());
        for input in record.inputs() {
            let hidden: M = js.iter().fold(M::zeros(rho.nrows(), rho.ncols()), |acc, j| {
                acc + j * &rho * j.adjoint() * Complex64::from(dt)
            });
            rho = match input {
                crate::StepInput::Jump { click: false } => {
                    (&u0 * &rho * u0.adjoint() + hidden) * Complex64::from((lambda * dt).exp())
                }
                crate::StepInput::Jump { click: true } => &c * &rho * c.adjoint() / Complex64::from(lambda),
                crate::StepInput::Diffusion { dy } => {
                    let a = &u0 + &c * Complex64::from(dy);
                    &a * &rho * a.adjoint() + hidden
                }
            };
        }
        rho.trace().re
    }

    #[test]
    fn waiting_time_closed_form() {
        let record = JumpRecord::new(2.0, 1e-3, vec![1.0]).unwrap();
        let l = loglik_jump(&TwoLevelModel::excited(), &[0.0, 0.0, 0.55], &record, ReferenceRate::default())
            .unwrap()
            .loglik;
        let exact = (1.0 - 0.55) * 1.0 + 0.55f64.ln() + 1.0 * (2.0 - 1.0);
        assert!((exact - 0.8522).abs() < 1e-4);
        assert!((l - exact).abs() < 5e-3, "{l} vs {exact}");
    }

    #[test]
    fn unmonitored_record_has_reference_likelihood() {
        let m = StaticModel::unobserved_atom(1.3, 0.4);
        let record = JumpRecord::new(2.0, 0.01, vec![]).unwrap();
        let l = loglik_jump(&m, &[0.0], &record, ReferenceRate::default()).unwrap().loglik;
        assert!((l - 2.0).abs() < 1e-12);
        let out = simulate_diffusion(&m, &[0.0], &SimOptions::new(5.0, 0.01, 3)).unwrap();
        let l = loglik_diffusion(&m, &[0.0], out.record.as_diffusion().unwrap()).unwrap().loglik;
        assert!(l.abs() < 1e-12, "{l}");
    }

    #[test]
    fn click_without_emission_is_impossible() {
        let record = JumpRecord::new(2.0, 0.01, vec![0.5]).unwrap();
        let r = loglik_jump(&TwoLevelModel::new(), &[0.0, 0.0, 1.0], &record, ReferenceRate::default()).unwrap();
        assert!(r.is_impossible());
    }

    #[test]
    fn matches_unnormalized_integration() {
        let theta = [1.3, 1.43, 0.55];
        let m = TwoLevelModel::new();
        for seed in 0..5 {
            let opts = SimOptions::new(10.0, 0.01, seed);
            for record in [simulate_jump(&m, &theta, &opts).unwrap().record, simulate_diffusion(&m, &theta, &opts).unwrap().record] {
                for cand in [[1.3, 1.43, 0.55], [0.9, -0.3, 1.2]] {
                    let l = loglik(&m, &cand, &record, ReferenceRate::new(0.7).unwrap()).unwrap();
                    let direct = unnormalized_trace(&m, &cand, &record, 0.7);
                    assert!(((l.exp() - direct) / direct).abs() < 1e-8, "{} vs {direct}", l.exp());
                }
            }
        }
    }

    #[test]
    fn bimodal_matches_unnormalized_integration() {
        let m = crate::models::BimodalModel::new();
        let theta = [1.1, 1.3, 1.6, 2.2, 0.2, 2.4, 0.03, 0.08];
        let out = crate::trajectory::simulate_bimodal_truth(&theta, &SimOptions::new(20.0, 0.01, 8), None).unwrap();
        let l = loglik(&m, &theta, &out.record, ReferenceRate::default()).unwrap();
        let direct = unnormalized_trace(&m, &theta, &out.record, 1.0);
        assert!(((l.exp() - direct) / direct).abs() < 1e-8);
    }

    #[test]
    fn lambda_shift_is_parameter_independent() {
        let m = TwoLevelModel::new();
        let out = simulate_jump(&m, &[1.3, 1.43, 0.55], &SimOptions::new(40.0, 0.01, 21)).unwrap();
        let n = out.record.as_jump().unwrap().n_clicks() as f64;
        let (l1, l2) = (ReferenceRate::new(1.0).unwrap(), ReferenceRate::new(0.2).unwrap());
        for theta in [[1.3, 1.43, 0.55], [0.5, 0.0, 2.0], [2.0, -1.0, 0.3]] {
            let d = loglik(&m, &theta, &out.record, l1).unwrap() - loglik(&m, &theta, &out.record, l2).unwrap();
            // click steps carry no λ·dt term
            let expected = (1.0 - 0.2) * (40.0 - n * 0.01) - n * (1.0f64 / 0.2).ln();
            assert!((d - expected).abs() < 1e-10, "{d} vs {expected}");
        }
    }

    #[test]
    fn replay_reproduces_generator_states() {
        let m = TwoLevelModel::new();
        let theta = [1.3, 1.43, 0.55];
        let opts = SimOptions::new(20.0, 0.01, 4).sampling_every(10);
        for out in [simulate_jump(&m, &theta, &opts).unwrap(), simulate_diffusion(&m, &theta, &opts).unwrap()] {
            let replayed = loglik_trajectory(&m, &theta, &out.record, ReferenceRate::default(), 10).unwrap();
            let generated = out.states.unwrap();
            let traj = replayed.trajectory.unwrap();
            assert_eq!(generated.len(), traj.len());
            for ((t1, rho1), (t2, _, rho2)) in generated.iter().zip(traj.iter()) {
                assert_eq!(t1, t2);
                assert_eq!(rho1, rho2);
            }
        }
    }

    #[test]
    fn snapshots_match_truncated_records() {
        let m = TwoLevelModel::new();
        let theta = [1.3, 1.43, 0.55];
        let out = simulate_jump(&m, &theta, &SimOptions::new(30.0, 0.01, 2)).unwrap();
        let cand = [1.0, 1.0, 0.5];
        let snaps = loglik_snapshots(&m, &cand, &out.record, ReferenceRate::default(), &[0, 500, 1700, 3000]).unwrap();
        assert_eq!(snaps[0], 0.0);
        for (i, t) in [5.0, 17.0, 30.0].iter().enumerate() {
            let l = loglik(&m, &cand, &out.record.truncated(*t).unwrap(), ReferenceRate::default()).unwrap();
            assert_eq!(l, snaps[i + 1]);
        }
    }

    #[test]
    fn block_replay_matches_single_steps() {
        let two = TwoLevelModel::new();
        let bi = crate::models::BimodalModel::new();
        let cases: [(&dyn ParametricModel, Vec<f64>); 2] = [
            (&two, vec![1.3, 1.43, 0.55]),
            (&bi, vec![1.0, 0.5, 1.2, 2.5, 0.3, 3.0, 0.05, 0.1]),
        ];
        for (model, theta) in cases {
            let out = simulate_jump(model, &theta, &SimOptions::new(60.0, 0.01, 4)).unwrap();
            let Record::Jump(r) = &out.record else { unreachable!() };
            let fast = loglik(model, &theta, &out.record, ReferenceRate::new(0.7).unwrap()).unwrap();
            let slow = loglik_jump(model, &theta, r, ReferenceRate::new(0.7).unwrap()).unwrap().loglik;
            assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1.0), "{fast} vs {slow}");
            let steps = [0, 1, 2047, 3000, r.n_steps()];
            let snaps = loglik_snapshots(model, &theta, &out.record, ReferenceRate::default(), &steps).unwrap();
            for (&k, &l) in steps.iter().zip(&snaps) {
                let want = if k == 0 {
                    0.0
                } else {
                    let t = r.truncated(k as f64 * 0.01).unwrap();
                    loglik_jump(model, &theta, &t, ReferenceRate::default()).unwrap().loglik
                };
                assert!((l - want).abs() <= 1e-10 * want.abs().max(1.0), "step {k}: {l} vs {want}");
            }
        }
    }

    #[test]
    fn poisson_reference_has_zero_entropy() {
        let lambda = 0.8;
        let m = StaticModel::poisson(lambda, 2).unwrap();
        let opts = SimOptions::new(20.0, 0.01, 5);
        for k in 0..20 {
            let out = simulate_jump(&m, &[0.0], &opts.clone().with_stream(k)).unwrap();
            let l = loglik(&m, &[0.0], &out.record, ReferenceRate::new(lambda).unwrap()).unwrap();
            assert!(l.abs() < 1e-12, "{l}");
        }
        let s = relative_entropy(&m, &[0.0], ReferenceRate::new(lambda).unwrap(), 20.0, 0.01, 10, 1).unwrap();
        assert!(s.mean.abs() < 1e-12 && s.std_err < 1e-12);
    }

    #[test]
    fn relative_entropy_is_reproducible_and_nonnegative() {
        let m = TwoLevelModel::new();
        let lambda = ReferenceRate::new(crate::models::stationary_emission_rate(1.3, 1.43, 0.55).unwrap()).unwrap();
        let a = relative_entropy(&m, &[1.3, 1.43, 0.55], lambda, 20.0, 0.01, 64, 9).unwrap();
        let b = relative_entropy(&m, &[1.3, 1.43, 0.55], lambda, 20.0, 0.01, 64, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.mean >= -3.0 * a.std_err);
    }

    #[test]
    fn reference_rate_validation() {
        assert!(ReferenceRate::new(0.0).is_err());
        assert!(ReferenceRate::new(f64::NAN).is_err());
        assert_eq!(ReferenceRate::default().value(), 1.0);
    }
}
