//! Synthetic measurement records from the conditioned (filter) dynamics.
//!
//! Each trajectory draws from its own ChaCha8 stream selected by
//! `(seed, trajectory index)`, so ensembles are reproducible regardless of how
//! they are scheduled across threads.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::models::{BimodalModel, ParametricModel, TwoLevelModel};
use crate::propagator::{FilterState, Propagator, StepInput};
use crate::quantum::DensityMatrix;
use crate::record::{step_count, DiffusionRecord, JumpRecord, Record};

/// Click probabilities per step above this trigger a warning.
pub const MAX_CLICK_PROBABILITY: f64 = 0.1;

/// The random stream used for trajectory `index` of an ensemble seeded by `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOptions {
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    /// Stream index within the seed; distinct indices give independent trajectories.
    pub stream: u64,
    /// Store the conditioned state every `n` steps, at `t = 0` and at the end.
    pub sample_every: Option<usize>,
}

impl SimOptions {
    pub fn new(horizon: f64, dt: f64, seed: u64) -> Self {
        Self {
            horizon,
            dt,
            seed,
            stream: 0,
            sample_every: None,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn sampling_every(mut self, every: usize) -> Self {
        self.sample_every = Some(every.max(1));
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub record: Record,
    pub states: Option<Vec<(f64, DensityMatrix)>>,
    /// `(switch time, configuration)` entries, the first at `t = 0`.
    pub hidden_path: Option<Vec<(f64, usize)>>,
}

/// Result of a single simulated trajectory with the filter carried along.
pub(crate) struct Run {
    pub steps: Vec<usize>,
    pub dy: Vec<f64>,
    pub states: Option<Vec<(f64, DensityMatrix)>>,
    pub last: FilterState,
}

struct Sampler {
    every: Option<usize>,
    dt: f64,
    states: Vec<(f64, DensityMatrix)>,
}

impl Sampler {
    fn new(every: Option<usize>, dt: f64) -> Self {
        Self {
            every,
            dt,
            states: Vec::new(),
        }
    }

    fn observe(&mut self, step: usize, state: &FilterState) {
        if let Some(every) = self.every {
            if step % every == 0 {
                self.states.push((step as f64 * self.dt, state.density_matrix()));
            }
        }
    }

    /// Adds the final state and returns the samples.
    fn finish(mut self, n_steps: usize, state: &FilterState) -> Option<Vec<(f64, DensityMatrix)>> {
        if self.every.is_some() {
            self.states.push((n_steps as f64 * self.dt, state.density_matrix()));
        }
        self.every.map(|_| self.states)
    }
}

fn check_rate(p: f64, step: usize, warned: &mut bool) -> Result<()> {
    if p < -1e-12 || !p.is_finite() {
        return Err(Error::Unstable {
            step,
            reason: format!("click probability {p:e}"),
        });
    }
    if p > MAX_CLICK_PROBABILITY && !*warned {
        log::warn!(
            "click probability {p:.3} per step at step {step} exceeds {MAX_CLICK_PROBABILITY}; reduce dt"
        );
        *warned = true;
    }
    Ok(())
}

/// Steps the photon-counting filter forward, drawing clicks from the state.
pub(crate) fn run_jump(
    prop: &Propagator,
    n_steps: usize,
    lambda: f64,
    rng: &mut impl Rng,
    sample_every: Option<usize>,
) -> Result<Run> {
    let mut state = prop.initial_state();
    let mut sampler = Sampler::new(sample_every, prop.dt());
    let mut steps = Vec::new();
    let mut warned = false;
    for k in 0..n_steps {
        sampler.observe(k, &state);
        let p = prop.emission_rate(&state.rho) * prop.dt();
        check_rate(p, k, &mut warned)?;
        let u: f64 = rng.random();
        let click = u < p;
        if click {
            steps.push(k);
        }
        prop.step(&mut state, StepInput::Jump { click }, lambda);
        if state.is_impossible() {
            return Err(Error::Unstable {
                step: k,
                reason: "conditioned state lost its trace".into(),
            });
        }
    }
    Ok(Run {
        steps,
        dy: Vec::new(),
        states: sampler.finish(n_steps, &state),
        last: state,
    })
}

/// Steps the homodyne filter forward on the given Wiener increments, or on
/// freshly drawn ones when `noise` is `None`.
pub(crate) fn run_diffusion(
    prop: &Propagator,
    n_steps: usize,
    noise: Noise<'_>,
    sample_every: Option<usize>,
) -> Result<Run> {
    let mut state = prop.initial_state();
    let mut sampler = Sampler::new(sample_every, prop.dt());
    let mut dys = Vec::with_capacity(n_steps);
    let sqrt_dt = prop.dt().sqrt();
    let mut noise = noise;
    for k in 0..n_steps {
        sampler.observe(k, &state);
        let dw = match &mut noise {
            Noise::Draw(rng) => {
                let z: f64 = rng.sample(StandardNormal);
                z * sqrt_dt
            }
            Noise::Given(w) => w[k],
        };
        let dy = prop.homodyne_mean(&state.rho) * prop.dt() + dw;
        dys.push(dy);
        prop.step(&mut state, StepInput::Diffusion { dy }, 0.0);
        if state.is_impossible() {
            return Err(Error::Unstable {
                step: k,
                reason: "conditioned state lost its trace".into(),
            });
        }
    }
    Ok(Run {
        steps: Vec::new(),
        dy: dys,
        states: sampler.finish(n_steps, &state),
        last: state,
    })
}

pub(crate) enum Noise<'a> {
    Draw(&'a mut ChaCha8Rng),
    Given(&'a [f64]),
}

/// Simulates a photon-counting record.
pub fn simulate_jump(model: &dyn ParametricModel, theta: &[f64], opts: &SimOptions) -> Result<SimOutput> {
    let n = step_count(opts.horizon, opts.dt)?;
    let prop = Propagator::new(model, theta, opts.dt, &[])?;
    let mut rng = trajectory_rng(opts.seed, opts.stream);
    let run = run_jump(&prop, n, 1.0, &mut rng, opts.sample_every)?;
    Ok(SimOutput {
        record: JumpRecord::from_steps(n, opts.dt, &run.steps)?.into(),
        states: run.states,
        hidden_path: None,
    })
}

/// Simulates a homodyne record, `dY = tr(cρ + ρc†) dt + dW`.
pub fn simulate_diffusion(model: &dyn ParametricModel, theta: &[f64], opts: &SimOptions) -> Result<SimOutput> {
    let n = step_count(opts.horizon, opts.dt)?;
    let prop = Propagator::new(model, theta, opts.dt, &[])?;
    let mut rng = trajectory_rng(opts.seed, opts.stream);
    let run = run_diffusion(&prop, n, Noise::Draw(&mut rng), opts.sample_every)?;
    Ok(SimOutput {
        record: DiffusionRecord::new(n as f64 * opts.dt, opts.dt, run.dy)?.into(),
        states: run.states,
        hidden_path: None,
    })
}

/// Homodyne simulation driven by a prescribed Wiener path `dW` (one increment per step).
pub fn simulate_diffusion_driven(
    model: &dyn ParametricModel,
    theta: &[f64],
    dt: f64,
    wiener: &[f64],
    sample_every: Option<usize>,
) -> Result<SimOutput> {
    if wiener.is_empty() {
        return Err(Error::InvalidArgument("empty Wiener path".into()));
    }
    let prop = Propagator::new(model, theta, dt, &[])?;
    let run = run_diffusion(&prop, wiener.len(), Noise::Given(wiener), sample_every)?;
    Ok(SimOutput {
        record: DiffusionRecord::new(wiener.len() as f64 * dt, dt, run.dy)?.into(),
        states: run.states,
        hidden_path: None,
    })
}

/// Ground-truth bimodal trajectory: the configuration is sampled explicitly
/// as a two-state Markov chain with rates `W_ab`, `W_ba`, and the 2-level
/// atomic state evolves under the current configuration's parameters.
///
/// `start` fixes the initial configuration; otherwise it is drawn from the
/// stationary distribution. Sampled states are the atomic (2×2) states.
pub fn simulate_bimodal_truth(
    theta: &[f64],
    opts: &SimOptions,
    start: Option<usize>,
) -> Result<SimOutput> {
    BimodalModel::new().check_domain(theta)?;
    let n = step_count(opts.horizon, opts.dt)?;
    let dt = opts.dt;
    let atom = TwoLevelModel::new();
    let props = [
        Propagator::new(&atom, &BimodalModel::config_parameters(theta, 0), dt, &[])?,
        Propagator::new(&atom, &BimodalModel::config_parameters(theta, 1), dt, &[])?,
    ];
    let rates = [theta[BimodalModel::W_AB], theta[BimodalModel::W_BA]];
    let mut rng = trajectory_rng(opts.seed, opts.stream);
    let mut config = match start {
        Some(c) if c < 2 => c,
        Some(c) => return Err(Error::InvalidArgument(format!("configuration {c} is not 0 or 1"))),
        None => {
            let (pa, _) = BimodalModel::stationary_weights(rates[0], rates[1]);
            let u: f64 = rng.random();
            usize::from(u >= pa)
        }
    };
    let mut hidden_path = vec![(0.0, config)];
    let mut state = props[config].initial_state();
    let mut sampler = Sampler::new(opts.sample_every, dt);
    let mut steps = Vec::new();
    let mut warned = false;
    for k in 0..n {
        sampler.observe(k, &state);
        let prop = &props[config];
        let p = prop.emission_rate(&state.rho) * dt;
        check_rate(p, k, &mut warned)?;
        let u: f64 = rng.random();
        let click = u < p;
        if click {
            steps.push(k);
        }
        prop.step(&mut state, StepInput::Jump { click }, 1.0);
        let v: f64 = rng.random();
        if v < rates[config] * dt {
            config = 1 - config;
            hidden_path.push(((k + 1) as f64 * dt, config));
        }
    }
    Ok(SimOutput {
        record: JumpRecord::from_steps(n, dt, &steps)?.into(),
        states: sampler.finish(n, &state),
        hidden_path: Some(hidden_path),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undriven_ground_state_never_clicks() {
        let out = simulate_jump(&TwoLevelModel::new(), &[0.0, 0.0, 1.0], &SimOptions::new(20.0, 0.01, 3)).unwrap();
        assert_eq!(out.record.as_jump().unwrap().n_clicks(), 0);
    }

    #[test]
    fn excited_decay_clicks_once() {
        let out = simulate_jump(&TwoLevelModel::excited(), &[0.0, 0.0, 1.0], &SimOptions::new(40.0, 0.01, 11)).unwrap();
        assert_eq!(out.record.as_jump().unwrap().n_clicks(), 1);
    }

    #[test]
    fn same_seed_same_record() {
        let m = TwoLevelModel::new();
        let theta = [1.3, 1.43, 0.55];
        let opts = SimOptions::new(30.0, 0.01, 99).with_stream(4);
        assert_eq!(simulate_jump(&m, &theta, &opts).unwrap(), simulate_jump(&m, &theta, &opts).unwrap());
        assert_eq!(
            simulate_diffusion(&m, &theta, &opts).unwrap(),
            simulate_diffusion(&m, &theta, &opts).unwrap()
        );
        let other = simulate_jump(&m, &theta, &opts.clone().with_stream(5)).unwrap();
        assert_ne!(simulate_jump(&m, &theta, &opts).unwrap().record, other.record);
    }

    #[test]
    fn sampled_states_are_valid_density_matrices() {
        let m = TwoLevelModel::new();
        let opts = SimOptions::new(20.0, 0.01, 5).sampling_every(7);
        for out in [
            simulate_jump(&m, &[1.3, 1.43, 0.55], &opts).unwrap(),
            simulate_diffusion(&m, &[1.3, 1.43, 0.55], &opts).unwrap(),
        ] {
            let states = out.states.unwrap();
            assert_eq!(states.len(), 2000 / 7 + 2);
            for (_, rho) in states {
                rho.validate().unwrap();
            }
        }
    }

    #[test]
    fn bimodal_truth_without_switching() {
        let theta = [1.1, 1.3, 1.6, 2.2, 0.2, 2.4, 0.0, 0.0];
        let out = simulate_bimodal_truth(&theta, &SimOptions::new(50.0, 0.01, 1), Some(0)).unwrap();
        assert_eq!(out.hidden_path.unwrap(), vec![(0.0, 0)]);
        assert!(out.record.as_jump().unwrap().n_clicks() > 0);
    }

    #[test]
    fn bimodal_rejects_bad_configuration() {
        let theta = [1.1, 1.3, 1.6, 2.2, 0.2, 2.4, 0.03, 0.08];
        assert!(simulate_bimodal_truth(&theta, &SimOptions::new(1.0, 0.01, 1), Some(2)).is_err());
    }

    #[test]
    fn invalid_theta_is_rejected() {
        let r = simulate_jump(&TwoLevelModel::new(), &[1.0, 0.0, -1.0], &SimOptions::new(1.0, 0.01, 1));
        assert!(matches!(r, Err(Error::OutOfDomain { .. })));
    }
}
