//! One-step maps of the conditioned state, shared by the record generators,
//! the likelihood replay and the tangent propagation.
//!
//! Every step acts linearly on the unnormalized state and is followed by
//! renormalization; the log of the trace removed at each step is the
//! log-likelihood increment. With `K = H − (i/2)(c†c + Σ J†J)` and the
//! no-jump propagator `U₀ = exp(−iK dt)`:
//!
//! * photon counting, no click: `ρ̃ ← U₀ρU₀† + dt Σ JρJ†`, plus `λ dt` added to `l`
//! * photon counting, click:    `ρ̃ ← cρc†`, plus `−log λ` added to `l`
//! * homodyne with result `dY`: `ρ̃ ← (U₀ + c dY)ρ(U₀ + c dY)† + dt Σ JρJ†`
//!
//! Each map is a sum of congruences, so positivity is preserved exactly.
//! Tangents `ρⁱ = ∂ᵢρ̃ / tr ρ̃` follow by differentiating the same linear maps
//! and sharing the normalization.

use crate::error::{Error, Result};
use crate::models::ParametricModel;
use crate::quantum::{ComplexMatrix, DensityMatrix, C64};

/// Measurement outcome for one time step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepInput {
    /// Photon counting; `true` when the detector clicked in this step.
    Jump { click: bool },
    /// Homodyne current increment `dY`.
    Diffusion { dy: f64 },
}

#[derive(Clone, Debug)]
struct TangentOps {
    d_no_jump: ComplexMatrix,
    d_collapse: ComplexMatrix,
    d_hidden: Vec<ComplexMatrix>,
}

/// Precomputed step operators for one parameter point and step size.
#[derive(Clone, Debug)]
pub struct Propagator {
    dt: f64,
    no_jump: ComplexMatrix,
    collapse: ComplexMatrix,
    collapse_is_zero: bool,
    // √dt · J
    hidden: Vec<ComplexMatrix>,
    tracked: Vec<usize>,
    tangent_ops: Vec<TangentOps>,
    initial: DensityMatrix,
    initial_tangents: Vec<ComplexMatrix>,
}

/// Conditioned state, its tangents and the accumulated log-likelihood.
#[derive(Clone, Debug)]
pub struct FilterState {
    pub rho: ComplexMatrix,
    pub tangents: Vec<ComplexMatrix>,
    pub loglik: f64,
    pub step: usize,
}

impl FilterState {
    /// Scores `tr(ρⁱ)`, the parameter gradient of the log-likelihood.
    pub fn scores(&self) -> Vec<f64> {
        self.tangents.iter().map(|t| t.trace().re).collect()
    }

    pub fn is_impossible(&self) -> bool {
        self.loglik == f64::NEG_INFINITY
    }

    pub fn density_matrix(&self) -> DensityMatrix {
        DensityMatrix::from_normalized_unchecked(self.rho.clone())
    }
}

const MAX_BLOCK_DECAY: f64 = 8.0;
const MAX_BLOCK_STEPS: usize = 1 << 16;

/// Precomputed powers of the no-click map; see [`Propagator::no_click_powers`].
#[derive(Clone, Debug)]
pub struct NoClickPowers {
    powers: Vec<ComplexMatrix>,
}

impl NoClickPowers {
    /// Largest number of steps taken in one block.
    pub fn max_block(&self) -> usize {
        1 << (self.powers.len() - 1)
    }
}

/// `S vec(ρ)` with row-major vectorization.
fn apply_superoperator(s: &ComplexMatrix, rho: &ComplexMatrix) -> ComplexMatrix {
    let n = s.dim();
    let v = rho.as_slice();
    let m = s.as_slice();
    let out: Vec<C64> = (0..n)
        .map(|r| m[r * n..(r + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum())
        .collect();
    ComplexMatrix::from_row_major(&out).expect("square superoperator")
}

fn contains_only_zeros(ms: &[ComplexMatrix]) -> bool {
    ms.iter().all(|m| m.is_zero())
}

impl Propagator {
    /// Builds the step maps at `theta`; `tracked` lists the parameter indices
    /// whose tangents are propagated.
    pub fn new(model: &dyn ParametricModel, theta: &[f64], dt: f64, tracked: &[usize]) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let ops = model.build(theta)?;
        let c = &ops.collapse;
        let cd = c.adjoint();
        let mut damping = &cd * c;
        for j in &ops.hidden {
            damping += &(&j.adjoint() * j);
        }
        // A = −iK dt = (−iH − damping/2) dt
        let generator = {
            let mut a = ops.hamiltonian.scale(C64::new(0.0, -dt));
            a -= &damping.scale_real(0.5 * dt);
            a
        };
        let no_jump = generator.expm();
        let sqrt_dt = dt.sqrt();
        let hidden: Vec<ComplexMatrix> = ops.hidden.iter().map(|j| j.scale_real(sqrt_dt)).collect();

        let n = model.n_params();
        let mut tangent_ops = Vec::with_capacity(tracked.len());
        let mut initial_tangents = Vec::with_capacity(tracked.len());
        for &i in tracked {
            if i >= n {
                return Err(Error::InvalidArgument(format!("parameter index {i} out of range")));
            }
            let d = model.derivative(theta, i)?;
            let dc = &d.d_collapse;
            let mut d_damping = &dc.adjoint() * c;
            d_damping += &(&cd * dc);
            for (j, dj) in ops.hidden.iter().zip(d.d_hidden.iter()) {
                d_damping += &(&dj.adjoint() * j);
                d_damping += &(&j.adjoint() * dj);
            }
            let mut d_generator = d.d_hamiltonian.scale(C64::new(0.0, -dt));
            d_generator -= &d_damping.scale_real(0.5 * dt);
            let (_, d_no_jump) = generator.expm_frechet(&d_generator)?;
            tangent_ops.push(TangentOps {
                d_no_jump,
                d_collapse: dc.clone(),
                d_hidden: d.d_hidden.iter().map(|dj| dj.scale_real(sqrt_dt)).collect(),
            });
            initial_tangents.push(model.initial_state_derivative(theta, i)?);
        }
        let initial = model.initial_state(theta)?;
        if initial.dim() != ops.dim() {
            return Err(Error::DimensionMismatch {
                expected: ops.dim(),
                actual: initial.dim(),
            });
        }
        Ok(Self {
            dt,
            no_jump,
            collapse_is_zero: c.is_zero(),
            collapse: ops.collapse,
            hidden: if contains_only_zeros(&hidden) { Vec::new() } else { hidden },
            tracked: tracked.to_vec(),
            tangent_ops,
            initial,
            initial_tangents,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn tracked(&self) -> &[usize] {
        &self.tracked
    }

    pub fn initial_state(&self) -> FilterState {
        FilterState {
            rho: self.initial.matrix().clone(),
            tangents: self.initial_tangents.clone(),
            loglik: 0.0,
            step: 0,
        }
    }

    pub fn state_from(&self, rho: &DensityMatrix, tangents: &[ComplexMatrix]) -> Result<FilterState> {
        if tangents.len() != self.tracked.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} tangent matrices, got {}",
                self.tracked.len(),
                tangents.len()
            )));
        }
        for t in std::iter::once(rho.matrix()).chain(tangents.iter()) {
            self.no_jump.check_same_dim(t)?;
        }
        Ok(FilterState {
            rho: rho.matrix().clone(),
            tangents: tangents.to_vec(),
            loglik: 0.0,
            step: 0,
        })
    }

    /// Photon emission rate `tr(c†cρ)`.
    #[inline]
    pub fn emission_rate(&self, rho: &ComplexMatrix) -> f64 {
        if self.collapse_is_zero {
            return 0.0;
        }
        ComplexMatrix::sandwich_trace(&self.collapse, rho, &self.collapse).re
    }

    /// Homodyne signal mean `tr(cρ + ρc†)`.
    #[inline]
    pub fn homodyne_mean(&self, rho: &ComplexMatrix) -> f64 {
        if self.collapse_is_zero {
            return 0.0;
        }
        2.0 * (&self.collapse * rho).trace().re
    }

    /// Advances the state by one step. `lambda` is the reference click rate
    /// and is ignored for homodyne steps.
    pub fn step(&self, state: &mut FilterState, input: StepInput, lambda: f64) {
        if state.is_impossible() {
            state.step += 1;
            return;
        }
        match input {
            StepInput::Jump { click: false } => {
                self.apply_kraus(state, &self.no_jump, 0.0);
                state.loglik += lambda * self.dt;
            }
            StepInput::Jump { click: true } => {
                self.apply_click(state);
                state.loglik -= lambda.ln();
            }
            StepInput::Diffusion { dy } => {
                let mut kraus = self.no_jump.clone();
                if !self.collapse_is_zero {
                    kraus += &self.collapse.scale_real(dy);
                }
                self.apply_kraus(state, &kraus, dy);
            }
        }
        state.step += 1;
    }

    /// `ρ̃ ← AρA† + Σ J̃ρJ̃†` with `A = U₀ + c dY` (`dy = 0` for the no-click map).
    fn apply_kraus(&self, state: &mut FilterState, kraus: &ComplexMatrix, dy: f64) {
        let d = kraus.dim();
        let mut next = ComplexMatrix::zeros(d);
        ComplexMatrix::sandwich_acc(kraus, &state.rho, kraus, &mut next);
        for j in &self.hidden {
            ComplexMatrix::sandwich_acc(j, &state.rho, j, &mut next);
        }
        for (k, ops) in self.tangent_ops.iter().enumerate() {
            let mut d_kraus = ops.d_no_jump.clone();
            if dy != 0.0 && !ops.d_collapse.is_zero() {
                d_kraus += &ops.d_collapse.scale_real(dy);
            }
            let t = &state.tangents[k];
            let mut out = ComplexMatrix::zeros(d);
            ComplexMatrix::sandwich_acc(kraus, t, kraus, &mut out);
            ComplexMatrix::sandwich_acc(&d_kraus, &state.rho, kraus, &mut out);
            ComplexMatrix::sandwich_acc(kraus, &state.rho, &d_kraus, &mut out);
            for (j, dj) in self.hidden.iter().zip(ops.d_hidden.iter()) {
                ComplexMatrix::sandwich_acc(j, t, j, &mut out);
                if !dj.is_zero() {
                    ComplexMatrix::sandwich_acc(dj, &state.rho, j, &mut out);
                    ComplexMatrix::sandwich_acc(j, &state.rho, dj, &mut out);
                }
            }
            state.tangents[k] = out;
        }
        self.finish(state, next);
    }

    fn apply_click(&self, state: &mut FilterState) {
        let c = &self.collapse;
        let d = c.dim();
        let mut next = ComplexMatrix::zeros(d);
        ComplexMatrix::sandwich_acc(c, &state.rho, c, &mut next);
        for (k, ops) in self.tangent_ops.iter().enumerate() {
            let mut out = ComplexMatrix::zeros(d);
            ComplexMatrix::sandwich_acc(c, &state.tangents[k], c, &mut out);
            if !ops.d_collapse.is_zero() {
                ComplexMatrix::sandwich_acc(&ops.d_collapse, &state.rho, c, &mut out);
                ComplexMatrix::sandwich_acc(c, &state.rho, &ops.d_collapse, &mut out);
            }
            state.tangents[k] = out;
        }
        self.finish(state, next);
    }

    /// Binary powers `S^(2^j)` of the one-step no-click superoperator. Blocks
    /// are capped so that the trace lost within one block stays above `e^-8`;
    /// the cap depends only on the step operators, so a gap is always split
    /// the same way.
    pub fn no_click_powers(&self) -> NoClickPowers {
        let mut s = ComplexMatrix::kron(&self.no_jump, &self.no_jump.conj());
        for j in &self.hidden {
            s += &ComplexMatrix::kron(j, &j.conj());
        }
        // tr(c†c) bounds the decay rate of the trace.
        let rate = if self.collapse_is_zero {
            0.0
        } else {
            self.collapse.frobenius_norm().powi(2)
        };
        let cap = if rate > 0.0 {
            (MAX_BLOCK_DECAY / (rate * self.dt)).floor().min(usize::MAX as f64) as usize
        } else {
            usize::MAX
        };
        let max_block = cap.clamp(1, MAX_BLOCK_STEPS);
        let mut powers = vec![s];
        while max_block >> powers.len() > 0 {
            let last = powers.last().expect("non-empty");
            let sq = last * last;
            powers.push(sq);
        }
        NoClickPowers { powers }
    }

    /// Advances `k` no-click steps at once; equivalent to `k` calls of
    /// [`Propagator::step`] up to rounding. Falls back to single steps when
    /// tangents are tracked.
    pub fn advance_no_click(&self, powers: &NoClickPowers, state: &mut FilterState, mut k: usize, lambda: f64) {
        if !self.tangent_ops.is_empty() {
            for _ in 0..k {
                self.step(state, StepInput::Jump { click: false }, lambda);
            }
            return;
        }
        while k > 0 {
            if state.is_impossible() {
                state.step += k;
                return;
            }
            let j = ((usize::BITS - 1 - k.leading_zeros()) as usize).min(powers.powers.len() - 1);
            let m = 1usize << j;
            let next = apply_superoperator(&powers.powers[j], &state.rho);
            self.finish(state, next);
            if !state.is_impossible() {
                state.loglik += lambda * m as f64 * self.dt;
            }
            state.step += m;
            k -= m;
        }
    }

    fn finish(&self, state: &mut FilterState, next: ComplexMatrix) {
        let h = next.hermitized();
        let tr = h.trace().re;
        if !(tr.is_finite() && tr > 0.0) {
            state.loglik = f64::NEG_INFINITY;
            return;
        }
        let inv = 1.0 / tr;
        for t in state.tangents.iter_mut() {
            *t = t.hermitized();
            t.scale_real_in_place(inv);
        }
        state.rho = h.scale_real(inv);
        state.loglik += tr.ln();
    }
}
