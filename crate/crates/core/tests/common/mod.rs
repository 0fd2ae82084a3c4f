#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use qtraj_core::quantum::bloch_vector;
use qtraj_core::{ComplexMatrix, DensityMatrix, OperatorSet, ParametricModel, Record, StepInput};

pub type M = DMatrix<Complex64>;

pub fn to_na(m: &ComplexMatrix) -> M {
    M::from_fn(m.dim(), m.dim(), |i, j| m[(i, j)])
}

/// Trace of the unnormalized linear recursion, computed with nalgebra's
/// matrix exponential and without any renormalization.
pub fn unnormalized_trace(model: &dyn ParametricModel, theta: &[f64], record: &Record, lambda: f64) -> f64 {
    let ops = model.build(theta).unwrap();
    let dt = record.dt();
    let c = to_na(&ops.collapse);
    let js: Vec<M> = ops.hidden.iter().map(to_na).collect();
    let mut damping = c.adjoint() * &c;
    for j in &js {
        damping += j.adjoint() * j;
    }
    let k = to_na(&ops.hamiltonian) - damping * Complex64::new(0.0, 0.5);
    let u0 = (k * Complex64::new(0.0, -dt)).exp();
    let mut rho = to_na(model.initial_state(theta).unwrap().matrix());
    for input in record.inputs() {
        let n = rho.nrows();
        let hidden = js
            .iter()
            .fold(M::zeros(n, n), |acc, j| acc + j * &rho * j.adjoint() * Complex64::from(dt));
        rho = match input {
            StepInput::Jump { click: false } => (&u0 * &rho * u0.adjoint() + hidden) * Complex64::from((lambda * dt).exp()),
            StepInput::Jump { click: true } => &c * &rho * c.adjoint() / Complex64::from(lambda),
            StepInput::Diffusion { dy } => {
                let a = &u0 + &c * Complex64::from(dy);
                &a * &rho * a.adjoint() + hidden
            }
        };
    }
    rho.trace().re
}

/// Classical RK4 integration of the unconditional master equation; returns
/// the state at each checkpoint time (multiples of `h`).
pub fn rk4_lindblad(ops: &OperatorSet, rho0: &ComplexMatrix, checkpoints: &[f64], h: f64) -> Vec<ComplexMatrix> {
    let f = |r: &ComplexMatrix| ops.lindblad_rhs(r).unwrap();
    let mut rho = rho0.clone();
    let mut t = 0.0;
    let mut out = Vec::new();
    for &tc in checkpoints {
        let n = ((tc - t) / h).round() as usize;
        for _ in 0..n {
            let k1 = f(&rho);
            let k2 = f(&(&rho + &k1.scale_real(h / 2.0)));
            let k3 = f(&(&rho + &k2.scale_real(h / 2.0)));
            let k4 = f(&(&rho + &k3.scale_real(h)));
            let mut incr = &k1 + &k4;
            incr += &(&k2 + &k3).scale_real(2.0);
            rho += &incr.scale_real(h / 6.0);
        }
        t += n as f64 * h;
        out.push(rho.clone());
    }
    out
}

pub fn bloch(m: &ComplexMatrix) -> [f64; 3] {
    bloch_vector(&DensityMatrix::new(m.hermitized()).unwrap()).unwrap()
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Fisher information for the decay rate of an initially excited, undriven
/// atom observed on `[0, T]`: score `1/γ − τ` for a click at `τ`, `−T` if none.
pub fn decay_rate_fisher(gamma: f64, horizon: f64) -> f64 {
    let click = simpson(
        |tau| (1.0 / gamma - tau).powi(2) * gamma * (-gamma * tau).exp(),
        0.0,
        horizon,
        200_000,
    );
    click + horizon * horizon * (-gamma * horizon).exp()
}
