//! Parametric physical models: a named parameter vector mapped to the
//! Hamiltonian, the monitored collapse operator and any unmonitored Lindblad
//! operators, together with their analytic parameter derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{
    ket_bra, sigma_minus, sigma_x, sigma_z, ComplexMatrix, DensityMatrix, OperatorSet,
};

/// Ordered, uniquely named parameter values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    names: Vec<String>,
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidParameters("at least one parameter is required".into()));
        }
        if names.len() != values.len() {
            return Err(Error::InvalidParameters(format!(
                "{} names but {} values",
                names.len(),
                values.len()
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::InvalidParameters(format!("duplicate name `{n}`")));
            }
        }
        Ok(Self { names, values })
    }

    pub fn from_pairs<S: AsRef<str>>(pairs: &[(S, f64)]) -> Result<Self> {
        Self::new(
            pairs.iter().map(|(n, _)| n.as_ref().to_string()).collect(),
            pairs.iter().map(|(_, v)| *v).collect(),
        )
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.values[i])
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        self.values[i] = value;
        Ok(())
    }

    pub fn with_value(&self, index: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.values[index] = value;
        out
    }
}

/// Parameter derivatives of the operators returned by [`ParametricModel::build`].
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorDerivative {
    pub d_hamiltonian: ComplexMatrix,
    pub d_collapse: ComplexMatrix,
    pub d_hidden: Vec<ComplexMatrix>,
}

impl OperatorDerivative {
    fn zero(dim: usize, hidden: usize) -> Self {
        Self {
            d_hamiltonian: ComplexMatrix::zeros(dim),
            d_collapse: ComplexMatrix::zeros(dim),
            d_hidden: vec![ComplexMatrix::zeros(dim); hidden],
        }
    }
}

/// A map `θ → (H, c, hidden)` with analytic derivatives.
///
/// Parameter slices are ordered as [`ParametricModel::parameter_names`].
pub trait ParametricModel: Send + Sync {
    fn name(&self) -> &str;

    fn dimension(&self) -> usize;

    fn parameter_names(&self) -> Vec<String>;

    /// Rejects parameters outside the model domain.
    fn check_domain(&self, theta: &[f64]) -> Result<()>;

    fn build(&self, theta: &[f64]) -> Result<OperatorSet>;

    fn derivative(&self, theta: &[f64], index: usize) -> Result<OperatorDerivative>;

    fn initial_state(&self, theta: &[f64]) -> Result<DensityMatrix>;

    /// Parameter derivative of the initial state; zero unless the model says otherwise.
    fn initial_state_derivative(&self, _theta: &[f64], _index: usize) -> Result<ComplexMatrix> {
        Ok(ComplexMatrix::zeros(self.dimension()))
    }

    fn n_params(&self) -> usize {
        self.parameter_names().len()
    }

    /// Resolves a parameter vector against this model's names and order.
    fn values_from(&self, params: &ParameterVector) -> Result<Vec<f64>> {
        let names = self.parameter_names();
        if params.len() != names.len() {
            return Err(Error::InvalidParameters(format!(
                "model `{}` expects {} parameters ({}), got {}",
                self.name(),
                names.len(),
                names.join(", "),
                params.len()
            )));
        }
        names
            .iter()
            .map(|n| params.get(n).ok_or_else(|| Error::UnknownParameter(n.clone())))
            .collect()
    }

    fn parameter_vector(&self, values: &[f64]) -> Result<ParameterVector> {
        ParameterVector::new(self.parameter_names(), values.to_vec())
    }
}

fn check_len(theta: &[f64], n: usize) -> Result<()> {
    if theta.len() != n {
        return Err(Error::InvalidParameters(format!(
            "expected {n} parameter values, got {}",
            theta.len()
        )));
    }
    if let Some(v) = theta.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameters(format!("non-finite parameter value {v}")));
    }
    Ok(())
}

fn require_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 {
        Ok(())
    } else {
        Err(Error::OutOfDomain {
            name: name.to_string(),
            value,
            reason: "must be > 0",
        })
    }
}

fn require_non_negative(name: &str, value: f64) -> Result<()> {
    if value >= 0.0 {
        Ok(())
    } else {
        Err(Error::OutOfDomain {
            name: name.to_string(),
            value,
            reason: "must be >= 0",
        })
    }
}

/// `(Ω/2)σx + (Δ/2)σz`
pub fn driven_atom_hamiltonian(omega: f64, delta: f64) -> ComplexMatrix {
    let mut h = sigma_x().scale_real(omega / 2.0);
    h += &sigma_z().scale_real(delta / 2.0);
    h
}

/// Stationary photon emission rate of a driven, decaying two-level atom,
/// `Ω²γ / (γ² + 4Δ² + 2Ω²)`.
pub fn stationary_emission_rate(omega: f64, delta: f64, gamma: f64) -> Result<f64> {
    require_positive("gamma", gamma)?;
    Ok(omega * omega * gamma / (gamma * gamma + 4.0 * delta * delta + 2.0 * omega * omega))
}

/// Driven two-level atom with photodetection of its fluorescence.
///
/// Parameters `(Omega, Delta, gamma)`: `H = (Ω/2)σx + (Δ/2)σz`, `c = √γ σ⁻`.
#[derive(Clone, Debug)]
pub struct TwoLevelModel {
    initial: DensityMatrix,
}

impl Default for TwoLevelModel {
    fn default() -> Self {
        Self::new()
    }
}

impl TwoLevelModel {
    pub const PARAMS: [&'static str; 3] = ["Omega", "Delta", "gamma"];
    pub const OMEGA: usize = 0;
    pub const DELTA: usize = 1;
    pub const GAMMA: usize = 2;

    /// Starts in the ground state `|g⟩⟨g|`.
    pub fn new() -> Self {
        Self {
            initial: DensityMatrix::basis_state(2, 1),
        }
    }

    pub fn with_initial_state(initial: DensityMatrix) -> Result<Self> {
        if initial.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                actual: initial.dim(),
            });
        }
        Ok(Self { initial })
    }

    pub fn excited() -> Self {
        Self {
            initial: DensityMatrix::basis_state(2, 0),
        }
    }
}

impl ParametricModel for TwoLevelModel {
    fn name(&self) -> &str {
        "two_level"
    }

    fn dimension(&self) -> usize {
        2
    }

    fn parameter_names(&self) -> Vec<String> {
        Self::PARAMS.iter().map(|s| s.to_string()).collect()
    }

    fn check_domain(&self, theta: &[f64]) -> Result<()> {
        check_len(theta, 3)?;
        require_positive("gamma", theta[Self::GAMMA])
    }

    fn build(&self, theta: &[f64]) -> Result<OperatorSet> {
        self.check_domain(theta)?;
        let (omega, delta, gamma) = (theta[0], theta[1], theta[2]);
        OperatorSet::new(
            driven_atom_hamiltonian(omega, delta),
            sigma_minus().scale_real(gamma.sqrt()),
            Vec::new(),
        )
    }

    fn derivative(&self, theta: &[f64], index: usize) -> Result<OperatorDerivative> {
        self.check_domain(theta)?;
        let mut d = OperatorDerivative::zero(2, 0);
        match index {
            Self::OMEGA => d.d_hamiltonian = sigma_x().scale_real(0.5),
            Self::DELTA => d.d_hamiltonian = sigma_z().scale_real(0.5),
            Self::GAMMA => d.d_collapse = sigma_minus().scale_real(0.5 / theta[2].sqrt()),
            _ => return Err(Error::InvalidArgument(format!("parameter index {index} out of range"))),
        }
        Ok(d)
    }

    fn initial_state(&self, theta: &[f64]) -> Result<DensityMatrix> {
        self.check_domain(theta)?;
        Ok(self.initial.clone())
    }
}

/// Two-level atom whose parameters switch between two classical
/// configurations `a` and `b`, embedded as a 4-dimensional system
/// `atom ⊗ configuration` (index `2·atom + config`, config `a = 0`, `b = 1`).
///
/// The configuration jumps are unmonitored and enter the filter as the hidden
/// Lindblad operators `J_{a→b} = √W_ab 𝟙⊗|b⟩⟨a|` and `J_{b→a} = √W_ba 𝟙⊗|a⟩⟨b|`.
#[derive(Clone, Debug, Default)]
pub struct BimodalModel;

impl BimodalModel {
    pub const PARAMS: [&'static str; 8] = [
        "Omega_a", "Delta_a", "gamma_a", "Omega_b", "Delta_b", "gamma_b", "W_ab", "W_ba",
    ];
    pub const W_AB: usize = 6;
    pub const W_BA: usize = 7;

    pub fn new() -> Self {
        Self
    }

    /// `(Ω, Δ, γ)` of configuration `config` (0 = a, 1 = b).
    pub fn config_parameters(theta: &[f64], config: usize) -> [f64; 3] {
        let o = 3 * config;
        [theta[o], theta[o + 1], theta[o + 2]]
    }

    /// Stationary weights `(p_a, p_b)` of the configuration chain; equal
    /// weights when both rates vanish.
    pub fn stationary_weights(w_ab: f64, w_ba: f64) -> (f64, f64) {
        let total = w_ab + w_ba;
        if total > 0.0 {
            (w_ba / total, w_ab / total)
        } else {
            (0.5, 0.5)
        }
    }

    fn projector(config: usize) -> ComplexMatrix {
        ket_bra(2, config, config)
    }
}

impl ParametricModel for BimodalModel {
    fn name(&self) -> &str {
        "bimodal"
    }

    fn dimension(&self) -> usize {
        4
    }

    fn parameter_names(&self) -> Vec<String> {
        Self::PARAMS.iter().map(|s| s.to_string()).collect()
    }

    fn check_domain(&self, theta: &[f64]) -> Result<()> {
        check_len(theta, 8)?;
        require_positive("gamma_a", theta[2])?;
        require_positive("gamma_b", theta[5])?;
        require_non_negative("W_ab", theta[6])?;
        require_non_negative("W_ba", theta[7])
    }

    fn build(&self, theta: &[f64]) -> Result<OperatorSet> {
        self.check_domain(theta)?;
        let mut h = ComplexMatrix::zeros(4);
        let mut mix = ComplexMatrix::zeros(2);
        for config in 0..2 {
            let [omega, delta, gamma] = Self::config_parameters(theta, config);
            let p = Self::projector(config);
            h += &ComplexMatrix::kron(&driven_atom_hamiltonian(omega, delta), &p);
            mix += &p.scale_real(gamma.sqrt());
        }
        let collapse = ComplexMatrix::kron(&sigma_minus(), &mix);
        let id = ComplexMatrix::identity(2);
        let hidden = vec![
            ComplexMatrix::kron(&id, &ket_bra(2, 1, 0)).scale_real(theta[Self::W_AB].sqrt()),
            ComplexMatrix::kron(&id, &ket_bra(2, 0, 1)).scale_real(theta[Self::W_BA].sqrt()),
        ];
        OperatorSet::new(h, collapse, hidden)
    }

    fn derivative(&self, theta: &[f64], index: usize) -> Result<OperatorDerivative> {
        self.check_domain(theta)?;
        let mut d = OperatorDerivative::zero(4, 2);
        match index {
            0..=5 => {
                let config = index / 3;
                let p = Self::projector(config);
                match index % 3 {
                    0 => d.d_hamiltonian = ComplexMatrix::kron(&sigma_x().scale_real(0.5), &p),
                    1 => d.d_hamiltonian = ComplexMatrix::kron(&sigma_z().scale_real(0.5), &p),
                    _ => {
                        let gamma = theta[index];
                        d.d_collapse =
                            ComplexMatrix::kron(&sigma_minus(), &p.scale_real(0.5 / gamma.sqrt()));
                    }
                }
            }
            Self::W_AB | Self::W_BA => {
                let name = Self::PARAMS[index];
                let w = theta[index];
                require_positive(name, w)?;
                let id = ComplexMatrix::identity(2);
                let (slot, op) = if index == Self::W_AB {
                    (0, ket_bra(2, 1, 0))
                } else {
                    (1, ket_bra(2, 0, 1))
                };
                d.d_hidden[slot] = ComplexMatrix::kron(&id, &op).scale_real(0.5 / w.sqrt());
            }
            _ => return Err(Error::InvalidArgument(format!("parameter index {index} out of range"))),
        }
        Ok(d)
    }

    fn initial_state(&self, theta: &[f64]) -> Result<DensityMatrix> {
        self.check_domain(theta)?;
        let (pa, pb) = Self::stationary_weights(theta[6], theta[7]);
        let config = ComplexMatrix::from_real_rows(&[&[pa, 0.0], &[0.0, pb]]);
        DensityMatrix::new(ComplexMatrix::kron(&ket_bra(2, 1, 1), &config))
    }

    fn initial_state_derivative(&self, theta: &[f64], index: usize) -> Result<ComplexMatrix> {
        self.check_domain(theta)?;
        let (w_ab, w_ba) = (theta[6], theta[7]);
        let total = w_ab + w_ba;
        let dpa = match index {
            Self::W_AB if total > 0.0 => -w_ba / (total * total),
            Self::W_BA if total > 0.0 => w_ab / (total * total),
            _ => return Ok(ComplexMatrix::zeros(4)),
        };
        let config = ComplexMatrix::from_real_rows(&[&[dpa, 0.0], &[0.0, -dpa]]);
        Ok(ComplexMatrix::kron(&ket_bra(2, 1, 1), &config))
    }
}

/// Fixed operators that do not depend on the parameters; every derivative is
/// zero. Useful for reference processes such as `c = 0` or `c = √λ 𝟙`.
#[derive(Clone, Debug)]
pub struct StaticModel {
    ops: OperatorSet,
    initial: DensityMatrix,
    names: Vec<String>,
}

impl StaticModel {
    pub fn new(ops: OperatorSet, initial: DensityMatrix, names: Vec<String>) -> Result<Self> {
        if initial.dim() != ops.dim() {
            return Err(Error::DimensionMismatch {
                expected: ops.dim(),
                actual: initial.dim(),
            });
        }
        ParameterVector::new(names.clone(), vec![0.0; names.len()])?;
        Ok(Self { ops, initial, names })
    }

    /// Two-level atom with no monitored channel (`c = 0`), one dummy parameter `x`.
    pub fn unobserved_atom(omega: f64, delta: f64) -> Self {
        let ops = OperatorSet::new(driven_atom_hamiltonian(omega, delta), ComplexMatrix::zeros(2), Vec::new())
            .expect("valid operators");
        Self::new(ops, DensityMatrix::basis_state(2, 1), vec!["x".into()]).expect("valid model")
    }

    /// `c = √λ 𝟙`: clicks form a Poisson process of rate `λ` whatever the state.
    pub fn poisson(lambda: f64, dim: usize) -> Result<Self> {
        require_positive("lambda", lambda)?;
        let ops = OperatorSet::new(
            ComplexMatrix::zeros(dim),
            ComplexMatrix::identity(dim).scale_real(lambda.sqrt()),
            Vec::new(),
        )?;
        Self::new(ops, DensityMatrix::maximally_mixed(dim), vec!["x".into()])
    }
}

impl ParametricModel for StaticModel {
    fn name(&self) -> &str {
        "static"
    }

    fn dimension(&self) -> usize {
        self.ops.dim()
    }

    fn parameter_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn check_domain(&self, theta: &[f64]) -> Result<()> {
        check_len(theta, self.names.len())
    }

    fn build(&self, theta: &[f64]) -> Result<OperatorSet> {
        self.check_domain(theta)?;
        Ok(self.ops.clone())
    }

    fn derivative(&self, theta: &[f64], index: usize) -> Result<OperatorDerivative> {
        self.check_domain(theta)?;
        if index >= self.names.len() {
            return Err(Error::InvalidArgument(format!("parameter index {index} out of range")));
        }
        Ok(OperatorDerivative::zero(self.ops.dim(), self.ops.hidden.len()))
    }

    fn initial_state(&self, theta: &[f64]) -> Result<DensityMatrix> {
        self.check_domain(theta)?;
        Ok(self.initial.clone())
    }
}
