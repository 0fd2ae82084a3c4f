//! Measurement records on a fixed time grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagator::StepInput;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementKind {
    Jump,
    Diffusion,
}

impl std::fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MeasurementKind::Jump => "jump",
            MeasurementKind::Diffusion => "diffusion",
        })
    }
}

/// Validates `(horizon, dt)` and returns the number of steps `round(T/dt)`.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidRecord(format!("time step must be positive, got {dt}")));
    }
    if !horizon.is_finite() || horizon < dt * (1.0 - 1e-9) {
        return Err(Error::InvalidRecord(format!(
            "horizon {horizon} must be at least one time step ({dt})"
        )));
    }
    let n = (horizon / dt).round();
    if (n * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::InvalidRecord(format!(
            "horizon {horizon} is not an integer number of steps of {dt}"
        )));
    }
    Ok(n as usize)
}

/// Photon click times; each click is applied at step `round(t/dt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpRecord {
    horizon: f64,
    dt: f64,
    clicks: Vec<f64>,
    click_steps: Vec<usize>,
}

impl JumpRecord {
    pub fn new(horizon: f64, dt: f64, clicks: Vec<f64>) -> Result<Self> {
        let n = step_count(horizon, dt)?;
        let mut click_steps = Vec::with_capacity(clicks.len());
        for (i, &t) in clicks.iter().enumerate() {
            if !t.is_finite() || t < 0.0 || t >= horizon {
                return Err(Error::InvalidRecord(format!("click time {t} outside [0, {horizon})")));
            }
            if i > 0 && t <= clicks[i - 1] {
                return Err(Error::InvalidRecord("click times must be strictly increasing".into()));
            }
            let step = (t / dt).round() as usize;
            if step >= n {
                return Err(Error::InvalidRecord(format!("click time {t} rounds past the last step")));
            }
            if click_steps.last() == Some(&step) {
                return Err(Error::InvalidRecord(format!(
                    "two clicks fall on step {step} (t = {t})"
                )));
            }
            click_steps.push(step);
        }
        Ok(Self {
            horizon,
            dt,
            clicks,
            click_steps,
        })
    }

    /// Builds a record from click step indices.
    pub fn from_steps(n_steps: usize, dt: f64, steps: &[usize]) -> Result<Self> {
        let clicks = steps.iter().map(|&k| k as f64 * dt).collect();
        Self::new(n_steps as f64 * dt, dt, clicks)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn clicks(&self) -> &[f64] {
        &self.clicks
    }

    pub fn click_steps(&self) -> &[usize] {
        &self.click_steps
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn n_clicks(&self) -> usize {
        self.clicks.len()
    }

    /// Per-step outcomes.
    pub fn inputs(&self) -> impl Iterator<Item = StepInput> + '_ {
        let mut next = 0;
        (0..self.n_steps()).map(move |k| {
            let click = self.click_steps.get(next) == Some(&k);
            if click {
                next += 1;
            }
            StepInput::Jump { click }
        })
    }

    /// The record restricted to the first `round(t/dt)` steps.
    pub fn truncated(&self, t: f64) -> Result<Self> {
        let n = ((t / self.dt).round() as usize).min(self.n_steps());
        let clicks = self
            .clicks
            .iter()
            .zip(self.click_steps.iter())
            .filter(|(_, &k)| k < n)
            .map(|(&t, _)| t)
            .collect();
        Self::new(n as f64 * self.dt, self.dt, clicks)
    }
}

/// Homodyne current increments, one per step.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionRecord {
    horizon: f64,
    dt: f64,
    dy: Vec<f64>,
}

impl DiffusionRecord {
    pub fn new(horizon: f64, dt: f64, dy: Vec<f64>) -> Result<Self> {
        let n = step_count(horizon, dt)?;
        if dy.len() != n {
            return Err(Error::InvalidRecord(format!(
                "expected {n} increments for T = {horizon}, dt = {dt}; got {}",
                dy.len()
            )));
        }
        if let Some(v) = dy.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord(format!("non-finite increment {v}")));
        }
        Ok(Self { horizon, dt, dy })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn increments(&self) -> &[f64] {
        &self.dy
    }

    pub fn n_steps(&self) -> usize {
        self.dy.len()
    }

    pub fn inputs(&self) -> impl Iterator<Item = StepInput> + '_ {
        self.dy.iter().map(|&dy| StepInput::Diffusion { dy })
    }

    pub fn truncated(&self, t: f64) -> Result<Self> {
        let n = ((t / self.dt).round() as usize).clamp(1, self.n_steps());
        Self::new(n as f64 * self.dt, self.dt, self.dy[..n].to_vec())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Record {
    Jump(JumpRecord),
    Diffusion(DiffusionRecord),
}

impl Record {
    pub fn kind(&self) -> MeasurementKind {
        match self {
            Record::Jump(_) => MeasurementKind::Jump,
            Record::Diffusion(_) => MeasurementKind::Diffusion,
        }
    }

    pub fn horizon(&self) -> f64 {
        match self {
            Record::Jump(r) => r.horizon(),
            Record::Diffusion(r) => r.horizon(),
        }
    }

    pub fn dt(&self) -> f64 {
        match self {
            Record::Jump(r) => r.dt(),
            Record::Diffusion(r) => r.dt(),
        }
    }

    pub fn n_steps(&self) -> usize {
        match self {
            Record::Jump(r) => r.n_steps(),
            Record::Diffusion(r) => r.n_steps(),
        }
    }

    pub fn inputs(&self) -> Box<dyn Iterator<Item = StepInput> + '_> {
        match self {
            Record::Jump(r) => Box::new(r.inputs()),
            Record::Diffusion(r) => Box::new(r.inputs()),
        }
    }

    pub fn truncated(&self, t: f64) -> Result<Self> {
        Ok(match self {
            Record::Jump(r) => Record::Jump(r.truncated(t)?),
            Record::Diffusion(r) => Record::Diffusion(r.truncated(t)?),
        })
    }

    pub fn as_jump(&self) -> Option<&JumpRecord> {
        match self {
            Record::Jump(r) => Some(r),
            Record::Diffusion(_) => None,
        }
    }

    pub fn as_diffusion(&self) -> Option<&DiffusionRecord> {
        match self {
            Record::Diffusion(r) => Some(r),
            Record::Jump(_) => None,
        }
    }
}

impl From<JumpRecord> for Record {
    fn from(r: JumpRecord) -> Self {
        Record::Jump(r)
    }
}

impl From<DiffusionRecord> for Record {
    fn from(r: DiffusionRecord) -> Self {
        Record::Diffusion(r)
    }
}
