use crate::error::{invalid, Result};

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// Linear-beta DDPM schedule. Timesteps are 1-based: `t` in `[1, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        make_schedule(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule is valid")
    }
}

/// `beta` linearly spaced from `beta_start` to `beta_end` inclusive,
/// `alpha = 1 - beta`, `alpha_bar[t] = prod_{s <= t} alpha[s]`.
pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<DiffusionSchedule> {
    if steps == 0 {
        return invalid("schedule needs at least one step");
    }
    if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
        return invalid(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        ));
    }
    let beta: Vec<f64> = if steps == 1 {
        vec![beta_start]
    } else {
        let step = (beta_end - beta_start) / (steps - 1) as f64;
        (0..steps).map(|i| beta_start + step * i as f64).collect()
    };
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let alpha_bar = alpha
        .iter()
        .scan(1.0, |acc, a| {
            *acc *= a;
            Some(*acc)
        })
        .collect();
    Ok(DiffusionSchedule {
        beta,
        alpha,
        alpha_bar,
    })
}

impl DiffusionSchedule {
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    fn index(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            return invalid(format!("timestep {t} outside [1, {}]", self.steps()));
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        Ok(self.beta[self.index(t)?])
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        Ok(self.alpha[self.index(t)?])
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        Ok(self.alpha_bar[self.index(t)?])
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }
}
