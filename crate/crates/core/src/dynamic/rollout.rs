use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DynamicsError, TaskPlant};

/// One training pair: initial state, the commands that followed and the task
/// states observed after each of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub initial: Vec<f64>,
    pub commands: Vec<f64>,
    pub observed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    #[serde(rename = "N")]
    pub horizon: usize,
    pub windows: Vec<Window>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.windows.first().map_or(0, |w| w.initial.len())
    }
}

/// Smooth random command: a uniform random target every `period` seconds,
/// linearly interpolated in between.
#[derive(Debug, Clone)]
pub struct CommandSignal {
    knots: Vec<f64>,
    period: f64,
}

impl CommandSignal {
    pub fn new(duration_s: f64, period: f64, limits: [f64; 2], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (duration_s / period).ceil() as usize + 2;
        let knots = (0..n)
            .map(|_| rng.random_range(limits[0]..=limits[1]))
            .collect();
        Self { knots, period }
    }

    pub fn at(&self, t: f64) -> f64 {
        let x = (t / self.period).max(0.0);
        let i = (x.floor() as usize).min(self.knots.len() - 2);
        let w = (x - i as f64).min(1.0);
        self.knots[i] + w * (self.knots[i + 1] - self.knots[i])
    }
}

/// Drives `plant` with a seeded [`CommandSignal`] and slices the run into
/// every overlapping window of `horizon` ticks.
pub fn collect_rollout(
    plant: &mut dyn TaskPlant,
    duration_s: f64,
    knot_period: f64,
    seed: u64,
    horizon: usize,
) -> Result<Dataset, crate::Error> {
    let dt = plant.control_dt();
    let steps = (duration_s / dt).round() as usize;
    if horizon == 0 || steps < horizon {
        return Err(DynamicsError::EmptyDataset(format!(
            "{duration_s} s gives {steps} ticks, fewer than the horizon {horizon}"
        ))
        .into());
    }
    let signal = CommandSignal::new(duration_s, knot_period, plant.command_limits(), seed);
    let mut states = Vec::with_capacity(steps);
    let mut commands = Vec::with_capacity(steps);
    let mut observed = Vec::with_capacity(steps);
    for k in 0..steps {
        let u = signal.at(k as f64 * dt);
        states.push(plant.initial_state());
        plant.apply(u)?;
        commands.push(u);
        observed.push(plant.task_state());
    }
    let windows = (0..=steps - horizon)
        .map(|k| Window {
            initial: states[k].clone(),
            commands: commands[k..k + horizon].to_vec(),
            observed: observed[k..k + horizon].to_vec(),
        })
        .collect();
    Ok(Dataset { horizon, windows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_interpolates_between_knots() {
        let s = CommandSignal::new(2.0, 0.5, [0.0, 1.0], 3);
        let (a, b) = (s.at(0.5), s.at(1.0));
        assert!((s.at(0.75) - 0.5 * (a + b)).abs() < 1e-12);
        for k in 0..200 {
            let v = s.at(k as f64 * 0.01);
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
