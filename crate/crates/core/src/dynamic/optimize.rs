use serde::{Deserialize, Serialize};

use super::{DynamicsError, SequenceModel};

/// Below this gradient norm the optimizer stops and returns its best sequence.
const FLAT_GRADIENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(rename = "N")]
    pub horizon: usize,
    /// Weight of the adjacent-difference penalty.
    pub alpha: f64,
    /// Length of each normalized gradient step.
    pub beta: f64,
    pub iterations: usize,
    pub u_min: f64,
    pub u_max: f64,
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.horizon < 2
            || !(self.alpha >= 0.0)
            || !(self.beta > 0.0)
            || self.iterations == 0
            || !(self.u_min <= self.u_max)
        {
            return Err(DynamicsError::InvalidConfig(
                "need N >= 2, alpha >= 0, beta > 0, iterations >= 1 and u_min <= u_max".into(),
            ));
        }
        Ok(())
    }

    fn clamp(&self, u: &mut [f64]) {
        for v in u {
            *v = v.clamp(self.u_min, self.u_max);
        }
    }
}

/// Mean squared difference of adjacent commands.
pub fn e_adj(u: &[f64]) -> f64 {
    if u.len() < 2 {
        return 0.0;
    }
    u.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / (u.len() - 1) as f64
}

/// Loss `mean((s_pred - s_ref)^2) + alpha * e_adj(u)` and its gradient in `u`.
pub fn loss_and_gradient(
    model: &dyn SequenceModel,
    s0: &[f64],
    s_ref: f64,
    u: &[f64],
    alpha: f64,
) -> Result<(f64, Vec<f64>), DynamicsError> {
    let pred = model.predict(s0, u)?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut dl_ds = Vec::with_capacity(pred.len());
    for p in &pred {
        let r = p - s_ref;
        loss += r * r / n;
        dl_ds.push(2.0 * r / n);
    }
    let mut grad = model.command_gradient(s0, u, &dl_ds)?;
    if u.len() >= 2 && alpha != 0.0 {
        loss += alpha * e_adj(u);
        let scale = 2.0 * alpha / (u.len() - 1) as f64;
        for k in 0..u.len() - 1 {
            let d = scale * (u[k + 1] - u[k]);
            grad[k] -= d;
            grad[k + 1] += d;
        }
    }
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(DynamicsError::NonFinite("optimizer loss"));
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    /// Lowest-loss sequence seen.
    pub u: Vec<f64>,
    pub loss: f64,
    /// Loss of every evaluated iterate, starting with the initial sequence.
    pub history: Vec<f64>,
}

/// Normalized gradient descent on the command sequence, clamped to the
/// command bounds after every step.
pub fn optimize_commands(
    model: &dyn SequenceModel,
    s0: &[f64],
    s_ref: f64,
    u_init: &[f64],
    cfg: &OptimizerConfig,
) -> Result<Optimized, DynamicsError> {
    cfg.validate()?;
    if u_init.len() != model.horizon() || cfg.horizon != model.horizon() {
        return Err(DynamicsError::Dimension {
            what: "command sequence",
            expected: model.horizon(),
            got: u_init.len(),
        });
    }
    let mut u = u_init.to_vec();
    cfg.clamp(&mut u);
    let mut best = (f64::INFINITY, u.clone());
    let mut history = Vec::with_capacity(cfg.iterations + 1);
    for it in 0..=cfg.iterations {
        let (loss, grad) = loss_and_gradient(model, s0, s_ref, &u, cfg.alpha)?;
        history.push(loss);
        if loss < best.0 {
            best = (loss, u.clone());
        }
        if it == cfg.iterations {
            break;
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < FLAT_GRADIENT {
            break;
        }
        for (v, g) in u.iter_mut().zip(&grad) {
            *v -= cfg.beta * g / norm;
        }
        cfg.clamp(&mut u);
    }
    Ok(Optimized {
        u: best.1,
        loss: best.0,
        history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcStep {
    /// Command to execute now.
    pub command: f64,
    /// Full optimized sequence.
    pub plan: Vec<f64>,
    /// Plan shifted by one tick with its last element repeated.
    pub warm_start: Vec<f64>,
    pub loss: f64,
}

/// One receding-horizon step from the previous tick's shifted plan.
pub fn mpc_control_step(
    model: &dyn SequenceModel,
    s0: &[f64],
    s_ref: f64,
    warm_start: &[f64],
    cfg: &OptimizerConfig,
) -> Result<MpcStep, DynamicsError> {
    let opt = optimize_commands(model, s0, s_ref, warm_start, cfg)?;
    let mut shifted = opt.u[1..].to_vec();
    shifted.push(*opt.u.last().expect("horizon >= 2"));
    Ok(MpcStep {
        command: opt.u[0],
        plan: opt.u,
        warm_start: shifted,
        loss: opt.loss,
    })
}
