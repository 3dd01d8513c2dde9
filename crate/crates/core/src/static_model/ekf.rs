use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{IntersensoryModel, StaticError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    /// Observe absolute lengths against `h(theta_est, f)`.
    Absolute,
    /// Observe the change in length since the previous step; a constant
    /// model bias cancels.
    Incremental,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EkfConfig {
    /// Random-walk intensity [rad^2/s].
    pub q: f64,
    /// Length noise variance [m^2].
    pub r: f64,
    pub mode: ObservationMode,
    /// Muscles below this tension carry no pose information and are skipped [N].
    pub slack_threshold: f64,
    /// Initial variance [rad^2].
    pub p0: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            q: 1e-2,
            r: 1e-6,
            mode: ObservationMode::Absolute,
            slack_threshold: 0.5,
            p0: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EkfEstimator {
    pub theta_est: Vec<f64>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub mode: ObservationMode,
    pub slack_threshold: f64,
    limits: Vec<[f64; 2]>,
    last_residual: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EkfDump {
    pub theta_est: Vec<f64>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
}

impl EkfEstimator {
    pub fn new(
        theta0: Vec<f64>,
        limits: Vec<[f64; 2]>,
        num_muscles: usize,
        cfg: &EkfConfig,
    ) -> Result<Self, StaticError> {
        let n = theta0.len();
        if limits.len() != n {
            return Err(StaticError::Dimension {
                what: "joint limits",
                expected: n,
                got: limits.len(),
            });
        }
        if !(cfg.q >= 0.0 && cfg.r > 0.0 && cfg.p0 >= 0.0) {
            return Err(StaticError::InvalidConfig(
                "EKF needs q >= 0, r > 0 and p0 >= 0".into(),
            ));
        }
        Ok(Self {
            theta_est: theta0,
            p: DMatrix::identity(n, n) * cfg.p0,
            q: DMatrix::identity(n, n) * cfg.q,
            r: DMatrix::identity(num_muscles, num_muscles) * cfg.r,
            mode: cfg.mode,
            slack_threshold: cfg.slack_threshold,
            limits,
            last_residual: None,
        })
    }

    pub fn dump(&self) -> EkfDump {
        EkfDump {
            theta_est: self.theta_est.clone(),
            p: self
                .p
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        }
    }
}

/// Random-walk prediction followed by a length observation update.
pub fn ekf_step(
    est: &EkfEstimator,
    model: &IntersensoryModel,
    l_meas: &[f64],
    f_meas: &[f64],
    dt: f64,
) -> Result<EkfEstimator, StaticError> {
    let n = est.theta_est.len();
    let m = model.num_muscles();
    if l_meas.len() != m {
        return Err(StaticError::Dimension {
            what: "measured lengths",
            expected: m,
            got: l_meas.len(),
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(StaticError::InvalidConfig(format!("time step {dt}")));
    }
    let mut next = est.clone();
    next.p += &est.q * dt;

    let (h, jac) = model.predict_with_jacobian(&est.theta_est, f_meas)?;
    let residual: Vec<f64> = l_meas.iter().zip(&h).map(|(z, h)| z - h).collect();
    let innovation_full: Vec<f64> = match (est.mode, &est.last_residual) {
        (ObservationMode::Absolute, _) => residual.clone(),
        (ObservationMode::Incremental, Some(prev)) => {
            residual.iter().zip(prev).map(|(r, p)| r - p).collect()
        }
        (ObservationMode::Incremental, None) => {
            next.last_residual = Some(residual);
            return Ok(next);
        }
    };
    let rows: Vec<usize> = (0..m)
        .filter(|&i| f_meas[i] >= est.slack_threshold)
        .collect();
    if !rows.is_empty() {
        let k = rows.len();
        let noise_scale = if est.mode == ObservationMode::Incremental {
            2.0
        } else {
            1.0
        };
        let hm = DMatrix::from_fn(k, n, |a, j| jac[rows[a]][j]);
        let r = DMatrix::from_fn(k, k, |a, b| noise_scale * est.r[(rows[a], rows[b])]);
        let y = DVector::from_fn(k, |a, _| innovation_full[rows[a]]);
        let s = &hm * &next.p * hm.transpose() + &r;
        let chol = s.cholesky().ok_or(StaticError::SingularInnovation)?;
        // K = P H' S^-1
        let gain = chol.solve(&(&hm * &next.p)).transpose();
        let dx = &gain * y;
        let ikh = DMatrix::identity(n, n) - &gain * &hm;
        let p = &ikh * &next.p * ikh.transpose() + &gain * r * gain.transpose();
        next.p = (&p + p.transpose()) * 0.5;
        for (j, t) in next.theta_est.iter_mut().enumerate() {
            let [lo, hi] = est.limits[j];
            *t = (*t + dx[j]).clamp(lo, hi);
        }
    }
    if est.mode == ObservationMode::Incremental {
        // residual at the updated estimate, so the next increment starts clean
        let h_new = model.infer_command(&next.theta_est, f_meas)?;
        next.last_residual = Some(l_meas.iter().zip(&h_new).map(|(z, h)| z - h).collect());
    }
    if next
        .theta_est
        .iter()
        .chain(next.p.iter())
        .any(|v| !v.is_finite())
    {
        return Err(StaticError::NonFinite);
    }
    Ok(next)
}
