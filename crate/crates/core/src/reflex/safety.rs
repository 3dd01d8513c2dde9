use serde::{Deserialize, Serialize};

use super::ReflexError;

/// Rate-limited elongation that backs muscles off when tension or motor
/// temperature exceed their limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyReflex {
    /// [m/N]
    pub k_f: f64,
    /// [m/degC]
    pub k_c: f64,
    pub f_lim: f64,
    pub c_lim: f64,
    /// Largest per-tick decrease, <= 0 [m].
    pub dl_min: f64,
    /// Largest per-tick increase, >= 0 [m].
    pub dl_max: f64,
    pub dl_safe: Vec<f64>,
}

impl SafetyReflex {
    pub fn new(
        num_muscles: usize,
        k_f: f64,
        k_c: f64,
        f_lim: f64,
        c_lim: f64,
        dl_min: f64,
        dl_max: f64,
    ) -> Result<Self, ReflexError> {
        let s = Self {
            k_f,
            k_c,
            f_lim,
            c_lim,
            dl_min,
            dl_max,
            dl_safe: vec![0.0; num_muscles],
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ReflexError> {
        let values = [
            self.k_f,
            self.k_c,
            self.f_lim,
            self.c_lim,
            self.dl_min,
            self.dl_max,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ReflexError::NonFinite("safety reflex parameters"));
        }
        if !(self.dl_min <= 0.0 && 0.0 <= self.dl_max) {
            return Err(ReflexError::InvalidConfig(format!(
                "need dl_min <= 0 <= dl_max, got {} and {}",
                self.dl_min, self.dl_max
            )));
        }
        if self.k_f < 0.0 || self.k_c < 0.0 {
            return Err(ReflexError::InvalidConfig(
                "safety gains must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Target elongation for one muscle.
    pub fn reference(&self, f: f64, c: f64) -> f64 {
        self.k_f * (f - self.f_lim).max(0.0) + self.k_c * (c - self.c_lim).max(0.0)
    }
}

pub fn safety_reflex_step(s: &SafetyReflex, f: &[f64], c: &[f64]) -> (SafetyReflex, Vec<f64>) {
    let mut next = s.clone();
    for (i, dl) in next.dl_safe.iter_mut().enumerate() {
        let target = s.reference(f[i], c[i]);
        *dl = (*dl + (target - *dl).clamp(s.dl_min, s.dl_max)).max(0.0);
    }
    let out = next.dl_safe.clone();
    (next, out)
}
