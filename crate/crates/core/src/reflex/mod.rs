//! Fast reflex layer: necessary tensions, muscle relaxation, safety backoff.

mod mrc;
mod qp;
mod safety;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use mrc::{mrc_step, MrcMode, RelaxationState};
pub use qp::{solve_tension_qp, QpSolution, TensionQp, SINGULAR_RIDGE};
pub use safety::{safety_reflex_step, SafetyReflex};

#[derive(Debug, thiserror::Error)]
pub enum ReflexError {
    #[error("{what} dimension mismatch: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("invalid reflex configuration: {0}")]
    InvalidConfig(String),
    #[error("active set did not settle in {0} iterations")]
    NoConvergence(usize),
    #[error("reflex log: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MrcConfig {
    pub rate: f64,
    pub angle_threshold: f64,
    /// Relaxed-tension threshold; the QP bound is used when absent.
    #[serde(default)]
    pub f_min: Option<Vec<f64>>,
    /// Muscle subset to relax; all when absent.
    #[serde(default)]
    pub muscles: Option<Vec<usize>>,
    /// Joint subset to watch for drift; all when absent.
    #[serde(default)]
    pub joints: Option<Vec<usize>>,
}

impl Default for MrcConfig {
    fn default() -> Self {
        Self {
            rate: 1e-4,
            angle_threshold: 0.05,
            f_min: None,
            muscles: None,
            joints: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflexConfig {
    #[serde(rename = "W1_diag")]
    pub w1_diag: Vec<f64>,
    #[serde(rename = "W2_diag")]
    pub w2_diag: Vec<f64>,
    pub f_min: Vec<f64>,
    #[serde(rename = "K_f")]
    pub k_f: f64,
    #[serde(rename = "K_c")]
    pub k_c: f64,
    pub f_lim: f64,
    pub c_lim: f64,
    pub dl_min: f64,
    pub dl_max: f64,
    #[serde(default)]
    pub mrc: MrcConfig,
}

impl ReflexConfig {
    pub fn reference(num_muscles: usize, num_joints: usize) -> Self {
        Self {
            w1_diag: vec![1e-6; num_muscles],
            w2_diag: vec![1.0; num_joints],
            f_min: vec![8.0; num_muscles],
            k_f: 1e-4,
            k_c: 5e-4,
            f_lim: 150.0,
            c_lim: 60.0,
            dl_min: -2e-4,
            dl_max: 2e-4,
            mrc: MrcConfig::default(),
        }
    }

    pub fn validate(&self, num_muscles: usize, num_joints: usize) -> Result<(), ReflexError> {
        let dims = [
            ("W1_diag", self.w1_diag.len(), num_muscles),
            ("f_min", self.f_min.len(), num_muscles),
            ("W2_diag", self.w2_diag.len(), num_joints),
        ];
        for (what, got, expected) in dims {
            if got != expected {
                return Err(ReflexError::Dimension {
                    what,
                    expected,
                    got,
                });
            }
        }
        if let Some(f) = &self.mrc.f_min {
            if f.len() != num_muscles {
                return Err(ReflexError::Dimension {
                    what: "mrc.f_min",
                    expected: num_muscles,
                    got: f.len(),
                });
            }
        }
        if self.mrc.muscles.iter().flatten().any(|&m| m >= num_muscles)
            || self.mrc.joints.iter().flatten().any(|&j| j >= num_joints)
        {
            return Err(ReflexError::InvalidConfig(
                "mrc group index out of range".into(),
            ));
        }
        if !(self.mrc.rate > 0.0 && self.mrc.angle_threshold > 0.0) {
            return Err(ReflexError::InvalidConfig(
                "mrc rate and angle_threshold must be positive".into(),
            ));
        }
        self.safety(num_muscles).map(|_| ())
    }

    pub fn safety(&self, num_muscles: usize) -> Result<SafetyReflex, ReflexError> {
        SafetyReflex::new(
            num_muscles,
            self.k_f,
            self.k_c,
            self.f_lim,
            self.c_lim,
            self.dl_min,
            self.dl_max,
        )
    }

    pub fn relaxation(&self, num_muscles: usize, num_joints: usize) -> RelaxationState {
        let f_min = self.mrc.f_min.clone().unwrap_or_else(|| self.f_min.clone());
        let state = RelaxationState::new(
            num_muscles,
            num_joints,
            self.mrc.rate,
            self.mrc.angle_threshold,
            f_min,
        );
        let muscles = self
            .mrc
            .muscles
            .clone()
            .unwrap_or_else(|| (0..num_muscles).collect());
        let joints = self
            .mrc
            .joints
            .clone()
            .unwrap_or_else(|| (0..num_joints).collect());
        state.with_group(muscles, joints)
    }
}

/// Reflex CSV in long format: `t,muscle,dl_relax,dl_safe,f,c`.
pub struct ReflexLog<W: Write> {
    writer: csv::Writer<W>,
    names: Vec<String>,
}

impl<W: Write> ReflexLog<W> {
    pub fn new(out: W, muscle_names: Vec<String>) -> Result<Self, ReflexError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["t", "muscle", "dl_relax", "dl_safe", "f", "c"])?;
        Ok(Self {
            writer,
            names: muscle_names,
        })
    }

    pub fn record(
        &mut self,
        t: f64,
        dl_relax: &[f64],
        dl_safe: &[f64],
        f: &[f64],
        c: &[f64],
    ) -> Result<(), ReflexError> {
        for (i, name) in self.names.iter().enumerate() {
            self.writer.write_record([
                t.to_string(),
                name.clone(),
                dl_relax[i].to_string(),
                dl_safe[i].to_string(),
                f[i].to_string(),
                c[i].to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, ReflexError> {
        self.writer.flush()?;
        self.writer
            .into_inner()
            .map_err(|e| ReflexError::Io(e.into_error()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_with_documented_keys() {
        let cfg = ReflexConfig::reference(8, 3);
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"W1_diag\"") && text.contains("\"K_f\""));
        let back: ReflexConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        back.validate(8, 3).unwrap();
        assert!(back.validate(7, 3).is_err());
    }

    #[test]
    fn log_writes_one_row_per_muscle() {
        let mut log = ReflexLog::new(Vec::new(), vec!["a".into(), "b".into()]).unwrap();
        log.record(0.02, &[0.0, 1e-4], &[0.0; 2], &[5.0, 6.0], &[25.0; 2])
            .unwrap();
        let text = String::from_utf8(log.finish().unwrap()).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().nth(2).unwrap(), "0.02,b,0.0001,0,6,25");
    }
}
