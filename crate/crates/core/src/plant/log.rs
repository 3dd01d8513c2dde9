use std::io::Write;

use super::{PlantConfig, PlantError, PlantState};

/// Trajectory CSV: `t,theta_*,f_*,c_*,l_*,v_car`.
pub struct TrajectoryLog<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> TrajectoryLog<W> {
    pub fn new(out: W, cfg: &PlantConfig) -> Result<Self, PlantError> {
        let mut writer = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend(cfg.joints.iter().map(|j| format!("theta_{}", j.name)));
        for prefix in ["f", "c", "l"] {
            header.extend(cfg.muscles.iter().map(|m| format!("{prefix}_{}", m.name)));
        }
        header.push("v_car".into());
        writer.write_record(&header)?;
        Ok(Self { writer })
    }

    pub fn record(&mut self, state: &PlantState, v_car: f64) -> Result<(), PlantError> {
        let row: Vec<String> = std::iter::once(state.t)
            .chain(state.theta.iter().copied())
            .chain(state.f.iter().copied())
            .chain(state.c.iter().copied())
            .chain(state.l.iter().copied())
            .chain(std::iter::once(v_car))
            .map(|v| v.to_string())
            .collect();
        self.writer.write_record(&row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, PlantError> {
        self.writer.flush()?;
        self.writer
            .into_inner()
            .map_err(|e| PlantError::Io(e.into_error()))
    }
}
