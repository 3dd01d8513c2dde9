use std::io::Write;

use super::DynamicsError;

/// Pedal experiment CSV: `t,v_car,v_ref,theta_ankle_cmd,theta_ankle_actual,loss`.
/// `loss` is left empty for controllers without an optimizer.
pub struct ExperimentLog<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> ExperimentLog<W> {
    pub fn new(out: W) -> Result<Self, DynamicsError> {
        let mut writer = csv::Writer::from_writer(out);
        writer
            .write_record([
                "t",
                "v_car",
                "v_ref",
                "theta_ankle_cmd",
                "theta_ankle_actual",
                "loss",
            ])
            .map_err(io)?;
        Ok(Self { writer })
    }

    pub fn record(
        &mut self,
        t: f64,
        v_car: f64,
        v_ref: f64,
        cmd: f64,
        actual: f64,
        loss: Option<f64>,
    ) -> Result<(), DynamicsError> {
        let loss = loss.map_or(String::new(), |l| l.to_string());
        self.writer
            .write_record([
                t.to_string(),
                v_car.to_string(),
                v_ref.to_string(),
                cmd.to_string(),
                actual.to_string(),
                loss,
            ])
            .map_err(io)
    }

    pub fn finish(mut self) -> Result<W, DynamicsError> {
        self.writer
            .flush()
            .map_err(|e| DynamicsError::Io(e.to_string()))?;
        self.writer
            .into_inner()
            .map_err(|e| DynamicsError::Io(e.into_error().to_string()))
    }
}

fn io(e: csv::Error) -> DynamicsError {
    DynamicsError::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_empty_loss() {
        let mut log = ExperimentLog::new(Vec::new()).unwrap();
        log.record(0.02, 2.5, 5.0, 0.1, 0.09, None).unwrap();
        log.record(0.04, 2.6, 5.0, 0.12, 0.1, Some(0.5)).unwrap();
        let text = String::from_utf8(log.finish().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "t,v_car,v_ref,theta_ankle_cmd,theta_ankle_actual,loss"
        );
        assert_eq!(lines[1], "0.02,2.5,5,0.1,0.09,");
        assert_eq!(lines[2], "0.04,2.6,5,0.12,0.1,0.5");
    }
}
