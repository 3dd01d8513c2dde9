//! Reproducible experiment scenarios on the simulated rig: pedal speed
//! tracking with scripted recognition events, controller comparison, and
//! the online-learning, relaxation, safety and estimation demonstrations.

mod demos;
mod pedal;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::dynamic::DynamicConfig;
use crate::reflex::ReflexConfig;
use crate::rig::RigOptions;
use crate::static_model::{EkfConfig, StaticConfig};
use crate::Error;

pub use demos::{ekf_demo, online_learning_demo, probe_pose, relax_demo, safety_demo};
pub use pedal::{
    collect_pedal_rollout, compare_controllers, new_pedal_task, run_pedal, run_scenario, Assets,
    PedalTrace,
};

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

/// Car speed below which the car counts as halted [km/h].
pub const HALT_SPEED: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    PersonDetected,
    HornDetected,
    LightRed,
    LightBlue,
    /// Releases the brake after any stop event.
    Resume,
}

impl Event {
    /// True for events that latch the brake, false for events that release it.
    pub fn brakes(self) -> bool {
        matches!(
            self,
            Event::PersonDetected | Event::HornDetected | Event::LightRed
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedEvent {
    pub t: f64,
    pub event: Event,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    Mpc,
    Pid,
}

impl ControllerKind {
    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::Mpc => "mpc",
            ControllerKind::Pid => "pid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[default]
    Pedal,
    OnlineLearning,
    Relax,
    Safety,
    Ekf,
}

/// Parameters of the non-pedal demonstrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoConfig {
    /// Path length the body has beyond the model, every muscle [m].
    pub model_error_m: f64,
    /// Online updates in the learning run (one per tick).
    pub online_updates: usize,
    /// Length of the probe trajectory before and after learning [s].
    pub probe_s: f64,
    /// Body path error for the relaxation demo [m].
    pub relax_error_m: f64,
    /// Settling before the relaxation hold, then the hold itself [s].
    pub settle_s: f64,
    pub hold_s: f64,
    pub disturbance_joint: usize,
    /// External torque pulse for the safety demo [N m].
    pub disturbance_torque: f64,
    /// Pulse start and end, then run end [s].
    pub disturbance_window: [f64; 3],
    /// Length measurement noise for the EKF demo, one standard deviation [m].
    pub length_noise_m: f64,
    pub burn_in_s: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            model_error_m: 5e-3,
            online_updates: 500,
            probe_s: 4.0,
            relax_error_m: 2e-3,
            settle_s: 2.0,
            hold_s: 5.0,
            disturbance_joint: 1,
            disturbance_torque: 7.5,
            disturbance_window: [0.5, 2.0, 3.0],
            length_noise_m: 5e-4,
            burn_in_s: 1.0,
        }
    }
}

fn default_v_ref() -> f64 {
    5.0
}

/// One experiment document. Relative paths resolve against the directory of
/// the file it was loaded from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub kind: ScenarioKind,
    /// Body configuration; the reference body when absent.
    #[serde(default)]
    pub plant: Option<PathBuf>,
    /// Trained static model; trained from the body geometry when absent.
    #[serde(default)]
    pub static_model: Option<PathBuf>,
    /// Trained dynamics model; collected and trained when absent.
    #[serde(default)]
    pub dynamics_model: Option<PathBuf>,
    #[serde(default, rename = "static")]
    pub static_config: StaticConfig,
    /// Reflex and tension-planner settings; reference values when absent.
    #[serde(default)]
    pub reflex: Option<ReflexConfig>,
    #[serde(default)]
    pub dynamic: DynamicConfig,
    #[serde(default)]
    pub controller: ControllerKind,
    /// Speed target [km/h].
    #[serde(default = "default_v_ref")]
    pub v_ref: f64,
    /// Starting speed [km/h].
    #[serde(default)]
    pub v0: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub events: Vec<ScriptedEvent>,
    /// Road grade as extra acceleration [km/h/s], positive downhill. Only
    /// applied while driving; rollouts for training are always on the flat.
    #[serde(default)]
    pub grade: f64,
    /// Attaches a joint-angle EKF whose estimate feeds the dynamics model.
    #[serde(default)]
    pub ekf: Option<EkfConfig>,
    #[serde(default)]
    pub rig: RigOptions,
    #[serde(default)]
    pub demo: DemoConfig,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl Scenario {
    /// A pedal tracking run with every setting at its default.
    pub fn pedal(name: &str, duration_s: f64, seed: u64) -> Self {
        Self {
            version: SCENARIO_FORMAT_VERSION,
            name: name.into(),
            kind: ScenarioKind::Pedal,
            plant: None,
            static_model: None,
            dynamics_model: None,
            static_config: StaticConfig::default(),
            reflex: None,
            dynamic: DynamicConfig::default(),
            controller: ControllerKind::Mpc,
            v_ref: default_v_ref(),
            v0: 0.0,
            duration_s,
            seed,
            events: Vec::new(),
            grade: 0.0,
            ekf: None,
            rig: RigOptions::default(),
            demo: DemoConfig::default(),
            out: None,
        }
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, Error> {
        let s: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.into(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    /// Reads and validates a scenario file; returns it with the directory
    /// its relative paths refer to.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), Error> {
        let text = read(path)?;
        let s = Self::from_json(&text, &path.display().to_string())?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((s, base))
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Config(m));
        if self.version != SCENARIO_FORMAT_VERSION {
            return bad(format!(
                "scenario version {} is not supported (expected {SCENARIO_FORMAT_VERSION})",
                self.version
            ));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!(
                "scenario name {:?} must be a plain file stem",
                self.name
            ));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!(
                "duration_s must be positive, got {}",
                self.duration_s
            ));
        }
        if !(self.v_ref > 0.0 && self.v_ref.is_finite())
            || !(self.v0 >= 0.0)
            || !self.grade.is_finite()
        {
            return bad("v_ref must be positive, v0 non-negative and grade finite".into());
        }
        if self.events.iter().any(|e| !(e.t >= 0.0 && e.t.is_finite())) {
            return bad("event times must be non-negative".into());
        }
        if self.events.windows(2).any(|w| w[1].t < w[0].t) {
            return bad("events must be sorted by time".into());
        }
        self.dynamic.validate()?;
        let d = &self.demo;
        let w = d.disturbance_window;
        if !(0.0 <= w[0] && w[0] <= w[1] && w[1] <= w[2]) {
            return bad("disturbance_window must be ordered start <= end <= run end".into());
        }
        if d.online_updates == 0 || !(d.probe_s > 0.0 && d.hold_s > 0.0 && d.settle_s >= 0.0) {
            return bad("demo durations and update count must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 over the scenario (without its output directory) and the
    /// bytes of every file it references.
    pub fn config_hash(&self, base: &Path) -> Result<String, Error> {
        let mut doc = self.clone();
        doc.out = None;
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&doc).map_err(|e| Error::Config(e.to_string()))?);
        for p in [&self.plant, &self.static_model, &self.dynamics_model]
            .into_iter()
            .flatten()
        {
            let path = base.join(p);
            let bytes = std::fs::read(&path).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }
}

pub(crate) fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|source| Error::Io {
                path: dir.display().to_string(),
                source,
            })?;
        }
    }
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// A reported scalar. Infinite values stand for "never" (e.g. a run that
/// does not settle) and serialize as that string; finite values are rounded
/// to six significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric(pub f64);

impl Metric {
    pub const NEVER: Metric = Metric(f64::INFINITY);

    pub fn from_option(v: Option<f64>) -> Self {
        v.map_or(Self::NEVER, Metric)
    }

    pub fn is_never(self) -> bool {
        self.0 == f64::INFINITY
    }
}

fn six_digits(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.5e}").parse().unwrap_or(v)
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_never() {
            f.write_str("never")
        } else {
            write!(f, "{}", six_digits(self.0))
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.is_never() {
            s.serialize_str("never")
        } else {
            s.serialize_f64(six_digits(self.0))
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(Metric(v)),
            Raw::Text(t) if t == "never" => Ok(Metric::NEVER),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "unknown metric value {t:?}"
            ))),
        }
    }
}

/// Metrics and named file contents produced by one scenario run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub metrics: Vec<(String, Metric)>,
    pub files: Vec<(String, Vec<u8>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub config_hash: String,
    pub metrics: BTreeMap<String, Metric>,
    /// Emitted files, relative to the output directory.
    pub files: Vec<String>,
}

impl RunReport {
    pub fn new(name: &str, seed: u64, config_hash: String) -> Self {
        Self {
            name: name.into(),
            seed,
            config_hash,
            metrics: BTreeMap::new(),
            files: Vec::new(),
        }
    }

    /// Stores `value` at the printed precision.
    pub fn set(&mut self, key: impl Into<String>, value: Metric) {
        self.metrics.insert(key.into(), Metric(six_digits(value.0)));
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).map(|m| m.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `<name>_report.json` into `dir` and lists it in `files`.
    pub fn write(&mut self, dir: &Path) -> Result<PathBuf, Error> {
        let file = format!("{}_report.json", self.name);
        if !self.files.contains(&file) {
            self.files.push(file.clone());
        }
        let path = dir.join(&file);
        write(&path, self.to_json().as_bytes())?;
        Ok(path)
    }
}

/// One pass/fail verdict on a reported metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        pass,
        detail,
    }
}

fn metric(r: &RunReport, key: &str) -> Metric {
    r.metrics.get(key).copied().unwrap_or(Metric(f64::NAN))
}

/// Pass/fail verdicts for a report of scenario kind `kind`.
pub fn scenario_checks(kind: ScenarioKind, r: &RunReport) -> Vec<Check> {
    let m = |k: &str| metric(r, k);
    match kind {
        ScenarioKind::Pedal => {
            let mut out = vec![check(
                "settles",
                !m("settle_s").is_never() && m("settle_s").0.is_finite(),
                format!("settle_s = {}", m("settle_s")),
            )];
            for (key, value) in &r.metrics {
                if key.starts_with("halt_") {
                    out.push(check(key, value.0 <= 3.0, format!("{value} s <= 3 s")));
                } else if key.starts_with("halted_peak_v_") {
                    out.push(check(
                        key,
                        value.0 < HALT_SPEED,
                        format!("{value} km/h < {HALT_SPEED}"),
                    ));
                } else if key.starts_with("resettle_") {
                    out.push(check(key, !value.is_never(), format!("{value} s")));
                }
            }
            out
        }
        ScenarioKind::OnlineLearning => vec![
            check(
                "length error decays",
                m("error_ratio").0 < 0.4,
                format!("after/before = {} < 0.4", m("error_ratio")),
            ),
            check(
                "antagonist tension drops",
                m("peak_antagonist_after_n").0 < m("peak_antagonist_before_n").0,
                format!(
                    "{} N < {} N",
                    m("peak_antagonist_after_n"),
                    m("peak_antagonist_before_n")
                ),
            ),
        ],
        ScenarioKind::Relax => vec![
            check(
                "tension reduced",
                m("mrc_ratio").0 < 0.6,
                format!("mrc/baseline = {} < 0.6", m("mrc_ratio")),
            ),
            check(
                "drift within threshold",
                m("final_drift_rad").0 <= m("angle_threshold_rad").0,
                format!(
                    "{} rad <= {} rad",
                    m("final_drift_rad"),
                    m("angle_threshold_rad")
                ),
            ),
            check(
                "constrained reduces further",
                m("tension_constrained_n").0 < m("tension_mrc_n").0,
                format!(
                    "{} N < {} N",
                    m("tension_constrained_n"),
                    m("tension_mrc_n")
                ),
            ),
        ],
        ScenarioKind::Safety => vec![
            check(
                "rate limited",
                m("max_step_m").0 <= m("dl_max_m").0 * (1.0 + 1e-9),
                format!("{} m <= {} m", m("max_step_m"), m("dl_max_m")),
            ),
            check(
                "peak lowered",
                m("peak_with_n").0 < m("peak_without_n").0,
                format!("{} N < {} N", m("peak_with_n"), m("peak_without_n")),
            ),
        ],
        ScenarioKind::Ekf => vec![check(
            "estimate accurate",
            m("rmse_rad").0 < 0.05,
            format!("rmse {} rad < 0.05", m("rmse_rad")),
        )],
    }
}

/// Whether `learned` settled strictly before `baseline` in a comparison report.
pub fn comparison_check(r: &RunReport, learned: &str, baseline: &str) -> Check {
    let a = metric(r, &format!("settle_{learned}_s"));
    let b = metric(r, &format!("settle_{baseline}_s"));
    check(
        &format!("{learned} settles before {baseline}"),
        !a.is_never() && a.0 < b.0,
        format!("{a} s vs {b} s"),
    )
}

/// Settle-to-20% time: the first sample time after which every later sample
/// stays within `0.2 * v_ref` of `v_ref`, measured from `t_start`. `None`
/// when the final sample is still outside the band.
pub fn settle_time(samples: &[(f64, f64)], v_ref: f64, t_start: f64) -> Option<f64> {
    let band = 0.2 * v_ref.abs();
    let last_bad = samples.iter().rposition(|&(_, v)| (v - v_ref).abs() > band);
    match last_bad {
        None => samples.first().map(|&(t, _)| t - t_start),
        Some(k) => samples.get(k + 1).map(|&(t, _)| t - t_start),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settle_time_takes_the_last_exit_from_the_band() {
        let s: Vec<(f64, f64)> = [0.0, 3.0, 4.5, 6.5, 5.5, 5.0, 4.1]
            .iter()
            .enumerate()
            .map(|(k, &v)| (k as f64, v))
            .collect();
        assert_eq!(settle_time(&s, 5.0, 0.0), Some(4.0));
        assert_eq!(settle_time(&s[4..], 5.0, 1.0), Some(3.0));
        assert_eq!(settle_time(&s[..4], 5.0, 0.0), None);
        assert_eq!(settle_time(&[], 5.0, 0.0), None);
    }

    #[test]
    fn metrics_round_and_encode_never() {
        let mut r = RunReport::new("x", 3, "h".into());
        r.set("a", Metric(1.234_567_89));
        r.set("b", Metric::NEVER);
        let text = r.to_json();
        assert!(text.contains("\"a\": 1.23457"), "{text}");
        assert!(text.contains("\"b\": \"never\""), "{text}");
        let back: RunReport = serde_json::from_str(&text).unwrap();
        assert!(back.metrics["b"].is_never());
        assert_eq!(back.metrics["a"].0, 1.23457);
    }

    #[test]
    fn parse_errors_name_file_and_line() {
        let err = Scenario::from_json("{\n  \"version\": 1,\n  \"nme\": \"x\"\n}", "pedal.json")
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("pedal.json:3:"), "{msg}");
    }

    #[test]
    fn unsorted_events_are_rejected() {
        let mut s = Scenario::pedal("p", 10.0, 0);
        s.events = vec![
            ScriptedEvent {
                t: 5.0,
                event: Event::Resume,
            },
            ScriptedEvent {
                t: 2.0,
                event: Event::PersonDetected,
            },
        ];
        assert!(s.validate().is_err());
    }

    #[test]
    fn hash_ignores_the_output_directory() {
        let a = Scenario::pedal("p", 10.0, 0);
        let mut b = a.clone();
        b.out = Some("elsewhere".into());
        let base = Path::new(".");
        assert_eq!(a.config_hash(base).unwrap(), b.config_hash(base).unwrap());
        b.seed = 1;
        assert_ne!(a.config_hash(base).unwrap(), b.config_hash(base).unwrap());
    }
}
