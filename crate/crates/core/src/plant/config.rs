use serde::{Deserialize, Serialize};

use super::PlantError;

pub const PLANT_FORMAT_VERSION: u32 = 1;

/// Attachment point of a muscle, fixed in the frame of `link`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub link: usize,
    /// Link-local planar coordinates [m].
    pub point: [f64; 2],
}

/// Passive load acting on a joint: `bias - spring_k * (theta - spring_rest)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointLoad {
    #[serde(default)]
    pub bias: f64,
    #[serde(default)]
    pub spring_k: f64,
    #[serde(default)]
    pub spring_rest: f64,
}

impl JointLoad {
    pub fn torque(&self, theta: f64) -> f64 {
        self.bias - self.spring_k * (theta - self.spring_rest)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub name: String,
    /// Rotation sense about the plane normal, `+1` or `-1`.
    pub axis: f64,
    /// `[lower, upper]` [rad].
    pub limits: [f64; 2],
    pub parent_link: usize,
    pub child_link: usize,
    /// Joint position in the parent link frame [m].
    pub origin: [f64; 2],
    #[serde(default)]
    pub neutral: f64,
    /// Effective inertia about the joint [kg m^2].
    pub inertia: f64,
    /// Viscous damping [N m s/rad].
    pub damping: f64,
    #[serde(default)]
    pub load: JointLoad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuscleConfig {
    pub name: String,
    /// Origin, via points, insertion.
    pub attachments: Vec<Attachment>,
    /// Elastic element stiffness [N/m^2].
    pub k2: f64,
    /// Free play of the elastic element before it loads [m].
    #[serde(default)]
    pub slack: f64,
    /// Unmodelled path-length error of the real muscle [m]; zero in the nominal plant.
    #[serde(default)]
    pub length_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarParams {
    /// Acceleration per radian of pedal past the dead zone [km/h/s/rad].
    pub a_max: f64,
    /// Linear resistance about the creep speed [1/s].
    pub drag_coeff: f64,
    /// Quadratic resistance about the creep speed [1/(km/h s)].
    #[serde(default)]
    pub drag_quad: f64,
    /// Pedal dead zone [rad].
    pub dead_zone: f64,
    /// Deceleration per radian of brake past its dead zone [km/h/s/rad].
    pub b_max: f64,
    #[serde(default)]
    pub brake_dead_zone: f64,
    /// Transport delay between pedal angle and drive force [s].
    pub delay_s: f64,
    /// Speed reached with both pedals released [km/h].
    pub creep_kmh: f64,
    /// Steering wheel degrees per radian of steering joint.
    #[serde(default = "default_steer_ratio")]
    pub steer_ratio: f64,
}

fn default_steer_ratio() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    /// Ambient temperature [deg C].
    pub ambient: f64,
    /// Joule heating coefficient [deg C / (N^2 s)].
    pub kappa_h: f64,
    /// Cooling rate [1/s].
    pub kappa_c: f64,
}

/// Which plant quantities map onto the car controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarCoupling {
    /// Joint whose angle is the accelerator pedal angle.
    pub pedal_joint: usize,
    /// Joint coupled to the steering wheel, if any.
    #[serde(default)]
    pub steer_joint: Option<usize>,
}

/// Plant description document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub joints: Vec<JointConfig>,
    pub muscles: Vec<MuscleConfig>,
    pub car: CarParams,
    pub coupling: CarCoupling,
    pub thermal: ThermalParams,
    /// Actuator servo time constant [s].
    #[serde(default = "default_actuator_tau")]
    pub actuator_tau: f64,
}

fn default_version() -> u32 {
    PLANT_FORMAT_VERSION
}

fn default_actuator_tau() -> f64 {
    0.05
}

fn pulley(
    link_parent: usize,
    link_child: usize,
    at: [f64; 2],
    reach: f64,
    r: f64,
) -> Vec<Attachment> {
    vec![
        Attachment {
            link: link_parent,
            point: [at[0] - reach, at[1] + r],
        },
        Attachment {
            link: link_child,
            point: [reach, r],
        },
    ]
}

impl PlantConfig {
    /// The reference desk-scale body: a shoulder/elbow arm with six muscles
    /// (two mono-articular pairs and one bi-articular pair) and an ankle with
    /// an antagonist pair resting on the accelerator pedal.
    pub fn reference() -> Self {
        let upper_arm = 0.30;
        let ankle_at = [0.0, -1.0];
        // Short reach and a wide offset keep every path clear of its joint
        // axis, so moment arms never change sign inside the joint limits.
        let reach = 0.03;
        let arm_r = 0.035;
        let elbow_r = 0.03;
        let bi_r = 0.03;
        let ankle_r = 0.035;
        let muscle = |name: &str, attachments: Vec<Attachment>| MuscleConfig {
            name: name.into(),
            attachments,
            k2: 1.0e6,
            slack: 0.0,
            length_offset: 0.0,
        };
        let biarticular = |sign: f64| {
            vec![
                Attachment {
                    link: 0,
                    point: [-reach, sign * bi_r],
                },
                Attachment {
                    link: 1,
                    point: [reach, sign * bi_r],
                },
                Attachment {
                    link: 1,
                    point: [upper_arm - reach, sign * bi_r],
                },
                Attachment {
                    link: 2,
                    point: [reach, sign * bi_r],
                },
            ]
        };
        Self {
            version: PLANT_FORMAT_VERSION,
            joints: vec![
                JointConfig {
                    name: "shoulder_pitch".into(),
                    axis: 1.0,
                    limits: [-1.0, 1.0],
                    parent_link: 0,
                    child_link: 1,
                    origin: [0.0, 0.0],
                    neutral: 0.0,
                    inertia: 0.08,
                    damping: 1.2,
                    load: JointLoad {
                        bias: -1.5,
                        spring_k: 0.0,
                        spring_rest: 0.0,
                    },
                },
                JointConfig {
                    name: "elbow".into(),
                    axis: 1.0,
                    limits: [-0.8, 1.0],
                    parent_link: 1,
                    child_link: 2,
                    origin: [upper_arm, 0.0],
                    neutral: 0.2,
                    inertia: 0.03,
                    damping: 0.6,
                    load: JointLoad {
                        bias: -0.8,
                        spring_k: 0.0,
                        spring_rest: 0.0,
                    },
                },
                JointConfig {
                    name: "ankle_pitch".into(),
                    axis: 1.0,
                    limits: [-0.2, 0.6],
                    parent_link: 0,
                    child_link: 3,
                    origin: ankle_at,
                    neutral: 0.0,
                    inertia: 0.02,
                    damping: 0.8,
                    load: JointLoad {
                        bias: 0.0,
                        spring_k: 4.0,
                        spring_rest: -0.1,
                    },
                },
            ],
            muscles: vec![
                muscle("shoulder_flexor", pulley(0, 1, [0.0, 0.0], reach, arm_r)),
                muscle("shoulder_extensor", pulley(0, 1, [0.0, 0.0], reach, -arm_r)),
                muscle(
                    "elbow_flexor",
                    pulley(1, 2, [upper_arm, 0.0], reach, elbow_r),
                ),
                muscle(
                    "elbow_extensor",
                    pulley(1, 2, [upper_arm, 0.0], reach, -elbow_r),
                ),
                muscle("biarticular_flexor", biarticular(1.0)),
                muscle("biarticular_extensor", biarticular(-1.0)),
                muscle(
                    "ankle_plantarflexor",
                    pulley(0, 3, ankle_at, reach, ankle_r),
                ),
                muscle("ankle_dorsiflexor", pulley(0, 3, ankle_at, reach, -ankle_r)),
            ],
            car: CarParams {
                a_max: 12.0,
                drag_coeff: 0.25,
                drag_quad: 0.05,
                dead_zone: 0.05,
                b_max: 40.0,
                brake_dead_zone: 0.05,
                delay_s: 0.3,
                creep_kmh: 2.0,
                steer_ratio: 2.0,
            },
            coupling: CarCoupling {
                pedal_joint: 2,
                steer_joint: Some(0),
            },
            thermal: ThermalParams {
                ambient: 25.0,
                kappa_h: 3.0e-5,
                kappa_c: 0.01,
            },
            actuator_tau: 0.05,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PlantError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String, PlantError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn muscle_index(&self, name: &str) -> Option<usize> {
        self.muscles.iter().position(|m| m.name == name)
    }

    pub fn neutral_pose(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.neutral).collect()
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |msg: String| Err(PlantError::InvalidConfig(msg));
        if self.version != PLANT_FORMAT_VERSION {
            return bad(format!("unsupported plant version {}", self.version));
        }
        if self.joints.is_empty() || self.muscles.is_empty() {
            return bad("plant needs at least one joint and one muscle".into());
        }
        let mut known_links = vec![0usize];
        for (i, j) in self.joints.iter().enumerate() {
            if !(j.limits[0] < j.limits[1]) {
                return bad(format!("joint {} has empty limits", j.name));
            }
            if j.axis.abs() != 1.0 {
                return bad(format!("joint {} axis must be +1 or -1", j.name));
            }
            if !(j.inertia > 0.0 && j.damping >= 0.0) {
                return bad(format!(
                    "joint {} needs inertia > 0 and damping >= 0",
                    j.name
                ));
            }
            if !(j.limits[0]..=j.limits[1]).contains(&j.neutral) {
                return bad(format!("joint {} neutral pose outside limits", j.name));
            }
            if !known_links.contains(&j.parent_link) {
                return bad(format!(
                    "joint {i} ({}) parent link {} is not attached to an earlier joint",
                    j.name, j.parent_link
                ));
            }
            if known_links.contains(&j.child_link) {
                return bad(format!(
                    "link {} driven by more than one joint",
                    j.child_link
                ));
            }
            known_links.push(j.child_link);
        }
        for m in &self.muscles {
            if m.attachments.len() < 2 {
                return bad(format!("muscle {} needs at least two attachments", m.name));
            }
            if let Some(a) = m
                .attachments
                .iter()
                .find(|a| !known_links.contains(&a.link))
            {
                return bad(format!(
                    "muscle {} attaches to unknown link {}",
                    m.name, a.link
                ));
            }
            if !(m.k2 > 0.0) {
                return bad(format!("muscle {} needs k2 > 0", m.name));
            }
            if m.slack < 0.0 {
                return bad(format!("muscle {} has negative slack", m.name));
            }
        }
        let c = &self.car;
        if !(c.a_max > 0.0 && c.drag_coeff > 0.0 && c.drag_quad >= 0.0 && c.b_max > 0.0) {
            return bad("car gains must be positive".into());
        }
        if c.delay_s < 0.0 || c.creep_kmh < 0.0 {
            return bad("car delay and creep speed must be non-negative".into());
        }
        if self.coupling.pedal_joint >= self.joints.len()
            || self
                .coupling
                .steer_joint
                .is_some_and(|s| s >= self.joints.len())
        {
            return bad("car coupling names a missing joint".into());
        }
        if !(self.thermal.kappa_c > 0.0 && self.thermal.kappa_h >= 0.0) {
            return bad("thermal coefficients must be positive".into());
        }
        if !(self.actuator_tau > 0.0) {
            return bad("actuator_tau must be positive".into());
        }
        Ok(())
    }
}
