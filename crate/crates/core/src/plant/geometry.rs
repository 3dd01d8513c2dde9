//! Straight-line muscle paths over a planar kinematic tree.

use nalgebra::DMatrix;

use super::{PlantConfig, PlantError};

/// Central-difference step for the muscle Jacobian [rad].
pub const JACOBIAN_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
struct Joint {
    axis: f64,
    limits: [f64; 2],
    parent_link: usize,
    child_link: usize,
    origin: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pose {
    x: f64,
    y: f64,
    angle: f64,
}

impl Pose {
    fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }
}

/// Muscle routing and joint layout of the body.
#[derive(Debug, Clone, PartialEq)]
pub struct MuscleGeometry {
    joints: Vec<Joint>,
    num_links: usize,
    /// Per muscle, `(link, point)` attachments from origin to insertion.
    paths: Vec<Vec<(usize, [f64; 2])>>,
}

impl MuscleGeometry {
    pub fn from_config(cfg: &PlantConfig) -> Result<Self, PlantError> {
        cfg.validate()?;
        let joints: Vec<Joint> = cfg
            .joints
            .iter()
            .map(|j| Joint {
                axis: j.axis,
                limits: j.limits,
                parent_link: j.parent_link,
                child_link: j.child_link,
                origin: j.origin,
            })
            .collect();
        let num_links = joints.iter().map(|j| j.child_link).max().unwrap_or(0) + 1;
        let paths = cfg
            .muscles
            .iter()
            .map(|m| m.attachments.iter().map(|a| (a.link, a.point)).collect())
            .collect();
        Ok(Self {
            joints,
            num_links,
            paths,
        })
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn num_muscles(&self) -> usize {
        self.paths.len()
    }

    pub fn limits(&self, joint: usize) -> [f64; 2] {
        self.joints[joint].limits
    }

    pub fn check_pose(&self, theta: &[f64]) -> Result<(), PlantError> {
        if theta.len() != self.num_joints() {
            return Err(PlantError::Dimension {
                what: "joint angles",
                expected: self.num_joints(),
                got: theta.len(),
            });
        }
        for (i, (t, j)) in theta.iter().zip(&self.joints).enumerate() {
            if !t.is_finite() {
                return Err(PlantError::Fault(format!("joint {i} angle is not finite")));
            }
            if *t < j.limits[0] || *t > j.limits[1] {
                return Err(PlantError::OutOfRange {
                    joint: i,
                    angle: *t,
                    limits: j.limits,
                });
            }
        }
        Ok(())
    }

    fn link_poses(&self, theta: &[f64]) -> Vec<Pose> {
        let mut poses = vec![
            Pose {
                x: 0.0,
                y: 0.0,
                angle: 0.0,
            };
            self.num_links
        ];
        for (j, t) in self.joints.iter().zip(theta) {
            let parent = poses[j.parent_link];
            let [x, y] = parent.apply(j.origin);
            poses[j.child_link] = Pose {
                x,
                y,
                angle: parent.angle + j.axis * t,
            };
        }
        poses
    }

    /// Path lengths without the joint-limit check; used for finite differences
    /// that may step just past a limit.
    pub(crate) fn lengths_unchecked(&self, theta: &[f64]) -> Vec<f64> {
        let poses = self.link_poses(theta);
        self.paths
            .iter()
            .map(|path| {
                path.windows(2)
                    .map(|seg| {
                        let a = poses[seg[0].0].apply(seg[0].1);
                        let b = poses[seg[1].0].apply(seg[1].1);
                        (b[0] - a[0]).hypot(b[1] - a[1])
                    })
                    .sum()
            })
            .collect()
    }

    /// Sum of straight segment lengths along each muscle path [m].
    pub fn geometric_muscle_length(&self, theta: &[f64]) -> Result<Vec<f64>, PlantError> {
        self.check_pose(theta)?;
        Ok(self.lengths_unchecked(theta))
    }

    pub(crate) fn jacobian_unchecked(&self, theta: &[f64]) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.num_muscles(), self.num_joints());
        let mut probe = theta.to_vec();
        for j in 0..self.num_joints() {
            probe[j] = theta[j] + JACOBIAN_STEP;
            let plus = self.lengths_unchecked(&probe);
            probe[j] = theta[j] - JACOBIAN_STEP;
            let minus = self.lengths_unchecked(&probe);
            probe[j] = theta[j];
            for i in 0..self.num_muscles() {
                g[(i, j)] = (plus[i] - minus[i]) / (2.0 * JACOBIAN_STEP);
            }
        }
        g
    }

    /// `G[i][j] = dl_i/dtheta_j` (muscles x joints), by central differences.
    pub fn muscle_jacobian(&self, theta: &[f64]) -> Result<DMatrix<f64>, PlantError> {
        self.check_pose(theta)?;
        Ok(self.jacobian_unchecked(theta))
    }
}
