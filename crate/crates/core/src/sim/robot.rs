//! Four-joint arm: base yaw followed by three pitch joints, with a camera on
//! the tip.
//!
//! World frame: `z` up, `x` forward. At zero joint angles the arm stands
//! upright and the untilted camera looks along `+x`. A positive pitch leans
//! the arm forward and turns the camera downward; a positive camera tilt
//! turns it further down.

use crate::error::{check_len, Error, Result};

pub const GRAVITY: f64 = 9.81;

/// Box limits on each joint angle (rad).
#[derive(Debug, Clone, PartialEq)]
pub struct JointLimits {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl JointLimits {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_len("joint limits", lo.len(), hi.len())?;
        if lo.is_empty() {
            return Err(Error::Empty("joint limits"));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite())
        {
            return Err(Error::InvalidConfig(format!(
                "empty joint limit box {lo:?} .. {hi:?}"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// [-165, 165], [-45, 45], [-22.5, 0], [-22.5, 0] degrees.
    pub fn mycobot() -> Self {
        let deg = |d: f64| d.to_radians();
        Self {
            lo: vec![deg(-165.0), deg(-45.0), deg(-22.5), deg(-22.5)],
            hi: vec![deg(165.0), deg(45.0), 0.0, 0.0],
        }
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        self.check(theta).is_ok()
    }

    pub fn check(&self, theta: &[f64]) -> Result<()> {
        check_len("joint angles", self.len(), theta.len())?;
        for (joint, ((&v, &lo), &hi)) in theta.iter().zip(&self.lo).zip(&self.hi).enumerate() {
            let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
            if !(v >= lo - tol && v <= hi + tol) {
                return Err(Error::OutOfLimits {
                    joint,
                    value: v,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, theta: &mut [f64]) {
        for ((v, &lo), &hi) in theta.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.clamp(lo, hi);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotSpec {
    /// Base column, then the three pitch links (m).
    pub link_lengths: [f64; 4],
    /// Point masses at each link midpoint (kg).
    pub masses: [f64; 4],
    pub limits: JointLimits,
    /// Camera origin relative to the tip, in the tip frame (m).
    pub camera_offset: [f64; 3],
    /// Downward camera tilt relative to the tip frame (rad).
    pub camera_tilt: f64,
    pub fov_half_angle: f64,
}

impl Default for RobotSpec {
    fn default() -> Self {
        Self {
            link_lengths: [0.13, 0.11, 0.10, 0.06],
            masses: [0.25, 0.2, 0.15, 0.1],
            limits: JointLimits::mycobot(),
            camera_offset: [0.02, 0.0, 0.0],
            camera_tilt: 0.0,
            fov_half_angle: 30f64.to_radians(),
        }
    }
}

impl RobotSpec {
    pub fn with_tilt(&self, tilt: f64) -> Self {
        Self {
            camera_tilt: tilt,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .link_lengths
            .iter()
            .chain(&self.masses)
            .any(|&x| !(x > 0.0))
        {
            return Err(Error::InvalidConfig(
                "link lengths and masses must be > 0".into(),
            ));
        }
        if self.limits.len() != 4 {
            return Err(Error::InvalidConfig(
                "the arm has exactly 4 actuated joints".into(),
            ));
        }
        if !(self.fov_half_angle > 0.0 && self.fov_half_angle < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidConfig(
                "field of view half-angle must be in (0, pi/2)".into(),
            ));
        }
        Ok(())
    }
}

/// Camera origin, unit line-of-sight and field-of-view half-angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub origin: [f64; 3],
    pub direction: [f64; 3],
    pub fov_half_angle: f64,
}

/// Cumulative pitch of each of the three pitch links.
fn cumulative_pitch(theta: &[f64]) -> [f64; 3] {
    [
        theta[1],
        theta[1] + theta[2],
        theta[1] + theta[2] + theta[3],
    ]
}

pub fn forward_kinematics(spec: &RobotSpec, theta: &[f64]) -> Result<CameraPose> {
    spec.limits.check(theta)?;
    let l = spec.link_lengths;
    let phi = cumulative_pitch(theta);
    let (sy, cy) = theta[0].sin_cos();

    // tip in the arm plane: radial reach and height
    let mut reach = 0.0;
    let mut height = l[0];
    for k in 0..3 {
        reach += l[k + 1] * phi[k].sin();
        height += l[k + 1] * phi[k].cos();
    }
    // tip frame axes in the arm plane (radial, lateral, vertical components)
    let (sp, cp) = phi[2].sin_cos();
    let x_axis = [cp, 0.0, -sp];
    let z_axis = [sp, 0.0, cp];
    let [ox, oy, oz] = spec.camera_offset;
    let radial = reach + ox * x_axis[0] + oz * z_axis[0];
    let vertical = height + ox * x_axis[2] + oz * z_axis[2];
    // the lateral axis is the yawed y axis
    let origin = [radial * cy - oy * sy, radial * sy + oy * cy, vertical];

    let (st, ct) = (phi[2] + spec.camera_tilt).sin_cos();
    let direction = [ct * cy, ct * sy, -st];
    Ok(CameraPose {
        origin,
        direction,
        fov_half_angle: spec.fov_half_angle,
    })
}

/// Heights of the four link midpoints.
fn midpoint_heights(spec: &RobotSpec, theta: &[f64]) -> [f64; 4] {
    let l = spec.link_lengths;
    let phi = cumulative_pitch(theta);
    let mut z = [0.5 * l[0], 0.0, 0.0, 0.0];
    let mut base = l[0];
    for k in 0..3 {
        z[k + 1] = base + 0.5 * l[k + 1] * phi[k].cos();
        base += l[k + 1] * phi[k].cos();
    }
    z
}

/// Gravitational potential energy of the link point masses (J).
pub fn potential_energy(spec: &RobotSpec, theta: &[f64]) -> Result<f64> {
    check_len("joint angles", 4, theta.len())?;
    Ok(midpoint_heights(spec, theta)
        .iter()
        .zip(&spec.masses)
        .map(|(z, m)| GRAVITY * m * z)
        .sum())
}

/// Static gravity torque on each joint, `-dU/dtheta` (N m).
///
/// The base yaw axis is vertical, so its entry is always zero.
pub fn gravity_torque(spec: &RobotSpec, theta: &[f64]) -> Result<[f64; 4]> {
    spec.limits.check(theta)?;
    let l = spec.link_lengths;
    let m = spec.masses;
    let phi = cumulative_pitch(theta);
    // dz_k/dphi_j for pitch link k (1..=3) and cumulative angle j <= k
    let mut tau = [0.0; 4];
    for joint in 1..4 {
        let mut dudq = 0.0;
        for k in 1..4 {
            // phi[j-1] depends on theta[joint] when j >= joint
            for j in joint..=k {
                let arm = if j == k { 0.5 * l[k] } else { l[j] };
                dudq -= m[k] * arm * phi[j - 1].sin();
            }
        }
        tau[joint] = -GRAVITY * dudq;
    }
    Ok(tau)
}

/// Distance from `point` to the infinite line through the camera origin
/// along its line of sight.
pub fn point_line_distance(pose: &CameraPose, point: &[f64; 3]) -> f64 {
    let d: [f64; 3] = std::array::from_fn(|i| point[i] - pose.origin[i]);
    let along: f64 = (0..3).map(|i| d[i] * pose.direction[i]).sum();
    let perp2: f64 = (0..3)
        .map(|i| (d[i] - along * pose.direction[i]).powi(2))
        .sum();
    perp2.max(0.0).sqrt()
}
