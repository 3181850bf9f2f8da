//! Rigid-body model of a single blimp.
//!
//! Frames: the world frame `{W}` has `z` up; the body frame `{B}` sits at the
//! center of mass with `x` forward, `y` left and `z` up. Two servo-rotor stacks
//! hang on an arm parallel to `y_B`, `arm_depth` below the center of mass.
//! Each rotor pushes with thrust `f_i` along `[cos a_i, 0, sin a_i]` in `{B}`,
//! so `a_i = 0` points forward and `a_i = +90 deg` points up.
//!
//! Rotor 1 is mounted at `[0, +d, l_b]` (left) and rotor 2 at `[0, -d, l_b]`
//! (right). With this labeling the closed-form allocation in [`allocate`] is
//! the exact inverse of [`thrust_wrench`].

use nalgebra::{Matrix3, Rotation3, Vector3};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::Add;
use thiserror::Error;

/// Pitch beyond which the Euler-angle representation is no longer trusted.
pub const MAX_PITCH: f64 = 60.0 * PI / 180.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("integration produced a non-finite state")]
    NonFiniteState,
    #[error("pitch {0:.3} rad exceeds the Euler-angle validity limit")]
    PitchLimit(f64),
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimestep(f64),
    #[error("invalid blimp parameters: {0}")]
    InvalidParams(String),
    #[error("actuator command outside limits: {0}")]
    CommandOutOfRange(String),
}

/// Mass, inertia, drag and geometry of one blimp.
///
/// Diagonal matrices are stored as their diagonals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct BlimpParams {
    /// Total mass, kg.
    pub mass: f64,
    /// Principal moments of inertia, kg m^2.
    pub inertia: [f64; 3],
    /// Translational drag, N s/m, applied along the body axes.
    pub drag_force: [f64; 3],
    /// Rotational drag, N m s.
    pub drag_torque: [f64; 3],
    /// Buoyant force in N. `None` trims the blimp to neutral (`m g`).
    pub buoyancy: Option<f64>,
    /// Gravitational acceleration, m/s^2.
    pub gravity: f64,
    /// Lateral rotor offset `d` from `z_B`, m.
    pub arm_offset: f64,
    /// Signed `z` offset of the rotor arm in `{B}` (negative: below the COM).
    pub arm_depth: f64,
    /// Per-rotor thrust limit, N.
    pub max_thrust: f64,
    /// Servo tilt limits `[min, max]`, rad.
    pub servo_range: [f64; 2],
}

impl Default for BlimpParams {
    fn default() -> Self {
        Self {
            mass: 0.130,
            inertia: [8e-3, 8e-3, 8e-3],
            drag_force: [0.08, 0.10, 0.10],
            drag_torque: [5e-3, 5e-3, 5e-3],
            buoyancy: None,
            gravity: 9.81,
            arm_offset: 0.35,
            arm_depth: -0.45,
            // 35 g of thrust per rotor.
            max_thrust: 0.343,
            servo_range: [-FRAC_PI_2, FRAC_PI_2],
        }
    }
}

impl BlimpParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |what: &str| Err(DynamicsError::InvalidParams(what.to_string()));
        let finite = [self.mass, self.gravity, self.arm_offset, self.arm_depth, self.max_thrust]
            .iter()
            .chain(self.inertia.iter())
            .chain(self.drag_force.iter())
            .chain(self.drag_torque.iter())
            .chain(self.servo_range.iter())
            .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite value");
        }
        if self.mass <= 0.0 {
            return bad("mass must be positive");
        }
        if self.inertia.iter().any(|&v| v <= 0.0) {
            return bad("inertia diagonal must be positive");
        }
        if self.drag_force.iter().chain(self.drag_torque.iter()).any(|&v| v <= 0.0) {
            return bad("drag diagonals must be positive");
        }
        if self.arm_offset <= 0.0 {
            return bad("arm offset must be positive");
        }
        if self.max_thrust <= 0.0 {
            return bad("max thrust must be positive");
        }
        if self.servo_range[0] > self.servo_range[1] {
            return bad("servo range is inverted");
        }
        match self.buoyancy {
            Some(b) if !b.is_finite() => bad("buoyancy must be finite"),
            _ => Ok(()),
        }
    }

    pub fn buoyant_force(&self) -> f64 {
        self.buoyancy.unwrap_or(self.mass * self.gravity)
    }

    /// Distance from the COM up to the center of buoyancy.
    pub fn buoyancy_lever(&self) -> f64 {
        -self.arm_depth
    }

    /// Rotor mounting positions in `{B}`.
    pub fn rotor_positions(&self) -> [Vector3<f64>; 2] {
        [
            Vector3::new(0.0, self.arm_offset, self.arm_depth),
            Vector3::new(0.0, -self.arm_offset, self.arm_depth),
        ]
    }

    pub fn inertia_vector(&self) -> Vector3<f64> {
        Vector3::from(self.inertia)
    }
}

/// Pose and twist. `velocity` is world-frame, `omega` is body-frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidState {
    pub position: Vector3<f64>,
    /// `(roll, pitch, yaw)`, ZYX convention, each wrapped to `(-pi, pi]`.
    pub euler: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub omega: Vector3<f64>,
}

impl Default for RigidState {
    fn default() -> Self {
        Self::at_rest(Vector3::zeros(), 0.0)
    }
}

impl RigidState {
    pub fn at_rest(position: Vector3<f64>, yaw: f64) -> Self {
        Self {
            position,
            euler: Vector3::new(0.0, 0.0, wrap_angle(yaw)),
            velocity: Vector3::zeros(),
            omega: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation(&self.euler)
    }

    pub fn roll(&self) -> f64 {
        self.euler.x
    }

    pub fn pitch(&self) -> f64 {
        self.euler.y
    }

    pub fn yaw(&self) -> f64 {
        self.euler.z
    }

    /// Unit vector of `x_B` in the world frame.
    pub fn heading_vector(&self) -> Vector3<f64> {
        self.rotation().column(0).into_owned()
    }

    /// Speed along the body `x` axis.
    pub fn forward_speed(&self) -> f64 {
        self.heading_vector().dot(&self.velocity)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.euler.iter()).chain(self.velocity.iter()).chain(self.omega.iter()).all(|v| v.is_finite())
    }

    /// Translational plus rotational kinetic energy.
    pub fn kinetic_energy(&self, params: &BlimpParams) -> f64 {
        let j = params.inertia_vector();
        0.5 * params.mass * self.velocity.norm_squared() + 0.5 * self.omega.dot(&j.component_mul(&self.omega))
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// `R = Rz(yaw) Ry(pitch) Rx(roll)`, mapping `{B}` vectors into `{W}`.
pub fn rotation(euler: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::from_euler_angles(euler.x, euler.y, euler.z).into_inner()
}

/// Maps body rates to ZYX Euler-angle rates.
pub fn euler_rates(euler: &Vector3<f64>, omega: &Vector3<f64>) -> Vector3<f64> {
    let (sr, cr) = euler.x.sin_cos();
    let (sp, cp) = euler.y.sin_cos();
    let (p, q, r) = (omega.x, omega.y, omega.z);
    let qr = q * sr + r * cr;
    Vector3::new(p + qr * sp / cp, q * cr - r * sr, qr / cp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefFrame {
    Body,
    World,
}

/// Force/torque pair tagged with the frame its force is expressed in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
    pub frame: RefFrame,
}

impl Wrench {
    pub fn zero(frame: RefFrame) -> Self {
        Self { force: Vector3::zeros(), torque: Vector3::zeros(), frame }
    }

    pub fn checked_add(self, other: Wrench) -> Option<Wrench> {
        (self.frame == other.frame).then(|| Wrench {
            force: self.force + other.force,
            torque: self.torque + other.torque,
            frame: self.frame,
        })
    }
}

impl Add for Wrench {
    type Output = Wrench;

    /// Panics when the frames differ; use [`Wrench::checked_add`] otherwise.
    fn add(self, other: Wrench) -> Wrench {
        self.checked_add(other).expect("adding wrenches expressed in different frames")
    }
}

/// Thrusts and servo tilts for the two rotor stacks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorCommand {
    thrust: [f64; 2],
    tilt: [f64; 2],
}

impl ActuatorCommand {
    pub const IDLE: ActuatorCommand = ActuatorCommand { thrust: [0.0; 2], tilt: [0.0; 2] };

    pub fn new(thrust: [f64; 2], tilt: [f64; 2], params: &BlimpParams) -> Result<Self, DynamicsError> {
        for i in 0..2 {
            if !(0.0..=params.max_thrust).contains(&thrust[i]) {
                return Err(DynamicsError::CommandOutOfRange(format!("thrust[{i}] = {}", thrust[i])));
            }
            if !(params.servo_range[0]..=params.servo_range[1]).contains(&tilt[i]) {
                return Err(DynamicsError::CommandOutOfRange(format!("tilt[{i}] = {}", tilt[i])));
            }
        }
        Ok(Self { thrust, tilt })
    }

    pub fn thrust(&self) -> [f64; 2] {
        self.thrust
    }

    pub fn tilt(&self) -> [f64; 2] {
        self.tilt
    }

    fn direction(&self, i: usize) -> Vector3<f64> {
        let (s, c) = self.tilt[i].sin_cos();
        Vector3::new(c, 0.0, s)
    }
}

/// Net force and torque produced by the rotors, in `{B}`.
pub fn thrust_wrench(cmd: &ActuatorCommand, params: &BlimpParams) -> Wrench {
    let mut w = Wrench::zero(RefFrame::Body);
    for (i, p) in params.rotor_positions().iter().enumerate() {
        let f = cmd.direction(i) * cmd.thrust[i];
        w.force += f;
        w.torque += p.cross(&f);
    }
    // The rotors cannot push sideways.
    w.force.y = 0.0;
    w
}

/// Buoyancy torque in `{B}`: the buoyant force acts a lever `l` above the COM.
pub fn buoyancy_torque(euler: &Vector3<f64>, params: &BlimpParams) -> Vector3<f64> {
    let rot = rotation(euler);
    let lever = rot * Vector3::new(0.0, 0.0, params.buoyancy_lever());
    let world = lever.cross(&Vector3::new(0.0, 0.0, params.buoyant_force()));
    rot.transpose() * world
}

/// Gravity plus buoyancy. The force is in `{W}`, the torque in `{B}`, which
/// is how they enter the translational and rotational equations.
pub fn external_wrench(state: &RigidState, params: &BlimpParams) -> Wrench {
    Wrench {
        force: Vector3::new(0.0, 0.0, params.buoyant_force() - params.mass * params.gravity),
        torque: buoyancy_torque(&state.euler, params),
        frame: RefFrame::World,
    }
}

/// Result of [`allocate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub command: ActuatorCommand,
    /// Set when any thrust or tilt had to be limited.
    pub saturated: bool,
}

/// Solves rotor thrusts and tilts for a desired body force `(f_x, 0, f_z)` and
/// yaw torque `tau_z`.
///
/// Each rotor takes half of the force; the yaw torque is split as a thrust
/// differential across the arm. Roll torque is not commanded. Thrust is
/// clamped first, then tilt; when the tilt is clamped the thrust is reduced
/// to the component of the requested rotor force along the achievable
/// direction. The other rotor is never rescaled.
pub fn allocate(f_x: f64, f_z: f64, tau_z: f64, params: &BlimpParams) -> Allocation {
    let tau_x = 0.0;
    let d = params.arm_offset;
    let mut thrust = [0.0; 2];
    let mut tilt = [0.0; 2];
    let mut saturated = false;
    for i in 0..2 {
        // (-1)^i for i = 1, 2
        let sign = if i == 0 { -1.0 } else { 1.0 };
        let fx = 0.5 * (f_x + sign * tau_z / d);
        let fz = 0.5 * (f_z - sign * tau_x / d);
        let mut f = fx.hypot(fz);
        let mut a = fz.atan2(fx);
        if !f.is_finite() || !a.is_finite() {
            f = 0.0;
            a = 0.0;
            saturated = true;
        }
        if f > params.max_thrust {
            f = params.max_thrust;
            saturated = true;
        }
        let clamped = a.clamp(params.servo_range[0], params.servo_range[1]);
        if clamped != a {
            saturated = true;
            let (s, c) = clamped.sin_cos();
            f = f.min((fx * c + fz * s).max(0.0));
            a = clamped;
        }
        thrust[i] = f;
        tilt[i] = a;
    }
    Allocation { command: ActuatorCommand { thrust, tilt }, saturated }
}

/// Semi-implicit Euler step of the Newton-Euler equations.
///
/// Drag acts on the air-relative velocity `v - wind` along the body axes.
pub fn step(
    state: &RigidState,
    cmd: &ActuatorCommand,
    wind: &Vector3<f64>,
    params: &BlimpParams,
    dt: f64,
) -> Result<RigidState, DynamicsError> {
    step_with_disturbance(state, cmd, wind, &Vector3::zeros(), params, dt)
}

/// [`step`] with an additional world-frame force (wall contact, tether pull).
pub fn step_with_disturbance(
    state: &RigidState,
    cmd: &ActuatorCommand,
    wind: &Vector3<f64>,
    disturbance: &Vector3<f64>,
    params: &BlimpParams,
    dt: f64,
) -> Result<RigidState, DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidTimestep(dt));
    }
    let rot = state.rotation();
    let thrust = thrust_wrench(cmd, params);
    let external = external_wrench(state, params);

    let air_body = rot.transpose() * (state.velocity - wind);
    let drag = rot * Vector3::from(params.drag_force).component_mul(&air_body);
    let accel = (rot * thrust.force + external.force + disturbance - drag) / params.mass;
    let velocity = state.velocity + accel * dt;
    let position = state.position + velocity * dt;

    let j = params.inertia_vector();
    let gyro = state.omega.cross(&j.component_mul(&state.omega));
    let rot_drag = Vector3::from(params.drag_torque).component_mul(&state.omega);
    let alpha = (thrust.torque + external.torque - rot_drag - gyro).component_div(&j);
    let omega = state.omega + alpha * dt;

    let rates = euler_rates(&state.euler, &omega);
    let raw = state.euler + rates * dt;
    let euler = Vector3::new(wrap_angle(raw.x), wrap_angle(raw.y), wrap_angle(raw.z));

    let next = RigidState { position, euler, velocity, omega };
    if !next.is_finite() {
        return Err(DynamicsError::NonFiniteState);
    }
    if next.pitch().abs() > MAX_PITCH {
        return Err(DynamicsError::PitchLimit(next.pitch()));
    }
    Ok(next)
}
