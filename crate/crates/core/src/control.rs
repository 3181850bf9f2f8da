//! Height/yaw flight controller with visual-servoing setpoints.
//!
//! The outer loop runs at the perception rate: a pixel offset between the
//! image center and a target becomes a desired change in height and heading,
//! latched as absolute setpoints. The inner PD loop runs every physics tick
//! against those setpoints and feeds the allocator.

use crate::dynamics::{self, allocate, wrap_angle, Allocation, BlimpParams, RigidState};
use nalgebra::Vector3;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

/// Image center of the 320x240 camera.
pub const IMAGE_CENTER: [f64; 2] = [160.0, 120.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Gains {
    /// Height proportional gain, 1/s^2.
    pub k: f64,
    /// Height derivative gain, 1/s.
    pub k_d: f64,
    /// Yaw proportional gain, 1/s^2.
    pub k_r: f64,
    /// Yaw derivative gain, 1/s.
    pub k_rd: f64,
    /// Pixel-to-setpoint scale: `[rad/px, m/px]`.
    pub k_px: [f64; 2],
}

impl Default for Gains {
    fn default() -> Self {
        Self { k: 0.8, k_d: 1.2, k_r: 2.0, k_rd: 2.2, k_px: [0.004, 0.005] }
    }
}

impl Gains {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.k, self.k_d, self.k_r, self.k_rd];
        if all.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err("PD gains must be finite and non-negative".into());
        }
        if self.k_px.iter().any(|g| !g.is_finite() || *g <= 0.0) {
            return Err("pixel gains must be positive".into());
        }
        Ok(())
    }
}

/// Scale factors from a normalized manual command to accelerations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ManualLimits {
    /// Forward feedforward at `forward = 1`.
    pub forward: f64,
    /// Yaw acceleration at `yaw_rate = 1`, rad/s^2.
    pub yaw: f64,
    /// Vertical acceleration at `climb = 1`, m/s^2.
    pub climb: f64,
}

impl Default for ManualLimits {
    fn default() -> Self {
        Self { forward: 0.15, yaw: 1.0, climb: 0.4 }
    }
}

/// Onboard sensor readings.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensorFeedback {
    pub h: f64,
    pub h_dot: f64,
    pub psi: f64,
    pub psi_dot: f64,
    pub phi: f64,
    pub theta: f64,
    /// Gyro, body frame.
    pub omega: Vector3<f64>,
}

impl SensorFeedback {
    /// Perfect sensing of a rigid state.
    pub fn from_state(s: &RigidState) -> Self {
        let rates = dynamics::euler_rates(&s.euler, &s.omega);
        Self {
            h: s.position.z,
            h_dot: s.velocity.z,
            psi: s.yaw(),
            psi_dot: rates.z,
            phi: s.roll(),
            theta: s.pitch(),
            omega: s.omega,
        }
    }

    fn attitude(&self) -> RigidState {
        RigidState {
            position: Vector3::new(0.0, 0.0, self.h),
            euler: Vector3::new(self.phi, self.theta, self.psi),
            velocity: Vector3::new(0.0, 0.0, self.h_dot),
            omega: self.omega,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Balloon,
    Goal,
}

/// A detected target in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoTarget {
    /// Pixel center `c_d`.
    pub center: [f64; 2],
    pub kind: TargetKind,
    /// Cluster size (cells) or blob size (px).
    pub size: f64,
}

/// Normalized operator input.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
pub struct ManualCommand {
    /// `[0, 1]`
    pub forward: f64,
    /// `[-1, 1]`, positive turns left.
    pub yaw_rate: f64,
    /// `[-1, 1]`, positive climbs.
    pub climb: f64,
}

impl ManualCommand {
    pub fn clamped(self) -> Self {
        let c = |v: f64, lo: f64| if v.is_finite() { v.clamp(lo, 1.0) } else { 0.0 };
        Self { forward: c(self.forward, 0.0), yaw_rate: c(self.yaw_rate, -1.0), climb: c(self.climb, -1.0) }
    }

    pub fn is_zero(&self) -> bool {
        self.forward == 0.0 && self.yaw_rate == 0.0 && self.climb == 0.0
    }
}

/// Setpoint changes `(e_psi, e_h)` from the pixel offset of a target.
///
/// A target left of center gives positive `e_psi`; a target above center
/// gives positive `e_h`.
pub fn servo_error(c_f: [f64; 2], target: &ServoTarget, gains: &Gains) -> (f64, f64) {
    let du = c_f[0] - target.center[0];
    let dv = c_f[1] - target.center[1];
    (gains.k_px[0] * du, gains.k_px[1] * dv)
}

/// Shortest signed angle from `psi` to `psi_d`.
pub fn heading_error(psi_d: f64, psi: f64) -> f64 {
    wrap_angle(psi_d - psi)
}

/// PD law: returns `(rdd_z, omegad_z)`.
pub fn pd_accels(e_h: f64, e_h_dot: f64, e_psi: f64, e_psi_dot: f64, gains: &Gains) -> (f64, f64) {
    (gains.k * e_h + gains.k_d * e_h_dot, gains.k_r * e_psi + gains.k_rd * e_psi_dot)
}

/// Desired body force and torque from desired accelerations plus the forward
/// charge term.
pub fn compose_wrench(
    rdd_d: &Vector3<f64>,
    omegad_d: &Vector3<f64>,
    rdd_x: f64,
    state: &RigidState,
    params: &BlimpParams,
) -> (Vector3<f64>, Vector3<f64>) {
    let rot = state.rotation();
    let ext = dynamics::external_wrench(state, params);
    let f_d = rot.transpose() * (params.mass * rdd_d - ext.force) + Vector3::new(rdd_x, 0.0, 0.0);
    let j = params.inertia_vector();
    let tau_d = j.component_mul(omegad_d) + state.omega.cross(&j.component_mul(&state.omega)) - ext.torque;
    (f_d, tau_d)
}

/// Forward feedforward while the target is big enough to charge at.
pub fn charge_trigger(n: f64, threshold: f64, magnitude: f64) -> f64 {
    if n >= threshold {
        magnitude
    } else {
        0.0
    }
}

/// Evaluates the PD loop for fixed setpoints and allocates.
fn track(
    fb: &SensorFeedback,
    h_d: f64,
    psi_d: f64,
    ff: Vector3<f64>,
    gains: &Gains,
    params: &BlimpParams,
) -> Allocation {
    let (rdd_z, wdd_z) = pd_accels(h_d - fb.h, -fb.h_dot, heading_error(psi_d, fb.psi), -fb.psi_dot, gains);
    let state = fb.attitude();
    let (f_d, tau_d) = compose_wrench(
        &Vector3::new(0.0, 0.0, rdd_z + ff.z),
        &Vector3::new(0.0, 0.0, wdd_z + ff.y),
        ff.x,
        &state,
        params,
    );
    allocate(f_d.x, f_d.z, tau_d.z, params)
}

/// Stateless single evaluation: setpoints are taken relative to the current
/// measurement, shifted by the target's servo error when present.
pub fn controller_step(
    fb: &SensorFeedback,
    target: Option<&ServoTarget>,
    manual: Option<&ManualCommand>,
    gains: &Gains,
    limits: &ManualLimits,
    params: &BlimpParams,
) -> Allocation {
    let (e_psi, e_h) = target.map_or((0.0, 0.0), |t| servo_error(IMAGE_CENTER, t, gains));
    let ff = manual.map_or(Vector3::zeros(), |m| manual_feedforward(&m.clamped(), limits));
    track(fb, fb.h + e_h, fb.psi + e_psi, ff, gains, params)
}

/// `(forward, yaw, climb)` feedforward packed as `[x, yaw, z]`.
fn manual_feedforward(m: &ManualCommand, limits: &ManualLimits) -> Vector3<f64> {
    Vector3::new(m.forward * limits.forward, m.yaw_rate * limits.yaw, m.climb * limits.climb)
}

/// Per-blimp controller with latched height and heading setpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub gains: Gains,
    pub limits: ManualLimits,
    h_d: f64,
    psi_d: f64,
    forward: f64,
    manual: Option<ManualCommand>,
}

impl Controller {
    pub fn new(gains: Gains, limits: ManualLimits, fb: &SensorFeedback) -> Self {
        Self { gains, limits, h_d: fb.h, psi_d: fb.psi, forward: 0.0, manual: None }
    }

    pub fn setpoints(&self) -> (f64, f64) {
        (self.h_d, self.psi_d)
    }

    /// Latches `h_d = h + e_h`, `psi_d = psi + e_psi` from a target.
    pub fn servo_to(&mut self, fb: &SensorFeedback, target: &ServoTarget, forward: f64) {
        let (e_psi, e_h) = servo_error(IMAGE_CENTER, target, &self.gains);
        self.h_d = fb.h + e_h;
        self.psi_d = wrap_angle(fb.psi + e_psi);
        self.forward = forward;
        self.manual = None;
    }

    /// Absolute setpoints with a forward feedforward.
    pub fn cruise(&mut self, height: f64, heading: f64, forward: f64) {
        self.h_d = height;
        self.psi_d = wrap_angle(heading);
        self.forward = forward;
        self.manual = None;
    }

    /// Keep the current setpoints, stop pushing forward.
    pub fn hold(&mut self) {
        self.forward = 0.0;
        self.manual = None;
    }

    /// Operator steering. Axes with nonzero input track the measurement so the
    /// derivative term damps the motion; released axes hold where they stopped.
    pub fn set_manual(&mut self, cmd: ManualCommand) {
        self.forward = 0.0;
        self.manual = Some(cmd.clamped());
    }

    pub fn step(&mut self, fb: &SensorFeedback, params: &BlimpParams) -> Allocation {
        let mut ff = Vector3::new(self.forward, 0.0, 0.0);
        if let Some(m) = self.manual {
            ff = manual_feedforward(&m, &self.limits);
            if m.yaw_rate != 0.0 {
                self.psi_d = fb.psi;
            }
            if m.climb != 0.0 {
                self.h_d = fb.h;
            }
        }
        track(fb, self.h_d, self.psi_d, ff, &self.gains, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::step;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn target_at(u: f64, v: f64) -> ServoTarget {
        ServoTarget { center: [u, v], kind: TargetKind::Balloon, size: 4.0 }
    }

    #[test]
    fn centered_target_has_no_error() {
        assert_eq!(servo_error(IMAGE_CENTER, &target_at(160.0, 120.0), &Gains::default()), (0.0, 0.0));
    }

    #[test]
    fn servo_error_hand_product() {
        let g = Gains { k_px: [0.01, 0.002], ..Gains::default() };
        // c_f - c_d = (20, -15)
        let (e_psi, e_h) = servo_error(IMAGE_CENTER, &target_at(140.0, 135.0), &g);
        assert_abs_diff_eq!(e_psi, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(e_h, -0.03, epsilon = 1e-15);
    }

    #[test]
    fn servo_error_is_linear_in_k() {
        let g = Gains::default();
        let g2 = Gains { k_px: [2.0 * g.k_px[0], 2.0 * g.k_px[1]], ..g.clone() };
        let t = target_at(100.0, 30.0);
        let (a, b) = servo_error(IMAGE_CENTER, &t, &g);
        let (a2, b2) = servo_error(IMAGE_CENTER, &t, &g2);
        assert_eq!((2.0 * a, 2.0 * b), (a2, b2));
    }

    #[test]
    fn pd_hand_values() {
        assert_eq!(pd_accels(0.0, 0.0, 0.0, 0.0, &Gains::default()), (0.0, 0.0));
        let g = Gains { k: 1.0, k_d: 0.5, ..Gains::default() };
        let (z, _) = pd_accels(0.2, -0.1, 0.0, 0.0, &g);
        assert_abs_diff_eq!(z, 0.15, epsilon = 1e-15);
    }

    #[test]
    fn heading_error_takes_short_way() {
        let e = heading_error(170f64.to_radians(), (-170f64).to_radians());
        assert_abs_diff_eq!(e, (-20f64).to_radians(), epsilon = 1e-12);
    }

    #[test]
    fn compose_at_trim() {
        let p = BlimpParams::default();
        let s = RigidState::default();
        let (f, t) = compose_wrench(&Vector3::zeros(), &Vector3::zeros(), 0.0, &s, &p);
        assert_eq!(f, Vector3::zeros());
        assert_eq!(t, Vector3::zeros());

        let (f, _) = compose_wrench(&Vector3::new(0.0, 0.0, 0.1), &Vector3::zeros(), 0.0, &s, &p);
        assert_abs_diff_eq!(f, Vector3::new(0.0, 0.0, 0.013), epsilon = 1e-15);

        let (f, _) = compose_wrench(&Vector3::zeros(), &Vector3::zeros(), 0.3, &s, &p);
        assert_abs_diff_eq!(f, Vector3::new(0.3, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn compose_compensates_negative_buoyancy() {
        let p = BlimpParams { buoyancy: Some(0.130 * 9.81 - 0.05), ..BlimpParams::default() };
        let (f, _) = compose_wrench(&Vector3::zeros(), &Vector3::zeros(), 0.0, &RigidState::default(), &p);
        assert_abs_diff_eq!(f.z, 0.05, epsilon = 1e-12);
    }

    #[test]
    fn charge_threshold_is_inclusive() {
        assert_eq!(charge_trigger(5.0, 6.0, 0.25), 0.0);
        assert_eq!(charge_trigger(6.0, 6.0, 0.25), 0.25);
    }

    #[test]
    fn hold_at_trim_is_idle() {
        let fb = SensorFeedback::from_state(&RigidState::at_rest(Vector3::new(1.0, 1.0, 2.0), 0.5));
        let a = controller_step(&fb, None, None, &Gains::default(), &ManualLimits::default(), &BlimpParams::default());
        assert_eq!(a.command.thrust(), [0.0, 0.0]);
    }

    #[test]
    fn target_above_left_climbs_and_turns() {
        let fb = SensorFeedback::from_state(&RigidState::at_rest(Vector3::new(0.0, 0.0, 2.0), 0.0));
        let p = BlimpParams::default();
        let a = controller_step(&fb, Some(&target_at(100.0, 60.0)), None, &Gains::default(), &ManualLimits::default(), &p);
        let [f1, f2] = a.command.thrust();
        let [a1, a2] = a.command.tilt();
        assert!(a1 > 0.0 && a2 > 0.0, "tilts {a1} {a2}");
        assert!(f1 != f2);
        // turning left needs the right rotor (2) to push harder forward
        let w = dynamics::thrust_wrench(&a.command, &p);
        assert!(w.torque.z > 0.0);
    }

    #[test]
    fn manual_forward_is_symmetric() {
        let fb = SensorFeedback::from_state(&RigidState::at_rest(Vector3::new(0.0, 0.0, 2.0), 0.0));
        let m = ManualCommand { forward: 1.0, yaw_rate: 0.0, climb: 0.0 };
        let a = controller_step(&fb, None, Some(&m), &Gains::default(), &ManualLimits::default(), &BlimpParams::default());
        let [f1, f2] = a.command.thrust();
        assert!(f1 > 0.0);
        assert_eq!(f1, f2);
        assert_eq!(a.command.tilt(), [0.0, 0.0]);
    }

    #[test]
    fn centered_target_equals_hold() {
        let mut s = RigidState::at_rest(Vector3::new(0.0, 0.0, 2.0), 0.3);
        s.euler.x = 0.05;
        s.euler.y = -0.04;
        let fb = SensorFeedback::from_state(&s);
        let (g, l, p) = (Gains::default(), ManualLimits::default(), BlimpParams::default());
        let hold = controller_step(&fb, None, None, &g, &l, &p);
        let centered = controller_step(&fb, Some(&target_at(160.0, 120.0)), None, &g, &l, &p);
        assert_eq!(hold, centered);
    }

    fn settle_time(h0: f64, step_size: f64, seconds: f64) -> (Option<f64>, f64) {
        let p = BlimpParams::default();
        let dt = 0.005;
        let mut s = RigidState::at_rest(Vector3::new(0.0, 0.0, h0), 0.0);
        let mut ctl = Controller::new(Gains::default(), ManualLimits::default(), &SensorFeedback::from_state(&s));
        ctl.cruise(h0 + step_size, 0.0, 0.0);
        let mut last_out = 0.0;
        let mut max_dev: f64 = 0.0;
        let band = 0.02 * step_size.abs();
        for i in 0..(seconds / dt) as usize {
            let a = ctl.step(&SensorFeedback::from_state(&s), &p);
            s = step(&s, &a.command, &Vector3::zeros(), &p, dt).unwrap();
            let err = (s.position.z - (h0 + step_size)).abs();
            max_dev = max_dev.max(err);
            if err > band {
                last_out = (i + 1) as f64 * dt;
            }
        }
        ((last_out < seconds).then_some(last_out), max_dev)
    }

    #[test]
    fn height_step_settles() {
        let (t, dev) = settle_time(2.0, 0.5, 120.0);
        let t = t.expect("never settled");
        assert!(t < 30.0, "settling {t}");
        assert!(dev <= 0.5 + 1e-9);
    }

    #[test]
    fn stateful_manual_climb_then_hold() {
        let p = BlimpParams::default();
        let mut s = RigidState::at_rest(Vector3::new(0.0, 0.0, 2.0), 0.0);
        let mut ctl = Controller::new(Gains::default(), ManualLimits::default(), &SensorFeedback::from_state(&s));
        ctl.set_manual(ManualCommand { forward: 0.0, yaw_rate: 0.0, climb: 1.0 });
        for _ in 0..400 {
            let a = ctl.step(&SensorFeedback::from_state(&s), &p);
            s = step(&s, &a.command, &Vector3::zeros(), &p, 0.005).unwrap();
        }
        assert!(s.position.z > 2.1);
        ctl.set_manual(ManualCommand::default());
        for _ in 0..4000 {
            let a = ctl.step(&SensorFeedback::from_state(&s), &p);
            s = step(&s, &a.command, &Vector3::zeros(), &p, 0.005).unwrap();
        }
        let (h_d, _) = ctl.setpoints();
        assert_abs_diff_eq!(s.position.z, h_d, epsilon = 0.02);
        assert!(s.velocity.norm() < 0.01);
    }

    #[test]
    fn yaw_servo_turns_toward_target() {
        let p = BlimpParams::default();
        let mut s = RigidState::at_rest(Vector3::new(0.0, 0.0, 2.0), 0.0);
        let mut ctl = Controller::new(Gains::default(), ManualLimits::default(), &SensorFeedback::from_state(&s));
        ctl.cruise(2.0, 1.0, 0.0);
        for _ in 0..(20.0 / 0.005) as usize {
            let a = ctl.step(&SensorFeedback::from_state(&s), &p);
            s = step(&s, &a.command, &Vector3::zeros(), &p, 0.005).unwrap();
        }
        assert_abs_diff_eq!(s.yaw(), 1.0, epsilon = 0.05);
    }

    proptest! {
        #[test]
        fn heading_error_is_bounded(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            prop_assert!(heading_error(a, b).abs() <= PI);
        }

        #[test]
        fn scaling_pixel_gain_keeps_differential_sign(
            // c below 4.9 keeps |e_psi| = c * 0.004 * 160 under half a turn
            u in 0.0f64..320.0, v in 0.0f64..240.0, c in 0.1f64..4.9,
            psi in -3.0f64..3.0, h in 0.5f64..6.0,
        ) {
            let fb = SensorFeedback::from_state(&RigidState::at_rest(Vector3::new(0.0, 0.0, h), psi));
            let g = Gains::default();
            let gc = Gains { k_px: [c * g.k_px[0], c * g.k_px[1]], ..g.clone() };
            let t = target_at(u, v);
            let (e1, h1) = servo_error(IMAGE_CENTER, &t, &g);
            let (e2, h2) = servo_error(IMAGE_CENTER, &t, &gc);
            prop_assert!((e2 - c * e1).abs() <= 1e-12 && (h2 - c * h1).abs() <= 1e-12);
            let p = BlimpParams::default();
            let l = ManualLimits::default();
            // the achieved yaw torque is the thrust differential across the arm
            let yaw_torque = |gains: &Gains| {
                let a = controller_step(&fb, Some(&t), None, gains, &l, &p);
                dynamics::thrust_wrench(&a.command, &p).torque.z
            };
            let (a, b) = (yaw_torque(&g), yaw_torque(&gc));
            prop_assume!(a.abs() > 1e-12);
            prop_assert_eq!(a.signum(), b.signum());
        }
    }
}
