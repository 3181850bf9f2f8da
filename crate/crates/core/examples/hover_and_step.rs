//! A neutrally buoyant blimp hovering untouched, then the height loop
//! tracking a 0.5 m step.

use blimpswarm::control::{Controller, Gains, ManualLimits, SensorFeedback};
use blimpswarm::dynamics::step;
use blimpswarm::{ActuatorCommand, BlimpParams, RigidState};
use nalgebra::Vector3;

fn main() {
    let p = BlimpParams::default();
    let dt = 0.005;
    let start = RigidState::at_rest(Vector3::new(5.0, 5.0, 2.0), 0.3);
    let mut s = start;
    for _ in 0..10_000 {
        s = step(&s, &ActuatorCommand::IDLE, &Vector3::zeros(), &p, dt).unwrap();
    }
    println!("hover for 50 s: drift {:e} m", (s.position - start.position).norm());

    let mut ctl = Controller::new(Gains::default(), ManualLimits::default(), &SensorFeedback::from_state(&s));
    ctl.cruise(2.5, 0.3, 0.0);
    for i in 0..=(40.0 / dt) as usize {
        if i % 400 == 0 {
            println!("t = {:>4.1} s  h = {:.4} m", i as f64 * dt, s.position.z);
        }
        let a = ctl.step(&SensorFeedback::from_state(&s), &p);
        s = step(&s, &a.command, &Vector3::zeros(), &p, dt).unwrap();
    }
}
