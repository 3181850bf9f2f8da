//! Solves rotor thrust and tilt for a few body wrenches and checks them
//! against the forward rotor model.

use blimpswarm::dynamics::{allocate, thrust_wrench};
use blimpswarm::BlimpParams;

fn main() {
    let p = BlimpParams::default();
    println!("{:>7} {:>7} {:>7} | {:>14} {:>16} | sat", "f_x", "f_z", "tau_z", "thrust N", "tilt deg");
    for (f_x, f_z, tau_z) in [(0.1, 0.0, 0.0), (0.0, 0.1, 0.0), (0.08, 0.05, 0.004), (0.05, -0.05, -0.006), (1.0, 0.0, 0.0)] {
        let a = allocate(f_x, f_z, tau_z, &p);
        let [f1, f2] = a.command.thrust();
        let [a1, a2] = a.command.tilt();
        let w = thrust_wrench(&a.command, &p);
        println!(
            "{f_x:>7.3} {f_z:>7.3} {tau_z:>7.4} | {f1:>6.4} {f2:>6.4} {:>7.1} {:>7.1} | {}  -> recovered ({:.3}, {:.3}, {:.4})",
            a1.to_degrees(),
            a2.to_degrees(),
            a.saturated,
            w.force.x,
            w.force.z,
            w.torque.z
        );
    }
}
