//! Calibrates the balloon color family from synthetic renders and shows how
//! the Mahalanobis test separates it from the arena colors.

use blimpswarm::perception::color::rgb_to_ab_fast;
use blimpswarm::perception::mahalanobis;
use blimpswarm::training::{calibrate_balloon_family, Calibration};
use blimpswarm::world::WorldConfig;

fn main() {
    let world = WorldConfig::default();
    let family = calibrate_balloon_family(&world, &Calibration::default()).expect("calibration");
    println!("mu = [{:.2}, {:.2}]", family.mu[0], family.mu[1]);
    println!("sigma = {:?}", family.sigma);
    println!("eigenvalues = {:?}", family.eigenvalues());
    let colors = [
        ("balloon", world.balloon.color),
        ("balloon, dim", world.balloon.color.map(|c| (c as f64 * 0.6) as u8)),
        ("floor", world.render.floor),
        ("wall", world.render.wall),
        ("blimp", world.render.blimp_color),
        ("hoop tape", world.render.hoop_color),
    ];
    for (name, rgb) in colors {
        let d = mahalanobis(rgb_to_ab_fast(rgb).map(f64::from), &family).unwrap();
        println!("{name:>13} {rgb:?}: d = {d:.2}");
    }
}
