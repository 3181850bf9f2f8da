//! Classifies rasterized goal outlines by counting polygon corners, then
//! finds a retroreflective hoop by differencing IR-on and IR-off frames.

use blimpswarm::perception::goal::ir_mask;
use blimpswarm::perception::{detect_goal, GoalParams, Mask};
use blimpswarm::world::{Drawable, Renderer, WorldConfig};
use blimpswarm::RigidState;
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

fn raster(inside: impl Fn(f64, f64) -> bool) -> Mask {
    let mut m = Mask::new(320, 240);
    for y in 0..240 {
        for x in 0..320 {
            m.set(x, y, inside(x as f64 + 0.5, y as f64 + 0.5));
        }
    }
    m
}

fn main() {
    let params = GoalParams::default();
    let square = raster(|x, y| (130.0..190.0).contains(&x) && (90.0..150.0).contains(&y));
    let disk = raster(|x, y| (x - 100.0).hypot(y - 80.0) <= 30.0);
    let triangle = raster(|x, y| y <= 200.0 && (x - 160.0).abs() <= (y - 100.0) * 0.6);
    for (name, m) in [("square", square), ("disk", disk), ("triangle", triangle)] {
        let g = detect_goal(&m, &params);
        println!("{name:>8}: {:?} at {:?}, box {} px", g.shape, g.center, g.size);
    }

    let world = WorldConfig::default();
    let r = Renderer::new(&world.camera, &world.render);
    let pose = RigidState::at_rest(Vector3::new(4.0, 7.5, 3.0), 0.0);
    let c = r.camera.position(&pose) + Vector3::new(4.0, 0.0, 0.0);
    let points = (0..32)
        .map(|k| {
            let a = k as f64 / 32.0 * std::f64::consts::TAU;
            c + Vector3::new(0.0, 0.75 * a.cos(), 0.75 * a.sin())
        })
        .collect();
    let ring = Drawable::Ring { points, width: world.render.tape_width, color: world.render.hoop_color, retro: true };
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
    let (on, off) = r.render_ir_pair(&[ring], &pose, &mut rng);
    let mask = ir_mask(&on, &off, params.luminance).unwrap();
    let g = detect_goal(&mask, &params);
    println!("IR hoop 4 m ahead: {:?} at [{:.1}, {:.1}], {} lit pixels", g.shape, g.center[0], g.center[1], mask.count());
}
