//! Steps the behavior state machine through a scripted pickup and delivery.

use blimpswarm::autonomy::{AutonomyParams, AutonomyState, Mode, WorldEvent};
use blimpswarm::perception::{Detection, GoalDetection, Shape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let params = AutonomyParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s = AutonomyState::new(0.0);
    let small = Detection { center: [200.0, 100.0], size: 3, valid: true };
    let big = Detection { center: [165.0, 118.0], size: 40, valid: true };
    let hoop = GoalDetection { center: [150.0, 110.0], size: 9000.0, shape: Shape::Circle, valid: true };
    let script: Vec<(&str, Detection, GoalDetection, Option<WorldEvent>)> = vec![
        ("nothing seen", Detection::NONE, GoalDetection::NONE, None),
        ("balloon far", small, GoalDetection::NONE, None),
        ("balloon far", small, GoalDetection::NONE, None),
        ("balloon far", small, GoalDetection::NONE, None),
        ("balloon close", big, GoalDetection::NONE, None),
        ("net closes", Detection::NONE, GoalDetection::NONE, Some(WorldEvent::Captured)),
        ("hoop seen", Detection::NONE, hoop, None),
        ("hoop seen", Detection::NONE, hoop, None),
        ("hoop seen", Detection::NONE, hoop, None),
        ("hoop close", Detection::NONE, hoop, None),
        ("through the hoop", Detection::NONE, GoalDetection::NONE, Some(WorldEvent::Delivered)),
    ];
    let mut now = 0.0;
    for (what, b, g, ev) in script {
        now += 0.1;
        match ev {
            Some(ev) => s.event(ev, now),
            None => s.transition(&b, &g, now, None, &params),
        }
        let seen = s.sighting(&b, &g);
        let cmd = s.behavior(&seen, now, &params, &mut rng);
        println!("{now:>4.1} s {what:<17} -> {:?}, carrying {}, {:?}", s.mode, s.carrying, cmd);
    }
    s.transition(&Detection::NONE, &GoalDetection::NONE, now, Some(Mode::Manual), &params);
    println!("operator override -> {:?}", s.mode);
}
