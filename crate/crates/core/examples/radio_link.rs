//! Encodes station commands into frames, shows the CRC catching a bit flip,
//! and walks a parameter write through the simulated radio to its ack.

use blimpswarm::autonomy::Mode;
use blimpswarm::comms::{decode, encode, Message, Payload, StationEvent};
use blimpswarm::world::{Scenario, WorldSetup};
use blimpswarm::World;

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect::<Vec<_>>().join(" ")
}

fn main() {
    let msg = Message { robot_id: 2, seq: 7, payload: Payload::ParamSet { key: "ctl.k".into(), value: 0.9 } };
    let bytes = encode(&msg).unwrap();
    println!("param_set frame ({} bytes): {}", bytes.len(), hex(&bytes));
    assert_eq!(decode(&bytes).unwrap(), msg);
    let mut bad = bytes.clone();
    bad[13] ^= 0x04;
    println!("one bit flipped: {:?}", decode(&bad).unwrap_err());

    let dir = tempfile::tempdir().unwrap();
    let mut w = World::new(WorldSetup::new(3, 0, Scenario::Pickup, 1), Some(dir.path())).unwrap();
    w.station.set_param(2, "ctl.k", 0.9).unwrap();
    w.station.set_param(3, "no.such.key", 1.0).unwrap();
    w.station.set_mode(1, Mode::Manual);
    w.station.request_telemetry(1, Some("ctl.k")).unwrap();
    w.run_for(0.5).unwrap();
    for ev in w.station.take_events() {
        match ev {
            StationEvent::Ack { robot_id, key, value, status, .. } => println!("ack from {robot_id}: {key} = {value} {status:?}"),
            StationEvent::Telemetry { robot_id, telemetry, .. } => {
                println!("telemetry from {robot_id}: mode {:?}, h {:.2}, param {:?}", telemetry.mode, telemetry.h, telemetry.param)
            }
            StationEvent::ParamTimeout { robot_id, key, .. } => println!("timeout writing {key} to {robot_id}"),
        }
    }
    println!("robot_2.json: {}", std::fs::read_to_string(dir.path().join("robot_2.json")).unwrap().trim());
}
