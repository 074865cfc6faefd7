//! Sense, sparsify, chunk into wire messages, queue and ingest into the ring buffer.

use cbf_shield::pipeline::{chunk, ObstacleBuffer, ObstacleMessage, ObstacleQueue, Sparsifier};
use cbf_shield::sim::{Aabb, SensorModel, Shape, World};
use cbf_shield::VehicleState;
use nalgebra::Vector3;
use rand::SeedableRng;

fn main() {
    let world = World {
        obstacles: vec![Shape::Box {
            min: Vector3::new(2.0, -3.0, 0.0),
            max: Vector3::new(2.5, 3.0, 3.0),
        }
        .into()],
        bounds: Aabb {
            min: Vector3::new(-5.0, -5.0, 0.0),
            max: Vector3::new(5.0, 5.0, 3.0),
        },
    };
    let state = VehicleState::new(Vector3::new(0.0, 0.0, 1.0), Vector3::zeros(), 0.0);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let cloud = SensorModel::default().scan(&world, &state, 0.0, &mut rng);
    let set = Sparsifier::default().sparsify(&cloud);
    let messages = chunk(&set, 1);
    println!(
        "{} returns -> {} points -> {} messages",
        cloud.len(),
        set.len(),
        messages.len()
    );

    let bytes = messages[0].encode();
    let (decoded, used) = ObstacleMessage::decode(&bytes).unwrap();
    println!("message 0: {used} bytes, header {:02x?}", &bytes[..8]);
    assert_eq!(decoded, messages[0]);

    let mut queue = ObstacleQueue::new(16);
    queue.extend(messages);
    let mut buffer = ObstacleBuffer::new(100, 5.0, 12);
    let mut step = 0;
    while !queue.is_empty() {
        buffer.ingest(&mut queue);
        step += 1;
        println!("step {step}: {} live points", buffer.live_points().count());
    }
}
