use nalgebra::Vector3;

use super::message::{MessageError, ObstacleQueue};
use crate::cbf::ObstacleSet;

/// Points slightly beyond `max_range` after f32 rounding are still accepted.
const RANGE_SLACK: f64 = 1e-4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BufferDiagnostics {
    pub messages_ingested: u64,
    pub messages_dropped: u64,
    pub points_dropped: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IngestOutcome {
    Idle,
    Ingested { points: usize },
    Dropped(MessageError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Slot {
    point: Vector3<f64>,
    stamp: u64,
}

/// Circular buffer of body-frame points fed one message per control iteration.
///
/// New points overwrite the oldest slots. Points older than `max_age`
/// iterations are excluded from snapshots so that a scan that returns fewer
/// points than the capacity does not keep stale geometry alive.
#[derive(Debug, Clone)]
pub struct ObstacleBuffer {
    slots: Vec<Slot>,
    capacity: usize,
    write_head: usize,
    iteration: u64,
    max_age: u64,
    max_range: f64,
    diagnostics: BufferDiagnostics,
}

impl ObstacleBuffer {
    pub fn new(capacity: usize, max_range: f64, max_age: u64) -> Self {
        Self {
            slots: Vec::with_capacity(capacity),
            capacity,
            write_head: 0,
            iteration: 0,
            max_age,
            max_range,
            diagnostics: BufferDiagnostics::default(),
        }
    }

    /// Advances one iteration and consumes at most one queued message.
    pub fn ingest(&mut self, queue: &mut ObstacleQueue) -> IngestOutcome {
        self.iteration += 1;
        let Some(msg) = queue.pop() else {
            return IngestOutcome::Idle;
        };
        if let Err(e) = msg.validate() {
            self.diagnostics.messages_dropped += 1;
            return IngestOutcome::Dropped(e);
        }
        let mut written = 0;
        for p in msg.points_f64() {
            if p.norm() > self.max_range + RANGE_SLACK {
                self.diagnostics.points_dropped += 1;
                continue;
            }
            self.write(p);
            written += 1;
        }
        self.diagnostics.messages_ingested += 1;
        IngestOutcome::Ingested { points: written }
    }

    fn write(&mut self, point: Vector3<f64>) {
        let slot = Slot {
            point,
            stamp: self.iteration,
        };
        if self.slots.len() < self.capacity {
            self.slots.push(slot);
        } else {
            self.slots[self.write_head] = slot;
            self.write_head = (self.write_head + 1) % self.capacity;
        }
    }

    fn is_live(&self, s: &Slot) -> bool {
        self.iteration - s.stamp < self.max_age
    }

    /// Live points from oldest to newest.
    pub fn live_points(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        let (newer, older) = self.slots.split_at(self.write_head);
        older
            .iter()
            .chain(newer)
            .filter(|s| self.is_live(s))
            .map(|s| s.point)
    }

    pub fn snapshot_into(&self, out: &mut Vec<Vector3<f64>>) {
        out.clear();
        out.extend(self.live_points());
    }

    pub fn snapshot(&self) -> ObstacleSet {
        let mut set = ObstacleSet::new(self.capacity, self.max_range + RANGE_SLACK);
        for p in self.live_points() {
            set.try_push(p)
                .expect("buffer points satisfy the set invariants");
        }
        set
    }

    /// All stored slots, including expired ones, oldest first.
    pub fn stored_len(&self) -> usize {
        self.slots.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn diagnostics(&self) -> BufferDiagnostics {
        self.diagnostics
    }

    pub fn clear(&mut self) {
        self.slots.clear();
        self.write_head = 0;
        self.iteration = 0;
        self.diagnostics = BufferDiagnostics::default();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::message::ObstacleMessage;

    fn msg(seq: u32, n: usize, x: f32) -> ObstacleMessage {
        ObstacleMessage {
            sequence_id: seq,
            chunk_index: 0,
            chunk_count: 1,
            points: vec![[x, 0.0, 0.0]; n],
        }
    }

    #[test]
    fn empty_queue_leaves_points_untouched() {
        let mut b = ObstacleBuffer::new(100, 5.0, 1000);
        let mut q = ObstacleQueue::new(8);
        q.push(msg(0, 10, 1.0));
        b.ingest(&mut q);
        let before: Vec<_> = b.live_points().collect();
        assert_eq!(b.ingest(&mut q), IngestOutcome::Idle);
        assert_eq!(b.live_points().collect::<Vec<_>>(), before);
    }

    #[test]
    fn full_buffer_replaces_exactly_the_oldest_twenty() {
        let mut b = ObstacleBuffer::new(100, 5.0, 1000);
        let mut q = ObstacleQueue::new(8);
        for s in 0..5 {
            q.push(msg(s, 20, 1.0 + s as f32));
            b.ingest(&mut q);
        }
        q.push(msg(9, 20, 4.5));
        b.ingest(&mut q);
        let xs: Vec<f64> = b.live_points().map(|p| p.x).collect();
        assert_eq!(xs.len(), 100);
        assert!(xs.iter().all(|&x| x != 1.0), "oldest chunk must be gone");
        assert_eq!(xs.iter().filter(|&&x| x == 4.5).count(), 20);
        assert_eq!(xs.iter().filter(|&&x| x == 2.0).count(), 20);
        assert_eq!(xs[99], 4.5);
    }

    #[test]
    fn one_message_per_call() {
        let mut b = ObstacleBuffer::new(100, 5.0, 1000);
        let mut q = ObstacleQueue::new(8);
        q.push(msg(0, 3, 1.0));
        q.push(msg(0, 3, 2.0));
        b.ingest(&mut q);
        assert_eq!(q.len(), 1);
        assert_eq!(b.stored_len(), 3);
    }

    #[test]
    fn malformed_message_is_counted_and_dropped() {
        let mut b = ObstacleBuffer::new(100, 5.0, 1000);
        let mut q = ObstacleQueue::new(8);
        q.push(ObstacleMessage {
            sequence_id: 0,
            chunk_index: 3,
            chunk_count: 2,
            points: vec![[1.0; 3]],
        });
        assert!(matches!(
            b.ingest(&mut q),
            IngestOutcome::Dropped(MessageError::ChunkIndex { .. })
        ));
        assert_eq!(b.diagnostics().messages_dropped, 1);
        assert_eq!(b.stored_len(), 0);
    }

    #[test]
    fn points_expire_after_max_age() {
        let mut b = ObstacleBuffer::new(100, 5.0, 3);
        let mut q = ObstacleQueue::new(8);
        q.push(msg(0, 2, 1.0));
        b.ingest(&mut q);
        b.ingest(&mut q);
        b.ingest(&mut q);
        assert_eq!(b.live_points().count(), 2);
        b.ingest(&mut q);
        assert_eq!(b.live_points().count(), 0);
    }

    #[test]
    fn out_of_range_points_are_skipped() {
        let mut b = ObstacleBuffer::new(100, 5.0, 10);
        let mut q = ObstacleQueue::new(8);
        q.push(ObstacleMessage {
            sequence_id: 0,
            chunk_index: 0,
            chunk_count: 1,
            points: vec![[6.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
        });
        assert_eq!(b.ingest(&mut q), IngestOutcome::Ingested { points: 1 });
        assert_eq!(b.diagnostics().points_dropped, 1);
    }
}
