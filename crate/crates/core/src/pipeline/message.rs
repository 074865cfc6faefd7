//! Chunked obstacle messages and their little-endian wire layout.
//!
//! ```text
//! u32 sequence_id | u8 chunk_index | u8 chunk_count | u8 point_count | u8 reserved
//! point_count × (f32 x, f32 y, f32 z)
//! ```

use std::collections::VecDeque;

use nalgebra::Vector3;

use crate::cbf::ObstacleSet;

pub const MAX_POINTS_PER_MESSAGE: usize = 20;
pub const HEADER_LEN: usize = 8;
const POINT_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleMessage {
    pub sequence_id: u32,
    pub chunk_index: u8,
    pub chunk_count: u8,
    pub points: Vec<[f32; 3]>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MessageError {
    #[error("message holds {0} points, expected 1..=20")]
    PointCount(usize),
    #[error("chunk index {index} is not below chunk count {count}")]
    ChunkIndex { index: u8, count: u8 },
    #[error("non-finite point coordinate")]
    NonFinite,
    #[error("truncated message: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
}

impl ObstacleMessage {
    pub fn validate(&self) -> Result<(), MessageError> {
        if self.points.is_empty() || self.points.len() > MAX_POINTS_PER_MESSAGE {
            return Err(MessageError::PointCount(self.points.len()));
        }
        if self.chunk_index >= self.chunk_count {
            return Err(MessageError::ChunkIndex {
                index: self.chunk_index,
                count: self.chunk_count,
            });
        }
        if !self.points.iter().flatten().all(|c| c.is_finite()) {
            return Err(MessageError::NonFinite);
        }
        Ok(())
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + POINT_LEN * self.points.len()
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.sequence_id.to_le_bytes());
        out.push(self.chunk_index);
        out.push(self.chunk_count);
        out.push(self.points.len() as u8);
        out.push(0);
        for p in &self.points {
            for c in p {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out);
        out
    }

    /// Decodes one message from the front of `bytes`, returning it and the
    /// number of bytes consumed. Content is not validated here.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize), MessageError> {
        if bytes.len() < HEADER_LEN {
            return Err(MessageError::Truncated {
                need: HEADER_LEN,
                have: bytes.len(),
            });
        }
        let sequence_id = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes"));
        let (chunk_index, chunk_count, count) = (bytes[4], bytes[5], bytes[6] as usize);
        let need = HEADER_LEN + POINT_LEN * count;
        if bytes.len() < need {
            return Err(MessageError::Truncated {
                need,
                have: bytes.len(),
            });
        }
        let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let points = (0..count)
            .map(|i| {
                let o = HEADER_LEN + POINT_LEN * i;
                [f(o), f(o + 4), f(o + 8)]
            })
            .collect();
        Ok((
            Self {
                sequence_id,
                chunk_index,
                chunk_count,
                points,
            },
            need,
        ))
    }

    pub fn points_f64(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        self.points
            .iter()
            .map(|p| Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64))
    }
}

/// Splits a set into ⌈n/20⌉ messages sharing `sequence_id`.
pub fn chunk(set: &ObstacleSet, sequence_id: u32) -> Vec<ObstacleMessage> {
    let pieces = set.points().chunks(MAX_POINTS_PER_MESSAGE);
    let count = pieces.len();
    pieces
        .enumerate()
        .map(|(i, pts)| ObstacleMessage {
            sequence_id,
            chunk_index: i as u8,
            chunk_count: count as u8,
            points: pts
                .iter()
                .map(|p| [p.x as f32, p.y as f32, p.z as f32])
                .collect(),
        })
        .collect()
}

/// Bounded FIFO between point-cloud producers and the control loop. Pushing
/// into a full queue drops the oldest message.
#[derive(Debug, Clone)]
pub struct ObstacleQueue {
    messages: VecDeque<ObstacleMessage>,
    capacity: usize,
    dropped: u64,
}

impl ObstacleQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            messages: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            dropped: 0,
        }
    }

    pub fn push(&mut self, msg: ObstacleMessage) {
        if self.messages.len() == self.capacity {
            self.messages.pop_front();
            self.dropped += 1;
        }
        self.messages.push_back(msg);
    }

    pub fn extend(&mut self, msgs: impl IntoIterator<Item = ObstacleMessage>) {
        for m in msgs {
            self.push(m);
        }
    }

    pub fn pop(&mut self) -> Option<ObstacleMessage> {
        self.messages.pop_front()
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn clear(&mut self) {
        self.messages.clear();
    }
}
