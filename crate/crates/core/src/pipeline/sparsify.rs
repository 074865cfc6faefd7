use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cbf::{ObstacleSet, DEFAULT_OBSTACLE_CAPACITY};

/// Angular-bin down-sampling of a body-frame cloud: the closest return per
/// bin survives, then at most `max_points` of those, closest first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sparsifier {
    pub azimuth_bins: usize,
    pub elevation_bins: usize,
    /// Angular extents covered by the bins (rad). Points outside fall in the edge bins.
    pub azimuth_half_angle: f64,
    pub elevation_half_angle: f64,
    pub max_points: usize,
    pub max_range: f64,
}

impl Default for Sparsifier {
    fn default() -> Self {
        Self {
            azimuth_bins: 32,
            elevation_bins: 12,
            azimuth_half_angle: 50f64.to_radians(),
            elevation_half_angle: 35f64.to_radians(),
            max_points: DEFAULT_OBSTACLE_CAPACITY,
            max_range: 5.0,
        }
    }
}

fn bin(angle: f64, half: f64, bins: usize) -> usize {
    let u = (angle + half) / (2.0 * half);
    ((u * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

impl Sparsifier {
    pub fn sparsify(&self, cloud: &[Vector3<f64>]) -> ObstacleSet {
        let (na, ne) = (self.azimuth_bins.max(1), self.elevation_bins.max(1));
        let mut best: Vec<Option<(f64, Vector3<f64>)>> = vec![None; na * ne];
        for p in cloud {
            let range = p.norm();
            if !range.is_finite() || range > self.max_range {
                continue;
            }
            let az = p.y.atan2(p.x);
            let el = p.z.atan2(p.xy().norm());
            let idx =
                bin(el, self.elevation_half_angle, ne) * na + bin(az, self.azimuth_half_angle, na);
            match best[idx] {
                Some((r, _)) if r <= range => {}
                _ => best[idx] = Some((range, *p)),
            }
        }
        // Stable sort keeps bin order among equal ranges.
        let mut candidates: Vec<(f64, Vector3<f64>)> = best.into_iter().flatten().collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
        let capacity = self.max_points.max(DEFAULT_OBSTACLE_CAPACITY);
        ObstacleSet::from_points(
            candidates.into_iter().take(self.max_points).map(|(_, p)| p),
            capacity,
            self.max_range,
        )
        .expect("filtered points satisfy the set invariants")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_minimum_range_per_bin() {
        let s = Sparsifier::default();
        let cloud = [
            Vector3::new(3.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(2.0, 0.0, 0.0),
        ];
        let out = s.sparsify(&cloud);
        assert_eq!(out.points(), &[Vector3::new(1.0, 0.0, 0.0)]);
    }

    #[test]
    fn hundred_closest_of_hundred_fifty_bins() {
        let s = Sparsifier {
            azimuth_bins: 150,
            elevation_bins: 1,
            ..Default::default()
        };
        let half = s.azimuth_half_angle;
        let cloud: Vec<_> = (0..150)
            .map(|i| {
                let az = -half + (i as f64 + 0.5) * 2.0 * half / 150.0;
                let r = 1.0 + 0.02 * ((i * 37) % 150) as f64;
                Vector3::new(r * az.cos(), r * az.sin(), 0.0)
            })
            .collect();
        let out = s.sparsify(&cloud);
        assert_eq!(out.len(), 100);
        let mut ranges: Vec<f64> = cloud.iter().map(|p| p.norm()).collect();
        ranges.sort_by(f64::total_cmp);
        let kept: Vec<f64> = out.points().iter().map(|p| p.norm()).collect();
        assert_eq!(kept, ranges[..100]);
    }

    #[test]
    fn empty_and_out_of_range() {
        let s = Sparsifier::default();
        assert!(s.sparsify(&[]).is_empty());
        assert!(s.sparsify(&[Vector3::new(6.0, 0.0, 0.0)]).is_empty());
    }
}
