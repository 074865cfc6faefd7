//! Static and time-windowed obstacle primitives with ray casting and signed distance.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        let center = (self.min + self.max) * 0.5;
        let half = (self.max - self.min) * 0.5;
        let q = (p - center).abs() - half;
        let outside = q.map(|x| x.max(0.0)).norm();
        outside + q.max().min(0.0)
    }

    /// Entry distance along a unit ray, if the ray starts outside and hits.
    fn ray_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for i in 0..3 {
            if dir[i] == 0.0 {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[i];
            let (mut t0, mut t1) = (
                (self.min[i] - origin[i]) * inv,
                (self.max[i] - origin[i]) * inv,
            );
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_near = t_near.max(t0);
            t_far = t_far.min(t1);
        }
        (t_near <= t_far && t_near > 0.0).then_some(t_near)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    Box {
        min: Vector3<f64>,
        max: Vector3<f64>,
    },
    /// Vertical panel standing on the segment `start → end` (xy), thin box of
    /// the given thickness spanning `z_min..z_min + height`.
    Panel {
        start: Vector2<f64>,
        end: Vector2<f64>,
        z_min: f64,
        height: f64,
        #[serde(default = "default_panel_thickness")]
        thickness: f64,
    },
}

fn default_panel_thickness() -> f64 {
    0.05
}

/// A shape that is present during `[active_from, active_until)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_from: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_until: Option<f64>,
}

impl From<Shape> for Obstacle {
    fn from(shape: Shape) -> Self {
        Self {
            shape,
            active_from: None,
            active_until: None,
        }
    }
}

impl Obstacle {
    pub fn is_active(&self, t: f64) -> bool {
        self.active_from.map_or(true, |a| t >= a) && self.active_until.map_or(true, |b| t < b)
    }
}

/// Panel expressed as an axis-aligned box in its own frame: x along the
/// segment, y across it, z up.
struct PanelFrame {
    origin: Vector2<f64>,
    cos: f64,
    sin: f64,
    local: Aabb,
}

impl PanelFrame {
    fn new(
        start: &Vector2<f64>,
        end: &Vector2<f64>,
        z_min: f64,
        height: f64,
        thickness: f64,
    ) -> Self {
        let d = end - start;
        let len = d.norm();
        let (cos, sin) = if len > 0.0 {
            (d.x / len, d.y / len)
        } else {
            (1.0, 0.0)
        };
        let local = Aabb {
            min: Vector3::new(0.0, -thickness / 2.0, z_min),
            max: Vector3::new(len, thickness / 2.0, z_min + height),
        };
        Self {
            origin: *start,
            cos,
            sin,
            local,
        }
    }

    fn point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let (dx, dy) = (p.x - self.origin.x, p.y - self.origin.y);
        Vector3::new(
            self.cos * dx + self.sin * dy,
            -self.sin * dx + self.cos * dy,
            p.z,
        )
    }

    fn direction(&self, d: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            self.cos * d.x + self.sin * d.y,
            -self.sin * d.x + self.cos * d.y,
            d.z,
        )
    }
}

impl Shape {
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        match self {
            Shape::Sphere { center, radius } => (p - center).norm() - radius,
            Shape::Box { min, max } => Aabb {
                min: *min,
                max: *max,
            }
            .signed_distance(p),
            Shape::Panel {
                start,
                end,
                z_min,
                height,
                thickness,
            } => {
                let f = PanelFrame::new(start, end, *z_min, *height, *thickness);
                f.local.signed_distance(&f.point(p))
            }
        }
    }

    pub fn ray_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match self {
            Shape::Sphere { center, radius } => {
                let oc = origin - center;
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if c <= 0.0 || disc < 0.0 || b >= 0.0 {
                    return None;
                }
                // Near root -b - √disc, in the cancellation-free form.
                Some(c / (-b + disc.sqrt()))
            }
            Shape::Box { min, max } => Aabb {
                min: *min,
                max: *max,
            }
            .ray_hit(origin, dir),
            Shape::Panel {
                start,
                end,
                z_min,
                height,
                thickness,
            } => {
                let f = PanelFrame::new(start, end, *z_min, *height, *thickness);
                f.local.ray_hit(&f.point(origin), &f.direction(dir))
            }
        }
    }

    fn validate(&self, idx: usize, out: &mut Vec<String>) {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Shape::Sphere { center, radius } => {
                if !finite(center.as_slice()) || !(radius.is_finite() && *radius > 0.0) {
                    out.push(format!(
                        "world.obstacles[{idx}]: sphere needs a finite center and radius > 0"
                    ));
                }
            }
            Shape::Box { min, max } => {
                if !finite(min.as_slice())
                    || !finite(max.as_slice())
                    || (0..3).any(|i| min[i] >= max[i])
                {
                    out.push(format!(
                        "world.obstacles[{idx}]: box needs finite min < max on every axis"
                    ));
                }
            }
            Shape::Panel {
                start,
                end,
                z_min,
                height,
                thickness,
            } => {
                if !finite(start.as_slice())
                    || !finite(end.as_slice())
                    || (end - start).norm() <= 0.0
                    || !z_min.is_finite()
                    || !(*height > 0.0 && *thickness > 0.0)
                {
                    out.push(format!(
                        "world.obstacles[{idx}]: panel needs distinct finite endpoints, height > 0 and thickness > 0"
                    ));
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct World {
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    pub bounds: Aabb,
}

impl World {
    pub fn empty(bounds: Aabb) -> Self {
        Self {
            obstacles: Vec::new(),
            bounds,
        }
    }

    pub fn active(&self, t: f64) -> impl Iterator<Item = &Shape> + '_ {
        self.obstacles
            .iter()
            .filter(move |o| o.is_active(t))
            .map(|o| &o.shape)
    }

    /// Distance from `p` to the nearest active surface, negative inside.
    /// `+∞` when nothing is present.
    pub fn signed_distance(&self, p: &Vector3<f64>, t: f64) -> f64 {
        self.active(t)
            .map(|s| s.signed_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Nearest hit along a unit ray within `max_range`.
    pub fn ray_cast(
        &self,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        max_range: f64,
        t: f64,
    ) -> Option<f64> {
        self.active(t)
            .filter_map(|s| s.ray_hit(origin, dir))
            .filter(|&r| r <= max_range)
            .min_by(f64::total_cmp)
    }

    pub fn validate(&self, out: &mut Vec<String>) {
        for (i, o) in self.obstacles.iter().enumerate() {
            o.shape.validate(i, out);
            if let (Some(a), Some(b)) = (o.active_from, o.active_until) {
                if !(a < b) {
                    out.push(format!(
                        "world.obstacles[{i}]: active_from must precede active_until"
                    ));
                }
            }
        }
        if (0..3).any(|i| !(self.bounds.min[i] < self.bounds.max[i])) {
            out.push("world.bounds: min must be below max on every axis".into());
        }
    }
}
