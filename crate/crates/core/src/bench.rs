//! Wall-clock cost of one filter kernel (composite CBF plus closed-form solve)
//! as a function of the obstacle count.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cbf::composite_cbf;
use crate::params::CbfParams;
use crate::qp::solve_analytic;

pub const DEFAULT_COUNTS: [usize; 4] = [25, 50, 100, 200];
const SCENES: usize = 16;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub counts: Vec<usize>,
    pub repetitions: usize,
    pub warmup: usize,
    /// Kernel calls per timed sample.
    pub batch: usize,
    pub seed: u64,
    pub params: CbfParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            counts: DEFAULT_COUNTS.to_vec(),
            repetitions: 2000,
            warmup: 200,
            batch: 8,
            seed: 0,
            params: CbfParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub repetitions: usize,
    pub mean_ns: f64,
    pub median_ns: f64,
    pub p99_ns: f64,
    pub min_ns: f64,
}

/// Least-squares line `t = intercept + slope·n` through the per-count means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Needs at least two distinct counts.
    pub fit: Option<LinearFit>,
}

impl BenchReport {
    pub fn row(&self, n: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    /// Ratio of mean kernel times, `t(large) / t(small)`.
    pub fn ratio(&self, small: usize, large: usize) -> Option<f64> {
        Some(self.row(large)?.mean_ns / self.row(small)?.mean_ns)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn random_scene(n: usize, rng: &mut ChaCha8Rng) -> (Vec<Vector3<f64>>, Vector3<f64>, Vector3<f64>) {
    let points = (0..n)
        .map(|_| {
            let az = rng.random_range(-0.9..0.9f64);
            let el = rng.random_range(-0.6..0.6f64);
            let r = rng.random_range(0.8..5.0);
            Vector3::new(
                r * el.cos() * az.cos(),
                r * el.cos() * az.sin(),
                r * el.sin(),
            )
        })
        .collect();
    let v = Vector3::new(rng.random_range(0.0..2.5), rng.random_range(-1.0..1.0), 0.0);
    let a_sp = Vector3::new(
        rng.random_range(-4.0..4.0),
        rng.random_range(-4.0..4.0),
        0.0,
    );
    (points, v, a_sp)
}

fn kernel(
    points: &[Vector3<f64>],
    v_body: &Vector3<f64>,
    a_sp: &Vector3<f64>,
    params: &CbfParams,
) -> Vector3<f64> {
    match composite_cbf(points, v_body, params) {
        Ok(cbf) => solve_analytic(a_sp, &cbf, params).a_star,
        Err(_) => *a_sp,
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Times the kernel on freshly drawn scenes. Each sample is the per-call
/// average over `batch` calls, and repetitions cycle through the counts so
/// that clock-frequency drift is shared between them.
pub fn run_bench(cfg: &BenchConfig) -> BenchReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let reps = cfg.repetitions.max(1);
    let batch = cfg.batch.max(1);
    // A small pool of scenes per count keeps the working set in cache, as in the control loop.
    let pools: Vec<Vec<_>> = cfg
        .counts
        .iter()
        .map(|&n| (0..SCENES).map(|_| random_scene(n, &mut rng)).collect())
        .collect();
    for pool in &pools {
        for i in 0..cfg.warmup {
            let (p, v, a) = &pool[i % SCENES];
            black_box(kernel(black_box(p), v, a, &cfg.params));
        }
    }
    let mut samples = vec![Vec::with_capacity(reps); pools.len()];
    for r in 0..reps {
        for (pool, out) in pools.iter().zip(&mut samples) {
            let t0 = Instant::now();
            for k in 0..batch {
                let (p, v, a) = &pool[(r * batch + k) % SCENES];
                black_box(kernel(black_box(p), v, a, &cfg.params));
            }
            out.push(t0.elapsed().as_nanos() as f64 / batch as f64);
        }
    }
    let rows: Vec<BenchRow> = cfg
        .counts
        .iter()
        .zip(samples)
        .map(|(&n, mut s)| {
            s.sort_by(f64::total_cmp);
            BenchRow {
                n,
                repetitions: reps,
                mean_ns: s.iter().sum::<f64>() / reps as f64,
                median_ns: percentile(&s, 0.5),
                p99_ns: percentile(&s, 0.99),
                min_ns: s[0],
            }
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_ns).collect();
    BenchReport {
        fit: linear_fit(&xs, &ys),
        rows,
    }
}
