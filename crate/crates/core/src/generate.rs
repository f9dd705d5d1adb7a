//! Random instances with a built-in feasibility certificate.
//!
//! Each target follows a closed polyline through random waypoints at a
//! constant random speed. A random single-agent visiting order whose fastest
//! tour returns within the horizon certifies the instance; one window per
//! target is placed around its certified visit time, the others at random.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::GenerateError;
use crate::model::{Instance, Point2, Segment, SegmentSpec};
use crate::oracle::earliest_intercept;

const ORDER_TRIES: usize = 1000;
const TRAJECTORY_DRAWS: usize = 100;
const PLACEMENT_TRIES: usize = 10_000;
/// Clipped pieces this short are dropped.
const MIN_PIECE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_targets: usize,
    pub n_agents: usize,
    pub arena_side: f64,
    pub horizon: f64,
    pub v_max: f64,
    pub speed_range: (f64, f64),
    /// Sum of the window lengths of one target.
    pub total_window_duration: f64,
    pub windows_per_target: usize,
    pub waypoints: (usize, usize),
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_targets: 5,
            n_agents: 1,
            arena_side: 100.0,
            horizon: 150.0,
            v_max: 4.0,
            speed_range: (0.5, 1.0),
            total_window_duration: 40.0,
            windows_per_target: 2,
            waypoints: (3, 6),
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn new(n_targets: usize, total_window_duration: f64, seed: u64) -> Self {
        Self {
            n_targets,
            total_window_duration,
            seed,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<(), GenerateError> {
        let bad = |msg: &str| Err(GenerateError::Config(msg.to_string()));
        let positive = [self.arena_side, self.horizon, self.v_max, self.total_window_duration];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("sizes, speeds and durations must be positive");
        }
        if self.n_targets == 0 || self.n_agents == 0 || self.windows_per_target == 0 {
            return bad("need at least one target, agent and window");
        }
        let (lo, hi) = self.speed_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("speed range must satisfy 0 < lo <= hi");
        }
        if self.waypoints.0 < 2 || self.waypoints.0 > self.waypoints.1 {
            return bad("waypoint range must satisfy 2 <= lo <= hi");
        }
        if self.total_window_duration > self.horizon {
            return bad("windows do not fit in the horizon");
        }
        Ok(())
    }
}

/// A generated instance with the tour that proves it feasible.
#[derive(Debug, Clone)]
pub struct Generated {
    pub instance: Instance,
    /// Target ids in certified visiting order.
    pub order: Vec<usize>,
    /// Visit time of each target in `order`.
    pub visit_times: Vec<f64>,
    /// Segment ids holding those visits, usable as a single-agent route.
    pub route: Vec<usize>,
}

pub fn generate_instance(cfg: &GenConfig) -> Result<Instance, GenerateError> {
    generate_with_certificate(cfg).map(|g| g.instance)
}

pub fn generate_with_certificate(cfg: &GenConfig) -> Result<Generated, GenerateError> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..TRAJECTORY_DRAWS {
        let paths: Vec<Trajectory> = (0..cfg.n_targets).map(|_| Trajectory::sample(cfg, &mut rng)).collect();
        let Some((order, times)) = certify(cfg, &paths, &mut rng) else {
            continue;
        };
        let Some(windows) = place_windows(cfg, &order, &times, &mut rng) else {
            continue;
        };
        let specs = paths
            .iter()
            .zip(&windows)
            .map(|(path, ws)| ws.iter().flat_map(|&(a, b)| path.clip(a, b)).collect())
            .collect();
        let instance = Instance::new(Point2::ORIGIN, cfg.n_agents, cfg.v_max, cfg.horizon, cfg.arena_side, specs);
        let route = order
            .iter()
            .zip(&times)
            .map(|(&k, &t)| {
                let target = &instance.targets[k];
                target
                    .segments
                    .iter()
                    .find(|s| s.contains_time(t))
                    .expect("a window holds the certified visit")
                    .id
            })
            .collect();
        return Ok(Generated {
            order: order.iter().map(|&k| k + 1).collect(),
            visit_times: times,
            route,
            instance,
        });
    }
    Err(GenerateError::Exhausted(TRAJECTORY_DRAWS))
}

/// Random visiting order whose fastest tour makes it home in time; returns
/// target indices and visit times.
fn certify(cfg: &GenConfig, paths: &[Trajectory], rng: &mut ChaCha8Rng) -> Option<(Vec<usize>, Vec<f64>)> {
    let mut order: Vec<usize> = (0..paths.len()).collect();
    for _ in 0..ORDER_TRIES {
        order.shuffle(rng);
        let (mut at, mut t) = (Point2::ORIGIN, 0.0);
        let mut times = Vec::with_capacity(order.len());
        for &k in &order {
            match paths[k].intercept(at, t, cfg.v_max) {
                Some(next) => {
                    t = next;
                    at = paths[k].position(t);
                    times.push(t);
                }
                None => break,
            }
        }
        if times.len() == order.len() && t + at.norm() / cfg.v_max <= cfg.horizon {
            return Some((order, times));
        }
    }
    None
}

/// Disjoint windows per target, indexed by target; the first one placed for
/// each target covers its certified visit.
fn place_windows(
    cfg: &GenConfig,
    order: &[usize],
    times: &[f64],
    rng: &mut ChaCha8Rng,
) -> Option<Vec<Vec<(f64, f64)>>> {
    let h = cfg.total_window_duration / cfg.windows_per_target as f64;
    let horizon = cfg.horizon;
    let mut visit = vec![0.0; order.len()];
    for (&k, &t) in order.iter().zip(times) {
        visit[k] = t;
    }
    let mut out = Vec::with_capacity(order.len());
    for &tv in &visit {
        let lo = (tv - h).max(0.0);
        let hi = tv.min(horizon - h);
        let start = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let mut windows = vec![(start, start + h)];
        while windows.len() < cfg.windows_per_target {
            let placed = (0..PLACEMENT_TRIES).find_map(|_| {
                let a = rng.gen_range(0.0..=horizon - h);
                windows.iter().all(|&(b, _)| (a - b).abs() > h).then_some(a)
            })?;
            windows.push((placed, placed + h));
        }
        windows.sort_by(|a, b| a.0.total_cmp(&b.0));
        out.push(windows);
    }
    Some(out)
}

/// Constant-speed motion around a closed polyline, as timed pieces covering
/// `[0, horizon]`.
#[derive(Debug, Clone)]
struct Trajectory {
    pieces: Vec<Segment>,
}

impl Trajectory {
    fn sample(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Self {
        let half = cfg.arena_side / 2.0;
        let count = rng.gen_range(cfg.waypoints.0..=cfg.waypoints.1);
        let points: Vec<Point2> = (0..count)
            .map(|_| Point2::new(rng.gen_range(-half..=half), rng.gen_range(-half..=half)))
            .collect();
        let (lo, hi) = cfg.speed_range;
        let speed = if hi > lo { rng.gen_range(lo..=hi) } else { lo };

        let mut pieces = Vec::new();
        let mut t = 0.0;
        let mut k = 0;
        while t < cfg.horizon {
            let (a, b) = (points[k % count], points[(k + 1) % count]);
            k += 1;
            let len = a.distance(b);
            if len == 0.0 {
                if k > 2 * count {
                    // every waypoint coincides: park for the whole horizon
                    pieces.push(Segment::new(0, 0, t, cfg.horizon, a, a));
                    break;
                }
                continue;
            }
            let dt = len / speed;
            let (t1, end) = if t + dt >= cfg.horizon {
                let end = a + (b - a) * ((cfg.horizon - t) / dt);
                (cfg.horizon, end)
            } else {
                (t + dt, b)
            };
            pieces.push(Segment::new(0, 0, t, t1, a, end));
            t = t1;
        }
        Self { pieces }
    }

    fn piece_at(&self, t: f64) -> &Segment {
        let k = self.pieces.partition_point(|p| p.t_end < t);
        &self.pieces[k.min(self.pieces.len() - 1)]
    }

    fn position(&self, t: f64) -> Point2 {
        self.piece_at(t).position_unchecked(t)
    }

    fn intercept(&self, from: Point2, t0: f64, v_max: f64) -> Option<f64> {
        self.pieces
            .iter()
            .filter(|p| p.t_end >= t0)
            .find_map(|p| earliest_intercept(from, t0, p, v_max))
    }

    fn clip(&self, a: f64, b: f64) -> Vec<SegmentSpec> {
        self.pieces
            .iter()
            .filter_map(|p| {
                let (lo, hi) = (p.t_start.max(a), p.t_end.min(b));
                (hi - lo > MIN_PIECE).then(|| SegmentSpec {
                    t_start: lo,
                    t_end: hi,
                    p_start: p.position_unchecked(lo),
                    p_end: p.position_unchecked(hi),
                })
            })
            .collect()
    }
}
