//! A 2D point mass reaching a goal disc in the unit square, past a few static
//! circular obstacles. Fast enough to train on in minutes.

use std::f64::consts::PI;

use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{Environment, Pose, StepOutcome, Terminal};
use crate::error::{check_len, AcerError, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    /// Velocity change per step at full action.
    pub accel: f64,
    pub v_max: f64,
    pub goal_radius: f64,
    pub min_obstacles: usize,
    pub max_obstacles: usize,
    pub obstacle_radius: [f64; 2],
    pub min_start_distance: f64,
    pub range: f64,
    pub rays: usize,
    /// Penalty scale for being within `range` of an obstacle or wall.
    pub proximity_penalty: f64,
    pub progress_scale: f64,
    pub success_reward: f64,
    pub collision_reward: f64,
    pub max_steps: usize,
    pub placement_retries: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            accel: 0.02,
            v_max: 0.05,
            goal_radius: 0.06,
            min_obstacles: 1,
            max_obstacles: 3,
            obstacle_radius: [0.04, 0.08],
            min_start_distance: 0.5,
            range: 0.25,
            rays: 8,
            proximity_penalty: 0.2,
            progress_scale: 1.0,
            success_reward: 10.0,
            collision_reward: -10.0,
            max_steps: 100,
            placement_retries: 200,
        }
    }
}

impl ToyConfig {
    pub fn observation_dim(&self) -> usize {
        4 + self.rays
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AcerError::Config(format!("toy env: {m}")));
        if !(self.accel > 0.0 && self.v_max > 0.0 && self.goal_radius > 0.0 && self.range > 0.0) {
            return bad("accel, v_max, goal_radius and range must be positive");
        }
        if self.min_obstacles > self.max_obstacles {
            return bad("min_obstacles exceeds max_obstacles");
        }
        let [lo, hi] = self.obstacle_radius;
        if !(lo > 0.0 && lo <= hi && hi < 0.5) {
            return bad("obstacle_radius must satisfy 0 < min <= max < 0.5");
        }
        if !(self.min_start_distance >= 0.0 && self.min_start_distance < 2f64.sqrt()) {
            return bad("min_start_distance must fit in the unit square");
        }
        if self.rays == 0 || self.max_steps == 0 || self.placement_retries == 0 {
            return bad("rays, max_steps and placement_retries must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Distance from `p` along unit `d` to the first wall or circle, capped at `cap`.
pub fn cast(p: [f64; 2], d: [f64; 2], circles: &[Circle], cap: f64) -> f64 {
    let mut best = cap;
    for k in 0..2 {
        if d[k] > 0.0 {
            best = best.min((1.0 - p[k]) / d[k]);
        } else if d[k] < 0.0 {
            best = best.min(-p[k] / d[k]);
        }
    }
    for c in circles {
        let oc = [p[0] - c.center[0], p[1] - c.center[1]];
        let cc = oc[0] * oc[0] + oc[1] * oc[1] - c.radius * c.radius;
        if cc <= 0.0 {
            return 0.0;
        }
        let b = oc[0] * d[0] + oc[1] * d[1];
        let disc = b * b - cc;
        if disc >= 0.0 {
            let t = -b - disc.sqrt();
            if t >= 0.0 {
                best = best.min(t);
            }
        }
    }
    best.max(0.0)
}

#[derive(Debug, Clone)]
pub struct ToyEnv {
    cfg: ToyConfig,
    pos: [f64; 2],
    vel: [f64; 2],
    goal: [f64; 2],
    obstacles: Vec<Circle>,
    steps: usize,
    finished: bool,
}

impl ToyEnv {
    pub fn new(cfg: ToyConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(ToyEnv {
            cfg,
            pos: [0.5, 0.5],
            vel: [0.0, 0.0],
            goal: [0.5, 0.5],
            obstacles: Vec::new(),
            steps: 0,
            finished: true,
        })
    }

    pub fn config(&self) -> &ToyConfig {
        &self.cfg
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn goal(&self) -> [f64; 2] {
        self.goal
    }

    pub fn obstacles(&self) -> &[Circle] {
        &self.obstacles
    }

    /// Starts an episode from an explicit layout, at rest.
    pub fn set_state(&mut self, pos: [f64; 2], goal: [f64; 2], obstacles: Vec<Circle>) -> Vec<f64> {
        self.pos = pos;
        self.vel = [0.0, 0.0];
        self.goal = goal;
        self.obstacles = obstacles;
        self.steps = 0;
        self.finished = false;
        self.observe()
    }

    pub fn ranges(&self) -> Vec<f64> {
        (0..self.cfg.rays)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / self.cfg.rays as f64;
                cast(self.pos, [a.cos(), a.sin()], &self.obstacles, self.cfg.range)
            })
            .collect()
    }

    /// `[goal - pos, v / v_max, ranges / range]`.
    pub fn observe(&self) -> Vec<f64> {
        let mut obs = vec![
            self.goal[0] - self.pos[0],
            self.goal[1] - self.pos[1],
            self.vel[0] / self.cfg.v_max,
            self.vel[1] / self.cfg.v_max,
        ];
        obs.extend(self.ranges().into_iter().map(|r| r / self.cfg.range));
        obs
    }

    fn collides(&self) -> bool {
        let [x, y] = self.pos;
        !(0.0..=1.0).contains(&x)
            || !(0.0..=1.0).contains(&y)
            || self.obstacles.iter().any(|c| dist(self.pos, c.center) < c.radius)
    }
}

impl Environment for ToyEnv {
    fn observation_dim(&self) -> usize {
        self.cfg.observation_dim()
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn max_steps(&self) -> usize {
        self.cfg.max_steps
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let mut rng = Rng::seed_from_u64(seed);
        let cfg = &self.cfg;
        let margin = cfg.goal_radius;
        let point = |rng: &mut Rng| [rng.random_range(margin..1.0 - margin), rng.random_range(margin..1.0 - margin)];
        let retries = cfg.placement_retries;
        let start = point(&mut rng);
        let goal = (0..retries)
            .map(|_| point(&mut rng))
            .find(|g| dist(*g, start) >= cfg.min_start_distance)
            .ok_or_else(|| AcerError::Config("no goal position found".into()))?;
        let n = rng.random_range(cfg.min_obstacles..=cfg.max_obstacles);
        let [r_lo, r_hi] = cfg.obstacle_radius;
        let mut obstacles = Vec::with_capacity(n);
        for _ in 0..n {
            let c = (0..retries)
                .map(|_| Circle {
                    center: [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
                    radius: if r_hi > r_lo { rng.random_range(r_lo..=r_hi) } else { r_lo },
                })
                .find(|c| {
                    dist(c.center, start) > c.radius + 2.0 * cfg.v_max
                        && dist(c.center, goal) > c.radius + cfg.goal_radius
                })
                .ok_or_else(|| AcerError::Config("no obstacle position found".into()))?;
            obstacles.push(c);
        }
        Ok(self.set_state(start, goal, obstacles))
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.finished {
            return Err(AcerError::Usage("step called on a finished episode; reset first".into()));
        }
        check_len("action", 2, action.len())?;
        let d_prev = dist(self.pos, self.goal);
        for k in 0..2 {
            self.vel[k] += action[k].clamp(-1.0, 1.0) * self.cfg.accel;
        }
        let speed = (self.vel[0].powi(2) + self.vel[1].powi(2)).sqrt();
        if speed > self.cfg.v_max {
            let s = self.cfg.v_max / speed;
            self.vel = [self.vel[0] * s, self.vel[1] * s];
        }
        self.pos = [self.pos[0] + self.vel[0], self.pos[1] + self.vel[1]];
        self.steps += 1;

        let d_cur = dist(self.pos, self.goal);
        let terminal = if self.collides() {
            Terminal::Collision
        } else if d_cur <= self.cfg.goal_radius {
            Terminal::Success
        } else if self.steps >= self.cfg.max_steps {
            Terminal::Timeout
        } else {
            Terminal::Running
        };
        let observation = self.observe();
        let reward = match terminal {
            Terminal::Success => self.cfg.success_reward,
            Terminal::Collision | Terminal::OutOfRange => self.cfg.collision_reward,
            Terminal::Running | Terminal::Timeout => {
                let nearest = observation[4..].iter().cloned().fold(1.0, f64::min);
                self.cfg.progress_scale * (d_prev - d_cur) / self.cfg.v_max
                    - self.cfg.proximity_penalty * (1.0 - nearest)
            }
        };
        self.finished = terminal.is_terminal();
        Ok(StepOutcome {
            observation,
            reward,
            terminal,
        })
    }

    fn pose(&self) -> Pose {
        let speed = (self.vel[0].powi(2) + self.vel[1].powi(2)).sqrt();
        Pose {
            position: [self.pos[0], self.pos[1], 0.0],
            yaw: self.vel[1].atan2(self.vel[0]),
            pitch: 0.0,
            speed,
        }
    }
}
