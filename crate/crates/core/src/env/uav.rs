//! 3D UAV battlefield: load-factor control, moving hemispherical obstacles,
//! a forward radar fan and a hemispherical ground target.
//!
//! Units are meters, seconds and radians. The ground is `z = 0`; obstacles
//! and the target are hemispheres resting on it.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Vector2, Vector3};
use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{Environment, Pose, StepOutcome, Terminal};
use crate::error::{check_len, AcerError, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArenaConfig {
    /// Arena size along x, y, z.
    pub extents: [f64; 3],
    pub target_radius: f64,
    pub n_obstacles: usize,
    pub obstacle_speed: f64,
    /// Smallest and largest obstacle radius.
    pub obstacle_radius: [f64; 2],
    pub min_start_distance: f64,
    pub dt: f64,
    pub gravity: f64,
    pub v_max: f64,
    pub v_min: f64,
    pub cruise_speed: f64,
    /// Per-axis load-factor bound.
    pub n_max: f64,
    pub radar_range: f64,
    /// Rays per elevation row, spread evenly over `[-span, span]`.
    pub radar_azimuths: usize,
    pub radar_azimuth_span_deg: f64,
    pub radar_elevations_deg: Vec<f64>,
    pub max_steps: usize,
    pub placement_retries: usize,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        ArenaConfig::full_scale()
    }
}

impl ArenaConfig {
    /// The 120 x 90 x 10 km battlefield.
    pub fn full_scale() -> Self {
        ArenaConfig {
            extents: [120_000.0, 90_000.0, 10_000.0],
            target_radius: 3_000.0,
            n_obstacles: 10,
            obstacle_speed: 5.0,
            obstacle_radius: [5_000.0, 10_000.0],
            min_start_distance: 50_000.0,
            dt: 1.0,
            gravity: 9.8,
            v_max: 103.0,
            v_min: 30.0,
            cruise_speed: 80.0,
            n_max: 15.0,
            radar_range: 5_000.0,
            radar_azimuths: 8,
            radar_azimuth_span_deg: 60.0,
            radar_elevations_deg: vec![-30.0, -15.0, 0.0, 10.0],
            max_steps: 3000,
            placement_retries: 200,
        }
    }

    /// A tenth of the battlefield in every length, for short smoke runs.
    pub fn reduced() -> Self {
        ArenaConfig {
            extents: [12_000.0, 9_000.0, 1_000.0],
            target_radius: 300.0,
            n_obstacles: 5,
            obstacle_speed: 5.0,
            obstacle_radius: [500.0, 1_000.0],
            min_start_distance: 5_000.0,
            radar_range: 500.0,
            max_steps: 300,
            ..ArenaConfig::full_scale()
        }
    }

    pub fn radar_rays(&self) -> usize {
        self.radar_azimuths * self.radar_elevations_deg.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AcerError::Config(format!("arena: {m}")));
        if self.extents.iter().any(|&e| !(e > 0.0)) {
            return bad("extents must be positive");
        }
        let diag = self.extents.iter().map(|e| e * e).sum::<f64>().sqrt();
        if !(self.min_start_distance >= 0.0 && self.min_start_distance < diag) {
            return bad("min_start_distance must be below the arena diagonal");
        }
        if !(self.target_radius > 0.0) || !(self.radar_range > 0.0) || !(self.dt > 0.0) {
            return bad("target_radius, radar_range and dt must be positive");
        }
        let [r_lo, r_hi] = self.obstacle_radius;
        if !(r_lo > 0.0 && r_lo <= r_hi) {
            return bad("obstacle_radius must satisfy 0 < min <= max");
        }
        if !(self.v_min > 0.0 && self.v_min <= self.cruise_speed && self.cruise_speed <= self.v_max) {
            return bad("speeds must satisfy 0 < v_min <= cruise_speed <= v_max");
        }
        if !(self.n_max > 0.0) || !(self.gravity > 0.0) || self.obstacle_speed < 0.0 {
            return bad("n_max and gravity must be positive, obstacle_speed non-negative");
        }
        if self.radar_rays() == 0 {
            return bad("radar needs at least one ray");
        }
        if self.max_steps == 0 || self.placement_retries == 0 {
            return bad("max_steps and placement_retries must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub r_s: f64,
    pub r_f: f64,
    /// Weights of the position, angle, height, obstacle and speed terms.
    pub lambda: [f64; 5],
    pub k_p: f64,
    pub k_a: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            r_s: 100.0,
            r_f: -200.0,
            lambda: [20.0, 20.0, 10.0, 40.0, 10.0],
            k_p: 103.0,
            k_a: 1.5 * PI,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda.iter().any(|&l| l < 0.0) {
            return Err(AcerError::Config("reward weights must be >= 0".into()));
        }
        if !(self.k_p > 0.0 && self.k_a > 0.0) {
            return Err(AcerError::Config("k_p and k_a must be positive".into()));
        }
        Ok(())
    }
}

/// Arena and reward constants read from a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub arena: ArenaConfig,
    pub reward: RewardConfig,
}

impl Scenario {
    pub fn reduced() -> Self {
        Scenario {
            arena: ArenaConfig::reduced(),
            reward: RewardConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arena.validate()?;
        self.reward.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavPhysical {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub pitch: f64,
    pub yaw: f64,
}

impl UavPhysical {
    /// A UAV whose attitude is read off its velocity.
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>) -> Self {
        let (pitch, yaw) = attitude(&velocity);
        UavPhysical {
            position,
            velocity,
            pitch,
            yaw,
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

/// `(pitch, yaw)` of the velocity direction.
pub fn attitude(v: &Vector3<f64>) -> (f64, f64) {
    let horizontal = (v.x * v.x + v.y * v.y).sqrt();
    (v.z.atan2(horizontal), v.y.atan2(v.x))
}

/// `v + (n g + (0, 0, -g)) dt`, before any speed clamp.
pub fn integrate_velocity(v: &Vector3<f64>, n_u: &Vector3<f64>, dt: f64, g: f64) -> Vector3<f64> {
    let a = n_u * g + Vector3::new(0.0, 0.0, -g);
    v + a * dt
}

/// Rescales `v` into `[v_min, v_max]`; a zero vector is left alone.
pub fn clamp_speed(v: Vector3<f64>, v_min: f64, v_max: f64) -> Vector3<f64> {
    let s = v.norm();
    if s > v_max {
        v * (v_max / s)
    } else if s < v_min && s > 0.0 {
        v * (v_min / s)
    } else {
        v
    }
}

/// Semi-implicit Euler: velocity first, then position with the new velocity.
pub fn step_dynamics(uav: &UavPhysical, n_u: &Vector3<f64>, dt: f64, g: f64, v_min: f64, v_max: f64) -> UavPhysical {
    let v = clamp_speed(integrate_velocity(&uav.velocity, n_u, dt, g), v_min, v_max);
    UavPhysical::new(uav.position + v * dt, v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub center: Vector2<f64>,
    pub radius: f64,
    pub velocity: Vector2<f64>,
}

impl Obstacle {
    pub fn center3(&self) -> Vector3<f64> {
        Vector3::new(self.center.x, self.center.y, 0.0)
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        p.z >= 0.0 && (p - self.center3()).norm() < self.radius
    }

    /// Moves the center, reflecting off the arena walls.
    pub fn advance(&mut self, dt: f64, width: f64, depth: f64) {
        self.center += self.velocity * dt;
        for (k, limit) in [(0, width), (1, depth)] {
            if self.center[k] < 0.0 {
                self.center[k] = -self.center[k];
                self.velocity[k] = -self.velocity[k];
            } else if self.center[k] > limit {
                self.center[k] = 2.0 * limit - self.center[k];
                self.velocity[k] = -self.velocity[k];
            }
            self.center[k] = self.center[k].clamp(0.0, limit);
        }
    }
}

/// Unit ray directions in the body frame, elevation-major.
pub fn radar_body_directions(arena: &ArenaConfig) -> Vec<Vector3<f64>> {
    let n = arena.radar_azimuths;
    let span = arena.radar_azimuth_span_deg.to_radians();
    let mut dirs = Vec::with_capacity(arena.radar_rays());
    for &el in &arena.radar_elevations_deg {
        let el = el.to_radians();
        for k in 0..n {
            let az = if n == 1 {
                0.0
            } else {
                -span + 2.0 * span * k as f64 / (n - 1) as f64
            };
            dirs.push(Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()));
        }
    }
    dirs
}

/// Pitches a body-frame vector up by `pitch`, then turns it by `yaw`.
pub fn body_to_world(d: &Vector3<f64>, pitch: f64, yaw: f64) -> Vector3<f64> {
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    let x = d.x * cp - d.z * sp;
    let z = d.x * sp + d.z * cp;
    Vector3::new(x * cy - d.y * sy, x * sy + d.y * cy, z)
}

/// First hit of the ray `origin + t dir` (unit `dir`, `t >= 0`) with a solid
/// sphere; zero when the origin is already inside.
pub fn ray_sphere(origin: &Vector3<f64>, dir: &Vector3<f64>, center: &Vector3<f64>, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let c = oc.dot(&oc) - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let b = oc.dot(dir);
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t >= 0.0).then_some(t)
}

/// Distance to the ground plane along the ray, if it points down.
pub fn ray_ground(origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    if origin.z <= 0.0 {
        Some(0.0)
    } else if dir.z < 0.0 {
        Some(-origin.z / dir.z)
    } else {
        None
    }
}

/// Radar returns in meters, capped at the detection range.
pub fn radar_scan(uav: &UavPhysical, obstacles: &[Obstacle], arena: &ArenaConfig, body: &[Vector3<f64>]) -> Vec<f64> {
    body.iter()
        .map(|d| {
            let dir = body_to_world(d, uav.pitch, uav.yaw);
            let mut best = arena.radar_range;
            if let Some(t) = ray_ground(&uav.position, &dir) {
                best = best.min(t);
            }
            for o in obstacles {
                if let Some(t) = ray_sphere(&uav.position, &dir, &o.center3(), o.radius) {
                    best = best.min(t);
                }
            }
            best
        })
        .collect()
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Unweighted reward components of a running step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardTerms {
    pub position: f64,
    pub angle: f64,
    pub height: f64,
    pub obstacle: f64,
    pub speed: f64,
}

impl RewardTerms {
    pub fn compute(
        prev: &UavPhysical,
        cur: &UavPhysical,
        target: &Vector3<f64>,
        radar: &[f64],
        arena: &ArenaConfig,
        cfg: &RewardConfig,
    ) -> RewardTerms {
        let d_pre = (target - prev.position).norm();
        let d_cur = (target - cur.position).norm();
        let (yaw_off, pitch_off) = target_angles(cur, target);
        RewardTerms {
            position: (d_pre - d_cur) / cfg.k_p,
            angle: -(yaw_off + pitch_off) / cfg.k_a,
            height: 1.0 - cur.position.z / arena.extents[2],
            obstacle: radar.iter().map(|d| d / arena.radar_range).sum::<f64>() / radar.len() as f64,
            speed: cur.speed() / arena.v_max,
        }
    }

    pub fn weighted(&self, lambda: &[f64; 5]) -> f64 {
        lambda[0] * self.position
            + lambda[1] * self.angle
            + lambda[2] * self.height
            + lambda[3] * self.obstacle
            + lambda[4] * self.speed
    }
}

/// Absolute yaw and pitch offsets between the flight direction and the line
/// of sight to the target.
pub fn target_angles(uav: &UavPhysical, target: &Vector3<f64>) -> (f64, f64) {
    let d = target - uav.position;
    let bearing = d.y.atan2(d.x);
    let elevation = d.z.atan2((d.x * d.x + d.y * d.y).sqrt());
    (wrap_angle(uav.yaw - bearing).abs(), (uav.pitch - elevation).abs())
}

pub fn step_reward(terms: &RewardTerms, terminal: Terminal, cfg: &RewardConfig) -> f64 {
    match terminal {
        Terminal::Success => cfg.r_s,
        Terminal::Collision | Terminal::OutOfRange => cfg.r_f,
        Terminal::Running | Terminal::Timeout => terms.weighted(&cfg.lambda),
    }
}

#[derive(Debug, Clone)]
pub struct UavEnv {
    arena: ArenaConfig,
    reward: RewardConfig,
    body_rays: Vec<Vector3<f64>>,
    uav: UavPhysical,
    target: Vector3<f64>,
    obstacles: Vec<Obstacle>,
    steps: usize,
    finished: bool,
}

impl UavEnv {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let body_rays = radar_body_directions(&scenario.arena);
        let z = scenario.arena.extents[2];
        Ok(UavEnv {
            body_rays,
            uav: UavPhysical::new(Vector3::new(0.0, 0.0, z), Vector3::new(scenario.arena.cruise_speed, 0.0, 0.0)),
            target: Vector3::zeros(),
            obstacles: Vec::new(),
            steps: 0,
            finished: true,
            arena: scenario.arena,
            reward: scenario.reward,
        })
    }

    pub fn arena(&self) -> &ArenaConfig {
        &self.arena
    }

    pub fn reward_config(&self) -> &RewardConfig {
        &self.reward
    }

    pub fn uav(&self) -> &UavPhysical {
        &self.uav
    }

    pub fn target(&self) -> &Vector3<f64> {
        &self.target
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Puts the world into an explicit state and starts an episode from it.
    pub fn set_state(&mut self, uav: UavPhysical, target: Vector3<f64>, obstacles: Vec<Obstacle>) -> Vec<f64> {
        self.uav = uav;
        self.target = target;
        self.obstacles = obstacles;
        self.steps = 0;
        self.finished = false;
        self.observe(&self.radar())
    }

    pub fn radar(&self) -> Vec<f64> {
        radar_scan(&self.uav, &self.obstacles, &self.arena, &self.body_rays)
    }

    fn out_of_range(&self, p: &Vector3<f64>) -> bool {
        let [x, y, z] = self.arena.extents;
        p.x < 0.0 || p.x > x || p.y < 0.0 || p.y > y || p.z <= 0.0 || p.z > z
    }

    /// Termination status of the current state, ignoring the step cap.
    pub fn classify(&self) -> Terminal {
        let p = &self.uav.position;
        if self.obstacles.iter().any(|o| o.contains(p)) {
            Terminal::Collision
        } else if self.out_of_range(p) {
            Terminal::OutOfRange
        } else if (p - self.target).norm() <= self.arena.target_radius {
            Terminal::Success
        } else {
            Terminal::Running
        }
    }

    /// `[dp / extents, yaw / pi, pitch / pi, speed / v_max, radar / range]`.
    pub fn observe(&self, radar: &[f64]) -> Vec<f64> {
        let d = self.target - self.uav.position;
        let mut obs = Vec::with_capacity(6 + radar.len());
        for k in 0..3 {
            obs.push(d[k] / self.arena.extents[k]);
        }
        obs.push(self.uav.yaw / PI);
        obs.push(self.uav.pitch / PI);
        obs.push(self.uav.speed() / self.arena.v_max);
        obs.extend(radar.iter().map(|r| r / self.arena.radar_range));
        obs
    }

    fn place(&mut self, rng: &mut Rng) -> Result<()> {
        let [x, y, z] = self.arena.extents;
        let heading = rng.random_range(-PI..PI);
        let start = Vector3::new(rng.random_range(0.0..x), rng.random_range(0.0..y), z);
        let v = Vector3::new(heading.cos(), heading.sin(), 0.0) * self.arena.cruise_speed;
        self.uav = UavPhysical::new(start, v);

        let retries = self.arena.placement_retries;
        self.target = (0..retries)
            .map(|_| Vector3::new(rng.random_range(0.0..x), rng.random_range(0.0..y), 0.0))
            .find(|t| (t - start).norm() > self.arena.min_start_distance)
            .ok_or_else(|| AcerError::Config(format!("no target position after {retries} tries")))?;

        self.obstacles.clear();
        let [r_lo, r_hi] = self.arena.obstacle_radius;
        for _ in 0..self.arena.n_obstacles {
            let mut placed = None;
            for _ in 0..retries {
                let radius = if r_hi > r_lo { rng.random_range(r_lo..=r_hi) } else { r_lo };
                let center = Vector2::new(rng.random_range(0.0..x), rng.random_range(0.0..y));
                let c3 = Vector3::new(center.x, center.y, 0.0);
                let clear_of_uav = (start - c3).norm() > radius + self.arena.radar_range;
                let clear_of_target =
                    (center - self.target.xy()).norm() > radius + self.arena.target_radius;
                if clear_of_uav && clear_of_target {
                    let dir = rng.random_range(-PI..PI);
                    placed = Some(Obstacle {
                        center,
                        radius,
                        velocity: Vector2::new(dir.cos(), dir.sin()) * self.arena.obstacle_speed,
                    });
                    break;
                }
            }
            self.obstacles.push(placed.ok_or_else(|| {
                AcerError::Config(format!("no obstacle position after {retries} tries"))
            })?);
        }
        Ok(())
    }
}

impl Environment for UavEnv {
    fn observation_dim(&self) -> usize {
        6 + self.arena.radar_rays()
    }

    fn action_dim(&self) -> usize {
        3
    }

    fn max_steps(&self) -> usize {
        self.arena.max_steps
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let mut rng = Rng::seed_from_u64(seed);
        self.place(&mut rng)?;
        self.steps = 0;
        self.finished = false;
        Ok(self.observe(&self.radar()))
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.finished {
            return Err(AcerError::Usage("step called on a finished episode; reset first".into()));
        }
        check_len("action", 3, action.len())?;
        let n_max = self.arena.n_max;
        let n_u = Vector3::new(action[0], action[1], action[2]).map(|a| a.clamp(-1.0, 1.0) * n_max);
        let [x, y, _] = self.arena.extents;
        for o in &mut self.obstacles {
            o.advance(self.arena.dt, x, y);
        }
        let prev = self.uav;
        self.uav = step_dynamics(&prev, &n_u, self.arena.dt, self.arena.gravity, self.arena.v_min, self.arena.v_max);
        self.steps += 1;

        let radar = self.radar();
        let mut terminal = self.classify();
        if terminal == Terminal::Running && self.steps >= self.arena.max_steps {
            terminal = Terminal::Timeout;
        }
        let terms = RewardTerms::compute(&prev, &self.uav, &self.target, &radar, &self.arena, &self.reward);
        let reward = step_reward(&terms, terminal, &self.reward);
        self.finished = terminal.is_terminal();
        Ok(StepOutcome {
            observation: self.observe(&radar),
            reward,
            terminal,
        })
    }

    fn pose(&self) -> Pose {
        Pose {
            position: [self.uav.position.x, self.uav.position.y, self.uav.position.z],
            yaw: self.uav.yaw,
            pitch: self.uav.pitch,
            speed: self.uav.speed(),
        }
    }
}

/// Pitch range of the attitude: `atan2` against a non-negative horizontal
/// speed never leaves `[-pi/2, pi/2]`.
pub const PITCH_LIMIT: f64 = FRAC_PI_2;
