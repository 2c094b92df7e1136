//! Network geometry: node placement, Gauss-Markov user mobility, the
//! sub-carrier interference map, and a plain-text topology dump.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{los_probability, ChannelParams};

/// SBS ring radii around the serving MBS, meters.
pub const SBS_RING_MIN_M: f64 = 50.0;
pub const SBS_RING_MAX_M: f64 = 150.0;
/// User disc radius around the serving SBS, meters.
pub const USER_DISC_RADIUS_M: f64 = 40.0;
/// Cumulative user displacement after which access-link LoS is re-sampled.
pub const LOS_RESAMPLE_DISTANCE_M: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("index out of range: mbs {m}, sbs {n}")]
    IndexOutOfRange { m: usize, n: usize },
    #[error("topology table parse error at line {line}: {reason}")]
    ParseError { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityParams {
    /// Gauss-Markov memory coefficient a in [0,1].
    pub memory_alpha_gm: f64,
    pub mean_speed_mps: f64,
    pub speed_stddev_mps: f64,
    /// Fallback mean direction; each user draws its own at placement.
    pub mean_direction_rad: f64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        Self {
            memory_alpha_gm: 0.9,
            mean_speed_mps: 1.5,
            speed_stddev_mps: 0.3,
            mean_direction_rad: 0.0,
        }
    }
}

/// Every scenario constant of one experiment drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_mbs: usize,
    pub num_sbs_per_mbs: usize,
    pub users_per_sbs: usize,
    pub total_bandwidth_hz: f64,
    pub backhaul_fraction_alpha: f64,
    pub mbs_max_power_dbm: f64,
    pub sbs_access_power_dbm: f64,
    pub area_side_m: f64,
    pub channel: ChannelParams,
    pub mobility: MobilityParams,
    pub slot_duration_s: f64,
    pub guidance_period_slots: usize,
    pub slots_per_episode: usize,
    pub backhaul_interference: bool,
    pub access_interference: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_mbs: 3,
            num_sbs_per_mbs: 6,
            users_per_sbs: 2,
            total_bandwidth_hz: 100e6,
            backhaul_fraction_alpha: 0.5,
            mbs_max_power_dbm: 44.0,
            sbs_access_power_dbm: 30.0,
            area_side_m: 1000.0,
            channel: ChannelParams::default(),
            mobility: MobilityParams::default(),
            slot_duration_s: 0.2,
            guidance_period_slots: 10,
            slots_per_episode: 50,
            backhaul_interference: true,
            access_interference: true,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.num_mbs < 1 || self.num_sbs_per_mbs < 1 || self.users_per_sbs < 1 {
            return Err(TopologyError::InvalidConfig(format!(
                "num_mbs/num_sbs_per_mbs/users_per_sbs must all be >= 1, got {}/{}/{}",
                self.num_mbs, self.num_sbs_per_mbs, self.users_per_sbs
            )));
        }
        if !(0.0..=1.0).contains(&self.backhaul_fraction_alpha) {
            return Err(TopologyError::InvalidConfig(format!(
                "backhaul_fraction_alpha must lie in [0,1], got {}",
                self.backhaul_fraction_alpha
            )));
        }
        if self.guidance_period_slots < 1 {
            return Err(TopologyError::InvalidConfig(
                "guidance_period_slots must be >= 1".into(),
            ));
        }
        if self.slots_per_episode < 1 {
            return Err(TopologyError::InvalidConfig(
                "slots_per_episode must be >= 1".into(),
            ));
        }
        if self.area_side_m <= 0.0 {
            return Err(TopologyError::InvalidConfig("area_side_m must be > 0".into()));
        }
        let mob = &self.mobility;
        if !(0.0..=1.0).contains(&mob.memory_alpha_gm) || mob.speed_stddev_mps < 0.0 {
            return Err(TopologyError::InvalidConfig(
                "mobility: memory_alpha_gm in [0,1], speed_stddev_mps >= 0".into(),
            ));
        }
        self.channel
            .validate()
            .map_err(|e| TopologyError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    /// Per-backhaul-link bandwidth W*alpha/N.
    pub fn backhaul_bandwidth_hz(&self) -> f64 {
        self.total_bandwidth_hz * self.backhaul_fraction_alpha / self.num_sbs_per_mbs as f64
    }

    /// Per-user access bandwidth W*(1-alpha)/(N*K).
    pub fn access_bandwidth_hz(&self) -> f64 {
        self.total_bandwidth_hz * (1.0 - self.backhaul_fraction_alpha)
            / (self.num_sbs_per_mbs as f64 * self.users_per_sbs as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Vec2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Geometry and mobility state. Indexing is `[m][n]` for SBS-level data and
/// `[m][n][k]` for user-level data. LoS flags are sampled at creation and
/// held; access LoS is re-drawn once a user accumulates enough movement.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub mbs_positions: Vec<Vec2>,
    pub sbs_positions: Vec<Vec<Vec2>>,
    pub user_positions: Vec<Vec<Vec<Vec2>>>,
    pub user_velocities: Vec<Vec<Vec<Vec2>>>,
    /// Per-user Gauss-Markov mean velocity (direction drawn at placement).
    pub user_mean_velocities: Vec<Vec<Vec<Vec2>>>,
    /// Cumulative displacement since the last access-LoS re-sample.
    pub user_travel_since_los: Vec<Vec<Vec<f64>>>,
    /// `backhaul_los[m][n][m2]`: LoS of the link from MBS `m2` to SBS (m,n).
    pub backhaul_los: Vec<Vec<Vec<bool>>>,
    /// `access_los[m][n][k][m2]`: LoS of the link from SBS (m2,n) to user (m,n,k).
    pub access_los: Vec<Vec<Vec<Vec<bool>>>>,
}

impl Topology {
    /// Sub-carrier of SBS (m, n); SBS n of every MBS shares sub-carrier n.
    pub fn subcarrier_index(&self, _m: usize, n: usize) -> usize {
        n
    }
}

/// All (m', n') whose sub-carrier collides with SBS (m, n) from another cell.
pub fn interference_sources(
    m: usize,
    n: usize,
    num_mbs: usize,
    num_sbs_per_mbs: usize,
) -> Result<Vec<(usize, usize)>, TopologyError> {
    if m >= num_mbs || n >= num_sbs_per_mbs {
        return Err(TopologyError::IndexOutOfRange { m, n });
    }
    Ok((0..num_mbs).filter(|&m2| m2 != m).map(|m2| (m2, n)).collect())
}

fn sample_los<R: Rng + ?Sized>(d: f64, params: &ChannelParams, rng: &mut R) -> bool {
    let p = los_probability(d.max(0.0), params.los_range_constant_rho).unwrap_or(0.0);
    rng.gen::<f64>() < p
}

/// MBS positions on a fixed grid over the square area.
fn mbs_grid(num_mbs: usize, area_side: f64) -> Vec<Vec2> {
    let cols = (num_mbs as f64).sqrt().ceil() as usize;
    let rows = num_mbs.div_ceil(cols);
    let dx = area_side / cols as f64;
    let dy = area_side / rows as f64;
    (0..num_mbs)
        .map(|i| {
            let c = i % cols;
            let r = i / cols;
            Vec2::new((c as f64 + 0.5) * dx, (r as f64 + 0.5) * dy)
        })
        .collect()
}

fn clamp_to_area(p: Vec2, area_side: f64) -> Vec2 {
    Vec2::new(p.x.clamp(0.0, area_side), p.y.clamp(0.0, area_side))
}

pub fn build_topology(config: &NetworkConfig, seed: u64) -> Result<Topology, TopologyError> {
    config.validate()?;
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let (m_count, n_count, k_count) = (config.num_mbs, config.num_sbs_per_mbs, config.users_per_sbs);
    let area = config.area_side_m;

    let mbs_positions = mbs_grid(m_count, area);

    let mut sbs_positions = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let mut ring = Vec::with_capacity(n_count);
        for _ in 0..n_count {
            let theta = rng.gen::<f64>() * std::f64::consts::TAU;
            let r = SBS_RING_MIN_M + rng.gen::<f64>() * (SBS_RING_MAX_M - SBS_RING_MIN_M);
            let p = Vec2::new(
                mbs_positions[m].x + r * theta.cos(),
                mbs_positions[m].y + r * theta.sin(),
            );
            ring.push(clamp_to_area(p, area));
        }
        sbs_positions.push(ring);
    }

    let mut user_positions = Vec::with_capacity(m_count);
    let mut user_velocities = Vec::with_capacity(m_count);
    let mut user_mean_velocities = Vec::with_capacity(m_count);
    let mut user_travel = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let mut pos_n = Vec::with_capacity(n_count);
        let mut vel_n = Vec::with_capacity(n_count);
        let mut mean_n = Vec::with_capacity(n_count);
        let mut travel_n = Vec::with_capacity(n_count);
        for n in 0..n_count {
            let mut pos_k = Vec::with_capacity(k_count);
            let mut vel_k = Vec::with_capacity(k_count);
            let mut mean_k = Vec::with_capacity(k_count);
            for _ in 0..k_count {
                let theta = rng.gen::<f64>() * std::f64::consts::TAU;
                let r = USER_DISC_RADIUS_M * rng.gen::<f64>().sqrt();
                let p = Vec2::new(
                    sbs_positions[m][n].x + r * theta.cos(),
                    sbs_positions[m][n].y + r * theta.sin(),
                );
                pos_k.push(clamp_to_area(p, area));
                let dir = rng.gen::<f64>() * std::f64::consts::TAU;
                let mean_v = Vec2::new(
                    config.mobility.mean_speed_mps * dir.cos(),
                    config.mobility.mean_speed_mps * dir.sin(),
                );
                vel_k.push(mean_v);
                mean_k.push(mean_v);
            }
            pos_n.push(pos_k);
            vel_n.push(vel_k);
            mean_n.push(mean_k);
            travel_n.push(vec![0.0; k_count]);
        }
        user_positions.push(pos_n);
        user_velocities.push(vel_n);
        user_mean_velocities.push(mean_n);
        user_travel.push(travel_n);
    }

    // LoS is drawn per link at creation and then held.
    let mut backhaul_los = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let mut by_n = Vec::with_capacity(n_count);
        for n in 0..n_count {
            let by_m2: Vec<bool> = (0..m_count)
                .map(|m2| {
                    let d = mbs_positions[m2].distance(&sbs_positions[m][n]);
                    sample_los(d, &config.channel, &mut rng)
                })
                .collect();
            by_n.push(by_m2);
        }
        backhaul_los.push(by_n);
    }

    let mut access_los = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let mut by_n = Vec::with_capacity(n_count);
        for n in 0..n_count {
            let mut by_k = Vec::with_capacity(k_count);
            for k in 0..k_count {
                let by_m2: Vec<bool> = (0..m_count)
                    .map(|m2| {
                        let d = sbs_positions[m2][n].distance(&user_positions[m][n][k]);
                        sample_los(d, &config.channel, &mut rng)
                    })
                    .collect();
                by_k.push(by_m2);
            }
            by_n.push(by_k);
        }
        access_los.push(by_n);
    }

    Ok(Topology {
        mbs_positions,
        sbs_positions,
        user_positions,
        user_velocities,
        user_mean_velocities,
        user_travel_since_los: user_travel,
        backhaul_los,
        access_los,
    })
}

/// One Gauss-Markov velocity update:
/// v' = a*v + (1-a)*mu + sqrt(1-a^2) * Normal(0, sigma^2), per component.
pub fn gauss_markov_step<R: Rng + ?Sized>(
    velocity: Vec2,
    mean_velocity: Vec2,
    params: &MobilityParams,
    rng: &mut R,
) -> Vec2 {
    let a = params.memory_alpha_gm;
    let scale = (1.0 - a * a).max(0.0).sqrt();
    let noise = if params.speed_stddev_mps > 0.0 {
        let normal = Normal::new(0.0, params.speed_stddev_mps).expect("stddev checked >= 0");
        Vec2::new(normal.sample(rng), normal.sample(rng))
    } else {
        Vec2::ZERO
    };
    Vec2::new(
        a * velocity.x + (1.0 - a) * mean_velocity.x + scale * noise.x,
        a * velocity.y + (1.0 - a) * mean_velocity.y + scale * noise.y,
    )
}

/// Reflect a coordinate into [0, hi], flipping the velocity sign on bounce.
fn reflect(mut pos: f64, mut vel: f64, hi: f64) -> (f64, f64) {
    // A slot moves users a few meters at most; one reflection pass suffices,
    // the loop covers pathological speeds.
    for _ in 0..16 {
        if pos < 0.0 {
            pos = -pos;
            vel = -vel;
        } else if pos > hi {
            pos = 2.0 * hi - pos;
            vel = -vel;
        } else {
            return (pos, vel);
        }
    }
    (pos.clamp(0.0, hi), vel)
}

/// Advance every user by one slot: Gauss-Markov velocity update, position
/// integration with boundary reflection, and access-LoS re-sampling once a
/// user has travelled far enough. Base-station positions never move.
pub fn advance_users<R: Rng + ?Sized>(topology: &mut Topology, config: &NetworkConfig, rng: &mut R) {
    let dt = config.slot_duration_s;
    let area = config.area_side_m;
    for m in 0..config.num_mbs {
        for n in 0..config.num_sbs_per_mbs {
            for k in 0..config.users_per_sbs {
                let v = gauss_markov_step(
                    topology.user_velocities[m][n][k],
                    topology.user_mean_velocities[m][n][k],
                    &config.mobility,
                    rng,
                );
                let p = topology.user_positions[m][n][k];
                let (x, vx) = reflect(p.x + v.x * dt, v.x, area);
                let (y, vy) = reflect(p.y + v.y * dt, v.y, area);
                let new_p = Vec2::new(x, y);
                topology.user_travel_since_los[m][n][k] += p.distance(&new_p);
                topology.user_positions[m][n][k] = new_p;
                topology.user_velocities[m][n][k] = Vec2::new(vx, vy);

                if topology.user_travel_since_los[m][n][k] >= LOS_RESAMPLE_DISTANCE_M {
                    topology.user_travel_since_los[m][n][k] = 0.0;
                    for m2 in 0..config.num_mbs {
                        let d = topology.sbs_positions[m2][n].distance(&new_p);
                        topology.access_los[m][n][k][m2] = sample_los(d, &config.channel, rng);
                    }
                }
            }
        }
    }
}

impl Topology {
    /// Plain-text table: one `role m n k x y` row per node.
    pub fn to_table_string(&self) -> String {
        let mut out = String::from("role m n k x y\n");
        for (m, p) in self.mbs_positions.iter().enumerate() {
            out.push_str(&format!("mbs {m} - - {:.6} {:.6}\n", p.x, p.y));
        }
        for (m, row) in self.sbs_positions.iter().enumerate() {
            for (n, p) in row.iter().enumerate() {
                out.push_str(&format!("sbs {m} {n} - {:.6} {:.6}\n", p.x, p.y));
            }
        }
        for (m, row) in self.user_positions.iter().enumerate() {
            for (n, col) in row.iter().enumerate() {
                for (k, p) in col.iter().enumerate() {
                    out.push_str(&format!("user {m} {n} {k} {:.6} {:.6}\n", p.x, p.y));
                }
            }
        }
        out
    }

    /// Restore node positions from a table dump. Velocities and travel
    /// counters reset to zero and LoS flags are re-drawn from a fixed seed;
    /// the dump is a geometry debugging aid, not a full state checkpoint.
    pub fn from_table_string(config: &NetworkConfig, text: &str) -> Result<Topology, TopologyError> {
        let mut topo = build_topology(config, 0)?;
        for (idx, line) in text.lines().enumerate() {
            if idx == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 6 {
                return Err(TopologyError::ParseError {
                    line: idx + 1,
                    reason: format!("expected 6 fields, got {}", fields.len()),
                });
            }
            let parse_idx = |s: &str| -> Result<usize, TopologyError> {
                s.parse().map_err(|_| TopologyError::ParseError {
                    line: idx + 1,
                    reason: format!("bad index {s:?}"),
                })
            };
            let parse_f = |s: &str| -> Result<f64, TopologyError> {
                s.parse().map_err(|_| TopologyError::ParseError {
                    line: idx + 1,
                    reason: format!("bad coordinate {s:?}"),
                })
            };
            let (x, y) = (parse_f(fields[4])?, parse_f(fields[5])?);
            match fields[0] {
                "mbs" => {
                    let m = parse_idx(fields[1])?;
                    topo.mbs_positions[m] = Vec2::new(x, y);
                }
                "sbs" => {
                    let (m, n) = (parse_idx(fields[1])?, parse_idx(fields[2])?);
                    topo.sbs_positions[m][n] = Vec2::new(x, y);
                }
                "user" => {
                    let (m, n, k) =
                        (parse_idx(fields[1])?, parse_idx(fields[2])?, parse_idx(fields[3])?);
                    topo.user_positions[m][n][k] = Vec2::new(x, y);
                    topo.user_velocities[m][n][k] = Vec2::ZERO;
                    topo.user_travel_since_los[m][n][k] = 0.0;
                }
                other => {
                    return Err(TopologyError::ParseError {
                        line: idx + 1,
                        reason: format!("unknown role {other:?}"),
                    })
                }
            }
        }
        Ok(topo)
    }
}
