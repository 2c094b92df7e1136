//! The multi-cell MDP: per-MBS observations, simplex power actions,
//! backhaul/access Shannon rates, min-coupled throughput, and the
//! local-plus-global reward.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{dbm_to_watts, path_loss_gain, sample_nakagami_power, shannon_rate, LinkGain};
use crate::guidance::{GuidanceInput, GuidancePolicy, InterferenceEntry, SbsStats, SIMPLEX_TOL};
use crate::topology::{advance_users, build_topology, NetworkConfig, Topology, TopologyError};

/// Slots of guidance statistics retained for windowed averaging.
const STATS_HISTORY_CAP: usize = 128;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Config(#[from] TopologyError),
    #[error("expected {expected} actions, got {got}")]
    WrongActionCount { expected: usize, got: usize },
    #[error("action {m} has {got} entries, expected {expected}")]
    WrongActionArity { m: usize, expected: usize, got: usize },
    #[error("action {m} is off the simplex (sum {sum})")]
    ActionOffSimplex { m: usize, sum: f64 },
    #[error("guidance policy rejected: {0}")]
    BadGuidance(String),
}

/// The RL state of one MBS: serving backhaul gains, users per SBS, average
/// expected per-user rates, and the installed guidance row.
#[derive(Debug, Clone, PartialEq)]
pub struct MbsObservation {
    pub backhaul_gains_h: Vec<f64>,
    pub user_counts_n: Vec<usize>,
    pub avg_user_rate_r: Vec<f64>,
    pub guidance_p_o: Vec<f64>,
}

impl MbsObservation {
    /// Flatten to the 4N network input, normalized to O(1) ranges: gains as
    /// shifted dB, counts relative to K, rates relative to 5 bit/s/Hz of
    /// per-user access bandwidth, guidance as-is.
    pub fn flatten(&self, config: &NetworkConfig) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * self.backhaul_gains_h.len());
        for &g in &self.backhaul_gains_h {
            out.push((10.0 * g.max(1e-18).log10() + 150.0) / 120.0);
        }
        for &c in &self.user_counts_n {
            out.push(c as f64 / config.users_per_sbs as f64);
        }
        let rate_scale = 5.0 * config.access_bandwidth_hz();
        for &r in &self.avg_user_rate_r {
            out.push(if rate_scale > 0.0 { r / rate_scale } else { 0.0 });
        }
        out.extend_from_slice(&self.guidance_p_o);
        out
    }
}

/// A power-ratio allocation over one MBS's SBSs; must lie on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub power_ratios: Vec<f64>,
}

impl Action {
    pub fn uniform(n: usize) -> Self {
        Self {
            power_ratios: vec![1.0 / n as f64; n],
        }
    }

    pub fn validate(&self, m: usize, n: usize) -> Result<(), EnvError> {
        if self.power_ratios.len() != n {
            return Err(EnvError::WrongActionArity {
                m,
                expected: n,
                got: self.power_ratios.len(),
            });
        }
        let sum: f64 = self.power_ratios.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL
            || self
                .power_ratios
                .iter()
                .any(|&v| !v.is_finite() || v < -SIMPLEX_TOL || v > 1.0 + SIMPLEX_TOL)
        {
            return Err(EnvError::ActionOffSimplex { m, sum });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub per_mbs_throughput: Vec<f64>,
    pub total_throughput: f64,
    pub next_observations: Vec<MbsObservation>,
    pub per_sbs_backhaul_rate: Vec<Vec<f64>>,
    pub per_sbs_access_sum: Vec<Vec<f64>>,
}

/// Per-slot linear channel gains. `backhaul[m][n][m2]` is the link from MBS
/// `m2` to SBS (m,n); `access[m][n][k][m2]` is the link from SBS (m2,n) to
/// user (m,n,k). The serving link sits at `m2 == m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSnapshot {
    pub backhaul: Vec<Vec<Vec<LinkGain>>>,
    pub access: Vec<Vec<Vec<Vec<LinkGain>>>>,
}

/// Large-scale (mean-fading) statistics of one slot, kept for guidance.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SlotStats {
    /// `[m][n][m2]` large-scale backhaul gain, fading at its mean.
    backhaul_large_scale: Vec<Vec<Vec<f64>>>,
    /// `[m][n]` expected per-user access rate, fading at its mean.
    expected_user_rate: Vec<Vec<f64>>,
}

pub struct Env {
    config: NetworkConfig,
    topology: Topology,
    snapshot: ChannelSnapshot,
    guidance: GuidancePolicy,
    rng: ChaCha8Rng,
    slot: u64,
    history: VecDeque<SlotStats>,
}

fn rate_or_zero(bandwidth: f64, signal: f64, interference: f64, noise: f64) -> f64 {
    if bandwidth <= 0.0 {
        return 0.0;
    }
    shannon_rate(bandwidth, signal, interference, noise).expect("rate inputs are non-negative")
}

impl Env {
    pub fn reset(config: NetworkConfig, seed: u64) -> Result<(Self, Vec<MbsObservation>), EnvError> {
        config.validate()?;
        let topology = build_topology(&config, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1));
        let snapshot = sample_snapshot(&config, &topology, &mut rng);
        let guidance = GuidancePolicy::uniform(config.num_mbs, config.num_sbs_per_mbs);
        let mut env = Self {
            config,
            topology,
            snapshot,
            guidance,
            rng,
            slot: 0,
            history: VecDeque::new(),
        };
        env.push_slot_stats();
        let obs = env.observations();
        Ok((env, obs))
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn snapshot(&self) -> &ChannelSnapshot {
        &self.snapshot
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn guidance(&self) -> &GuidancePolicy {
        &self.guidance
    }

    /// Install a new guidance policy; it appears in every subsequent
    /// observation until replaced.
    pub fn install_guidance(&mut self, policy: GuidancePolicy) -> Result<(), EnvError> {
        policy
            .validate(self.config.num_mbs, self.config.num_sbs_per_mbs)
            .map_err(|e| EnvError::BadGuidance(e.to_string()))?;
        self.guidance = policy;
        Ok(())
    }

    /// Rate of the backhaul link MBS m -> SBS (m,n) under the given actions.
    pub fn backhaul_rate(&self, m: usize, n: usize, actions: &[Action]) -> f64 {
        let cfg = &self.config;
        let bw = cfg.backhaul_bandwidth_hz();
        if bw <= 0.0 {
            return 0.0;
        }
        let p_max = dbm_to_watts(cfg.mbs_max_power_dbm);
        let signal = p_max * actions[m].power_ratios[n] * self.snapshot.backhaul[m][n][m].combined();
        let mut interference = 0.0;
        if cfg.backhaul_interference {
            for m2 in 0..cfg.num_mbs {
                if m2 != m {
                    interference +=
                        p_max * actions[m2].power_ratios[n] * self.snapshot.backhaul[m][n][m2].combined();
                }
            }
        }
        rate_or_zero(bw, signal, interference, cfg.channel.noise_watts(bw))
    }

    /// Access rates of the K users of SBS (m,n) at the fixed SBS power.
    pub fn access_rates(&self, m: usize, n: usize) -> Vec<f64> {
        let cfg = &self.config;
        let bw = cfg.access_bandwidth_hz();
        if bw <= 0.0 {
            return vec![0.0; cfg.users_per_sbs];
        }
        let p_sbs = dbm_to_watts(cfg.sbs_access_power_dbm);
        let noise = cfg.channel.noise_watts(bw);
        (0..cfg.users_per_sbs)
            .map(|k| {
                let signal = p_sbs * self.snapshot.access[m][n][k][m].combined();
                let mut interference = 0.0;
                if cfg.access_interference {
                    for m2 in 0..cfg.num_mbs {
                        if m2 != m {
                            interference += p_sbs * self.snapshot.access[m][n][k][m2].combined();
                        }
                    }
                }
                rate_or_zero(bw, signal, interference, noise)
            })
            .collect()
    }

    /// Apply one slot of actions: compute all rates and rewards from the
    /// current snapshot, then advance mobility and re-sample fading.
    pub fn step(&mut self, actions: &[Action]) -> Result<StepOutcome, EnvError> {
        let cfg = &self.config;
        if actions.len() != cfg.num_mbs {
            return Err(EnvError::WrongActionCount {
                expected: cfg.num_mbs,
                got: actions.len(),
            });
        }
        for (m, action) in actions.iter().enumerate() {
            action.validate(m, cfg.num_sbs_per_mbs)?;
        }

        let m_count = cfg.num_mbs;
        let n_count = cfg.num_sbs_per_mbs;
        let mut per_sbs_backhaul_rate = vec![vec![0.0; n_count]; m_count];
        let mut per_sbs_access_sum = vec![vec![0.0; n_count]; m_count];
        let mut per_mbs_throughput = vec![0.0; m_count];
        for m in 0..m_count {
            for n in 0..n_count {
                let rb = self.backhaul_rate(m, n, actions);
                let ra: f64 = self.access_rates(m, n).iter().sum();
                per_sbs_backhaul_rate[m][n] = rb;
                per_sbs_access_sum[m][n] = ra;
                per_mbs_throughput[m] += rb.min(ra);
            }
        }
        let total_throughput: f64 = per_mbs_throughput.iter().sum();

        let w = cfg.total_bandwidth_hz;
        let r_global = total_throughput / (m_count as f64 * w);
        let rewards: Vec<f64> = per_mbs_throughput
            .iter()
            .map(|&t| t / w + r_global)
            .collect();

        advance_users(&mut self.topology, &self.config, &mut self.rng);
        self.snapshot = sample_snapshot(&self.config, &self.topology, &mut self.rng);
        self.slot += 1;
        self.push_slot_stats();

        Ok(StepOutcome {
            rewards,
            per_mbs_throughput,
            total_throughput,
            next_observations: self.observations(),
            per_sbs_backhaul_rate,
            per_sbs_access_sum,
        })
    }

    /// Current per-MBS observations from the live snapshot.
    pub fn observations(&self) -> Vec<MbsObservation> {
        let cfg = &self.config;
        (0..cfg.num_mbs)
            .map(|m| MbsObservation {
                backhaul_gains_h: (0..cfg.num_sbs_per_mbs)
                    .map(|n| self.snapshot.backhaul[m][n][m].combined())
                    .collect(),
                user_counts_n: vec![cfg.users_per_sbs; cfg.num_sbs_per_mbs],
                avg_user_rate_r: (0..cfg.num_sbs_per_mbs)
                    .map(|n| self.expected_user_rate(m, n))
                    .collect(),
                guidance_p_o: self.guidance.allocation[m].clone(),
            })
            .collect()
    }

    /// Expected per-user access rate of SBS (m,n) with fading replaced by
    /// its mean (omega = 1), averaged over the SBS's users.
    fn expected_user_rate(&self, m: usize, n: usize) -> f64 {
        let cfg = &self.config;
        let bw = cfg.access_bandwidth_hz();
        if bw <= 0.0 {
            return 0.0;
        }
        let p_sbs = dbm_to_watts(cfg.sbs_access_power_dbm);
        let noise = cfg.channel.noise_watts(bw);
        let sum: f64 = (0..cfg.users_per_sbs)
            .map(|k| {
                let signal = p_sbs * self.snapshot.access[m][n][k][m].large_scale_gain_linear;
                let mut interference = 0.0;
                if cfg.access_interference {
                    for m2 in 0..cfg.num_mbs {
                        if m2 != m {
                            interference +=
                                p_sbs * self.snapshot.access[m][n][k][m2].large_scale_gain_linear;
                        }
                    }
                }
                rate_or_zero(bw, signal, interference, noise)
            })
            .sum();
        sum / cfg.users_per_sbs as f64
    }

    fn push_slot_stats(&mut self) {
        let cfg = &self.config;
        let backhaul_large_scale = (0..cfg.num_mbs)
            .map(|m| {
                (0..cfg.num_sbs_per_mbs)
                    .map(|n| {
                        (0..cfg.num_mbs)
                            .map(|m2| self.snapshot.backhaul[m][n][m2].large_scale_gain_linear)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let expected_user_rate = (0..cfg.num_mbs)
            .map(|m| {
                (0..cfg.num_sbs_per_mbs)
                    .map(|n| self.expected_user_rate(m, n))
                    .collect()
            })
            .collect();
        if self.history.len() == STATS_HISTORY_CAP {
            self.history.pop_front();
        }
        self.history.push_back(SlotStats {
            backhaul_large_scale,
            expected_user_rate,
        });
    }

    /// Windowed guidance statistics: average serving gain with fading at its
    /// mean, user counts, average expected per-user rate, and the averaged
    /// interference-source gains, over the last `window` slots.
    pub fn observation_statistics(&self, window: usize) -> GuidanceInput {
        let cfg = &self.config;
        let take = window.clamp(1, self.history.len());
        let slots: Vec<&SlotStats> = self.history.iter().rev().take(take).collect();
        let count = slots.len() as f64;
        let stats = (0..cfg.num_mbs)
            .map(|m| {
                (0..cfg.num_sbs_per_mbs)
                    .map(|n| {
                        let avg_gain = slots
                            .iter()
                            .map(|s| s.backhaul_large_scale[m][n][m])
                            .sum::<f64>()
                            / count;
                        let avg_rate = slots
                            .iter()
                            .map(|s| s.expected_user_rate[m][n])
                            .sum::<f64>()
                            / count;
                        let interference = (0..cfg.num_mbs)
                            .filter(|&m2| m2 != m)
                            .map(|m2| InterferenceEntry {
                                source: (m2, n),
                                avg_gain: slots
                                    .iter()
                                    .map(|s| s.backhaul_large_scale[m][n][m2])
                                    .sum::<f64>()
                                    / count,
                            })
                            .collect();
                        SbsStats {
                            avg_channel_gain: avg_gain,
                            connected_users: cfg.users_per_sbs as i64,
                            avg_expected_rate_mbps: avg_rate / 1e6,
                            interference,
                        }
                    })
                    .collect()
            })
            .collect();
        GuidanceInput {
            num_mbs: cfg.num_mbs,
            num_sbs_per_mbs: cfg.num_sbs_per_mbs,
            stats,
        }
    }

    /// Test hook: replace every fading draw with its mean so rates become a
    /// deterministic function of geometry.
    pub fn set_unit_fading(&mut self) {
        for link in self
            .snapshot
            .backhaul
            .iter_mut()
            .flatten()
            .flatten()
            .chain(self.snapshot.access.iter_mut().flatten().flatten().flatten())
        {
            link.fading_gain_linear = 1.0;
        }
    }
}

fn sample_snapshot(config: &NetworkConfig, topology: &Topology, rng: &mut ChaCha8Rng) -> ChannelSnapshot {
    let (m_count, n_count, k_count) = (
        config.num_mbs,
        config.num_sbs_per_mbs,
        config.users_per_sbs,
    );
    let params = &config.channel;
    let mut backhaul = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let mut by_n = Vec::with_capacity(n_count);
        for n in 0..n_count {
            let by_m2: Vec<LinkGain> = (0..m_count)
                .map(|m2| {
                    let d = topology.mbs_positions[m2].distance(&topology.sbs_positions[m][n]);
                    let is_los = topology.backhaul_los[m][n][m2];
                    LinkGain {
                        large_scale_gain_linear: path_loss_gain(d, is_los, params),
                        fading_gain_linear: sample_nakagami_power(
                            params.nakagami_shape(is_los),
                            1.0,
                            rng,
                        )
                        .expect("validated fading params"),
                        is_los,
                    }
                })
                .collect();
            by_n.push(by_m2);
        }
        backhaul.push(by_n);
    }

    let mut access = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let mut by_n = Vec::with_capacity(n_count);
        for n in 0..n_count {
            let mut by_k = Vec::with_capacity(k_count);
            for k in 0..k_count {
                let by_m2: Vec<LinkGain> = (0..m_count)
                    .map(|m2| {
                        let d = topology.sbs_positions[m2][n]
                            .distance(&topology.user_positions[m][n][k]);
                        let is_los = topology.access_los[m][n][k][m2];
                        LinkGain {
                            large_scale_gain_linear: path_loss_gain(d, is_los, params),
                            fading_gain_linear: sample_nakagami_power(
                                params.nakagami_shape(is_los),
                                1.0,
                                rng,
                            )
                            .expect("validated fading params"),
                            is_los,
                        }
                    })
                    .collect();
                by_k.push(by_m2);
            }
            by_n.push(by_k);
        }
        access.push(by_n);
    }
    ChannelSnapshot { backhaul, access }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::shannon_rate;

    fn tiny_config(m: usize, n: usize, k: usize) -> NetworkConfig {
        NetworkConfig {
            num_mbs: m,
            num_sbs_per_mbs: n,
            users_per_sbs: k,
            ..NetworkConfig::default()
        }
    }

    /// Straight-from-formula recomputation of the slot throughput, written
    /// against the snapshot and config only; independent of Env's rate path.
    fn oracle_throughput(env: &Env, actions: &[Action]) -> (Vec<f64>, f64) {
        let cfg = env.config();
        let snap = env.snapshot();
        let w = cfg.total_bandwidth_hz;
        let n_count = cfg.num_sbs_per_mbs as f64;
        let k_count = cfg.users_per_sbs as f64;
        let bb = w * cfg.backhaul_fraction_alpha / n_count;
        let ba = w * (1.0 - cfg.backhaul_fraction_alpha) / (n_count * k_count);
        let p_max = dbm_to_watts(cfg.mbs_max_power_dbm);
        let p_sbs = dbm_to_watts(cfg.sbs_access_power_dbm);
        let mut per_mbs = vec![0.0; cfg.num_mbs];
        for m in 0..cfg.num_mbs {
            for n in 0..cfg.num_sbs_per_mbs {
                let s = p_max * actions[m].power_ratios[n] * snap.backhaul[m][n][m].combined();
                let i: f64 = (0..cfg.num_mbs)
                    .filter(|&m2| m2 != m)
                    .map(|m2| p_max * actions[m2].power_ratios[n] * snap.backhaul[m][n][m2].combined())
                    .sum();
                let rb = if bb > 0.0 {
                    shannon_rate(bb, s, i, cfg.channel.noise_watts(bb)).unwrap()
                } else {
                    0.0
                };
                let ra: f64 = (0..cfg.users_per_sbs)
                    .map(|k| {
                        let s = p_sbs * snap.access[m][n][k][m].combined();
                        let i: f64 = (0..cfg.num_mbs)
                            .filter(|&m2| m2 != m)
                            .map(|m2| p_sbs * snap.access[m][n][k][m2].combined())
                            .sum();
                        if ba > 0.0 {
                            shannon_rate(ba, s, i, cfg.channel.noise_watts(ba)).unwrap()
                        } else {
                            0.0
                        }
                    })
                    .sum();
                per_mbs[m] += rb.min(ra);
            }
        }
        let total = per_mbs.iter().sum();
        (per_mbs, total)
    }

    #[test]
    fn reset_is_deterministic() {
        let cfg = tiny_config(3, 6, 2);
        let (_, a) = Env::reset(cfg.clone(), 5).unwrap();
        let (_, b) = Env::reset(cfg, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn observation_shape_and_uniform_guidance() {
        let cfg = tiny_config(3, 6, 2);
        let (_, obs) = Env::reset(cfg.clone(), 0).unwrap();
        assert_eq!(obs.len(), 3);
        for o in &obs {
            assert_eq!(o.flatten(&cfg).len(), 24);
            for &p in &o.guidance_p_o {
                assert!((p - 1.0 / 6.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_power_zero_backhaul_rate() {
        let cfg = tiny_config(1, 2, 1);
        let (env, _) = Env::reset(cfg, 3).unwrap();
        let actions = vec![Action {
            power_ratios: vec![0.0, 1.0],
        }];
        assert_eq!(env.backhaul_rate(0, 0, &actions), 0.0);
        assert!(env.backhaul_rate(0, 1, &actions) > 0.0);
    }

    #[test]
    fn single_cell_backhaul_matches_interference_free_shannon() {
        let cfg = tiny_config(1, 2, 1);
        let (env, _) = Env::reset(cfg.clone(), 7).unwrap();
        let actions = vec![Action::uniform(2)];
        let bw = cfg.backhaul_bandwidth_hz();
        let signal =
            dbm_to_watts(cfg.mbs_max_power_dbm) * 0.5 * env.snapshot().backhaul[0][0][0].combined();
        let expected = shannon_rate(bw, signal, 0.0, cfg.channel.noise_watts(bw)).unwrap();
        assert!((env.backhaul_rate(0, 0, &actions) - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn symmetric_gains_give_symmetric_rates() {
        let cfg = tiny_config(2, 2, 1);
        let (mut env, _) = Env::reset(cfg, 11).unwrap();
        // Force a fully symmetric channel.
        for row in env.snapshot.backhaul.iter_mut().flatten() {
            for (m2, link) in row.iter_mut().enumerate() {
                link.large_scale_gain_linear = if m2 == 0 || m2 == 1 { 1e-8 } else { 0.0 };
                link.fading_gain_linear = 1.0;
            }
        }
        let actions = vec![Action::uniform(2), Action::uniform(2)];
        assert!(
            (env.backhaul_rate(0, 0, &actions) - env.backhaul_rate(1, 0, &actions)).abs() < 1e-9
        );
    }

    #[test]
    fn step_matches_formula_oracle() {
        let cfg = tiny_config(2, 2, 1);
        let (mut env, _) = Env::reset(cfg, 21).unwrap();
        let actions = vec![
            Action {
                power_ratios: vec![0.3, 0.7],
            },
            Action {
                power_ratios: vec![0.6, 0.4],
            },
        ];
        let (oracle_per_mbs, oracle_total) = oracle_throughput(&env, &actions);
        let outcome = env.step(&actions).unwrap();
        assert!((outcome.total_throughput - oracle_total).abs() / oracle_total < 1e-12);
        for (a, b) in outcome.per_mbs_throughput.iter().zip(&oracle_per_mbs) {
            assert!((a - b).abs() / b.max(1.0) < 1e-12);
        }
    }

    #[test]
    fn reward_decomposition_shares_global_term() {
        let cfg = tiny_config(3, 4, 2);
        let (mut env, _) = Env::reset(cfg.clone(), 2).unwrap();
        let actions = vec![Action::uniform(4); 3];
        let outcome = env.step(&actions).unwrap();
        let shared: Vec<f64> = outcome
            .rewards
            .iter()
            .zip(&outcome.per_mbs_throughput)
            .map(|(r, t)| r - t / cfg.total_bandwidth_hz)
            .collect();
        for pair in shared.windows(2) {
            assert!((pair[0] - pair[1]).abs() < 1e-12);
        }
        assert!(
            (outcome.total_throughput - outcome.per_mbs_throughput.iter().sum::<f64>()).abs()
                < 1e-6
        );
    }

    #[test]
    fn single_cell_reward_double_counts_by_definition() {
        let cfg = tiny_config(1, 2, 1);
        let w = cfg.total_bandwidth_hz;
        let (mut env, _) = Env::reset(cfg, 4).unwrap();
        let outcome = env.step(&[Action::uniform(2)]).unwrap();
        let expected = 2.0 * outcome.per_mbs_throughput[0] / w;
        assert!((outcome.rewards[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn bandwidth_partition_extremes() {
        for alpha in [0.0, 1.0] {
            let cfg = NetworkConfig {
                backhaul_fraction_alpha: alpha,
                ..tiny_config(2, 2, 1)
            };
            let (mut env, _) = Env::reset(cfg, 1).unwrap();
            let outcome = env.step(&[Action::uniform(2), Action::uniform(2)]).unwrap();
            assert_eq!(outcome.total_throughput, 0.0);
            if alpha == 0.0 {
                assert!(outcome.per_sbs_backhaul_rate.iter().flatten().all(|&r| r == 0.0));
            } else {
                assert!(outcome.per_sbs_access_sum.iter().flatten().all(|&r| r == 0.0));
            }
        }
    }

    #[test]
    fn min_coupling_caps_at_backhaul() {
        let cfg = tiny_config(1, 1, 2);
        let (mut env, _) = Env::reset(cfg, 9).unwrap();
        let outcome = env.step(&[Action::uniform(1)]).unwrap();
        assert!(
            outcome.per_mbs_throughput[0]
                <= outcome.per_sbs_backhaul_rate[0][0] + 1e-9
        );
    }

    #[test]
    fn off_simplex_action_rejected() {
        let cfg = tiny_config(1, 2, 1);
        let (mut env, _) = Env::reset(cfg, 0).unwrap();
        let err = env
            .step(&[Action {
                power_ratios: vec![0.7, 0.7],
            }])
            .unwrap_err();
        assert!(matches!(err, EnvError::ActionOffSimplex { m: 0, .. }));
    }

    #[test]
    fn install_guidance_echoes_in_observations() {
        let cfg = tiny_config(1, 6, 1);
        let (mut env, _) = Env::reset(cfg, 0).unwrap();
        let row = vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0];
        env.install_guidance(GuidancePolicy {
            allocation: vec![row.clone()],
        })
        .unwrap();
        assert_eq!(env.observations()[0].guidance_p_o, row);
    }

    #[test]
    fn install_guidance_rejects_off_simplex() {
        let cfg = tiny_config(1, 2, 1);
        let (mut env, _) = Env::reset(cfg, 0).unwrap();
        let err = env
            .install_guidance(GuidancePolicy {
                allocation: vec![vec![0.4, 0.4]],
            })
            .unwrap_err();
        assert!(matches!(err, EnvError::BadGuidance(_)));
    }

    #[test]
    fn statistics_average_constant_channel() {
        let mut cfg = tiny_config(2, 2, 1);
        // Freeze mobility so large-scale gains are constant over the window.
        cfg.mobility.memory_alpha_gm = 1.0;
        cfg.mobility.speed_stddev_mps = 0.0;
        cfg.mobility.mean_speed_mps = 0.0;
        let (mut env, _) = Env::reset(cfg, 6).unwrap();
        for row in env.topology.user_velocities.iter_mut().flatten().flatten() {
            *row = crate::topology::Vec2::ZERO;
        }
        let first = env.observation_statistics(1);
        for _ in 0..5 {
            env.step(&[Action::uniform(2), Action::uniform(2)]).unwrap();
        }
        let windowed = env.observation_statistics(6);
        for (a, b) in first
            .stats
            .iter()
            .flatten()
            .zip(windowed.stats.iter().flatten())
        {
            assert!((a.avg_channel_gain - b.avg_channel_gain).abs() / a.avg_channel_gain < 1e-9);
            assert_eq!(b.interference.len(), 1);
        }
    }

    #[test]
    fn statistics_window_takes_arithmetic_mean() {
        let cfg = tiny_config(1, 1, 1);
        let (mut env, _) = Env::reset(cfg, 0).unwrap();
        let g = 2e-9;
        env.history.clear();
        for scale in [1.0, 3.0] {
            env.history.push_back(SlotStats {
                backhaul_large_scale: vec![vec![vec![g * scale]]],
                expected_user_rate: vec![vec![1e6 * scale]],
            });
        }
        let stats = env.observation_statistics(2);
        assert!((stats.stats[0][0].avg_channel_gain - 2.0 * g).abs() < 1e-24);
        assert!((stats.stats[0][0].avg_expected_rate_mbps - 2.0).abs() < 1e-9);
    }

    #[test]
    fn power_constraint_met_with_equality() {
        let cfg = tiny_config(2, 3, 1);
        let p_max = dbm_to_watts(cfg.mbs_max_power_dbm);
        let actions = vec![
            Action {
                power_ratios: vec![0.2, 0.3, 0.5],
            },
            Action::uniform(3),
        ];
        for a in &actions {
            let realized: f64 = a.power_ratios.iter().map(|p| p * p_max).sum();
            assert!((realized - p_max).abs() / p_max < 1e-6);
        }
        let (mut env, _) = Env::reset(cfg, 0).unwrap();
        env.step(&actions).unwrap();
    }
}
