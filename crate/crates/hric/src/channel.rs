//! Link-level math: LoS probability, log-distance path loss, Nakagami-m
//! small-scale fading, thermal noise, and the Shannon rate.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum link distance in meters; shorter links are clamped so the
/// path-loss gain stays bounded.
pub const MIN_LINK_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("distance must be non-negative, got {0}")]
    NegativeDistance(f64),
    #[error("LoS range constant must be positive, got {0}")]
    NonPositiveRange(f64),
    #[error("Nakagami shape must be >= 0.5, got {0}")]
    InvalidShape(f64),
    #[error("mean power must be positive, got {0}")]
    NonPositiveMeanPower(f64),
    #[error("{name} must be non-negative, got {value}")]
    NegativePower { name: &'static str, value: f64 },
    #[error("noise power must be positive, got {0}")]
    NonPositiveNoise(f64),
    #[error("invalid channel parameters: {0}")]
    InvalidParams(String),
}

/// Large-scale and fading constants shared by every link in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// LoS range constant rho in meters; P_los(d) = exp(-d/rho).
    pub los_range_constant_rho: f64,
    pub pathloss_exponent_los: f64,
    pub pathloss_exponent_nlos: f64,
    /// Reference loss at 1 m, in dB.
    pub reference_loss_db: f64,
    /// Nakagami shape for LoS links; NLoS links use `nakagami_shape_m_nlos`.
    pub nakagami_shape_m_los: f64,
    pub nakagami_shape_m_nlos: f64,
    pub noise_density_dbm_per_hz: f64,
    pub noise_figure_db: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            los_range_constant_rho: 150.0,
            pathloss_exponent_los: 2.0,
            pathloss_exponent_nlos: 3.5,
            reference_loss_db: 30.0,
            nakagami_shape_m_los: 3.0,
            nakagami_shape_m_nlos: 1.0,
            noise_density_dbm_per_hz: -174.0,
            noise_figure_db: 7.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.los_range_constant_rho <= 0.0 {
            return Err(ChannelError::InvalidParams(format!(
                "los_range_constant_rho must be > 0, got {}",
                self.los_range_constant_rho
            )));
        }
        if self.nakagami_shape_m_los < 0.5 || self.nakagami_shape_m_nlos < 0.5 {
            return Err(ChannelError::InvalidParams(format!(
                "nakagami shapes must be >= 0.5, got los={} nlos={}",
                self.nakagami_shape_m_los, self.nakagami_shape_m_nlos
            )));
        }
        if self.pathloss_exponent_nlos < self.pathloss_exponent_los {
            return Err(ChannelError::InvalidParams(format!(
                "NLoS exponent {} must be >= LoS exponent {}",
                self.pathloss_exponent_nlos, self.pathloss_exponent_los
            )));
        }
        Ok(())
    }

    pub fn nakagami_shape(&self, is_los: bool) -> f64 {
        if is_los {
            self.nakagami_shape_m_los
        } else {
            self.nakagami_shape_m_nlos
        }
    }

    /// Thermal noise power over `bandwidth_hz`, noise figure included.
    pub fn noise_watts(&self, bandwidth_hz: f64) -> f64 {
        dbm_to_watts(self.noise_density_dbm_per_hz + self.noise_figure_db) * bandwidth_hz
    }
}

/// One link's channel state: slowly-varying geometry gain and a per-slot
/// fading draw, kept separate so averages can swap fading for its mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGain {
    pub large_scale_gain_linear: f64,
    pub fading_gain_linear: f64,
    pub is_los: bool,
}

impl LinkGain {
    pub fn combined(&self) -> f64 {
        self.large_scale_gain_linear * self.fading_gain_linear
    }
}

/// P_los = exp(-d/rho).
pub fn los_probability(d: f64, rho: f64) -> Result<f64, ChannelError> {
    if d < 0.0 {
        return Err(ChannelError::NegativeDistance(d));
    }
    if rho <= 0.0 {
        return Err(ChannelError::NonPositiveRange(rho));
    }
    Ok((-d / rho).exp())
}

/// Log-distance path loss as a linear power gain; `d` is clamped to
/// [`MIN_LINK_DISTANCE_M`].
pub fn path_loss_gain(d: f64, is_los: bool, params: &ChannelParams) -> f64 {
    let d = d.max(MIN_LINK_DISTANCE_M);
    let exponent = if is_los {
        params.pathloss_exponent_los
    } else {
        params.pathloss_exponent_nlos
    };
    let gain_db = -(params.reference_loss_db + 10.0 * exponent * d.log10());
    10f64.powf(gain_db / 10.0)
}

/// One draw of the Nakagami-m squared-envelope (power) gain: Gamma with
/// shape m and scale omega/m, so E[g] = omega and Var[g] = omega^2/m.
pub fn sample_nakagami_power<R: Rng + ?Sized>(
    shape_m: f64,
    mean_omega: f64,
    rng: &mut R,
) -> Result<f64, ChannelError> {
    if shape_m < 0.5 || !shape_m.is_finite() {
        return Err(ChannelError::InvalidShape(shape_m));
    }
    if mean_omega <= 0.0 || !mean_omega.is_finite() {
        return Err(ChannelError::NonPositiveMeanPower(mean_omega));
    }
    let gamma = Gamma::new(shape_m, mean_omega / shape_m)
        .map_err(|e| ChannelError::InvalidParams(e.to_string()))?;
    Ok(gamma.sample(rng))
}

/// Shannon rate in bits/s: B * log2(1 + S / (I + N)).
pub fn shannon_rate(
    bandwidth_hz: f64,
    signal_w: f64,
    interference_w: f64,
    noise_w: f64,
) -> Result<f64, ChannelError> {
    for (name, value) in [
        ("bandwidth", bandwidth_hz),
        ("signal", signal_w),
        ("interference", interference_w),
    ] {
        if value < 0.0 {
            return Err(ChannelError::NegativePower { name, value });
        }
    }
    if noise_w <= 0.0 {
        return Err(ChannelError::NonPositiveNoise(noise_w));
    }
    Ok(bandwidth_hz * (1.0 + signal_w / (interference_w + noise_w)).log2())
}

pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}
