//! Strategic-guidance pipeline: integrate per-SBS statistics, validate them,
//! build the structured prompt, query a chat endpoint (or the deterministic
//! heuristic stand-in), parse and verify the returned allocation, and fall
//! back to the uniform policy on any failure.

mod client;
mod parse;
mod prompt;

pub use client::{request_guidance, LlmClient, LlmEndpointConfig};
pub use parse::{parse_guidance, serialize_policy, ParseError};
pub use prompt::build_prompt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::topology::NetworkConfig;

/// Simplex tolerance shared by actions and guidance rows.
pub const SIMPLEX_TOL: f64 = 1e-6;

/// Parsed rows whose sum falls in this band are renormalized; anything
/// outside routes to fallback.
pub const ROW_SUM_ACCEPT_MIN: f64 = 0.98;
pub const ROW_SUM_ACCEPT_MAX: f64 = 1.02;

/// Plausible linear channel-gain band for input validation (-150..-30 dB).
pub const GAIN_PLAUSIBLE_MIN: f64 = 1e-15;
pub const GAIN_PLAUSIBLE_MAX: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum GuidanceError {
    #[error("input validation failed: {0}")]
    InvalidInput(RejectionReport),
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned status {0}")]
    HttpStatus(u16),
    #[error("endpoint returned an empty completion")]
    EmptyCompletion,
    #[error("completion missing message content")]
    MissingContent,
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("policy has wrong shape: expected {expected_m}x{expected_n}, got {got_m}x{got_n}")]
    WrongShape {
        expected_m: usize,
        expected_n: usize,
        got_m: usize,
        got_n: usize,
    },
    #[error("policy row {row} is off the simplex (sum {sum})")]
    OffSimplex { row: usize, sum: f64 },
}

/// Averaged interference seen by one SBS from one same-sub-carrier source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceEntry {
    /// (MBS index, SBS index) of the interfering transmitter, 0-based.
    pub source: (usize, usize),
    pub avg_gain: f64,
}

/// Windowed statistics for one SBS, exactly the fields the prompt consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbsStats {
    pub avg_channel_gain: f64,
    pub connected_users: i64,
    pub avg_expected_rate_mbps: f64,
    pub interference: Vec<InterferenceEntry>,
}

/// Per-(m,n) statistics handed from the environment to the guidance pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceInput {
    pub num_mbs: usize,
    pub num_sbs_per_mbs: usize,
    /// Indexed `[m][n]`.
    pub stats: Vec<Vec<SbsStats>>,
}

/// The per-MBS power-ratio guidance; each row lives on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidancePolicy {
    pub allocation: Vec<Vec<f64>>,
}

impl GuidancePolicy {
    pub fn uniform(num_mbs: usize, num_sbs: usize) -> Self {
        Self {
            allocation: vec![vec![1.0 / num_sbs as f64; num_sbs]; num_mbs],
        }
    }

    pub fn validate(&self, num_mbs: usize, num_sbs: usize) -> Result<(), GuidanceError> {
        if self.allocation.len() != num_mbs
            || self.allocation.iter().any(|row| row.len() != num_sbs)
        {
            return Err(GuidanceError::WrongShape {
                expected_m: num_mbs,
                expected_n: num_sbs,
                got_m: self.allocation.len(),
                got_n: self.allocation.first().map(|r| r.len()).unwrap_or(0),
            });
        }
        for (i, row) in self.allocation.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL
                || row.iter().any(|&v| !(0.0..=1.0).contains(&v) || !v.is_finite())
            {
                return Err(GuidanceError::OffSimplex { row: i, sum });
            }
        }
        Ok(())
    }
}

/// One named constraint violation found during input validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub violations: Vec<Violation>,
}

impl std::fmt::Display for RejectionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let fields: Vec<&str> = self.violations.iter().map(|v| v.field.as_str()).collect();
        write!(f, "{} violation(s): {}", self.violations.len(), fields.join(", "))
    }
}

/// Range validation of the integrated statistics: user counts non-negative,
/// gains inside the plausible band, rates non-negative.
pub fn validate_input(input: &GuidanceInput) -> Result<(), RejectionReport> {
    let mut report = RejectionReport::default();
    for (m, row) in input.stats.iter().enumerate() {
        for (n, s) in row.iter().enumerate() {
            let at = |field: &str| format!("stats[{m}][{n}].{field}");
            if s.connected_users < 0 {
                report.violations.push(Violation {
                    field: at("connected_users"),
                    reason: format!("must be non-negative, got {}", s.connected_users),
                });
            }
            if !(GAIN_PLAUSIBLE_MIN..=GAIN_PLAUSIBLE_MAX).contains(&s.avg_channel_gain) {
                report.violations.push(Violation {
                    field: at("avg_channel_gain"),
                    reason: format!(
                        "must lie in [{GAIN_PLAUSIBLE_MIN:e}, {GAIN_PLAUSIBLE_MAX:e}], got {:e}",
                        s.avg_channel_gain
                    ),
                });
            }
            if s.avg_expected_rate_mbps < 0.0 || !s.avg_expected_rate_mbps.is_finite() {
                report.violations.push(Violation {
                    field: at("avg_expected_rate_mbps"),
                    reason: format!("must be >= 0, got {}", s.avg_expected_rate_mbps),
                });
            }
            for (i, entry) in s.interference.iter().enumerate() {
                if entry.avg_gain <= 0.0 || !entry.avg_gain.is_finite() {
                    report.violations.push(Violation {
                        field: format!("stats[{m}][{n}].interference[{i}].avg_gain"),
                        reason: format!("must be > 0, got {}", entry.avg_gain),
                    });
                }
            }
        }
    }
    if report.violations.is_empty() {
        Ok(())
    } else {
        Err(report)
    }
}

/// Deterministic offline stand-in for the endpoint: weight each SBS by
/// users * sqrt(gain / (eps + total interference gain)), row-normalized.
pub fn heuristic_guidance(input: &GuidanceInput) -> GuidancePolicy {
    const EPS: f64 = 1e-15;
    let n = input.num_sbs_per_mbs;
    let allocation = input
        .stats
        .iter()
        .map(|row| {
            let mut weights: Vec<f64> = row
                .iter()
                .map(|s| {
                    let interference: f64 = s.interference.iter().map(|e| e.avg_gain).sum();
                    s.connected_users.max(0) as f64
                        * (s.avg_channel_gain / (EPS + interference)).sqrt()
                })
                .collect();
            let sum: f64 = weights.iter().sum();
            if sum <= 0.0 || !sum.is_finite() {
                weights = vec![1.0 / n as f64; n];
            } else {
                for w in &mut weights {
                    *w /= sum;
                }
            }
            weights
        })
        .collect();
    GuidancePolicy { allocation }
}

/// Anything that can turn a prompt into completion text.
pub trait CompletionProvider {
    fn complete(&self, prompt: &str) -> Result<String, GuidanceError>;
}

/// How the final policy was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GuidancePath {
    Parsed,
    Heuristic,
    FallbackValidation(String),
    FallbackRequest(String),
    FallbackParse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceOutcome {
    pub policy: GuidancePolicy,
    pub fallback: bool,
    pub path: GuidancePath,
    pub prompt_sha256: Option<String>,
    pub raw_response: Option<String>,
}

fn fallback_outcome(config: &NetworkConfig, path: GuidancePath, prompt_hash: Option<String>, raw: Option<String>) -> GuidanceOutcome {
    GuidanceOutcome {
        policy: GuidancePolicy::uniform(config.num_mbs, config.num_sbs_per_mbs),
        fallback: true,
        path,
        prompt_sha256: prompt_hash,
        raw_response: raw,
    }
}

pub fn sha256_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// The full rApp cycle: validate, prompt, request, parse, verify. Total by
/// construction; any failure yields the uniform policy and records why.
pub fn guidance_with_fallback(
    input: &GuidanceInput,
    config: &NetworkConfig,
    provider: &dyn CompletionProvider,
) -> GuidanceOutcome {
    if let Err(report) = validate_input(input) {
        return fallback_outcome(config, GuidancePath::FallbackValidation(report.to_string()), None, None);
    }
    let prompt = build_prompt(input, config);
    let prompt_hash = Some(sha256_hex(&prompt));
    let raw = match provider.complete(&prompt) {
        Ok(text) => text,
        Err(e) => {
            return fallback_outcome(config, GuidancePath::FallbackRequest(e.to_string()), prompt_hash, None)
        }
    };
    match parse_guidance(&raw, config.num_mbs, config.num_sbs_per_mbs) {
        Ok(policy) => match policy.validate(config.num_mbs, config.num_sbs_per_mbs) {
            Ok(()) => GuidanceOutcome {
                policy,
                fallback: false,
                path: GuidancePath::Parsed,
                prompt_sha256: prompt_hash,
                raw_response: Some(raw),
            },
            Err(e) => fallback_outcome(
                config,
                GuidancePath::FallbackParse(e.to_string()),
                prompt_hash,
                Some(raw),
            ),
        },
        Err(e) => fallback_outcome(
            config,
            GuidancePath::FallbackParse(e.to_string()),
            prompt_hash,
            Some(raw),
        ),
    }
}

/// Which rApp produces guidance policies: the deterministic heuristic or a
/// chat endpoint speaking the wire protocol.
pub enum GuidanceSource {
    Heuristic,
    Endpoint(LlmClient),
}

impl GuidanceSource {
    /// Produce a policy for the given statistics; total, like the pipeline.
    pub fn policy(&self, input: &GuidanceInput, config: &NetworkConfig) -> GuidanceOutcome {
        match self {
            GuidanceSource::Heuristic => match validate_input(input) {
                Ok(()) => GuidanceOutcome {
                    policy: heuristic_guidance(input),
                    fallback: false,
                    path: GuidancePath::Heuristic,
                    prompt_sha256: None,
                    raw_response: None,
                },
                Err(report) => fallback_outcome(
                    config,
                    GuidancePath::FallbackValidation(report.to_string()),
                    None,
                    None,
                ),
            },
            GuidanceSource::Endpoint(client) => guidance_with_fallback(input, config, client),
        }
    }
}

/// One line of the guidance audit log (line-delimited JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuidanceAuditRecord {
    pub timestamp_unix_ms: u128,
    pub prompt_sha256: Option<String>,
    pub raw_response: Option<String>,
    pub parse_outcome: String,
    pub fallback: bool,
}

impl GuidanceAuditRecord {
    pub fn from_outcome(outcome: &GuidanceOutcome) -> Self {
        let timestamp_unix_ms = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        Self {
            timestamp_unix_ms,
            prompt_sha256: outcome.prompt_sha256.clone(),
            raw_response: outcome.raw_response.clone(),
            parse_outcome: format!("{:?}", outcome.path),
            fallback: outcome.fallback,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("audit record serializes")
    }
}

/// A physically plausible synthetic input, for prompt previews and tests.
pub fn synthetic_input(num_mbs: usize, num_sbs: usize) -> GuidanceInput {
    let stats = (0..num_mbs)
        .map(|m| {
            (0..num_sbs)
                .map(|n| SbsStats {
                    avg_channel_gain: 1e-9 * (1.0 + (m * num_sbs + n) as f64),
                    connected_users: 4,
                    avg_expected_rate_mbps: 12.5,
                    interference: (0..num_mbs)
                        .filter(|&m2| m2 != m)
                        .map(|m2| InterferenceEntry {
                            source: (m2, n),
                            avg_gain: 1e-12,
                        })
                        .collect(),
                })
                .collect()
        })
        .collect();
    GuidanceInput {
        num_mbs,
        num_sbs_per_mbs: num_sbs,
        stats,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Canned(Result<String, fn() -> GuidanceError>);

    impl CompletionProvider for Canned {
        fn complete(&self, _prompt: &str) -> Result<String, GuidanceError> {
            match &self.0 {
                Ok(s) => Ok(s.clone()),
                Err(f) => Err(f()),
            }
        }
    }

    #[test]
    fn validation_accepts_plausible_input() {
        let input = synthetic_input(3, 6);
        assert!(validate_input(&input).is_ok());
    }

    #[test]
    fn validation_names_negative_users() {
        let mut input = synthetic_input(2, 3);
        input.stats[1][2].connected_users = -1;
        let report = validate_input(&input).unwrap_err();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].field, "stats[1][2].connected_users");
    }

    #[test]
    fn validation_rejects_implausible_gain() {
        let mut input = synthetic_input(1, 2);
        input.stats[0][0].avg_channel_gain = 1.0; // 0 dB: far above the band
        let report = validate_input(&input).unwrap_err();
        assert!(report.violations[0].field.contains("avg_channel_gain"));
    }

    #[test]
    fn heuristic_uniform_on_identical_stats() {
        let mut input = synthetic_input(1, 4);
        for s in &mut input.stats[0] {
            s.avg_channel_gain = 1e-9;
        }
        let policy = heuristic_guidance(&input);
        for v in &policy.allocation[0] {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn heuristic_zero_users_gets_zero_weight() {
        let mut input = synthetic_input(1, 3);
        for s in &mut input.stats[0] {
            s.avg_channel_gain = 1e-9;
        }
        input.stats[0][1].connected_users = 0;
        let policy = heuristic_guidance(&input);
        assert_eq!(policy.allocation[0][1], 0.0);
        let sum: f64 = policy.allocation[0].iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn heuristic_user_ratio() {
        let mut input = synthetic_input(1, 2);
        for s in &mut input.stats[0] {
            s.avg_channel_gain = 1e-9;
        }
        input.stats[0][0].connected_users = 1;
        input.stats[0][1].connected_users = 4;
        let policy = heuristic_guidance(&input);
        assert!((policy.allocation[0][0] - 0.2).abs() < 1e-12);
        assert!((policy.allocation[0][1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn heuristic_scale_invariant_in_users() {
        let mut input = synthetic_input(2, 4);
        let base = heuristic_guidance(&input);
        for row in &mut input.stats {
            for s in row {
                s.connected_users *= 7;
            }
        }
        let scaled = heuristic_guidance(&input);
        for (a, b) in base
            .allocation
            .iter()
            .flatten()
            .zip(scaled.allocation.iter().flatten())
        {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fallback_on_failing_provider() {
        let cfg = NetworkConfig::default();
        let input = synthetic_input(cfg.num_mbs, cfg.num_sbs_per_mbs);
        let out = guidance_with_fallback(&input, &cfg, &Canned(Err(|| GuidanceError::Timeout)));
        assert!(out.fallback);
        for row in &out.policy.allocation {
            for v in row {
                assert!((v - 1.0 / 6.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fallback_on_malformed_text() {
        let cfg = NetworkConfig::default();
        let input = synthetic_input(cfg.num_mbs, cfg.num_sbs_per_mbs);
        let out = guidance_with_fallback(&input, &cfg, &Canned(Ok("no allocations here".into())));
        assert!(out.fallback);
        assert!(matches!(out.path, GuidancePath::FallbackParse(_)));
    }

    #[test]
    fn parsed_path_on_valid_text() {
        let cfg = NetworkConfig {
            num_mbs: 1,
            ..NetworkConfig::default()
        };
        let input = synthetic_input(1, 6);
        let text = "Sure, here is my allocation.\nMBS1: [0.1, 0.1, 0.2, 0.2, 0.2, 0.2]\n";
        let out = guidance_with_fallback(&input, &cfg, &Canned(Ok(text.into())));
        assert!(!out.fallback);
        assert_eq!(out.policy.allocation[0], vec![0.1, 0.1, 0.2, 0.2, 0.2, 0.2]);
    }

    #[test]
    fn invalid_input_skips_the_provider() {
        struct Panicky;
        impl CompletionProvider for Panicky {
            fn complete(&self, _: &str) -> Result<String, GuidanceError> {
                panic!("provider must not be called on invalid input");
            }
        }
        let cfg = NetworkConfig::default();
        let mut input = synthetic_input(cfg.num_mbs, cfg.num_sbs_per_mbs);
        input.stats[0][0].connected_users = -3;
        let out = guidance_with_fallback(&input, &cfg, &Panicky);
        assert!(out.fallback);
        assert!(matches!(out.path, GuidancePath::FallbackValidation(_)));
    }

    #[test]
    fn audit_record_serializes() {
        let cfg = NetworkConfig::default();
        let input = synthetic_input(cfg.num_mbs, cfg.num_sbs_per_mbs);
        let out = guidance_with_fallback(&input, &cfg, &Canned(Ok("junk".into())));
        let line = GuidanceAuditRecord::from_outcome(&out).to_json_line();
        let parsed: GuidanceAuditRecord = serde_json::from_str(&line).unwrap();
        assert!(parsed.fallback);
    }
}
