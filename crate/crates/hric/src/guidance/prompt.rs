//! Structured prompt construction. The template is fixed: identical input
//! yields a byte-identical prompt.

use crate::topology::NetworkConfig;

use super::GuidanceInput;

/// First line of every prompt; also used as the system message on the wire.
pub const SYSTEM_SENTENCE: &str =
    "You are an expert in wireless communications for resource allocation.";

pub const CONSTRAINT_SENTENCE: &str =
    "Ensure the total power allocation across SBSs for each MBS sums to 1.";

fn gain_db(linear: f64) -> f64 {
    10.0 * linear.max(f64::MIN_POSITIVE).log10()
}

fn value_placeholders(n: usize) -> String {
    (1..=n).map(|i| format!("value{i}")).collect::<Vec<_>>().join(", ")
}

/// Render the guidance prompt: objective, environment description, the
/// bracketed per-SBS input lists (gains in dB with one decimal, rates in
/// Mb/s with two), and the constraint plus answer-format instruction.
pub fn build_prompt(input: &GuidanceInput, config: &NetworkConfig) -> String {
    let m_count = input.num_mbs;
    let n_count = input.num_sbs_per_mbs;
    let mut out = String::new();
    out.push_str(SYSTEM_SENTENCE);
    out.push('\n');
    out.push_str(
        "Your objective is to maximize the total network throughput by choosing the power allocation ratio of each MBS across its connected SBSs.\n",
    );
    out.push_str(&format!(
        "Here is the system description: the network has {m_count} MBSs, each serving {n_count} SBSs over wireless backhaul links. \
The maximum transmit power of each MBS is {:.1} dBm. The total bandwidth is {:.1} MHz, of which a fraction alpha = {:.2} is allocated to the backhaul links. \
SBSs with the same index at different MBSs share a sub-carrier and interfere with each other.\n",
        config.mbs_max_power_dbm,
        config.total_bandwidth_hz / 1e6,
        config.backhaul_fraction_alpha,
    ));
    out.push_str(
        "Input Format: For each MBS, you are provided with the following input data for its connected SBSs. \
Each SBS is represented as a list: [Average channel gain, number of connected users, average expected data rate of connected users (Mb/s), \
and interference: [interference source (MBS, SBS), average interference channel gain] ].\n",
    );
    for (m, row) in input.stats.iter().enumerate() {
        out.push_str(&format!("MBS{}:\n", m + 1));
        for (n, s) in row.iter().enumerate() {
            let interference = s
                .interference
                .iter()
                .map(|e| {
                    format!(
                        "[(MBS{}, SBS{}), {:.1} dB]",
                        e.source.0 + 1,
                        e.source.1 + 1,
                        gain_db(e.avg_gain)
                    )
                })
                .collect::<Vec<_>>()
                .join(", ");
            out.push_str(&format!(
                "SBS{}: [{:.1} dB, {}, {:.2}, [{}]]\n",
                n + 1,
                gain_db(s.avg_channel_gain),
                s.connected_users,
                s.avg_expected_rate_mbps,
                interference,
            ));
        }
    }
    out.push_str(&format!(
        "Constraints: {CONSTRAINT_SENTENCE} For each MBS, output the normalized power allocation ratios as a list of {n_count} values corresponding to its {n_count} SBSs. MBSX: [{}].\n",
        value_placeholders(n_count),
    ));
    out
}
