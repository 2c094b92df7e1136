//! Desk-scale laboratory for LLM-guided power allocation in integrated
//! access and backhaul (IAB) networks.
//!
//! The library is organized around the control loop it emulates:
//!
//! - [`channel`] / [`topology`]: link-level math and network geometry.
//! - [`env`]: the multi-cell MDP (states, simplex actions, throughput, reward).
//! - [`guidance`]: the strategic-guidance pipeline (prompt, endpoint client,
//!   parse, verify, fallback) plus a deterministic heuristic stand-in.
//! - [`agent`]: a from-scratch DDPG learner with hand-derived gradients.
//! - [`trainer`]: the three-phase guidance-assisted training procedure and
//!   the baseline exploration schedules.
//! - [`harness`]: experiment configuration and CSV/manifest emission behind
//!   the CLI.

pub mod agent;
pub mod channel;
pub mod env;
pub mod guidance;
pub mod harness;
pub mod topology;
pub mod trainer;
