//! Secure-sum protocols over a deterministic simulated ring, with an exact
//! analyzer for two-neighbor collusion.
//!
//! * [`field`]: arithmetic in `Z_M`, signed encoding, seeded streams.
//! * [`segmentation`]: additive splitting, redistribution and reshuffle.
//! * [`engine`]: party state machines for the baseline, segmented and
//!   redistributed protocols.
//! * [`simnet`]: FIFO bus, counters and JSON Lines transcripts.
//! * [`adversary`]: colluder views, elimination over `Z_M`, Monte Carlo.
//! * [`analysis`]: closed-form counts, transcript verification, sweeps.
//! * [`cli`]: the `dksum` command-line frontend.

pub mod adversary;
pub mod analysis;
pub mod cli;
pub mod engine;
pub mod exec;
pub mod field;
pub mod segmentation;
pub mod simnet;

pub use adversary::{attack, extract_view, monte_carlo_leakage, AttackVerdict, Outcome};
pub use engine::{run, run_baseline, run_dk, run_kss, ProtocolConfig, RunOutcome};
pub use exec::Execution;
pub use field::{Field, FieldElement, Seed};
pub use simnet::{Protocol, Transcript};
