//! Closed-form message and addition counts, transcript verification
//! against them, and sweeps over the number of parties.

use std::io::{self, Write};

use num::{BigInt, BigRational, One, ToPrimitive};
use thiserror::Error;

use crate::engine::{run, EngineError, ProtocolConfig};
use crate::exec::Execution;
use crate::field::Seed;
use crate::segmentation::MIN_PARTIES;
use crate::simnet::{counters, Protocol, Transcript};

/// Largest party count a sweep accepts.
pub const SWEEP_MAX_K: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("k must be ≥ 3 (got {0})")]
    TooFewParties(usize),
    #[error("prior leakage formula needs n ≥ 4 parties and k ≥ 1 segments (got n = {n}, k = {k})")]
    PriorDomain { n: u64, k: u32 },
    #[error("invalid range {min}..{max}: need 3 ≤ min ≤ max ≤ 64")]
    Range { min: usize, max: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn check_k(k: usize) -> Result<u64, AnalysisError> {
    if k < MIN_PARTIES {
        return Err(AnalysisError::TooFewParties(k));
    }
    Ok(k as u64)
}

/// Messages of a dk run excluding the broadcast: `k(k-1)` transfers plus `k²`
/// partial sums, i.e. `2k² - k`.
pub fn comm_complexity(k: usize) -> Result<u64, AnalysisError> {
    let k = check_k(k)?;
    Ok(k * (k - 1) + k * k)
}

/// Additions of a dk run: `k` per round over `k` rounds.
pub fn comp_complexity(k: usize) -> Result<u64, AnalysisError> {
    let k = check_k(k)?;
    Ok(k * k)
}

/// Expected `(communication, additions)` for any of the three protocols.
pub fn expected_counts(protocol: Protocol, k: usize) -> Result<(u64, u64), AnalysisError> {
    let kk = check_k(k)?;
    Ok(match protocol {
        Protocol::Dk => (comm_complexity(k)?, comp_complexity(k)?),
        Protocol::Kss => (kk * kk, kk * kk),
        Protocol::Baseline => (kk, kk),
    })
}

/// Leakage probability `(2 / (n - 1))^k` reported for the earlier segmented
/// protocol with `n` parties and `k` segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorLeakage {
    pub exact: BigRational,
}

impl PriorLeakage {
    /// Presentation only.
    pub fn approx(&self) -> f64 {
        self.exact.to_f64().unwrap_or(f64::NAN)
    }
}

pub fn leakage_formula_prior(n: u64, k: u32) -> Result<PriorLeakage, AnalysisError> {
    if n < 4 || k < 1 {
        return Err(AnalysisError::PriorDomain { n, k });
    }
    let base = BigRational::new(BigInt::from(2u8), BigInt::from(n - 1));
    let exact = (0..k).fold(BigRational::one(), |acc, _| acc * &base);
    Ok(PriorLeakage { exact })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexityRow {
    pub k: usize,
    pub comm: u64,
    pub comp: u64,
    pub measured_comm: u64,
    pub measured_comp: u64,
    pub matches: bool,
}

/// Recounts the transcript's events and compares them with the closed forms
/// for its protocol.
pub fn verify_run(t: &Transcript) -> Result<ComplexityRow, AnalysisError> {
    let k = t.header.k;
    let (comm, comp) = expected_counts(t.header.protocol, k)?;
    let c = counters(t);
    let measured_comm = c.communication();
    let measured_comp = c.additions;
    Ok(ComplexityRow {
        k,
        comm,
        comp,
        measured_comm,
        measured_comp,
        matches: comm == measured_comm && comp == measured_comp,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepRow {
    pub complexity: ComplexityRow,
    /// `(2/(k-1))^k` for the same number of parties and segments; `None`
    /// below four parties.
    pub prior_leakage: Option<PriorLeakage>,
}

/// One measured run per `k` in `k_min..=k_max`, each seeded with
/// `split_seed(seed, k)`.
pub fn sweep(
    k_min: usize,
    k_max: usize,
    protocol: Protocol,
    seed: Seed,
    exec: Execution,
) -> Result<Vec<SweepRow>, AnalysisError> {
    if k_min < MIN_PARTIES || k_min > k_max || k_max > SWEEP_MAX_K {
        return Err(AnalysisError::Range { min: k_min, max: k_max });
    }
    exec.map(k_max - k_min + 1, |i| {
        let k = k_min + i;
        let config = ProtocolConfig::new(protocol, k, seed.split(k as u64));
        let outcome = run(&config, &config.random_inputs())?;
        Ok(SweepRow {
            complexity: verify_run(&outcome.transcript)?,
            prior_leakage: leakage_formula_prior(k as u64, k as u32).ok(),
        })
    })
    .into_iter()
    .collect()
}

pub const SWEEP_CSV_HEADER: &str = "k,comm_formula,comm_measured,comp_formula,comp_measured,match";

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for r in rows.iter().map(|r| &r.complexity) {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.k, r.comm, r.measured_comm, r.comp, r.measured_comp, r.matches
        )?;
    }
    out.flush()
}
