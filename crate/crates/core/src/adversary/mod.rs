//! The two-neighbor collusion attack, decided by exact linear algebra.
//!
//! The predecessor and successor of a target pool everything they
//! legitimately see: the partial sums entering and leaving each of them,
//! every segment transfer they send or receive, and the public broadcast.
//! Each observation becomes a linear constraint over the unobserved
//! segments. The target leaks exactly when its input is a linear
//! consequence of those constraints.
//!
//! Honest parties reshuffle their holdings privately, so the value a party
//! adds in a given round is modeled as its own unknown ("slot"). The only
//! public link between slots and segments is that a party's slots sum to the
//! segments it holds.

mod solver;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use thiserror::Error;

use crate::engine::{run, EngineError, ProtocolConfig};
use crate::exec::Execution;
use crate::field::{Field, FieldElement, FieldError, Seed};
use crate::segmentation::{index_for, MIN_PARTIES};
use crate::simnet::{MessageKind, Protocol, Transcript};

pub use solver::{solve, AttackVerdict, LinearSystem, Objective, Outcome, SolveError, UnknownId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttackError {
    #[error("k must be ≥ 3 (got {0})")]
    TooFewParties(usize),
    #[error("target {target} out of range for k = {k}")]
    TargetOutOfRange { target: usize, k: usize },
    #[error("colluders {colluders:?} are not the ring neighbors {expected:?} of target {target}")]
    NotAdjacent { colluders: [usize; 2], expected: [usize; 2], target: usize },
    #[error("transcript inconsistent with the {protocol} schedule: {reason}")]
    Schedule { protocol: Protocol, reason: String },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("solver: {0}")]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("at least one trial is required")]
    NoTrials,
}

/// Ring predecessor and successor of `target`.
pub fn neighbors(k: usize, target: usize) -> [usize; 2] {
    [(target + k - 1) % k, (target + 1) % k]
}

/// Where a constraint came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintSource {
    /// Difference of two observed partial sums, covering hops
    /// `first..=last` of the ring schedule. `first == 0` means the
    /// accumulator's starting point.
    Hops { first: usize, last: usize },
    /// A party's slots add up to the segments it holds.
    Holding { party: usize },
    /// The announced result.
    Broadcast,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub terms: Vec<(UnknownId, FieldElement)>,
    pub rhs: FieldElement,
    pub source: ConstraintSource,
}

/// Everything two colluders can state about the unknowns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColluderView {
    pub protocol: Protocol,
    pub k: usize,
    pub field: Field,
    pub target: usize,
    pub colluders: [usize; 2],
    /// Values read straight off messages touching a colluder.
    pub known: BTreeMap<UnknownId, FieldElement>,
    pub constraints: Vec<Constraint>,
}

/// Public hop schedule of a transcript's protocol.
#[derive(Debug, Clone, Copy)]
struct Schedule {
    protocol: Protocol,
    k: usize,
    initiator: usize,
}

impl Schedule {
    fn hops(&self) -> usize {
        match self.protocol {
            Protocol::Baseline => self.k,
            Protocol::Kss | Protocol::Dk => self.k * self.k,
        }
    }

    fn sender(&self, hop: usize) -> usize {
        (self.initiator + hop) % self.k
    }

    fn hop_of(&self, from: usize, round: usize) -> usize {
        round * self.k + (from + self.k - self.initiator) % self.k
    }

    /// Unknowns added to the accumulator at `hop`.
    fn terms(&self, hop: usize) -> Vec<UnknownId> {
        let party = self.sender(hop);
        let round = hop / self.k;
        match self.protocol {
            Protocol::Baseline if hop == 0 => {
                vec![UnknownId::Segment { origin: party, index: 0 }, UnknownId::Mask]
            }
            Protocol::Baseline => vec![UnknownId::Segment { origin: party, index: 0 }],
            Protocol::Kss => vec![UnknownId::Segment { origin: party, index: round }],
            Protocol::Dk => vec![UnknownId::Slot { party, round }],
        }
    }
}

fn secret_terms(protocol: Protocol, k: usize, party: usize) -> Vec<UnknownId> {
    let n = if protocol == Protocol::Baseline { 1 } else { k };
    (0..n).map(|index| UnknownId::Segment { origin: party, index }).collect()
}

fn unit_terms(field: Field, ids: Vec<UnknownId>) -> Vec<(UnknownId, FieldElement)> {
    ids.into_iter().map(|id| (id, field.one())).collect()
}

/// Builds the colluders' view from a transcript. Only messages sent or
/// received by a colluder, the broadcast and the public header are read.
pub fn extract_view(
    t: &Transcript,
    colluders: [usize; 2],
    target: usize,
) -> Result<ColluderView, AttackError> {
    let h = &t.header;
    let k = h.k;
    if k < MIN_PARTIES {
        return Err(AttackError::TooFewParties(k));
    }
    if target >= k {
        return Err(AttackError::TargetOutOfRange { target, k });
    }
    let expected = neighbors(k, target);
    let mut sorted = colluders;
    sorted.sort_unstable();
    let mut want = expected;
    want.sort_unstable();
    if sorted != want {
        return Err(AttackError::NotAdjacent { colluders, expected, target });
    }

    let field = h.field()?;
    let schedule = Schedule { protocol: h.protocol, k, initiator: h.initiator };
    let bad = |reason: String| AttackError::Schedule { protocol: h.protocol, reason };
    let is_colluder = |p: usize| colluders.contains(&p);

    let mut observed: BTreeMap<usize, FieldElement> = BTreeMap::new();
    let mut known = BTreeMap::new();
    let mut broadcast = None;

    for m in t.messages() {
        match m.kind {
            MessageKind::Broadcast => broadcast = Some(m.payload),
            _ if !(is_colluder(m.from) || m.to.is_some_and(is_colluder)) => {}
            MessageKind::PartialSum => {
                if m.to != Some((m.from + 1) % k) {
                    return Err(bad(format!("partial sum {} -> {:?} is off the ring", m.from, m.to)));
                }
                let hop = schedule.hop_of(m.from, m.round);
                if hop >= schedule.hops() {
                    return Err(bad(format!("round {} exceeds the schedule", m.round)));
                }
                if observed.insert(hop, m.payload).is_some() {
                    return Err(bad(format!("hop {hop} observed twice")));
                }
            }
            MessageKind::SegmentTransfer => {
                let to = m.to.expect("transfers are point-to-point");
                if h.protocol != Protocol::Dk || m.round != index_for(k, m.from, to) {
                    return Err(bad(format!("unexpected segment transfer {} -> {to}", m.from)));
                }
                known.insert(UnknownId::Segment { origin: m.from, index: m.round }, m.payload);
            }
        }
    }

    let mut constraints = Vec::new();
    let mut prev: Option<(usize, FieldElement)> = None;
    for (&hop, &payload) in &observed {
        let first = prev.map_or(0, |(p, _)| p + 1);
        let ids = (first..=hop).flat_map(|n| schedule.terms(n)).collect();
        let rhs = prev.map_or(payload, |(_, before)| field.sub(payload, before));
        constraints.push(Constraint {
            terms: unit_terms(field, ids),
            rhs,
            source: ConstraintSource::Hops { first, last: hop },
        });
        prev = Some((hop, payload));
    }

    if h.protocol == Protocol::Dk {
        for party in 0..k {
            let mut terms: Vec<(UnknownId, FieldElement)> =
                (0..k).map(|round| (UnknownId::Slot { party, round }, field.one())).collect();
            let minus_one = field.neg(field.one());
            terms.extend((0..k).map(|m| {
                (UnknownId::Segment { origin: (party + k - m) % k, index: m }, minus_one)
            }));
            constraints.push(Constraint {
                terms,
                rhs: field.zero(),
                source: ConstraintSource::Holding { party },
            });
        }
    }

    if let Some(total) = broadcast {
        let ids = (0..k).flat_map(|p| secret_terms(h.protocol, k, p)).collect();
        constraints.push(Constraint {
            terms: unit_terms(field, ids),
            rhs: total,
            source: ConstraintSource::Broadcast,
        });
    }

    Ok(ColluderView { protocol: h.protocol, k, field, target, colluders, known, constraints })
}

impl ColluderView {
    /// The target's input as a linear functional of segment unknowns.
    pub fn objective_terms(&self) -> Vec<(UnknownId, FieldElement)> {
        unit_terms(self.field, secret_terms(self.protocol, self.k, self.target))
    }

    /// Constraints describing a single round's addition by `party`, i.e.
    /// hop ranges of length one.
    pub fn single_hop_constraints(&self, party: usize) -> Vec<&Constraint> {
        self.constraints
            .iter()
            .filter(|c| match c.source {
                ConstraintSource::Hops { first, last } => {
                    first == last
                        && c.terms.iter().all(|(id, _)| match *id {
                            UnknownId::Slot { party: p, .. } => p == party,
                            UnknownId::Segment { origin, .. } => origin == party,
                            UnknownId::Mask => false,
                        })
                }
                _ => false,
            })
            .collect()
    }

    /// Substitutes known values and lays the rest out as a dense system.
    pub fn to_system(&self) -> (LinearSystem, Objective) {
        let f = self.field;
        let objective_terms = self.objective_terms();
        let catalog: Vec<UnknownId> = self
            .constraints
            .iter()
            .flat_map(|c| c.terms.iter().map(|(id, _)| *id))
            .chain(objective_terms.iter().map(|(id, _)| *id))
            .filter(|id| !self.known.contains_key(id))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let column: BTreeMap<UnknownId, usize> =
            catalog.iter().enumerate().map(|(i, id)| (*id, i)).collect();

        let lay_out = |terms: &[(UnknownId, FieldElement)]| {
            let mut row = vec![f.zero(); catalog.len()];
            let mut constant = f.zero();
            for &(id, coeff) in terms {
                match self.known.get(&id) {
                    Some(&v) => constant = f.add(constant, f.mul(coeff, v)),
                    None => {
                        let c = column[&id];
                        row[c] = f.add(row[c], coeff);
                    }
                }
            }
            (row, constant)
        };

        let mut system = LinearSystem::new(f, catalog.clone());
        for c in &self.constraints {
            let (row, constant) = lay_out(&c.terms);
            system.push(row, f.sub(c.rhs, constant));
        }
        let (coeffs, constant) = lay_out(&objective_terms);
        (system, Objective { coeffs, constant })
    }
}

/// Extracts the view, builds the system and decides leakage for `target`.
pub fn attack(
    t: &Transcript,
    colluders: [usize; 2],
    target: usize,
) -> Result<AttackVerdict, AttackError> {
    let view = extract_view(t, colluders, target)?;
    let (system, objective) = view.to_system();
    Ok(solve(&system, &objective)?)
}

/// One Monte Carlo trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: Seed,
    pub verdict: AttackVerdict,
    /// The target's true encoded input.
    pub secret: FieldElement,
}

impl TrialRecord {
    /// A determined value must be the target's real input.
    pub fn is_sound(&self) -> bool {
        self.verdict.value().is_none_or(|v| v == self.secret)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeakageReport {
    pub protocol: Protocol,
    pub k: usize,
    pub target: usize,
    pub colluders: [usize; 2],
    pub bound: u64,
    pub field: Field,
    pub trials: Vec<TrialRecord>,
}

impl LeakageReport {
    pub fn determined(&self) -> usize {
        self.trials.iter().filter(|t| t.verdict.is_determined()).count()
    }

    pub fn frequency(&self) -> f64 {
        self.determined() as f64 / self.trials.len() as f64
    }

    pub fn all_sound(&self) -> bool {
        self.trials.iter().all(TrialRecord::is_sound)
    }

    /// Per-trial CSV: `trial,seed,verdict,value,rank,unknowns,sound`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "trial,seed,verdict,value,rank,unknowns,sound")?;
        for t in &self.trials {
            let (verdict, value) = match t.verdict.outcome {
                Outcome::Determined(v) => (
                    "determined",
                    self.field.decode(v, self.bound).map_or_else(|_| v.to_string(), |x| x.to_string()),
                ),
                Outcome::Underdetermined => ("underdetermined", String::new()),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                t.trial,
                t.seed,
                verdict,
                value,
                t.verdict.rank,
                t.verdict.unknowns,
                t.is_sound()
            )?;
        }
        out.flush()
    }
}

/// Runs `trials` independent protocol executions with random inputs and
/// attacks `target` in each. Trial `i` uses `split_seed(master, i)`.
pub fn monte_carlo_leakage(
    template: &ProtocolConfig,
    target: usize,
    trials: u64,
    master: Seed,
    exec: Execution,
) -> Result<LeakageReport, AttackError> {
    if trials == 0 {
        return Err(AttackError::NoTrials);
    }
    template.validate().map_err(EngineError::from)?;
    if target >= template.k {
        return Err(AttackError::TargetOutOfRange { target, k: template.k });
    }
    let colluders = neighbors(template.k, target);
    let results = exec.map(trials as usize, |i| -> Result<TrialRecord, AttackError> {
        let seed = master.split(i as u64);
        let config = ProtocolConfig { seed, ..template.clone() };
        let outcome = run(&config, &config.random_inputs())?;
        let verdict = attack(&outcome.transcript, colluders, target)?;
        Ok(TrialRecord { trial: i as u64, seed, verdict, secret: outcome.truth.secrets[target] })
    });
    Ok(LeakageReport {
        protocol: template.protocol,
        k: template.k,
        target,
        colluders,
        bound: template.bound,
        field: template.field(),
        trials: results.into_iter().collect::<Result<_, _>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run;

    fn transcript(protocol: Protocol, k: usize, seed: u64) -> (Transcript, Vec<FieldElement>) {
        let cfg = ProtocolConfig::new(protocol, k, Seed(seed));
        let out = run(&cfg, &cfg.random_inputs()).unwrap();
        (out.transcript, out.truth.secrets)
    }

    #[test]
    fn worked_example_view_contains_the_difference() {
        let cfg = ProtocolConfig::new(Protocol::Baseline, 4, Seed(0)).with_mask(5);
        let out = run(&cfg, &[10, 8, 7, 15]).unwrap();
        let f = cfg.field();
        let view = extract_view(&out.transcript, [0, 2], 1).unwrap();
        let x1 = UnknownId::Segment { origin: 1, index: 0 };
        assert!(view
            .constraints
            .iter()
            .any(|c| c.terms == vec![(x1, f.one())] && c.rhs == f.element(23 - 15)));
        let v = attack(&out.transcript, [0, 2], 1).unwrap();
        assert_eq!(v.outcome, Outcome::Determined(f.element(8)));
    }

    #[test]
    fn dk_view_has_one_difference_per_round_for_target() {
        let (t, _) = transcript(Protocol::Dk, 4, 5);
        let view = extract_view(&t, neighbors(4, 1), 1).unwrap();
        let own = view.single_hop_constraints(1);
        assert_eq!(own.len(), 4);
        for (round, c) in own.iter().enumerate() {
            assert_eq!(c.terms[0].0, UnknownId::Slot { party: 1, round });
        }
    }

    #[test]
    fn view_never_holds_honest_to_honest_transfers() {
        let (t, _) = transcript(Protocol::Dk, 7, 2);
        let colluders = neighbors(7, 3);
        let view = extract_view(&t, colluders, 3).unwrap();
        for m in t.messages().filter(|m| m.kind == MessageKind::SegmentTransfer) {
            let id = UnknownId::Segment { origin: m.from, index: m.round };
            let touches = colluders.iter().any(|&c| m.touches(c));
            assert_eq!(view.known.contains_key(&id), touches);
        }
    }

    #[test]
    fn non_adjacent_colluders_rejected() {
        let (t, _) = transcript(Protocol::Dk, 5, 1);
        assert!(matches!(extract_view(&t, [0, 3], 1), Err(AttackError::NotAdjacent { .. })));
        assert!(matches!(extract_view(&t, [0, 2], 9), Err(AttackError::TargetOutOfRange { .. })));
        // order of the pair does not matter
        assert!(extract_view(&t, [2, 0], 1).is_ok());
    }

    #[test]
    fn verdicts_by_protocol() {
        for k in 3..=8 {
            for target in 0..k {
                let colluders = neighbors(k, target);
                let (t, secrets) = transcript(Protocol::Baseline, k, 10 + k as u64);
                let v = attack(&t, colluders, target).unwrap();
                assert_eq!(v.outcome, Outcome::Determined(secrets[target]), "baseline k={k}");

                let (t, secrets) = transcript(Protocol::Kss, k, 20 + k as u64);
                let v = attack(&t, colluders, target).unwrap();
                assert_eq!(v.outcome, Outcome::Determined(secrets[target]), "kss k={k}");

                let (t, secrets) = transcript(Protocol::Dk, k, 30 + k as u64);
                let v = attack(&t, colluders, target).unwrap();
                if k == 3 {
                    assert_eq!(v.outcome, Outcome::Determined(secrets[target]), "dk k=3");
                } else {
                    assert_eq!(v.outcome, Outcome::Underdetermined, "dk k={k} target={target}");
                }
            }
        }
    }

    #[test]
    fn view_is_local_to_colluders() {
        let (t, _) = transcript(Protocol::Dk, 6, 44);
        let colluders = neighbors(6, 2);
        let full = extract_view(&t, colluders, 2).unwrap();
        let mut pruned = t.clone();
        pruned.events.retain(|e| {
            e.message.kind == MessageKind::Broadcast || colluders.iter().any(|&c| e.message.touches(c))
        });
        assert!(pruned.events.len() < t.events.len());
        assert_eq!(extract_view(&pruned, colluders, 2).unwrap(), full);
    }

    #[test]
    fn monte_carlo_is_deterministic_across_modes() {
        let cfg = ProtocolConfig::new(Protocol::Dk, 4, Seed(0));
        let a = monte_carlo_leakage(&cfg, 1, 20, Seed(9), Execution::Sequential).unwrap();
        let b = monte_carlo_leakage(&cfg, 1, 20, Seed(9), Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.determined(), 0);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 21);
        assert!(matches!(
            monte_carlo_leakage(&cfg, 1, 0, Seed(9), Execution::Sequential),
            Err(AttackError::NoTrials)
        ));
    }
}
