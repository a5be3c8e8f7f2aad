//! Party state machines and run orchestration for the three ring protocols.
//!
//! * `Baseline`: the initiator masks its input with a random `R`, every
//!   party adds its input once around the ring, the initiator removes `R`.
//! * `Kss`: every party splits its input into `k` segments and, in round
//!   `r`, adds its own `r`-th segment. No redistribution.
//! * `Dk`: as `Kss`, but segments are first redistributed so that each
//!   party holds one segment from every party, then reshuffled privately.
//!
//! In the segmented protocols a single accumulator circulates for `k`
//! full laps starting at the initiator, so the computation phase is `k²`
//! hops and `k²` additions. Parties only talk through the [`Bus`].

use thiserror::Error;

use crate::field::{Field, FieldElement, FieldError, FieldRng, ModulusProfile, Seed, GENERATOR_ID};
use crate::segmentation::{
    index_for, segment, shuffle_row, Held, HoldingMatrix, SegmentMatrix, SegmentTag,
    SegmentationError, MIN_PARTIES,
};
use crate::simnet::{Bus, BusError, Header, Message, MessageKind, Protocol, Transcript};

/// Stream label reserved for randomly generated inputs.
pub const INPUT_STREAM_LABEL: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("k must be ≥ 3 (got {0})")]
    TooFewParties(usize),
    #[error("initiator {initiator} out of range for k = {k}")]
    InitiatorOutOfRange { initiator: usize, k: usize },
    #[error("expected {expected} inputs, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("input bound {bound} too large: k·B = {product} must stay below (M-1)/2 = {limit}")]
    BoundTooLarge { bound: u64, product: u128, limit: u64 },
    #[error("a pinned mask only applies to the baseline protocol")]
    MaskNotApplicable,
    #[error(transparent)]
    Input(#[from] FieldError),
}

/// A party observed a message its protocol state does not allow.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("protocol violation at party {party}: {reason}")]
pub struct ProtocolFault {
    pub party: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fault(#[from] ProtocolFault),
    #[error("simulated network: {0}")]
    Bus(#[from] BusError),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error("result decoding failed: {0}")]
    Decode(FieldError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolConfig {
    pub protocol: Protocol,
    pub k: usize,
    pub initiator: usize,
    pub profile: ModulusProfile,
    pub seed: Seed,
    pub bound: u64,
    /// Pins the baseline mask `R` instead of drawing it.
    pub mask: Option<i64>,
}

impl ProtocolConfig {
    pub fn new(protocol: Protocol, k: usize, seed: Seed) -> Self {
        ProtocolConfig {
            protocol,
            k,
            initiator: 0,
            profile: ModulusProfile::Standard,
            seed,
            bound: crate::field::DEFAULT_INPUT_BOUND,
            mask: None,
        }
    }

    pub fn with_protocol(mut self, protocol: Protocol) -> Self {
        self.protocol = protocol;
        self
    }

    pub fn with_bound(mut self, bound: u64) -> Self {
        self.bound = bound;
        self
    }

    pub fn with_mask(mut self, mask: i64) -> Self {
        self.mask = Some(mask);
        self
    }

    pub fn with_initiator(mut self, initiator: usize) -> Self {
        self.initiator = initiator;
        self
    }

    pub fn with_profile(mut self, profile: ModulusProfile) -> Self {
        self.profile = profile;
        self
    }

    pub fn field(&self) -> Field {
        self.profile.field()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k < MIN_PARTIES {
            return Err(ConfigError::TooFewParties(self.k));
        }
        if self.initiator >= self.k {
            return Err(ConfigError::InitiatorOutOfRange { initiator: self.initiator, k: self.k });
        }
        let limit = self.field().half();
        let product = self.k as u128 * self.bound as u128;
        if product >= limit as u128 {
            return Err(ConfigError::BoundTooLarge { bound: self.bound, product, limit });
        }
        if self.mask.is_some() && self.protocol != Protocol::Baseline {
            return Err(ConfigError::MaskNotApplicable);
        }
        Ok(())
    }

    /// Bound on the magnitude of any reachable sum.
    pub fn sum_bound(&self) -> u64 {
        self.k as u64 * self.bound
    }

    pub fn party_seed(&self, party: usize) -> Seed {
        self.seed.split(party as u64)
    }

    pub fn header(&self) -> Header {
        Header {
            protocol: self.protocol,
            k: self.k,
            initiator: self.initiator,
            modulus: self.field().modulus(),
            generator: GENERATOR_ID.to_string(),
            seed: self.seed,
            bound: self.bound,
        }
    }

    /// Uniform inputs in `[-bound, bound]` drawn from the reserved input stream.
    pub fn random_inputs(&self) -> Vec<i64> {
        let mut rng = FieldRng::new(self.seed.split(INPUT_STREAM_LABEL));
        (0..self.k).map(|_| rng.signed_within(self.bound)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Distribution,
    Ready,
    Computing,
    Done,
}

/// Everything one party knows during a run.
#[derive(Debug, Clone)]
pub struct PartyState {
    id: usize,
    k: usize,
    protocol: Protocol,
    initiator: bool,
    secret: FieldElement,
    segments: Vec<FieldElement>,
    holding: Vec<Option<Held>>,
    cursor: usize,
    mask: Option<FieldElement>,
    last_seen: Option<FieldElement>,
    phase: Phase,
}

/// Result of handling one event.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Step {
    pub outgoing: Vec<Message>,
    pub additions: u64,
}

impl PartyState {
    /// Builds a party and performs its local segmentation.
    pub fn new(
        config: &ProtocolConfig,
        id: usize,
        secret: FieldElement,
        rng: &mut FieldRng,
    ) -> Result<Self, EngineError> {
        let field = config.field();
        let k = config.k;
        let initiator = id == config.initiator;
        let own = |index| SegmentTag { origin: id, index };
        let (segments, holding, phase) = match config.protocol {
            Protocol::Baseline => {
                (vec![secret], vec![Some(Held { value: secret, tag: own(0) })], Phase::Ready)
            }
            Protocol::Kss => {
                let segs = segment(field, secret, k, rng)?;
                let holding = segs
                    .iter()
                    .enumerate()
                    .map(|(j, &value)| Some(Held { value, tag: own(j) }))
                    .collect();
                (segs, holding, Phase::Ready)
            }
            Protocol::Dk => {
                let segs = segment(field, secret, k, rng)?;
                let mut holding = vec![None; k];
                holding[0] = Some(Held { value: segs[0], tag: own(0) });
                (segs, holding, Phase::Distribution)
            }
        };
        let mask = match (config.protocol, initiator) {
            (Protocol::Baseline, true) => Some(match config.mask {
                Some(r) => field.encode(r),
                None => field.sample(rng),
            }),
            _ => None,
        };
        Ok(PartyState {
            id,
            k,
            protocol: config.protocol,
            initiator,
            secret,
            segments,
            holding,
            cursor: 0,
            mask,
            last_seen: None,
            phase,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn is_initiator(&self) -> bool {
        self.initiator
    }

    pub fn secret(&self) -> FieldElement {
        self.secret
    }

    pub fn segments(&self) -> &[FieldElement] {
        &self.segments
    }

    pub fn mask(&self) -> Option<FieldElement> {
        self.mask
    }

    pub fn last_seen(&self) -> Option<FieldElement> {
        self.last_seen
    }

    /// Held segments in the order they are added. Empty positions (segments
    /// not yet received) are skipped.
    pub fn holding(&self) -> Vec<Held> {
        self.holding.iter().flatten().copied().collect()
    }

    fn successor(&self) -> usize {
        (self.id + 1) % self.k
    }

    fn predecessor(&self) -> usize {
        (self.id + self.k - 1) % self.k
    }

    fn fault(&self, reason: impl Into<String>) -> ProtocolFault {
        ProtocolFault { party: self.id, reason: reason.into() }
    }

    /// Segment transfers this party sends in the distribution phase: segment
    /// `j` goes to party `id + j`.
    pub fn distribution_messages(&self) -> Vec<Message> {
        if self.protocol != Protocol::Dk {
            return Vec::new();
        }
        (1..self.k)
            .map(|j| {
                Message::segment_transfer(self.id, (self.id + j) % self.k, j, self.segments[j])
            })
            .collect()
    }

    /// Closes the distribution phase and privately reshuffles the holding.
    pub fn seal(&mut self, rng: &mut FieldRng) -> Result<(), ProtocolFault> {
        match self.phase {
            Phase::Ready => Ok(()),
            Phase::Distribution => {
                let mut row: Vec<Held> = self
                    .holding
                    .iter()
                    .copied()
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| self.fault("distribution incomplete: missing segments"))?;
                shuffle_row(&mut row, rng);
                self.holding = row.into_iter().map(Some).collect();
                self.phase = Phase::Ready;
                Ok(())
            }
            _ => Err(self.fault("seal after computation started")),
        }
    }

    fn held(&self, position: usize) -> Result<FieldElement, ProtocolFault> {
        self.holding
            .get(position)
            .copied()
            .flatten()
            .map(|h| h.value)
            .ok_or_else(|| self.fault(format!("no segment at position {position}")))
    }

    /// Initiator kick-off: the accumulator starts at zero (or at `R` for the
    /// baseline) and the first held value is added.
    pub fn start(&mut self, field: Field) -> Result<Step, ProtocolFault> {
        if !self.initiator {
            return Err(self.fault("only the initiator starts the computation"));
        }
        if self.phase != Phase::Ready {
            return Err(self.fault("start before distribution finished"));
        }
        let base = self.mask.unwrap_or(field.zero());
        let payload = field.add(base, self.held(0)?);
        self.cursor = 1;
        self.phase = Phase::Computing;
        Ok(Step {
            outgoing: vec![Message::partial_sum(self.id, self.successor(), 0, payload)],
            additions: 1,
        })
    }

    /// Handles one delivered message.
    pub fn step(&mut self, field: Field, msg: &Message) -> Result<Step, ProtocolFault> {
        if msg.to != Some(self.id) {
            return Err(self.fault(format!("received message addressed to {:?}", msg.to)));
        }
        match msg.kind {
            MessageKind::SegmentTransfer => self.receive_segment(msg),
            MessageKind::PartialSum => self.receive_partial_sum(field, msg),
            MessageKind::Broadcast => Err(self.fault("broadcasts are not point-to-point")),
        }
    }

    fn receive_segment(&mut self, msg: &Message) -> Result<Step, ProtocolFault> {
        if self.protocol != Protocol::Dk || self.phase != Phase::Distribution {
            return Err(self.fault("segment transfer outside the distribution phase"));
        }
        if msg.from == self.id || msg.from >= self.k {
            return Err(self.fault(format!("segment transfer from invalid party {}", msg.from)));
        }
        let index = index_for(self.k, msg.from, self.id);
        if msg.round != index {
            return Err(self.fault(format!(
                "party {} must send segment {index}, got segment {}",
                msg.from, msg.round
            )));
        }
        let slot = &mut self.holding[index];
        if slot.is_some() {
            return Err(ProtocolFault {
                party: self.id,
                reason: format!("duplicate segment from party {}", msg.from),
            });
        }
        *slot = Some(Held { value: msg.payload, tag: SegmentTag { origin: msg.from, index } });
        Ok(Step::default())
    }

    fn receive_partial_sum(&mut self, field: Field, msg: &Message) -> Result<Step, ProtocolFault> {
        match self.phase {
            Phase::Ready | Phase::Computing => {}
            Phase::Distribution => return Err(self.fault("partial sum during distribution")),
            Phase::Done => return Err(self.fault("partial sum after broadcast")),
        }
        if msg.from != self.predecessor() {
            return Err(self.fault(format!("partial sum from non-neighbor {}", msg.from)));
        }
        self.last_seen = Some(msg.payload);
        let rounds = self.holding.len();

        if self.initiator {
            if self.cursor == 0 || msg.round + 1 != self.cursor {
                return Err(self.fault(format!("unexpected round {} at initiator", msg.round)));
            }
            if self.cursor == rounds {
                let result = match self.mask {
                    Some(r) => field.sub(msg.payload, r),
                    None => msg.payload,
                };
                self.phase = Phase::Done;
                return Ok(Step {
                    outgoing: vec![Message::broadcast(self.id, msg.round, result)],
                    additions: 0,
                });
            }
        } else if msg.round != self.cursor || self.cursor >= rounds {
            return Err(self.fault(format!(
                "partial sum for round {} while expecting round {}",
                msg.round, self.cursor
            )));
        }

        let round = self.cursor;
        let payload = field.add(msg.payload, self.held(round)?);
        self.cursor += 1;
        self.phase = if !self.initiator && self.cursor == rounds { Phase::Done } else { Phase::Computing };
        Ok(Step {
            outgoing: vec![Message::partial_sum(self.id, self.successor(), round, payload)],
            additions: 1,
        })
    }
}

/// Values the harness retains for soundness checks; never visible to parties
/// other than their owners.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub secrets: Vec<FieldElement>,
    pub segments: Option<SegmentMatrix>,
    pub holdings: HoldingMatrix,
    pub mask: Option<FieldElement>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub sum: i64,
    pub transcript: Transcript,
    pub truth: GroundTruth,
}

fn dispatch(
    field: Field,
    parties: &mut [PartyState],
    bus: &mut Bus,
    msg: &Message,
) -> Result<(), EngineError> {
    let to = msg.to.expect("point-to-point message");
    let party = parties.get_mut(to).ok_or_else(|| ProtocolFault {
        party: msg.from,
        reason: format!("message to unknown party {to}"),
    })?;
    let step = party.step(field, msg)?;
    for _ in 0..step.additions {
        bus.record_addition(to)?;
    }
    bus.send_all(step.outgoing);
    Ok(())
}

/// Runs `config.protocol` on `inputs`.
pub fn run(config: &ProtocolConfig, inputs: &[i64]) -> Result<RunOutcome, EngineError> {
    config.validate()?;
    if inputs.len() != config.k {
        return Err(ConfigError::InputCount { expected: config.k, got: inputs.len() }.into());
    }
    let field = config.field();
    let secrets = inputs
        .iter()
        .map(|&x| field.encode_bounded(x, config.bound))
        .collect::<Result<Vec<_>, _>>()
        .map_err(ConfigError::from)?;

    let mut rngs: Vec<FieldRng> =
        (0..config.k).map(|p| FieldRng::new(config.party_seed(p))).collect();
    let mut parties = secrets
        .iter()
        .zip(rngs.iter_mut())
        .enumerate()
        .map(|(id, (&x, rng))| PartyState::new(config, id, x, rng))
        .collect::<Result<Vec<_>, _>>()?;

    let segments = match config.protocol {
        Protocol::Baseline => None,
        _ => Some(SegmentMatrix::new(parties.iter().map(|p| p.segments().to_vec()).collect())?),
    };

    let mut bus = Bus::new(config.k);

    for party in &parties {
        bus.send_all(party.distribution_messages());
    }
    while !bus.is_idle() {
        let msg = bus.deliver_next()?;
        dispatch(field, &mut parties, &mut bus, &msg)?;
    }
    for (party, rng) in parties.iter_mut().zip(rngs.iter_mut()) {
        party.seal(rng)?;
    }

    let kick = parties[config.initiator].start(field)?;
    for _ in 0..kick.additions {
        bus.record_addition(config.initiator)?;
    }
    bus.send_all(kick.outgoing);

    let announced = loop {
        let msg = bus.deliver_next()?;
        if msg.kind == MessageKind::Broadcast {
            break msg.payload;
        }
        dispatch(field, &mut parties, &mut bus, &msg)?;
    };

    let sum = field.decode(announced, config.sum_bound()).map_err(EngineError::Decode)?;
    let truth = GroundTruth {
        secrets,
        segments,
        holdings: HoldingMatrix::from_rows(parties.iter().map(|p| p.holding()).collect()),
        mask: parties[config.initiator].mask(),
    };
    let transcript = bus.finish(config.header(), sum)?;
    Ok(RunOutcome { sum, transcript, truth })
}

pub fn run_baseline(config: &ProtocolConfig, inputs: &[i64]) -> Result<RunOutcome, EngineError> {
    run(&config.clone().with_protocol(Protocol::Baseline), inputs)
}

pub fn run_kss(config: &ProtocolConfig, inputs: &[i64]) -> Result<RunOutcome, EngineError> {
    run(&config.clone().with_protocol(Protocol::Kss), inputs)
}

pub fn run_dk(config: &ProtocolConfig, inputs: &[i64]) -> Result<RunOutcome, EngineError> {
    run(&config.clone().with_protocol(Protocol::Dk), inputs)
}
