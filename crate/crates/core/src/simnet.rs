//! In-memory FIFO message bus, delivery counters and transcripts.
//!
//! Transcripts are written as JSON Lines: a header line, one line per
//! delivered message in delivery order, and a trailer carrying the result
//! and counters. Field residues are rendered as decimal strings.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Field, FieldElement, Seed};

/// The three protocols the engine runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Baseline,
    Kss,
    Dk,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Baseline, Protocol::Kss, Protocol::Dk];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Baseline => "baseline",
            Protocol::Kss => "kss",
            Protocol::Dk => "dk",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Protocol::Baseline),
            "kss" => Ok(Protocol::Kss),
            "dk" => Ok(Protocol::Dk),
            other => Err(format!("unknown protocol '{other}' (expected baseline, kss or dk)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    SegmentTransfer,
    PartialSum,
    Broadcast,
}

/// One protocol message. `to` is `None` for the broadcast. For segment
/// transfers `round` carries the segment index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Message {
    pub kind: MessageKind,
    pub from: usize,
    pub to: Option<usize>,
    pub round: usize,
    pub payload: FieldElement,
}

impl Message {
    pub fn segment_transfer(from: usize, to: usize, index: usize, payload: FieldElement) -> Self {
        Message { kind: MessageKind::SegmentTransfer, from, to: Some(to), round: index, payload }
    }

    pub fn partial_sum(from: usize, to: usize, round: usize, payload: FieldElement) -> Self {
        Message { kind: MessageKind::PartialSum, from, to: Some(to), round, payload }
    }

    pub fn broadcast(from: usize, round: usize, payload: FieldElement) -> Self {
        Message { kind: MessageKind::Broadcast, from, to: None, round, payload }
    }

    /// Whether `party` sent or received this message.
    pub fn touches(&self, party: usize) -> bool {
        self.from == party || self.to == Some(party)
    }
}

/// A delivered message with its sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub seq: u64,
    pub message: Message,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    pub segment_transfers: u64,
    pub partial_sums: u64,
    pub broadcasts: u64,
    pub additions: u64,
}

impl Counters {
    /// Messages excluding the broadcast.
    pub fn communication(&self) -> u64 {
        self.segment_transfers + self.partial_sums
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub protocol: Protocol,
    pub k: usize,
    pub initiator: usize,
    pub modulus: u64,
    pub generator: String,
    pub seed: Seed,
    pub bound: u64,
}

impl Header {
    pub fn field(&self) -> Result<Field, crate::field::FieldError> {
        Field::from_modulus(self.modulus)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trailer {
    pub result: i64,
    pub counters: Counters,
    pub additions_by_party: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub header: Header,
    pub events: Vec<Event>,
    pub trailer: Trailer,
}

impl Transcript {
    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        self.events.iter().map(|e| &e.message)
    }

    pub fn partial_sums(&self) -> impl Iterator<Item = &Message> {
        self.messages().filter(|m| m.kind == MessageKind::PartialSum)
    }

    pub fn broadcast(&self) -> Option<&Message> {
        self.messages().find(|m| m.kind == MessageKind::Broadcast)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("deliver_next on an empty queue")]
    Empty,
    #[error("{0} sent messages were never delivered")]
    Undelivered(usize),
    #[error("addition recorded for unknown party {0}")]
    UnknownParty(usize),
}

/// Single-run FIFO bus. Every delivery is appended to the event log.
#[derive(Debug, Clone)]
pub struct Bus {
    queue: VecDeque<Message>,
    events: Vec<Event>,
    live: Counters,
    additions_by_party: Vec<u64>,
}

impl Bus {
    pub fn new(parties: usize) -> Self {
        Bus {
            queue: VecDeque::new(),
            events: Vec::new(),
            live: Counters::default(),
            additions_by_party: vec![0; parties],
        }
    }

    pub fn send(&mut self, msg: Message) {
        self.queue.push_back(msg);
    }

    pub fn send_all<I: IntoIterator<Item = Message>>(&mut self, msgs: I) {
        self.queue.extend(msgs);
    }

    pub fn deliver_next(&mut self) -> Result<Message, BusError> {
        let msg = self.queue.pop_front().ok_or(BusError::Empty)?;
        match msg.kind {
            MessageKind::SegmentTransfer => self.live.segment_transfers += 1,
            MessageKind::PartialSum => self.live.partial_sums += 1,
            MessageKind::Broadcast => self.live.broadcasts += 1,
        }
        self.events.push(Event { seq: self.events.len() as u64, message: msg });
        Ok(msg)
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn record_addition(&mut self, party: usize) -> Result<(), BusError> {
        let slot = self.additions_by_party.get_mut(party).ok_or(BusError::UnknownParty(party))?;
        *slot += 1;
        self.live.additions += 1;
        Ok(())
    }

    pub fn live_counters(&self) -> Counters {
        self.live
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn finish(self, header: Header, result: i64) -> Result<Transcript, BusError> {
        if !self.queue.is_empty() {
            return Err(BusError::Undelivered(self.queue.len()));
        }
        Ok(Transcript {
            header,
            events: self.events,
            trailer: Trailer {
                result,
                counters: self.live,
                additions_by_party: self.additions_by_party,
            },
        })
    }
}

/// Recounts a transcript's events. Each partial sum is one addition by its
/// sender.
pub fn counters(t: &Transcript) -> Counters {
    let mut c = Counters::default();
    for m in t.messages() {
        match m.kind {
            MessageKind::SegmentTransfer => c.segment_transfers += 1,
            MessageKind::PartialSum => {
                c.partial_sums += 1;
                c.additions += 1;
            }
            MessageKind::Broadcast => c.broadcasts += 1,
        }
    }
    c
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

impl TranscriptError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        TranscriptError::Malformed { line, message: message.into() }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum Line {
    Header {
        protocol: Protocol,
        k: usize,
        initiator: usize,
        modulus: String,
        generator: String,
        seed: String,
        bound: String,
    },
    Event {
        seq: u64,
        kind: MessageKind,
        from: usize,
        to: Option<usize>,
        round: usize,
        payload: String,
    },
    Trailer {
        result: i64,
        counters: Counters,
        additions_by_party: Vec<u64>,
    },
}

fn header_line(h: &Header) -> Line {
    Line::Header {
        protocol: h.protocol,
        k: h.k,
        initiator: h.initiator,
        modulus: h.modulus.to_string(),
        generator: h.generator.clone(),
        seed: h.seed.0.to_string(),
        bound: h.bound.to_string(),
    }
}

fn event_line(e: &Event) -> Line {
    let m = &e.message;
    Line::Event {
        seq: e.seq,
        kind: m.kind,
        from: m.from,
        to: m.to,
        round: m.round,
        payload: m.payload.value().to_string(),
    }
}

/// Serializes a transcript to JSON Lines.
pub fn write_transcript_to<W: Write>(t: &Transcript, mut out: W) -> io::Result<()> {
    let mut emit = |line: &Line| -> io::Result<()> {
        serde_json::to_writer(&mut out, line)?;
        out.write_all(b"\n")
    };
    emit(&header_line(&t.header))?;
    for e in &t.events {
        emit(&event_line(e))?;
    }
    emit(&Line::Trailer {
        result: t.trailer.result,
        counters: t.trailer.counters,
        additions_by_party: t.trailer.additions_by_party.clone(),
    })?;
    out.flush()
}

pub fn write_transcript(t: &Transcript, path: &Path) -> Result<(), TranscriptError> {
    let io_err = |source| TranscriptError::Io { path: path.display().to_string(), source };
    let file = fs::File::create(path).map_err(io_err)?;
    write_transcript_to(t, io::BufWriter::new(file)).map_err(io_err)
}

pub fn read_transcript(path: &Path) -> Result<Transcript, TranscriptError> {
    let io_err = |source| TranscriptError::Io { path: path.display().to_string(), source };
    let file = fs::File::open(path).map_err(io_err)?;
    read_transcript_from(BufReader::new(file))
}

fn parse_u64(line: usize, field: &str, s: &str) -> Result<u64, TranscriptError> {
    s.parse::<u64>()
        .map_err(|_| TranscriptError::at(line, format!("field '{field}' is not a decimal integer: {s:?}")))
}

/// Parses JSON Lines, reporting the 1-based line of the first defect.
pub fn read_transcript_from<R: BufRead>(reader: R) -> Result<Transcript, TranscriptError> {
    let mut header: Option<Header> = None;
    let mut events = Vec::new();
    let mut trailer: Option<Trailer> = None;
    let mut last_line = 0;

    for (idx, raw) in reader.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let raw = raw.map_err(|e| TranscriptError::at(line_no, e.to_string()))?;
        if raw.trim().is_empty() {
            return Err(TranscriptError::at(line_no, "blank line"));
        }
        if trailer.is_some() {
            return Err(TranscriptError::at(line_no, "content after trailer"));
        }
        let parsed: Line =
            serde_json::from_str(&raw).map_err(|e| TranscriptError::at(line_no, e.to_string()))?;
        match parsed {
            Line::Header { protocol, k, initiator, modulus, generator, seed, bound } => {
                if header.is_some() || line_no != 1 {
                    return Err(TranscriptError::at(line_no, "header must be the first line"));
                }
                let modulus = parse_u64(line_no, "modulus", &modulus)?;
                Field::from_modulus(modulus).map_err(|e| TranscriptError::at(line_no, e.to_string()))?;
                if initiator >= k {
                    return Err(TranscriptError::at(line_no, "initiator out of range"));
                }
                header = Some(Header {
                    protocol,
                    k,
                    initiator,
                    modulus,
                    generator,
                    seed: Seed(parse_u64(line_no, "seed", &seed)?),
                    bound: parse_u64(line_no, "bound", &bound)?,
                });
            }
            Line::Event { seq, kind, from, to, round, payload } => {
                let h = header
                    .as_ref()
                    .ok_or_else(|| TranscriptError::at(line_no, "event before header"))?;
                if seq != events.len() as u64 {
                    return Err(TranscriptError::at(
                        line_no,
                        format!("sequence number {seq}, expected {}", events.len()),
                    ));
                }
                if from >= h.k || to.is_some_and(|t| t >= h.k) {
                    return Err(TranscriptError::at(line_no, "party index out of range"));
                }
                if to.is_none() != (kind == MessageKind::Broadcast) {
                    return Err(TranscriptError::at(line_no, "only broadcasts may omit 'to'"));
                }
                let value = parse_u64(line_no, "payload", &payload)?;
                if value >= h.modulus {
                    return Err(TranscriptError::at(line_no, "payload not reduced modulo M"));
                }
                events.push(Event {
                    seq,
                    message: Message { kind, from, to, round, payload: Field::from_modulus(h.modulus).expect("checked").element(value) },
                });
            }
            Line::Trailer { result, counters, additions_by_party } => {
                if header.is_none() {
                    return Err(TranscriptError::at(line_no, "trailer before header"));
                }
                trailer = Some(Trailer { result, counters, additions_by_party });
            }
        }
    }

    let header = header.ok_or_else(|| TranscriptError::at(1, "missing header"))?;
    let trailer = trailer
        .ok_or_else(|| TranscriptError::at(last_line, "missing trailer (file truncated?)"))?;
    Ok(Transcript { header, events, trailer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GENERATOR_ID;

    fn header() -> Header {
        Header {
            protocol: Protocol::Baseline,
            k: 3,
            initiator: 0,
            modulus: crate::field::MERSENNE_61,
            generator: GENERATOR_ID.into(),
            seed: Seed(1),
            bound: 100,
        }
    }

    #[test]
    fn fifo_delivery() {
        let f = Field::standard();
        let mut bus = Bus::new(3);
        let a = Message::partial_sum(0, 1, 0, f.element(1));
        let b = Message::partial_sum(1, 2, 0, f.element(2));
        bus.send(a);
        bus.send(b);
        assert_eq!(bus.deliver_next(), Ok(a));
        assert_eq!(bus.deliver_next(), Ok(b));
        assert_eq!(bus.deliver_next(), Err(BusError::Empty));
        assert_eq!(bus.events().iter().map(|e| e.seq).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn finish_rejects_undelivered() {
        let f = Field::standard();
        let mut bus = Bus::new(3);
        bus.send(Message::partial_sum(0, 1, 0, f.zero()));
        assert!(matches!(bus.finish(header(), 0), Err(BusError::Undelivered(1))));
    }

    fn sample_transcript() -> Transcript {
        let f = Field::standard();
        let mut bus = Bus::new(3);
        for (from, v) in [(0usize, 15u64), (1, 23), (2, 30)] {
            bus.send(Message::partial_sum(from, (from + 1) % 3, 0, f.element(v)));
            bus.deliver_next().unwrap();
            bus.record_addition(from).unwrap();
        }
        bus.send(Message::broadcast(0, 0, f.element(25)));
        bus.deliver_next().unwrap();
        bus.finish(header(), 25).unwrap()
    }

    #[test]
    fn recount_matches_live_counters() {
        let t = sample_transcript();
        assert_eq!(counters(&t), t.trailer.counters);
        assert_eq!(counters(&t).partial_sums, 3);
        assert_eq!(counters(&t).broadcasts, 1);
    }

    #[test]
    fn jsonl_round_trip() {
        let t = sample_transcript();
        let mut buf = Vec::new();
        write_transcript_to(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2 + t.events.len());
        assert!(text.starts_with("{\"type\":\"header\",\"protocol\":\"baseline\""));
        assert!(text.contains("\"to\":null"));
        let back = read_transcript_from(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn truncated_file_names_line() {
        let t = sample_transcript();
        let mut buf = Vec::new();
        write_transcript_to(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();

        // drop the trailer
        let cut = lines[..lines.len() - 1].join("\n");
        let err = read_transcript_from(cut.as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with(&format!("line {}:", lines.len() - 1)), "{err}");

        // cut in the middle of the third line
        let partial = format!("{}\n{}\n{}", lines[0], lines[1], &lines[2][..10]);
        let err = read_transcript_from(partial.as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("line 3:"), "{err}");
    }

    #[test]
    fn rejects_gaps_in_sequence() {
        let t = sample_transcript();
        let mut buf = Vec::new();
        write_transcript_to(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.remove(2);
        let err = read_transcript_from(lines.join("\n").as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("line 3: sequence number 2, expected 1"), "{err}");
    }
}
