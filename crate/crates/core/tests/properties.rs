mod common;

use proptest::prelude::*;

use dksum::adversary::{attack, neighbors, solve, Outcome};
use dksum::analysis::{comm_complexity, comp_complexity, verify_run};
use dksum::field::{Field, FieldRng, Seed, MERSENNE_61};
use dksum::segmentation::{redistribute, reshuffle, segment, SegmentMatrix};
use dksum::simnet::{counters, read_transcript_from, write_transcript_to, MessageKind};
use dksum::{run, Protocol, ProtocolConfig};

fn protocol() -> impl Strategy<Value = Protocol> {
    prop_oneof![Just(Protocol::Baseline), Just(Protocol::Kss), Just(Protocol::Dk)]
}

proptest! {
    #[test]
    fn add_undoes_sub(a in 0..MERSENNE_61, b in 0..MERSENNE_61) {
        let f = Field::standard();
        let (a, b) = (f.element(a), f.element(b));
        prop_assert_eq!(f.add(a, f.sub(b, a)), b);
    }

    #[test]
    fn encode_decode_round_trip(x in -1_000_000_000i64..=1_000_000_000) {
        let f = Field::standard();
        prop_assert_eq!(f.decode(f.encode(x), 1_000_000_000), Ok(x));
    }

    #[test]
    fn segmentation_conserves_the_total(seed: u64, k in 3usize..10) {
        let f = Field::standard();
        let mut rng = FieldRng::new(Seed(seed));
        let secrets: Vec<_> = (0..k).map(|_| f.sample(&mut rng)).collect();
        for &x in &secrets {
            let row = segment(f, x, k, &mut rng).unwrap();
            prop_assert_eq!(f.sum(row), x);
        }
        let mut streams: Vec<FieldRng> = (0..k).map(|p| FieldRng::new(Seed(seed).split(p as u64))).collect();
        let d = SegmentMatrix::generate(f, &secrets, &mut streams).unwrap();
        let h = reshuffle(&redistribute(&d).unwrap(), &mut streams).unwrap();
        let total = f.sum(secrets.iter().copied());
        prop_assert_eq!(f.sum(h.rows().iter().flatten().map(|x| x.value)), total);
        for row in h.rows() {
            let mut origins: Vec<usize> = row.iter().map(|x| x.tag.origin).collect();
            origins.sort_unstable();
            prop_assert_eq!(origins, (0..k).collect::<Vec<_>>());
        }
    }

    #[test]
    fn every_protocol_computes_the_plain_sum(
        p in protocol(),
        seed: u64,
        inputs in prop::collection::vec(-1_000_000_000i64..=1_000_000_000, 3..12),
        initiator_pick: usize,
    ) {
        let k = inputs.len();
        let cfg = ProtocolConfig::new(p, k, Seed(seed)).with_initiator(initiator_pick % k);
        let out = run(&cfg, &inputs).unwrap();
        prop_assert_eq!(out.sum, common::plain_sum(&inputs));
        prop_assert_eq!(counters(&out.transcript), out.transcript.trailer.counters);
        prop_assert!(verify_run(&out.transcript).unwrap().matches);
    }

    #[test]
    fn dk_phases_never_interleave(seed: u64, k in 3usize..10) {
        let cfg = ProtocolConfig::new(Protocol::Dk, k, Seed(seed));
        let out = run(&cfg, &cfg.random_inputs()).unwrap();
        let kinds: Vec<MessageKind> = out.transcript.messages().map(|m| m.kind).collect();
        let last_transfer = kinds.iter().rposition(|&x| x == MessageKind::SegmentTransfer).unwrap();
        let first_sum = kinds.iter().position(|&x| x == MessageKind::PartialSum).unwrap();
        prop_assert!(last_transfer < first_sum);
        prop_assert_eq!(kinds.last(), Some(&MessageKind::Broadcast));
    }

    #[test]
    fn transcripts_survive_jsonl(p in protocol(), seed: u64, k in 3usize..8) {
        let cfg = ProtocolConfig::new(p, k, Seed(seed));
        let t = run(&cfg, &cfg.random_inputs()).unwrap().transcript;
        let mut buf = Vec::new();
        write_transcript_to(&t, &mut buf).unwrap();
        prop_assert_eq!(read_transcript_from(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn determined_verdicts_are_sound(p in protocol(), seed: u64, k in 3usize..9, target_pick: usize) {
        let target = target_pick % k;
        let cfg = ProtocolConfig::new(p, k, Seed(seed));
        let out = run(&cfg, &cfg.random_inputs()).unwrap();
        let verdict = attack(&out.transcript, neighbors(k, target), target).unwrap();
        if let Outcome::Determined(v) = verdict.outcome {
            prop_assert_eq!(v, out.truth.secrets[target]);
        }
        let leaks = p != Protocol::Dk || k == 3;
        prop_assert_eq!(verdict.is_determined(), leaks);
    }

    #[test]
    fn solver_matches_enumeration(seed: u64) {
        let (system, objective) = common::random_tiny_system(Seed(seed));
        let values = common::enumerate_objective_values(&system, &objective);
        let verdict = solve(&system, &objective).unwrap();
        match verdict.outcome {
            Outcome::Determined(v) => prop_assert_eq!(values.into_iter().collect::<Vec<_>>(), vec![v.value()]),
            Outcome::Underdetermined => prop_assert!(values.len() > 1),
        }
    }
}

#[test]
fn dk_counters_follow_closed_forms() {
    for k in 3..=64 {
        let cfg = ProtocolConfig::new(Protocol::Dk, k, Seed(k as u64));
        let t = run(&cfg, &cfg.random_inputs()).unwrap().transcript;
        let c = counters(&t);
        assert_eq!(c.communication(), comm_complexity(k).unwrap());
        assert_eq!(c.communication(), (2 * k * k - k) as u64);
        assert_eq!(c.additions, comp_complexity(k).unwrap());
        assert_eq!(c.broadcasts, 1);
    }
}

#[test]
fn identical_seed_gives_identical_transcript() {
    for p in Protocol::ALL {
        let cfg = ProtocolConfig::new(p, 6, Seed(99));
        let a = run(&cfg, &cfg.random_inputs()).unwrap().transcript;
        let b = run(&cfg, &cfg.random_inputs()).unwrap().transcript;
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_transcript_to(&a, &mut x).unwrap();
        write_transcript_to(&b, &mut y).unwrap();
        assert_eq!(x, y);
    }
}
