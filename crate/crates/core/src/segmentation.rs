//! Additive segmentation of inputs and the redistribution of segments
//! among parties.
//!
//! Party `i` keeps segment `0` and sends segment `j` (for `1 <= j < k`) to
//! party `(i + j) mod k`. After redistribution party `p` holds, at position
//! `m`, the `m`-th segment of party `(p - m) mod k`, so every party holds
//! exactly one segment from each origin.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Field, FieldElement, FieldRng};

/// Smallest ring on which redistribution and neighbor collusion make sense.
pub const MIN_PARTIES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegmentationError {
    #[error("segment count must be at least 1")]
    ZeroSegments,
    #[error("cannot reassemble an empty row")]
    EmptyRow,
    #[error("k must be ≥ 3 (got {0})")]
    TooFewParties(usize),
    #[error("segment matrix is not square: row {row} has {len} entries, expected {k}")]
    NotSquare { row: usize, len: usize, k: usize },
    #[error("expected {expected} party streams, got {got}")]
    StreamCount { expected: usize, got: usize },
}

/// Provenance of a segment: which party produced it and its index in that
/// party's segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SegmentTag {
    pub origin: usize,
    pub index: usize,
}

/// Splits `x` into `k` additive shares: `k - 1` uniform draws followed by the
/// correction term.
pub fn segment(
    field: Field,
    x: FieldElement,
    k: usize,
    rng: &mut FieldRng,
) -> Result<Vec<FieldElement>, SegmentationError> {
    if k == 0 {
        return Err(SegmentationError::ZeroSegments);
    }
    let mut row: Vec<FieldElement> = (0..k - 1).map(|_| field.sample(rng)).collect();
    let drawn = field.sum(row.iter().copied());
    row.push(field.sub(x, drawn));
    Ok(row)
}

pub fn reassemble(field: Field, row: &[FieldElement]) -> Result<FieldElement, SegmentationError> {
    if row.is_empty() {
        return Err(SegmentationError::EmptyRow);
    }
    Ok(field.sum(row.iter().copied()))
}

/// Party that receives segment `index` of `origin`.
pub fn destination(k: usize, origin: usize, index: usize) -> usize {
    (origin + index) % k
}

/// Segment index carried on the edge `origin -> receiver`.
pub fn index_for(k: usize, origin: usize, receiver: usize) -> usize {
    (receiver + k - origin) % k
}

/// `d[i][j]`: the `j`-th segment of party `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMatrix {
    rows: Vec<Vec<FieldElement>>,
}

impl SegmentMatrix {
    pub fn new(rows: Vec<Vec<FieldElement>>) -> Result<Self, SegmentationError> {
        let k = rows.len();
        if k < MIN_PARTIES {
            return Err(SegmentationError::TooFewParties(k));
        }
        if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != k) {
            return Err(SegmentationError::NotSquare { row, len: r.len(), k });
        }
        Ok(SegmentMatrix { rows })
    }

    /// Segments every secret with its own party stream.
    pub fn generate(
        field: Field,
        secrets: &[FieldElement],
        rngs: &mut [FieldRng],
    ) -> Result<Self, SegmentationError> {
        let k = secrets.len();
        if rngs.len() != k {
            return Err(SegmentationError::StreamCount { expected: k, got: rngs.len() });
        }
        let rows = secrets
            .iter()
            .zip(rngs.iter_mut())
            .map(|(&x, rng)| segment(field, x, k, rng))
            .collect::<Result<Vec<_>, _>>()?;
        SegmentMatrix::new(rows)
    }

    pub fn k(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, origin: usize, index: usize) -> FieldElement {
        self.rows[origin][index]
    }

    pub fn row(&self, origin: usize) -> &[FieldElement] {
        &self.rows[origin]
    }

    pub fn rows(&self) -> &[Vec<FieldElement>] {
        &self.rows
    }
}

/// A single held segment with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Held {
    pub value: FieldElement,
    pub tag: SegmentTag,
}

/// `h[p][r]`: the segment party `p` adds in round `r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldingMatrix {
    rows: Vec<Vec<Held>>,
}

impl HoldingMatrix {
    pub fn from_rows(rows: Vec<Vec<Held>>) -> Self {
        HoldingMatrix { rows }
    }

    pub fn k(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, party: usize) -> &[Held] {
        &self.rows[party]
    }

    pub fn rows(&self) -> &[Vec<Held>] {
        &self.rows
    }

    pub fn value(&self, party: usize, round: usize) -> FieldElement {
        self.rows[party][round].value
    }

    pub fn origin(&self, party: usize, round: usize) -> SegmentTag {
        self.rows[party][round].tag
    }

    pub fn into_rows(self) -> Vec<Vec<Held>> {
        self.rows
    }
}

/// Applies the rotation assignment. The result is ordered by origin offset,
/// i.e. before any reshuffle.
pub fn redistribute(d: &SegmentMatrix) -> Result<HoldingMatrix, SegmentationError> {
    let k = d.k();
    if k < MIN_PARTIES {
        return Err(SegmentationError::TooFewParties(k));
    }
    let rows = (0..k)
        .map(|p| {
            (0..k)
                .map(|m| {
                    let origin = (p + k - m) % k;
                    Held { value: d.get(origin, m), tag: SegmentTag { origin, index: m } }
                })
                .collect()
        })
        .collect();
    Ok(HoldingMatrix { rows })
}

/// Fisher–Yates over one party's holding, drawing from that party's stream.
pub fn shuffle_row(row: &mut [Held], rng: &mut FieldRng) {
    for i in (1..row.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        row.swap(i, j);
    }
}

/// Independently permutes every party's row with its own stream.
pub fn reshuffle(
    h: &HoldingMatrix,
    rngs: &mut [FieldRng],
) -> Result<HoldingMatrix, SegmentationError> {
    if rngs.len() != h.k() {
        return Err(SegmentationError::StreamCount { expected: h.k(), got: rngs.len() });
    }
    let mut rows = h.rows.clone();
    for (row, rng) in rows.iter_mut().zip(rngs.iter_mut()) {
        shuffle_row(row, rng);
    }
    Ok(HoldingMatrix { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Seed;

    fn streams(seed: u64, k: usize) -> Vec<FieldRng> {
        (0..k).map(|p| FieldRng::new(Seed(seed).split(p as u64))).collect()
    }

    #[test]
    fn segment_sums_to_input() {
        let f = Field::standard();
        let mut rng = FieldRng::new(Seed(3));
        let x = f.encode(40);
        let row = segment(f, x, 4, &mut rng).unwrap();
        assert_eq!(row.len(), 4);
        assert_eq!(reassemble(f, &row).unwrap(), x);

        let e = f.encode(-17);
        assert_eq!(segment(f, e, 1, &mut rng).unwrap(), vec![e]);
        let z = segment(f, f.zero(), 3, &mut rng).unwrap();
        assert_eq!(reassemble(f, &z).unwrap(), f.zero());
        assert_eq!(segment(f, x, 0, &mut rng), Err(SegmentationError::ZeroSegments));
    }

    #[test]
    fn reassemble_examples() {
        let f = Field::standard();
        assert_eq!(reassemble(f, &[f.element(15)]).unwrap(), f.element(15));
        assert_eq!(reassemble(f, &[f.element(f.modulus() - 1), f.one()]).unwrap(), f.zero());
        assert_eq!(reassemble(f, &[]), Err(SegmentationError::EmptyRow));
    }

    #[test]
    fn redistribute_rotation_k4() {
        let f = Field::standard();
        let rows: Vec<Vec<FieldElement>> = (0..4)
            .map(|i| (0..4).map(|j| f.element(10 * i + j)).collect())
            .collect();
        let d = SegmentMatrix::new(rows).unwrap();
        let h = redistribute(&d).unwrap();
        // party 1 keeps d[1][0] and sends d[1][1..] to P2, P3, P0
        assert_eq!(h.origin(1, 0), SegmentTag { origin: 1, index: 0 });
        for (j, to) in [(1, 2), (2, 3), (3, 0)] {
            assert!(h.row(to).iter().any(|held| held.tag == SegmentTag { origin: 1, index: j }));
            assert_eq!(destination(4, 1, j), to);
            assert_eq!(index_for(4, 1, to), j);
        }
        for p in 0..4 {
            let mut origins: Vec<usize> = h.row(p).iter().map(|x| x.tag.origin).collect();
            origins.sort_unstable();
            assert_eq!(origins, vec![0, 1, 2, 3]);
        }
        let mut all_d: Vec<u64> = d.rows().iter().flatten().map(|x| x.value()).collect();
        let mut all_h: Vec<u64> = h.rows().iter().flatten().map(|x| x.value.value()).collect();
        all_d.sort_unstable();
        all_h.sort_unstable();
        assert_eq!(all_d, all_h);
    }

    #[test]
    fn redistribute_rejects_small_rings() {
        let f = Field::standard();
        assert_eq!(
            SegmentMatrix::new(vec![vec![f.zero(); 2]; 2]),
            Err(SegmentationError::TooFewParties(2))
        );
    }

    #[test]
    fn reshuffle_keeps_row_sums_and_is_deterministic() {
        let f = Field::standard();
        let secrets: Vec<FieldElement> = (0..5).map(|i| f.encode(i * 11 - 20)).collect();
        let d = SegmentMatrix::generate(f, &secrets, &mut streams(9, 5)).unwrap();
        let h = redistribute(&d).unwrap();
        let a = reshuffle(&h, &mut streams(77, 5)).unwrap();
        let b = reshuffle(&h, &mut streams(77, 5)).unwrap();
        assert_eq!(a, b);
        for p in 0..5 {
            let before = f.sum(h.row(p).iter().map(|x| x.value));
            let after = f.sum(a.row(p).iter().map(|x| x.value));
            assert_eq!(before, after);
            assert!(a.row(p).iter().all(|x| d.get(x.tag.origin, x.tag.index) == x.value));
        }
    }

    #[test]
    fn shuffle_is_uniform_over_permutations() {
        let tag = |i| Held { value: FieldElement::ZERO, tag: SegmentTag { origin: i, index: 0 } };
        let mut counts = std::collections::HashMap::new();
        let trials = 10_000;
        for t in 0..trials {
            let mut row: Vec<Held> = (0..4).map(tag).collect();
            let mut rng = FieldRng::new(Seed(5).split(t));
            shuffle_row(&mut row, &mut rng);
            let perm: Vec<usize> = row.iter().map(|h| h.tag.origin).collect();
            *counts.entry(perm).or_insert(0u32) += 1;
        }
        assert_eq!(counts.len(), 24);
        for (perm, c) in counts {
            let freq = c as f64 / trials as f64;
            assert!((freq - 1.0 / 24.0).abs() <= 0.02, "{perm:?} frequency {freq}");
        }
    }
}
