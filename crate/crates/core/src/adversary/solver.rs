//! Gauss–Jordan elimination over `Z_M` and the row-space membership test
//! that decides whether a linear functional is pinned down by a system.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Field, FieldElement};

/// A quantity the adversary does not observe directly.
///
/// Ordering is lexicographic by variant and then by fields, which fixes the
/// column order of every system built from a view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UnknownId {
    /// Segment `index` of party `origin` (for the baseline, index 0 is the
    /// whole input).
    Segment { origin: usize, index: usize },
    /// The value `party` adds in `round`, after its private reshuffle.
    Slot { party: usize, round: usize },
    /// The baseline initiator's random mask.
    Mask,
}

impl fmt::Display for UnknownId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnknownId::Segment { origin, index } => write!(f, "d[{origin}][{index}]"),
            UnknownId::Slot { party, round } => write!(f, "h[{party}][{round}]"),
            UnknownId::Mask => f.write_str("R"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("inconsistent system: row {row} reduces to 0 = {rhs}")]
    Inconsistent { row: usize, rhs: FieldElement },
    #[error("row {row} has {len} coefficients, expected {expected}")]
    Shape { row: usize, len: usize, expected: usize },
}

/// `rows · u = rhs` over a catalog of unknowns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearSystem {
    pub field: Field,
    pub catalog: Vec<UnknownId>,
    pub rows: Vec<Vec<FieldElement>>,
    pub rhs: Vec<FieldElement>,
}

/// `coeffs · u + constant`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Objective {
    pub coeffs: Vec<FieldElement>,
    pub constant: FieldElement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Determined(FieldElement),
    Underdetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackVerdict {
    pub outcome: Outcome,
    pub rank: usize,
    pub unknowns: usize,
}

impl AttackVerdict {
    pub fn is_determined(&self) -> bool {
        matches!(self.outcome, Outcome::Determined(_))
    }

    pub fn value(&self) -> Option<FieldElement> {
        match self.outcome {
            Outcome::Determined(v) => Some(v),
            Outcome::Underdetermined => None,
        }
    }
}

impl LinearSystem {
    pub fn new(field: Field, catalog: Vec<UnknownId>) -> Self {
        LinearSystem { field, catalog, rows: Vec::new(), rhs: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<FieldElement>, rhs: FieldElement) {
        self.rows.push(row);
        self.rhs.push(rhs);
    }

    pub fn unknowns(&self) -> usize {
        self.catalog.len()
    }
}

/// Reduced row echelon form of an augmented system.
struct Echelon {
    rows: Vec<Vec<FieldElement>>,
    rhs: Vec<FieldElement>,
    pivots: Vec<usize>,
}

fn eliminate(system: &LinearSystem) -> Result<Echelon, SolveError> {
    let f = system.field;
    let n = system.unknowns();
    for (row, r) in system.rows.iter().enumerate() {
        if r.len() != n {
            return Err(SolveError::Shape { row, len: r.len(), expected: n });
        }
    }
    let mut rows = system.rows.clone();
    let mut rhs = system.rhs.clone();
    let mut pivots = Vec::new();
    let mut next = 0;

    for col in 0..n {
        if next == rows.len() {
            break;
        }
        let Some(found) = (next..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(next, found);
        rhs.swap(next, found);

        let inv = f.inv(rows[next][col]).expect("pivot is nonzero");
        for x in rows[next][col..].iter_mut() {
            *x = f.mul(*x, inv);
        }
        rhs[next] = f.mul(rhs[next], inv);

        for r in 0..rows.len() {
            if r == next || rows[r][col].is_zero() {
                continue;
            }
            let factor = rows[r][col];
            let (pivot_row, target) = if r < next {
                let (lo, hi) = rows.split_at_mut(next);
                (&hi[0], &mut lo[r])
            } else {
                let (lo, hi) = rows.split_at_mut(r);
                (&lo[next], &mut hi[0])
            };
            for c in col..n {
                if !pivot_row[c].is_zero() {
                    target[c] = f.sub(target[c], f.mul(factor, pivot_row[c]));
                }
            }
            rhs[r] = f.sub(rhs[r], f.mul(factor, rhs[next]));
        }
        pivots.push(col);
        next += 1;
    }

    if let Some(row) = (next..rows.len()).find(|&r| !rhs[r].is_zero()) {
        return Err(SolveError::Inconsistent { row, rhs: rhs[row] });
    }
    Ok(Echelon { rows, rhs, pivots })
}

/// Decides whether `objective` takes a single value on every solution of
/// `system`. That holds exactly when its coefficient vector lies in the row
/// space; the value is read off the reduced rows.
pub fn solve(system: &LinearSystem, objective: &Objective) -> Result<AttackVerdict, SolveError> {
    let f = system.field;
    let n = system.unknowns();
    if objective.coeffs.len() != n {
        return Err(SolveError::Shape { row: usize::MAX, len: objective.coeffs.len(), expected: n });
    }
    let ech = eliminate(system)?;
    let mut residual = objective.coeffs.clone();
    let mut value = objective.constant;
    for (i, &col) in ech.pivots.iter().enumerate() {
        let c = residual[col];
        if c.is_zero() {
            continue;
        }
        for (x, &p) in residual.iter_mut().zip(&ech.rows[i]).skip(col) {
            *x = f.sub(*x, f.mul(c, p));
        }
        value = f.add(value, f.mul(c, ech.rhs[i]));
    }
    let outcome = if residual.iter().all(|x| x.is_zero()) {
        Outcome::Determined(value)
    } else {
        Outcome::Underdetermined
    };
    Ok(AttackVerdict { outcome, rank: ech.pivots.len(), unknowns: n })
}
