//! Oracles shared by the integration suites. Nothing here calls the code
//! paths it is used to check.

#![allow(dead_code)]

use std::collections::BTreeSet;

use dksum::adversary::{LinearSystem, Objective, UnknownId};
use dksum::field::{Field, FieldRng, Seed};

/// Plain signed sum.
pub fn plain_sum(inputs: &[i64]) -> i64 {
    inputs.iter().sum()
}

/// A random consistent system over `Z_7` with at most six unknowns, plus a
/// random objective.
pub fn random_tiny_system(seed: Seed) -> (LinearSystem, Objective) {
    let f = Field::tiny();
    let mut rng = FieldRng::new(seed);
    let n = 1 + rng.below(6) as usize;
    let m = rng.below(n as u64 + 2) as usize;
    let truth: Vec<u64> = (0..n).map(|_| rng.below(7)).collect();
    let catalog = (0..n).map(|i| UnknownId::Segment { origin: 0, index: i }).collect();
    let mut system = LinearSystem::new(f, catalog);
    // sparse-ish coefficients so rank deficiency is common
    let coeff = |rng: &mut FieldRng| if rng.below(3) == 0 { 0 } else { rng.below(7) };
    for _ in 0..m {
        let row: Vec<u64> = (0..n).map(|_| coeff(&mut rng)).collect();
        let rhs = row.iter().zip(&truth).map(|(a, x)| a * x).sum::<u64>() % 7;
        system.push(row.into_iter().map(|a| f.element(a)).collect(), f.element(rhs));
    }
    let coeffs = (0..n).map(|_| f.element(coeff(&mut rng))).collect();
    (system, Objective { coeffs, constant: f.element(rng.below(7)) })
}

/// Exhaustive enumeration over all `7^n` assignments. Returns the set of
/// objective values taken on the solution set.
pub fn enumerate_objective_values(system: &LinearSystem, objective: &Objective) -> BTreeSet<u64> {
    let p = 7u64;
    let n = system.catalog.len();
    let rows: Vec<Vec<u64>> =
        system.rows.iter().map(|r| r.iter().map(|x| x.value()).collect()).collect();
    let rhs: Vec<u64> = system.rhs.iter().map(|x| x.value()).collect();
    let obj: Vec<u64> = objective.coeffs.iter().map(|x| x.value()).collect();
    let mut values = BTreeSet::new();
    let mut assignment = vec![0u64; n];
    for code in 0..p.pow(n as u32) {
        let mut c = code;
        for slot in assignment.iter_mut() {
            *slot = c % p;
            c /= p;
        }
        let dot = |coeffs: &[u64]| coeffs.iter().zip(&assignment).map(|(a, x)| a * x).sum::<u64>() % p;
        if rows.iter().zip(&rhs).all(|(r, &b)| dot(r) == b) {
            values.insert((dot(&obj) + objective.constant.value()) % p);
        }
    }
    values
}
