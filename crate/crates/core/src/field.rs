//! Prime-field arithmetic, signed input encoding and seeded randomness.
//!
//! Every protocol value lives in `Z_M` for a prime `M`. The standard profile
//! uses the Mersenne prime `2^61 - 1`; the tiny profile uses `M = 7` so that
//! solver results can be checked by exhaustive enumeration.

use std::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The Mersenne prime `2^61 - 1`.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

/// Modulus used for exhaustive oracle checks.
pub const TINY_MODULUS: u64 = 7;

/// Default bound on the magnitude of a party's input.
pub const DEFAULT_INPUT_BOUND: u64 = 1_000_000_000;

/// Identifier of the stream generator, echoed into transcript headers.
pub const GENERATOR_ID: &str = "chacha8/seed_from_u64";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("decode bound {bound} must be below (M-1)/2 = {limit}")]
    BoundTooLarge { bound: u64, limit: u64 },
    #[error("residue {residue} does not decode to a value within bound {bound}")]
    OutOfRange { residue: u64, bound: u64 },
    #[error("input {value} exceeds bound {bound}")]
    InputExceedsBound { value: i64, bound: u64 },
    #[error("unsupported modulus {0}")]
    UnsupportedModulus(u64),
}

/// Selects the modulus a run works over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModulusProfile {
    #[default]
    Standard,
    Tiny,
}

impl ModulusProfile {
    pub fn modulus(self) -> u64 {
        match self {
            ModulusProfile::Standard => MERSENNE_61,
            ModulusProfile::Tiny => TINY_MODULUS,
        }
    }

    pub fn field(self) -> Field {
        Field { modulus: self.modulus() }
    }
}

/// A residue in `[0, M)`. The modulus is carried by the [`Field`] that
/// produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FieldElement(u64);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Arithmetic context for `Z_M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Field {
    modulus: u64,
}

impl Field {
    pub const fn standard() -> Self {
        Field { modulus: MERSENNE_61 }
    }

    pub const fn tiny() -> Self {
        Field { modulus: TINY_MODULUS }
    }

    /// Field for a modulus read back from a transcript header.
    pub fn from_modulus(modulus: u64) -> Result<Self, FieldError> {
        match modulus {
            MERSENNE_61 | TINY_MODULUS => Ok(Field { modulus }),
            other => Err(FieldError::UnsupportedModulus(other)),
        }
    }

    pub fn modulus(self) -> u64 {
        self.modulus
    }

    /// `(M - 1) / 2`, the exclusive ceiling on any decodable magnitude.
    pub fn half(self) -> u64 {
        (self.modulus - 1) / 2
    }

    /// Reduces an arbitrary `u64` into the field.
    pub fn element(self, value: u64) -> FieldElement {
        FieldElement(value % self.modulus)
    }

    pub fn zero(self) -> FieldElement {
        FieldElement(0)
    }

    pub fn one(self) -> FieldElement {
        FieldElement(1 % self.modulus)
    }

    pub fn add(self, a: FieldElement, b: FieldElement) -> FieldElement {
        // both operands < 2^61, so the sum cannot overflow
        let s = a.0 + b.0;
        FieldElement(if s >= self.modulus { s - self.modulus } else { s })
    }

    pub fn sub(self, a: FieldElement, b: FieldElement) -> FieldElement {
        if a.0 >= b.0 {
            FieldElement(a.0 - b.0)
        } else {
            FieldElement(a.0 + self.modulus - b.0)
        }
    }

    pub fn neg(self, a: FieldElement) -> FieldElement {
        self.sub(FieldElement(0), a)
    }

    pub fn mul(self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(((a.0 as u128 * b.0 as u128) % self.modulus as u128) as u64)
    }

    pub fn pow(self, base: FieldElement, mut exp: u64) -> FieldElement {
        let mut acc = self.one();
        let mut b = base;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat; `None` for zero.
    pub fn inv(self, a: FieldElement) -> Option<FieldElement> {
        if a.is_zero() {
            None
        } else {
            Some(self.pow(a, self.modulus - 2))
        }
    }

    pub fn sum<I: IntoIterator<Item = FieldElement>>(self, items: I) -> FieldElement {
        items.into_iter().fold(self.zero(), |acc, x| self.add(acc, x))
    }

    /// Lifts a signed integer into the field; negatives wrap to `M - |x|`.
    pub fn encode(self, x: i64) -> FieldElement {
        let m = self.modulus as i128;
        FieldElement((x as i128).rem_euclid(m) as u64)
    }

    /// Checks `|x| <= bound` and encodes.
    pub fn encode_bounded(self, x: i64, bound: u64) -> Result<FieldElement, FieldError> {
        if x.unsigned_abs() > bound {
            return Err(FieldError::InputExceedsBound { value: x, bound });
        }
        Ok(self.encode(x))
    }

    /// Inverse of [`Field::encode`] for values known to satisfy `|x| <= bound`.
    pub fn decode(self, e: FieldElement, bound: u64) -> Result<i64, FieldError> {
        let limit = self.half();
        if bound >= limit {
            return Err(FieldError::BoundTooLarge { bound, limit });
        }
        if e.0 <= bound {
            Ok(e.0 as i64)
        } else if e.0 >= self.modulus - bound {
            Ok(-((self.modulus - e.0) as i64))
        } else {
            Err(FieldError::OutOfRange { residue: e.0, bound })
        }
    }

    /// Uniform draw from `[0, M)` by rejection on the low bits.
    pub fn sample(self, rng: &mut FieldRng) -> FieldElement {
        FieldElement(rng.below(self.modulus))
    }
}

/// A 64-bit master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    /// Derives an independent child seed for `label`.
    ///
    /// The map `label -> seed` is injective for a fixed master: the input to
    /// the SplitMix64 finalizer is `master + (label + 1) * φ` with odd `φ`,
    /// and the finalizer is a bijection on `u64`.
    pub fn split(self, label: u64) -> Seed {
        Seed(mix64(
            self.0
                .wrapping_add(label.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        ))
    }
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Free-function form of [`Seed::split`].
pub fn split_seed(master: Seed, label: u64) -> Seed {
    master.split(label)
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic stream derived from a [`Seed`]. Passed by `&mut`, never shared.
#[derive(Debug, Clone)]
pub struct FieldRng {
    inner: ChaCha8Rng,
}

impl FieldRng {
    pub fn new(seed: Seed) -> Self {
        FieldRng { inner: ChaCha8Rng::seed_from_u64(seed.0) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `[0, n)`, `n > 0`, by masked rejection.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        if n == 1 {
            return 0;
        }
        let mask = u64::MAX >> (n - 1).leading_zeros();
        loop {
            let v = self.inner.next_u64() & mask;
            if v < n {
                return v;
            }
        }
    }

    /// Uniform signed integer in `[-bound, bound]`.
    pub fn signed_within(&mut self, bound: u64) -> i64 {
        let span = 2 * bound + 1;
        self.below(span) as i64 - bound as i64
    }
}
