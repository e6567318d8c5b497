//! Trend counts of disjunctive and conjunctive patterns from the counts of
//! their operands.
//!
//! `c1` and `c2` count trends matched only by the first or only by the
//! second operand, `c12` those matched by both.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::Zero;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trend counts must be non-negative, got {0}")]
pub struct NegativeCount(pub BigInt);

fn check(values: [&BigInt; 3]) -> Result<[BigUint; 3], NegativeCount> {
    let mut out: [BigUint; 3] = Default::default();
    for (slot, v) in out.iter_mut().zip(values) {
        if v.sign() == Sign::Minus {
            return Err(NegativeCount(v.clone()));
        }
        *slot = v.magnitude().clone();
    }
    Ok(out)
}

/// Trends matched by either operand: `c1 + c2 + c12`.
pub fn combine_disjunction(
    c1: &BigInt,
    c2: &BigInt,
    c12: &BigInt,
) -> Result<BigUint, NegativeCount> {
    let [a, b, both] = check([c1, c2, c12])?;
    Ok(a + b + both)
}

/// Unordered pairs of distinct trends, one matched by each operand:
/// `c1*c2 + c1*c12 + c2*c12 + c12*(c12-1)/2`.
pub fn combine_conjunction(
    c1: &BigInt,
    c2: &BigInt,
    c12: &BigInt,
) -> Result<BigUint, NegativeCount> {
    let [a, b, both] = check([c1, c2, c12])?;
    let pairs_within = if both.is_zero() {
        BigUint::zero()
    } else {
        &both * (&both - 1u32) / 2u32
    };
    Ok(&a * &b + &a * &both + &b * &both + pairs_within)
}
