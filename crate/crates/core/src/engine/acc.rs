//! Intermediate aggregate values.
//!
//! An [`Acc`] holds the number of trends ending at an event plus, for
//! weighted aggregates, the sum of an attribute over all events of those
//! trends and the number of such events. The same type doubles as a
//! coefficient inside a snapshot expression.

use alloc::boxed::Box;
use core::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::Zero;

#[derive(Clone, Default)]
pub struct Acc {
    pub count: BigUint,
    weighted: Option<Box<Weighted>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Weighted {
    sum: BigRational,
    events: BigUint,
}

/// Per-event contribution: `value` is added once per trend, `delta` counts
/// the event itself.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Weight {
    pub value: Option<BigRational>,
    pub delta: bool,
}

impl Weight {
    pub const IDENTITY: Weight = Weight {
        value: None,
        delta: false,
    };

    pub fn is_identity(&self) -> bool {
        !self.delta && self.value.as_ref().is_none_or(Zero::is_zero)
    }
}

fn uint_to_rational(n: &BigUint) -> BigRational {
    BigRational::from_integer(BigInt::from(n.clone()))
}

impl Acc {
    pub fn zero() -> Acc {
        Acc::default()
    }

    pub fn one() -> Acc {
        Acc::from_count(1u32)
    }

    pub fn from_count(n: impl Into<BigUint>) -> Acc {
        Acc {
            count: n.into(),
            weighted: None,
        }
    }

    pub fn with_parts(count: BigUint, sum: BigRational, events: BigUint) -> Acc {
        let mut acc = Acc::from_count(count);
        if !sum.is_zero() || !events.is_zero() {
            acc.weighted = Some(Box::new(Weighted { sum, events }));
        }
        acc
    }

    pub fn sum(&self) -> BigRational {
        self.weighted
            .as_ref()
            .map_or_else(BigRational::zero, |w| w.sum.clone())
    }

    pub fn events(&self) -> BigUint {
        self.weighted
            .as_ref()
            .map_or_else(BigUint::zero, |w| w.events.clone())
    }

    pub fn is_zero(&self) -> bool {
        self.count.is_zero()
            && self
                .weighted
                .as_ref()
                .is_none_or(|w| w.sum.is_zero() && w.events.is_zero())
    }

    fn weighted_mut(&mut self) -> &mut Weighted {
        self.weighted.get_or_insert_with(|| {
            Box::new(Weighted {
                sum: BigRational::zero(),
                events: BigUint::zero(),
            })
        })
    }

    pub fn add_assign(&mut self, other: &Acc) {
        self.count += &other.count;
        if let Some(o) = &other.weighted {
            let w = self.weighted_mut();
            w.sum += &o.sum;
            w.events += &o.events;
        }
    }

    /// `(c, s, ce) -> (c, s + value*c, ce + delta*c)`.
    pub fn apply(&mut self, weight: &Weight) {
        if weight.is_identity() || self.count.is_zero() {
            return;
        }
        let count = self.count.clone();
        let w = self.weighted_mut();
        if let Some(v) = &weight.value {
            w.sum += v * uint_to_rational(&count);
        }
        if weight.delta {
            w.events += count;
        }
    }

    /// Treats `self` as a coefficient applied to a snapshot value:
    /// `(a, b, g) * (c, s, ce) = (a*c, a*s + b*c, a*ce + g*c)`.
    pub fn times(&self, value: &Acc) -> Acc {
        let count = &self.count * &value.count;
        if self.weighted.is_none() && value.weighted.is_none() {
            return Acc::from_count(count);
        }
        let mut sum = uint_to_rational(&self.count) * value.sum();
        let mut events = &self.count * value.events();
        if let Some(w) = &self.weighted {
            sum += &w.sum * uint_to_rational(&value.count);
            events += &w.events * &value.count;
        }
        Acc::with_parts(count, sum, events)
    }

    /// Multiplies every slot by a non-negative integer.
    pub fn scale(&mut self, k: &BigUint) {
        self.count *= k;
        if let Some(w) = &mut self.weighted {
            w.sum *= uint_to_rational(k);
            w.events *= k;
        }
    }

    pub fn approx_bytes(&self) -> usize {
        let limb = |n: &BigUint| (n.bits() as usize).div_ceil(64) * 8;
        let base = 32 + limb(&self.count);
        match &self.weighted {
            None => base,
            Some(w) => {
                base + 48
                    + limb(&w.events)
                    + (w.sum.numer().bits() as usize + w.sum.denom().bits() as usize) / 8
            }
        }
    }
}

impl PartialEq for Acc {
    fn eq(&self, other: &Acc) -> bool {
        self.count == other.count && self.sum() == other.sum() && self.events() == other.events()
    }
}

impl Eq for Acc {}

impl fmt::Debug for Acc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.weighted {
            None => write!(f, "{}", self.count),
            Some(w) => write!(f, "({}, {}, {})", self.count, w.sum, w.events),
        }
    }
}

impl From<u64> for Acc {
    fn from(n: u64) -> Acc {
        Acc::from_count(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: i64, delta: bool) -> Weight {
        Weight {
            value: Some(BigRational::from_integer(v.into())),
            delta,
        }
    }

    #[test]
    fn apply_adds_weight_per_trend() {
        let mut a = Acc::from_count(3u32);
        a.apply(&w(5, true));
        assert_eq!(a.sum(), BigRational::from_integer(15.into()));
        assert_eq!(a.events(), BigUint::from(3u32));
    }

    #[test]
    fn coefficient_product_matches_application() {
        // Applying a weight to a snapshot value equals multiplying the
        // value by the weighted identity coefficient.
        let value = Acc::with_parts(
            4u32.into(),
            BigRational::from_integer(7.into()),
            2u32.into(),
        );
        let mut coef = Acc::one();
        coef.apply(&w(3, true));
        let mut direct = value.clone();
        direct.apply(&w(3, true));
        assert_eq!(coef.times(&value), direct);
    }

    #[test]
    fn zero_equality_ignores_representation() {
        let mut a = Acc::zero();
        a.add_assign(&Acc::with_parts(
            0u32.into(),
            BigRational::zero(),
            0u32.into(),
        ));
        assert_eq!(a, Acc::zero());
        assert!(a.is_zero());
    }
}
