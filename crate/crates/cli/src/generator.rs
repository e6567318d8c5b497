//! Seeded synthetic stream generator.
//!
//! The stream is a sequence of bursts. Each burst picks a type with
//! probability proportional to its rate and a length from that type's burst
//! range. Timestamps advance at `events_per_minute`, one time unit being a
//! second, so a window of `w` units holds about `events_per_minute * w / 60`
//! events.

use anyhow::{ensure, Result};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trendshare_core::event::EventType;
use trendshare_core::{AttrKind, Event, Schema, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSpec {
    pub name: String,
    pub rate: f64,
    /// Inclusive burst length range.
    #[serde(default = "one_one")]
    pub burst: (u32, u32),
}

fn one_one() -> (u32, u32) {
    (1, 1)
}

/// Integer attribute carried by every generated event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrSpec {
    pub name: String,
    pub min: i64,
    pub max: i64,
    /// Probability that a value falls in the lower half of the range, so a
    /// predicate `attr < midpoint` passes about this often. Uniform when
    /// absent.
    #[serde(default)]
    pub selectivity: Option<f64>,
    /// Alternate between bursts whose events all carry one value and bursts
    /// whose values are drawn per event.
    #[serde(default)]
    pub alternate: bool,
}

impl AttrSpec {
    pub fn midpoint(&self) -> i64 {
        self.min + (self.max - self.min + 1) / 2
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> i64 {
        let mid = self.midpoint();
        match self.selectivity {
            Some(s) if mid > self.min && mid <= self.max => {
                if rng.gen_bool(s) {
                    rng.gen_range(self.min..mid)
                } else {
                    rng.gen_range(mid..=self.max)
                }
            }
            _ => rng.gen_range(self.min..=self.max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub types: Vec<TypeSpec>,
    #[serde(default)]
    pub attrs: Vec<AttrSpec>,
    pub events_per_minute: u64,
    /// Stream length in time units.
    pub duration: u64,
    /// Hard limit on the number of events, applied after `duration`.
    #[serde(default)]
    pub max_events: Option<usize>,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            !self.types.is_empty(),
            "generator needs at least one event type"
        );
        ensure!(
            self.events_per_minute > 0,
            "events_per_minute must be positive"
        );
        for t in &self.types {
            ensure!(
                t.rate > 0.0 && t.rate.is_finite(),
                "type {}: rate must be positive",
                t.name
            );
            ensure!(
                t.burst.0 >= 1 && t.burst.0 <= t.burst.1,
                "type {}: burst range must satisfy 1 <= min <= max",
                t.name
            );
        }
        for a in &self.attrs {
            ensure!(a.min <= a.max, "attribute {}: min exceeds max", a.name);
            if let Some(s) = a.selectivity {
                ensure!(
                    (0.0..=1.0).contains(&s),
                    "attribute {}: selectivity must lie in [0, 1]",
                    a.name
                );
            }
        }
        Ok(())
    }

    /// Every type carries every generated attribute as an integer.
    pub fn schema(&self) -> Result<Schema> {
        Ok(Schema::new(self.types.iter().map(|t| {
            EventType {
                name: t.name.clone(),
                attrs: self
                    .attrs
                    .iter()
                    .map(|a| (a.name.clone(), AttrKind::Integer))
                    .collect(),
            }
        }))?)
    }

    pub fn total_events(&self) -> usize {
        let n = (self.duration as u128 * self.events_per_minute as u128 / 60) as usize;
        self.max_events.map_or(n, |m| n.min(m))
    }

    pub fn generate(&self, seed: u64) -> Result<Vec<Event>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pick = WeightedIndex::new(self.types.iter().map(|t| t.rate))?;
        let total = self.total_events();
        let mut events = Vec::with_capacity(total);
        let mut burst_no = 0u64;
        while events.len() < total {
            let ty = &self.types[pick.sample(&mut rng)];
            let len = rng.gen_range(ty.burst.0..=ty.burst.1) as usize;
            let fixed: Vec<i64> = self.attrs.iter().map(|a| a.draw(&mut rng)).collect();
            let hold = burst_no % 2 == 1;
            for _ in 0..len.min(total - events.len()) {
                let time = events.len() as u64 * 60 / self.events_per_minute;
                let mut e = Event::new(time, ty.name.clone());
                for (a, &f) in self.attrs.iter().zip(&fixed) {
                    let v = if a.alternate && hold {
                        f
                    } else {
                        a.draw(&mut rng)
                    };
                    e.attrs.insert(a.name.clone(), Value::Int(v));
                }
                events.push(e);
            }
            burst_no += 1;
        }
        Ok(events)
    }
}
