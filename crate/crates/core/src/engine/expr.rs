//! Snapshot expressions and the per-graphlet snapshot table.

use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigUint;
use thiserror::Error;

use super::acc::{Acc, Weight};

/// Index of a snapshot inside one graphlet's table.
pub type SnapshotId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("snapshot {0} has no value for column {1}")]
    MissingSnapshot(SnapshotId, usize),
}

/// `constant + sum(coef_i * snapshot_i)`, terms sorted by snapshot id, no
/// zero coefficients.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct SnapshotExpr {
    constant: Acc,
    terms: Vec<(SnapshotId, Acc)>,
}

impl SnapshotExpr {
    pub fn zero() -> SnapshotExpr {
        SnapshotExpr::default()
    }

    pub fn constant(value: Acc) -> SnapshotExpr {
        SnapshotExpr {
            constant: value,
            terms: Vec::new(),
        }
    }

    pub fn snapshot(id: SnapshotId) -> SnapshotExpr {
        SnapshotExpr::term(id, Acc::one())
    }

    pub fn term(id: SnapshotId, coef: Acc) -> SnapshotExpr {
        let terms = if coef.is_zero() {
            Vec::new()
        } else {
            alloc::vec![(id, coef)]
        };
        SnapshotExpr {
            constant: Acc::zero(),
            terms,
        }
    }

    pub fn constant_part(&self) -> &Acc {
        &self.constant
    }

    pub fn terms(&self) -> &[(SnapshotId, Acc)] {
        &self.terms
    }

    /// Number of distinct snapshots referenced.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty() && self.constant.is_zero()
    }

    pub fn coefficient(&self, id: SnapshotId) -> Option<&Acc> {
        self.terms
            .binary_search_by_key(&id, |(i, _)| *i)
            .ok()
            .map(|pos| &self.terms[pos].1)
    }

    pub fn add_assign(&mut self, other: &SnapshotExpr) {
        self.constant.add_assign(&other.constant);
        if other.terms.is_empty() {
            return;
        }
        if self.terms.is_empty() {
            self.terms = other.terms.clone();
            return;
        }
        if self.terms.len() == other.terms.len()
            && self.terms.iter().zip(&other.terms).all(|(a, b)| a.0 == b.0)
        {
            for (a, b) in self.terms.iter_mut().zip(&other.terms) {
                a.1.add_assign(&b.1);
            }
            self.terms.retain(|(_, c)| !c.is_zero());
            return;
        }
        let mut merged = Vec::with_capacity(self.terms.len() + other.terms.len());
        let mut mine = core::mem::take(&mut self.terms).into_iter().peekable();
        let mut theirs = other.terms.iter().peekable();
        loop {
            match (mine.peek(), theirs.peek()) {
                (Some((a, _)), Some((b, _))) if a == b => {
                    let (id, mut coef) = mine.next().unwrap();
                    coef.add_assign(&theirs.next().unwrap().1);
                    merged.push((id, coef));
                }
                (Some((a, _)), Some((b, _))) if a < b => merged.push(mine.next().unwrap()),
                (Some(_), Some(_)) | (None, Some(_)) => merged.push(theirs.next().unwrap().clone()),
                (Some(_), None) => merged.push(mine.next().unwrap()),
                (None, None) => break,
            }
        }
        merged.retain(|(_, c)| !c.is_zero());
        self.terms = merged;
    }

    pub fn apply(&mut self, weight: &Weight) {
        if weight.is_identity() {
            return;
        }
        self.constant.apply(weight);
        for (_, coef) in &mut self.terms {
            coef.apply(weight);
        }
    }

    pub fn scale(&mut self, k: &BigUint) {
        if *k == BigUint::default() {
            *self = SnapshotExpr::zero();
            return;
        }
        self.constant.scale(k);
        for (_, coef) in &mut self.terms {
            coef.scale(k);
        }
    }

    /// Plugs in snapshot values; `lookup` returns `None` for a missing value.
    pub fn eval<'a>(
        &self,
        mut lookup: impl FnMut(SnapshotId) -> Option<&'a Acc>,
    ) -> Result<Acc, SnapshotId> {
        let mut out = self.constant.clone();
        for (id, coef) in &self.terms {
            let value = lookup(*id).ok_or(*id)?;
            out.add_assign(&coef.times(value));
        }
        Ok(out)
    }

    pub fn approx_bytes(&self) -> usize {
        self.constant.approx_bytes()
            + self
                .terms
                .iter()
                .map(|(_, c)| 8 + c.approx_bytes())
                .sum::<usize>()
    }
}

impl fmt::Debug for SnapshotExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        if !self.constant.is_zero() || self.terms.is_empty() {
            write!(f, "{:?}", self.constant)?;
            first = false;
        }
        for (id, coef) in &self.terms {
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            write!(f, "{coef:?}*s{id}")?;
        }
        Ok(())
    }
}

/// Values of a graphlet's snapshots: one row per snapshot, one column per
/// (query, window instance) context sharing the graphlet.
#[derive(Debug, Clone, Default)]
pub struct SnapshotTable {
    columns: usize,
    rows: Vec<Vec<Acc>>,
}

impl SnapshotTable {
    pub fn new(columns: usize) -> SnapshotTable {
        SnapshotTable {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Stores a new snapshot; `values` must have one entry per column.
    pub fn insert(&mut self, values: Vec<Acc>) -> SnapshotId {
        assert_eq!(values.len(), self.columns, "snapshot row width");
        self.rows.push(values);
        (self.rows.len() - 1) as SnapshotId
    }

    pub fn value(&self, id: SnapshotId, column: usize) -> Option<&Acc> {
        self.rows.get(id as usize)?.get(column)
    }

    pub fn evaluate(&self, expr: &SnapshotExpr, column: usize) -> Result<Acc, EvalError> {
        expr.eval(|id| self.value(id, column))
            .map_err(|id| EvalError::MissingSnapshot(id, column))
    }

    pub fn approx_bytes(&self) -> usize {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .map(Acc::approx_bytes)
            .sum::<usize>()
            + 24 * self.rows.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(n: u64) -> Acc {
        Acc::from(n)
    }

    #[test]
    fn evaluate_scaled_snapshot() {
        let mut table = SnapshotTable::new(2);
        let x = table.insert(alloc::vec![count(2), count(1)]);
        let mut e = SnapshotExpr::snapshot(x);
        e.scale(&BigUint::from(8u32));
        assert_eq!(table.evaluate(&e, 0).unwrap(), count(16));
    }

    #[test]
    fn evaluate_mixed_expression() {
        let mut table = SnapshotTable::new(2);
        let x = table.insert(alloc::vec![count(2), count(1)]);
        let z = table.insert(alloc::vec![count(8), count(2)]);
        let mut e = SnapshotExpr::term(x, count(4));
        e.add_assign(&SnapshotExpr::snapshot(z));
        assert_eq!(table.evaluate(&e, 1).unwrap(), count(6));
        assert_eq!(table.evaluate(&e, 0).unwrap(), count(16));
    }

    #[test]
    fn missing_snapshot_is_an_error() {
        let table = SnapshotTable::new(1);
        let e = SnapshotExpr::snapshot(3);
        assert_eq!(table.evaluate(&e, 0), Err(EvalError::MissingSnapshot(3, 0)));
    }

    #[test]
    fn add_merges_sorted_terms() {
        let mut a = SnapshotExpr::snapshot(2);
        a.add_assign(&SnapshotExpr::snapshot(0));
        a.add_assign(&SnapshotExpr::term(2, count(3)));
        a.add_assign(&SnapshotExpr::constant(count(5)));
        assert_eq!(a.terms().len(), 2);
        assert_eq!(a.terms()[0].0, 0);
        assert_eq!(a.coefficient(2), Some(&count(4)));
        assert_eq!(a.constant_part(), &count(5));
    }
}
