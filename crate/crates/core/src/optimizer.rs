//! Cost model and per-burst choice of which queries share a graphlet.

use alloc::vec::Vec;
use core::fmt;

/// Statistics the cost formulas read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostFactors {
    /// Events per window.
    pub n: u64,
    /// Events per graphlet.
    pub g: u64,
    /// Events per burst.
    pub b: u64,
    /// Queries.
    pub k: u64,
    pub k_s: u64,
    pub k_n: u64,
    /// Event types per query.
    pub t: u64,
    /// Predecessor types per type per query.
    pub p: u64,
    /// Snapshots in the window.
    pub s: u64,
    /// Snapshots created by the burst.
    pub s_c: u64,
    /// Snapshots propagated through the shared graphlet.
    pub s_p: u64,
}

/// Cost formula family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum CostVariant {
    /// `b*n*s_p + s_c*k*g*t` against `k*b*n`.
    #[default]
    Linear,
    /// `s_c*k*g*p + b*(log2 g + n*s_p)` against `k*b*(log2 g + n)`.
    Logarithmic,
}

fn log2(g: u64) -> u128 {
    if g == 0 {
        0
    } else {
        u128::from(g.ilog2())
    }
}

pub fn shared_cost_with(f: &CostFactors, variant: CostVariant) -> u128 {
    let w = |x: u64| u128::from(x);
    match variant {
        CostVariant::Linear => w(f.b) * w(f.n) * w(f.s_p) + w(f.s_c) * w(f.k) * w(f.g) * w(f.t),
        CostVariant::Logarithmic => {
            w(f.s_c) * w(f.k) * w(f.g) * w(f.p) + w(f.b) * (log2(f.g) + w(f.n) * w(f.s_p))
        }
    }
}

pub fn nonshared_cost_with(f: &CostFactors, variant: CostVariant) -> u128 {
    let w = |x: u64| u128::from(x);
    match variant {
        CostVariant::Linear => w(f.k) * w(f.b) * w(f.n),
        CostVariant::Logarithmic => w(f.k) * w(f.b) * (log2(f.g) + w(f.n)),
    }
}

pub fn benefit_with(f: &CostFactors, variant: CostVariant) -> i128 {
    nonshared_cost_with(f, variant) as i128 - shared_cost_with(f, variant) as i128
}

pub fn shared_cost(f: &CostFactors) -> u128 {
    shared_cost_with(f, CostVariant::Linear)
}

pub fn nonshared_cost(f: &CostFactors) -> u128 {
    nonshared_cost_with(f, CostVariant::Linear)
}

/// `NonShared - Shared`; sharing pays off only when this is positive.
pub fn benefit(f: &CostFactors) -> i128 {
    benefit_with(f, CostVariant::Linear)
}

/// What the optimizer knows about one burst and the queries that could
/// share it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BurstProfile {
    pub b: u64,
    pub n: u64,
    pub g: u64,
    pub t: u64,
    pub p: u64,
    pub s_p: u64,
    /// Per candidate query: burst events at which it would force an event
    /// snapshot (0 means it never does).
    pub introduced: Vec<u64>,
}

impl BurstProfile {
    pub fn factors(&self, members: &[usize]) -> CostFactors {
        let k_s = members.len() as u64;
        let total = self.introduced.len() as u64;
        CostFactors {
            n: self.n,
            g: self.g,
            b: self.b,
            k: k_s,
            k_s,
            k_n: total - k_s,
            t: self.t,
            p: self.p,
            s: 0,
            s_c: 1 + members.iter().map(|&m| self.introduced[m]).sum::<u64>(),
            s_p: self.s_p,
        }
    }

    /// Cost of sharing `members` and running the other candidates alone.
    pub fn plan_cost(&self, members: &[usize], variant: CostVariant) -> u128 {
        let introduced = members.iter().map(|&m| self.introduced[m]).sum();
        self.group_cost(members.len() as u64, introduced, variant)
    }

    /// [`plan_cost`](Self::plan_cost) for a group of `k_s` members that
    /// introduce `introduced` snapshots between them.
    pub fn group_cost(&self, k_s: u64, introduced: u64, variant: CostVariant) -> u128 {
        let f = CostFactors {
            n: self.n,
            g: self.g,
            b: self.b,
            k: k_s,
            k_s,
            k_n: self.introduced.len() as u64 - k_s,
            t: self.t,
            p: self.p,
            s: 0,
            s_c: 1 + introduced,
            s_p: self.s_p,
        };
        let rest = CostFactors { k: f.k_n, ..f };
        shared_cost_with(&f, variant) + nonshared_cost_with(&rest, variant)
    }

    /// Cost of running every candidate alone.
    pub fn nonshared_reference(&self, variant: CostVariant) -> u128 {
        let f = CostFactors {
            k: self.introduced.len() as u64,
            ..self.factors(&[])
        };
        nonshared_cost_with(&f, variant)
    }
}

/// A chosen plan: one shared group plus singletons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharingPlan {
    /// Candidate indices in the shared group (empty when nothing is shared).
    pub shared: Vec<usize>,
    pub shared_cost: u128,
    pub nonshared_cost: u128,
    pub s_c: u64,
    /// Plans whose cost was evaluated.
    pub examined: usize,
}

impl SharingPlan {
    pub fn shares(&self) -> bool {
        !self.shared.is_empty()
    }

    /// Cost of the plan actually taken.
    pub fn cost(&self) -> u128 {
        if self.shares() {
            self.shared_cost
        } else {
            self.nonshared_cost
        }
    }
}

/// Shares every query that introduces no snapshot, then tries the others
/// one at a time, fewest snapshots first, keeping each that lowers the plan
/// cost. Evaluates `m + 1` plans for `m` snapshot-introducing queries.
pub fn choose_query_set(profile: &BurstProfile, variant: CostVariant) -> SharingPlan {
    let intro = &profile.introduced;
    let mut others: Vec<usize> = Vec::new();
    for (i, &c) in intro.iter().enumerate() {
        if c > 0 {
            others.push(i);
        }
    }
    others.sort_by_key(|&i| (intro[i], i));

    let mut k_s = (intro.len() - others.len()) as u64;
    let mut sum = 0;
    let mut cost = profile.group_cost(k_s, sum, variant);
    let mut examined = 1;
    let mut taken = Vec::new();
    for q in others {
        examined += 1;
        let with_q = profile.group_cost(k_s + 1, sum + intro[q], variant);
        if with_q < cost {
            cost = with_q;
            k_s += 1;
            sum += intro[q];
            taken.push(q);
        }
    }

    let reference = profile.nonshared_reference(variant);
    let shared = if k_s >= 2 && cost < reference {
        let mut group = Vec::with_capacity(k_s as usize);
        group.extend((0..intro.len()).filter(|&i| intro[i] == 0));
        group.extend(taken);
        group.sort_unstable();
        group
    } else {
        Vec::new()
    };
    SharingPlan {
        shared,
        shared_cost: cost,
        nonshared_cost: reference,
        s_c: 1 + sum,
        examined,
    }
}

/// Minimum cost over every plan with one shared group, by enumeration.
pub fn exhaustive_min(profile: &BurstProfile, variant: CostVariant) -> u128 {
    let k = profile.introduced.len();
    assert!(k < 24, "exhaustive search over {k} queries");
    let mut best = profile.nonshared_reference(variant);
    for mask in 0u32..(1 << k) {
        if mask.count_ones() < 2 {
            continue;
        }
        let members: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        best = best.min(profile.plan_cost(&members, variant));
    }
    best
}

/// Transition of a graphlet's sharing state between consecutive bursts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    KeepShared,
    Merge,
    Split,
    KeepSeparate,
}

impl Action {
    pub fn between(was_shared: bool, now_shared: bool) -> Action {
        match (was_shared, now_shared) {
            (true, true) => Action::KeepShared,
            (false, true) => Action::Merge,
            (true, false) => Action::Split,
            (false, false) => Action::KeepSeparate,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::KeepShared => "keep-shared",
            Action::Merge => "merge",
            Action::Split => "split",
            Action::KeepSeparate => "keep-separate",
        }
    }

    pub const ALL: [Action; 4] = [
        Action::KeepShared,
        Action::Merge,
        Action::Split,
        Action::KeepSeparate,
    ];
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Decides, per burst, which candidate queries share.
pub trait SharingPolicy {
    fn choose(&mut self, profile: &BurstProfile) -> SharingPlan;

    /// `false` lets the engine skip burst analysis altogether.
    fn may_share(&self) -> bool {
        true
    }
}

/// Cost-based choice per burst.
#[derive(Debug, Clone, Copy, Default)]
pub struct DynamicPolicy {
    pub variant: CostVariant,
}

impl SharingPolicy for DynamicPolicy {
    fn choose(&mut self, profile: &BurstProfile) -> SharingPlan {
        choose_query_set(profile, self.variant)
    }
}

/// Shares every candidate, always.
#[derive(Debug, Clone, Copy, Default)]
pub struct StaticSharedPolicy;

impl SharingPolicy for StaticSharedPolicy {
    fn choose(&mut self, profile: &BurstProfile) -> SharingPlan {
        let k = profile.introduced.len();
        let sum = profile.introduced.iter().sum();
        SharingPlan {
            shared_cost: profile.group_cost(k as u64, sum, CostVariant::Linear),
            nonshared_cost: profile.nonshared_reference(CostVariant::Linear),
            s_c: 1 + sum,
            shared: if k >= 2 { (0..k).collect() } else { Vec::new() },
            examined: 0,
        }
    }
}

/// Never shares.
#[derive(Debug, Clone, Copy, Default)]
pub struct NonSharedPolicy;

impl SharingPolicy for NonSharedPolicy {
    fn choose(&mut self, profile: &BurstProfile) -> SharingPlan {
        SharingPlan {
            shared: Vec::new(),
            shared_cost: 0,
            nonshared_cost: profile.nonshared_reference(CostVariant::Linear),
            s_c: 0,
            examined: 0,
        }
    }

    fn may_share(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn f(b: u64, n: u64, s_p: u64, s_c: u64, k: u64, g: u64, t: u64) -> CostFactors {
        CostFactors {
            b,
            n,
            s_p,
            s_c,
            k,
            g,
            t,
            ..CostFactors::default()
        }
    }

    #[test]
    fn cost_examples() {
        let eq8 = f(4, 7, 1, 1, 2, 4, 2);
        assert_eq!(
            (shared_cost(&eq8), nonshared_cost(&eq8), benefit(&eq8)),
            (44, 56, 12)
        );
        let eq9 = f(4, 11, 2, 1, 2, 8, 2);
        assert_eq!(
            (shared_cost(&eq9), nonshared_cost(&eq9), benefit(&eq9)),
            (120, 88, -32)
        );
        let eq10 = f(4, 15, 1, 1, 2, 4, 2);
        assert_eq!(
            (shared_cost(&eq10), nonshared_cost(&eq10), benefit(&eq10)),
            (76, 120, 44)
        );
    }

    #[test]
    fn benefit_is_antisymmetric() {
        let x = f(4, 7, 1, 1, 2, 4, 2);
        let swapped = shared_cost(&x) as i128 - nonshared_cost(&x) as i128;
        assert_eq!(benefit(&x), -swapped);
    }

    #[test]
    fn logarithmic_variant() {
        let x = CostFactors {
            p: 2,
            ..f(4, 7, 1, 1, 2, 8, 2)
        };
        // 1*2*8*2 + 4*(3 + 7) = 72 ; 2*4*(3 + 7) = 80
        assert_eq!(shared_cost_with(&x, CostVariant::Logarithmic), 72);
        assert_eq!(nonshared_cost_with(&x, CostVariant::Logarithmic), 80);
    }

    #[test]
    fn plan_with_one_excluded_query() {
        // Queries 1..4 (indices 0..3); 2 and 4 introduce snapshots, sharing
        // 2 pays off and sharing 4 does not.
        let profile = BurstProfile {
            b: 4,
            n: 20,
            g: 4,
            t: 2,
            p: 1,
            s_p: 1,
            introduced: vec![0, 1, 0, 5],
        };
        let plan = choose_query_set(&profile, CostVariant::Linear);
        assert_eq!(plan.shared, vec![0, 1, 2]);
        assert_eq!(plan.examined, 3);
        assert_eq!(plan.cost(), exhaustive_min(&profile, CostVariant::Linear));
    }

    #[test]
    fn no_snapshots_means_full_sharing() {
        let profile = BurstProfile {
            b: 10,
            n: 50,
            g: 10,
            t: 2,
            p: 1,
            s_p: 1,
            introduced: vec![0; 5],
        };
        let plan = choose_query_set(&profile, CostVariant::Linear);
        assert_eq!(plan.shared, vec![0, 1, 2, 3, 4]);
        assert_eq!(plan.examined, 1);
    }

    #[test]
    fn nothing_worth_sharing() {
        let profile = BurstProfile {
            b: 2,
            n: 2,
            g: 2,
            t: 3,
            p: 1,
            s_p: 1,
            introduced: vec![2, 2, 2],
        };
        let plan = choose_query_set(&profile, CostVariant::Linear);
        assert!(!plan.shares());
        assert_eq!(plan.examined, 4);
        assert_eq!(plan.cost(), exhaustive_min(&profile, CostVariant::Linear));
    }

    #[test]
    fn actions() {
        assert_eq!(Action::between(false, true), Action::Merge);
        assert_eq!(Action::between(true, false), Action::Split);
        assert_eq!(Action::between(true, true), Action::KeepShared);
        assert_eq!(Action::between(false, false), Action::KeepSeparate);
    }
}
