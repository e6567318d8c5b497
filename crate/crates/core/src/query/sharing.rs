//! Which queries may share a Kleene sub-pattern.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::template::Template;
use super::{Aggregate, Query, QueryError};
use crate::event::Schema;

/// Queries in the same class propagate the same kind of intermediate value
/// and can therefore ride one shared graphlet.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ShareClass {
    /// Plain trend counts: `COUNT(*)`.
    CountAll,
    /// Counts carrying an attribute sum and an event count for one type:
    /// `SUM`/`AVG` over `ty.attr`, and `COUNT(ty)`.
    Weighted {
        ty: String,
        attr: Option<String>,
    },
    Min {
        ty: String,
        attr: String,
    },
    Max {
        ty: String,
        attr: String,
    },
}

/// Class of each query, for queries that run in one partition group.
pub fn share_classes(group: &[&Query]) -> Vec<ShareClass> {
    group
        .iter()
        .map(|q| match &q.aggregate {
            Aggregate::CountAll => ShareClass::CountAll,
            Aggregate::Sum(ty, attr) | Aggregate::Avg(ty, attr) => ShareClass::Weighted {
                ty: ty.clone(),
                attr: Some(attr.clone()),
            },
            Aggregate::CountType(ty) => {
                let attr = group
                    .iter()
                    .filter_map(|o| match &o.aggregate {
                        Aggregate::Sum(t, a) | Aggregate::Avg(t, a) if t == ty => Some(a),
                        _ => None,
                    })
                    .min()
                    .cloned();
                ShareClass::Weighted {
                    ty: ty.clone(),
                    attr,
                }
            }
            Aggregate::Min(ty, attr) => ShareClass::Min {
                ty: ty.clone(),
                attr: attr.clone(),
            },
            Aggregate::Max(ty, attr) => ShareClass::Max {
                ty: ty.clone(),
                attr: attr.clone(),
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharableSet {
    /// The `E` of the shared `E+`.
    pub kleene: String,
    pub class: ShareClass,
    pub partition_attrs: Vec<String>,
    /// Query ids in workload order.
    pub queries: Vec<String>,
}

/// For every Kleene type, the maximal groups of at least two queries that
/// can share it: same partitioning attributes and same [`ShareClass`].
pub fn find_sharable(workload: &[Query], schema: &Schema) -> Result<Vec<SharableSet>, QueryError> {
    let mut groups: BTreeMap<Vec<String>, Vec<usize>> = BTreeMap::new();
    for (i, q) in workload.iter().enumerate() {
        groups.entry(q.partition_attrs()).or_default().push(i);
    }
    let mut out = Vec::new();
    for (attrs, members) in groups {
        let queries: Vec<&Query> = members.iter().map(|&i| &workload[i]).collect();
        let classes = share_classes(&queries);
        let templates = queries
            .iter()
            .map(|q| Template::for_query(q, schema))
            .collect::<Result<Vec<_>, _>>()?;
        let mut sets: BTreeMap<(usize, ShareClass), Vec<String>> = BTreeMap::new();
        for ((q, class), t) in queries.iter().zip(&classes).zip(&templates) {
            for ty in t.types.iter().filter(|&ty| t.is_kleene(ty)) {
                sets.entry((ty, class.clone()))
                    .or_default()
                    .push(q.id.clone());
            }
        }
        for ((ty, class), ids) in sets {
            if ids.len() > 1 {
                out.push(SharableSet {
                    kleene: schema.event_type(ty).name.clone(),
                    class,
                    partition_attrs: attrs.clone(),
                    queries: ids,
                });
            }
        }
    }
    Ok(out)
}
