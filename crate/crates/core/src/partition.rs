//! Routing events to partitions, panes and bursts.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use num_integer::Integer;
use thiserror::Error;

use crate::event::{Event, TypeId, Value};
use crate::query::Window;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoutingError {
    #[error("event of type `{ty}` at time {time} lacks partitioning attribute `{attr}`")]
    MissingAttr { ty: String, time: u64, attr: String },
}

/// Composite key of an event's values for `attrs`, in order. Values are
/// separated by `|`; an empty attribute list yields the empty (global) key.
pub fn partition_key(event: &Event, attrs: &[String]) -> Result<String, RoutingError> {
    let mut key = String::new();
    for (i, attr) in attrs.iter().enumerate() {
        let value = event.attr(attr).ok_or_else(|| RoutingError::MissingAttr {
            ty: event.kind.clone(),
            time: event.time,
            attr: attr.clone(),
        })?;
        if i > 0 {
            key.push('|');
        }
        match value {
            Value::Text(s) => key.push_str(s),
            v => {
                let _ = write!(key, "{v}");
            }
        }
    }
    Ok(key)
}

/// Pane length shared by a set of windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PaneConfig {
    pub len: u64,
}

impl PaneConfig {
    pub fn pane_of(&self, time: u64) -> u64 {
        time / self.len
    }

    pub fn start_of(&self, pane: u64) -> u64 {
        pane * self.len
    }

    /// Window instances of `w` that contain the whole of `pane`.
    pub fn instances(&self, w: &Window, pane: u64) -> core::ops::Range<u64> {
        w.instances_at(self.start_of(pane))
    }
}

/// gcd of every size and slide. Panics on an empty set.
pub fn pane_config(windows: &[Window]) -> PaneConfig {
    assert!(!windows.is_empty(), "pane of an empty window set");
    let len = windows
        .iter()
        .flat_map(|w| [w.size, w.slide])
        .fold(0u64, |acc, v| acc.gcd(&v));
    PaneConfig { len: len.max(1) }
}

/// Consecutive events of one type inside one pane.
#[derive(Debug, Clone, PartialEq)]
pub struct Burst<T> {
    pub ty: TypeId,
    pub pane: u64,
    pub items: Vec<T>,
}

impl<T> Burst<T> {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Buffers events until a burst is complete.
#[derive(Debug, Clone)]
pub struct BurstBuffer<T> {
    current: Option<Burst<T>>,
}

impl<T> Default for BurstBuffer<T> {
    fn default() -> Self {
        BurstBuffer { current: None }
    }
}

impl<T> BurstBuffer<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an item; returns the previous burst if this item completes it.
    pub fn push(&mut self, ty: TypeId, pane: u64, item: T) -> Option<Burst<T>> {
        match &mut self.current {
            Some(b) if b.ty == ty && b.pane == pane => {
                b.items.push(item);
                None
            }
            slot => slot.replace(Burst {
                ty,
                pane,
                items: alloc::vec![item],
            }),
        }
    }

    /// Completes the open burst if it lies in a pane before `pane`.
    pub fn close_before(&mut self, pane: u64) -> Option<Burst<T>> {
        if self.current.as_ref().is_some_and(|b| b.pane < pane) {
            self.current.take()
        } else {
            None
        }
    }

    /// Completes the open burst, e.g. at end of stream.
    pub fn flush(&mut self) -> Option<Burst<T>> {
        self.current.take()
    }

    pub fn pending(&self) -> Option<&Burst<T>> {
        self.current.as_ref()
    }
}

/// Human-readable label of a window instance.
pub fn instance_label(w: &Window, i: u64) -> String {
    let (s, e) = w.bounds(i);
    let mut out = s.to_string();
    out.push_str("..");
    out.push_str(&e.to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn keys() {
        let e = Event::new(1, "A").with("district", Value::Int(7));
        assert_eq!(partition_key(&e, &["district".into()]).unwrap(), "7");
        assert_eq!(partition_key(&e, &[]).unwrap(), "");
        let bare = Event::new(1, "A");
        assert!(matches!(
            partition_key(&bare, &["district".into()]),
            Err(RoutingError::MissingAttr { .. })
        ));
    }

    #[test]
    fn panes() {
        assert_eq!(
            pane_config(&[Window::new(10, 5), Window::new(15, 5)]).len,
            5
        );
        assert_eq!(pane_config(&[Window::new(10, 10)]).len, 10);
        assert_eq!(pane_config(&[Window::new(6, 3), Window::new(4, 2)]).len, 1);
    }

    #[test]
    fn bursts_close_on_type_change_pane_and_flush() {
        let mut buf = BurstBuffer::new();
        assert_eq!(buf.push(0, 0, 'a'), None);
        assert_eq!(buf.push(0, 0, 'a'), None);
        let done = buf.push(1, 0, 'b').unwrap();
        assert_eq!(done.items, vec!['a', 'a']);

        assert_eq!(buf.push(1, 0, 'b'), None);
        let done = buf.close_before(1).unwrap();
        assert_eq!(done.items, vec!['b', 'b']);

        buf.push(2, 3, 'c');
        assert_eq!(buf.flush().unwrap().items, vec!['c']);
        assert!(buf.flush().is_none());
    }

    #[test]
    fn instances_cover_pane() {
        let p = pane_config(&[Window::new(10, 5)]);
        assert_eq!(p.instances(&Window::new(10, 5), 2), 1..3);
        assert_eq!(p.instances(&Window::new(10, 5), 0), 0..1);
    }
}
