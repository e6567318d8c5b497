/// Monotonic time source used for latency and decision-overhead accounting.
///
/// The core never reads a clock on its own; callers that want wall-clock
/// metrics plug one in.
pub trait Clock {
    fn now_nanos(&self) -> u64;
}

/// Clock that always reads zero. Metrics derived from it are zero.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullClock;

impl Clock for NullClock {
    fn now_nanos(&self) -> u64 {
        0
    }
}

impl<C: Clock + ?Sized> Clock for &C {
    fn now_nanos(&self) -> u64 {
        (**self).now_nanos()
    }
}
