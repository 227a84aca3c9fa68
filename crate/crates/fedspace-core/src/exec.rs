//! Phase execution strategy.
//!
//! The simulators run synchronous two-phase rounds: every device computes
//! its phase independently, then a barrier, then the next phase reads only
//! the previous phase's outputs. The per-device work is a pure function of
//! the device state, so any [`ParallelFor`] implementation must produce the
//! same results; the std companion crate provides a threaded one.

/// Applies `f` to every item of a slice, by index.
pub trait ParallelFor {
    fn for_each<T, F>(&self, items: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync;
}

/// Runs every device on the calling thread, in index order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl ParallelFor for Serial {
    fn for_each<T, F>(&self, items: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync,
    {
        for (i, item) in items.iter_mut().enumerate() {
            f(i, item);
        }
    }
}
