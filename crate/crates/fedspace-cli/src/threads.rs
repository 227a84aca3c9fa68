//! Scoped-thread executor.
//!
//! Devices are split into contiguous chunks, one scoped thread per chunk.
//! Each closure call owns its item exclusively and every random stream is
//! derived from `(seed, epoch, device)`, so the outcome is the same for
//! any thread count; only wall-clock time changes.

use fedspace_core::exec::ParallelFor;

/// Runs device work on up to `count` scoped threads.
#[derive(Debug, Clone, Copy)]
pub struct Threads {
    count: usize,
}

impl Threads {
    pub fn new(count: usize) -> Self {
        Self {
            count: count.max(1),
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

impl ParallelFor for Threads {
    fn for_each<T, F>(&self, items: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync,
    {
        if self.count == 1 || items.len() <= 1 {
            for (i, item) in items.iter_mut().enumerate() {
                f(i, item);
            }
            return;
        }
        let chunk = items.len().div_ceil(self.count);
        let f = &f;
        std::thread::scope(|scope| {
            for (c, piece) in items.chunks_mut(chunk).enumerate() {
                let base = c * chunk;
                scope.spawn(move || {
                    for (offset, item) in piece.iter_mut().enumerate() {
                        f(base + offset, item);
                    }
                });
            }
        });
    }
}
