//! Real-thread execution of per-worker round computations.

use std::num::NonZeroUsize;
use std::thread;

use parasgd_core::schemes::Executor;

/// Runs items on up to `threads` scoped OS threads, each taking a contiguous
/// block. Results come back in item order, so traces are bit-identical to
/// [`parasgd_core::schemes::Sequential`].
#[derive(Debug, Clone, Copy)]
pub struct ThreadPool {
    threads: NonZeroUsize,
}

impl ThreadPool {
    pub fn new(threads: usize) -> Self {
        Self { threads: NonZeroUsize::new(threads).unwrap_or(NonZeroUsize::MIN) }
    }

    /// Sized to the machine's available parallelism.
    pub fn available() -> Self {
        Self { threads: thread::available_parallelism().unwrap_or(NonZeroUsize::MIN) }
    }

    pub fn threads(&self) -> usize {
        self.threads.get()
    }
}

impl Executor for ThreadPool {
    fn map_mut<T, R, F>(&self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut T) -> R + Sync,
    {
        let threads = self.threads.get().min(items.len());
        if threads <= 1 {
            return items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect();
        }
        let block = items.len().div_ceil(threads);
        let f = &f;
        thread::scope(|scope| {
            let handles: Vec<_> = items
                .chunks_mut(block)
                .enumerate()
                .map(|(c, chunk)| {
                    scope.spawn(move || {
                        chunk.iter_mut().enumerate().map(|(j, t)| f(c * block + j, t)).collect::<Vec<R>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().unwrap_or_else(|e| std::panic::resume_unwind(e)))
                .collect()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use parasgd_core::schemes::Sequential;

    #[test]
    fn order_and_indices_preserved() {
        for threads in 1..6 {
            let mut items: Vec<u64> = (0..13).collect();
            let out = ThreadPool::new(threads).map_mut(&mut items, |i, x| {
                *x *= 2;
                (i, *x)
            });
            let expected: Vec<(usize, u64)> = (0..13).map(|i| (i as usize, 2 * i)).collect();
            assert_eq!(out, expected);
            assert_eq!(items, (0..13).map(|i| 2 * i).collect::<Vec<_>>());
        }
        let mut empty: Vec<u8> = Vec::new();
        assert!(ThreadPool::new(4).map_mut(&mut empty, |_, _| 0).is_empty());
        let mut one = vec![1];
        assert_eq!(Sequential.map_mut(&mut one, |i, x| *x + i), vec![1]);
    }
}
