//! Order-stable reductions.
//!
//! Work is cut into fixed-size blocks; each block is reduced sequentially and
//! the block partials are combined by a balanced pairwise tree in index order.
//! The result depends only on the input, never on how many threads ran the
//! block maps.

use alloc::vec::Vec;

pub(crate) const BLOCK: usize = 256;

pub(crate) fn block_reduce<T, A, F, R>(items: &[T], map: F, combine: R) -> Option<A>
where
    T: Sync,
    A: Send,
    F: Fn(&[T]) -> A + Sync + Send,
    R: Fn(A, A) -> A,
{
    let partials = map_blocks(items, &map);
    tree_reduce(partials, &combine)
}

#[cfg(feature = "parallel")]
fn map_blocks<T, A, F>(items: &[T], map: &F) -> Vec<A>
where
    T: Sync,
    A: Send,
    F: Fn(&[T]) -> A + Sync + Send,
{
    use rayon::prelude::*;
    items.par_chunks(BLOCK).map(map).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_blocks<T, A, F>(items: &[T], map: &F) -> Vec<A>
where
    F: Fn(&[T]) -> A,
{
    items.chunks(BLOCK).map(map).collect()
}

fn tree_reduce<A, R>(mut level: Vec<A>, combine: &R) -> Option<A>
where
    R: Fn(A, A) -> A,
{
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        level = next;
    }
    level.pop()
}

/// Maps every item independently; output order matches input order.
#[cfg(feature = "parallel")]
pub(crate) fn map_each<T, B, F>(items: &[T], f: F) -> Vec<B>
where
    T: Sync,
    B: Send,
    F: Fn(&T) -> B + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_each<T, B, F>(items: &[T], f: F) -> Vec<B>
where
    F: Fn(&T) -> B,
{
    items.iter().map(f).collect()
}

pub(crate) fn sum(values: &[f64]) -> f64 {
    block_reduce(values, |b| b.iter().sum::<f64>(), |a, b| a + b).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn empty_sum_is_zero() {
        assert_eq!(sum(&[]), 0.0);
    }

    #[test]
    fn tree_keeps_order() {
        let v: Vec<u32> = (0..1000).collect();
        let s = block_reduce(&v, |b| vec![b[0]], |mut a, b| {
            a.extend(b);
            a
        })
        .unwrap();
        let expected: Vec<u32> = (0..1000).step_by(BLOCK).collect();
        assert_eq!(s, expected);
    }
}
