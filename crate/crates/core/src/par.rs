//! Order-preserving map over a slice, parallel when the `parallel` feature
//! is on.
//!
//! Every batch-level loop in the crate funnels through [`map_slice`] so the
//! parallel and sequential builds share one code path. Outputs are collected
//! in input order and any reduction over them happens sequentially at the
//! call site, which keeps results bit-identical across thread counts.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_slice<T: Sync, U: Send, F: Fn(&T) -> U + Sync + Send>(items: &[T], f: F) -> Vec<U> {
    items.par_iter().map(f).collect()
}

/// Maps `f` over `items`, preserving order.
#[cfg(not(feature = "parallel"))]
pub fn map_slice<T, U, F: Fn(&T) -> U>(items: &[T], f: F) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Maps `f` over owned items, preserving order.
#[cfg(feature = "parallel")]
pub fn map_vec<T: Send, U: Send, F: Fn(T) -> U + Sync + Send>(items: Vec<T>, f: F) -> Vec<U> {
    items.into_par_iter().map(f).collect()
}

/// Maps `f` over owned items, preserving order.
#[cfg(not(feature = "parallel"))]
pub fn map_vec<T, U, F: Fn(T) -> U>(items: Vec<T>, f: F) -> Vec<U> {
    items.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_slice_preserves_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let ys = map_slice(&xs, |&x| x * x);
        assert_eq!(ys, xs.iter().map(|&x| x * x).collect::<Vec<_>>());
    }

    #[test]
    fn map_vec_preserves_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let ys = map_vec(xs.clone(), |x| x + 1);
        assert_eq!(ys, xs.iter().map(|&x| x + 1).collect::<Vec<_>>());
    }
}
