//! Order-preserving map over documents, on rayon when the `parallel`
//! feature is enabled. Results always come back in input order, so any
//! reduction the caller performs afterwards is bit-identical regardless of
//! thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    /// Rayon's global pool when compiled with `parallel`, else sequential.
    #[default]
    Auto,
    Sequential,
}

impl Parallelism {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Auto
    }
}

pub fn map_ordered<T, U, F>(items: &[T], mode: Parallelism, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let _ = mode;
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_order_both_modes() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map_ordered(&xs, Parallelism::Auto, |i, x| (i as u64) * x);
        let b = map_ordered(&xs, Parallelism::Sequential, |i, x| (i as u64) * x);
        assert_eq!(a, b);
    }
}
