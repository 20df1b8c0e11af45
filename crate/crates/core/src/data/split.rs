use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{RunRng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

/// Sizes `floor(0.8 n)`, `floor(0.1 n)` and the remainder.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 8 / 10;
    let validation = n / 10;
    (train, validation, n - train - validation)
}

/// Seeded 80/10/10 split. The permutation draws from the data-shuffle stream,
/// substream 0; per-epoch shuffles use later substreams.
pub fn split<T: Clone>(examples: &[T], seed: u64) -> Result<Split<T>> {
    if examples.len() < 10 {
        return Err(Error::InvalidInput(format!(
            "need at least 10 examples to split, got {}",
            examples.len()
        )));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut RunRng::new(seed).substream(Stream::DataShuffle, 0));
    let (n_train, n_val, _) = split_sizes(examples.len());
    let pick = |idx: &[usize]| idx.iter().map(|&i| examples[i].clone()).collect();
    Ok(Split {
        train: pick(&order[..n_train]),
        validation: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(split_sizes(100), (80, 10, 10));
        assert_eq!(split_sizes(1_000_209), (800_167, 100_020, 100_022));
        let s = split(&(0..100).collect::<Vec<_>>(), 3).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (80, 10, 10));
        assert!(split(&[1, 2, 3], 0).is_err());
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let xs: Vec<u32> = (0..50).collect();
        assert_eq!(split(&xs, 9).unwrap(), split(&xs, 9).unwrap());
        assert_ne!(split(&xs, 9).unwrap().train, split(&xs, 10).unwrap().train);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn disjoint_and_covering(n in 10usize..500, seed in any::<u64>()) {
                let xs: Vec<usize> = (0..n).collect();
                let s = split(&xs, seed).unwrap();
                let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, xs);
            }
        }
    }
}
