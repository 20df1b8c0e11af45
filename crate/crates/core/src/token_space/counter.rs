use crate::error::{Error, Result};

/// Exact per-token occurrence counts over the stacked token set (users
/// first, then items) plus the number of samples consumed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenCounter {
    counts: Vec<u64>,
    n_users: usize,
    total: u64,
}

impl TokenCounter {
    pub fn new(n_users: usize, n_items: usize) -> Self {
        Self {
            counts: vec![0; n_users + n_items],
            n_users,
            total: 0,
        }
    }

    /// Records one sampled pair: both tokens gain one count and the sample
    /// total advances by one. `item` is local to the item set.
    pub fn record_pair(&mut self, user: usize, item: usize) -> Result<()> {
        let n_items = self.counts.len() - self.n_users;
        if user >= self.n_users {
            return Err(Error::invalid(format!(
                "user {user} out of range for {} users",
                self.n_users
            )));
        }
        if item >= n_items {
            return Err(Error::invalid(format!(
                "item {item} out of range for {n_items} items"
            )));
        }
        self.counts[user] += 1;
        self.counts[self.n_users + item] += 1;
        self.total += 1;
        Ok(())
    }

    pub fn count(&self, token: usize) -> u64 {
        self.counts[token]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_tokens(&self) -> usize {
        self.counts.len()
    }

    /// `c_k / t`, or 0 before any sample.
    pub fn p_hat(&self, token: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.counts[token] as f64 / self.total as f64
        }
    }

    pub fn p_hats(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|k| self.p_hat(k)).collect()
    }
}
