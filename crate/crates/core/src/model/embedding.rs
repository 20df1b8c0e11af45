use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::norm_sq;
use crate::rng::StreamRng;

const MAGIC: &[u8; 4] = b"FQG1";
const HEADER_LEN: usize = 4 + 8 + 8;

/// Stacked embedding table, users first then items, one row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    n_users: usize,
    n_items: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(n_users: usize, n_items: usize, dim: usize) -> Self {
        Self {
            n_users,
            n_items,
            dim,
            data: vec![0.0; (n_users + n_items) * dim],
        }
    }

    /// Entries i.i.d. uniform on `[-1/sqrt(d), 1/sqrt(d)]`.
    pub fn init_uniform(n_users: usize, n_items: usize, dim: usize, rng: &mut StreamRng) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        let mut t = Self::zeros(n_users, n_items, dim);
        for x in &mut t.data {
            *x = rng.gen_range(-bound..=bound);
        }
        t
    }

    pub fn from_rows(n_users: usize, n_items: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != (n_users + n_items) * dim {
            return Err(Error::invalid(format!(
                "expected {} entries for {}x{dim}, got {}",
                (n_users + n_items) * dim,
                n_users + n_items,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite entry at flat index {pos}")));
        }
        Ok(Self {
            n_users,
            n_items,
            dim,
            data,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_rows(&self) -> usize {
        self.n_users + self.n_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stacked row index of item `j`.
    pub fn item_row_index(&self, item: usize) -> usize {
        self.n_users + item
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row_norm_sq(&self, k: usize) -> f64 {
        norm_sq(self.row(k))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Rescales row `k` onto the ball of the given radius if it lies outside.
    pub fn project_row(&mut self, k: usize, radius: f64) {
        let norm = self.row_norm_sq(k).sqrt();
        if norm > radius {
            let scale = radius / norm;
            for x in self.row_mut(k) {
                *x *= scale;
            }
        }
    }

    /// Little-endian `FQG1`, N (u64), d (u64), then N·d doubles row-major.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n_rows() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    /// Inverse of [`encode`](Self::encode). The format does not record the
    /// user/item split, so the caller supplies `n_users`.
    pub fn decode(bytes: &[u8], n_users: usize) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::InvalidInput("missing FQG1 header".into()));
        }
        let word = |at: usize| {
            let mut b = [0u8; 8];
            b.copy_from_slice(&bytes[at..at + 8]);
            u64::from_le_bytes(b) as usize
        };
        let (n, d) = (word(4), word(12));
        let body = &bytes[HEADER_LEN..];
        if n.checked_mul(d).and_then(|x| x.checked_mul(8)) != Some(body.len()) {
            return Err(Error::InvalidInput(format!(
                "payload of {} bytes does not match {n}x{d}",
                body.len()
            )));
        }
        if n_users > n {
            return Err(Error::invalid(format!("{n_users} users but only {n} rows")));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::from_rows(n_users, n - n_users, d, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, n_users: usize) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, n_users)
    }
}
