use std::fmt::Write as _;

use rand::Rng;

use super::TokenDistribution;
use crate::csv::fmt17;
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, dot, KahanSum};
use crate::rng::StreamRng;

/// Binary interaction label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    /// `+1.0` or `-1.0`.
    pub fn sign(self) -> f64 {
        match self {
            Label::Neg => -1.0,
            Label::Pos => 1.0,
        }
    }

    pub fn from_sign(x: f64) -> Self {
        if x < 0.0 {
            Label::Neg
        } else {
            Label::Pos
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Neg => -1,
            Label::Pos => 1,
        }
    }
}

/// One support cell of a joint distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub user: usize,
    pub item: usize,
    pub mass: f64,
    pub label: Label,
}

/// Interaction distribution over user × item pairs.
///
/// Cells are kept in row-major order (by user, then item) with no duplicates;
/// every oracle enumerates them in this order.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    n_users: usize,
    n_items: usize,
    cells: Vec<Cell>,
}

impl JointDistribution {
    /// Builds a joint from explicit cells. Cells are sorted into row-major
    /// order; masses must be positive and sum to one, and every user and
    /// item must carry positive marginal mass.
    pub fn from_cells(n_users: usize, n_items: usize, mut cells: Vec<Cell>) -> Result<Self> {
        if n_users == 0 || n_items == 0 {
            return Err(Error::invalid("joint needs at least one user and one item"));
        }
        cells.sort_by_key(|c| (c.user, c.item));
        for w in cells.windows(2) {
            if (w[0].user, w[0].item) == (w[1].user, w[1].item) {
                return Err(Error::invalid(format!(
                    "duplicate cell ({}, {})",
                    w[0].user, w[0].item
                )));
            }
        }
        for c in &cells {
            if c.user >= n_users || c.item >= n_items {
                return Err(Error::invalid(format!(
                    "cell ({}, {}) outside {n_users}x{n_items}",
                    c.user, c.item
                )));
            }
            if !(c.mass > 0.0 && c.mass.is_finite()) {
                return Err(Error::invalid(format!(
                    "cell ({}, {}) has mass {}",
                    c.user, c.item, c.mass
                )));
            }
        }
        let total = compensated_sum(cells.iter().map(|c| c.mass));
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("cell masses sum to {total}")));
        }
        let joint = Self {
            n_users,
            n_items,
            cells,
        };
        joint.user_marginal()?;
        joint.item_marginal()?;
        Ok(joint)
    }

    /// `mass(i, j) = p_i · p_j`, labels from `label_rule(i, j)`.
    pub fn product<F>(users: &TokenDistribution, items: &TokenDistribution, label_rule: F) -> Self
    where
        F: Fn(usize, usize) -> Label,
    {
        let mut cells = Vec::with_capacity(users.len() * items.len());
        for (i, &pi) in users.probs().iter().enumerate() {
            for (j, &pj) in items.probs().iter().enumerate() {
                let mass = pi * pj;
                // only extreme tails underflow here; such cells carry no mass
                if mass > 0.0 {
                    cells.push(Cell {
                        user: i,
                        item: j,
                        mass,
                        label: label_rule(i, j),
                    });
                }
            }
        }
        Self {
            n_users: users.len(),
            n_items: items.len(),
            cells,
        }
    }

    /// `lambda · a + (1 - lambda) · b` over the union of supports. Labels must
    /// agree on shared cells.
    pub fn mixture(a: &Self, b: &Self, lambda: f64) -> Result<Self> {
        if a.n_users != b.n_users || a.n_items != b.n_items {
            return Err(Error::invalid("mixture components have different shapes"));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!("mixture weight {lambda} outside [0, 1]")));
        }
        let mut cells: Vec<Cell> = Vec::with_capacity(a.cells.len() + b.cells.len());
        let (mut ia, mut ib) = (0, 0);
        let key = |c: &Cell| (c.user, c.item);
        while ia < a.cells.len() || ib < b.cells.len() {
            let ca = a.cells.get(ia);
            let cb = b.cells.get(ib);
            let cell = match (ca, cb) {
                (Some(x), Some(y)) if key(x) == key(y) => {
                    if x.label != y.label {
                        return Err(Error::invalid(format!(
                            "labels disagree on cell ({}, {})",
                            x.user, x.item
                        )));
                    }
                    ia += 1;
                    ib += 1;
                    Cell {
                        mass: lambda * x.mass + (1.0 - lambda) * y.mass,
                        ..*x
                    }
                }
                (Some(x), Some(y)) if key(x) < key(y) => {
                    ia += 1;
                    Cell { mass: lambda * x.mass, ..*x }
                }
                (Some(x), None) => {
                    ia += 1;
                    Cell { mass: lambda * x.mass, ..*x }
                }
                (_, Some(y)) => {
                    ib += 1;
                    Cell { mass: (1.0 - lambda) * y.mass, ..*y }
                }
                (None, None) => unreachable!(),
            };
            if cell.mass > 0.0 {
                cells.push(cell);
            }
        }
        Self::from_cells(a.n_users, a.n_items, cells)
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Number of tokens `|U| + |V|`.
    pub fn n_tokens(&self) -> usize {
        self.n_users + self.n_items
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn support_size(&self) -> usize {
        self.cells.len()
    }

    fn marginal(&self, n: usize, key: impl Fn(&Cell) -> usize) -> Vec<f64> {
        let mut acc = vec![KahanSum::new(); n];
        for c in &self.cells {
            acc[key(c)].add(c.mass);
        }
        // a single token can carry all the mass; rounding must not push it past 1
        acc.iter().map(|a| a.value().min(1.0)).collect()
    }

    /// Row sums `p_i`.
    pub fn user_probs(&self) -> Vec<f64> {
        self.marginal(self.n_users, |c| c.user)
    }

    /// Column sums `p_j`.
    pub fn item_probs(&self) -> Vec<f64> {
        self.marginal(self.n_items, |c| c.item)
    }

    pub fn user_marginal(&self) -> Result<TokenDistribution> {
        TokenDistribution::from_probs(self.user_probs())
    }

    pub fn item_marginal(&self) -> Result<TokenDistribution> {
        TokenDistribution::from_probs(self.item_probs())
    }

    /// Marginals over the stacked token set, users first.
    pub fn token_probs(&self) -> Vec<f64> {
        let mut p = self.user_probs();
        p.extend(self.item_probs());
        p
    }

    /// CSV with header `user,item,mass,label`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("user,item,mass,label\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                c.user,
                c.item,
                fmt17(c.mass),
                c.label.as_i8()
            );
        }
        out
    }
}

/// Labels `sign(<theta*_i, theta*_j>)` from a hidden planted embedding table.
#[derive(Debug, Clone)]
pub struct PlantedLabels {
    users: Vec<Vec<f64>>,
    items: Vec<Vec<f64>>,
}

impl PlantedLabels {
    /// Planted rows are i.i.d. standard normal (Box-Muller on the given stream).
    pub fn new(n_users: usize, n_items: usize, dim: usize, rng: &mut StreamRng) -> Self {
        let row = |rng: &mut StreamRng| -> Vec<f64> {
            (0..dim).map(|_| standard_normal(rng)).collect()
        };
        let users = (0..n_users).map(|_| row(rng)).collect();
        let items = (0..n_items).map(|_| row(rng)).collect();
        Self { users, items }
    }

    pub fn label(&self, user: usize, item: usize) -> Label {
        Label::from_sign(dot(&self.users[user], &self.items[item]))
    }
}

fn standard_normal(rng: &mut StreamRng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Walker alias table over the cells of a joint, O(1) per draw.
#[derive(Debug, Clone)]
pub struct PairSampler {
    prob: Vec<f64>,
    alias: Vec<u32>,
    cells: Vec<(u32, u32, Label)>,
}

impl PairSampler {
    pub fn new(joint: &JointDistribution) -> Self {
        let n = joint.cells.len();
        let mut prob: Vec<f64> = joint.cells.iter().map(|c| c.mass * n as f64).collect();
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let mut small: Vec<usize> = Vec::new();
        let mut large: Vec<usize> = Vec::new();
        for (i, &p) in prob.iter().enumerate() {
            if p < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            alias[s] = l as u32;
            prob[l] = (prob[l] + prob[s]) - 1.0;
            if prob[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        for i in small.into_iter().chain(large) {
            prob[i] = 1.0;
        }
        let cells = joint
            .cells
            .iter()
            .map(|c| (c.user as u32, c.item as u32, c.label))
            .collect();
        Self { prob, alias, cells }
    }

    /// Draws `(user, item, label)` with probability equal to the cell mass.
    pub fn sample(&self, rng: &mut StreamRng) -> (usize, usize, Label) {
        let slot = rng.gen_range(0..self.prob.len());
        let u: f64 = rng.gen();
        let idx = if u < self.prob[slot] {
            slot
        } else {
            self.alias[slot] as usize
        };
        let (i, j, y) = self.cells[idx];
        (i as usize, j as usize, y)
    }
}

/// One-off draw; builds the alias table each call. Loops should hold a
/// [`PairSampler`] instead.
pub fn sample_pair(joint: &JointDistribution, rng: &mut StreamRng) -> (usize, usize, Label) {
    PairSampler::new(joint).sample(rng)
}
