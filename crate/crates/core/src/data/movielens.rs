use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Example;
use crate::token_space::Label;

/// Bijection between opaque ids and dense indices, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocab {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Dense index of `id`, assigning the next one if unseen.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&k) = self.index.get(id) {
            return k;
        }
        let k = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), k);
        k
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, k: usize) -> Option<&str> {
        self.ids.get(k).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// One rating with dense user and item indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Record {
    pub user: usize,
    pub item: usize,
    pub rating: u8,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionLog {
    pub records: Vec<Record>,
    pub users: Vocab,
    pub items: Vocab,
}

impl InteractionLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }
}

fn parse_line(line: &str, lineno: usize) -> Result<(&str, &str, u8, i64)> {
    let err = |message: String| Error::Parse {
        line: lineno,
        message,
    };
    let fields: Vec<&str> = line.split("::").collect();
    if fields.len() != 4 {
        return Err(err(format!("expected 4 `::`-separated fields, found {}", fields.len())));
    }
    let (user, item) = (fields[0].trim(), fields[1].trim());
    if user.is_empty() || item.is_empty() {
        return Err(err("empty user or item id".into()));
    }
    let rating: u8 = fields[2]
        .trim()
        .parse()
        .map_err(|_| err(format!("rating `{}` is not an integer", fields[2])))?;
    if !(1..=5).contains(&rating) {
        return Err(err(format!("rating {rating} outside 1..=5")));
    }
    let timestamp: i64 = fields[3]
        .trim()
        .parse()
        .map_err(|_| err(format!("timestamp `{}` is not an integer", fields[3])))?;
    Ok((user, item, rating, timestamp))
}

/// Parses `UserID::MovieID::Rating::Timestamp` lines. Blank lines are skipped;
/// line numbers in errors are 1-based.
pub fn parse_movielens(text: &str) -> Result<InteractionLog> {
    let mut log = InteractionLog::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (user, item, rating, timestamp) = parse_line(line, i + 1)?;
        log.records.push(Record {
            user: log.users.intern(user),
            item: log.items.intern(item),
            rating,
            timestamp,
        });
    }
    if log.is_empty() {
        return Err(Error::InvalidInput("ratings file has no records".into()));
    }
    Ok(log)
}

pub fn load_movielens(path: impl AsRef<Path>) -> Result<InteractionLog> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    // ML-1M titles are Latin-1; ratings are ASCII but be lenient
    parse_movielens(&String::from_utf8_lossy(&bytes))
}

/// Rating `<= 3` is negative, `> 3` positive. Items are offset by the user count.
pub fn binarize(log: &InteractionLog) -> Vec<Example> {
    let n_users = log.n_users();
    log.records
        .iter()
        .map(|r| {
            let label = if r.rating <= 3 { Label::Neg } else { Label::Pos };
            Example::pair(r.user, r.item, n_users, label)
        })
        .collect()
}
