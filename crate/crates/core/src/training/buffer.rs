use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::env::Transition;
use crate::error::{Error, Result};
use crate::model::Normalizer;
use crate::rng::SimRng;

/// Fixed-capacity ring of transitions. Once full, each insertion evicts the
/// oldest record; iteration runs oldest to newest.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    storage: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        ReplayBuffer {
            storage: Vec::new(),
            capacity,
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn add(&mut self, transition: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(transition);
        } else {
            self.storage[self.cursor] = transition;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Record `i` in insertion order (0 is the oldest still stored).
    pub fn get(&self, i: usize) -> Option<&Transition> {
        if i >= self.storage.len() {
            return None;
        }
        let start = if self.storage.len() < self.capacity { 0 } else { self.cursor };
        self.storage.get((start + i) % self.storage.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> + '_ {
        (0..self.len()).map(move |i| self.get(i).expect("index within length"))
    }

    /// Writes the buffer as CSV with header `s0..,a0..,r,ns0..,done`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let first = match self.get(0) {
            Some(t) => t,
            None => return Err(Error::InsufficientData("cannot dump an empty buffer".into())),
        };
        let ds = first.state.len();
        let da = first.action.len();
        let mut header: Vec<String> = (0..ds).map(|i| format!("s{i}")).collect();
        header.extend((0..da).map(|i| format!("a{i}")));
        header.push("r".into());
        header.extend((0..ds).map(|i| format!("ns{i}")));
        header.push("done".into());
        let mut out = header.join(",");
        out.push('\n');
        for t in self.iter() {
            let fields: Vec<String> = t
                .state
                .iter()
                .chain(&t.action)
                .chain(std::iter::once(&t.reward))
                .chain(&t.next_state)
                .map(|x| x.to_string())
                .chain(std::iter::once(if t.terminal { "1" } else { "0" }.to_string()))
                .collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Reads a CSV written by [`Self::write_csv`].
    pub fn read_csv(path: impl AsRef<Path>, capacity: usize) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(f).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty dataset file".into()))?
            .map_err(|e| Error::io(path, e))?;
        let cols: Vec<&str> = header.split(',').collect();
        let ds = cols.iter().filter(|c| c.starts_with('s')).count();
        let da = cols.iter().filter(|c| c.starts_with('a')).count();
        if ds == 0 || da == 0 || cols.len() != 2 * ds + da + 2 || cols.last() != Some(&"done") {
            return Err(Error::Format(format!("unexpected dataset header `{header}`")));
        }
        let mut buf = ReplayBuffer::new(capacity);
        for (n, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("dataset line {}: {e}", n + 2)))?;
            if v.len() != cols.len() {
                return Err(Error::Format(format!("dataset line {} has {} fields", n + 2, v.len())));
            }
            buf.add(Transition {
                state: v[..ds].to_vec(),
                action: v[ds..ds + da].to_vec(),
                reward: v[ds + da],
                next_state: v[ds + da + 1..2 * ds + da + 1].to_vec(),
                terminal: v[2 * ds + da + 1] != 0.0,
            });
        }
        Ok(buf)
    }
}

/// Shuffled disjoint `(train, holdout)` index sets over `size` records.
/// The holdout gets `round(ratio·size)` records, at least one.
pub fn holdout_split(size: usize, ratio: f64, rng: &mut SimRng) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("holdout ratio {ratio} must lie in (0, 1)")));
    }
    if size < 5 {
        return Err(Error::InsufficientData(format!(
            "need at least 5 transitions to split, have {size}"
        )));
    }
    let mut idx: Vec<usize> = (0..size).collect();
    idx.shuffle(rng);
    let holdout = ((ratio * size as f64).round() as usize).clamp(1, size - 1);
    let train = idx.split_off(holdout);
    Ok((train, idx))
}

/// Input normalizer over `concat(state, action)` of every stored transition.
pub fn fit_normalizer(buffer: &ReplayBuffer) -> Result<Normalizer> {
    let rows: Vec<Vec<f64>> = buffer
        .iter()
        .map(|t| t.state.iter().chain(&t.action).copied().collect())
        .collect();
    Normalizer::fit(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::STD_FLOOR;
    use crate::rng::seeded;

    fn tr(i: usize) -> Transition {
        Transition {
            state: vec![i as f64, 1.0],
            action: vec![-(i as f64)],
            reward: 0.5 * i as f64,
            next_state: vec![i as f64 + 1.0, 1.0],
            terminal: i.is_multiple_of(3),
        }
    }

    #[test]
    fn ring_eviction_and_order() {
        let mut b = ReplayBuffer::new(3);
        b.add(tr(0));
        assert_eq!(b.len(), 1);
        for i in 1..4 {
            b.add(tr(i));
        }
        assert_eq!(b.len(), 3);
        let states: Vec<f64> = b.iter().map(|t| t.state[0]).collect();
        assert_eq!(states, vec![1.0, 2.0, 3.0]);
        b.add(tr(4));
        b.add(tr(5));
        let states: Vec<f64> = b.iter().map(|t| t.state[0]).collect();
        assert_eq!(states, vec![3.0, 4.0, 5.0]);
    }

    #[test]
    fn split_sizes() {
        let (tr_, ho) = holdout_split(100, 0.2, &mut seeded(0)).unwrap();
        assert_eq!((tr_.len(), ho.len()), (80, 20));
        let mut all: Vec<usize> = tr_.iter().chain(&ho).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let (_, ho) = holdout_split(5, 0.01, &mut seeded(0)).unwrap();
        assert_eq!(ho.len(), 1);
        assert_eq!(holdout_split(50, 0.3, &mut seeded(7)).unwrap(), holdout_split(50, 0.3, &mut seeded(7)).unwrap());
        assert!(matches!(holdout_split(4, 0.2, &mut seeded(0)), Err(Error::InsufficientData(_))));
        assert!(matches!(holdout_split(10, 1.0, &mut seeded(0)), Err(Error::Config(_))));
    }

    #[test]
    fn normalizer_from_buffer() {
        let mut b = ReplayBuffer::new(10);
        b.add(Transition {
            state: vec![-1.0, 4.0],
            action: vec![2.0],
            reward: 0.0,
            next_state: vec![0.0, 0.0],
            terminal: false,
        });
        b.add(Transition {
            state: vec![1.0, 4.0],
            action: vec![2.0],
            reward: 0.0,
            next_state: vec![0.0, 0.0],
            terminal: false,
        });
        let n = fit_normalizer(&b).unwrap();
        assert_eq!(n.mean, vec![0.0, 4.0, 2.0]);
        assert_eq!(n.std, vec![1.0, STD_FLOOR, STD_FLOOR]);
        assert_eq!(n.normalize(&[0.0, 4.0, 2.0]), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let mut b = ReplayBuffer::new(8);
        for i in 0..6 {
            b.add(tr(i));
        }
        b.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("s0,s1,a0,r,ns0,ns1,done\n"));
        assert_eq!(ReplayBuffer::read_csv(&path, 8).unwrap(), b);
    }
}
