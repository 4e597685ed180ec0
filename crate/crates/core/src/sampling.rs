//! Generative-model access to an MDP: one next-state draw per state-action
//! pair per query.
//!
//! Each kernel row gets a Walker/Vose alias table so a draw costs O(1). The
//! random stream is ChaCha8 keyed by a SHA-256 digest of the seed; child
//! streams are keyed by hashing the parent key together with a label, so a
//! child is a pure function of `(root seed, label path)` and never of how far
//! the parent has advanced.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mdp::{validate_mdp, TabularMdp};

/// One draw of the generative model: a next state for every `(s, a)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleMatrix {
    num_states: usize,
    num_actions: usize,
    next_state: Vec<u32>,
}

impl SampleMatrix {
    pub fn new(num_states: usize, num_actions: usize, next_state: Vec<u32>) -> Result<Self> {
        let sample = SampleMatrix::from_raw(num_states, num_actions, next_state);
        if sample.next_state.len() != num_states * num_actions {
            return Err(Error::ShapeMismatch {
                expected: format!("{} next states", num_states * num_actions),
                got: sample.next_state.len().to_string(),
            });
        }
        if let Some(&bad) = sample.next_state.iter().find(|&&x| x as usize >= num_states) {
            return Err(Error::SampleOutOfRange { index: bad as usize, num_states });
        }
        Ok(sample)
    }

    /// No range checks; consumers such as
    /// [`empirical_bellman_apply`](crate::mdp::empirical_bellman_apply) re-check.
    pub fn from_raw(num_states: usize, num_actions: usize, next_state: Vec<u32>) -> Self {
        SampleMatrix { num_states, num_actions, next_state }
    }

    pub(crate) fn empty(num_states: usize, num_actions: usize) -> Self {
        SampleMatrix { num_states, num_actions, next_state: vec![0; num_states * num_actions] }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn next_state(&self, state: usize, action: usize) -> usize {
        self.next_state[state * self.num_actions + action] as usize
    }

    pub fn next_states(&self) -> &[u32] {
        &self.next_state
    }
}

/// Alias tables for every kernel row. Immutable once built.
#[derive(Debug)]
pub struct AliasTables {
    num_states: usize,
    num_actions: usize,
    /// Acceptance thresholds, `[pair][column]`.
    threshold: Vec<f64>,
    alias: Vec<u32>,
    /// Rows that are point masses skip the random draw entirely.
    constant: Vec<Option<u32>>,
}

impl AliasTables {
    pub fn new(mdp: &TabularMdp) -> Self {
        let n = mdp.num_states();
        let d = mdp.num_pairs();
        let mut threshold = vec![1.0; d * n];
        let mut alias = vec![0u32; d * n];
        let mut constant = vec![None; d];
        let mut small = Vec::with_capacity(n);
        let mut large = Vec::with_capacity(n);
        let mut scaled = vec![0.0; n];

        for pair in 0..d {
            let row = &mdp.kernel()[pair * n..(pair + 1) * n];
            let mut support = row.iter().enumerate().filter(|(_, &p)| p > 0.0);
            if let (Some((only, _)), None) = (support.next(), support.next()) {
                constant[pair] = Some(only as u32);
                continue;
            }
            let th = &mut threshold[pair * n..(pair + 1) * n];
            let al = &mut alias[pair * n..(pair + 1) * n];
            let mode = row
                .iter()
                .enumerate()
                .fold(0, |best, (i, &p)| if p > row[best] { i } else { best });

            small.clear();
            large.clear();
            for (i, &p) in row.iter().enumerate() {
                scaled[i] = p * n as f64;
                al[i] = i as u32;
                if scaled[i] < 1.0 {
                    small.push(i);
                } else {
                    large.push(i);
                }
            }
            while let (Some(&l), Some(&g)) = (small.last(), large.last()) {
                small.pop();
                th[l] = scaled[l];
                al[l] = g as u32;
                scaled[g] = (scaled[g] + scaled[l]) - 1.0;
                if scaled[g] < 1.0 {
                    large.pop();
                    small.push(g);
                }
            }
            // Leftovers are rounding residue; they keep threshold 1 unless
            // they carry no mass at all.
            for &i in large.iter().chain(small.iter()) {
                if row[i] == 0.0 {
                    th[i] = 0.0;
                    al[i] = mode as u32;
                } else {
                    th[i] = 1.0;
                }
            }
        }
        AliasTables { num_states: n, num_actions: mdp.num_actions(), threshold, alias, constant }
    }

    #[inline]
    fn draw<R: Rng>(&self, pair: usize, rng: &mut R) -> u32 {
        if let Some(x) = self.constant[pair] {
            return x;
        }
        let n = self.num_states;
        let column = rng.random_range(0..n);
        let u: f64 = rng.random();
        let idx = pair * n + column;
        if u < self.threshold[idx] {
            column as u32
        } else {
            self.alias[idx]
        }
    }

    /// True when the given row is stored as a point mass.
    pub fn is_constant(&self, state: usize, action: usize) -> bool {
        self.constant[state * self.num_actions + action].is_some()
    }
}

/// Seeded, splittable sampler for the generative model.
///
/// Parent and all children share one cumulative counter of matrix samples.
/// A sampler is single-owner; parallel trials each build their own.
#[derive(Debug)]
pub struct GenerativeSampler {
    tables: Arc<AliasTables>,
    key: [u8; 32],
    rng: ChaCha8Rng,
    counter: Arc<AtomicU64>,
}

impl GenerativeSampler {
    /// Validates the MDP and builds its alias tables. The counter starts at zero.
    pub fn new(mdp: &TabularMdp, seed: u64) -> Result<Self> {
        validate_mdp(mdp)?;
        let tables = Arc::new(AliasTables::new(mdp));
        let mut hasher = Sha256::new();
        hasher.update(b"vrql/sampler/root");
        hasher.update(seed.to_le_bytes());
        Ok(GenerativeSampler::from_parts(tables, hasher.finalize().into(), Arc::new(AtomicU64::new(0))))
    }

    fn from_parts(tables: Arc<AliasTables>, key: [u8; 32], counter: Arc<AtomicU64>) -> Self {
        GenerativeSampler { rng: ChaCha8Rng::from_seed(key), tables, key, counter }
    }

    /// Child stream determined by this sampler's key and `label` only.
    pub fn split(&self, label: &str) -> GenerativeSampler {
        let mut hasher = Sha256::new();
        hasher.update(self.key);
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        GenerativeSampler::from_parts(
            Arc::clone(&self.tables),
            hasher.finalize().into(),
            Arc::clone(&self.counter),
        )
    }

    pub fn num_states(&self) -> usize {
        self.tables.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.tables.num_actions
    }

    pub fn tables(&self) -> &AliasTables {
        &self.tables
    }

    /// Cumulative matrix samples drawn by this sampler and every stream split from it.
    pub fn samples_drawn(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }

    pub fn draw(&mut self) -> SampleMatrix {
        let mut out = SampleMatrix::empty(self.tables.num_states, self.tables.num_actions);
        self.draw_into(&mut out);
        out
    }

    /// Refills `out` with a fresh draw, reusing its buffer.
    pub fn draw_into(&mut self, out: &mut SampleMatrix) {
        debug_assert_eq!(out.next_state.len(), self.tables.constant.len());
        for (pair, x) in out.next_state.iter_mut().enumerate() {
            *x = self.tables.draw(pair, &mut self.rng);
        }
        self.counter.fetch_add(1, Ordering::Relaxed);
    }
}

/// Builds a sampler for `mdp` seeded by `seed`.
pub fn build_sampler(mdp: &TabularMdp, seed: u64) -> Result<GenerativeSampler> {
    GenerativeSampler::new(mdp, seed)
}

pub fn draw_sample_matrix(sampler: &mut GenerativeSampler) -> SampleMatrix {
    sampler.draw()
}

pub fn split_stream(sampler: &GenerativeSampler, label: &str) -> GenerativeSampler {
    sampler.split(label)
}
