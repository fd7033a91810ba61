//! MAP-Elites over the six-leg duty-factor descriptor.

pub mod evolve;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ControllerMode, NUM_LEGS};
use crate::nn::{MlpArchitecture, ParamVector};

pub use evolve::{evaluate, evolve, EvolveOutput, Insertion, MeCurvePoint};

#[derive(Debug, Error)]
pub enum QdError {
    #[error("cannot select from an empty archive")]
    EmptyArchive,
    #[error("budget of {budget} frames is below one generation ({needed} frames)")]
    BudgetTooSmall { budget: u64, needed: u64 },
    #[error("invalid MAP-Elites hyper-parameters: {0}")]
    InvalidHyperParams(String),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
}

/// Discretized per-leg contact fractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Descriptor {
    pub buckets: [u8; NUM_LEGS],
    pub base: u8,
}

impl Descriptor {
    pub fn cell_index(&self) -> usize {
        cell_index(self)
    }
}

/// Buckets each contact fraction: `min(floor(f * base), base - 1)`.
pub fn descriptor_from_contacts(contact_fraction: &[f64; NUM_LEGS], base: u8) -> Descriptor {
    let b = base as f64;
    let buckets = contact_fraction.map(|f| {
        let k = (f.clamp(0.0, 1.0) * b).floor() as u8;
        k.min(base - 1)
    });
    Descriptor { buckets, base }
}

/// Mixed-radix index `sum buckets[i] * base^i`.
pub fn cell_index(d: &Descriptor) -> usize {
    d.buckets
        .iter()
        .rev()
        .fold(0usize, |acc, &b| acc * d.base as usize + b as usize)
}

/// Inverse of [`cell_index`].
pub fn descriptor_of_cell(index: usize, base: u8) -> Descriptor {
    let mut rest = index;
    let buckets = std::array::from_fn(|_| {
        let b = (rest % base as usize) as u8;
        rest /= base as usize;
        b
    });
    Descriptor { buckets, base }
}

pub fn archive_capacity(base: u8) -> usize {
    (base as usize).pow(NUM_LEGS as u32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Elite {
    pub genome: ParamVector,
    /// Episode reward of the genome, meters on the hexapod.
    pub fitness: f64,
    pub descriptor: Descriptor,
    pub generation_added: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    InsertedEmpty,
    Replaced,
    Rejected,
}

/// Dense behavior-performance map of `base^6` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    base: u8,
    cells: Vec<Option<Elite>>,
    /// Occupied cell indices in order of first occupation.
    occupied: Vec<usize>,
}

impl Archive {
    pub fn new(base: u8) -> Self {
        assert!(base >= 2, "descriptor base must be at least 2");
        Self { base, cells: vec![None; archive_capacity(base)], occupied: Vec::new() }
    }

    pub fn base(&self) -> u8 {
        self.base
    }

    pub fn capacity(&self) -> usize {
        self.cells.len()
    }

    pub fn occupancy(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn get(&self, cell: usize) -> Option<&Elite> {
        self.cells.get(cell).and_then(Option::as_ref)
    }

    /// Occupied cells in ascending cell-index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Elite)> {
        self.cells.iter().enumerate().filter_map(|(i, c)| c.as_ref().map(|e| (i, e)))
    }

    /// Highest-fitness elite; ties go to the lower cell index.
    pub fn best(&self) -> Option<&Elite> {
        self.iter().map(|(_, e)| e).fold(None, |best: Option<&Elite>, e| match best {
            Some(b) if b.fitness >= e.fitness => Some(b),
            _ => Some(e),
        })
    }

    pub fn best_fitness(&self) -> Option<f64> {
        self.best().map(|e| e.fitness)
    }

    /// Inserts when the target cell is empty or its occupant is strictly worse.
    pub fn try_insert(
        &mut self,
        genome: ParamVector,
        descriptor: Descriptor,
        fitness: f64,
        generation: u64,
    ) -> InsertOutcome {
        assert_eq!(descriptor.base, self.base, "descriptor base does not match archive");
        debug_assert!(fitness.is_finite());
        let index = cell_index(&descriptor);
        let slot = &mut self.cells[index];
        let outcome = match slot {
            None => {
                self.occupied.push(index);
                InsertOutcome::InsertedEmpty
            }
            Some(e) if e.fitness < fitness => InsertOutcome::Replaced,
            Some(_) => return InsertOutcome::Rejected,
        };
        *slot = Some(Elite { genome, fitness, descriptor, generation_added: generation });
        outcome
    }

    /// Puts an elite back at its own cell; used when loading dumps.
    pub(crate) fn restore(&mut self, elite: Elite) {
        let index = cell_index(&elite.descriptor);
        if self.cells[index].is_none() {
            self.occupied.push(index);
        }
        self.cells[index] = Some(elite);
    }

    /// Uniform draw over occupied cells; returns a copy of the elite genome.
    pub fn random_selection<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParamVector, QdError> {
        self.random_cell(rng).map(|c| self.cells[c].as_ref().unwrap().genome.clone())
    }

    pub fn random_cell<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize, QdError> {
        if self.occupied.is_empty() {
            return Err(QdError::EmptyArchive);
        }
        Ok(self.occupied[rng.random_range(0..self.occupied.len())])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeHyperParams {
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    pub hidden: [usize; 2],
    pub descriptor_base: u8,
    pub batch_per_gen: usize,
    /// Optional cap on generations; the frame budget always applies.
    pub nb_gen: Option<u64>,
    /// Standard deviation of the additive Gaussian gene noise.
    pub mutation_sigma: f64,
    /// Initial genomes are uniform in `[-init_range, init_range]`.
    pub init_range: f64,
    /// Mutated genes are clamped to `[-weight_bound, weight_bound]`.
    pub weight_bound: f64,
}

impl Default for MeHyperParams {
    fn default() -> Self {
        Self {
            mutation_rate: 0.188637,
            hidden: [4, 4],
            descriptor_base: 4,
            batch_per_gen: 200,
            nb_gen: None,
            mutation_sigma: 0.2,
            init_range: 1.0,
            weight_bound: 5.0,
        }
    }
}

impl MeHyperParams {
    pub fn validate(&self) -> Result<(), QdError> {
        let bad = |m: &str| Err(QdError::InvalidHyperParams(m.to_string()));
        if !(0.0..=0.5).contains(&self.mutation_rate) {
            return bad("mutation_rate must lie in [0, 0.5]");
        }
        if !matches!(self.descriptor_base, 4 | 5) {
            return bad("descriptor_base must be 4 or 5");
        }
        if self.batch_per_gen == 0 {
            return bad("batch_per_gen must be at least 1");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        if !(self.mutation_sigma >= 0.0) || !(self.init_range > 0.0) || !(self.weight_bound > 0.0) {
            return bad("mutation_sigma, init_range and weight_bound must be positive");
        }
        Ok(())
    }

    pub fn arch(&self, mode: ControllerMode, action_limit: f64) -> MlpArchitecture {
        MlpArchitecture::policy(mode.obs_size(), self.hidden, action_limit)
    }
}

/// Per-gene Bernoulli(`mutation_rate`) Gaussian perturbation with clamping.
pub fn mutate<R: Rng + ?Sized>(genome: &ParamVector, hp: &MeHyperParams, rng: &mut R) -> ParamVector {
    let noise = Normal::new(0.0, hp.mutation_sigma).expect("sigma validated non-negative");
    let bound = hp.weight_bound;
    let values = genome
        .as_slice()
        .iter()
        .map(|&g| {
            if rng.random_bool(hp.mutation_rate) {
                (g + noise.sample(rng)).clamp(-bound, bound)
            } else {
                g
            }
        })
        .collect();
    ParamVector(values)
}
