//! The MAP-Elites generation loop.

use rand::Rng;
use rayon::prelude::*;

use super::{descriptor_from_contacts, mutate, Archive, InsertOutcome, MeHyperParams, QdError};
use crate::env::{run_episode, ControllerMode, EnvSpec, EpisodeResult};
use crate::nn::{MlpPolicy, ParamVector};

/// Archive statistics after one generation.
#[derive(Debug, Clone, PartialEq)]
pub struct MeCurvePoint {
    pub generation: u64,
    /// Cumulative environment frames.
    pub frames: u64,
    pub best_fitness: f64,
    pub occupancy: usize,
    /// Successful insertions during this generation.
    pub inserted: usize,
}

/// One accepted insertion, enough to rebuild the archive at any generation.
#[derive(Debug, Clone, PartialEq)]
pub struct Insertion {
    pub generation: u64,
    pub frames: u64,
    pub cell: usize,
    pub fitness: f64,
}

#[derive(Debug, Clone)]
pub struct EvolveOutput {
    pub archive: Archive,
    pub curve: Vec<MeCurvePoint>,
    pub insertions: Vec<Insertion>,
    pub frames: u64,
    pub evaluations: u64,
}

/// Evaluates one genome on a fresh environment instance.
pub fn evaluate(
    spec: &EnvSpec,
    mode: ControllerMode,
    hp: &MeHyperParams,
    genome: ParamVector,
) -> Result<(ParamVector, EpisodeResult), QdError> {
    let policy = MlpPolicy::new(hp.arch(mode, spec.action_limit()), genome)?;
    let mut env = spec.build(mode);
    let result = run_episode(&mut env, &policy)?;
    Ok((policy.params().clone(), result))
}

/// Runs whole generations until the next one would overrun `budget_frames`.
///
/// The first generation is all random genomes; later ones select uniformly
/// from the archive and mutate. Candidates are drawn serially from `rng`,
/// evaluated in parallel, and inserted in candidate order, so the result
/// depends only on the seed.
pub fn evolve<R: Rng + ?Sized>(
    spec: &EnvSpec,
    mode: ControllerMode,
    hp: &MeHyperParams,
    rng: &mut R,
    budget_frames: u64,
) -> Result<EvolveOutput, QdError> {
    hp.validate()?;
    let episode = spec.episode_len() as u64;
    let per_gen = episode * hp.batch_per_gen as u64;
    if budget_frames < per_gen {
        return Err(QdError::BudgetTooSmall { budget: budget_frames, needed: per_gen });
    }
    let mut generations = budget_frames / per_gen;
    if let Some(cap) = hp.nb_gen {
        generations = generations.min(cap);
    }

    let arch = hp.arch(mode, spec.action_limit());
    let mut archive = Archive::new(hp.descriptor_base);
    let mut curve = Vec::with_capacity(generations as usize);
    let mut insertions = Vec::new();
    let mut frames = 0u64;

    for generation in 0..generations {
        let candidates: Vec<ParamVector> = if generation == 0 {
            (0..hp.batch_per_gen)
                .map(|_| ParamVector::uniform(&arch, hp.init_range, rng))
                .collect()
        } else {
            (0..hp.batch_per_gen)
                .map(|_| archive.random_selection(rng).map(|parent| mutate(&parent, hp, rng)))
                .collect::<Result<_, _>>()?
        };

        let evaluated: Vec<(ParamVector, EpisodeResult)> = candidates
            .into_par_iter()
            .map(|genome| evaluate(spec, mode, hp, genome))
            .collect::<Result<_, _>>()?;

        let mut inserted = 0;
        for (genome, result) in evaluated {
            frames += result.frames as u64;
            let descriptor = descriptor_from_contacts(&result.contact_fraction, hp.descriptor_base);
            let outcome = archive.try_insert(genome, descriptor, result.fitness, generation);
            if outcome != InsertOutcome::Rejected {
                inserted += 1;
                insertions.push(Insertion {
                    generation,
                    frames,
                    cell: descriptor.cell_index(),
                    fitness: result.fitness,
                });
            }
        }
        curve.push(MeCurvePoint {
            generation,
            frames,
            best_fitness: archive.best_fitness().expect("archive non-empty after a generation"),
            occupancy: archive.occupancy(),
            inserted,
        });
    }

    let evaluations = generations * hp.batch_per_gen as u64;
    Ok(EvolveOutput { archive, curve, insertions, frames, evaluations })
}
