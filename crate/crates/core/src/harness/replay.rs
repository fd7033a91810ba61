//! Re-evaluation of stored elites and policies.

use std::fs;
use std::path::Path;

use super::artifacts::{read_archive, read_checkpoint, sniff};
use super::{HarnessError, HyperParams, RunConfig};
use crate::env::run_episode;
use crate::qd::{descriptor_from_contacts, evaluate};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub kind: &'static str,
    /// Elites (or policies) re-evaluated.
    pub checked: usize,
    /// `(cell, stored, replayed)`; cell is `None` for a checkpoint.
    pub mismatches: Vec<(Option<usize>, f64, f64)>,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Replays an `archive.bin` (every elite, or only `cell`) or a
/// `checkpoint.bin`, requiring bit-identical fitness and, for elites, the
/// stored descriptor.
pub fn replay(path: &Path, cell: Option<usize>) -> Result<ReplayReport, HarnessError> {
    let bytes = fs::read(path).map_err(HarnessError::io(path))?;
    match sniff(&bytes) {
        Some("archive") => {
            let (text, archive) = read_archive(&mut bytes.as_slice())?;
            let cfg = RunConfig::parse(&text)?;
            let HyperParams::MapElites(hp) = &cfg.hyper else {
                return Err(HarnessError::Format("archive config is not a MAP-Elites run".into()));
            };
            let cells: Vec<usize> = match cell {
                Some(c) => {
                    if archive.get(c).is_none() {
                        return Err(HarnessError::ReplayMismatch(format!("cell {c} is empty")));
                    }
                    vec![c]
                }
                None => archive.iter().map(|(c, _)| c).collect(),
            };
            let mut mismatches = Vec::new();
            for &c in &cells {
                let elite = archive.get(c).expect("listed cells are occupied");
                let (_, result) = evaluate(&cfg.env, cfg.mode, hp, elite.genome.clone())?;
                let d = descriptor_from_contacts(&result.contact_fraction, hp.descriptor_base);
                if result.fitness.to_bits() != elite.fitness.to_bits() || d != elite.descriptor {
                    mismatches.push((Some(c), elite.fitness, result.fitness));
                }
            }
            Ok(ReplayReport { kind: "archive", checked: cells.len(), mismatches })
        }
        Some("checkpoint") => {
            if cell.is_some() {
                return Err(HarnessError::Format("--cell applies to archives only".into()));
            }
            let (text, model, reference) = read_checkpoint(&mut bytes.as_slice())?;
            let cfg = RunConfig::parse(&text)?;
            let mut env = cfg.env.build(cfg.mode);
            let fitness = run_episode(&mut env, &model.mean_policy())?.fitness;
            let mismatches = if fitness.to_bits() == reference.to_bits() {
                Vec::new()
            } else {
                vec![(None, reference, fitness)]
            };
            Ok(ReplayReport { kind: "checkpoint", checked: 1, mismatches })
        }
        _ => Err(HarnessError::Format(format!("{} is neither an archive nor a checkpoint", path.display()))),
    }
}
