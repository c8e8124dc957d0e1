use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::vocab::PAD;
use crate::error::{invalid, Result};

/// Encoded target side of one training example. Ids include the final EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetSeq {
    Word(Vec<usize>),
    Factored { lemmas: Vec<usize>, factors: Vec<usize> },
}

impl TargetSeq {
    pub fn len(&self) -> usize {
        match self {
            TargetSeq::Word(ids) => ids.len(),
            TargetSeq::Factored { lemmas, .. } => lemmas.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub source: Vec<usize>,
    pub target: TargetSeq,
}

/// Right-padded id matrix; `mask[i][t]` marks real tokens (EOS included).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Padded {
    pub ids: Vec<Vec<usize>>,
    pub mask: Vec<Vec<bool>>,
}

impl Padded {
    fn from_rows(rows: &[&[usize]]) -> Padded {
        let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(rows.len());
        let mut mask = Vec::with_capacity(rows.len());
        for r in rows {
            let mut row = r.to_vec();
            row.resize(width, PAD);
            ids.push(row);
            let mut m = vec![true; r.len()];
            m.resize(width, false);
            mask.push(m);
        }
        Padded { ids, mask }
    }

    /// Unpadded ids of row `i`.
    pub fn row(&self, i: usize) -> Vec<usize> {
        self.ids[i]
            .iter()
            .zip(&self.mask[i])
            .filter(|(_, &m)| m)
            .map(|(&id, _)| id)
            .collect()
    }

    pub fn token_count(&self) -> usize {
        self.mask.iter().flatten().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BatchTarget {
    Word(Padded),
    Factored { lemmas: Padded, factors: Padded },
}

impl BatchTarget {
    pub fn token_count(&self) -> usize {
        match self {
            BatchTarget::Word(p) => p.token_count(),
            BatchTarget::Factored { lemmas, .. } => lemmas.token_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub source: Padded,
    pub target: BatchTarget,
    /// Position of each row in the example list the batch was cut from.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.indices.len()
    }

    /// Unpadded example for row `i`.
    pub fn example(&self, i: usize) -> Example {
        let target = match &self.target {
            BatchTarget::Word(p) => TargetSeq::Word(p.row(i)),
            BatchTarget::Factored { lemmas, factors } => TargetSeq::Factored {
                lemmas: lemmas.row(i),
                factors: factors.row(i),
            },
        };
        Example {
            source: self.source.row(i),
            target,
        }
    }
}

/// Cuts one epoch of batches. Examples are shuffled with `seed`, stably
/// sorted by target length so each batch holds similar lengths, cut into
/// batches of `batch_size`, and the batch order is shuffled again.
pub fn make_batches(examples: &[Example], batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    let word_kind = matches!(examples.first().map(|e| &e.target), Some(TargetSeq::Word(_)));
    for (i, ex) in examples.iter().enumerate() {
        if matches!(ex.target, TargetSeq::Word(_)) != word_kind {
            return Err(invalid(format!("example {i}: mixed word and factored targets")));
        }
        if let TargetSeq::Factored { lemmas, factors } = &ex.target {
            if lemmas.len() != factors.len() {
                return Err(invalid(format!(
                    "example {i}: {} lemmas but {} factors",
                    lemmas.len(),
                    factors.len()
                )));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|&i| examples[i].target.len());

    let mut batches: Vec<Batch> = order
        .chunks(batch_size)
        .map(|chunk| {
            let sources: Vec<&[usize]> = chunk.iter().map(|&i| examples[i].source.as_slice()).collect();
            let first = &examples[chunk[0]].target;
            let target = match first {
                TargetSeq::Word(_) => {
                    let rows: Vec<&[usize]> = chunk
                        .iter()
                        .filter_map(|&i| match &examples[i].target {
                            TargetSeq::Word(ids) => Some(ids.as_slice()),
                            TargetSeq::Factored { .. } => None,
                        })
                        .collect();
                    BatchTarget::Word(Padded::from_rows(&rows))
                }
                TargetSeq::Factored { .. } => {
                    let (mut lemmas, mut factors) = (Vec::new(), Vec::new());
                    for &i in chunk {
                        if let TargetSeq::Factored { lemmas: l, factors: f } = &examples[i].target {
                            lemmas.push(l.as_slice());
                            factors.push(f.as_slice());
                        }
                    }
                    BatchTarget::Factored {
                        lemmas: Padded::from_rows(&lemmas),
                        factors: Padded::from_rows(&factors),
                    }
                }
            };
            Batch {
                source: Padded::from_rows(&sources),
                target,
                indices: chunk.to_vec(),
            }
        })
        .collect();
    batches.shuffle(&mut rng);
    Ok(batches)
}
