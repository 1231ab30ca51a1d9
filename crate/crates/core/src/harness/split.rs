use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::source::Label;

/// Reshuffles tried before a split that leaves a class out of one half is
/// reported as an error.
pub const MAX_SPLIT_REDRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SplitError {
    #[error("need at least two records of each class to split, have {relevant} relevant and {irrelevant} irrelevant")]
    TooSmall { relevant: usize, irrelevant: usize },
    #[error("no split with both classes on both sides after {0} draws")]
    RedrawsExhausted(usize),
    #[error("cannot make {folds} folds: the minority class has {minority} records")]
    Folds { folds: usize, minority: usize },
}

fn class_counts(labels: &[Label]) -> (usize, usize) {
    let pos = labels.iter().filter(|l| l.is_relevant()).count();
    (pos, labels.len() - pos)
}

/// Shuffles indices with a seeded ChaCha8 generator and cuts them in half,
/// the extra record of an odd count going to train. Reshuffles (same
/// generator stream) until both halves contain both classes.
pub fn split_indices(labels: &[Label], seed: u64) -> Result<(Vec<usize>, Vec<usize>), SplitError> {
    let (relevant, irrelevant) = class_counts(labels);
    if relevant < 2 || irrelevant < 2 {
        return Err(SplitError::TooSmall { relevant, irrelevant });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    let cut = labels.len().div_ceil(2);
    let has_both = |part: &[usize]| {
        let pos = part.iter().filter(|&&i| labels[i].is_relevant()).count();
        pos > 0 && pos < part.len()
    };
    for _ in 0..MAX_SPLIT_REDRAWS {
        idx.shuffle(&mut rng);
        let (train, test) = idx.split_at(cut);
        if has_both(train) && has_both(test) {
            return Ok((train.to_vec(), test.to_vec()));
        }
    }
    Err(SplitError::RedrawsExhausted(MAX_SPLIT_REDRAWS))
}

/// Stratified k-fold assignment: each class is shuffled separately and dealt
/// round-robin into the folds. Returns the held-out indices of every fold.
pub fn stratified_folds(labels: &[Label], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>, SplitError> {
    let (relevant, irrelevant) = class_counts(labels);
    let minority = relevant.min(irrelevant);
    if folds < 2 || folds > minority {
        return Err(SplitError::Folds { folds, minority });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    let mut dealt = 0;
    for class in [Label::Irrelevant, Label::Relevant] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            out[dealt % folds].push(i);
            dealt += 1;
        }
    }
    out.iter_mut().for_each(|f| f.sort_unstable());
    Ok(out)
}
