use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

pub fn validate_fractions(fractions: [f64; 3]) -> Result<()> {
    if fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
        return Err(Error::arg(format!("split fractions {fractions:?} outside [0,1]")));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::arg(format!("split fractions sum to {sum}, not 1")));
    }
    Ok(())
}

/// Stratified, seeded split of graph indices by class label.
///
/// Overall sizes are `round(f_train * n)`, `round(f_val * n)` and the rest.
/// Each class is shuffled, classes are interleaved by relative rank, and the
/// interleaved order is cut into the three parts, so every part keeps the
/// class proportions up to one graph per class.
pub fn split(labels: &[usize], fractions: [f64; 3], seed: u64) -> Result<Split> {
    validate_fractions(fractions)?;
    let n = labels.len();
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keyed = Vec::with_capacity(n);
    for (class, members) in by_class.iter_mut() {
        members.shuffle(&mut rng);
        let count = members.len() as f64;
        for (rank, &i) in members.iter().enumerate() {
            keyed.push(((rank as f64 + 0.5) / count, *class, i));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let order: Vec<usize> = keyed.into_iter().map(|(_, _, i)| i).collect();
    Ok(Split {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    })
}
