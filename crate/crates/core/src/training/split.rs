use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;

/// Train:validation:test sensor ratio.
pub const SPLIT_RATIO: [usize; 3] = [28, 4, 9];

/// Sensor-wise partition into training (context), validation and test sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

/// Counts for `n` sensors following [`SPLIT_RATIO`], rounded by largest
/// remainder. Each part gets at least one sensor and training at least two.
pub fn split_counts(n: usize) -> Result<[usize; 3], TrainError> {
    if n < 4 {
        return Err(TrainError::Data(format!("a sensor split needs at least 4 sensors, got {n}")));
    }
    let total: usize = SPLIT_RATIO.iter().sum();
    let mut counts = SPLIT_RATIO.map(|r| r * n / total);
    let mut rem: Vec<(usize, usize)> = SPLIT_RATIO.iter().enumerate().map(|(i, r)| (r * n % total, i)).collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = n - counts.iter().sum::<usize>();
    for &(_, i) in rem.iter().take(short) {
        counts[i] += 1;
    }
    let mins = [2, 1, 1];
    for i in 0..3 {
        while counts[i] < mins[i] {
            let donor = (0..3).filter(|&j| counts[j] > mins[j]).max_by_key(|&j| counts[j]).expect("n >= 4");
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    Ok(counts)
}

impl SensorSplit {
    /// Seeded random partition of `ids`.
    pub fn random(ids: &[String], seed: u64) -> Result<Self, TrainError> {
        let [a, b, _] = split_counts(ids.len())?;
        let mut shuffled = ids.to_vec();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let test = shuffled.split_off(a + b);
        let val = shuffled.split_off(a);
        Ok(Self { train: shuffled, val, test, seed })
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let mut all: Vec<&String> = self.train.iter().chain(&self.val).chain(&self.test).collect();
        let n = all.len();
        all.sort();
        all.dedup();
        if all.len() != n {
            return Err(TrainError::Data("split sets overlap".into()));
        }
        if self.train.len() < 2 || self.val.is_empty() || self.test.is_empty() {
            return Err(TrainError::Data("split needs >= 2 training and >= 1 validation and test sensors".into()));
        }
        Ok(())
    }
}
