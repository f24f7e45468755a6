use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, StanceExample};
use crate::error::{Result, StanceError};

/// Splits `n` across `sizes` proportionally using largest-remainder
/// rounding. Remainder ties go to the earlier entry.
pub fn apportion(sizes: &[usize], n: usize) -> Result<Vec<usize>> {
    let total: usize = sizes.iter().sum();
    if n > total {
        return Err(StanceError::invalid(format!(
            "cannot sample {n} examples from {total}"
        )));
    }
    if total == 0 {
        return Ok(vec![0; sizes.len()]);
    }
    let (n128, total128) = (n as u128, total as u128);
    let mut alloc: Vec<usize> = sizes.iter().map(|&s| (n128 * s as u128 / total128) as usize).collect();
    let remainders: Vec<u128> = sizes.iter().map(|&s| n128 * s as u128 % total128).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(a.cmp(&b)));
    let missing = n - alloc.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        alloc[i] += 1;
    }
    Ok(alloc)
}

/// Draws `n` examples across `datasets` in proportion to their sizes,
/// without replacement inside each dataset. Output is grouped by dataset
/// in input order; deterministic for a given seed.
pub fn sample_proportional(datasets: &[&Dataset], n: usize, seed: u64) -> Result<Vec<StanceExample>> {
    let sizes: Vec<usize> = datasets.iter().map(|d| d.examples.len()).collect();
    let alloc = apportion(&sizes, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for (d, take) in datasets.iter().zip(alloc) {
        let mut idx: Vec<usize> = (0..d.examples.len()).collect();
        idx.shuffle(&mut rng);
        out.extend(idx[..take].iter().map(|&i| d.examples[i].clone()));
    }
    Ok(out)
}
