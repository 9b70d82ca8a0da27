//! Reproducible train/test split.
//!
//! Row `i` gets the key `splitmix64(seed ^ splitmix64(i))`. Rows are ranked
//! by `(key, i)` ascending and the first `ceil(n * test_fraction)` ranks
//! form the test set. The ceiling is computed exactly over the shortest
//! decimal representation of `test_fraction` (so `0.1` means 1/10). Both
//! subsets keep the original row order.

use super::ModelError;

/// SplitMix64 finalizer (Steele, Lea & Flood).
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn split_key(seed: u64, index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(index as u64))
}

/// `ceil(n * fraction)` with `fraction` read as the decimal it prints as.
pub fn test_size(n: usize, fraction: f64) -> Result<usize, ModelError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ModelError::BadFraction(fraction));
    }
    let text = format!("{fraction}");
    let digits = text.strip_prefix("0.").expect("fraction in (0, 1) prints as 0.ddd");
    if digits.len() > 30 {
        // n * fraction < 1 for any realistic n
        return Ok(usize::from(n > 0));
    }
    let numerator: u128 = digits.parse().expect("decimal digits");
    let denominator = 10u128.pow(digits.len() as u32);
    Ok((n as u128 * numerator).div_ceil(denominator) as usize)
}

/// `(train, test)` index sets.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), ModelError> {
    let m = test_size(n, test_fraction)?;
    if n < 2 {
        return Err(ModelError::TooFewRows(n));
    }
    let mut ranked: Vec<(u64, usize)> = (0..n).map(|i| (split_key(seed, i), i)).collect();
    ranked.sort_unstable();
    let mut is_test = vec![false; n];
    for &(_, i) in &ranked[..m] {
        is_test[i] = true;
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_test[i]);
    Ok((train, test))
}

pub fn split_dataset<R: Clone>(rows: &[R], test_fraction: f64, seed: u64) -> Result<(Vec<R>, Vec<R>), ModelError> {
    let (train, test) = split_indices(rows.len(), test_fraction, seed)?;
    Ok((
        train.into_iter().map(|i| rows[i].clone()).collect(),
        test.into_iter().map(|i| rows[i].clone()).collect(),
    ))
}
