use crate::error::{Error, Result};

/// Maps the 1-based entry `(i, j)` of an `s x s` traffic matrix to its
/// 1-based OD index under column stacking: `n = (j - 1) s + i`.
pub fn vec_index(i: usize, j: usize, s: usize) -> Result<usize> {
    if i == 0 || j == 0 || i > s || j > s {
        return Err(Error::Range(format!(
            "entry ({i}, {j}) outside 1..={s}"
        )));
    }
    Ok((j - 1) * s + i)
}

/// Inverse of [`vec_index`].
pub fn unvec_index(n: usize, s: usize) -> Result<(usize, usize)> {
    if n == 0 || n > s * s {
        return Err(Error::Range(format!("OD index {n} outside 1..={}", s * s)));
    }
    let z = n - 1;
    Ok((z % s + 1, z / s + 1))
}
