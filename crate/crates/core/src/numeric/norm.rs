use crate::error::{Error, Result};

/// Norms at or below this are treated as zero.
pub const NORM_EPS: f64 = 1e-12;

pub fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `v` to unit Euclidean norm in place. Vectors with norm ≤ `NORM_EPS`
/// are left untouched.
pub fn l2_normalize_in_place(v: &mut [f64]) {
    let n = l2_norm(v);
    if n > NORM_EPS {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    check_finite(v)?;
    let mut out = v.to_vec();
    l2_normalize_in_place(&mut out);
    Ok(out)
}

/// Signed square root, applied elementwise.
pub fn signed_sqrt_in_place(v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = x.signum() * x.abs().sqrt();
    }
}
