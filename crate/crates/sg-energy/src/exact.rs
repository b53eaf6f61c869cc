//! Arbitrary-precision rational building blocks for the structure stage.
//!
//! Everything ahead of the energy model is done in exact arithmetic: the
//! level-one form is assembled over the integers, the interior is eliminated
//! fraction-free (Bareiss), and only the final extension data is converted to
//! f64 once. Intermediate Bareiss entries are bordered minors of the original
//! integer matrix, so every division below is exact.

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Result, SgError};

pub type Rat = num_rational::BigRational;
pub type RatVec3 = [Rat; 3];
pub type RatMat3 = [[Rat; 3]; 3];

pub fn rat_i(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn vec3_zero() -> RatVec3 {
    [Rat::zero(), Rat::zero(), Rat::zero()]
}

pub fn mat3_zero() -> RatMat3 {
    [vec3_zero(), vec3_zero(), vec3_zero()]
}

pub fn mat3_identity() -> RatMat3 {
    let mut m = mat3_zero();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = Rat::one();
    }
    m
}

pub fn mat3_from_i64(e: [[i64; 3]; 3]) -> RatMat3 {
    e.map(|row| row.map(rat_i))
}

pub fn mat3_mul(a: &RatMat3, b: &RatMat3) -> RatMat3 {
    let mut out = mat3_zero();
    for i in 0..3 {
        for j in 0..3 {
            let mut s = Rat::zero();
            for (k, bk) in b.iter().enumerate() {
                s += &a[i][k] * &bk[j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn mat3_matvec(a: &RatMat3, x: &RatVec3) -> RatVec3 {
    let mut out = vec3_zero();
    for (i, row) in a.iter().enumerate() {
        let mut s = Rat::zero();
        for (k, xk) in x.iter().enumerate() {
            s += &row[k] * xk;
        }
        out[i] = s;
    }
    out
}

/// Transpose-apply: returns A^T x.
pub fn mat3_tmatvec(a: &RatMat3, x: &RatVec3) -> RatVec3 {
    let mut out = vec3_zero();
    for (j, o) in out.iter_mut().enumerate() {
        let mut s = Rat::zero();
        for (i, xi) in x.iter().enumerate() {
            s += &a[i][j] * xi;
        }
        *o = s;
    }
    out
}

pub fn mat3_scale(a: &RatMat3, c: &Rat) -> RatMat3 {
    let mut out = a.clone();
    for row in out.iter_mut() {
        for e in row.iter_mut() {
            *e *= c;
        }
    }
    out
}

pub fn mat3_transpose(a: &RatMat3) -> RatMat3 {
    let mut out = mat3_zero();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i].clone();
        }
    }
    out
}

pub fn mat3_det(a: &RatMat3) -> Rat {
    &a[0][0] * (&a[1][1] * &a[2][2] - &a[1][2] * &a[2][1])
        - &a[0][1] * (&a[1][0] * &a[2][2] - &a[1][2] * &a[2][0])
        + &a[0][2] * (&a[1][0] * &a[2][1] - &a[1][1] * &a[2][0])
}

pub fn mat3_is_symmetric(a: &RatMat3) -> bool {
    a[0][1] == a[1][0] && a[0][2] == a[2][0] && a[1][2] == a[2][1]
}

pub fn dot3(x: &RatVec3, y: &RatVec3) -> Rat {
    let mut s = Rat::zero();
    for (a, b) in x.iter().zip(y) {
        s += a * b;
    }
    s
}

pub fn cross3(x: &RatVec3, y: &RatVec3) -> RatVec3 {
    [
        &x[1] * &y[2] - &x[2] * &y[1],
        &x[2] * &y[0] - &x[0] * &y[2],
        &x[0] * &y[1] - &x[1] * &y[0],
    ]
}

/// Rank of a 3x3 rational matrix via minors.
pub fn mat3_rank(a: &RatMat3) -> usize {
    if !mat3_det(a).is_zero() {
        return 3;
    }
    for i in 0..3 {
        for j in 0..3 {
            let (i2, j2) = ((i + 1) % 3, (j + 1) % 3);
            let (i3, j3) = ((i + 2) % 3, (j + 2) % 3);
            let minor = &a[i2][j2] * &a[i3][j3] - &a[i2][j3] * &a[i3][j2];
            if !minor.is_zero() {
                return 2;
            }
        }
    }
    if a.iter().flatten().any(|e| !e.is_zero()) {
        1
    } else {
        0
    }
}

/// Correctly-scaled f64 conversion that survives numerators/denominators far
/// beyond f64 range (num-rational's own to_f64 degrades to inf/inf there).
pub fn ratio_to_f64(r: &Rat) -> f64 {
    let num = r.numer();
    let den = r.denom();
    if num.is_zero() {
        return 0.0;
    }
    let nb = num.bits() as i64;
    let db = den.bits() as i64;
    let sn = (nb - 120).max(0);
    let sd = (db - 120).max(0);
    let n2: BigInt = num >> (sn as usize);
    let d2: BigInt = den >> (sd as usize);
    let base = n2.to_f64().unwrap_or(f64::NAN) / d2.to_f64().unwrap_or(f64::NAN);
    if sn == sd {
        base
    } else {
        base * 2f64.powi((sn - sd) as i32)
    }
}

/// Formats a rational as "num/den" ("num" when integral).
pub fn ratio_string(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Fraction-free (Bareiss) forward elimination of the first `npiv` columns of
/// an integer matrix, pivoting only among the first `npiv` rows.
///
/// On return, rows 0..npiv hold an upper-triangular integer system and every
/// remaining row has been reduced against all pivots; entry (i, j) with
/// i, j >= npiv equals det(M[0..npiv, 0..npiv]) times the Schur complement of
/// the pivot block, and the last pivot equals that determinant (up to the
/// sign of the row permutation, which cancels in the quotient).
pub fn bareiss_forward(m: &mut [Vec<BigInt>], npiv: usize) -> Result<()> {
    let nrows = m.len();
    let ncols = if nrows == 0 { 0 } else { m[0].len() };
    assert!(npiv <= nrows && npiv <= ncols);
    let mut prev = BigInt::one();
    for k in 0..npiv {
        if m[k][k].is_zero() {
            let swap = (k + 1..npiv).find(|&i| !m[i][k].is_zero());
            match swap {
                Some(i) => m.swap(k, i),
                None => {
                    return Err(SgError::InvalidArgument(
                        "singular pivot block in fraction-free elimination".into(),
                    ))
                }
            }
        }
        let (top, rest) = m.split_at_mut(k + 1);
        let rowk = &top[k];
        let pk = rowk[k].clone();
        for row in rest.iter_mut() {
            let mik = std::mem::replace(&mut row[k], BigInt::zero());
            if mik.is_zero() {
                // Update degenerates to scaling by pk/prev; division stays exact.
                for j in (k + 1)..ncols {
                    if !row[j].is_zero() {
                        let t = &pk * &row[j];
                        debug_assert!((&t % &prev).is_zero());
                        row[j] = t / &prev;
                    }
                }
            } else {
                for j in (k + 1)..ncols {
                    let t = &pk * &row[j] - &mik * &rowk[j];
                    debug_assert!((&t % &prev).is_zero());
                    row[j] = t / &prev;
                }
            }
        }
        prev = pk;
    }
    Ok(())
}

/// Back-substitutes one right-hand-side column of a Bareiss-eliminated system.
///
/// Solves U x = sign * rhs where U is the npiv x npiv upper triangle of `m`
/// and the right-hand side is column `col`.
pub fn back_substitute(m: &[Vec<BigInt>], npiv: usize, col: usize, sign: i64) -> Vec<Rat> {
    let mut x = vec![Rat::zero(); npiv];
    for i in (0..npiv).rev() {
        let mut s = Rat::from_integer(&m[i][col] * BigInt::from(sign));
        for (j, xj) in x.iter().enumerate().skip(i + 1) {
            s -= Rat::from_integer(m[i][j].clone()) * xj;
        }
        x[i] = s / Rat::from_integer(m[i][i].clone());
    }
    x
}
