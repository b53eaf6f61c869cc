//! Double-precision mirror of the exact harmonic-structure build.
//!
//! Same elimination problem as `harmonic`, solved with a dense partially
//! pivoted LU factorization instead of fraction-free integer arithmetic. The
//! point is reach: exact elimination on a level-l gasket grows its integers
//! like the determinant of the interior block, while the float path stays
//! O(n^3) flops and handles levels far past where rationals are practical.
//! The price is that proportionality of the traced operator can only be
//! checked to roundoff; the observed residual is reported on the result so
//! callers can judge it.

use crate::error::{Result, SgError};
use crate::exact::{ratio_to_f64, RatMat3};
use crate::geometry::SelfSimilarStructure;
use crate::harmonic::{operator_gamma, validate_boundary_operator};
use crate::mat3::{cross3, det3, dot3, norm3, Mat3, Vec3};

/// Float harmonic structure; field meanings match the exact variant.
#[derive(Debug, Clone)]
pub struct FloatHarmonic {
    pub level: u32,
    pub d: Mat3,
    pub r: f64,
    pub gamma: f64,
    pub a_maps: Vec<Mat3>,
    pub u: [Vec3; 3],
    pub v: [Vec3; 3],
    pub determinants: Vec<f64>,
    /// Largest entrywise deviation of the traced operator from r * d.
    pub schur_residual: f64,
}

pub fn build_float_harmonic(s: &SelfSimilarStructure, d_exact: &RatMat3) -> Result<FloatHarmonic> {
    validate_boundary_operator(d_exact)?;
    let gamma = ratio_to_f64(&operator_gamma(d_exact)?);
    let mut d = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            d[i][j] = ratio_to_f64(&d_exact[i][j]);
        }
    }

    let n = s.num_points();
    let n_int = n - 3;
    let mut gii = vec![0.0f64; n_int * n_int];
    let mut gib = vec![[0.0f64; 3]; n_int];
    let mut gbi = vec![[0.0f64; 3]; n_int]; // gbi[k][i] = G[boundary i][interior k]
    let mut gbb = [[0.0f64; 3]; 3];
    for corners in &s.corner_map {
        for p in 0..3 {
            for q in 0..3 {
                let (i, j) = (corners[p], corners[q]);
                match (i < 3, j < 3) {
                    (true, true) => gbb[i][j] += d[p][q],
                    (true, false) => gbi[j - 3][i] += d[p][q],
                    (false, true) => gib[i - 3][j] += d[p][q],
                    (false, false) => gii[(i - 3) * n_int + (j - 3)] += d[p][q],
                }
            }
        }
    }

    // Harmonic extension columns: G_II X = -G_IB.
    let mut x: Vec<[f64; 3]> = gib.iter().map(|r| [-r[0], -r[1], -r[2]]).collect();
    lu_solve(&mut gii, n_int, &mut x)?;

    // Traced operator on the boundary: G_BB + G_BI X.
    let mut schur = gbb;
    for k in 0..n_int {
        for i in 0..3 {
            if gbi[k][i] != 0.0 {
                for j in 0..3 {
                    schur[i][j] += gbi[k][i] * x[k][j];
                }
            }
        }
    }

    let (mut i0, mut j0) = (0, 1);
    for i in 0..3 {
        for j in 0..3 {
            if d[i][j].abs() > d[i0][j0].abs() {
                (i0, j0) = (i, j);
            }
        }
    }
    let r = schur[i0][j0] / d[i0][j0];
    let mut residual = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            residual = residual.max((schur[i][j] - r * d[i][j]).abs());
            scale = scale.max(schur[i][j].abs());
        }
    }
    if !(r > 0.0) || residual > 1e-6 * scale.max(1e-300) {
        return Err(SgError::NoUniformStructure(format!(
            "traced operator deviates from proportionality by {residual:.3e}"
        )));
    }

    let mut a_maps = Vec::with_capacity(s.num_symbols());
    for corners in &s.corner_map {
        let mut a = [[0.0f64; 3]; 3];
        for p in 0..3 {
            let pt = corners[p];
            if pt < 3 {
                a[p][pt] = 1.0;
            } else {
                a[p] = x[pt - 3];
            }
        }
        a_maps.push(a);
    }

    let mut u = [[0.0f64; 3]; 3];
    for j in 0..3 {
        for i in 0..3 {
            u[j][i] = d[i][j];
        }
    }
    let mut v = [[0.0f64; 3]; 3];
    for j in 0..3 {
        v[j] = eigenvector_for_r(&a_maps[j], r, &u[j])?;
    }
    let determinants = a_maps.iter().map(det3).collect();

    Ok(FloatHarmonic {
        level: s.level,
        d,
        r,
        gamma,
        a_maps,
        u,
        v,
        determinants,
        schur_residual: residual,
    })
}

/// Kernel direction of (A - r I) via the largest cross product of two rows,
/// normalized against the left eigenvector.
fn eigenvector_for_r(a: &Mat3, r: f64, u: &Vec3) -> Result<Vec3> {
    let mut m = *a;
    for i in 0..3 {
        m[i][i] -= r;
    }
    let mut best = [0.0; 3];
    let mut best_norm = 0.0;
    for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let c = cross3(&m[i], &m[j]);
        let nc = norm3(&c);
        if nc > best_norm {
            best_norm = nc;
            best = c;
        }
    }
    if best_norm == 0.0 {
        return Err(SgError::InvalidArgument(
            "corner map eigenvalue r is not simple".into(),
        ));
    }
    let t = dot3(u, &best);
    if t == 0.0 {
        return Err(SgError::InvalidArgument(
            "left and right eigenvectors for r are orthogonal".into(),
        ));
    }
    Ok([best[0] / t, best[1] / t, best[2] / t])
}

/// In-place dense LU with partial pivoting; solves for all right-hand sides
/// at once and overwrites `rhs` with the solutions.
fn lu_solve(a: &mut [f64], n: usize, rhs: &mut [[f64; 3]]) -> Result<()> {
    assert_eq!(a.len(), n * n);
    assert_eq!(rhs.len(), n);
    let mut pivot_row_buf = vec![0.0f64; n];
    for k in 0..n {
        let mut pmax = a[k * n + k].abs();
        let mut prow = k;
        for i in (k + 1)..n {
            let v = a[i * n + k].abs();
            if v > pmax {
                pmax = v;
                prow = i;
            }
        }
        if pmax == 0.0 {
            return Err(SgError::InvalidArgument(
                "singular interior block in float elimination".into(),
            ));
        }
        if prow != k {
            for j in k..n {
                a.swap(k * n + j, prow * n + j);
            }
            rhs.swap(k, prow);
        }
        let pivot = a[k * n + k];
        pivot_row_buf[(k + 1)..n].copy_from_slice(&a[(k * n + k + 1)..(k * n + n)]);
        let rk = rhs[k];
        for i in (k + 1)..n {
            let f = a[i * n + k] / pivot;
            if f != 0.0 {
                a[i * n + k] = 0.0;
                let row = &mut a[(i * n + k + 1)..(i * n + n)];
                for (x, &y) in row.iter_mut().zip(&pivot_row_buf[(k + 1)..n]) {
                    *x -= f * y;
                }
                let ri = &mut rhs[i];
                ri[0] -= f * rk[0];
                ri[1] -= f * rk[1];
                ri[2] -= f * rk[2];
            } else {
                a[i * n + k] = 0.0;
            }
        }
    }
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..n {
            let aij = a[i * n + j];
            if aij != 0.0 {
                let xj = rhs[j];
                s[0] -= aij * xj[0];
                s[1] -= aij * xj[1];
                s[2] -= aij * xj[2];
            }
        }
        let p = a[i * n + i];
        rhs[i] = [s[0] / p, s[1] / p, s[2] / p];
    }
    Ok(())
}
