//! Exact-arithmetic construction of the harmonic structure on a level-l
//! gasket.
//!
//! A boundary energy operator D on the three boundary vertices induces, via
//! the level-one graph energy, a traced operator on the boundary: assemble
//! the graph Laplacian G over all lattice points, eliminate the interior, and
//! read off the Schur complement. When that complement is a scalar multiple
//! r*D of the original operator, the pair (D, r) is a self-similar energy and
//! the elimination also yields the harmonic extension maps A_i, one per cell,
//! expressing the boundary values of the extension restricted to each cell.
//!
//! Everything here is computed over arbitrary-precision rationals with a
//! fraction-free elimination, so the renormalization factor, the extension
//! maps and their determinants are exact. The float mirror of this module
//! lives in `float_backend` and covers levels where exact elimination gets
//! too expensive.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::error::{Result, SgError};
use crate::exact::{
    back_substitute, bareiss_forward, cross3, dot3, mat3_det, mat3_from_i64, mat3_is_symmetric,
    mat3_mul, mat3_rank, mat3_scale, mat3_transpose, mat3_zero, vec3_zero, Rat, RatMat3, RatVec3,
};
use crate::geometry::SelfSimilarStructure;

/// The symmetric boundary operator with unit conductance on each boundary
/// pair. Its energy form is E(x) = sum over pairs (x_i - x_j)^2.
pub fn standard_d() -> RatMat3 {
    mat3_from_i64([[-2, 1, 1], [1, -2, 1], [1, 1, -2]])
}

/// Checks that `d` is an admissible boundary energy operator: symmetric,
/// vanishing on constants, nonnegative off the diagonal (so the induced graph
/// has genuine conductances) and of rank exactly two (irreducible).
pub fn validate_boundary_operator(d: &RatMat3) -> Result<()> {
    if !mat3_is_symmetric(d) {
        return Err(SgError::InvalidBoundaryOperator(
            "operator must be symmetric".into(),
        ));
    }
    for i in 0..3 {
        let s = &d[i][0] + &d[i][1] + &d[i][2];
        if !s.is_zero() {
            return Err(SgError::InvalidBoundaryOperator(format!(
                "row {} does not sum to zero (constants must have zero energy)",
                i + 1
            )));
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            if i != j && d[i][j] < Rat::zero() {
                return Err(SgError::InvalidBoundaryOperator(format!(
                    "negative conductance at ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    let rank = mat3_rank(d);
    if rank != 2 {
        return Err(SgError::InvalidBoundaryOperator(format!(
            "rank is {rank}, need exactly 2"
        )));
    }
    Ok(())
}

/// Clears denominators: returns (c*d as integers, c) with c the lcm of all
/// entry denominators.
fn integer_scaled(d: &RatMat3) -> ([[BigInt; 3]; 3], BigInt) {
    let mut c = BigInt::one();
    for row in d {
        for e in row {
            c = c.lcm(e.denom());
        }
    }
    let mut out: [[BigInt; 3]; 3] = Default::default();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = d[i][j].numer() * (&c / d[i][j].denom());
        }
    }
    (out, c)
}

/// The graph energy operator on all level-one lattice points: one copy of `d`
/// per cell, indexed by the structure's point order (boundary first).
pub fn level_one_laplacian(s: &SelfSimilarStructure, d: &RatMat3) -> Result<Vec<Vec<Rat>>> {
    validate_boundary_operator(d)?;
    let n = s.num_points();
    let mut g = vec![vec![Rat::zero(); n]; n];
    for corners in &s.corner_map {
        for p in 0..3 {
            for q in 0..3 {
                let gij = &mut g[corners[p]][corners[q]];
                *gij += &d[p][q];
            }
        }
    }
    Ok(g)
}

/// Energy of a function given as values over all lattice points: -x^T G x.
pub fn graph_energy(g: &[Vec<Rat>], x: &[Rat]) -> Rat {
    let mut s = Rat::zero();
    for (i, row) in g.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            s += &x[i] * e * &x[j];
        }
    }
    -s
}

/// Eliminates the interior points of the level-one graph in one fraction-free
/// pass, returning the boundary Schur complement together with the harmonic
/// extension maps (one 3x3 map per cell, rows indexed by cell corner).
fn schur_and_extensions(s: &SelfSimilarStructure, d: &RatMat3) -> Result<(RatMat3, Vec<RatMat3>)> {
    validate_boundary_operator(d)?;
    let n = s.num_points();
    let n_int = n - 3;
    let (cd, c) = integer_scaled(d);

    // Interior points first so a single forward elimination exposes both the
    // boundary Schur complement and the solved extension columns.
    let perm = |i: usize| if i < 3 { n_int + i } else { i - 3 };
    let mut m = vec![vec![BigInt::zero(); n]; n];
    for corners in &s.corner_map {
        for p in 0..3 {
            for q in 0..3 {
                m[perm(corners[p])][perm(corners[q])] += &cd[p][q];
            }
        }
    }
    bareiss_forward(&mut m, n_int)?;

    // Bottom-right block = (last pivot) * Schur complement of the interior.
    let piv = Rat::from_integer(m[n_int - 1][n_int - 1].clone());
    let scale = Rat::from_integer(c);
    let mut schur = mat3_zero();
    for i in 0..3 {
        for j in 0..3 {
            schur[i][j] = Rat::from_integer(m[n_int + i][n_int + j].clone()) / &piv / &scale;
        }
    }

    // Harmonic extension for boundary data e_b solves G_II h = -G_IB e_b.
    let mut ext = vec![vec3_zero(); n_int];
    for b in 0..3 {
        let col = back_substitute(&m, n_int, n_int + b, -1);
        for (i, v) in col.into_iter().enumerate() {
            ext[i][b] = v;
        }
    }

    let mut a_maps = Vec::with_capacity(s.num_symbols());
    for corners in &s.corner_map {
        let mut a = mat3_zero();
        for p in 0..3 {
            let pt = corners[p];
            if pt < 3 {
                a[p][pt] = Rat::one();
            } else {
                a[p] = ext[pt - 3].clone();
            }
        }
        a_maps.push(a);
    }
    Ok((schur, a_maps))
}

/// Solves `schur == r * d` for r, entrywise and exactly.
fn proportionality(schur: &RatMat3, d: &RatMat3) -> Result<Rat> {
    let (i0, j0) = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .find(|&(i, j)| !d[i][j].is_zero())
        .expect("rank-2 operator has a nonzero entry");
    let r = &schur[i0][j0] / &d[i0][j0];
    for i in 0..3 {
        for j in 0..3 {
            if schur[i][j] != &r * &d[i][j] {
                return Err(SgError::NoUniformStructure(format!(
                    "traced operator is not proportional to the input: entry ({}, {}) \
                     deviates from ratio {}",
                    i + 1,
                    j + 1,
                    r
                )));
            }
        }
    }
    if r <= Rat::zero() {
        return Err(SgError::NoUniformStructure(
            "renormalization factor is not positive".into(),
        ));
    }
    Ok(r)
}

/// A complete exact harmonic structure: the boundary operator, its
/// renormalization factor, all cell extension maps, and the spectral data of
/// the three corner maps used by the coefficient analysis.
#[derive(Debug, Clone)]
pub struct HarmonicStructure {
    pub level: u32,
    pub d: RatMat3,
    /// Energy renormalization factor: traced operator equals r * d.
    pub r: Rat,
    /// d^2 = -gamma * d; gamma is the modulus of the nonzero eigenvalue pair.
    pub gamma: Rat,
    /// Harmonic extension maps, one per cell in symbol order.
    pub a_maps: Vec<RatMat3>,
    /// u[j] = column j of d: left eigenvector of the corner map A_j for r.
    pub u: [RatVec3; 3],
    /// Right eigenvector of A_j for r, normalized by (u_j, v_j) = 1.
    pub v: [RatVec3; 3],
    /// det A_i per cell, in symbol order.
    pub determinants: Vec<Rat>,
}

/// The common modulus gamma of the two nonzero eigenvalues: d^2 = -gamma * d.
/// The coefficient analysis needs those eigenvalues equal; errors otherwise.
pub(crate) fn operator_gamma(d: &RatMat3) -> Result<Rat> {
    let d2 = mat3_mul(d, d);
    let (i0, j0) = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .find(|&(i, j)| !d[i][j].is_zero())
        .expect("rank-2 operator has a nonzero entry");
    let gamma = -(&d2[i0][j0] / &d[i0][j0]);
    for i in 0..3 {
        for j in 0..3 {
            if d2[i][j] != -(&gamma * &d[i][j]) {
                return Err(SgError::InvalidBoundaryOperator(
                    "the two nonzero eigenvalues of the operator differ; \
                     the coefficient analysis needs them equal"
                        .into(),
                ));
            }
        }
    }
    Ok(gamma)
}

pub fn build_harmonic_structure(
    s: &SelfSimilarStructure,
    d: &RatMat3,
) -> Result<HarmonicStructure> {
    let (schur, a_maps) = schur_and_extensions(s, d)?;
    let r = proportionality(&schur, d)?;
    let gamma = operator_gamma(d)?;

    let mut u: [RatVec3; 3] = [vec3_zero(), vec3_zero(), vec3_zero()];
    for j in 0..3 {
        for i in 0..3 {
            u[j][i] = d[i][j].clone();
        }
    }

    let mut v: [RatVec3; 3] = [vec3_zero(), vec3_zero(), vec3_zero()];
    for j in 0..3 {
        v[j] = eigenvector_for_r(&a_maps[j], &r, &u[j])?;
    }

    let determinants = a_maps.iter().map(mat3_det).collect();
    Ok(HarmonicStructure {
        level: s.level,
        d: d.clone(),
        r,
        gamma,
        a_maps,
        u,
        v,
        determinants,
    })
}

/// Kernel vector of (A - r I), normalized so (u, v) = 1 and checked to be
/// componentwise nonnegative.
fn eigenvector_for_r(a: &RatMat3, r: &Rat, u: &RatVec3) -> Result<RatVec3> {
    let mut m = a.clone();
    for i in 0..3 {
        m[i][i] -= r;
    }
    let pairs = [(0usize, 1usize), (0, 2), (1, 2)];
    let mut v = None;
    for (i, j) in pairs {
        let c = cross3(&m[i], &m[j]);
        if c.iter().any(|e| !e.is_zero()) {
            v = Some(c);
            break;
        }
    }
    let v =
        v.ok_or_else(|| SgError::InvalidArgument("corner map eigenvalue r is not simple".into()))?;
    let t = dot3(u, &v);
    if t.is_zero() {
        return Err(SgError::InvalidArgument(
            "left and right eigenvectors for r are orthogonal".into(),
        ));
    }
    let v: RatVec3 = [&v[0] / &t, &v[1] / &t, &v[2] / &t];
    if v.iter().any(|e| e < &Rat::zero()) {
        return Err(SgError::InvalidArgument(
            "right eigenvector for r has a negative component".into(),
        ));
    }
    Ok(v)
}

/// The factor r with traced operator = r * d, without keeping the maps.
pub fn renormalization_factor(s: &SelfSimilarStructure, d: &RatMat3) -> Result<Rat> {
    let (schur, _) = schur_and_extensions(s, d)?;
    proportionality(&schur, d)
}

/// Harmonic extension maps only.
pub fn extension_matrices(s: &SelfSimilarStructure, d: &RatMat3) -> Result<Vec<RatMat3>> {
    Ok(schur_and_extensions(s, d)?.1)
}

impl HarmonicStructure {
    /// Exact self-similarity of the energy: sum_i A_i^T d A_i == r * d.
    pub fn harmonic_identity_holds(&self) -> bool {
        let mut acc = mat3_zero();
        for a in &self.a_maps {
            let t = mat3_mul(&mat3_transpose(a), &mat3_mul(&self.d, a));
            for i in 0..3 {
                for j in 0..3 {
                    acc[i][j] += &t[i][j];
                }
            }
        }
        acc == mat3_scale(&self.d, &self.r)
    }
}

/// Exact invertibility certificate over all extension maps of one level.
#[derive(Debug, Clone)]
pub struct InvertibilityReport {
    pub level: u32,
    pub determinants: Vec<Rat>,
    pub min_abs_det: Rat,
    pub all_invertible: bool,
}

pub fn check_invertibility(hs: &HarmonicStructure) -> InvertibilityReport {
    let mut min_abs: Option<Rat> = None;
    let mut all = true;
    for det in &hs.determinants {
        let a = det.abs();
        if a.is_zero() {
            all = false;
        }
        min_abs = Some(match min_abs {
            None => a,
            Some(m) => {
                if a < m {
                    a
                } else {
                    m
                }
            }
        });
    }
    InvertibilityReport {
        level: hs.level,
        determinants: hs.determinants.clone(),
        min_abs_det: min_abs.unwrap_or_else(Rat::zero),
        all_invertible: all,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{rat, rat_i};
    use crate::geometry::SelfSimilarStructure;

    fn sg(level: u32) -> SelfSimilarStructure {
        SelfSimilarStructure::build(level).unwrap()
    }

    #[test]
    fn standard_operator_is_admissible() {
        validate_boundary_operator(&standard_d()).unwrap();
    }

    #[test]
    fn validation_rejects_bad_operators() {
        let asym = mat3_from_i64([[-2, 2, 0], [1, -2, 1], [1, 1, -2]]);
        assert!(matches!(
            validate_boundary_operator(&asym),
            Err(SgError::InvalidBoundaryOperator(_))
        ));
        let bad_rows = mat3_from_i64([[-2, 1, 1], [1, -1, 1], [1, 1, -2]]);
        assert!(validate_boundary_operator(&bad_rows).is_err());
        let neg_cond = mat3_from_i64([[0, 1, -1], [1, -2, 1], [-1, 1, 0]]);
        assert!(validate_boundary_operator(&neg_cond).is_err());
        let zero = mat3_zero();
        assert!(validate_boundary_operator(&zero).is_err());
    }

    #[test]
    fn level_two_laplacian_matches_hand_assembly() {
        let s = sg(2);
        let g = level_one_laplacian(&s, &standard_d()).unwrap();
        let expected: [[i64; 6]; 6] = [
            [-2, 0, 0, 1, 1, 0],
            [0, -2, 0, 1, 0, 1],
            [0, 0, -2, 0, 1, 1],
            [1, 1, 0, -4, 1, 1],
            [1, 0, 1, 1, -4, 1],
            [0, 1, 1, 1, 1, -4],
        ];
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(g[i][j], rat_i(expected[i][j]), "entry ({i}, {j})");
            }
        }
    }

    #[test]
    fn corner_indicator_has_energy_two_at_level_two() {
        let s = sg(2);
        let g = level_one_laplacian(&s, &standard_d()).unwrap();
        let mut x = vec![Rat::zero(); s.num_points()];
        x[0] = Rat::one();
        assert_eq!(graph_energy(&g, &x), rat_i(2));
    }

    #[test]
    fn renormalization_factor_level_two_is_three_fifths() {
        assert_eq!(
            renormalization_factor(&sg(2), &standard_d()).unwrap(),
            rat(3, 5)
        );
    }

    #[test]
    fn renormalization_factor_level_three_is_seven_fifteenths() {
        assert_eq!(
            renormalization_factor(&sg(3), &standard_d()).unwrap(),
            rat(7, 15)
        );
    }

    #[test]
    fn level_two_extension_maps_are_the_classic_fifth_rules() {
        let maps = extension_matrices(&sg(2), &standard_d()).unwrap();
        let fifth = |e: [[i64; 3]; 3]| mat3_scale(&mat3_from_i64(e), &rat(1, 5));
        assert_eq!(maps[0], fifth([[5, 0, 0], [2, 2, 1], [2, 1, 2]]));
        assert_eq!(maps[1], fifth([[2, 2, 1], [0, 5, 0], [1, 2, 2]]));
        assert_eq!(maps[2], fifth([[2, 1, 2], [1, 2, 2], [0, 0, 5]]));
    }

    #[test]
    fn extension_rows_sum_to_one_and_fix_boundary() {
        for level in 2..=6 {
            let maps = extension_matrices(&sg(level), &standard_d()).unwrap();
            for (ci, a) in maps.iter().enumerate() {
                for p in 0..3 {
                    let s = &a[p][0] + &a[p][1] + &a[p][2];
                    assert_eq!(s, Rat::one(), "level {level} cell {ci} row {p}");
                }
            }
            // Corner cell i fixes boundary vertex i.
            for i in 0..3 {
                let mut e = [Rat::zero(), Rat::zero(), Rat::zero()];
                e[i] = Rat::one();
                assert_eq!(maps[i][i], e);
            }
        }
    }

    #[test]
    fn harmonic_identity_is_exact() {
        for level in 2..=5 {
            let hs = build_harmonic_structure(&sg(level), &standard_d()).unwrap();
            assert!(hs.harmonic_identity_holds(), "level {level}");
        }
    }

    #[test]
    fn corner_spectral_data_at_level_two() {
        let hs = build_harmonic_structure(&sg(2), &standard_d()).unwrap();
        assert_eq!(hs.gamma, rat_i(3));
        assert_eq!(hs.u[0], [rat_i(-2), rat_i(1), rat_i(1)]);
        assert_eq!(hs.v[0], [rat_i(0), rat(1, 2), rat(1, 2)]);
        // Eigen relations for every corner.
        for j in 0..3 {
            let au = crate::exact::mat3_tmatvec(&hs.a_maps[j], &hs.u[j]);
            for i in 0..3 {
                assert_eq!(au[i], &hs.r * &hs.u[j][i], "left eigenvector, corner {j}");
            }
            let av = crate::exact::mat3_matvec(&hs.a_maps[j], &hs.v[j]);
            for i in 0..3 {
                assert_eq!(av[i], &hs.r * &hs.v[j][i], "right eigenvector, corner {j}");
            }
            assert_eq!(dot3(&hs.u[j], &hs.v[j]), Rat::one());
        }
    }

    #[test]
    fn level_two_determinants_are_three_twentyfifths() {
        let hs = build_harmonic_structure(&sg(2), &standard_d()).unwrap();
        assert_eq!(hs.determinants, vec![rat(3, 25); 3]);
        let rep = check_invertibility(&hs);
        assert!(rep.all_invertible);
        assert_eq!(rep.min_abs_det, rat(3, 25));
    }

    #[test]
    fn asymmetric_conductances_admit_no_uniform_structure() {
        // Unit conductances on two of the three boundary pairs only. The
        // traced operator gains a strictly positive third conductance, so no
        // scalar multiple matches.
        let d = mat3_from_i64([[-1, 1, 0], [1, -2, 1], [0, 1, -1]]);
        validate_boundary_operator(&d).unwrap();
        match renormalization_factor(&sg(2), &d) {
            Err(SgError::NoUniformStructure(_)) => {}
            other => panic!("expected no uniform structure, got {other:?}"),
        }
    }

    #[test]
    fn mid_gasket_factor_is_consistent_between_wrappers_and_builder() {
        let s = sg(4);
        let d = standard_d();
        let hs = build_harmonic_structure(&s, &d).unwrap();
        assert_eq!(hs.r, renormalization_factor(&s, &d).unwrap());
        assert_eq!(hs.a_maps, extension_matrices(&s, &d).unwrap());
        assert_eq!(hs.a_maps.len(), s.num_symbols());
    }
}
