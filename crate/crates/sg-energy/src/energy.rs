//! Energy model over cell words: matrix products, cell energies, and the
//! normalized coefficient vectors that drive the distribution experiments.
//!
//! A word w = w_1 w_2 ... w_m names a depth-m cell K_w of the gasket; the
//! composed extension map is A_w = A_{w_m} * ... * A_{w_1} (note the
//! reversal: deeper symbols act later). Everything observable about K_w used
//! here factors through that 3x3 product:
//!
//!  * the energy of a harmonic function restricted to K_w,
//!  * the energy-measure coefficients a_j(w) and their normalization b(w),
//!  * the measure nu(K_w) itself,
//!  * the restriction of A_w to the mean-zero plane (a 2x2 matrix whose
//!    determinant/norm ratio measures how anisotropic the map has become).
//!
//! The model is backend-agnostic: it is built from either the exact or the
//! float harmonic structure and then works in f64 throughout. When built
//! exactly, the rational structure is retained for callers that want to
//! print or re-verify it.

use std::fmt;

use crate::error::{Result, SgError};
use crate::exact::{ratio_to_f64, RatMat3};
use crate::float_backend::{build_float_harmonic, FloatHarmonic};
use crate::geometry::SelfSimilarStructure;
use crate::harmonic::{build_harmonic_structure, standard_d, HarmonicStructure};
use crate::mat3::{
    det2, dot3, matmul2, matmul3, matvec3, op_norm2, tmatvec3, Mat2, Mat3, Vec3, MAT3_IDENTITY,
};

/// Largest level the automatic backend choice will build exactly.
pub const EXACT_LEVEL_CAP: u32 = 20;
/// Largest level accepted when the exact backend is requested explicitly.
pub const EXACT_LEVEL_HARD_CAP: u32 = 50;
/// Largest level the float backend accepts (dense elimination memory bound).
pub const FLOAT_LEVEL_CAP: u32 = 100;

/// A finite cell address: 0-based symbol indices into the cell list.
///
/// Text form is 1-based, dash-separated ("1-3-2"); commas are accepted on
/// input. The empty word prints as "e".
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Word(pub Vec<u16>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn parse(text: &str) -> Result<Word> {
        let t = text.trim();
        if t.is_empty() || t == "e" {
            return Ok(Word::empty());
        }
        let mut symbols = Vec::new();
        for part in t.split([',', '-']) {
            let p = part.trim();
            let n: u32 = p.parse().map_err(|_| {
                SgError::InvalidArgument(format!("bad word component {p:?} in {text:?}"))
            })?;
            if n == 0 || n > u16::MAX as u32 {
                return Err(SgError::InvalidArgument(format!(
                    "word components are 1-based cell numbers; got {n}"
                )));
            }
            symbols.push((n - 1) as u16);
        }
        Ok(Word(symbols))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[u16] {
        &self.0
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "e");
        }
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "-")?;
            }
            write!(f, "{}", s + 1)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Exact,
    Float,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Exact => "exact",
            BackendKind::Float => "float",
        })
    }
}

/// Normalized coefficient vector: positive entries summing to one, lying in
/// the open disk sum b_j^2 < 1/2 that all words map into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BVector {
    pub b: [f64; 3],
}

impl BVector {
    pub fn new(b: [f64; 3]) -> Result<BVector> {
        let sum = b[0] + b[1] + b[2];
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SgError::InvalidArgument(format!(
                "coefficient vector sums to {sum}, expected 1"
            )));
        }
        if b.iter().any(|&x| !(x > 0.0)) {
            return Err(SgError::InvalidArgument(format!(
                "coefficient vector has a nonpositive entry: {b:?}"
            )));
        }
        // Strictly below 1/2 in exact arithmetic, but the margin along
        // constant runs decays geometrically ((1/9)^n at level 2, (1/49)^n at
        // level 3), so deep words sit closer to the boundary than f64 can
        // resolve and the computed sum can land a few 1e-12 above it. The
        // slack admits that roundoff; anything past it is structurally bad
        // input, not a near-boundary word.
        let sq = b[0] * b[0] + b[1] * b[1] + b[2] * b[2];
        if sq >= 0.5 + 1e-9 {
            return Err(SgError::InvalidArgument(format!(
                "coefficient vector lies outside the open disk: sum of squares {sq}"
            )));
        }
        Ok(BVector { b })
    }

    pub fn sum_sq(&self) -> f64 {
        self.b.iter().map(|x| x * x).sum()
    }

    /// Squared distance from the barycenter (1/3, 1/3, 1/3).
    pub fn deviation_sq(&self) -> f64 {
        self.b.iter().map(|x| (x - 1.0 / 3.0).powi(2)).sum()
    }
}

/// Polar coordinates of a coefficient vector in the mean-zero plane.
///
/// radius < 1/sqrt(6) always; theta in (-pi, pi]. At the barycenter the
/// angle is undefined; `at_center` flags that and theta is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarPoint {
    pub radius: f64,
    pub theta: f64,
    pub at_center: bool,
}

/// Orthonormal basis of the mean-zero plane used for all angular readouts.
pub fn plane_basis() -> [Vec3; 2] {
    let s2 = std::f64::consts::SQRT_2;
    let s6 = 6.0f64.sqrt();
    [[1.0 / s2, -1.0 / s2, 0.0], [-1.0 / s6, -1.0 / s6, 2.0 / s6]]
}

/// Plane coordinates and polar form of a coefficient vector.
pub fn polar(bv: &BVector) -> PolarPoint {
    let basis = plane_basis();
    let d = [
        bv.b[0] - 1.0 / 3.0,
        bv.b[1] - 1.0 / 3.0,
        bv.b[2] - 1.0 / 3.0,
    ];
    let x = dot3(&d, &basis[0]);
    let mut y = dot3(&d, &basis[1]);
    let radius = (x * x + y * y).sqrt();
    if radius < 1e-14 {
        return PolarPoint {
            radius,
            theta: 0.0,
            at_center: true,
        };
    }
    if y == 0.0 {
        y = 0.0; // fold -0.0 so the positive x-axis reads as +0 and x<0 as +pi
    }
    PolarPoint {
        radius,
        theta: y.atan2(x),
        at_center: false,
    }
}

/// Projective distance between two nonzero plane vectors: |sin| of their
/// angle, insensitive to scaling and to sign.
pub fn angular_distance(y1: [f64; 2], y2: [f64; 2]) -> Result<f64> {
    let n1 = (y1[0] * y1[0] + y1[1] * y1[1]).sqrt();
    let n2 = (y2[0] * y2[0] + y2[1] * y2[1]).sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(SgError::ZeroVector);
    }
    let cross = y1[0] * y2[1] - y1[1] * y2[0];
    Ok((cross / (n1 * n2)).abs())
}

/// Anisotropy measure of a plane map: det^2 / norm^4, i.e. the squared ratio
/// of its singular values. Equals 1 for conformal maps and decays to 0 as
/// the image flattens onto a line.
pub fn det_ratio(b: &Mat2) -> f64 {
    let d = det2(b);
    let s = op_norm2(b);
    let q = d / (s * s);
    q * q
}

#[derive(Debug, Clone)]
pub struct EnergyModel {
    pub structure: SelfSimilarStructure,
    pub backend: BackendKind,
    pub d: Mat3,
    pub r: f64,
    pub gamma: f64,
    pub a_maps: Vec<Mat3>,
    pub u: [Vec3; 3],
    pub v: [Vec3; 3],
    pub determinants: Vec<f64>,
    /// Energy-orthonormal frame: (x_i, x_j)_E = delta_ij / 4.
    pub frame: [Vec3; 2],
    /// Euclidean-orthonormal plane basis used for angular readouts.
    pub plane: [Vec3; 2],
    /// Rational structure, retained when built exactly.
    pub exact: Option<HarmonicStructure>,
}

impl EnergyModel {
    /// Builds with the standard boundary operator, choosing the backend by
    /// level: exact up to `EXACT_LEVEL_CAP`, float up to `FLOAT_LEVEL_CAP`.
    pub fn build(level: u32) -> Result<EnergyModel> {
        if level <= EXACT_LEVEL_CAP {
            Self::build_exact(level)
        } else {
            Self::build_float(level)
        }
    }

    pub fn build_exact(level: u32) -> Result<EnergyModel> {
        if level > EXACT_LEVEL_HARD_CAP {
            return Err(SgError::LevelOverCap(level, "exact", EXACT_LEVEL_HARD_CAP));
        }
        let s = SelfSimilarStructure::build(level)?;
        let hs = build_harmonic_structure(&s, &standard_d())?;
        Ok(Self::from_exact(s, hs))
    }

    pub fn build_float(level: u32) -> Result<EnergyModel> {
        if level > FLOAT_LEVEL_CAP {
            return Err(SgError::LevelOverCap(level, "float", FLOAT_LEVEL_CAP));
        }
        let s = SelfSimilarStructure::build(level)?;
        let fh = build_float_harmonic(&s, &standard_d())?;
        Ok(Self::from_float(s, fh))
    }

    /// Builds from an exact structure computed for a (possibly nonstandard)
    /// boundary operator.
    pub fn build_exact_with(s: SelfSimilarStructure, d: &RatMat3) -> Result<EnergyModel> {
        let hs = build_harmonic_structure(&s, d)?;
        Ok(Self::from_exact(s, hs))
    }

    pub fn from_exact(s: SelfSimilarStructure, hs: HarmonicStructure) -> EnergyModel {
        let to_f = |m: &RatMat3| -> Mat3 {
            let mut out = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    out[i][j] = ratio_to_f64(&m[i][j]);
                }
            }
            out
        };
        let d = to_f(&hs.d);
        let a_maps: Vec<Mat3> = hs.a_maps.iter().map(&to_f).collect();
        let vec_f = |v: &crate::exact::RatVec3| -> Vec3 {
            [
                ratio_to_f64(&v[0]),
                ratio_to_f64(&v[1]),
                ratio_to_f64(&v[2]),
            ]
        };
        let u = [vec_f(&hs.u[0]), vec_f(&hs.u[1]), vec_f(&hs.u[2])];
        let v = [vec_f(&hs.v[0]), vec_f(&hs.v[1]), vec_f(&hs.v[2])];
        let determinants = hs.determinants.iter().map(ratio_to_f64).collect();
        let r = ratio_to_f64(&hs.r);
        let gamma = ratio_to_f64(&hs.gamma);
        let plane = plane_basis();
        let frame = default_frame(gamma);
        EnergyModel {
            structure: s,
            backend: BackendKind::Exact,
            d,
            r,
            gamma,
            a_maps,
            u,
            v,
            determinants,
            frame,
            plane,
            exact: Some(hs),
        }
    }

    pub fn from_float(s: SelfSimilarStructure, fh: FloatHarmonic) -> EnergyModel {
        let plane = plane_basis();
        let frame = default_frame(fh.gamma);
        EnergyModel {
            structure: s,
            backend: BackendKind::Float,
            d: fh.d,
            r: fh.r,
            gamma: fh.gamma,
            a_maps: fh.a_maps,
            u: fh.u,
            v: fh.v,
            determinants: fh.determinants,
            frame,
            plane,
            exact: None,
        }
    }

    /// Replaces the readout frame after checking energy orthonormality:
    /// (-d x_i) . x_j must equal delta_ij / 4.
    pub fn with_frame(mut self, x1: Vec3, x2: Vec3) -> Result<EnergyModel> {
        let xs = [x1, x2];
        let mut worst = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                let e = -dot3(&matvec3(&self.d, &xs[i]), &xs[j]);
                let want = if i == j { 0.25 } else { 0.0 };
                worst = worst.max((e - want).abs());
            }
        }
        if worst > 1e-12 {
            return Err(SgError::BadFrame(worst));
        }
        self.frame = xs;
        Ok(self)
    }

    pub fn level(&self) -> u32 {
        self.structure.level
    }

    pub fn num_symbols(&self) -> usize {
        self.a_maps.len()
    }

    pub fn validate_word(&self, w: &Word) -> Result<()> {
        let count = self.num_symbols();
        for &s in w.symbols() {
            if s as usize >= count {
                return Err(SgError::SymbolOutOfRange {
                    symbol: s as usize + 1,
                    count,
                    level: self.level(),
                });
            }
        }
        Ok(())
    }

    /// A_w as a product over the word, deepest symbol leftmost.
    pub fn word_matrix(&self, w: &Word) -> Result<Mat3> {
        self.validate_word(w)?;
        let mut m = MAT3_IDENTITY;
        for &s in w.symbols() {
            m = matmul3(&self.a_maps[s as usize], &m);
        }
        Ok(m)
    }

    /// One-symbol extension of a running product: A_{ws} = A_s A_w.
    pub fn extend_matrix(&self, m: &Mat3, s: u16) -> Mat3 {
        matmul3(&self.a_maps[s as usize], m)
    }

    /// Energy of the harmonic function with boundary values f, restricted to
    /// the depth-|w| cell K_w (renormalized).
    pub fn cell_energy(&self, f: &Vec3, w: &Word) -> Result<f64> {
        let m = self.word_matrix(w)?;
        Ok(self.cell_energy_with(&m, w.len(), f))
    }

    pub fn cell_energy_with(&self, m: &Mat3, len: usize, f: &Vec3) -> f64 {
        let y = matvec3(m, f);
        -2.0 * dot3(&y, &matvec3(&self.d, &y)) / self.r.powi(len as i32)
    }

    /// Mutual energy of two harmonic functions on K_w, by polarization of
    /// the quadratic form.
    pub fn mutual_cell_energy(&self, f: &Vec3, g: &Vec3, w: &Word) -> Result<f64> {
        let m = self.word_matrix(w)?;
        let fg = [f[0] + g[0], f[1] + g[1], f[2] + g[2]];
        let e_fg = self.cell_energy_with(&m, w.len(), &fg);
        let e_f = self.cell_energy_with(&m, w.len(), f);
        let e_g = self.cell_energy_with(&m, w.len(), g);
        Ok((e_fg - e_f - e_g) / 2.0)
    }

    /// Total mass the energy measure assigns to K_w: the frame energies
    /// summed. Normalized so the whole gasket has mass 1.
    pub fn nu_with(&self, m: &Mat3, len: usize) -> f64 {
        self.cell_energy_with(m, len, &{ self.frame[0] })
            + self.cell_energy_with(m, len, &{ self.frame[1] })
    }

    pub fn nu(&self, w: &Word) -> Result<f64> {
        let m = self.word_matrix(w)?;
        Ok(self.nu_with(&m, w.len()))
    }

    /// z_j = A_w^T u_j, the pulled-back corner covectors.
    pub fn pullbacks(&self, m: &Mat3) -> [Vec3; 3] {
        [
            tmatvec3(m, &self.u[0]),
            tmatvec3(m, &self.u[1]),
            tmatvec3(m, &self.u[2]),
        ]
    }

    /// Frame inner product of mean-zero vectors: sum_k (x . x_k)(y . x_k).
    fn frame_inner(&self, x: &Vec3, y: &Vec3) -> f64 {
        dot3(x, &self.frame[0]) * dot3(y, &self.frame[0])
            + dot3(x, &self.frame[1]) * dot3(y, &self.frame[1])
    }

    /// Unnormalized coefficients a_j(w) = sum_k (z_j . x_k)^2, computed
    /// through the frame rather than any closed form so that a change of
    /// admissible frame is exercised for real.
    pub fn a_coeffs_with(&self, m: &Mat3) -> [f64; 3] {
        let zs = self.pullbacks(m);
        [
            self.frame_inner(&zs[0], &zs[0]),
            self.frame_inner(&zs[1], &zs[1]),
            self.frame_inner(&zs[2], &zs[2]),
        ]
    }

    pub fn a_coeffs(&self, w: &Word) -> Result<[f64; 3]> {
        Ok(self.a_coeffs_with(&self.word_matrix(w)?))
    }

    pub fn b_coeffs_with(&self, m: &Mat3) -> Result<BVector> {
        let a = self.a_coeffs_with(m);
        let s = a[0] + a[1] + a[2];
        if s <= 0.0 {
            return Err(SgError::ZeroVector);
        }
        BVector::new([a[0] / s, a[1] / s, a[2] / s])
    }

    pub fn b_coeffs(&self, w: &Word) -> Result<BVector> {
        self.b_coeffs_with(&self.word_matrix(w)?)
    }

    /// Pointwise density limit of the energy measure of the harmonic
    /// function with boundary values f against nu, localized at corner j of
    /// K_w: (u_j . A_w f)^2 / a_j(w).
    pub fn limit_density(&self, w: &Word, corner: usize, f: &Vec3) -> Result<f64> {
        if corner >= 3 {
            return Err(SgError::CornerOutOfRange(corner));
        }
        let m = self.word_matrix(w)?;
        let y = matvec3(&m, f);
        let t = dot3(&self.u[corner], &y);
        let a = self.a_coeffs_with(&m);
        Ok(t * t / a[corner])
    }

    /// Restriction of A_w to the mean-zero plane in the fixed basis.
    pub fn tilde_matrix_with(&self, m: &Mat3) -> Mat2 {
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = dot3(&self.plane[i], &matvec3(m, &self.plane[j]));
            }
        }
        out
    }

    pub fn tilde_matrix(&self, w: &Word) -> Result<Mat2> {
        Ok(self.tilde_matrix_with(&self.word_matrix(w)?))
    }

    /// Per-symbol plane restrictions; products of these in word order equal
    /// the word's plane restriction (the maps fix constants, so restriction
    /// is multiplicative).
    pub fn symbol_tildes(&self) -> Vec<Mat2> {
        self.a_maps
            .iter()
            .map(|a| {
                let mut out = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        out[i][j] = dot3(&self.plane[i], &matvec3(a, &self.plane[j]));
                    }
                }
                out
            })
            .collect()
    }

    /// Sum of squared normalized coefficients via the two-corner closed form
    /// that drops corner `skip`; agrees with the direct sum for every choice
    /// of dropped corner.
    pub fn sum_b_squared_formula(&self, w: &Word, skip: usize) -> Result<f64> {
        if skip >= 3 {
            return Err(SgError::CornerOutOfRange(skip));
        }
        // Work in the plane restriction: the full 3x3 pullbacks are computed
        // by cancelling O(1) mean parts down to the tiny mean-zero residue,
        // which costs eleven digits on deep words and breaks the exact
        // independence from the dropped corner. Plane products never touch
        // the mean direction, so their errors stay relative. The common
        // frame scale cancels between numerator and denominator.
        let bt = self.tilde_matrix(w)?;
        let qu = |j: usize| {
            let u = &self.u[j];
            [dot3(&self.plane[0], u), dot3(&self.plane[1], u)]
        };
        let t = |j: usize| {
            let q = qu(j);
            [
                bt[0][0] * q[0] + bt[1][0] * q[1],
                bt[0][1] * q[0] + bt[1][1] * q[1],
            ]
        };
        let ts = [t(0), t(1), t(2)];
        let n: Vec<f64> = ts.iter().map(|t| t[0] * t[0] + t[1] * t[1]).collect();
        let sum4: f64 = n.iter().map(|x| x * x).sum();
        let others: Vec<usize> = (0..3).filter(|&j| j != skip).collect();
        let (al, be) = (others[0], others[1]);
        // Gram 2-volume as a squared wedge; the norm-product-minus-cross
        // form is the same number but cancels catastrophically once the two
        // pullbacks are nearly parallel.
        let wedge = ts[al][0] * ts[be][1] - ts[al][1] * ts[be][0];
        let bracket = 4.0 * wedge * wedge;
        Ok(1.0 / (2.0 + bracket / sum4))
    }
}

/// Frame scaled so the plane basis becomes energy-orthonormal with norm 1/2:
/// x_k = a_k / (2 sqrt(gamma)).
pub fn default_frame(gamma: f64) -> [Vec3; 2] {
    let basis = plane_basis();
    let c = 1.0 / (2.0 * gamma.sqrt());
    [
        [basis[0][0] * c, basis[0][1] * c, basis[0][2] * c],
        [basis[1][0] * c, basis[1][1] * c, basis[1][2] * c],
    ]
}

/// Exact-arithmetic check that a word's plane restriction equals the product
/// of per-symbol restrictions would be overkill; this float identity is used
/// by tests instead.
pub fn tilde_product(tildes: &[Mat2], w: &Word) -> Mat2 {
    let mut m = [[1.0, 0.0], [0.0, 1.0]];
    for &s in w.symbols() {
        m = matmul2(&tildes[s as usize], &m);
    }
    m
}
