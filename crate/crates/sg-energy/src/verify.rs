//! Property suites for the structural and asymptotic claims the library
//! implements, each emitting a pass/fail report with a reproducible witness.
//!
//! Checks are deterministic given (level, depth, seed): randomized ones
//! derive a private RNG stream from the master seed and the check name, so
//! they can run concurrently or alone without changing results. Reports
//! carry no timing; wall-clock belongs on stderr, keeping serialized output
//! byte-stable.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::distribution::{
    collect_distribution, sample_word, walk_nodes, word_label, EnumerationPlan, WordMeasure,
};
use crate::energy::{angular_distance, EnergyModel, Word};
use crate::error::{Result, SgError};
use crate::mat3::{
    det2, det3, dot3, matmul2, matvec3, max_abs2, norm3, op_norm2, project_mean_zero, scale3, sub3,
    tmatvec3, Mat2, Vec3,
};

pub const DEFAULT_VERIFY_DEPTH: u32 = 8;
pub const DEFAULT_SEED: u64 = 1729;
pub const DEFAULT_DET_SAMPLES: usize = 500;
pub const DEFAULT_DET_LENGTH: usize = 50;

/// Identity and eigenvector residuals; exact-backend models sit far below.
const TOL_STRUCT: f64 = 1e-10;
/// Projected power iteration residual at the final step.
const TOL_POWER: f64 = 1e-8;
/// Skewness identity residual over the swept words.
const TOL_SKEW: f64 = 1e-10;
/// Frozen rational spot values.
const TOL_SPOT: f64 = 1e-12;
/// Finite-depth energy ratio against its closed-form limit.
const TOL_DENSITY: f64 = 1e-6;
/// Closed-form sum of squares against the direct evaluation.
const TOL_FORMULA: f64 = 1e-10;
/// Spread of the closed form across the three corner eliminations.
const TOL_FORMULA_SPREAD: f64 = 1e-12;
/// Pairwise angular separation treated as linear independence on the grid.
const TOL_GRID_ANGLE: f64 = 1e-6;
/// Required decay factor between the first and last det-ratio medians.
const DET_MEDIAN_FACTOR: f64 = 1e-3;

/// Check names the dispatcher accepts, besides "all".
pub const CHECK_TOKENS: &[&str] = &[
    "operator",
    "lemmaA",
    "powerlimit",
    "thmB",
    "bhs1",
    "irr",
    "detratio",
    "density",
    "sumsq",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub word: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub check: String,
    pub level: u32,
    pub status: CheckStatus,
    pub params: BTreeMap<String, Value>,
    pub details: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }
}

/// Settings shared by the randomized and swept checks.
#[derive(Debug, Clone, Copy)]
pub struct VerifyParams {
    pub depth: u32,
    pub seed: u64,
    pub samples: usize,
    pub length: usize,
}

impl Default for VerifyParams {
    fn default() -> Self {
        VerifyParams {
            depth: DEFAULT_VERIFY_DEPTH,
            seed: DEFAULT_SEED,
            samples: DEFAULT_DET_SAMPLES,
            length: DEFAULT_DET_LENGTH,
        }
    }
}

fn fnv1a64(text: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Private RNG stream for one check under a master seed.
pub fn check_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a64(name));
    rng
}

/// Per-sample substream inside one check's stream space.
fn sample_rng(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a64(name).wrapping_add(index + 1));
    rng
}

fn finish(
    check: &str,
    level: u32,
    pass: bool,
    params: BTreeMap<String, Value>,
    details: BTreeMap<String, Value>,
    witness: Option<Witness>,
) -> VerificationReport {
    VerificationReport {
        check: check.into(),
        level,
        status: if pass {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        params,
        details,
        witness: if pass { None } else { witness },
    }
}

fn random_vec3(rng: &mut ChaCha8Rng) -> Vec3 {
    [
        rng.gen::<f64>() * 2.0 - 1.0,
        rng.gen::<f64>() * 2.0 - 1.0,
        rng.gen::<f64>() * 2.0 - 1.0,
    ]
}

fn random_word(rng: &mut ChaCha8Rng, nsym: usize, max_len: usize) -> Word {
    let len = rng.gen_range(0..=max_len);
    Word((0..len).map(|_| rng.gen_range(0..nsym) as u16).collect())
}

/// Boundary operator structure: the range of the operator is exactly the
/// mean-zero subspace (rank 2, killed by the constants), the square is a
/// negative multiple of the operator itself, the renormalization identity
/// holds, and all small maps are invertible.
pub fn check_boundary_kernel(model: &EnergyModel) -> VerificationReport {
    let d = &model.d;
    let mut details = BTreeMap::new();
    let mut pass = true;
    let mut worst_note = String::new();

    // Columns sum to zero: constants are orthogonal to the range.
    let mut col_sum = 0.0f64;
    for c in 0..3 {
        let s: f64 = (0..3).map(|r| d[r][c]).sum();
        col_sum = col_sum.max(s.abs());
    }
    if col_sum > TOL_STRUCT {
        pass = false;
        worst_note = format!("column sums reach {col_sum:e}");
    }

    // Rank 2: any vanishing 2x2 minor of the standard operator would break
    // this; combined with the zero column sums the rank is exactly 2.
    let minor = d[0][0] * d[1][1] - d[0][1] * d[1][0];
    if minor.abs() < 1e-8 {
        pass = false;
        worst_note = format!("leading 2x2 minor is {minor:e}");
    }
    details.insert("rank".into(), json!(2));
    details.insert("column_sum_max".into(), json!(col_sum));

    // D^2 = -gamma D.
    let mut sq_res = 0.0f64;
    for r in 0..3 {
        for c in 0..3 {
            let dd: f64 = (0..3).map(|k| d[r][k] * d[k][c]).sum();
            sq_res = sq_res.max((dd + model.gamma * d[r][c]).abs());
        }
    }
    if sq_res > TOL_STRUCT {
        pass = false;
        worst_note = format!("square identity residual {sq_res:e}");
    }
    details.insert("gamma".into(), json!(model.gamma));
    details.insert("square_identity_residual".into(), json!(sq_res));

    // Renormalization: sum_s tA_s D A_s = r D.
    let mut ident = [[0.0f64; 3]; 3];
    for a in &model.a_maps {
        for r in 0..3 {
            for c in 0..3 {
                let mut acc = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        acc += a[i][r] * model.d[i][j] * a[j][c];
                    }
                }
                ident[r][c] += acc;
            }
        }
    }
    let mut ident_res = 0.0f64;
    for r in 0..3 {
        for c in 0..3 {
            ident_res = ident_res.max((ident[r][c] - model.r * d[r][c]).abs());
        }
    }
    if ident_res > TOL_STRUCT {
        pass = false;
        worst_note = format!("renormalization identity residual {ident_res:e}");
    }
    details.insert("renormalization_residual".into(), json!(ident_res));

    let min_det = model
        .determinants
        .iter()
        .map(|x| x.abs())
        .fold(f64::INFINITY, f64::min);
    if !(min_det > 0.0) {
        pass = false;
        worst_note = "a small map is singular".into();
    }
    details.insert("min_abs_det".into(), json!(min_det));
    details.insert("r".into(), json!(model.r));

    let witness = Some(Witness {
        word: None,
        residual: None,
        note: worst_note,
    });
    finish(
        "operator",
        model.level(),
        pass,
        BTreeMap::new(),
        details,
        witness,
    )
}

/// Corner-map spectra: each corner map has eigenvalues {1, r, mu} with
/// |mu| < r, the kernel direction is a left eigenvector for r, and the
/// nonnegative right eigenvector is normalized against it.
pub fn check_corner_eigensystem(model: &EnergyModel) -> VerificationReport {
    let mut details = BTreeMap::new();
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut note = String::new();
    let mut sign_failures: Vec<String> = Vec::new();
    let tildes = model.symbol_tildes();

    for j in 0..3 {
        let a = &model.a_maps[j];
        let u = &model.u[j];
        let v = &model.v[j];
        let r = model.r;
        let mu = model.determinants[j] / r;

        let mut track = |res: f64, what: &str| {
            if res > worst {
                worst = res;
                note = format!("corner {}: {what} residual {res:e}", j + 1);
            }
            if res > TOL_STRUCT {
                pass = false;
            }
        };

        // Row sums 1: the constants are fixed, eigenvalue 1.
        let ones = [1.0, 1.0, 1.0];
        let row = matvec3(a, &ones);
        track(norm3(&sub3(&row, &ones)), "constant eigenvector");
        // tA_j u_j = r u_j.
        track(
            norm3(&sub3(&tmatvec3(a, u), &scale3(u, r))),
            "left eigenvector",
        );
        // A_j v_j = r v_j, normalized (u_j, v_j) = 1, entries nonnegative.
        track(
            norm3(&sub3(&matvec3(a, v), &scale3(v, r))),
            "right eigenvector",
        );
        track((dot3(u, v) - 1.0).abs(), "normalization");
        if v.iter().any(|&x| x < -TOL_SPOT) {
            sign_failures.push(format!(
                "corner {}: right eigenvector has a negative entry",
                j + 1
            ));
        }
        // Spectrum {1, r, mu}: trace and determinant pin the multiset given
        // the constant eigenvector, and the plane restriction must carry the
        // remaining pair {r, mu} with no imaginary part.
        let trace = a[0][0] + a[1][1] + a[2][2];
        track((trace - (1.0 + r + mu)).abs(), "trace identity");
        track((det3(a) - r * mu).abs(), "determinant identity");
        let (e1, i1, e2, i2) = eig_pair(&tildes[j]);
        track(i1.abs().max(i2.abs()), "imaginary part");
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let (mlo, mhi) = if mu <= r { (mu, r) } else { (r, mu) };
        track((lo - mlo).abs().max((hi - mhi).abs()), "plane spectrum");
        // Strict spectral gap.
        if !(mu.abs() < r) {
            sign_failures.push(format!(
                "corner {}: |mu| = {} is not below r = {r}",
                j + 1,
                mu.abs()
            ));
        }
        details.insert(format!("eigenvalues_{}", j + 1), json!([1.0, r, mu]));
        details.insert(format!("gap_{}", j + 1), json!(r - mu.abs()));
    }
    if let Some(last) = sign_failures.pop() {
        pass = false;
        note = last;
    }
    details.insert("worst_residual".into(), json!(worst));
    let witness = Some(Witness {
        word: None,
        residual: Some(worst),
        note,
    });
    finish(
        "lemmaA",
        model.level(),
        pass,
        BTreeMap::new(),
        details,
        witness,
    )
}

fn eig_pair(m: &Mat2) -> (f64, f64, f64, f64) {
    crate::mat3::eigvals2(m)
}

/// Projected power iteration: r^-n P A_j^n x converges to (u_j, x) P v_j,
/// monotonically once the contraction takes over. Residuals below 1e-12 are
/// allowed to jitter; everything above must decrease.
pub fn check_power_limit(model: &EnergyModel, seed: u64) -> VerificationReport {
    const STARTS: usize = 20;
    const N_MAX: usize = 40;
    let mut rng = check_rng(seed, "powerlimit");
    let mut pass = true;
    let mut worst_final = 0.0f64;
    let mut worst_violation = 0.0f64;
    let mut note = String::new();

    for j in 0..3 {
        let a = &model.a_maps[j];
        let u = &model.u[j];
        let pv = project_mean_zero(&model.v[j]);

        // Eigenvector start: exact fixed point of the iteration.
        let v_res = iterate_residuals(model.r, a, &model.v[j], u, &pv, 3);
        if v_res.iter().any(|&e| e > 1e-10) {
            pass = false;
            note = format!("corner {}: eigenvector start drifts", j + 1);
        }
        // Constant start: the projection kills it immediately.
        let one_res = iterate_residuals(model.r, a, &[1.0, 1.0, 1.0], u, &pv, 1);
        if one_res[0] > 1e-14 {
            pass = false;
            note = format!("corner {}: constant start not annihilated", j + 1);
        }

        for t in 0..STARTS {
            let x = random_vec3(&mut rng);
            let errs = iterate_residuals(model.r, a, &x, u, &pv, N_MAX);
            for n in 1..errs.len() {
                let rise = errs[n] - errs[n - 1];
                if rise > 0.0 && errs[n] > 1e-12 {
                    pass = false;
                    if rise > worst_violation {
                        worst_violation = rise;
                        note = format!(
                            "corner {}, start {t}: residual rises by {rise:e} at step {}",
                            j + 1,
                            n + 1
                        );
                    }
                }
            }
            let last = *errs.last().expect("nonempty");
            if last > worst_final {
                worst_final = last;
            }
            if last > TOL_POWER {
                pass = false;
                note = format!("corner {}, start {t}: final residual {last:e}", j + 1);
            }
        }
    }

    let mut params = BTreeMap::new();
    params.insert("starts".into(), json!(STARTS));
    params.insert("n_max".into(), json!(N_MAX));
    params.insert("seed".into(), json!(seed));
    let mut details = BTreeMap::new();
    details.insert("worst_final_residual".into(), json!(worst_final));
    details.insert("worst_monotonicity_rise".into(), json!(worst_violation));
    let witness = Some(Witness {
        word: None,
        residual: Some(worst_final),
        note,
    });
    finish("powerlimit", model.level(), pass, params, details, witness)
}

fn iterate_residuals(
    r: f64,
    a: &[[f64; 3]; 3],
    x: &Vec3,
    u: &Vec3,
    pv: &Vec3,
    n_max: usize,
) -> Vec<f64> {
    let c = dot3(u, x);
    let limit = scale3(pv, c);
    let mut y = project_mean_zero(x);
    let mut out = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        y = scale3(&project_mean_zero(&matvec3(a, &y)), 1.0 / r);
        out.push(norm3(&sub3(&y, &limit)));
    }
    out
}

/// Skewness identity on the level-2 gasket: for every word w and corner j,
/// (1/5)(b_j - 1/3) = (1/4)(nu(K_wj)/nu(K_w) - 1/3).
pub fn check_skew_identity(model: &EnergyModel, depth: u32) -> Result<VerificationReport> {
    if model.level() != 2 {
        return Err(SgError::UnsupportedStructure(model.level()));
    }
    let mut max_res = 0.0f64;
    let mut arg = (String::new(), 0usize);
    walk_nodes(model, depth, &mut |word, m| {
        let bv = model.b_coeffs_with(m)?;
        let nu_w = model.nu_with(m, word.len());
        for j in 0..3 {
            let child = model.extend_matrix(m, j as u16);
            let nu_c = model.nu_with(&child, word.len() + 1);
            let lhs = 0.2 * (bv.b[j] - 1.0 / 3.0);
            let rhs = 0.25 * (nu_c / nu_w - 1.0 / 3.0);
            let res = (lhs - rhs).abs();
            if res > max_res {
                max_res = res;
                arg = (word_label(word), j + 1);
            }
        }
        Ok(())
    })?;

    // Frozen spot: the identity pins nu(K_11)/nu(K_1) at 41/75.
    let m1 = model.a_maps[0];
    let m11 = model.extend_matrix(&m1, 0);
    let spot = model.nu_with(&m11, 2) / model.nu_with(&m1, 1);
    let spot_res = (spot - 41.0 / 75.0).abs();

    let pass = max_res < TOL_SKEW && spot_res < TOL_SPOT;
    let mut params = BTreeMap::new();
    params.insert("depth".into(), json!(depth));
    let mut details = BTreeMap::new();
    details.insert("max_residual".into(), json!(max_res));
    details.insert("worst_word".into(), json!(arg.0));
    details.insert("worst_corner".into(), json!(arg.1));
    details.insert("nu_ratio_11_over_1".into(), json!(spot));
    let witness = Some(Witness {
        word: Some(arg.0.clone()),
        residual: Some(max_res),
        note: format!("corner {}", arg.1),
    });
    Ok(finish(
        "thmB",
        model.level(),
        pass,
        params,
        details,
        witness,
    ))
}

/// Disk bounds: every word up to the depth keeps sum b^2 below 1/2 and the
/// squared distance from the barycenter below 1/6; the per-depth suprema
/// climb toward 1/6 without reaching it. The trend is reported, never
/// asserted as a limit.
pub fn check_disk_bounds(model: &EnergyModel, depth: u32) -> Result<VerificationReport> {
    let summary = collect_distribution(
        model,
        &EnumerationPlan::summary_only(depth, WordMeasure::Uniform),
    )?;
    let sups = &summary.sup_deviation_sq_by_depth;
    let bound = 1.0 / 6.0;
    let mut pass = true;
    let mut note = String::new();

    let max_sup = sups.iter().fold(0.0f64, |a, &b| a.max(b));
    if !(max_sup < bound) {
        pass = false;
        note = format!("supremum {max_sup} reaches 1/6");
    }
    if !(summary.max_sum_sq < 0.5) {
        pass = false;
        note = format!("sum of squares reaches {}", summary.max_sum_sq);
    }
    if !(summary.min_coefficient > 0.0) {
        pass = false;
        note = "a coefficient is nonpositive".into();
    }
    if sups[0] > 1e-20 {
        pass = false;
        note = format!("empty word deviates by {:e}", sups[0]);
    }
    // Frozen depth-1 value for the standard structure.
    if model.level() == 2 && depth >= 1 && (sups[1] - 8.0 / 75.0).abs() > TOL_SPOT {
        pass = false;
        note = format!("depth-1 supremum {} is not 8/75", sups[1]);
    }
    if depth >= 2 && !(sups[depth as usize] > sups[1]) {
        pass = false;
        note = "suprema do not climb past depth 1".into();
    }

    let mut params = BTreeMap::new();
    params.insert("depth".into(), json!(depth));
    let mut details = BTreeMap::new();
    details.insert("sup_by_depth".into(), json!(sups));
    details.insert("max_sum_sq".into(), json!(summary.max_sum_sq));
    details.insert("margin_to_one_sixth".into(), json!(bound - max_sup));
    details.insert("min_coefficient".into(), json!(summary.min_coefficient));
    let witness = Some(Witness {
        word: None,
        residual: Some(max_sup),
        note,
    });
    Ok(finish(
        "bhs1",
        model.level(),
        pass,
        params,
        details,
        witness,
    ))
}

fn apply2(m: &Mat2, x: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * x[0] + m[0][1] * x[1],
        m[1][0] * x[0] + m[1][1] * x[1],
    ]
}

fn plane_coords(model: &EnergyModel, x: &Vec3) -> [f64; 2] {
    [dot3(&model.plane[0], x), dot3(&model.plane[1], x)]
}

/// Strong irreducibility evidence: the level-2 corner maps have the
/// documented eigendirections, and across a grid of unit directions the
/// first three iterates under some symbol map are pairwise independent.
/// Sampled evidence over a grid, not a proof over all directions.
pub fn check_irreducibility_witness(model: &EnergyModel) -> VerificationReport {
    const GRID: usize = 360;
    let tildes = model.symbol_tildes();
    let mut pass = true;
    let mut note = String::new();
    let mut details = BTreeMap::new();
    let r = model.r;

    if model.level() == 2 {
        let mu = model.determinants[0] / r;
        // (vector, map index, eigenvalue) straight from the worked example.
        let cases: [(Vec3, usize, f64); 4] = [
            ([2.0, -1.0, -1.0], 0, r),
            ([0.0, 1.0, -1.0], 0, mu),
            ([-1.0, 2.0, -1.0], 1, r),
            ([1.0, 0.0, -1.0], 1, mu),
        ];
        let mut worst = 0.0f64;
        for (z, s, lambda) in &cases {
            let x = plane_coords(model, z);
            let y = apply2(&tildes[*s], x);
            let res = ((y[0] - lambda * x[0]).powi(2) + (y[1] - lambda * x[1]).powi(2)).sqrt();
            if res > worst {
                worst = res;
            }
            if res > TOL_STRUCT {
                pass = false;
                note = format!("eigendirection residual {res:e} for map {}", s + 1);
            }
        }
        details.insert("eigenvector_residual".into(), json!(worst));

        // A direction aligned with the first eigendirection stays put under
        // the first map, but the second map's first three iterates already
        // spread out pairwise.
        let x = plane_coords(model, &[2.0, -1.0, -1.0]);
        let y1 = apply2(&tildes[1], x);
        let y2 = apply2(&tildes[1], y1);
        let aligned_ok = pairwise_independent(&[x, y1, y2]);
        if !aligned_ok {
            pass = false;
            note = "aligned start fails to spread under the second map".into();
        }
        details.insert("aligned_start_independent".into(), json!(aligned_ok));
    }

    let mut covered = 0usize;
    let mut uncovered_angle = None;
    for k in 0..GRID {
        let phi =
            -std::f64::consts::PI + (k as f64 + 0.5) * 2.0 * std::f64::consts::PI / GRID as f64;
        let x = [phi.cos(), phi.sin()];
        let mut found = false;
        for t in &tildes {
            let y1 = apply2(t, x);
            let y2 = apply2(t, y1);
            if pairwise_independent(&[x, y1, y2]) {
                found = true;
                break;
            }
        }
        if found {
            covered += 1;
        } else if uncovered_angle.is_none() {
            uncovered_angle = Some(phi);
        }
    }
    if covered != GRID {
        pass = false;
        note = format!(
            "no symbol map spreads the direction at angle {}",
            uncovered_angle.unwrap_or(f64::NAN)
        );
    }
    details.insert("grid_points".into(), json!(GRID));
    details.insert("grid_covered".into(), json!(covered));
    details.insert("sampled".into(), json!(true));

    let witness = Some(Witness {
        word: None,
        residual: None,
        note,
    });
    finish(
        "irr",
        model.level(),
        pass,
        BTreeMap::new(),
        details,
        witness,
    )
}

fn pairwise_independent(xs: &[[f64; 2]; 3]) -> bool {
    for i in 0..3 {
        for j in (i + 1)..3 {
            match angular_distance(xs[i], xs[j]) {
                Ok(d) if d > TOL_GRID_ANGLE => {}
                _ => return false,
            }
        }
    }
    true
}

/// Determinant-ratio decay along seeded uniform words: the squared ratio of
/// the singular values of the plane restriction, sampled every ten letters,
/// is asserted to fall strictly per sample and by orders of magnitude in the
/// median. The median collapse is robust; the per-sample strictness is not a
/// consequence of almost-sure convergence, and windows where the top
/// singular value happens to track the balanced rate do rise, so the details
/// carry rise counts for judging how often that occurred.
pub fn check_det_ratio_decay(
    model: &EnergyModel,
    samples: usize,
    length: usize,
    seed: u64,
) -> Result<VerificationReport> {
    check_det_ratio_decay_with(model, samples, length, seed, WordMeasure::Uniform)
}

/// Same decay check with the words drawn under a chosen measure.
pub fn check_det_ratio_decay_with(
    model: &EnergyModel,
    samples: usize,
    length: usize,
    seed: u64,
    measure: WordMeasure,
) -> Result<VerificationReport> {
    if samples < 2 {
        return Err(SgError::InvalidArgument(
            "detratio needs at least 2 samples".into(),
        ));
    }
    if length < 20 {
        return Err(SgError::InvalidArgument(
            "detratio needs length at least 20".into(),
        ));
    }
    let mut checkpoints: Vec<usize> = (1..=length / 10).map(|k| 10 * k).collect();
    if *checkpoints.last().expect("nonempty") != length {
        checkpoints.push(length);
    }
    let tildes = model.symbol_tildes();
    let logdets: Vec<f64> = tildes.iter().map(|t| det2(t).abs().ln()).collect();

    // Per sample: log det-ratio at each checkpoint, walked in log space with
    // a renormalized running product so nothing under- or overflows. The
    // direct 2x2 determinant is useless deep in: the product is numerically
    // rank one long before n = 50 and its computed determinant is all noise.
    let rows: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, "detratio", i as u64);
            let word = sample_word(model, &mut rng, length, measure);
            let mut bt: Mat2 = [[1.0, 0.0], [0.0, 1.0]];
            let mut logscale = 0.0f64;
            let mut logdet = 0.0f64;
            let mut out = Vec::with_capacity(checkpoints.len());
            let mut next = 0usize;
            for (k, &s) in word.iter().enumerate() {
                bt = matmul2(&tildes[s as usize], &bt);
                logdet += logdets[s as usize];
                let sc = max_abs2(&bt);
                if sc > 0.0 && sc.is_finite() {
                    logscale += sc.ln();
                    for row in bt.iter_mut() {
                        for x in row.iter_mut() {
                            *x /= sc;
                        }
                    }
                }
                if next < checkpoints.len() && k + 1 == checkpoints[next] {
                    let log_sigma1 = op_norm2(&bt).ln() + logscale;
                    out.push(2.0 * logdet - 4.0 * log_sigma1);
                    next += 1;
                }
            }
            out
        })
        .collect();

    let mut pass = true;
    let mut note = String::new();
    let mut witness_word = None;
    let mut rise_windows = 0usize;
    let mut rising_samples = 0usize;
    for (i, row) in rows.iter().enumerate() {
        let mut any = false;
        for k in 1..row.len() {
            if !(row[k] < row[k - 1]) {
                pass = false;
                any = true;
                rise_windows += 1;
                note = format!(
                    "sample {i}: ratio fails to fall between n = {} and n = {}",
                    checkpoints[k - 1],
                    checkpoints[k]
                );
                witness_word = Some(format!("sample-{i}"));
            }
        }
        if any {
            rising_samples += 1;
        }
    }

    let median_at = |k: usize| -> f64 {
        let mut col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
        col.sort_by(f64::total_cmp);
        let n = col.len();
        if n % 2 == 1 {
            col[n / 2]
        } else {
            0.5 * (col[n / 2 - 1] + col[n / 2])
        }
    };
    let med_first = median_at(0);
    let med_last = median_at(checkpoints.len() - 1);
    if !(med_last < med_first + DET_MEDIAN_FACTOR.ln()) {
        pass = false;
        note = format!("median log ratio falls only from {med_first} to {med_last}");
        witness_word = None;
    }

    let mut params = BTreeMap::new();
    params.insert("samples".into(), json!(samples));
    params.insert("length".into(), json!(length));
    params.insert("seed".into(), json!(seed));
    params.insert("measure".into(), json!(measure.to_string()));
    let mut details = BTreeMap::new();
    details.insert("checkpoints".into(), json!(checkpoints.clone()));
    details.insert("median_first".into(), json!(med_first.exp()));
    details.insert("median_last".into(), json!(med_last.exp()));
    details.insert("median_decay".into(), json!((med_last - med_first).exp()));
    details.insert("rise_windows".into(), json!(rise_windows));
    details.insert("windows".into(), json!(samples * (checkpoints.len() - 1)));
    details.insert("rising_samples".into(), json!(rising_samples));
    let witness = Some(Witness {
        word: witness_word,
        residual: None,
        note,
    });
    Ok(finish(
        "detratio",
        model.level(),
        pass,
        params,
        details,
        witness,
    ))
}

/// Finite-depth energy density against its closed-form limit: appending a
/// corner symbol n times drives nu_f/nu on the cell to (u_j, A_w f)^2 / a_j.
/// The finite side is evaluated through projected iterates, which keeps the
/// deep cancellation exact.
pub fn check_density_limit(model: &EnergyModel, seed: u64) -> VerificationReport {
    const TRIPLES: usize = 100;
    const N: usize = 30;
    let mut rng = check_rng(seed, "density");
    let nsym = model.num_symbols();
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut worst_word = String::new();
    let mut note = String::new();

    for _ in 0..TRIPLES {
        let w = random_word(&mut rng, nsym, 8);
        let j = rng.gen_range(0..3usize);
        let f = random_vec3(&mut rng);
        let aw = model.word_matrix(&w).expect("validated word");
        let y = matvec3(&aw, &f);
        let c = dot3(&model.u[j], &y);
        let a = model.a_coeffs_with(&aw)[j];
        let limit = c * c / a;

        // Projected iterates of the corner map; the shared normalization
        // cancels in the ratio.
        let mut zf = project_mean_zero(&y);
        let mut zk = [
            project_mean_zero(&matvec3(&aw, &model.frame[0])),
            project_mean_zero(&matvec3(&aw, &model.frame[1])),
        ];
        let corner = &model.a_maps[j];
        for _ in 0..N {
            zf = project_mean_zero(&matvec3(corner, &zf));
            for z in zk.iter_mut() {
                *z = project_mean_zero(&matvec3(corner, z));
            }
        }
        let q = |z: &Vec3| -> f64 {
            let mut acc = 0.0;
            for r in 0..3 {
                for s in 0..3 {
                    acc += z[r] * model.d[r][s] * z[s];
                }
            }
            acc
        };
        let ratio = q(&zf) / (q(&zk[0]) + q(&zk[1]));
        let diff = (ratio - limit).abs();
        if diff > worst {
            worst = diff;
            worst_word = format!("{}+corner{}", word_label(w.symbols()), j + 1);
        }
        if diff > TOL_DENSITY {
            pass = false;
            note = format!("ratio misses its limit by {diff:e}");
        }
    }

    let mut params = BTreeMap::new();
    params.insert("triples".into(), json!(TRIPLES));
    params.insert("iterations".into(), json!(N));
    params.insert("seed".into(), json!(seed));
    let mut details = BTreeMap::new();
    details.insert("worst_gap".into(), json!(worst));
    details.insert("worst_case".into(), json!(worst_word.clone()));
    let witness = Some(Witness {
        word: Some(worst_word),
        residual: Some(worst),
        note,
    });
    finish("density", model.level(), pass, params, details, witness)
}

/// Closed-form sum of squares: the elimination formula agrees with the
/// direct evaluation and does not depend on which corner is eliminated.
/// The direct reference computes pullbacks by cancelling O(1) mean parts,
/// so its accuracy degrades like machine epsilon over the plane norm on
/// deep words; the agreement tolerance widens accordingly, while the
/// corner-independence stays at fixed precision.
pub fn check_sum_formula(model: &EnergyModel, seed: u64) -> VerificationReport {
    const WORDS: usize = 1000;
    let mut rng = check_rng(seed, "sumsq");
    let nsym = model.num_symbols();
    let mut pass = true;
    let mut worst_diff = 0.0f64;
    let mut worst_spread = 0.0f64;
    let mut worst_word = String::new();
    let mut note = String::new();

    for _ in 0..WORDS {
        let w = random_word(&mut rng, nsym, 12);
        let direct = model.b_coeffs(&w).expect("valid word").sum_sq();
        let vals: Vec<f64> = (0..3)
            .map(|k| model.sum_b_squared_formula(&w, k).expect("valid word"))
            .collect();
        let sigma1 = op_norm2(&model.tilde_matrix(&w).expect("valid word"));
        let tol_direct = TOL_FORMULA.max(100.0 * f64::EPSILON / sigma1);
        let diff = (vals[0] - direct).abs();
        let spread = vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            - vals.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if diff > worst_diff {
            worst_diff = diff;
            worst_word = word_label(w.symbols());
        }
        if spread > worst_spread {
            worst_spread = spread;
        }
        if diff > tol_direct {
            pass = false;
            note = format!("formula misses the direct value by {diff:e}");
        }
        if spread > TOL_FORMULA_SPREAD {
            pass = false;
            note = format!("corner choices disagree by {spread:e}");
        }
    }

    let mut params = BTreeMap::new();
    params.insert("words".into(), json!(WORDS));
    params.insert("seed".into(), json!(seed));
    let mut details = BTreeMap::new();
    details.insert("worst_diff".into(), json!(worst_diff));
    details.insert("worst_spread".into(), json!(worst_spread));
    let witness = Some(Witness {
        word: Some(worst_word),
        residual: Some(worst_diff),
        note,
    });
    finish("sumsq", model.level(), pass, params, details, witness)
}

/// Runs every check that applies to the model's level, in a fixed order.
/// The skewness identity is specific to level 2 and is skipped elsewhere.
pub fn run_all(model: &EnergyModel, p: &VerifyParams) -> Result<Vec<VerificationReport>> {
    let mut out = vec![
        check_boundary_kernel(model),
        check_corner_eigensystem(model),
        check_power_limit(model, p.seed),
    ];
    if model.level() == 2 {
        out.push(check_skew_identity(model, p.depth)?);
    }
    out.push(check_disk_bounds(model, p.depth)?);
    out.push(check_irreducibility_witness(model));
    out.push(check_det_ratio_decay(model, p.samples, p.length, p.seed)?);
    out.push(check_density_limit(model, p.seed));
    out.push(check_sum_formula(model, p.seed));
    Ok(out)
}

/// Dispatches one named check, or all of them.
pub fn run_check(
    model: &EnergyModel,
    name: &str,
    p: &VerifyParams,
) -> Result<Vec<VerificationReport>> {
    match name {
        "all" => run_all(model, p),
        "operator" => Ok(vec![check_boundary_kernel(model)]),
        "lemmaA" => Ok(vec![check_corner_eigensystem(model)]),
        "powerlimit" => Ok(vec![check_power_limit(model, p.seed)]),
        "thmB" => Ok(vec![check_skew_identity(model, p.depth)?]),
        "bhs1" => Ok(vec![check_disk_bounds(model, p.depth)?]),
        "irr" => Ok(vec![check_irreducibility_witness(model)]),
        "detratio" => Ok(vec![check_det_ratio_decay(
            model, p.samples, p.length, p.seed,
        )?]),
        "density" => Ok(vec![check_density_limit(model, p.seed)]),
        "sumsq" => Ok(vec![check_sum_formula(model, p.seed)]),
        other => Err(SgError::InvalidArgument(format!(
            "unknown check {other}; expected all or one of {}",
            CHECK_TOKENS.join("|")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::det_ratio;

    fn model2() -> EnergyModel {
        EnergyModel::build_exact(2).unwrap()
    }

    fn small_params() -> VerifyParams {
        VerifyParams {
            depth: 4,
            seed: 7,
            samples: 40,
            length: 30,
        }
    }

    #[test]
    fn run_all_reports_on_the_level2_model() {
        let model = model2();
        let reports = run_all(&model, &small_params()).unwrap();
        assert_eq!(reports.len(), 9);
        let names: Vec<&str> = reports.iter().map(|r| r.check.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "operator",
                "lemmaA",
                "powerlimit",
                "thmB",
                "bhs1",
                "irr",
                "detratio",
                "density",
                "sumsq"
            ]
        );
        for r in &reports {
            if r.check == "detratio" {
                // The strict per-sample fall is not guaranteed; with this
                // seed a window rises, and the report must say so while the
                // median still collapses.
                assert!(!r.passed());
                let note = &r.witness.as_ref().unwrap().note;
                assert!(note.contains("fails to fall"), "{note}");
                let decay = r.details.get("median_decay").unwrap().as_f64().unwrap();
                assert!(decay < 1e-3);
                let rises = r.details.get("rise_windows").unwrap().as_u64().unwrap();
                assert!(rises > 0);
            } else {
                assert!(r.passed(), "{} failed: {:?}", r.check, r.witness);
                assert!(r.witness.is_none());
            }
        }
    }

    #[test]
    fn eigensystem_details_show_the_known_spectrum() {
        let model = model2();
        let r = check_corner_eigensystem(&model);
        assert!(r.passed());
        let eig = r.details.get("eigenvalues_1").unwrap().as_array().unwrap();
        let vals: Vec<f64> = eig.iter().map(|v| v.as_f64().unwrap()).collect();
        assert!((vals[0] - 1.0).abs() < 1e-15);
        assert!((vals[1] - 0.6).abs() < 1e-12);
        assert!((vals[2] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn skew_identity_rejects_other_levels() {
        let model = EnergyModel::build_exact(3).unwrap();
        match check_skew_identity(&model, 3) {
            Err(SgError::UnsupportedStructure(3)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn skew_identity_reports_the_frozen_ratio() {
        let model = model2();
        let r = check_skew_identity(&model, 3).unwrap();
        assert!(r.passed());
        let spot = r
            .details
            .get("nu_ratio_11_over_1")
            .unwrap()
            .as_f64()
            .unwrap();
        assert!((spot - 41.0 / 75.0).abs() < 1e-12);
    }

    #[test]
    fn disk_bounds_report_the_depth_one_supremum() {
        let model = model2();
        let r = check_disk_bounds(&model, 5).unwrap();
        assert!(r.passed());
        let sups = r.details.get("sup_by_depth").unwrap().as_array().unwrap();
        assert_eq!(sups.len(), 6);
        assert!((sups[1].as_f64().unwrap() - 8.0 / 75.0).abs() < 1e-12);
        let margin = r
            .details
            .get("margin_to_one_sixth")
            .unwrap()
            .as_f64()
            .unwrap();
        assert!(margin > 0.0);
    }

    #[test]
    fn det_ratio_medians_collapse() {
        let model = model2();
        let r = check_det_ratio_decay(&model, 60, 40, 11).unwrap();
        let decay = r.details.get("median_decay").unwrap().as_f64().unwrap();
        assert!(decay < 1e-3);
        // Roughly a tenth of the ten-letter windows rise, so a run of this
        // size reports the strictness violation rather than passing.
        assert!(!r.passed());
        let windows = r.details.get("windows").unwrap().as_u64().unwrap();
        let rises = r.details.get("rise_windows").unwrap().as_u64().unwrap();
        assert_eq!(windows, 180);
        assert!(rises >= 1 && rises < windows / 2, "rises = {rises}");
        // Single-map powers follow the closed form (1/3)^(2n).
        for n in 1..=6 {
            let w = Word(vec![0u16; n]);
            let bt = model.tilde_matrix(&w).unwrap();
            let expected = (1.0f64 / 3.0).powi(2 * n as i32);
            assert!((det_ratio(&bt) - expected).abs() < 1e-12 * expected.max(1.0));
        }
    }

    #[test]
    fn det_ratio_strictness_can_hold_on_small_runs() {
        // Seed chosen so every window falls; exercises the passing branch.
        let model = model2();
        let mut passed_once = false;
        for seed in 0..40u64 {
            let r = check_det_ratio_decay(&model, 4, 20, seed).unwrap();
            if r.passed() {
                assert!(r.witness.is_none());
                passed_once = true;
                break;
            }
        }
        assert!(passed_once, "no small run passed strictly");
    }

    #[test]
    fn det_ratio_decay_holds_under_the_energy_measure_too() {
        let model = model2();
        let r = check_det_ratio_decay_with(&model, 50, 40, 3, WordMeasure::NuWeighted).unwrap();
        let decay = r.details.get("median_decay").unwrap().as_f64().unwrap();
        assert!(decay < 1e-3);
        assert_eq!(r.params.get("measure").unwrap().as_str().unwrap(), "nu");
    }

    #[test]
    fn checks_are_deterministic_given_the_seed() {
        let model = model2();
        let a = check_density_limit(&model, 99);
        let b = check_density_limit(&model, 99);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = check_sum_formula(&model, 5);
        let d = check_sum_formula(&model, 5);
        assert_eq!(
            serde_json::to_string(&c).unwrap(),
            serde_json::to_string(&d).unwrap()
        );
    }

    #[test]
    fn unknown_check_name_is_an_argument_error() {
        let model = model2();
        let err = run_check(&model, "nope", &small_params()).unwrap_err();
        match err {
            SgError::InvalidArgument(msg) => assert!(msg.contains("unknown check")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn run_all_skips_the_level2_identity_elsewhere() {
        let model = EnergyModel::build_exact(3).unwrap();
        let reports = run_all(&model, &small_params()).unwrap();
        assert_eq!(reports.len(), 8);
        assert!(reports.iter().all(|r| r.check != "thmB"));
        for r in &reports {
            if r.check == "detratio" {
                let decay = r.details.get("median_decay").unwrap().as_f64().unwrap();
                assert!(decay < 1e-3);
            } else {
                assert!(r.passed(), "{} failed at level 3: {:?}", r.check, r.witness);
            }
        }
    }

    #[test]
    fn structure_checks_pass_on_the_float_backend() {
        let model = EnergyModel::build_float(4).unwrap();
        assert!(check_boundary_kernel(&model).passed());
        assert!(check_corner_eigensystem(&model).passed());
    }

    #[test]
    fn reports_serialize_with_stable_fields() {
        let model = model2();
        let r = check_boundary_kernel(&model);
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"check\":\"operator\""));
        assert!(text.contains("\"status\":\"pass\""));
        assert!(!text.contains("witness"));
    }
}
