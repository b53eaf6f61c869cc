//! Enumeration and sampling of coefficient distributions.
//!
//! Exhaustive depth-m enumeration builds the angular histogram P_m and the
//! radial histogram Q_m under either the uniform word measure or the
//! energy-weighted measure. Monte Carlo paths track the same quantities along
//! random words for convergence studies.
//!
//! Binning convention: bins are half-open [lo, hi) with the last bin closed,
//! so the full range is covered exactly. The angular range is (-pi, pi];
//! a value that rounds to exactly -pi lands in the first bin.
//!
//! When the global bin count is a multiple of 6, angular mass is placed one
//! orbit at a time: theta is evaluated once at the lexicographically smallest
//! word of each symmetry orbit and the other placements are derived by exact
//! integer index transforms. The resulting histogram is invariant under the
//! full dihedral action bin for bin, by construction. A word fixed by a
//! reflection has its angle exactly on a bin edge shared by the two bins the
//! reflection swaps; its weight is split evenly between them.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::energy::{polar, EnergyModel};
use crate::error::{Result, SgError};
use crate::geometry::SymmetryElement;
use crate::mat3::{dot3, matmul2, max_abs2, quad_form3, Mat2, Mat3, Vec3, MAT3_IDENTITY};

/// Refuse enumerations past this many leaves unless explicitly overridden.
pub const DEFAULT_LEAF_CAP: u64 = 2_000_000;
/// Global angular bin count matching the published depth-13 runs.
pub const DEFAULT_THETA_BINS: usize = 6000;
/// Bin count for the folded one-third angular window.
pub const DEFAULT_THIRD_BINS: usize = 2000;
/// Generator recorded in output metadata: one independent 64-bit stream per
/// sample (stream = sample index + 1), all seeded from the run seed.
pub const RNG_DESCRIPTION: &str = "chacha8 with per-sample streams";

/// Upper end of the radial range; all enumerated mass lies strictly inside.
pub fn radius_bound() -> f64 {
    1.0 / 6f64.sqrt()
}

/// Which weight each word carries during enumeration or sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordMeasure {
    /// Every word of a given length gets the same weight.
    Uniform,
    /// Words weighted by the energy measure of their cell.
    NuWeighted,
}

impl WordMeasure {
    pub fn parse(text: &str) -> Result<WordMeasure> {
        match text {
            "uniform" => Ok(WordMeasure::Uniform),
            "nu" => Ok(WordMeasure::NuWeighted),
            other => Err(SgError::InvalidArgument(format!(
                "measure must be uniform or nu, got {other}"
            ))),
        }
    }
}

impl fmt::Display for WordMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WordMeasure::Uniform => write!(f, "uniform"),
            WordMeasure::NuWeighted => write!(f, "nu"),
        }
    }
}

/// Compensated accumulator; keeps depth-13 mass totals well inside 1e-9.
#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}

/// Mass-weighted histogram over [lo, hi], half-open bins, last bin closed.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedHistogram {
    pub lo: f64,
    pub hi: f64,
    pub mass: Vec<f64>,
    /// Weight that fell outside [lo, hi]; stays 0 for all shipped ranges.
    pub out_of_range: f64,
}

impl WeightedHistogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<WeightedHistogram> {
        if bins == 0 {
            return Err(SgError::BadBinCount("positive", bins));
        }
        if !(lo < hi) {
            return Err(SgError::InvalidArgument(format!(
                "histogram range [{lo}, {hi}] is empty"
            )));
        }
        Ok(WeightedHistogram {
            lo,
            hi,
            mass: vec![0.0; bins],
            out_of_range: 0.0,
        })
    }

    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    /// Bin index for a value, or None when it lies outside [lo, hi].
    pub fn bin_index(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x <= self.hi) {
            return None;
        }
        if x == self.hi {
            return Some(self.mass.len() - 1);
        }
        let t = (x - self.lo) / (self.hi - self.lo) * self.mass.len() as f64;
        Some((t as usize).min(self.mass.len() - 1))
    }

    pub fn add(&mut self, x: f64, weight: f64) {
        match self.bin_index(x) {
            Some(i) => self.mass[i] += weight,
            None => self.out_of_range += weight,
        }
    }

    pub fn add_at(&mut self, index: usize, weight: f64) {
        self.mass[index] += weight;
    }

    pub fn edges(&self, index: usize) -> (f64, f64) {
        let width = (self.hi - self.lo) / self.mass.len() as f64;
        (
            self.lo + index as f64 * width,
            self.lo + (index + 1) as f64 * width,
        )
    }

    pub fn total(&self) -> f64 {
        let mut k = Kahan::default();
        for &m in &self.mass {
            k.add(m);
        }
        k.add(self.out_of_range);
        k.value()
    }

    fn merge_from(&mut self, other: &WeightedHistogram) {
        debug_assert_eq!(self.mass.len(), other.mass.len());
        for (a, b) in self.mass.iter_mut().zip(&other.mass) {
            *a += *b;
        }
        self.out_of_range += other.out_of_range;
    }
}

/// Total-variation distance between histograms on the same binning.
pub fn total_variation(a: &WeightedHistogram, b: &WeightedHistogram) -> Result<f64> {
    if a.mass.len() != b.mass.len() || a.lo != b.lo || a.hi != b.hi {
        return Err(SgError::InvalidArgument(
            "total variation needs histograms on identical bins".into(),
        ));
    }
    let mut k = Kahan::default();
    for (x, y) in a.mass.iter().zip(&b.mass) {
        k.add((x - y).abs());
    }
    k.add((a.out_of_range - b.out_of_range).abs());
    Ok(0.5 * k.value())
}

/// Folds a full-circle angular histogram onto (-pi/3, pi/3] by identifying
/// angles that differ by 2pi/3. Bin count must be divisible by 3; index
/// arithmetic keeps the fold exact at bin granularity.
pub fn fold_theta_thirds(global: &WeightedHistogram) -> Result<WeightedHistogram> {
    let b = global.mass.len();
    if !b.is_multiple_of(3) {
        return Err(SgError::BadBinCount(
            "a multiple of 3 for the third-range fold",
            b,
        ));
    }
    let n = b / 3;
    let third = std::f64::consts::PI / 3.0;
    let mut out = WeightedHistogram::new(-third, third, n)?;
    for (j, &m) in global.mass.iter().enumerate() {
        out.mass[j % n] += m;
    }
    out.out_of_range = global.out_of_range;
    Ok(out)
}

/// Bin of an angle in (-pi, pi] on a half-open equal-width grid.
fn theta_bin(bins: usize, theta: f64) -> usize {
    let t = (theta + std::f64::consts::PI) / (2.0 * std::f64::consts::PI) * bins as f64;
    (t.max(0.0) as usize).min(bins - 1)
}

/// Image of a bin index under one dihedral element. Rotations shift by a
/// sixth of the circle per step; reflections reverse orientation, which maps
/// the half-open bin [i, i+1) onto the half-open bin ending where it began.
fn transform_bin(bins: usize, g: &SymmetryElement, index: usize) -> usize {
    let shift = g.theta_sixths as usize * (bins / 6);
    if g.theta_sign > 0 {
        (index + shift) % bins
    } else {
        (shift + bins - 1 - index) % bins
    }
}

/// Number of symmetries fixing the word; the orbit size is 6 / stabilizer.
fn stabilizer_size(elements: &[SymmetryElement], word: &[u16]) -> usize {
    elements
        .iter()
        .filter(|g| word.iter().all(|&s| g.cell_perm[s as usize] == s))
        .count()
}

/// True when no symmetry sends the word to a lexicographically smaller one.
fn is_orbit_canonical(elements: &[SymmetryElement], word: &[u16]) -> bool {
    'outer: for g in &elements[1..] {
        for &s in word {
            let m = g.cell_perm[s as usize];
            if m < s {
                return false;
            }
            if m > s {
                continue 'outer;
            }
        }
    }
    true
}

fn leaf_budget(symbols: usize, depth: u32, cap: u64) -> Result<()> {
    let leaves = (symbols as f64).powi(depth as i32);
    if leaves > cap as f64 {
        return Err(SgError::DepthOverCap {
            len: depth,
            symbols,
            leaves,
            cap,
        });
    }
    Ok(())
}

/// Depth-first walk over the word tree below a fixed prefix, visiting every
/// node (prefix included) in preorder with symbols ascending. The running
/// matrix products live on an explicit stack, one multiply per node.
fn walk_subtree<F>(
    model: &EnergyModel,
    depth: usize,
    prefix: &[u16],
    prefix_matrix: Mat3,
    visit: &mut F,
) -> Result<()>
where
    F: FnMut(&[u16], &Mat3) -> Result<()>,
{
    let nsym = model.num_symbols() as u16;
    let mut word: Vec<u16> = prefix.to_vec();
    let mut mats: Vec<Mat3> = vec![prefix_matrix];
    let mut next: Vec<u16> = vec![0];
    visit(&word, mats.last().expect("nonempty"))?;
    loop {
        if word.len() < depth {
            let slot = next.last_mut().expect("nonempty");
            if *slot < nsym {
                let s = *slot;
                *slot += 1;
                let m = model.extend_matrix(mats.last().expect("nonempty"), s);
                word.push(s);
                mats.push(m);
                next.push(0);
                visit(&word, mats.last().expect("nonempty"))?;
                continue;
            }
        }
        if word.len() == prefix.len() {
            return Ok(());
        }
        word.pop();
        mats.pop();
        next.pop();
    }
}

/// Sequential preorder walk over all words of length <= depth.
pub fn walk_nodes<F>(model: &EnergyModel, depth: u32, visit: &mut F) -> Result<()>
where
    F: FnMut(&[u16], &Mat3) -> Result<()>,
{
    walk_nodes_capped(model, depth, DEFAULT_LEAF_CAP, visit)
}

pub fn walk_nodes_capped<F>(model: &EnergyModel, depth: u32, cap: u64, visit: &mut F) -> Result<()>
where
    F: FnMut(&[u16], &Mat3) -> Result<()>,
{
    leaf_budget(model.num_symbols(), depth, cap)?;
    walk_subtree(model, depth as usize, &[], MAT3_IDENTITY, visit)
}

/// One streamed leaf of an enumeration.
#[derive(Debug, Clone)]
pub struct LeafRow {
    pub word: String,
    pub b: [f64; 3],
    pub radius: f64,
    pub theta: f64,
    pub weight: f64,
}

pub(crate) fn word_label(word: &[u16]) -> String {
    if word.is_empty() {
        return "e".into();
    }
    let parts: Vec<String> = word.iter().map(|&s| (s + 1).to_string()).collect();
    parts.join("-")
}

/// Streams every depth-m leaf in lexicographic order with its coefficient
/// readouts and weight. Sequential by design; callers wanting aggregate
/// statistics should use `collect_distribution` instead.
pub fn enumerate_rows<F>(
    model: &EnergyModel,
    depth: u32,
    measure: WordMeasure,
    max_leaves: u64,
    sink: &mut F,
) -> Result<()>
where
    F: FnMut(LeafRow) -> Result<()>,
{
    let nsym = model.num_symbols();
    let uniform_leaf = (1.0 / nsym as f64).powi(depth as i32);
    walk_nodes_capped(model, depth, max_leaves, &mut |word, m| {
        if word.len() != depth as usize {
            return Ok(());
        }
        let bv = model.b_coeffs_with(m)?;
        let p = polar(&bv);
        let weight = match measure {
            WordMeasure::Uniform => uniform_leaf,
            WordMeasure::NuWeighted => model.nu_with(m, word.len()),
        };
        sink(LeafRow {
            word: word_label(word),
            b: bv.b,
            radius: p.radius,
            theta: p.theta,
            weight,
        })
    })
}

/// What to build during an exhaustive pass.
#[derive(Debug, Clone, Copy)]
pub struct EnumerationPlan {
    pub depth: u32,
    pub measure: WordMeasure,
    /// Global angular bin count over (-pi, pi], or None to skip P_m.
    pub theta_bins: Option<usize>,
    /// Radial bin count over [0, 1/sqrt(6)], or None to skip Q_m.
    pub radius_bins: Option<usize>,
    pub max_leaves: u64,
}

impl EnumerationPlan {
    pub fn summary_only(depth: u32, measure: WordMeasure) -> EnumerationPlan {
        EnumerationPlan {
            depth,
            measure,
            theta_bins: None,
            radius_bins: None,
            max_leaves: DEFAULT_LEAF_CAP,
        }
    }
}

/// Aggregates from one exhaustive enumeration.
#[derive(Debug, Clone)]
pub struct DistributionSummary {
    pub depth: u32,
    pub measure: WordMeasure,
    pub leaves: u64,
    /// Angular histogram on the full circle; fold for the third-range view.
    pub theta: Option<WeightedHistogram>,
    pub radius: Option<WeightedHistogram>,
    /// Total weight seen at each word length 0..=depth.
    pub per_depth_mass: Vec<f64>,
    /// Weighted mean leaf radius.
    pub mean_radius: f64,
    /// Largest squared distance from the barycenter, per word length.
    pub sup_deviation_sq_by_depth: Vec<f64>,
    pub max_sum_sq: f64,
    pub min_coefficient: f64,
    /// True when angular mass was placed orbit-exactly (bins divisible by 6).
    pub symmetry_exact: bool,
}

struct TaskAccum {
    theta_mass: Option<Vec<f64>>,
    radius: Option<WeightedHistogram>,
    depth_mass: Vec<Kahan>,
    mean_radius: Kahan,
    sup_dev: Vec<f64>,
    max_sum_sq: f64,
    min_coefficient: f64,
    leaves: u64,
}

impl TaskAccum {
    fn new(plan: &EnumerationPlan, orbit_exact: bool) -> Result<TaskAccum> {
        let radius = match plan.radius_bins {
            Some(bins) => Some(WeightedHistogram::new(0.0, radius_bound(), bins)?),
            None => None,
        };
        let theta_mass = match plan.theta_bins {
            Some(bins) => {
                if orbit_exact && bins % 6 != 0 {
                    return Err(SgError::BadBinCount("a multiple of 6", bins));
                }
                Some(vec![0.0; bins])
            }
            None => None,
        };
        let d = plan.depth as usize;
        Ok(TaskAccum {
            theta_mass,
            radius,
            depth_mass: vec![Kahan::default(); d + 1],
            mean_radius: Kahan::default(),
            sup_dev: vec![0.0; d + 1],
            max_sum_sq: 0.0,
            min_coefficient: f64::INFINITY,
            leaves: 0,
        })
    }

    fn merge_from(&mut self, other: &TaskAccum) {
        if let (Some(a), Some(b)) = (self.theta_mass.as_mut(), other.theta_mass.as_ref()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        if let (Some(a), Some(b)) = (self.radius.as_mut(), other.radius.as_ref()) {
            a.merge_from(b);
        }
        for (a, b) in self.depth_mass.iter_mut().zip(&other.depth_mass) {
            a.add(b.value());
        }
        self.mean_radius.add(other.mean_radius.value());
        for (a, &b) in self.sup_dev.iter_mut().zip(&other.sup_dev) {
            if b > *a {
                *a = b;
            }
        }
        if other.max_sum_sq > self.max_sum_sq {
            self.max_sum_sq = other.max_sum_sq;
        }
        if other.min_coefficient < self.min_coefficient {
            self.min_coefficient = other.min_coefficient;
        }
        self.leaves += other.leaves;
    }
}

struct EnumerationCtx<'a> {
    model: &'a EnergyModel,
    elements: Vec<SymmetryElement>,
    plan: EnumerationPlan,
    orbit_exact: bool,
    uniform_leaf: f64,
}

impl EnumerationCtx<'_> {
    fn node_weight(&self, m: &Mat3, len: usize) -> f64 {
        match self.plan.measure {
            WordMeasure::Uniform => (1.0 / self.model.num_symbols() as f64).powi(len as i32),
            WordMeasure::NuWeighted => self.model.nu_with(m, len),
        }
    }

    fn visit(&self, word: &[u16], m: &Mat3, acc: &mut TaskAccum) -> Result<()> {
        let d = word.len();
        let weight = if d == self.plan.depth as usize && self.plan.measure == WordMeasure::Uniform {
            self.uniform_leaf
        } else {
            self.node_weight(m, d)
        };
        acc.depth_mass[d].add(weight);
        let bv = self.model.b_coeffs_with(m)?;
        let dev = bv.deviation_sq();
        if dev > acc.sup_dev[d] {
            acc.sup_dev[d] = dev;
        }
        let ss = bv.sum_sq();
        if ss > acc.max_sum_sq {
            acc.max_sum_sq = ss;
        }
        for &x in &bv.b {
            if x < acc.min_coefficient {
                acc.min_coefficient = x;
            }
        }
        if d != self.plan.depth as usize {
            return Ok(());
        }
        acc.leaves += 1;
        let radius = dev.sqrt();
        acc.mean_radius.add(weight * radius);
        if let Some(rh) = acc.radius.as_mut() {
            // True radii stay strictly inside the bound; roundoff can push a
            // near-boundary leaf a hair past the top edge, and that mass
            // belongs to the last bin, not out of range.
            rh.add(radius.min(rh.hi), weight);
        }
        if let Some(mass) = acc.theta_mass.as_mut() {
            let bins = mass.len();
            let p = polar(&bv);
            if !self.orbit_exact {
                let theta = if p.at_center { 0.0 } else { p.theta };
                mass[theta_bin(bins, theta)] += weight;
                return Ok(());
            }
            if !is_orbit_canonical(&self.elements, word) {
                return Ok(());
            }
            let stab = stabilizer_size(&self.elements, word);
            if p.at_center {
                // Convention: centered points carry angle 0. Placed once per
                // orbit member, skipping the dihedral transforms an angle
                // would get.
                let images = (self.elements.len() / stab) as f64;
                mass[theta_bin(bins, 0.0)] += weight * images;
                return Ok(());
            }
            let index = theta_bin(bins, p.theta);
            let share = weight / stab as f64;
            for g in &self.elements {
                mass[transform_bin(bins, g, index)] += share;
            }
        }
        Ok(())
    }
}

/// Largest prefix depth whose word count stays a comfortable task count.
fn partition_depth(symbols: usize, depth: u32) -> u32 {
    let mut p = 0u32;
    let mut count = 1u64;
    while p < depth {
        let next = count.saturating_mul(symbols as u64);
        if next > 256 {
            break;
        }
        count = next;
        p += 1;
    }
    p
}

fn prefix_word(symbols: usize, prefix_depth: u32, task: u64) -> Vec<u16> {
    let mut digits = vec![0u16; prefix_depth as usize];
    let mut t = task;
    for slot in digits.iter_mut().rev() {
        *slot = (t % symbols as u64) as u16;
        t /= symbols as u64;
    }
    digits
}

/// Exhaustive enumeration with deterministic parallelism: the tree is cut at
/// a fixed prefix depth independent of the worker count, per-prefix partials
/// are computed in parallel, and the merge folds them in lexicographic
/// order. Results are bit-identical for any thread count.
pub fn collect_distribution(
    model: &EnergyModel,
    plan: &EnumerationPlan,
) -> Result<DistributionSummary> {
    let symbols = model.num_symbols();
    leaf_budget(symbols, plan.depth, plan.max_leaves)?;
    let orbit_exact = plan.theta_bins.map(|b| b % 6 == 0).unwrap_or(false);
    let ctx = EnumerationCtx {
        model,
        elements: model.structure.symmetry_elements(),
        plan: *plan,
        orbit_exact,
        uniform_leaf: (1.0 / symbols as f64).powi(plan.depth as i32),
    };

    let depth = plan.depth as usize;
    let pd = partition_depth(symbols, plan.depth);
    let mut total = TaskAccum::new(plan, orbit_exact)?;

    // Words shorter than the partition depth belong to no task; handle them
    // in one cheap sequential pass.
    if pd > 0 {
        walk_subtree(model, pd as usize - 1, &[], MAT3_IDENTITY, &mut |w, m| {
            ctx.visit(w, m, &mut total)
        })?;
    }

    let tasks = (symbols as u64).pow(pd);
    let partials: Result<Vec<TaskAccum>> = (0..tasks)
        .into_par_iter()
        .map(|t| {
            let prefix = prefix_word(symbols, pd, t);
            let mut m = MAT3_IDENTITY;
            for &s in &prefix {
                m = model.extend_matrix(&m, s);
            }
            let mut acc = TaskAccum::new(&ctx.plan, orbit_exact)?;
            walk_subtree(model, depth, &prefix, m, &mut |w, mm| {
                ctx.visit(w, mm, &mut acc)
            })?;
            Ok(acc)
        })
        .collect();
    for part in partials?.iter() {
        total.merge_from(part);
    }

    let theta = match total.theta_mass {
        Some(mass) => {
            let mut h =
                WeightedHistogram::new(-std::f64::consts::PI, std::f64::consts::PI, mass.len())?;
            h.mass = mass;
            Some(h)
        }
        None => None,
    };
    Ok(DistributionSummary {
        depth: plan.depth,
        measure: plan.measure,
        leaves: total.leaves,
        theta,
        radius: total.radius,
        per_depth_mass: total.depth_mass.iter().map(Kahan::value).collect(),
        mean_radius: total.mean_radius.value(),
        sup_deviation_sq_by_depth: total.sup_dev,
        max_sum_sq: total.max_sum_sq,
        min_coefficient: total.min_coefficient,
        symmetry_exact: orbit_exact,
    })
}

/// Monte Carlo settings; paths are reproducible functions of (seed, index).
#[derive(Debug, Clone, Copy)]
pub struct MonteCarloConfig {
    pub samples: usize,
    pub length: usize,
    pub seed: u64,
    pub measure: WordMeasure,
}

/// Distribution snapshot of |sum b^2 - 1/2| and radius across samples at one
/// path length. Quantiles interpolate linearly between order statistics.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub n: usize,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
    pub radius_q10: f64,
    pub radius_median: f64,
    pub radius_q90: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    } else {
        sorted[n - 1]
    }
}

/// Scale-free path readout. Everything a sample path needs lives in the
/// two-dimensional mean-zero plane: the running product is tracked as its
/// plane restriction and renormalized each step, so no quantity ever under-
/// or overflows, no matter the path length.
struct PathReadout {
    tildes: Vec<Mat2>,
    /// Plane coordinates of the kernel directions u_j.
    qu: [[f64; 2]; 3],
    /// Plane coordinates of the frame vectors x_k.
    qx: [[f64; 2]; 2],
    d: Mat3,
    plane: [Vec3; 2],
}

impl PathReadout {
    fn new(model: &EnergyModel) -> PathReadout {
        let mut qu = [[0.0; 2]; 3];
        for (j, u) in model.u.iter().enumerate() {
            for c in 0..2 {
                qu[j][c] = dot3(&model.plane[c], u);
            }
        }
        let mut qx = [[0.0; 2]; 2];
        for (k, x) in model.frame.iter().enumerate() {
            for c in 0..2 {
                qx[k][c] = dot3(&model.plane[c], x);
            }
        }
        PathReadout {
            tildes: model.symbol_tildes(),
            qu,
            qx,
            d: model.d,
            plane: model.plane,
        }
    }

    /// sum of b^2 for the word whose plane restriction is `bt`, any scale.
    /// The pullbacks satisfy (tQ z_j) = tB (tQ u_j), and the coefficients
    /// are ratios of frame norms, so the normalization drops out.
    fn sum_sq(&self, bt: &Mat2) -> f64 {
        let mut a = [0.0f64; 3];
        for j in 0..3 {
            let t = [
                bt[0][0] * self.qu[j][0] + bt[1][0] * self.qu[j][1],
                bt[0][1] * self.qu[j][0] + bt[1][1] * self.qu[j][1],
            ];
            a[j] = (t[0] * self.qx[0][0] + t[1] * self.qx[0][1]).powi(2)
                + (t[0] * self.qx[1][0] + t[1] * self.qx[1][1]).powi(2);
        }
        let s = a[0] + a[1] + a[2];
        (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]) / (s * s)
    }

    /// Frame energy of the child cell reached by one more symbol, up to the
    /// normalization shared by all children of the same word.
    fn child_weight(&self, bt: &Mat2, s: usize) -> f64 {
        let c = matmul2(&self.tildes[s], bt);
        let mut total = 0.0;
        for k in 0..2 {
            let t = [
                c[0][0] * self.qx[k][0] + c[0][1] * self.qx[k][1],
                c[1][0] * self.qx[k][0] + c[1][1] * self.qx[k][1],
            ];
            let mut v = [0.0f64; 3];
            for (i, x) in v.iter_mut().enumerate() {
                *x = t[0] * self.plane[0][i] + t[1] * self.plane[1][i];
            }
            total += -2.0 * quad_form3(&self.d, &v, &v);
        }
        total
    }

    /// Conditional branch weights are energy ratios, which the shared scale
    /// cancels out of, so sampling never touches raw path weights.
    fn draw_symbol(&self, bt: &Mat2, measure: WordMeasure, rng: &mut ChaCha8Rng) -> usize {
        let nsym = self.tildes.len();
        match measure {
            WordMeasure::Uniform => rng.gen_range(0..nsym),
            WordMeasure::NuWeighted => {
                let mut weights = Vec::with_capacity(nsym);
                let mut totalw = 0.0;
                for s in 0..nsym {
                    let w = self.child_weight(bt, s);
                    weights.push(w);
                    totalw += w;
                }
                let u = rng.gen::<f64>() * totalw;
                let mut cum = 0.0;
                for (s, w) in weights.iter().enumerate() {
                    cum += w;
                    if u < cum {
                        return s;
                    }
                }
                nsym - 1
            }
        }
    }
}

/// Draws one seeded word of the given length under either measure. The
/// nu-weighted branch conditions every letter on the path so far through
/// energy ratios of the running plane product, which is renormalized each
/// step, so arbitrarily long draws stay well scaled.
pub fn sample_word(
    model: &EnergyModel,
    rng: &mut ChaCha8Rng,
    length: usize,
    measure: WordMeasure,
) -> Vec<u16> {
    let readout = PathReadout::new(model);
    let mut bt: Mat2 = [[1.0, 0.0], [0.0, 1.0]];
    let mut out = Vec::with_capacity(length);
    for _ in 0..length {
        let s = readout.draw_symbol(&bt, measure, rng);
        out.push(s as u16);
        bt = matmul2(&readout.tildes[s], &bt);
        let sc = max_abs2(&bt);
        if sc > 0.0 && sc.is_finite() {
            for row in bt.iter_mut() {
                for x in row.iter_mut() {
                    *x /= sc;
                }
            }
        }
    }
    out
}

/// Simulates sample paths and reports per-length quantiles of the distance
/// of sum b^2 from 1/2, plus the radius. Sample i uses RNG stream i+1, so
/// results are independent of scheduling and worker count.
pub fn montecarlo_convergence(
    model: &EnergyModel,
    cfg: &MonteCarloConfig,
) -> Result<Vec<ConvergenceRow>> {
    if cfg.samples == 0 {
        return Err(SgError::InvalidArgument("samples must be positive".into()));
    }
    if cfg.length == 0 {
        return Err(SgError::InvalidArgument("length must be positive".into()));
    }
    let readout = PathReadout::new(model);
    let paths: Vec<Vec<(f64, f64)>> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64 + 1);
            let mut bt: Mat2 = [[1.0, 0.0], [0.0, 1.0]];
            let mut out = Vec::with_capacity(cfg.length);
            for _ in 0..cfg.length {
                let s = readout.draw_symbol(&bt, cfg.measure, &mut rng);
                bt = matmul2(&readout.tildes[s], &bt);
                let scale = max_abs2(&bt);
                if scale > 0.0 && scale.is_finite() {
                    for row in bt.iter_mut() {
                        for x in row.iter_mut() {
                            *x /= scale;
                        }
                    }
                }
                let ss = readout.sum_sq(&bt);
                let dev = (ss - 0.5).abs();
                let radius = (ss - 1.0 / 3.0).max(0.0).sqrt();
                out.push((dev, radius));
            }
            out
        })
        .collect();

    let mut rows = Vec::with_capacity(cfg.length);
    let mut devs = vec![0.0f64; cfg.samples];
    let mut radii = vec![0.0f64; cfg.samples];
    for n in 1..=cfg.length {
        for (i, path) in paths.iter().enumerate() {
            devs[i] = path[n - 1].0;
            radii[i] = path[n - 1].1;
        }
        devs.sort_by(f64::total_cmp);
        radii.sort_by(f64::total_cmp);
        rows.push(ConvergenceRow {
            n,
            q10: quantile(&devs, 0.10),
            median: quantile(&devs, 0.50),
            q90: quantile(&devs, 0.90),
            radius_q10: quantile(&radii, 0.10),
            radius_median: quantile(&radii, 0.50),
            radius_q90: quantile(&radii, 0.90),
        });
    }
    Ok(rows)
}
