//! Combinatorics of the level-1 subdivision of SG_l.
//!
//! Points live on the integer barycentric lattice of an equilateral triangle
//! with corners p1, p2, p3: the point (a, b) with a + b <= l sits at
//! p1 + (a/l)(p2 - p1) + (b/l)(p3 - p1). The l(l+1)/2 upward cells are the
//! contraction images of the whole triangle; the cell anchored at (a, b)
//! (valid when a + b <= l - 1) has corners (a, b), (a+1, b), (a, b+1), which
//! are the images of p1, p2, p3 under that contraction.

use std::collections::HashMap;

use crate::error::{Result, SgError};

/// Lattice point of the level-1 vertex set V1, in units of 1/l.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BarycentricPoint {
    pub a: u32,
    pub b: u32,
}

/// Anchor (lower-left corner) of an upward cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellAnchor {
    pub a: u32,
    pub b: u32,
}

/// Cell/vertex incidence data of the level-1 subdivision.
///
/// `cells` is in symbol order: the three corner cells first, numbered so that
/// contraction i fixes p_i, then the remaining anchors sorted by (b, a).
/// `v1_points` keeps the boundary V0 = {p1, p2, p3} at indices 0, 1, 2.
#[derive(Debug, Clone)]
pub struct SelfSimilarStructure {
    pub level: u32,
    pub cells: Vec<CellAnchor>,
    pub v1_points: Vec<BarycentricPoint>,
    /// Indices of p1, p2, p3 in `v1_points` (always [0, 1, 2]).
    pub v0: [usize; 3],
    /// Per cell, the `v1_points` indices of the images of p1, p2, p3.
    pub corner_map: Vec<[usize; 3]>,
    point_index: HashMap<(u32, u32), usize>,
}

/// One element of the dihedral symmetry group of the triangle, as it acts on
/// symbols (cells) and on the polar angle of coefficient triples.
///
/// The angle map is theta' = theta_sign * theta + theta_sixths * pi/3, taken
/// mod 2*pi. Rotations carry even `theta_sixths`, reflections odd.
#[derive(Debug, Clone)]
pub struct SymmetryElement {
    /// Image of each symbol (0-based).
    pub cell_perm: Vec<u16>,
    /// Image of each corner index: corner_perm[i] is where p_{i+1} goes.
    pub corner_perm: [usize; 3],
    pub theta_sign: i8,
    pub theta_sixths: u8,
}

impl SelfSimilarStructure {
    /// Builds the structure for a given subdivision level (l >= 2).
    pub fn build(level: u32) -> Result<Self> {
        if level < 2 {
            return Err(SgError::LevelTooSmall(level));
        }
        let l = level;

        // Corner cells first (cell i fixes p_i), then (b, a)-lexicographic.
        let corner_anchors = [
            CellAnchor { a: 0, b: 0 },
            CellAnchor { a: l - 1, b: 0 },
            CellAnchor { a: 0, b: l - 1 },
        ];
        let mut rest: Vec<CellAnchor> = Vec::new();
        for b in 0..l {
            for a in 0..l - b {
                let c = CellAnchor { a, b };
                if !corner_anchors.contains(&c) {
                    rest.push(c);
                }
            }
        }
        rest.sort_by_key(|c| (c.b, c.a));
        let mut cells = corner_anchors.to_vec();
        cells.extend(rest);

        // V0 first, then the remaining lattice points by (b, a).
        let v0_points = [
            BarycentricPoint { a: 0, b: 0 },
            BarycentricPoint { a: l, b: 0 },
            BarycentricPoint { a: 0, b: l },
        ];
        let mut others: Vec<BarycentricPoint> = Vec::new();
        for b in 0..=l {
            for a in 0..=l - b {
                let p = BarycentricPoint { a, b };
                if !v0_points.contains(&p) {
                    others.push(p);
                }
            }
        }
        others.sort_by_key(|p| (p.b, p.a));
        let mut v1_points = v0_points.to_vec();
        v1_points.extend(others);

        let point_index: HashMap<(u32, u32), usize> = v1_points
            .iter()
            .enumerate()
            .map(|(i, p)| ((p.a, p.b), i))
            .collect();

        let corner_map = cells
            .iter()
            .map(|c| {
                [
                    point_index[&(c.a, c.b)],
                    point_index[&(c.a + 1, c.b)],
                    point_index[&(c.a, c.b + 1)],
                ]
            })
            .collect();

        Ok(SelfSimilarStructure {
            level,
            cells,
            v1_points,
            v0: [0, 1, 2],
            corner_map,
            point_index,
        })
    }

    pub fn num_symbols(&self) -> usize {
        self.cells.len()
    }

    pub fn num_points(&self) -> usize {
        self.v1_points.len()
    }

    pub fn point_index(&self, p: BarycentricPoint) -> Option<usize> {
        self.point_index.get(&(p.a, p.b)).copied()
    }

    /// Indices of the non-boundary points of V1.
    pub fn interior_indices(&self) -> Vec<usize> {
        (3..self.num_points()).collect()
    }

    /// Cells (symbol indices) incident to the given point index.
    pub fn cells_containing(&self, point: usize) -> Vec<usize> {
        self.corner_map
            .iter()
            .enumerate()
            .filter(|(_, m)| m.contains(&point))
            .map(|(i, _)| i)
            .collect()
    }

    fn cell_symbol(&self, c: CellAnchor) -> u16 {
        self.cells
            .iter()
            .position(|&x| x == c)
            .expect("cell in range") as u16
    }

    /// The six triangle symmetries with their symbol permutations and angle
    /// actions. Relabeling a word by the rotation p1 -> p2 -> p3 moves its
    /// angle by -2*pi/3; relabeling by the transposition p2 <-> p3 reflects
    /// the angle about the -pi/6 axis.
    pub fn symmetry_elements(&self) -> Vec<SymmetryElement> {
        let l = self.level;
        let rot = |c: CellAnchor| CellAnchor {
            a: l - 1 - c.a - c.b,
            b: c.a,
        };
        let swap = |c: CellAnchor| CellAnchor { a: c.b, b: c.a };

        // (cell map, corner permutation, sign, sixths): tau applied after rho^k.
        let compose = |k: u32, tau: bool| {
            let perm: Vec<u16> = self
                .cells
                .iter()
                .map(|&c| {
                    let mut x = c;
                    for _ in 0..k {
                        x = rot(x);
                    }
                    if tau {
                        x = swap(x);
                    }
                    self.cell_symbol(x)
                })
                .collect();
            let mut corner = [0usize, 1, 2];
            for c in corner.iter_mut() {
                for _ in 0..k {
                    *c = (*c + 1) % 3;
                }
                if tau {
                    *c = match *c {
                        1 => 2,
                        2 => 1,
                        other => other,
                    };
                }
            }
            let (sign, sixths) = if tau {
                // theta -> -(theta - k*2pi/3) - pi/3
                (-1i8, ((2 * k + 5) % 6) as u8)
            } else {
                // theta -> theta - k*2pi/3
                (1i8, ((6 - 2 * k) % 6) as u8)
            };
            SymmetryElement {
                cell_perm: perm,
                corner_perm: corner,
                theta_sign: sign,
                theta_sixths: sixths,
            }
        };

        vec![
            compose(0, false),
            compose(1, false),
            compose(2, false),
            compose(0, true),
            compose(1, true),
            compose(2, true),
        ]
    }
}
