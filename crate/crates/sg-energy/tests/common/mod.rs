//! Shared helpers for the integration suites: an independent relaxation
//! solver for harmonic extensions on the level-1 graph. It knows nothing of
//! Schur complements or exact arithmetic; it minimizes the quadratic energy
//! directly by Gauss-Seidel sweeps, so it cross-checks the production
//! pipeline through a disjoint algorithm.

use sg_energy::SelfSimilarStructure;

/// Unit-conductance edges of the level-1 graph: every cell contributes its
/// three corner pairs, and cells meet only at points, so no edge repeats.
pub fn level_one_edges(s: &SelfSimilarStructure) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(3 * s.num_symbols());
    for corners in &s.corner_map {
        edges.push((corners[0], corners[1]));
        edges.push((corners[0], corners[2]));
        edges.push((corners[1], corners[2]));
    }
    edges
}

/// Harmonic extension of boundary values by relaxation: interior points are
/// repeatedly replaced by their neighbor average until a full sweep moves
/// nothing by more than 1e-15.
pub fn relaxation_extension(s: &SelfSimilarStructure, boundary: [f64; 3]) -> Vec<f64> {
    let n = s.num_points();
    let edges = level_one_edges(s);
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(p, q) in &edges {
        adj[p].push(q);
        adj[q].push(p);
    }

    let mean = (boundary[0] + boundary[1] + boundary[2]) / 3.0;
    let mut u = vec![mean; n];
    u[..3].copy_from_slice(&boundary);

    for _ in 0..200_000 {
        let mut moved = 0.0f64;
        for p in 3..n {
            let sum: f64 = adj[p].iter().map(|&q| u[q]).sum();
            let next = sum / adj[p].len() as f64;
            moved = moved.max((next - u[p]).abs());
            u[p] = next;
        }
        if moved < 1e-15 {
            break;
        }
    }
    u
}

/// Energy of level-1 values: sum of squared differences over the edges.
pub fn graph_energy(s: &SelfSimilarStructure, u: &[f64]) -> f64 {
    level_one_edges(s)
        .iter()
        .map(|&(p, q)| (u[p] - u[q]) * (u[p] - u[q]))
        .sum()
}

/// Renormalization factor by direct energy comparison: the harmonic
/// extension of (1,0,0) has boundary energy 2, and its level-1 energy is r
/// times that.
pub fn oracle_r(s: &SelfSimilarStructure) -> f64 {
    let u = relaxation_extension(s, [1.0, 0.0, 0.0]);
    graph_energy(s, &u) / 2.0
}

/// Extension matrix of one cell, column by column: entry (j, k) is the
/// harmonic extension of the k-th unit boundary vector read at the cell's
/// j-th corner image.
pub fn oracle_a_matrix(s: &SelfSimilarStructure, cell: usize) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for k in 0..3 {
        let mut e = [0.0; 3];
        e[k] = 1.0;
        let u = relaxation_extension(s, e);
        for j in 0..3 {
            m[j][k] = u[s.corner_map[cell][j]];
        }
    }
    m
}
