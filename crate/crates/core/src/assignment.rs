//! Minimum-cost bipartite matching between batch features and the particles
//! currently owned by the batch, plus the global bijection bookkeeping.

use crate::error::{Error, Result};
use crate::geometry::hyp_distance_inside;
use crate::packing::ParticleSet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Square matrix of pairwise assignment costs, row-major.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    b: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    /// Validates squareness and finiteness.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let b = rows.len();
        let mut entries = Vec::with_capacity(b * b);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != b {
                return Err(Error::NonSquareCost {
                    rows: b,
                    cols: row.len(),
                    bad_row: i,
                });
            }
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::NonFiniteCost { row: i, col: j });
                }
                entries.push(x);
            }
        }
        Ok(Self { b, entries })
    }

    pub fn size(&self) -> usize {
        self.b
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.b + j]
    }

    /// Σ_i cost[i][π(i)], summed in row order.
    pub fn total(&self, perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(i, &j)| self.at(i, j)).sum()
    }
}

/// Exact minimum-cost assignment via Kuhn–Munkres with dual potentials,
/// O(b³). Among equal-cost optima, returns the lexicographically smallest
/// permutation (row 0's column first, then row 1's, ...).
pub fn hungarian(cost: &CostMatrix) -> Vec<usize> {
    let b = cost.size();
    if b == 0 {
        return Vec::new();
    }
    // Potentials-based shortest augmenting path, 1-indexed internals.
    let mut u = vec![0.0f64; b + 1];
    let mut v = vec![0.0f64; b + 1];
    let mut row_of_col = vec![0usize; b + 1];
    let mut way = vec![0usize; b + 1];
    for i in 1..=b {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; b + 1];
        let mut used = vec![false; b + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=b {
                if !used[j] {
                    let cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=b {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; b];
    for j in 1..=b {
        perm[row_of_col[j] - 1] = j - 1;
    }
    lex_canonicalize(cost, &u, &v, perm)
}

/// Rewrites an optimal matching into the lexicographically smallest one.
///
/// By complementary slackness every optimal assignment uses only tight edges
/// (zero reduced cost under the optimal duals), and any perfect matching of
/// tight edges is optimal. Fix rows in order, trying each row's tight columns
/// ascending and keeping a candidate only if the remaining rows can still be
/// perfectly matched.
fn lex_canonicalize(cost: &CostMatrix, u: &[f64], v: &[f64], perm: Vec<usize>) -> Vec<usize> {
    let b = cost.size();
    let scale = cost.entries.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let eps = 1e-9 * scale;
    let mut tight: Vec<Vec<usize>> = vec![Vec::new(); b];
    let mut degenerate = false;
    for i in 0..b {
        for j in 0..b {
            if (cost.at(i, j) - u[i + 1] - v[j + 1]).abs() <= eps || perm[i] == j {
                tight[i].push(j);
            }
        }
        if tight[i].len() > 1 {
            degenerate = true;
        }
    }
    if !degenerate {
        return perm; // unique optimum: nothing to canonicalize
    }

    let mut col_owner: Vec<Option<usize>> = vec![None; b];
    for (i, &j) in perm.iter().enumerate() {
        col_owner[j] = Some(i);
    }
    let mut fixed_col = vec![false; b];
    let mut row_of: Vec<usize> = perm;

    // Augmenting search over unfixed rows in the tight graph.
    fn augment(
        r: usize,
        tight: &[Vec<usize>],
        fixed_col: &[bool],
        col_owner: &mut [Option<usize>],
        row_of: &mut [usize],
        visited: &mut [bool],
        first_fixable: usize,
    ) -> bool {
        for &j in &tight[r] {
            if fixed_col[j] || visited[j] {
                continue;
            }
            visited[j] = true;
            let displaced = col_owner[j];
            let free = match displaced {
                None => true,
                Some(o) => {
                    o >= first_fixable
                        && augment(o, tight, fixed_col, col_owner, row_of, visited, first_fixable)
                }
            };
            if free {
                col_owner[j] = Some(r);
                row_of[r] = j;
                return true;
            }
        }
        false
    }

    for i in 0..b {
        let current = row_of[i];
        for idx in 0..tight[i].len() {
            let j = tight[i][idx];
            if fixed_col[j] {
                continue;
            }
            if j == current {
                break; // already the best reachable column for this row
            }
            if j > current {
                break; // tight columns are ascending; no improvement past current
            }
            // Try to steal column j: its present owner must re-match among the
            // still-unfixed rows, with row i's old column freed.
            let displaced = col_owner[j];
            col_owner[current] = None;
            col_owner[j] = Some(i);
            row_of[i] = j;
            let ok = match displaced {
                None => true,
                Some(o) => {
                    let mut visited = vec![false; b];
                    visited[j] = true;
                    augment(o, &tight, &fixed_col, &mut col_owner, &mut row_of, &mut visited, i + 1)
                }
            };
            if ok {
                break;
            }
            // revert
            col_owner[j] = displaced;
            col_owner[current] = Some(i);
            row_of[i] = current;
        }
        fixed_col[row_of[i]] = true;
    }
    row_of
}

/// The maintained bijection instance-id → particle-id over the full dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentState {
    particle_of: Vec<usize>,
}

impl AssignmentState {
    /// Seeded random initial bijection.
    pub fn new_random(n: usize, seed: u64) -> Self {
        let mut particle_of: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        particle_of.shuffle(&mut rng);
        Self { particle_of }
    }

    pub fn from_vec(particle_of: Vec<usize>) -> Result<Self> {
        let state = Self { particle_of };
        state.check_bijection()?;
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.particle_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particle_of.is_empty()
    }

    pub fn particle_of(&self, instance: usize) -> usize {
        self.particle_of[instance]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.particle_of
    }

    pub fn check_bijection(&self) -> Result<()> {
        let n = self.particle_of.len();
        let mut seen = vec![false; n];
        for &p in &self.particle_of {
            if p >= n || seen[p] {
                return Err(Error::InvalidSpec(format!(
                    "particle_of is not a bijection over 0..{n}"
                )));
            }
            seen[p] = true;
        }
        Ok(())
    }
}

/// Rewires the assignment for one batch: builds the b×b matrix of
/// hyp_distance(feature_i, particle owned by batch member j), solves it, and
/// remaps exactly the batch members. The incoming assignment is one feasible
/// matching of the same problem, so the batch cost never increases.
pub fn batch_reassign(
    features: &[crate::geometry::BallPoint],
    batch_ids: &[usize],
    state: &mut AssignmentState,
    particles: &ParticleSet,
) -> Result<()> {
    let b = batch_ids.len();
    if features.len() != b {
        return Err(Error::ShapeMismatch {
            context: "batch features vs batch ids",
            expected: b,
            found: features.len(),
        });
    }
    let n = state.len();
    let mut seen = vec![false; n];
    for &id in batch_ids {
        if id >= n || seen[id] {
            return Err(Error::InvalidSpec(format!(
                "batch ids must be distinct instance ids below {n}"
            )));
        }
        seen[id] = true;
    }
    if b <= 1 {
        return Ok(());
    }
    let owned: Vec<usize> = batch_ids.iter().map(|&id| state.particle_of(id)).collect();
    let rows: Vec<Vec<f64>> = features
        .iter()
        .map(|f| {
            owned
                .iter()
                .map(|&p| hyp_distance_inside(f.coords(), particles.positions()[p].coords()))
                .collect()
        })
        .collect();
    let cost = CostMatrix::new(rows)?;
    let perm = hungarian(&cost);
    for (i, &id) in batch_ids.iter().enumerate() {
        state.particle_of[id] = owned[perm[i]];
    }
    Ok(())
}

/// On-disk assignment snapshot: {version, epoch, particle_of}.
#[derive(Debug, Serialize, Deserialize)]
pub struct AssignmentDoc {
    pub version: u32,
    pub epoch: usize,
    pub particle_of: Vec<usize>,
}

pub const ASSIGNMENT_DOC_VERSION: u32 = 1;

impl AssignmentDoc {
    pub fn new(epoch: usize, state: &AssignmentState) -> Self {
        Self {
            version: ASSIGNMENT_DOC_VERSION,
            epoch,
            particle_of: state.as_slice().to_vec(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = serde_json::to_vec_pretty(self)?;
        body.push(b'\n');
        std::fs::write(path, body)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let doc: Self = serde_json::from_slice(&bytes)?;
        if doc.version != ASSIGNMENT_DOC_VERSION {
            return Err(Error::BadDocument {
                path: path.display().to_string(),
                reason: format!("unsupported version {}", doc.version),
            });
        }
        Ok(doc)
    }

    pub fn into_state(self) -> Result<AssignmentState> {
        AssignmentState::from_vec(self.particle_of)
    }
}
