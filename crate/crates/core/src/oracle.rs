//! Exhaustive expansion oracles for small graphs.
//!
//! Both oracles enumerate every nonempty subset `A` with `|A| ≤ ⌊n/2⌋` as a
//! bitmask, so the vertex count is capped at [`MAX_ORACLE_VERTICES`].
//! Ratios are exact rationals; the minimiser is the subset with the smallest
//! ratio, then the smallest size, then the lexicographically smallest sorted
//! vertex list.

use std::cmp::Ordering;

use num_rational::Ratio;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::spectral;

pub const MAX_ORACLE_VERTICES: usize = 24;

/// Slack used when comparing a brute-force value against a spectral bound.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpansionMode {
    /// `|∂out(A)|`: vertices outside `A` adjacent to `A`.
    Vertex,
    /// `|∂A|`: edges with exactly one end in `A`.
    Edge,
}

/// Minimising subset for an expansion ratio.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionWitness {
    pub mode: ExpansionMode,
    pub subset: Vec<usize>,
    pub boundary_size: usize,
}

impl ExpansionWitness {
    /// Exact `boundary_size / |subset|`.
    pub fn ratio(&self) -> Ratio<u64> {
        Ratio::new(self.boundary_size as u64, self.subset.len() as u64)
    }

    pub fn ratio_f64(&self) -> f64 {
        self.boundary_size as f64 / self.subset.len() as f64
    }
}

impl Serialize for ExpansionWitness {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View<'a> {
            mode: ExpansionMode,
            ratio: f64,
            ratio_exact: [u64; 2],
            boundary_size: usize,
            subset: &'a [usize],
        }
        let r = self.ratio();
        View {
            mode: self.mode,
            ratio: self.ratio_f64(),
            ratio_exact: [*r.numer(), *r.denom()],
            boundary_size: self.boundary_size,
            subset: &self.subset,
        }
        .serialize(s)
    }
}

fn neighbor_masks(g: &Graph) -> Result<Vec<u32>> {
    let n = g.n();
    if n == 0 || n > MAX_ORACLE_VERTICES {
        return Err(Error::OracleSize {
            n,
            max: MAX_ORACLE_VERTICES,
        });
    }
    if n < 2 {
        return Err(Error::NoAdmissibleSubset(n));
    }
    Ok((0..n)
        .map(|v| g.neighbors(v).iter().fold(0u32, |m, &u| m | (1 << u)))
        .collect())
}

fn mask_to_subset(mask: u32) -> Vec<usize> {
    (0..32).filter(|b| mask & (1 << b) != 0).collect()
}

fn boundary_of_mask(nbr: &[u32], mask: u32, mode: ExpansionMode) -> usize {
    let outside = !mask;
    let mut rest = mask;
    match mode {
        ExpansionMode::Vertex => {
            let mut reach = 0u32;
            while rest != 0 {
                let v = rest.trailing_zeros() as usize;
                reach |= nbr[v];
                rest &= rest - 1;
            }
            (reach & outside).count_ones() as usize
        }
        ExpansionMode::Edge => {
            let mut count = 0;
            while rest != 0 {
                let v = rest.trailing_zeros() as usize;
                count += (nbr[v] & outside).count_ones() as usize;
                rest &= rest - 1;
            }
            count
        }
    }
}

/// Orders `(boundary, mask)` candidates: ratio, then size, then lexicographic
/// order of the sorted vertex lists.
fn compare_candidates(a: (usize, u32), b: (usize, u32)) -> Ordering {
    let (ba, ma) = a;
    let (bb, mb) = b;
    let (sa, sb) = (ma.count_ones() as usize, mb.count_ones() as usize);
    (ba * sb)
        .cmp(&(bb * sa))
        .then(sa.cmp(&sb))
        .then_with(|| {
            // The set holding the smallest element of the symmetric difference
            // is lexicographically smaller.
            let diff = ma ^ mb;
            if diff == 0 {
                Ordering::Equal
            } else if ma & (diff & diff.wrapping_neg()) != 0 {
                Ordering::Less
            } else {
                Ordering::Greater
            }
        })
}

fn minimise(g: &Graph, mode: ExpansionMode) -> Result<ExpansionWitness> {
    let nbr = neighbor_masks(g)?;
    let n = g.n();
    let half = n / 2;
    let mut best: Option<(usize, u32)> = None;
    for mask in 1u32..(1u32 << n) {
        if mask.count_ones() as usize > half {
            continue;
        }
        let candidate = (boundary_of_mask(&nbr, mask, mode), mask);
        if best.is_none_or(|b| compare_candidates(candidate, b) == Ordering::Less) {
            best = Some(candidate);
        }
    }
    let (boundary_size, mask) = best.expect("n >= 2 admits a singleton subset");
    Ok(ExpansionWitness {
        mode,
        subset: mask_to_subset(mask),
        boundary_size,
    })
}

/// Expander constant `c = min |∂out(A)| / |A|` over `0 < |A| ≤ n/2`.
/// Disconnected graphs give ratio 0.
pub fn vertex_expansion(g: &Graph) -> Result<ExpansionWitness> {
    minimise(g, ExpansionMode::Vertex)
}

/// Edge expansion `h(G) = min |∂A| / |A|` over `0 < |A| ≤ n/2`.
pub fn edge_expansion(g: &Graph) -> Result<ExpansionWitness> {
    minimise(g, ExpansionMode::Edge)
}

/// `|∂out(A)|` for an explicit subset.
pub fn vertex_boundary(g: &Graph, subset: &[usize]) -> usize {
    let mut inside = vec![false; g.n()];
    subset.iter().for_each(|&v| inside[v] = true);
    let mut hit = vec![false; g.n()];
    for &v in subset {
        for &u in g.neighbors(v) {
            if !inside[u] {
                hit[u] = true;
            }
        }
    }
    hit.iter().filter(|&&h| h).count()
}

/// `|∂A|` for an explicit subset.
pub fn edge_boundary(g: &Graph, subset: &[usize]) -> usize {
    let mut inside = vec![false; g.n()];
    subset.iter().for_each(|&v| inside[v] = true);
    subset
        .iter()
        .map(|&v| g.neighbors(v).iter().filter(|&&u| !inside[u]).count())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundStatus {
    Pass,
    /// Violation of the vertex-boundary spectral bound on a bipartite graph,
    /// where the bound is known not to hold as stated.
    KnownDiscrepancy,
    Unexpected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiameterCheck<T> {
    pub bound: T,
    pub diameter: usize,
    pub status: BoundStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VertexExpansionCheck<T> {
    /// `(k − λ₂) / 2`.
    pub bound: T,
    pub expansion: f64,
    pub witness: ExpansionWitness,
    pub status: BoundStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeExpansionCheck<T> {
    pub lower: T,
    pub upper: T,
    pub expansion: f64,
    pub witness: ExpansionWitness,
    pub status: BoundStatus,
}

/// Each spectral bound next to its brute-force or BFS ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport<T> {
    pub n: usize,
    pub k: usize,
    pub is_bipartite: bool,
    pub lambda_nontrivial: Option<T>,
    pub lambda_2: T,
    pub chung: DiameterCheck<T>,
    pub vertex_expansion: VertexExpansionCheck<T>,
    pub dodziuk: EdgeExpansionCheck<T>,
}

impl<T> BoundReport<T> {
    pub fn has_unexpected(&self) -> bool {
        [self.chung.status, self.vertex_expansion.status, self.dodziuk.status].contains(&BoundStatus::Unexpected)
    }
}

/// Checks the diameter bound, the vertex-expansion constant `(k − λ₂)/2`
/// and the Dodziuk interval against exact values on a connected k-regular
/// graph with at most [`MAX_ORACLE_VERTICES`] vertices.
///
/// When every eigenvalue is trivial (`K₂`), `λ(G)` is taken as 0.
pub fn verify_bounds<T: Scalar>(g: &Graph, tolerance: T) -> Result<BoundReport<T>> {
    if g.n() == 0 || g.n() > MAX_ORACLE_VERTICES {
        return Err(Error::OracleSize {
            n: g.n(),
            max: MAX_ORACLE_VERTICES,
        });
    }
    let spectrum = spectral::analyze(g, tolerance)?;
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let k = spectrum.k;
    let lambda = spectrum.lambda_nontrivial.unwrap_or(T::zero());
    let slack = T::of(BOUND_SLACK);

    let diameter = g.bfs_diameter().finite().expect("connected");
    let chung_bound = spectral::chung_diameter_bound(g.n(), k, lambda, spectrum.is_bipartite)?;
    let chung_status = if T::of_usize(diameter) <= chung_bound + slack {
        BoundStatus::Pass
    } else {
        BoundStatus::Unexpected
    };

    let vertex = vertex_expansion(g)?;
    let vertex_bound = spectral::expander_constant_lower_bound(k, spectrum.lambda_2);
    let vertex_status = if T::of(vertex.ratio_f64()) >= vertex_bound - slack {
        BoundStatus::Pass
    } else if spectrum.is_bipartite {
        BoundStatus::KnownDiscrepancy
    } else {
        BoundStatus::Unexpected
    };

    let edge = edge_expansion(g)?;
    let (lower, upper) = spectral::dodziuk_bounds(k, lambda);
    let h = T::of(edge.ratio_f64());
    let dodziuk_status = if lower - slack <= h && h <= upper + slack {
        BoundStatus::Pass
    } else {
        BoundStatus::Unexpected
    };

    Ok(BoundReport {
        n: g.n(),
        k,
        is_bipartite: spectrum.is_bipartite,
        lambda_nontrivial: spectrum.lambda_nontrivial,
        lambda_2: spectrum.lambda_2,
        chung: DiameterCheck {
            bound: chung_bound,
            diameter,
            status: chung_status,
        },
        vertex_expansion: VertexExpansionCheck {
            bound: vertex_bound,
            expansion: vertex.ratio_f64(),
            witness: vertex,
            status: vertex_status,
        },
        dodziuk: EdgeExpansionCheck {
            lower,
            upper,
            expansion: edge.ratio_f64(),
            witness: edge,
            status: dodziuk_status,
        },
    })
}
