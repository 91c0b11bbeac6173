//! Adjacency spectra of regular graphs and the spectral bounds tying the
//! nontrivial eigenvalues to diameter and expansion.
//!
//! For a connected k-regular graph the adjacency eigenvalues satisfy
//! `k = λ₁ > λ₂ ≥ … ≥ λₙ ≥ −k`, with `λₙ = −k` exactly when the graph is
//! bipartite. Eigenvalues equal to `±k` are *trivial*; the largest magnitude
//! among the others is `λ(G)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;

/// Sweep cap for the cyclic Jacobi solver.
pub const MAX_JACOBI_SWEEPS: usize = 100;

/// Default accuracy / classification tolerance.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Everything the toolkit knows about a regular graph's spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport<T> {
    pub n: usize,
    pub k: usize,
    /// Sorted descending.
    pub eigenvalues: Vec<T>,
    /// `λ(G)`; absent when every eigenvalue is trivial.
    pub lambda_nontrivial: Option<T>,
    pub lambda_2: T,
    pub is_bipartite: bool,
    /// Multiplicity of eigenvalue `k` is one.
    pub is_connected: bool,
    /// Absent when disconnected or `λ(G)` is undefined.
    pub ramanujan: Option<bool>,
    /// Diameter bound; absent when disconnected or `λ(G)` is undefined.
    pub chung_bound: Option<T>,
    pub alon_boppana_ref: T,
    /// `(k − λ₂) / 2`.
    pub expander_constant_lb: T,
    pub dodziuk_lower: T,
    pub dodziuk_upper: T,
    pub tolerance: T,
}

/// Eigenvalues of a dense symmetric `n × n` matrix (row-major) by cyclic
/// Jacobi rotations, run until the off-diagonal Frobenius norm drops below
/// `tolerance`. Returned unsorted (diagonal order).
pub fn jacobi_eigenvalues<T: Scalar>(mut a: Vec<T>, n: usize, tolerance: T, max_sweeps: usize) -> Result<Vec<T>> {
    if a.len() != n * n {
        return Err(Error::Dimension(format!("expected {} entries, got {}", n * n, a.len())));
    }
    let off_norm = |a: &[T]| -> T {
        let mut s = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                s += a[p * n + q] * a[p * n + q];
            }
        }
        (s + s).sqrt()
    };
    let two = T::of(2.0);
    let mut sweeps = 0;
    loop {
        let residual = off_norm(&a);
        if residual < tolerance {
            break;
        }
        if sweeps == max_sweeps {
            return Err(Error::NoConvergence {
                sweeps,
                residual: residual.as_f64(),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let t = if theta == T::zero() { T::one() } else { t };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = T::zero();
                a[q * n + p] = T::zero();
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    let new_rp = c * arp - s * arq;
                    let new_rq = s * arp + c * arq;
                    a[r * n + p] = new_rp;
                    a[p * n + r] = new_rp;
                    a[r * n + q] = new_rq;
                    a[q * n + r] = new_rq;
                }
            }
        }
    }
    Ok((0..n).map(|i| a[i * n + i]).collect())
}

/// All adjacency eigenvalues, sorted descending.
pub fn adjacency_eigenvalues<T: Scalar>(g: &Graph, tolerance: T) -> Result<Vec<T>> {
    if g.n() == 0 {
        return Err(Error::InvalidArgument("graph has no vertices".into()));
    }
    let mut eig = jacobi_eigenvalues(g.adjacency_matrix::<T>(), g.n(), tolerance, MAX_JACOBI_SWEEPS)?;
    sort_descending(&mut eig);
    Ok(eig)
}

pub(crate) fn sort_descending<T: Scalar>(v: &mut [T]) {
    v.sort_by(|a, b| b.partial_cmp(a).expect("eigenvalues are finite"));
}

fn is_trivial<T: Scalar>(lambda: T, k: T, tolerance: T) -> bool {
    lambda.abs() >= k - tolerance * k
}

/// `λ(G)`: the largest `|λᵢ|` among eigenvalues with `|λᵢ| < k(1 − tolerance)`.
pub fn nontrivial_lambda<T: Scalar>(eigenvalues: &[T], k: usize, tolerance: T) -> Option<T> {
    let k = T::of_usize(k);
    eigenvalues
        .iter()
        .filter(|&&l| !is_trivial(l, k, tolerance))
        .map(|l| l.abs())
        .fold(None, |acc: Option<T>, x| Some(acc.map_or(x, |a| a.max(x))))
}

/// Asymptotic floor `2√(k−1)` on `λ(G)` for large k-regular graphs. The
/// vanishing correction term has no finite-n form and is not modelled.
pub fn alon_boppana_reference<T: Scalar>(k: usize) -> T {
    assert!(k >= 1, "regularity must be at least 1");
    T::of(2.0) * T::of_usize(k - 1).sqrt()
}

/// `(k − λ₂) / 2`.
pub fn expander_constant_lower_bound<T: Scalar>(k: usize, lambda_2: T) -> T {
    (T::of_usize(k) - lambda_2) / T::of(2.0)
}

/// Per-subset vertex-boundary bound `(k − λ₂)·|V∖A| / |V|` for a subset of
/// size `subset_size`. Known to fail on bipartite graphs (K₃,₃ with one
/// whole side as `A`), so it is only ever reported, never asserted.
pub fn vertex_boundary_spectral_bound<T: Scalar>(k: usize, lambda_2: T, n: usize, subset_size: usize) -> T {
    (T::of_usize(k) - lambda_2) * T::of_usize(n - subset_size) / T::of_usize(n)
}

/// Interval `((k − λ)/2, √(2k(k − λ)))` containing the edge expansion `h(G)`.
pub fn dodziuk_bounds<T: Scalar>(k: usize, lambda: T) -> (T, T) {
    let k = T::of_usize(k);
    let gap = (k - lambda).max(T::zero());
    (gap / T::of(2.0), (T::of(2.0) * k * gap).sqrt())
}

/// Diameter bound `α + log(2n/α) / log((k + √(k² − λ²))/λ)` for a connected
/// k-regular graph, with `α = 2` for bipartite graphs and `1` otherwise.
/// At `λ = 0` the denominator diverges and the bound is exactly `α`.
pub fn chung_diameter_bound<T: Scalar>(n: usize, k: usize, lambda: T, bipartite: bool) -> Result<T> {
    let kf = T::of_usize(k);
    if lambda < T::zero() || lambda.is_nan() {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    if lambda >= kf {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must be below k = {k}")));
    }
    let alpha = if bipartite { T::of(2.0) } else { T::one() };
    if lambda == T::zero() {
        return Ok(alpha);
    }
    let numerator = (T::of(2.0) * T::of_usize(n) / alpha).ln();
    let denominator = ((kf + (kf * kf - lambda * lambda).sqrt()) / lambda).ln();
    Ok(alpha + numerator / denominator)
}

/// Full spectral report for a k-regular graph (`k ≥ 1`).
///
/// Eigenvalues within `tolerance` of zero are reported as exactly zero.
/// A disconnected graph (eigenvalue `k` repeated) gets no Ramanujan verdict
/// and no diameter bound, and its Dodziuk interval collapses to `(0, 0)`.
pub fn analyze<T: Scalar>(g: &Graph, tolerance: T) -> Result<SpectralReport<T>> {
    let k = g.is_k_regular().ok_or(Error::NotRegular)?;
    if k == 0 {
        return Err(Error::ZeroDegree);
    }
    let mut eigenvalues = adjacency_eigenvalues(g, tolerance)?;
    for l in eigenvalues.iter_mut() {
        if l.abs() < tolerance {
            *l = T::zero();
        }
    }
    let kf = T::of_usize(k);
    let multiplicity_k = eigenvalues.iter().filter(|&&l| l >= kf - tolerance * kf).count();
    let is_connected = multiplicity_k == 1;
    let is_bipartite = g.bipartition().is_some();
    let lambda_nontrivial = nontrivial_lambda(&eigenvalues, k, tolerance);
    let lambda_2 = eigenvalues[1];
    let alon_boppana_ref = alon_boppana_reference::<T>(k);

    let (ramanujan, chung_bound) = match (is_connected, lambda_nontrivial) {
        (true, Some(lambda)) => (
            Some(lambda <= alon_boppana_ref + tolerance),
            Some(chung_diameter_bound(g.n(), k, lambda, is_bipartite)?),
        ),
        _ => (None, None),
    };
    let lambda_for_dodziuk = if is_connected {
        lambda_nontrivial.unwrap_or(T::zero())
    } else {
        kf
    };
    let (dodziuk_lower, dodziuk_upper) = dodziuk_bounds(k, lambda_for_dodziuk);

    Ok(SpectralReport {
        n: g.n(),
        k,
        eigenvalues,
        lambda_nontrivial,
        lambda_2,
        is_bipartite,
        is_connected,
        ramanujan,
        chung_bound,
        alon_boppana_ref,
        expander_constant_lb: expander_constant_lower_bound(k, lambda_2),
        dodziuk_lower,
        dodziuk_upper,
        tolerance,
    })
}

/// Ramanujan verdict: `λ(G) ≤ 2√(k−1) + tolerance`; `None` if the graph is
/// disconnected or has no nontrivial eigenvalue.
pub fn is_ramanujan<T: Scalar>(g: &Graph, tolerance: T) -> Result<Option<bool>> {
    Ok(analyze(g, tolerance)?.ramanujan)
}
