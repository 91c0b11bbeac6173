//! Seeded random k-regular bipartite expanders.
//!
//! A graph is the union of `k` uniformly random perfect matchings between two
//! sides of size `n`. A matching that shares an edge with an earlier one is
//! redrawn on its own; the earlier matchings are kept. If connectivity is
//! required, a disconnected result is thrown away and the whole graph is
//! redrawn from the same random stream.
//!
//! Randomness: `Xoshiro256PlusPlus` seeded through `seed_from_u64` (SplitMix64
//! state expansion). Rejection chains for the Ramanujan variant derive the
//! seed of attempt `t` as [`mix_seed`]`(seed, t)`. Both are pinned by golden
//! tests; changing either changes every generated graph.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::BipartiteExpander;
use crate::scalar::Scalar;
use crate::spectral::{self, SpectralReport};

pub type GeneratorRng = Xoshiro256PlusPlus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Side size; both sides have `n` nodes.
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    /// Rejected draws allowed per matching, and whole-graph resamples allowed
    /// when connectivity is required.
    pub max_matching_retries: usize,
    pub max_ramanujan_attempts: usize,
    pub require_connected: bool,
    pub tolerance: f64,
    /// Use Ramanujan rejection sampling where a construction is requested
    /// through the config (see [`crate::rewire::augment`]).
    pub ramanujan: bool,
}

impl GeneratorConfig {
    /// Defaults: 1000 matching retries, 200 Ramanujan attempts, tolerance
    /// 1e-8, connectivity required for `k ≥ 2`.
    pub fn new(n: usize, k: usize, seed: u64) -> Self {
        GeneratorConfig {
            n,
            k,
            seed,
            max_matching_retries: 1000,
            max_ramanujan_attempts: 200,
            require_connected: k >= 2,
            tolerance: spectral::DEFAULT_TOLERANCE,
            ramanujan: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.k > self.n {
            return Err(Error::InvalidConfig(format!(
                "k = {} exceeds n = {}; k disjoint perfect matchings need k <= n",
                self.k, self.n
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// SplitMix64 output for state `seed + (t + 1)·γ`.
pub fn mix_seed(seed: u64, t: u64) -> u64 {
    let mut z = seed.wrapping_add(t.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> GeneratorRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Uniform permutation of `0..n` by Fisher-Yates; left `l` matches right `π(l)`.
pub fn random_perfect_matching<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

fn disjoint_from(candidate: &[usize], accepted: &[Vec<usize>]) -> bool {
    accepted
        .iter()
        .all(|m| m.iter().zip(candidate).all(|(a, b)| a != b))
}

/// Retry counters from one generation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GenerationStats {
    /// Rejected matching draws, summed over matchings and resamples.
    pub matching_retries: usize,
    /// Largest number of rejected draws for a single matching.
    pub max_retries_single_matching: usize,
    pub connectivity_resamples: usize,
}

/// k-regular bipartite graph from `k` disjoint random perfect matchings.
pub fn k_regular_bipartite(cfg: &GeneratorConfig) -> Result<BipartiteExpander> {
    k_regular_bipartite_with_stats(cfg).map(|(b, _)| b)
}

pub fn k_regular_bipartite_with_stats(cfg: &GeneratorConfig) -> Result<(BipartiteExpander, GenerationStats)> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut stats = GenerationStats::default();
    loop {
        let mut matchings: Vec<Vec<usize>> = Vec::with_capacity(cfg.k);
        for i in 0..cfg.k {
            let mut rejected = 0;
            loop {
                let m = random_perfect_matching(cfg.n, &mut rng);
                if disjoint_from(&m, &matchings) {
                    matchings.push(m);
                    break;
                }
                rejected += 1;
                stats.matching_retries += 1;
                stats.max_retries_single_matching = stats.max_retries_single_matching.max(rejected);
                if rejected >= cfg.max_matching_retries {
                    return Err(Error::MatchingBudget {
                        matching: i,
                        attempts: rejected,
                        resamples: stats.connectivity_resamples,
                    });
                }
            }
        }
        let b = BipartiteExpander::new(cfg.n, matchings)?;
        if !cfg.require_connected || b.graph().is_connected() {
            return Ok((b, stats));
        }
        stats.connectivity_resamples += 1;
        if stats.connectivity_resamples >= cfg.max_matching_retries {
            return Err(Error::ConnectivityBudget {
                resamples: stats.connectivity_resamples,
            });
        }
    }
}

/// Accepted Ramanujan sample with its attempt count (1-based) and spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct RamanujanSample<T> {
    pub expander: BipartiteExpander,
    pub attempts: usize,
    pub report: SpectralReport<T>,
}

/// Rejection sampling: draws [`k_regular_bipartite`] with seeds
/// `mix_seed(seed, t)` for `t = 0, 1, …` until `λ(G) ≤ 2√(k−1) + tolerance`.
/// Each check is a dense O(|V|³) eigensolve.
pub fn ramanujan_bipartite<T: Scalar>(cfg: &GeneratorConfig) -> Result<RamanujanSample<T>> {
    cfg.validate()?;
    if cfg.k < 2 {
        return Err(Error::InvalidConfig(
            "Ramanujan sampling needs k >= 2 (k = 1 graphs have no nontrivial spectrum)".into(),
        ));
    }
    let tolerance = T::of(cfg.tolerance);
    let mut best_lambda: Option<f64> = None;
    for t in 0..cfg.max_ramanujan_attempts {
        let attempt_cfg = GeneratorConfig {
            seed: mix_seed(cfg.seed, t as u64),
            ..cfg.clone()
        };
        let expander = k_regular_bipartite(&attempt_cfg)?;
        let report = spectral::analyze(expander.graph(), tolerance)?;
        if report.ramanujan == Some(true) {
            return Ok(RamanujanSample {
                expander,
                attempts: t + 1,
                report,
            });
        }
        if let (true, Some(l)) = (report.is_connected, report.lambda_nontrivial) {
            let l = l.as_f64();
            best_lambda = Some(best_lambda.map_or(l, |b: f64| b.min(l)));
        }
    }
    Err(Error::RamanujanBudget {
        attempts: cfg.max_ramanujan_attempts,
        best_lambda,
    })
}
