//! Comparison allocators: static weight-based slicing, the purely hard
//! slicing config transform, and the exhaustive-search static oracle.

use thiserror::Error;

use crate::env::{Allocation, EnvConfig, EnvError, SimEnv, SlicingAction};
use crate::real::Real;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("weights must be nonnegative with a positive sum")]
    BadWeights,
    #[error("search grid is empty for step {step} over {total} RBs")]
    EmptyGrid { step: u32, total: u32 },
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Normalized per-slice bandwidth shares for static slicing.
#[derive(Clone, Debug, PartialEq)]
pub struct NvsWeights<R: Real>(Vec<R>);

impl<R: Real> NvsWeights<R> {
    pub fn new(raw: &[R]) -> Result<Self, BaselineError> {
        if raw.is_empty() || raw.iter().any(|&w| w < R::zero()) {
            return Err(BaselineError::BadWeights);
        }
        let sum = raw.iter().fold(R::zero(), |acc, &w| acc + w);
        if !(sum > R::zero()) {
            return Err(BaselineError::BadWeights);
        }
        Ok(Self(raw.iter().map(|&w| w / sum).collect()))
    }

    /// Shares proportional to each slice's aggregate offered load
    /// (`ues * rate * packet_bits`).
    pub fn traffic_proportional(cfg: &EnvConfig<R>) -> Result<Self, BaselineError> {
        let raw: Vec<R> = cfg
            .slices
            .iter()
            .map(|s| R::of(s.num_ues as f64) * s.traffic.rate_pps * s.traffic.packet_bits)
            .collect();
        Self::new(&raw)
    }

    pub fn shares(&self) -> &[R] {
        &self.0
    }
}

/// Splits `total` units proportionally to `weights` using largest-remainder
/// rounding, so the parts always sum to `total` exactly. Remainder ties go
/// to the lower index.
pub fn split_largest_remainder<R: Real>(weights: &[R], total: u32) -> Vec<u32> {
    let sum = weights.iter().fold(R::zero(), |acc, &w| acc + w);
    if !(sum > R::zero()) {
        let mut out = vec![0u32; weights.len()];
        if let Some(first) = out.first_mut() {
            *first = total;
        }
        return out;
    }
    let exact: Vec<f64> =
        weights.iter().map(|&w| (w / sum).to_f64_lossy() * total as f64).collect();
    let mut parts: Vec<u32> = exact.iter().map(|&x| x.floor() as u32).collect();
    let assigned: u32 = parts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).expect("finite fractions").then(a.cmp(&b))
    });
    for idx in order.into_iter().cycle().take((total - assigned) as usize) {
        parts[idx] += 1;
    }
    parts
}

/// Static weight-based slicing: dedicated pools proportional to the weights,
/// no common pool, fixed for the whole episode.
pub fn nvs_alloc<R: Real>(weights: &NvsWeights<R>, total_rbs: u32) -> Allocation {
    Allocation { dedicated: split_largest_remainder(weights.shares(), total_rbs), common: 0 }
}

/// Purely hard variant of a hybrid scenario: the common pool is disabled and
/// its RBs are redistributed across the dedicated pools proportionally to
/// the initial split. Agent and training stay identical; only the
/// environment config differs.
pub fn hard_dqn_config<R: Real>(base: &EnvConfig<R>) -> EnvConfig<R> {
    let mut hard = base.clone();
    hard.hybrid = false;
    if base.initial_common > 0 {
        let weights: Vec<R> =
            base.initial_dedicated.iter().map(|&w| R::of(w as f64)).collect();
        hard.initial_dedicated = split_largest_remainder(&weights, base.total_rbs());
    }
    hard.initial_common = 0;
    hard
}

/// Candidate allocations on a step grid: every dedicated pool is a positive
/// multiple of `step` and the common pool absorbs the remainder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchGrid {
    pub step: u32,
}

impl SearchGrid {
    pub fn new(step: u32) -> Self {
        Self { step: step.max(1) }
    }

    pub fn candidates(&self, num_slices: usize, total_rbs: u32) -> Vec<Allocation> {
        let mut out = Vec::new();
        let mut dedicated = vec![0u32; num_slices];
        self.fill(0, total_rbs, &mut dedicated, &mut out);
        out
    }

    fn fill(&self, slice: usize, left: u32, dedicated: &mut Vec<u32>, out: &mut Vec<Allocation>) {
        if slice == dedicated.len() {
            out.push(Allocation { dedicated: dedicated.clone(), common: left });
            return;
        }
        let remaining_slices = (dedicated.len() - slice - 1) as u32;
        let mut w = self.step;
        while w + remaining_slices * self.step <= left {
            dedicated[slice] = w;
            self.fill(slice + 1, left - w, dedicated, out);
            w += self.step;
        }
    }
}

/// Audit row of one oracle evaluation.
#[derive(Clone, Debug)]
pub struct OpCandidateRow<R> {
    pub allocation: Allocation,
    pub seed: u64,
    pub mean_utility: R,
    pub mean_reward: R,
}

/// Result of the exhaustive static search.
#[derive(Clone, Debug)]
pub struct OpSearchResult<R> {
    pub winner: Allocation,
    pub mean_utility: R,
    pub mean_reward: R,
    /// One row per `(candidate, seed)` pair, in evaluation order.
    pub audit: Vec<OpCandidateRow<R>>,
}

/// Exhaustive search over static allocations ("optimal a priori").
///
/// Every grid candidate is held constant for a full episode per seed; the
/// winner maximizes the mean per-epoch utility across seeds. Utility ties
/// break towards the larger common pool, then lexicographically smaller
/// dedicated vector. The winner's mean reward also comes back so harnesses
/// can compare agents against it.
pub fn op_search<R: Real>(
    base: &EnvConfig<R>,
    grid: &SearchGrid,
    seeds: &[u64],
) -> Result<OpSearchResult<R>, BaselineError> {
    let candidates = grid.candidates(base.slices.len(), base.total_rbs());
    if candidates.is_empty() || seeds.is_empty() {
        return Err(BaselineError::EmptyGrid { step: grid.step, total: base.total_rbs() });
    }
    let mut audit = Vec::with_capacity(candidates.len() * seeds.len());
    let mut best: Option<(usize, R, R)> = None;
    for (idx, cand) in candidates.iter().enumerate() {
        let mut utility_acc = R::zero();
        let mut reward_acc = R::zero();
        let mut count = 0u64;
        for &seed in seeds {
            let (u, r) = evaluate_static(base, cand, seed)?;
            audit.push(OpCandidateRow {
                allocation: cand.clone(),
                seed,
                mean_utility: u,
                mean_reward: r,
            });
            utility_acc += u;
            reward_acc += r;
            count += 1;
        }
        let mean_u = utility_acc / R::of(count as f64);
        let mean_r = reward_acc / R::of(count as f64);
        let better = match &best {
            None => true,
            Some((best_idx, best_u, _)) => {
                if mean_u != *best_u {
                    mean_u > *best_u
                } else {
                    let cur = &candidates[*best_idx];
                    (cand.common, &cur.dedicated) > (cur.common, &cand.dedicated)
                }
            }
        };
        if better {
            best = Some((idx, mean_u, mean_r));
        }
    }
    let (idx, mean_utility, mean_reward) = best.expect("nonempty candidates");
    Ok(OpSearchResult { winner: candidates[idx].clone(), mean_utility, mean_reward, audit })
}

/// Mean per-epoch utility and reward of one static allocation over one
/// episode with the given seed.
pub fn evaluate_static<R: Real>(
    base: &EnvConfig<R>,
    alloc: &Allocation,
    seed: u64,
) -> Result<(R, R), BaselineError> {
    let mut cfg = base.clone();
    cfg.initial_dedicated = alloc.dedicated.clone();
    cfg.initial_common = alloc.common;
    let mut env = SimEnv::new(cfg, seed)?;
    env.reset(0)?;
    let noop = SlicingAction::noop(base.slices.len());
    let mut utility = R::zero();
    let mut reward = R::zero();
    let mut epochs = 0u64;
    while !env.is_terminal() {
        let (_, r, info) = env.step(&noop)?;
        utility += info.stats.utility;
        reward += r;
        epochs += 1;
    }
    let n = R::of(epochs as f64);
    Ok((utility / n, reward / n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nvs_symmetric_split() {
        let w = NvsWeights::new(&[0.5f64, 0.5]).unwrap();
        let alloc = nvs_alloc(&w, 100);
        assert_eq!(alloc.dedicated, vec![50, 50]);
        assert_eq!(alloc.common, 0);
    }

    #[test]
    fn nvs_degenerate_weight() {
        let w = NvsWeights::new(&[1.0f64, 0.0]).unwrap();
        let alloc = nvs_alloc(&w, 100);
        assert_eq!(alloc.dedicated, vec![100, 0]);
        assert_eq!(alloc.common, 0);
    }

    #[test]
    fn nvs_largest_remainder_rounding() {
        let w = NvsWeights::new(&[0.333f64, 0.667]).unwrap();
        let alloc = nvs_alloc(&w, 100);
        assert_eq!(alloc.dedicated, vec![33, 67]);
        assert_eq!(alloc.total(), 100);
    }

    #[test]
    fn nvs_rejects_bad_weights() {
        assert!(NvsWeights::new(&[-0.1f64, 1.1]).is_err());
        assert!(NvsWeights::new(&[0.0f64, 0.0]).is_err());
        assert!(NvsWeights::<f64>::new(&[]).is_err());
    }

    #[test]
    fn split_conserves_total() {
        for total in [1u32, 7, 20, 100] {
            for weights in [[1.0f64, 1.0, 1.0], [0.2, 0.5, 0.3], [5.0, 1.0, 0.0]] {
                let parts = split_largest_remainder(&weights, total);
                assert_eq!(parts.iter().sum::<u32>(), total, "{weights:?} {total}");
            }
        }
    }

    #[test]
    fn grid_covers_simplex_at_step() {
        let grid = SearchGrid::new(5);
        let candidates = grid.candidates(2, 20);
        // w1, w2 in {5, 10, 15} with w1 + w2 <= 20.
        assert!(candidates.iter().all(|a| a.total() == 20));
        assert!(candidates.iter().all(|a| a.dedicated.iter().all(|&w| w >= 5 && w % 5 == 0)));
        assert_eq!(candidates.len(), 6);
        assert!(candidates.contains(&Allocation { dedicated: vec![5, 10], common: 5 }));
        assert!(candidates.contains(&Allocation { dedicated: vec![15, 5], common: 0 }));
    }

    #[test]
    fn grid_step_two_count() {
        let grid = SearchGrid::new(2);
        // w1, w2 even and >= 2 with w1 + w2 <= 20: 45 candidates.
        assert_eq!(grid.candidates(2, 20).len(), 45);
    }
}
