//! Quantized Nash equilibria of the noiseless scalar cheap-talk game.
//!
//! The encoder pays (m−u−b)², the decoder (m−u)². In equilibrium the decoder
//! plays bin centroids and the encoder's indifference points between adjacent
//! actions are the bin edges.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::SourceModel;
use crate::error::{Error, Result};
use crate::report::{Costs, EquilibriumClass, EquilibriumReport, Policy, Solution};

const SCAN_POINTS: usize = 10_000;
const BISECT_TOL: f64 = 1e-12;
const BISECT_CAP: usize = 200;
const CLOSURE_TOL: f64 = 1e-9;

pub const DECODER_TOL: f64 = 1e-8;
pub const ENCODER_SLACK: f64 = -1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheapTalkSpec {
    pub source: SourceModel,
    pub bias: f64,
}

impl CheapTalkSpec {
    pub fn new(source: SourceModel, bias: f64) -> Result<Self> {
        let spec = Self { source, bias };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        if !self.bias.is_finite() {
            return Err(Error::InvalidSpec(format!("bias must be finite, got {}", self.bias)));
        }
        Ok(())
    }
}

/// Interior bin edges (N−1 of them) and decoder actions (N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerPolicy {
    pub boundaries: Vec<f64>,
    pub actions: Vec<f64>,
}

impl QuantizerPolicy {
    pub fn n_bins(&self) -> usize {
        self.actions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.actions.is_empty() {
            return Err(Error::InvalidPolicy("policy has no actions".into()));
        }
        if self.boundaries.len() + 1 != self.actions.len() {
            return Err(Error::InvalidPolicy(format!(
                "{} boundaries for {} actions",
                self.boundaries.len(),
                self.actions.len()
            )));
        }
        if self.boundaries.iter().chain(&self.actions).any(|x| !x.is_finite()) {
            return Err(Error::InvalidPolicy("non-finite boundary or action".into()));
        }
        if self.boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPolicy("boundaries are not strictly increasing".into()));
        }
        if self.actions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPolicy("actions are not strictly increasing".into()));
        }
        Ok(())
    }

    /// Bin edges including the (possibly infinite) support ends.
    pub fn edges(&self, source: &SourceModel) -> Vec<f64> {
        let (lo, hi) = source.support();
        let mut edges = Vec::with_capacity(self.boundaries.len() + 2);
        edges.push(lo);
        edges.extend_from_slice(&self.boundaries);
        edges.push(hi);
        edges
    }

    /// Index of the bin containing `m`; points on an edge go to the right bin.
    pub fn bin_of(&self, m: f64) -> usize {
        self.boundaries.partition_point(|&t| t <= m)
    }

    pub fn encode(&self, m: f64) -> usize {
        self.bin_of(m)
    }

    pub fn decode(&self, bin: usize) -> f64 {
        self.actions[bin.min(self.actions.len() - 1)]
    }
}

/// Encoder indifference point m̄ = (u_low + u_high)/2 + b.
pub fn boundary_condition(u_low: f64, u_high: f64, bias: f64) -> Result<f64> {
    if !(u_low < u_high) {
        return Err(Error::Ordering {
            low: u_low,
            high: u_high,
        });
    }
    Ok(0.5 * (u_low + u_high) + bias)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shot {
    /// Required next action does not lie to the right of the current edge.
    Undershoot,
    /// Required next action exceeds the mean of everything to the right.
    Overshoot,
    /// Chain completed; required last action minus the last bin's centroid.
    Closure(f64),
}

impl Shot {
    fn sign(self) -> f64 {
        match self {
            Shot::Undershoot => -1.0,
            Shot::Overshoot => 1.0,
            Shot::Closure(r) => r,
        }
    }
}

/// Propagates edges left to right from the first interior edge `t1`.
fn shoot(spec: &CheapTalkSpec, n_bins: usize, t1: f64, edges: &mut Vec<f64>) -> Shot {
    let src = &spec.source;
    let (lo, hi) = src.support();
    edges.clear();
    edges.push(t1);
    let mut u = match src.interval_mean(lo, t1) {
        Ok(u) => u,
        Err(_) => return Shot::Undershoot,
    };
    for k in 1..n_bins {
        let t = edges[k - 1];
        let required = 2.0 * (t - spec.bias) - u;
        if required <= t {
            return Shot::Undershoot;
        }
        let tail_mean = match src.interval_mean(t, hi) {
            Ok(m) => m,
            Err(_) => return Shot::Overshoot,
        };
        if k == n_bins - 1 {
            return Shot::Closure(required - tail_mean);
        }
        if required >= tail_mean {
            return Shot::Overshoot;
        }
        match src.interval_upper_for_mean(t, required) {
            Some(next) if next > t && next < hi => edges.push(next),
            _ => return Shot::Overshoot,
        }
        u = required;
    }
    unreachable!("n_bins >= 2 always returns inside the loop")
}

fn policy_from_edges(spec: &CheapTalkSpec, boundaries: Vec<f64>) -> Result<QuantizerPolicy> {
    let (lo, hi) = spec.source.support();
    let mut actions = Vec::with_capacity(boundaries.len() + 1);
    let mut left = lo;
    for &t in boundaries.iter().chain(std::iter::once(&hi)) {
        actions.push(spec.source.interval_mean(left, t)?);
        left = t;
    }
    Ok(QuantizerPolicy {
        boundaries,
        actions,
    })
}

/// Every N-bin equilibrium found by the bracket scan, ordered by first edge.
pub fn solve_quantizer_equilibria(spec: &CheapTalkSpec, n_bins: usize) -> Result<Vec<QuantizerPolicy>> {
    spec.validate()?;
    if n_bins == 0 {
        return Err(Error::Precondition("n_bins must be at least 1".into()));
    }
    if n_bins == 1 {
        return Ok(vec![policy_from_edges(spec, Vec::new())?]);
    }
    let src = spec.source;
    let grid: Vec<f64> = (1..=SCAN_POINTS)
        .map(|j| src.quantile(j as f64 / (SCAN_POINTS + 1) as f64))
        .collect();
    let shots: Vec<Shot> = grid
        .par_iter()
        .map_init(Vec::new, |edges, &t1| shoot(spec, n_bins, t1, edges))
        .collect();

    let brackets: Vec<usize> = (0..SCAN_POINTS - 1)
        .filter(|&j| {
            let (a, b) = (shots[j].sign(), shots[j + 1].sign());
            a == 0.0 || (a < 0.0) != (b < 0.0)
        })
        .collect();

    let roots: Vec<Result<Option<Vec<f64>>>> = brackets
        .par_iter()
        .map(|&j| bisect_bracket(spec, n_bins, grid[j], grid[j + 1], shots[j], shots[j + 1]))
        .collect();

    let mut policies: Vec<QuantizerPolicy> = Vec::new();
    for root in roots {
        if let Some(edges) = root? {
            let dup = policies
                .last()
                .is_some_and(|p| (p.boundaries[0] - edges[0]).abs() < 1e-9);
            if !dup {
                policies.push(policy_from_edges(spec, edges)?);
            }
        }
    }
    Ok(policies)
}

fn bisect_bracket(
    spec: &CheapTalkSpec,
    n_bins: usize,
    mut a: f64,
    mut b: f64,
    shot_a: Shot,
    shot_b: Shot,
) -> Result<Option<Vec<f64>>> {
    let both_closed = matches!((shot_a, shot_b), (Shot::Closure(_), Shot::Closure(_)));
    let mut edges = Vec::with_capacity(n_bins);
    if shot_a.sign() == 0.0 {
        shoot(spec, n_bins, a, &mut edges);
        return Ok(Some(edges));
    }
    let neg_at_a = shot_a.sign() < 0.0;
    for _ in 0..BISECT_CAP {
        if b - a <= BISECT_TOL {
            break;
        }
        let mid = 0.5 * (a + b);
        let s = shoot(spec, n_bins, mid, &mut edges).sign();
        if s == 0.0 {
            a = mid;
            b = mid;
            break;
        }
        if (s < 0.0) == neg_at_a {
            a = mid;
        } else {
            b = mid;
        }
    }
    let mid = 0.5 * (a + b);
    match shoot(spec, n_bins, mid, &mut edges) {
        Shot::Closure(r) if r.abs() <= CLOSURE_TOL => Ok(Some(edges)),
        // A sign change across an aborted chain is a jump, not a root.
        _ if !both_closed => Ok(None),
        other => Err(Error::SolverFailure(format!(
            "bisection on the first edge stalled near {mid} with closure {:?}",
            other
        ))),
    }
}

/// The equilibrium reached from the leftmost feasible bracket.
pub fn solve_quantizer_equilibrium(spec: &CheapTalkSpec, n_bins: usize) -> Result<Solution<QuantizerPolicy>> {
    let mut all = solve_quantizer_equilibria(spec, n_bins)?;
    if all.is_empty() {
        Ok(Solution::Infeasible)
    } else {
        Ok(Solution::Found(all.swap_remove(0)))
    }
}

/// Largest N ≤ cap admitting an N-bin equilibrium; at least 1.
pub fn max_bins(spec: &CheapTalkSpec, cap: usize) -> Result<usize> {
    if cap == 0 {
        return Err(Error::Precondition("cap must be at least 1".into()));
    }
    for n in (2..=cap).rev() {
        if !solve_quantizer_equilibria(spec, n)?.is_empty() {
            return Ok(n);
        }
    }
    Ok(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub passed: bool,
    pub decoder_max_error: f64,
    pub encoder_min_margin: f64,
    pub min_action_gap: f64,
}

/// Test points spanning the support: quantiles at the cell midpoints.
pub(crate) fn support_grid(source: &SourceModel, grid: usize) -> impl Iterator<Item = f64> + '_ {
    (0..grid).map(move |j| source.quantile((j as f64 + 0.5) / grid as f64))
}

pub fn verify_equilibrium(spec: &CheapTalkSpec, policy: &QuantizerPolicy, grid: usize) -> Result<VerificationResult> {
    spec.validate()?;
    policy.validate()?;
    let edges = policy.edges(&spec.source);
    let mut decoder_max_error: f64 = 0.0;
    for (k, &u) in policy.actions.iter().enumerate() {
        let err = match spec.source.interval_mean(edges[k], edges[k + 1]) {
            Ok(c) => (c - u).abs(),
            Err(Error::EmptyBin { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        decoder_max_error = decoder_max_error.max(err);
    }
    let encoder_min_margin = encoder_margin(policy, spec.bias, support_grid(&spec.source, grid));
    let min_action_gap = policy
        .actions
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    Ok(VerificationResult {
        passed: decoder_max_error <= DECODER_TOL && encoder_min_margin >= ENCODER_SLACK,
        decoder_max_error,
        encoder_min_margin,
        min_action_gap,
    })
}

/// Smallest advantage of the assigned action over any alternative.
pub(crate) fn encoder_margin(policy: &QuantizerPolicy, bias: f64, points: impl Iterator<Item = f64>) -> f64 {
    let mut margin = f64::INFINITY;
    for m in points {
        let own = policy.decode(policy.bin_of(m));
        let own_cost = (m - own - bias).powi(2);
        let best = policy
            .actions
            .iter()
            .map(|u| (m - u - bias).powi(2))
            .fold(f64::INFINITY, f64::min);
        margin = margin.min(best - own_cost);
    }
    margin
}

/// (J_e, J_d) of a quantizer policy with arbitrary actions.
pub fn costs(spec: &CheapTalkSpec, policy: &QuantizerPolicy) -> Result<(f64, f64)> {
    policy.validate()?;
    let edges = policy.edges(&spec.source);
    let (mut j_e, mut j_d) = (0.0, 0.0);
    for (k, &u) in policy.actions.iter().enumerate() {
        let mass = spec.source.interval_mass(edges[k], edges[k + 1])?;
        if mass == 0.0 {
            continue;
        }
        let mean = spec.source.interval_mean(edges[k], edges[k + 1])?;
        let var = spec.source.interval_variance(edges[k], edges[k + 1])?;
        j_d += mass * (var + (mean - u).powi(2));
        j_e += mass * (var + (mean - u - spec.bias).powi(2));
    }
    Ok((j_e, j_d))
}

pub fn quantized_report(spec: &CheapTalkSpec, policy: QuantizerPolicy) -> Result<EquilibriumReport> {
    let (j_e, j_d) = costs(spec, &policy)?;
    let class = if policy.n_bins() == 1 {
        EquilibriumClass::NonInformative
    } else {
        EquilibriumClass::Quantized
    };
    let check = verify_equilibrium(spec, &policy, 10_000)?;
    let closure = closure_error(spec, &policy);
    let n_bins = policy.n_bins() as f64;
    Ok(EquilibriumReport::new(class, Some(Policy::Quantizer(policy)), Costs::new(j_e, j_d))
        .with_residual(closure)
        .value("n_bins", n_bins)
        .value("encoder_min_margin", check.encoder_min_margin)
        .value("decoder_max_error", check.decoder_max_error))
}

/// Largest violation of the indifference condition at an interior edge.
pub fn closure_error(spec: &CheapTalkSpec, policy: &QuantizerPolicy) -> f64 {
    policy
        .boundaries
        .iter()
        .zip(policy.actions.windows(2))
        .map(|(&t, w)| (t - (0.5 * (w[0] + w[1]) + spec.bias)).abs())
        .fold(0.0, f64::max)
}

/// Encoder commits first: full revelation, decoder plays u = m.
pub fn stackelberg_cheap_talk(spec: &CheapTalkSpec) -> Result<EquilibriumReport> {
    spec.validate()?;
    Ok(EquilibriumReport::new(
        EquilibriumClass::FullyInformative,
        Some(Policy::Identity),
        Costs::new(spec.bias * spec.bias, 0.0),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform(bias: f64) -> CheapTalkSpec {
        CheapTalkSpec::new(SourceModel::uniform(0.0, 1.0).unwrap(), bias).unwrap()
    }

    /// Uniform(0,1) edges from the first edge: widths shrink by 4b per bin.
    fn uniform_oracle(bias: f64, n: usize, grid: usize) -> Option<Vec<f64>> {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for j in 1..grid {
            let t1 = j as f64 / grid as f64;
            let mut edges = vec![t1];
            let mut width = t1;
            for _ in 1..n {
                width -= 4.0 * bias;
                if width <= 0.0 {
                    break;
                }
                edges.push(edges.last().unwrap() + width);
            }
            if edges.len() != n {
                continue;
            }
            let miss = (edges[n - 1] - 1.0).abs();
            if best.as_ref().is_none_or(|(m, _)| miss < *m) {
                best = Some((miss, edges[..n - 1].to_vec()));
            }
        }
        best.filter(|(m, _)| *m < 10.0 / grid as f64).map(|(_, e)| e)
    }

    #[test]
    fn boundary_condition_examples() {
        assert_eq!(boundary_condition(0.25, 0.75, 0.0).unwrap(), 0.5);
        assert!((boundary_condition(0.25, 0.75, 0.1).unwrap() - 0.6).abs() < 1e-15);
        assert!((boundary_condition(0.0, 1.0, -0.2).unwrap() - 0.3).abs() < 1e-15);
        assert!(matches!(
            boundary_condition(0.5, 0.5, 0.0),
            Err(Error::Ordering { .. })
        ));
    }

    #[test]
    fn large_bias_leaves_only_babbling() {
        let spec = uniform(0.3);
        assert!(solve_quantizer_equilibrium(&spec, 2).unwrap().is_infeasible());
        assert_eq!(max_bins(&spec, 16).unwrap(), 1);
        let one = solve_quantizer_equilibrium(&spec, 1).unwrap().found().unwrap();
        assert!(one.boundaries.is_empty());
        assert_eq!(one.actions, vec![0.5]);
    }

    #[test]
    fn two_bins_match_grid_oracle() {
        let spec = uniform(0.05);
        let policy = solve_quantizer_equilibrium(&spec, 2).unwrap().found().unwrap();
        let oracle = uniform_oracle(0.05, 2, 100_000).unwrap();
        assert!((policy.boundaries[0] - oracle[0]).abs() < 1e-4);
        assert!(closure_error(&spec, &policy) < 1e-9);
        assert!(verify_equilibrium(&spec, &policy, 10_000).unwrap().passed);
    }

    #[test]
    fn max_bins_follows_oracle() {
        assert_eq!(max_bins(&uniform(0.0), 16).unwrap(), 16);
        let n = max_bins(&uniform(0.05), 16).unwrap();
        let oracle = (1..=16)
            .rev()
            .find(|&k| k == 1 || uniform_oracle(0.05, k, 100_000).is_some())
            .unwrap();
        assert_eq!(n, oracle);
    }

    #[test]
    fn verify_rejects_wrong_boundary() {
        let spec = uniform(0.1);
        let policy = QuantizerPolicy {
            boundaries: vec![0.5],
            actions: vec![0.25, 0.75],
        };
        let check = verify_equilibrium(&spec, &policy, 1000).unwrap();
        assert!(!check.passed);
        assert!(check.encoder_min_margin < 0.0);
    }

    #[test]
    fn verify_accepts_uniform_lloyd_max() {
        let spec = uniform(0.0);
        let policy = QuantizerPolicy {
            boundaries: vec![0.25, 0.5, 0.75],
            actions: vec![0.125, 0.375, 0.625, 0.875],
        };
        assert!(verify_equilibrium(&spec, &policy, 1000).unwrap().passed);
    }

    #[test]
    fn verify_rejects_unsorted_policy() {
        let spec = uniform(0.0);
        let policy = QuantizerPolicy {
            boundaries: vec![0.6, 0.4],
            actions: vec![0.2, 0.5, 0.8],
        };
        assert!(matches!(
            verify_equilibrium(&spec, &policy, 1000),
            Err(Error::InvalidPolicy(_))
        ));
    }

    #[test]
    fn single_bin_costs() {
        let spec = uniform(0.2);
        let policy = solve_quantizer_equilibrium(&spec, 1).unwrap().found().unwrap();
        let (j_e, j_d) = costs(&spec, &policy).unwrap();
        let n = 100_000;
        let oracle: f64 = (0..n)
            .map(|i| ((i as f64 + 0.5) / n as f64 - 0.5).powi(2))
            .sum::<f64>()
            / n as f64;
        assert!((j_d - oracle).abs() < 1e-9);
        assert!((j_e - j_d - 0.04).abs() < 1e-12);
    }

    #[test]
    fn two_bin_costs_match_quadrature() {
        let spec = uniform(0.05);
        let policy = solve_quantizer_equilibrium(&spec, 2).unwrap().found().unwrap();
        let (j_e, j_d) = costs(&spec, &policy).unwrap();
        let n = 400_000;
        let oracle: f64 = (0..n)
            .map(|i| {
                let m = (i as f64 + 0.5) / n as f64;
                (m - policy.decode(policy.encode(m))).powi(2)
            })
            .sum::<f64>()
            / n as f64;
        assert!((j_d - oracle).abs() < 1e-8);
        assert!((j_e - j_d - 0.0025).abs() < 1e-10);
    }

    #[test]
    fn stackelberg_reveals_everything() {
        let r = stackelberg_cheap_talk(&uniform(0.3)).unwrap();
        assert!((r.costs.encoder - 0.09).abs() < 1e-15);
        assert_eq!(r.costs.decoder, 0.0);
        let r = stackelberg_cheap_talk(&uniform(0.0)).unwrap();
        assert_eq!((r.costs.encoder, r.costs.decoder), (0.0, 0.0));
        let g = CheapTalkSpec::new(SourceModel::gaussian(0.0, 1.0).unwrap(), 1.0).unwrap();
        assert_eq!(stackelberg_cheap_talk(&g).unwrap().costs.encoder, 1.0);
    }

    #[test]
    fn unbounded_sources_solve_and_verify() {
        for source in [
            SourceModel::gaussian(0.0, 1.0).unwrap(),
            SourceModel::exponential(1.0).unwrap(),
        ] {
            let spec = CheapTalkSpec::new(source, 0.1).unwrap();
            for n in 2..=3 {
                if let Solution::Found(p) = solve_quantizer_equilibrium(&spec, n).unwrap() {
                    assert!(closure_error(&spec, &p) < 1e-9);
                    assert!(verify_equilibrium(&spec, &p, 2000).unwrap().passed, "{source:?} {n}");
                }
            }
        }
        let g = CheapTalkSpec::new(SourceModel::gaussian(0.0, 1.0).unwrap(), 0.1).unwrap();
        assert!(max_bins(&g, 4).unwrap() >= 2);
    }

    #[test]
    fn max_bins_is_non_increasing_in_bias() {
        let mut last = usize::MAX;
        for k in [1, 2, 4, 8, 13, 20, 26, 35, 50] {
            let n = max_bins(&uniform(k as f64 / 100.0), 16).unwrap();
            assert!(n <= last);
            last = n;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn solved_policies_are_equilibria(bias in -0.12..0.12f64, n in 2usize..5) {
            let spec = uniform(bias);
            if let Solution::Found(p) = solve_quantizer_equilibrium(&spec, n).unwrap() {
                let check = verify_equilibrium(&spec, &p, 2000).unwrap();
                prop_assert!(check.passed);
                prop_assert!(check.min_action_gap > 2.0 * bias.abs());
                let (j_e, j_d) = costs(&spec, &p).unwrap();
                prop_assert!((j_e - j_d - bias * bias).abs() < 1e-10);
            }
        }
    }
}
