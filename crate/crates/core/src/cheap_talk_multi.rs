//! Multi-dimensional cheap talk with independent coordinates and cost
//! ‖m⃗−u⃗−b⃗‖². The squared norm separates, so product policies can be built
//! from scalar equilibria; unbiased coordinates may be revealed exactly.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cheap_talk_scalar::{
    self, support_grid, CheapTalkSpec, QuantizerPolicy, VerificationResult, DECODER_TOL, ENCODER_SLACK,
};
use crate::distributions::SourceModel;
use crate::error::{Error, Result};
use crate::report::{Costs, EquilibriumClass, EquilibriumReport, Policy, Solution};

const ZERO_BIAS_TOL: f64 = 1e-12;
const MAX_JOINT_EVALUATIONS: usize = 500_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiCheapTalkSpec {
    pub sources: Vec<SourceModel>,
    pub bias: Vec<f64>,
}

impl MultiCheapTalkSpec {
    pub fn new(sources: Vec<SourceModel>, bias: Vec<f64>) -> Result<Self> {
        let spec = Self { sources, bias };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::InvalidSpec("dimension must be at least 1".into()));
        }
        if self.sources.len() != self.bias.len() {
            return Err(Error::InvalidSpec(format!(
                "{} sources but {} bias entries",
                self.sources.len(),
                self.bias.len()
            )));
        }
        for (s, &b) in self.sources.iter().zip(&self.bias) {
            CheapTalkSpec { source: *s, bias: b }.validate()?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.sources.len()
    }

    pub fn coordinate(&self, i: usize) -> CheapTalkSpec {
        CheapTalkSpec {
            source: self.sources[i],
            bias: self.bias[i],
        }
    }
}

/// Per-coordinate request: a bin count or full revelation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinRequest {
    Bins(usize),
    Full,
}

impl Serialize for BinRequest {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BinRequest::Bins(n) => s.serialize_u64(*n as u64),
            BinRequest::Full => s.serialize_str("full"),
        }
    }
}

impl<'de> Deserialize<'de> for BinRequest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(BinRequest::Bins(n)),
            Raw::Word(w) if w.eq_ignore_ascii_case("full") => Ok(BinRequest::Full),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "expected a bin count or \"full\", got \"{w}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoordinatePolicy {
    Quantizer(QuantizerPolicy),
    FullyInformative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductPolicy {
    pub per_dimension: Vec<CoordinatePolicy>,
}

impl ProductPolicy {
    /// Transmitted signal: the bin index on quantized coordinates, m_i otherwise.
    pub fn encode(&self, m: &[f64]) -> Vec<f64> {
        self.per_dimension
            .iter()
            .zip(m)
            .map(|(p, &mi)| match p {
                CoordinatePolicy::Quantizer(q) => q.encode(mi) as f64,
                CoordinatePolicy::FullyInformative => mi,
            })
            .collect()
    }

    pub fn decode(&self, signal: &[f64]) -> Vec<f64> {
        self.per_dimension
            .iter()
            .zip(signal)
            .map(|(p, &s)| match p {
                CoordinatePolicy::Quantizer(q) => q.decode(s as usize),
                CoordinatePolicy::FullyInformative => s,
            })
            .collect()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.per_dimension.len() != n {
            return Err(Error::InvalidPolicy(format!(
                "policy has {} coordinates, game has {n}",
                self.per_dimension.len()
            )));
        }
        for p in &self.per_dimension {
            if let CoordinatePolicy::Quantizer(q) = p {
                q.validate()?;
            }
        }
        Ok(())
    }
}

pub fn build_product_equilibrium(
    spec: &MultiCheapTalkSpec,
    request: &[BinRequest],
) -> Result<Solution<ProductPolicy>> {
    spec.validate()?;
    if request.len() != spec.dim() {
        return Err(Error::InvalidSpec(format!(
            "{} bin requests for {} coordinates",
            request.len(),
            spec.dim()
        )));
    }
    let mut per_dimension = Vec::with_capacity(spec.dim());
    for (i, req) in request.iter().enumerate() {
        match *req {
            BinRequest::Full => {
                if spec.bias[i].abs() > ZERO_BIAS_TOL {
                    return Err(Error::BiasMismatch {
                        index: i,
                        bias: spec.bias[i],
                    });
                }
                per_dimension.push(CoordinatePolicy::FullyInformative);
            }
            BinRequest::Bins(n) => {
                let coord = spec.coordinate(i);
                match cheap_talk_scalar::solve_quantizer_equilibrium(&coord, n)? {
                    Solution::Found(q) => {
                        if !cheap_talk_scalar::verify_equilibrium(&coord, &q, 10_000)?.passed {
                            return Err(Error::SolverFailure(format!(
                                "coordinate {i} solution failed verification"
                            )));
                        }
                        per_dimension.push(CoordinatePolicy::Quantizer(q));
                    }
                    Solution::Infeasible => return Ok(Solution::Infeasible),
                }
            }
        }
    }
    Ok(Solution::Found(ProductPolicy { per_dimension }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiVerification {
    pub passed: bool,
    pub decoder_max_error: f64,
    pub encoder_min_margin: f64,
}

/// Cartesian product of per-coordinate lists, last coordinate fastest.
fn for_each_product(lists: &[Vec<f64>], mut f: impl FnMut(&[f64])) {
    if lists.iter().any(Vec::is_empty) {
        return;
    }
    let mut idx = vec![0usize; lists.len()];
    let mut point: Vec<f64> = lists.iter().map(|l| l[0]).collect();
    loop {
        f(&point);
        let mut d = lists.len();
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < lists[d].len() {
                point[d] = lists[d][idx[d]];
                break;
            }
            idx[d] = 0;
            point[d] = lists[d][0];
        }
    }
}

/// Joint best-response check on the product grid against every action vector.
pub fn verify_multi(spec: &MultiCheapTalkSpec, policy: &ProductPolicy, grid: usize) -> Result<MultiVerification> {
    spec.validate()?;
    policy.validate(spec.dim())?;
    if grid < 2 {
        return Err(Error::Precondition("grid needs at least 2 points per coordinate".into()));
    }
    let mut decoder_max_error: f64 = 0.0;
    for (i, p) in policy.per_dimension.iter().enumerate() {
        if let CoordinatePolicy::Quantizer(q) = p {
            let edges = q.edges(&spec.sources[i]);
            for (k, &u) in q.actions.iter().enumerate() {
                let err = match spec.sources[i].interval_mean(edges[k], edges[k + 1]) {
                    Ok(c) => (c - u).abs(),
                    Err(Error::EmptyBin { .. }) => f64::INFINITY,
                    Err(e) => return Err(e),
                };
                decoder_max_error = decoder_max_error.max(err);
            }
        }
    }

    let points: Vec<Vec<f64>> = spec
        .sources
        .iter()
        .map(|s| support_grid(s, grid).collect())
        .collect();
    // Fully revealed coordinates leave the encoder a continuum of actions, so
    // their best alternative is exact (cost zero); quantized ones enumerate.
    let actions: Vec<Vec<f64>> = policy
        .per_dimension
        .iter()
        .map(|p| match p {
            CoordinatePolicy::Quantizer(q) => q.actions.clone(),
            CoordinatePolicy::FullyInformative => vec![f64::NAN],
        })
        .collect();
    let n_points: usize = points.iter().map(Vec::len).product();
    let n_actions: usize = actions.iter().map(Vec::len).product();
    if n_points.saturating_mul(n_actions) > MAX_JOINT_EVALUATIONS {
        return Err(Error::Precondition(format!(
            "joint check needs {n_points} x {n_actions} evaluations"
        )));
    }

    let mut encoder_min_margin = f64::INFINITY;
    let mut u_own = vec![0.0; spec.dim()];
    for_each_product(&points, |m| {
        let signal = policy.encode(m);
        let decoded = policy.decode(&signal);
        u_own.copy_from_slice(&decoded);
        let own: f64 = (0..m.len())
            .map(|i| (m[i] - u_own[i] - spec.bias[i]).powi(2))
            .sum();
        let mut best = f64::INFINITY;
        for_each_product(&actions, |u| {
            let cost: f64 = (0..m.len())
                .map(|i| if u[i].is_nan() { 0.0 } else { (m[i] - u[i] - spec.bias[i]).powi(2) })
                .sum();
            best = best.min(cost);
        });
        encoder_min_margin = encoder_min_margin.min(best - own);
    });

    Ok(MultiVerification {
        passed: decoder_max_error <= DECODER_TOL && encoder_min_margin >= ENCODER_SLACK,
        decoder_max_error,
        encoder_min_margin,
    })
}

/// Scalar verification of each coordinate on its own.
pub fn verify_coordinates(
    spec: &MultiCheapTalkSpec,
    policy: &ProductPolicy,
    grid: usize,
) -> Result<Vec<VerificationResult>> {
    policy.validate(spec.dim())?;
    policy
        .per_dimension
        .iter()
        .enumerate()
        .map(|(i, p)| match p {
            CoordinatePolicy::Quantizer(q) => cheap_talk_scalar::verify_equilibrium(&spec.coordinate(i), q, grid),
            CoordinatePolicy::FullyInformative => {
                let b = spec.bias[i];
                Ok(VerificationResult {
                    passed: b.abs() <= ZERO_BIAS_TOL,
                    decoder_max_error: 0.0,
                    encoder_min_margin: -b * b,
                    min_action_gap: 0.0,
                })
            }
        })
        .collect()
}

/// (J_e, J_d) summed over coordinates.
pub fn costs(spec: &MultiCheapTalkSpec, policy: &ProductPolicy) -> Result<(f64, f64)> {
    policy.validate(spec.dim())?;
    let (mut j_e, mut j_d) = (0.0, 0.0);
    for (i, p) in policy.per_dimension.iter().enumerate() {
        match p {
            CoordinatePolicy::Quantizer(q) => {
                let (e, d) = cheap_talk_scalar::costs(&spec.coordinate(i), q)?;
                j_e += e;
                j_d += d;
            }
            CoordinatePolicy::FullyInformative => j_e += spec.bias[i] * spec.bias[i],
        }
    }
    Ok((j_e, j_d))
}

pub fn product_report(spec: &MultiCheapTalkSpec, policy: ProductPolicy) -> Result<EquilibriumReport> {
    let (j_e, j_d) = costs(spec, &policy)?;
    let all_full = policy
        .per_dimension
        .iter()
        .all(|p| matches!(p, CoordinatePolicy::FullyInformative));
    let all_babbling = policy
        .per_dimension
        .iter()
        .all(|p| matches!(p, CoordinatePolicy::Quantizer(q) if q.n_bins() == 1));
    let class = if all_full {
        EquilibriumClass::FullyInformative
    } else if all_babbling {
        EquilibriumClass::NonInformative
    } else {
        EquilibriumClass::Quantized
    };
    Ok(EquilibriumReport::new(class, Some(Policy::Product(policy)), Costs::new(j_e, j_d)))
}

/// Axis-aligned box with the decoder action played on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub action: Vec<f64>,
}

impl Cell {
    fn contains(&self, m: &[f64]) -> bool {
        m.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&x, (&a, &b))| a <= x && x < b || (x == b && b.is_infinite()))
    }
}

/// Checks a user-supplied partition into boxes: centroid actions and encoder
/// best response on the product grid. Grid points outside every cell fail.
pub fn verify_cells(spec: &MultiCheapTalkSpec, cells: &[Cell], grid: usize) -> Result<MultiVerification> {
    spec.validate()?;
    let n = spec.dim();
    if cells.is_empty() {
        return Err(Error::InvalidPolicy("no cells supplied".into()));
    }
    for c in cells {
        if c.lo.len() != n || c.hi.len() != n || c.action.len() != n {
            return Err(Error::InvalidPolicy(format!("cell does not have {n} coordinates")));
        }
        if c.lo.iter().zip(&c.hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidPolicy("cell with empty extent".into()));
        }
    }
    let mut decoder_max_error: f64 = 0.0;
    for c in cells {
        for i in 0..n {
            let err = match spec.sources[i].interval_mean(c.lo[i], c.hi[i]) {
                Ok(mean) => (mean - c.action[i]).abs(),
                Err(Error::EmptyBin { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            decoder_max_error = decoder_max_error.max(err);
        }
    }
    let points: Vec<Vec<f64>> = spec
        .sources
        .iter()
        .map(|s| support_grid(s, grid).collect())
        .collect();
    let cost = |m: &[f64], u: &[f64]| -> f64 { (0..n).map(|i| (m[i] - u[i] - spec.bias[i]).powi(2)).sum() };
    let mut encoder_min_margin = f64::INFINITY;
    for_each_product(&points, |m| {
        let Some(own) = cells.iter().find(|c| c.contains(m)) else {
            encoder_min_margin = f64::NEG_INFINITY;
            return;
        };
        let own_cost = cost(m, &own.action);
        let best = cells
            .iter()
            .map(|c| cost(m, &c.action))
            .fold(f64::INFINITY, f64::min);
        encoder_min_margin = encoder_min_margin.min(best - own_cost);
    });
    Ok(MultiVerification {
        passed: decoder_max_error <= DECODER_TOL && encoder_min_margin >= ENCODER_SLACK,
        decoder_max_error,
        encoder_min_margin,
    })
}

pub fn stackelberg_multi(spec: &MultiCheapTalkSpec) -> Result<EquilibriumReport> {
    spec.validate()?;
    let b2: f64 = spec.bias.iter().map(|b| b * b).sum();
    let policy = ProductPolicy {
        per_dimension: vec![CoordinatePolicy::FullyInformative; spec.dim()],
    };
    Ok(EquilibriumReport::new(
        EquilibriumClass::FullyInformative,
        Some(Policy::Product(policy)),
        Costs::new(b2, 0.0),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square(b: [f64; 2]) -> MultiCheapTalkSpec {
        let u = SourceModel::uniform(0.0, 1.0).unwrap();
        MultiCheapTalkSpec::new(vec![u, u], b.to_vec()).unwrap()
    }

    #[test]
    fn linear_equilibrium_in_unbiased_coordinate() {
        let spec = unit_square([0.3, 0.0]);
        let policy = build_product_equilibrium(&spec, &[BinRequest::Bins(1), BinRequest::Full])
            .unwrap()
            .found()
            .unwrap();
        let m = [0.8, 0.37];
        let x = policy.encode(&m);
        assert_eq!(x, vec![0.0, 0.37]);
        assert_eq!(policy.decode(&x), vec![0.5, 0.37]);
        assert!(verify_multi(&spec, &policy, 200).unwrap().passed);
        let (j_e, j_d) = costs(&spec, &policy).unwrap();
        assert!((j_d - 1.0 / 12.0).abs() < 1e-15);
        assert!((j_e - 1.0 / 12.0 - 0.09).abs() < 1e-15);
    }

    #[test]
    fn aligned_objectives_reveal_everything() {
        let spec = unit_square([0.0, 0.0]);
        let policy = build_product_equilibrium(&spec, &[BinRequest::Full, BinRequest::Full])
            .unwrap()
            .found()
            .unwrap();
        assert_eq!(policy.decode(&policy.encode(&[0.1, 0.9])), vec![0.1, 0.9]);
        assert_eq!(costs(&spec, &policy).unwrap(), (0.0, 0.0));
        let r = product_report(&spec, policy).unwrap();
        assert_eq!(r.class, EquilibriumClass::FullyInformative);
    }

    #[test]
    fn full_revelation_on_biased_coordinate_is_rejected() {
        let spec = unit_square([0.3, 0.0]);
        assert!(matches!(
            build_product_equilibrium(&spec, &[BinRequest::Full, BinRequest::Bins(1)]),
            Err(Error::BiasMismatch { index: 0, .. })
        ));
    }

    #[test]
    fn product_of_scalar_equilibria() {
        let spec = unit_square([0.1, 0.2]);
        let policy = build_product_equilibrium(&spec, &[BinRequest::Bins(2), BinRequest::Bins(1)])
            .unwrap()
            .found()
            .unwrap();
        // widths shrink by 4b: t + (t − 0.4) = 1
        let CoordinatePolicy::Quantizer(q) = &policy.per_dimension[0] else {
            panic!("expected a quantizer")
        };
        assert!((q.boundaries[0] - 0.7).abs() < 1e-9);
        assert!(verify_multi(&spec, &policy, 150).unwrap().passed);
        let (j_e, j_d) = costs(&spec, &policy).unwrap();
        let d0 = cheap_talk_scalar::costs(&spec.coordinate(0), q).unwrap().1;
        assert!((j_d - d0 - 1.0 / 12.0).abs() < 1e-10);
        assert!((j_e - j_d - 0.05).abs() < 1e-10);
    }

    #[test]
    fn wrong_decoder_fails() {
        let spec = unit_square([0.3, 0.0]);
        let policy = ProductPolicy {
            per_dimension: vec![
                CoordinatePolicy::Quantizer(QuantizerPolicy {
                    boundaries: vec![],
                    actions: vec![0.4],
                }),
                CoordinatePolicy::FullyInformative,
            ],
        };
        let v = verify_multi(&spec, &policy, 100).unwrap();
        assert!(!v.passed);
        assert!((v.decoder_max_error - 0.1).abs() < 1e-12);
    }

    #[test]
    fn stackelberg_examples() {
        assert!((stackelberg_multi(&unit_square([0.3, 0.0])).unwrap().costs.encoder - 0.09).abs() < 1e-15);
        assert_eq!(stackelberg_multi(&unit_square([0.0, 0.0])).unwrap().costs.encoder, 0.0);
        assert!((stackelberg_multi(&unit_square([0.1, 0.2])).unwrap().costs.encoder - 0.05).abs() < 1e-15);
    }

    #[test]
    fn cells_from_product_policy_verify() {
        let spec = unit_square([0.1, 0.2]);
        let cells = vec![
            Cell {
                lo: vec![0.0, 0.0],
                hi: vec![0.7, 1.0],
                action: vec![0.35, 0.5],
            },
            Cell {
                lo: vec![0.7, 0.0],
                hi: vec![1.0, 1.0],
                action: vec![0.85, 0.5],
            },
        ];
        assert!(verify_cells(&spec, &cells, 100).unwrap().passed);
        let mut shifted = cells.clone();
        shifted[0].hi[0] = 0.6;
        shifted[1].lo[0] = 0.6;
        shifted[0].action[0] = 0.3;
        shifted[1].action[0] = 0.8;
        assert!(!verify_cells(&spec, &shifted, 100).unwrap().passed);
    }

    #[test]
    fn bin_request_json() {
        let r: Vec<BinRequest> = serde_json::from_str(r#"[2, "full", 1]"#).unwrap();
        assert_eq!(r, vec![BinRequest::Bins(2), BinRequest::Full, BinRequest::Bins(1)]);
        assert!(serde_json::from_str::<BinRequest>(r#""many""#).is_err());
    }

    fn arbitrary_quantizer() -> impl Strategy<Value = QuantizerPolicy> {
        prop::collection::vec(0.02..0.98f64, 0..3).prop_flat_map(|mut cuts| {
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|a, b| (*a - *b).abs() < 0.02);
            let n = cuts.len() + 1;
            (Just(cuts), prop::collection::vec(-0.01..0.01f64, n), any::<bool>())
        })
        .prop_map(|(cuts, jitter, exact)| {
            let mut edges = vec![0.0];
            edges.extend(&cuts);
            edges.push(1.0);
            let actions = edges
                .windows(2)
                .zip(&jitter)
                .map(|(w, j)| 0.5 * (w[0] + w[1]) + if exact { 0.0 } else { *j })
                .collect();
            QuantizerPolicy {
                boundaries: cuts,
                actions,
            }
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn joint_check_agrees_with_coordinates(
            q0 in arbitrary_quantizer(),
            q1 in arbitrary_quantizer(),
            b0 in -0.1..0.1f64,
            b1 in -0.1..0.1f64,
        ) {
            let spec = unit_square([b0, b1]);
            let policy = ProductPolicy {
                per_dimension: vec![CoordinatePolicy::Quantizer(q0), CoordinatePolicy::Quantizer(q1)],
            };
            let grid = 120;
            let joint = verify_multi(&spec, &policy, grid).unwrap().passed;
            let coords = verify_coordinates(&spec, &policy, grid).unwrap();
            prop_assert_eq!(joint, coords.iter().all(|c| c.passed));
        }
    }
}
