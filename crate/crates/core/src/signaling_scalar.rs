//! Scalar Gaussian signaling game: the encoder sends x over y = x + w and pays
//! (m−u−b)² + λx², the decoder pays (m−u)².
//!
//! Only second moments enter, so the source and noise are described by
//! E[m²] and E[w²] (both zero mean).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{Costs, EquilibriumClass, EquilibriumReport, Policy};

const SCAN_LOWER: f64 = 1e-6;
pub const ITERATION_DAMPING: f64 = 0.5;
pub const ITERATION_TOL: f64 = 1e-13;
pub const ITERATION_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarGameSpec {
    pub source_power: f64,
    pub noise_power: f64,
    pub lambda: f64,
    pub bias: f64,
}

impl ScalarGameSpec {
    pub fn new(source_power: f64, noise_power: f64, lambda: f64, bias: f64) -> Result<Self> {
        let spec = Self {
            source_power,
            noise_power,
            lambda,
            bias,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.source_power.is_finite() && self.source_power > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "source power must be positive, got {}",
                self.source_power
            )));
        }
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "noise power must be positive, got {}",
                self.noise_power
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        if !self.bias.is_finite() {
            return Err(Error::InvalidSpec(format!("bias must be finite, got {}", self.bias)));
        }
        Ok(())
    }

    /// γ = E[w²]/E[m²].
    pub fn gamma(&self) -> f64 {
        self.noise_power / self.source_power
    }

    /// E[m²]/E[w²]; informative affine play needs 0 < λ below this.
    pub fn threshold(&self) -> f64 {
        self.source_power / self.noise_power
    }

    pub fn admits_informative(&self) -> bool {
        self.lambda > 0.0 && self.lambda < self.threshold()
    }

    /// T maps [0, bound] into itself.
    pub fn t_map_bound(&self) -> f64 {
        (1.0 / self.gamma()).max(1.0) / self.lambda
    }
}

/// Encoder x = Am + C, decoder u = Ky + L.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinePairScalar {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "L")]
    pub l: f64,
}

impl AffinePairScalar {
    pub const BABBLING: Self = Self {
        a: 0.0,
        c: 0.0,
        k: 0.0,
        l: 0.0,
    };

    pub fn encode(&self, m: f64) -> f64 {
        self.a * m + self.c
    }

    pub fn decode(&self, y: f64) -> f64 {
        self.k * y + self.l
    }
}

pub fn t_map(a: f64, spec: &ScalarGameSpec) -> Result<f64> {
    if spec.lambda == 0.0 {
        return Err(Error::Domain("the fixed-point map at lambda = 0".into()));
    }
    let f = a / (a * a + spec.gamma());
    Ok(f / (f * f + spec.lambda))
}

/// MMSE decoder for the encoder (A, C).
pub fn best_response_decoder(a: f64, c: f64, spec: &ScalarGameSpec) -> (f64, f64) {
    let k = a * spec.source_power / (a * a * spec.source_power + spec.noise_power);
    (k, -k * c)
}

/// Encoder minimizing its own cost against the decoder (K, L).
pub fn best_response_encoder(k: f64, l: f64, spec: &ScalarGameSpec) -> (f64, f64) {
    let denom = k * k + spec.lambda;
    if denom == 0.0 {
        return (0.0, 0.0);
    }
    (k / denom, -k * (l + spec.bias) / denom)
}

/// (J_e, J_d) of an arbitrary affine pair.
pub fn pair_costs(spec: &ScalarGameSpec, p: &AffinePairScalar) -> (f64, f64) {
    let (em, ew) = (spec.source_power, spec.noise_power);
    let shared = (1.0 - p.k * p.a).powi(2) * em + p.k * p.k * ew;
    let offset = p.k * p.c + p.l;
    let j_d = shared + offset * offset;
    let j_e = shared + (offset + spec.bias).powi(2) + spec.lambda * (p.a * p.a * em + p.c * p.c);
    (j_e, j_d)
}

/// Both informative equilibria (positive A first), when they exist.
pub fn informative_pairs(spec: &ScalarGameSpec) -> Option<[AffinePairScalar; 2]> {
    if !spec.admits_informative() {
        return None;
    }
    let (em, ew, lambda, b) = (spec.source_power, spec.noise_power, spec.lambda, spec.bias);
    let k_abs = ((lambda * em / ew).sqrt() - lambda).sqrt();
    let a_abs = ((ew / (lambda * em)).sqrt() - ew / em).sqrt();
    let make = |sign: f64| {
        let (a, k) = (sign * a_abs, sign * k_abs);
        let c = a * b / (a * k - 1.0);
        AffinePairScalar { a, c, k, l: -k * c }
    };
    Some([make(1.0), make(-1.0)])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarIteration {
    pub a: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Damped iteration A ← (1−d)A + d·T(A).
pub fn iterate_fixed_point(
    spec: &ScalarGameSpec,
    a0: f64,
    damping: f64,
    tol: f64,
    cap: usize,
) -> Result<ScalarIteration> {
    let mut a = a0;
    let mut residual = (t_map(a, spec)? - a).abs();
    let mut iterations = 0;
    while residual >= tol && iterations < cap {
        a += damping * (t_map(a, spec)? - a);
        residual = (t_map(a, spec)? - a).abs();
        iterations += 1;
    }
    Ok(ScalarIteration {
        a,
        residual,
        iterations,
    })
}

/// Nonzero positive fixed points of T located by a sign scan of T(A) − A.
pub fn scan_fixed_points(spec: &ScalarGameSpec, points: usize) -> Result<Vec<f64>> {
    let hi = spec.t_map_bound();
    let step = (hi - SCAN_LOWER) / (points - 1) as f64;
    let g = |a: f64| t_map(a, spec).map(|t| t - a);
    let mut roots = Vec::new();
    let mut prev_a = SCAN_LOWER;
    let mut prev_g = g(prev_a)?;
    for j in 1..points {
        let a = SCAN_LOWER + step * j as f64;
        let ga = g(a)?;
        if ga == 0.0 {
            roots.push(a);
        } else if prev_g != 0.0 && (ga < 0.0) != (prev_g < 0.0) {
            let (mut lo, mut hi) = (prev_a, a);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if (g(mid)? < 0.0) == (prev_g < 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev_a = a;
        prev_g = ga;
    }
    Ok(roots)
}

fn babbling_report(spec: &ScalarGameSpec) -> EquilibriumReport {
    let (j_e, j_d) = pair_costs(spec, &AffinePairScalar::BABBLING);
    EquilibriumReport::new(
        EquilibriumClass::NonInformative,
        Some(Policy::AffineScalar(AffinePairScalar::BABBLING)),
        Costs::new(j_e, j_d),
    )
}

/// The affine Nash equilibrium of the scalar game.
pub fn solve_affine_nash(spec: &ScalarGameSpec) -> Result<EquilibriumReport> {
    spec.validate()?;
    if spec.lambda == 0.0 {
        return Ok(babbling_report(spec).flag("no-affine-informative"));
    }
    let Some([pair, _]) = informative_pairs(spec) else {
        return Ok(babbling_report(spec).with_residual(0.0));
    };
    let (em, ew, lambda, b) = (spec.source_power, spec.noise_power, spec.lambda, spec.bias);
    let residual = (t_map(pair.a, spec)? - pair.a).abs();
    let k2 = pair.k * pair.k;
    let j_e = lambda / (k2 + lambda) * (em + (pair.l + b).powi(2)) + k2 * ew;
    let (_, j_d) = pair_costs(spec, &pair);

    let iter = iterate_fixed_point(
        spec,
        0.5 * spec.t_map_bound(),
        ITERATION_DAMPING,
        ITERATION_TOL,
        ITERATION_CAP,
    )?;
    let games = game_costs(spec);
    let mut report = EquilibriumReport::new(
        EquilibriumClass::InformativeAffine,
        Some(Policy::AffineScalar(pair)),
        Costs::new(j_e, j_d),
    )
    .with_residual(residual)
    .value("iteration_gap", (iter.a - pair.a).abs())
    .value("iterations", iter.iterations as f64)
    .value("g_u", games.g_u);
    if let Some(g_i) = games.g_i {
        report = report.value("g_i", g_i);
        if games.g_u < g_i {
            report = report.flag("babbling-preferred");
        }
    }
    if (iter.a - pair.a).abs() > 1e-9 {
        report = report.flag("iteration-mismatch");
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameCosts {
    pub g_i: Option<f64>,
    pub g_u: f64,
    pub j_star: f64,
}

/// Total equilibrium costs, informative (g_i) and babbling (g_u).
pub fn game_costs(spec: &ScalarGameSpec) -> GameCosts {
    let (em, ew, lambda, b) = (spec.source_power, spec.noise_power, spec.lambda, spec.bias);
    let g_u = 2.0 * em + b * b;
    let g_i = spec.admits_informative().then(|| {
        3.0 * (lambda * em * ew).sqrt() + b * b * (em / (lambda * ew)).sqrt() - lambda * ew
    });
    GameCosts {
        g_i,
        g_u,
        j_star: g_i.map_or(g_u, |g| g.min(g_u)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeamCosts {
    pub t_i: Option<f64>,
    pub t_u: f64,
    pub j_star_t: f64,
    /// Minimizing policy; absent at λ = 0 where the infimum is not attained.
    pub policy: Option<AffinePairScalar>,
}

/// The team-optimal linear policy when λ < 2E[m²]/E[w²].
pub fn team_policy(spec: &ScalarGameSpec) -> Option<AffinePairScalar> {
    let (em, ew, lambda, b) = (spec.source_power, spec.noise_power, spec.lambda, spec.bias);
    if !(lambda > 0.0 && lambda < 2.0 * spec.threshold()) {
        return None;
    }
    let k = ((lambda * em / (2.0 * ew)).sqrt() - 0.5 * lambda).sqrt();
    Some(AffinePairScalar {
        a: 2.0 * k / (2.0 * k * k + lambda),
        c: 0.0,
        k,
        l: -0.5 * b,
    })
}

/// Team cost J_e + J_d of a linear pair with C = 0.
fn team_cost_of(spec: &ScalarGameSpec, p: &AffinePairScalar) -> f64 {
    let (em, ew, lambda, b) = (spec.source_power, spec.noise_power, spec.lambda, spec.bias);
    let k2 = p.k * p.k;
    (b * b * k2 + lambda * (2.0 * em + (p.l + b).powi(2) + p.l * p.l)) / (2.0 * k2 + lambda)
        + 2.0 * k2 * ew
}

pub fn team_costs(spec: &ScalarGameSpec) -> TeamCosts {
    let (em, b) = (spec.source_power, spec.bias);
    let t_u = 2.0 * em + 0.5 * b * b;
    let babbling = AffinePairScalar {
        l: -0.5 * b,
        ..AffinePairScalar::BABBLING
    };
    if spec.lambda == 0.0 {
        let t_i = 0.5 * b * b;
        return TeamCosts {
            t_i: Some(t_i),
            t_u,
            j_star_t: t_i,
            policy: None,
        };
    }
    match team_policy(spec) {
        Some(p) => {
            let t_i = team_cost_of(spec, &p);
            let informative = t_i <= t_u;
            TeamCosts {
                t_i: Some(t_i),
                t_u,
                j_star_t: t_i.min(t_u),
                policy: Some(if informative { p } else { babbling }),
            }
        }
        None => TeamCosts {
            t_i: None,
            t_u,
            j_star_t: t_u,
            policy: Some(babbling),
        },
    }
}

pub fn team_report(spec: &ScalarGameSpec) -> Result<EquilibriumReport> {
    spec.validate()?;
    let team = team_costs(spec);
    let mut report = match team.policy {
        Some(p) => {
            let (j_e, j_d) = pair_costs(spec, &p);
            EquilibriumReport::new(EquilibriumClass::Team, Some(Policy::AffineScalar(p)), Costs::new(j_e, j_d))
        }
        None => EquilibriumReport::new(
            EquilibriumClass::Team,
            None,
            Costs::new(0.25 * spec.bias * spec.bias, 0.25 * spec.bias * spec.bias),
        )
        .flag("infimum-not-attained"),
    };
    report = report.value("t_u", team.t_u).value("J_star_t", team.j_star_t);
    if let Some(t_i) = team.t_i {
        report = report.value("t_i", t_i);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceOfAnarchy {
    pub poa: f64,
    pub game: GameCosts,
    pub team: TeamCosts,
    /// b = 0 with both game and team babbling, where the ratio is exactly 1.
    pub babbling_corner: bool,
}

pub fn price_of_anarchy(spec: &ScalarGameSpec) -> Result<PriceOfAnarchy> {
    spec.validate()?;
    let game = game_costs(spec);
    let team = team_costs(spec);
    let babbling_corner = spec.bias == 0.0 && team.t_i.is_none_or(|t| t >= team.t_u);
    let poa = if babbling_corner {
        1.0
    } else {
        game.j_star / team.j_star_t
    };
    Ok(PriceOfAnarchy {
        poa,
        game,
        team,
        babbling_corner,
    })
}

fn check_power(p: f64) -> Result<()> {
    if !(p >= 0.0 && p.is_finite()) {
        return Err(Error::Domain(format!("the power bound at P = {p}")));
    }
    Ok(())
}

/// Lower bound on the encoder cost at transmit power P.
pub fn it_bound_game(spec: &ScalarGameSpec, p: f64) -> Result<f64> {
    check_power(p)?;
    let b = spec.bias;
    Ok(b * b + spec.lambda * p + spec.source_power / (1.0 + p / spec.noise_power))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItBound {
    pub p_star: f64,
    pub encoder_bound: f64,
    pub game_bound: f64,
}

pub fn it_bound_optimal(spec: &ScalarGameSpec) -> Result<ItBound> {
    spec.validate()?;
    let (em, ew) = (spec.source_power, spec.noise_power);
    if spec.lambda == 0.0 {
        let b2 = spec.bias * spec.bias;
        return Ok(ItBound {
            p_star: f64::INFINITY,
            encoder_bound: b2,
            game_bound: b2,
        });
    }
    let p_star = if spec.lambda < spec.threshold() {
        (em * ew / spec.lambda).sqrt() - ew
    } else {
        0.0
    };
    let encoder_bound = it_bound_game(spec, p_star)?;
    Ok(ItBound {
        p_star,
        encoder_bound,
        game_bound: encoder_bound + em / (1.0 + p_star / ew),
    })
}

/// Lower bound on the team cost, min over P of λP + 2E[m²]/(1+P/E[w²]) + b²/2.
pub fn it_bound_team(spec: &ScalarGameSpec) -> f64 {
    let (em, ew, lambda, b) = (spec.source_power, spec.noise_power, spec.lambda, spec.bias);
    if lambda == 0.0 {
        return 0.5 * b * b;
    }
    let p = ((2.0 * em * ew / lambda).sqrt() - ew).max(0.0);
    lambda * p + 2.0 * em / (1.0 + p / ew) + 0.5 * b * b
}

/// Encoder commits to a linear policy; the decoder best-responds.
pub fn solve_stackelberg(spec: &ScalarGameSpec) -> Result<EquilibriumReport> {
    spec.validate()?;
    let (em, ew, lambda, b) = (spec.source_power, spec.noise_power, spec.lambda, spec.bias);
    if lambda == 0.0 {
        return Ok(EquilibriumReport::new(
            EquilibriumClass::Stackelberg,
            None,
            Costs::new(b * b, 0.0),
        )
        .flag("infimum-not-attained"));
    }
    let a = if lambda >= spec.threshold() {
        0.0
    } else {
        ((ew / (lambda * em)).sqrt() - ew / em).sqrt()
    };
    let (k, l) = best_response_decoder(a, 0.0, spec);
    let pair = AffinePairScalar { a, c: 0.0, k, l };
    let j_d = em * ew / (a * a * em + ew);
    let j_e = j_d + b * b + lambda * a * a * em;
    Ok(EquilibriumReport::new(
        EquilibriumClass::Stackelberg,
        Some(Policy::AffineScalar(pair)),
        Costs::new(j_e, j_d),
    ))
}

/// Source value at which the encoder is indifferent between sending
/// `x_alpha` and `x_beta` to the given affine decoder.
pub fn noisy_indifference_point(
    spec: &ScalarGameSpec,
    x_alpha: f64,
    x_beta: f64,
    decoder: &AffinePairScalar,
) -> Result<f64> {
    let mean = |x: f64| decoder.k * x + decoder.l;
    let second = |x: f64| mean(x).powi(2) + decoder.k * decoder.k * spec.noise_power;
    let gap = mean(x_beta) - mean(x_alpha);
    if gap == 0.0 {
        return Err(Error::DegeneratePair);
    }
    Ok((second(x_beta) - second(x_alpha)) / (2.0 * gap)
        + spec.lambda * (x_beta * x_beta - x_alpha * x_alpha) / (2.0 * gap)
        + spec.bias)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(em: f64, ew: f64, lambda: f64, b: f64) -> ScalarGameSpec {
        ScalarGameSpec::new(em, ew, lambda, b).unwrap()
    }

    fn affine(r: &EquilibriumReport) -> AffinePairScalar {
        match r.policy {
            Some(Policy::AffineScalar(p)) => p,
            ref other => panic!("unexpected policy {other:?}"),
        }
    }

    #[test]
    fn t_map_examples() {
        let s = spec(1.0, 1.0, 0.25, 0.0);
        assert_eq!(t_map(0.0, &s).unwrap(), 0.0);
        // f = 1/2, T = (1/2)/(1/4 + 1/4)
        assert!((t_map(1.0, &s).unwrap() - 1.0).abs() < 1e-15);
        for lambda in [0.01, 0.25, 3.0] {
            let s = spec(2.0, 0.5, lambda, 0.3);
            assert!(t_map(1e6, &s).unwrap() < 1.0 / lambda);
        }
        assert!(matches!(
            t_map(1.0, &spec(1.0, 1.0, 0.0, 0.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn informative_solution_with_bias() {
        let s = spec(1.0, 1.0, 0.25, 0.1);
        let r = solve_affine_nash(&s).unwrap();
        assert_eq!(r.class, EquilibriumClass::InformativeAffine);
        let p = affine(&r);
        assert!((p.a - 1.0).abs() < 1e-12);
        assert!((p.k - 0.5).abs() < 1e-12);
        assert!((p.c + 0.2).abs() < 1e-12);
        assert!((p.l - 0.1).abs() < 1e-12);
        assert!((p.a - 1.0 / (p.k + 0.25 / p.k)).abs() < 1e-12);
        assert!((p.k - p.a / (p.a * p.a + 1.0)).abs() < 1e-12);
        assert!((p.l + p.k * p.c).abs() < 1e-12);
        assert!((p.a * 0.1 - (p.a * p.k - 1.0) * p.c).abs() < 1e-12);
        assert!(r.diagnostics.fixed_point_residual.unwrap() < 1e-12);
        assert!((r.costs.encoder - 0.77).abs() < 1e-12);
        assert!((r.costs.decoder - 0.5).abs() < 1e-12);
        assert!(!r.has_flag("iteration-mismatch"));
    }

    #[test]
    fn zero_bias_solution_has_zero_intercepts() {
        let p = affine(&solve_affine_nash(&spec(1.0, 1.0, 0.25, 0.0)).unwrap());
        assert!((p.a - 1.0).abs() < 1e-12 && (p.k - 0.5).abs() < 1e-12);
        assert_eq!((p.c, p.l), (0.0, 0.0));
    }

    #[test]
    fn expensive_power_gives_babbling() {
        let r = solve_affine_nash(&spec(1.0, 1.0, 2.0, 0.1)).unwrap();
        assert_eq!(r.class, EquilibriumClass::NonInformative);
        assert!((r.costs.encoder - 1.01).abs() < 1e-15);
        assert_eq!(r.costs.decoder, 1.0);
    }

    #[test]
    fn zero_lambda_is_flagged() {
        let r = solve_affine_nash(&spec(1.0, 1.0, 0.0, 0.1)).unwrap();
        assert_eq!(r.class, EquilibriumClass::NonInformative);
        assert!(r.has_flag("no-affine-informative"));
    }

    #[test]
    fn negative_root_is_also_a_fixed_point() {
        let s = spec(2.0, 0.7, 0.3, -0.4);
        let [pos, neg] = informative_pairs(&s).unwrap();
        assert!(pos.a > 0.0);
        assert!((t_map(neg.a, &s).unwrap() - neg.a).abs() < 1e-12);
        let (e1, d1) = pair_costs(&s, &pos);
        let (e2, d2) = pair_costs(&s, &neg);
        assert!((e1 - e2).abs() < 1e-12 && (d1 - d2).abs() < 1e-12);
    }

    #[test]
    fn game_cost_examples() {
        let g = game_costs(&spec(1.0, 1.0, 0.25, 0.0));
        assert!((g.g_i.unwrap() - 1.25).abs() < 1e-15);
        assert_eq!(g.g_u, 2.0);
        assert!((g.j_star - 1.25).abs() < 1e-15);

        let g = game_costs(&spec(1.0, 1.0, 1.0, 0.3));
        assert!(g.g_i.is_none());
        assert!((g.j_star - 2.09).abs() < 1e-15);

        // crossover at b² = 0.75
        let below = game_costs(&spec(1.0, 1.0, 0.25, 0.8));
        assert_eq!(below.j_star, below.g_i.unwrap());
        let above = game_costs(&spec(1.0, 1.0, 0.25, 0.9));
        assert_eq!(above.j_star, above.g_u);
        let r = solve_affine_nash(&spec(1.0, 1.0, 0.25, 0.9)).unwrap();
        assert!(r.has_flag("babbling-preferred"));
    }

    #[test]
    fn team_cost_examples() {
        let t = team_costs(&spec(1.0, 1.0, 0.5, 0.0));
        assert!((t.t_i.unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(t.t_u, 2.0);
        assert!((t.j_star_t - 1.5).abs() < 1e-12);
        let p = t.policy.unwrap();
        assert_eq!((p.c, p.l), (0.0, 0.0));

        let t = team_costs(&spec(1.0, 1.0, 2.5, 0.4));
        assert!(t.t_i.is_none());
        assert!((t.j_star_t - 2.08).abs() < 1e-15);

        let t = team_costs(&spec(1.0, 1.0, 1e-12, 0.0));
        assert!(t.t_i.unwrap() < 1e-5);
    }

    #[test]
    fn team_policy_cost_matches_pair_costs() {
        let s = spec(1.3, 0.6, 0.4, 0.7);
        let p = team_policy(&s).unwrap();
        let (j_e, j_d) = pair_costs(&s, &p);
        assert!((j_e + j_d - team_costs(&s).t_i.unwrap()).abs() < 1e-12);
        assert!((team_costs(&s).t_i.unwrap() - it_bound_team(&s)).abs() < 1e-10);
    }

    #[test]
    fn price_of_anarchy_examples() {
        let poa = price_of_anarchy(&spec(1.0, 1.0, 0.25, 0.0)).unwrap();
        let t_i = 2.0 * 0.5f64.sqrt() - 0.25;
        assert!((poa.poa - 1.25 / t_i).abs() < 1e-12);
        assert!((poa.poa - 1.0737).abs() < 1e-4);

        let corner = price_of_anarchy(&spec(1.0, 1.0, 3.0, 0.0)).unwrap();
        assert!(corner.babbling_corner);
        assert_eq!(corner.poa, 1.0);
        let biased = price_of_anarchy(&spec(1.0, 1.0, 3.0, 0.5)).unwrap();
        assert!((biased.poa - 2.25 / 2.125).abs() < 1e-15);

        assert!(price_of_anarchy(&spec(1.0, 0.1, 0.05, 0.2)).unwrap().poa > 1.0);
    }

    #[test]
    fn it_bound_examples() {
        let s = spec(1.0, 1.0, 0.25, 0.0);
        let opt = it_bound_optimal(&s).unwrap();
        assert!((opt.p_star - 1.0).abs() < 1e-15);
        assert!((opt.encoder_bound - 0.75).abs() < 1e-15);
        let nash = solve_affine_nash(&s).unwrap();
        assert!((nash.costs.encoder - opt.encoder_bound).abs() < 1e-10);
        assert!((opt.game_bound - game_costs(&s).g_i.unwrap()).abs() < 1e-12);

        let s = spec(1.0, 1.0, 1.5, 0.2);
        let opt = it_bound_optimal(&s).unwrap();
        assert_eq!(opt.p_star, 0.0);
        assert!((opt.encoder_bound - 1.04).abs() < 1e-15);

        assert!(matches!(it_bound_game(&s, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn stackelberg_examples() {
        let r = solve_stackelberg(&spec(1.0, 1.0, 0.25, 0.1)).unwrap();
        let p = affine(&r);
        assert!((p.a - 1.0).abs() < 1e-15 && p.c == 0.0);
        assert!((r.costs.encoder - 0.76).abs() < 1e-12);

        let r = solve_stackelberg(&spec(1.0, 1.0, 4.0, 0.0)).unwrap();
        assert_eq!(affine(&r).a, 0.0);
        assert_eq!(r.costs.encoder, 1.0);
    }

    #[test]
    fn indifference_point_reductions() {
        let d = AffinePairScalar {
            a: 0.0,
            c: 0.0,
            k: 1.0,
            l: 0.0,
        };
        let s = spec(1.0, 1.0, 0.0, 0.0);
        assert!((noisy_indifference_point(&s, 0.0, 1.0, &d).unwrap() - 0.5).abs() < 1e-15);

        // λ = 0 with x = Am + C reduces to KA(mα+mβ)/2 + KC + L + b
        let (a, c, k, l, b) = (1.7, -0.3, 0.4, 0.25, 0.15);
        let s = spec(1.0, 2.0, 0.0, b);
        let d = AffinePairScalar { a, c, k, l };
        let (ma, mb) = (-0.6, 0.9);
        let got = noisy_indifference_point(&s, a * ma + c, a * mb + c, &d).unwrap();
        let expect = k * a * (ma + mb) / 2.0 + k * c + l + b;
        assert!((got - expect).abs() < 1e-12);

        assert!(matches!(
            noisy_indifference_point(&s, 0.5, 0.5, &d),
            Err(Error::DegeneratePair)
        ));
    }

    #[test]
    fn indifference_point_matches_quadrature() {
        let s = spec(1.0, 0.8, 0.3, 0.2);
        let d = AffinePairScalar {
            a: 0.0,
            c: 0.0,
            k: 0.5,
            l: 0.1,
        };
        let (xa, xb) = (-1.0, 1.0);
        // expected encoder cost given m and x, by Simpson over the noise density
        let sd = s.noise_power.sqrt();
        let cost = |m: f64, x: f64| {
            let n = 4000;
            let (lo, hi) = (-12.0 * sd, 12.0 * sd);
            let h = (hi - lo) / n as f64;
            let f = |w: f64| {
                let u = d.k * (x + w) + d.l;
                let pdf = (-0.5 * (w / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
                (m - u - s.bias).powi(2) * pdf
            };
            let mut acc = f(lo) + f(hi);
            for i in 1..n {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
            }
            acc * h / 3.0 + s.lambda * x * x
        };
        let diff = |m: f64| cost(m, xa) - cost(m, xb);
        let (mut lo, mut hi) = (-20.0, 20.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if (diff(mid) < 0.0) == (diff(lo) < 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let got = noisy_indifference_point(&s, xa, xb, &d).unwrap();
        assert!((got - 0.5 * (lo + hi)).abs() < 1e-8);
    }

    #[test]
    fn scan_finds_one_positive_root() {
        let s = spec(1.0, 1.0, 0.25, 0.1);
        let roots = scan_fixed_points(&s, 10_000).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0] - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn closed_form_is_consistent(em in 0.1..5.0f64, ew in 0.1..5.0f64, frac in 0.01..0.99f64, b in -2.0..2.0f64) {
            let s = spec(em, ew, frac * em / ew, b);
            let [p, _] = informative_pairs(&s).unwrap();
            prop_assert!((t_map(p.a, &s).unwrap() - p.a).abs() < 1e-12 * p.a.max(1.0));
            let (k, l) = best_response_decoder(p.a, p.c, &s);
            prop_assert!((k - p.k).abs() < 1e-10 && (l - p.l).abs() < 1e-10);
            let (a, c) = best_response_encoder(p.k, p.l, &s);
            prop_assert!((a - p.a).abs() < 1e-10 * p.a.max(1.0));
            prop_assert!((c - p.c).abs() < 1e-9 * p.c.abs().max(1.0));
            let (j_e, j_d) = pair_costs(&s, &p);
            let g = game_costs(&s).g_i.unwrap();
            prop_assert!((j_e + j_d - g).abs() < 1e-9 * g.max(1.0));
        }

        #[test]
        fn stackelberg_never_worse_for_encoder(em in 0.1..5.0f64, ew in 0.1..5.0f64, frac in 0.01..0.99f64, b in -2.0..2.0f64) {
            let s = spec(em, ew, frac * em / ew, b);
            let st = solve_stackelberg(&s).unwrap().costs.encoder;
            let nash = solve_affine_nash(&s).unwrap().costs.encoder;
            prop_assert!(st <= nash + 1e-12);
        }
    }
}
