//! Seeded, sharded Monte Carlo evaluation of signaling policies.
//!
//! Samples are drawn in fixed shards of [`SHARD_SIZE`]; shard `s` uses a
//! ChaCha8 stream keyed by (seed, s), so results do not depend on the number
//! of worker threads. Shard statistics are merged in shard order.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signaling_multi::{AffinePairMatrix, MatrixGameSpec};
use crate::signaling_scalar::{AffinePairScalar, ScalarGameSpec};

pub const SHARD_SIZE: usize = 8192;
pub const SE_BAND: f64 = 3.0;
pub const MIN_CERTIFY_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
}

impl SimConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            seed,
            antithetic: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::Precondition("at least two samples are needed".into()));
        }
        if self.antithetic && self.n_samples % 2 == 1 {
            return Err(Error::Precondition(
                "antithetic sampling needs an even sample count".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl CostEstimate {
    /// |mean − target| within `SE_BAND` standard errors.
    pub fn agrees_with(&self, target: f64) -> bool {
        (self.mean - target).abs() <= SE_BAND * self.std_error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimCosts {
    #[serde(rename = "J_e")]
    pub encoder: CostEstimate,
    #[serde(rename = "J_d")]
    pub decoder: CostEstimate,
    #[serde(rename = "J_total")]
    pub total: CostEstimate,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0.0 {
            return o;
        }
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n / n,
            m2: self.m2 + o.m2 + d * d * self.n * o.n / n,
        }
    }

    fn estimate(&self, n_samples: usize) -> CostEstimate {
        let var = if self.n > 1.0 { self.m2 / (self.n - 1.0) } else { 0.0 };
        CostEstimate {
            mean: self.mean,
            std_error: (var / self.n).sqrt(),
            n: n_samples,
        }
    }
}

/// Lower Cholesky factor, row-major.
fn cholesky_rows(cov: &DMatrix<f64>) -> Result<Vec<f64>> {
    let l = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::LinearAlgebra("covariance is not positive definite".into()))?
        .l();
    Ok(l.transpose().as_slice().to_vec())
}

fn correlate(chol: &[f64], z: &[f64], out: &mut [f64]) {
    let n = z.len();
    for i in 0..n {
        out[i] = (0..=i).map(|j| chol[i * n + j] * z[j]).sum();
    }
}

/// Gaussian source (covariance `chol_m·chol_mᵀ`) and noise draws, shared by
/// every simulation so deviation runs see identical streams.
struct Sampler<'a> {
    n: usize,
    chol_m: &'a [f64],
    chol_w: &'a [f64],
    cfg: SimConfig,
}

impl Sampler<'_> {
    /// Evaluates `eval` on every sample; it writes `k` values per sample.
    fn run<F>(&self, k: usize, eval: F) -> Result<Vec<CostEstimate>>
    where
        F: Fn(&[f64], &[f64], &mut [f64]) -> Result<()> + Sync,
    {
        self.cfg.validate()?;
        let n_shards = self.cfg.n_samples.div_ceil(SHARD_SIZE);
        let shards: Vec<Result<Vec<Moments>>> = (0..n_shards)
            .into_par_iter()
            .map(|s| {
                let count = SHARD_SIZE.min(self.cfg.n_samples - s * SHARD_SIZE);
                self.shard(s as u64, count, k, &eval)
            })
            .collect();
        let mut total = vec![Moments::default(); k];
        for shard in shards {
            for (acc, m) in total.iter_mut().zip(shard?) {
                *acc = acc.merge(m);
            }
        }
        Ok(total.iter().map(|m| m.estimate(self.cfg.n_samples)).collect())
    }

    fn shard<F>(&self, stream: u64, count: usize, k: usize, eval: &F) -> Result<Vec<Moments>>
    where
        F: Fn(&[f64], &[f64], &mut [f64]) -> Result<()>,
    {
        let n = self.n;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(stream);
        let mut z = vec![0.0; 2 * n];
        let (mut m, mut w) = (vec![0.0; n], vec![0.0; n]);
        let mut vals = vec![0.0; k];
        let mut pair_sum = vec![0.0; k];
        let mut acc = vec![Moments::default(); k];
        for i in 0..count {
            let mirror = self.cfg.antithetic && i % 2 == 1;
            if mirror {
                z.iter_mut().for_each(|v| *v = -*v);
            } else {
                z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
            }
            correlate(self.chol_m, &z[..n], &mut m);
            correlate(self.chol_w, &z[n..], &mut w);
            eval(&m, &w, &mut vals)?;
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::SimulationAbort { input: m[0] });
            }
            if self.cfg.antithetic {
                if mirror {
                    for j in 0..k {
                        acc[j].push(0.5 * (pair_sum[j] + vals[j]));
                    }
                } else {
                    pair_sum.copy_from_slice(&vals);
                }
            } else {
                for j in 0..k {
                    acc[j].push(vals[j]);
                }
            }
        }
        Ok(acc)
    }
}

fn scalar_sampler(spec: &ScalarGameSpec, cfg: SimConfig) -> ([f64; 1], [f64; 1], SimConfig) {
    ([spec.source_power.sqrt()], [spec.noise_power.sqrt()], cfg)
}

fn to_costs(v: &[CostEstimate]) -> SimCosts {
    SimCosts {
        encoder: v[0],
        decoder: v[1],
        total: v[2],
    }
}

/// Simulates arbitrary scalar policies x = encoder(m), u = decoder(x + w).
pub fn estimate_costs<E, D>(encoder: E, decoder: D, spec: &ScalarGameSpec, cfg: SimConfig) -> Result<SimCosts>
where
    E: Fn(f64) -> f64 + Sync,
    D: Fn(f64) -> f64 + Sync,
{
    spec.validate()?;
    let (cm, cw, cfg) = scalar_sampler(spec, cfg);
    let sampler = Sampler {
        n: 1,
        chol_m: &cm,
        chol_w: &cw,
        cfg,
    };
    let (lambda, b) = (spec.lambda, spec.bias);
    let est = sampler.run(3, |m, w, out| {
        let x = encoder(m[0]);
        if !x.is_finite() {
            return Err(Error::SimulationAbort { input: m[0] });
        }
        let y = x + w[0];
        let u = decoder(y);
        if !u.is_finite() {
            return Err(Error::SimulationAbort { input: y });
        }
        let d = (m[0] - u).powi(2);
        let e = (m[0] - u - b).powi(2) + lambda * x * x;
        out.copy_from_slice(&[e, d, e + d]);
        Ok(())
    })?;
    Ok(to_costs(&est))
}

pub fn estimate_affine(pair: &AffinePairScalar, spec: &ScalarGameSpec, cfg: SimConfig) -> Result<SimCosts> {
    let p = *pair;
    estimate_costs(move |m| p.encode(m), move |y| p.decode(y), spec, cfg)
}

/// Flat row-major affine pair used in the hot loop.
#[derive(Debug, Clone, PartialEq)]
struct FlatPair {
    n: usize,
    a: Vec<f64>,
    c: Vec<f64>,
    k: Vec<f64>,
    l: Vec<f64>,
}

impl FlatPair {
    fn from_matrix(p: &AffinePairMatrix) -> Self {
        Self {
            n: p.c.len(),
            a: p.a.transpose().as_slice().to_vec(),
            c: p.c.as_slice().to_vec(),
            k: p.k.transpose().as_slice().to_vec(),
            l: p.l.as_slice().to_vec(),
        }
    }

    fn from_scalar(p: &AffinePairScalar) -> Self {
        Self {
            n: 1,
            a: vec![p.a],
            c: vec![p.c],
            k: vec![p.k],
            l: vec![p.l],
        }
    }

    /// (encoder cost, decoder cost) for one draw.
    fn costs(&self, m: &[f64], w: &[f64], bias: &[f64], lambda: f64, x: &mut [f64], y: &mut [f64]) -> (f64, f64) {
        let n = self.n;
        let mut power = 0.0;
        for i in 0..n {
            x[i] = self.c[i] + (0..n).map(|j| self.a[i * n + j] * m[j]).sum::<f64>();
            y[i] = x[i] + w[i];
            power += x[i] * x[i];
        }
        let (mut e, mut d) = (0.0, 0.0);
        for i in 0..n {
            let u = self.l[i] + (0..n).map(|j| self.k[i * n + j] * y[j]).sum::<f64>();
            let err = m[i] - u;
            d += err * err;
            e += (err - bias[i]).powi(2);
        }
        (e + lambda * power, d)
    }
}

struct AffineSetting {
    chol_m: Vec<f64>,
    chol_w: Vec<f64>,
    bias: Vec<f64>,
    lambda: f64,
}

impl AffineSetting {
    fn scalar(spec: &ScalarGameSpec) -> Self {
        Self {
            chol_m: vec![spec.source_power.sqrt()],
            chol_w: vec![spec.noise_power.sqrt()],
            bias: vec![spec.bias],
            lambda: spec.lambda,
        }
    }

    fn matrix(spec: &MatrixGameSpec) -> Result<Self> {
        Ok(Self {
            chol_m: cholesky_rows(&spec.source_cov)?,
            chol_w: cholesky_rows(&spec.noise_cov)?,
            bias: spec.bias.as_slice().to_vec(),
            lambda: spec.lambda,
        })
    }

    fn sampler(&self, cfg: SimConfig) -> Sampler<'_> {
        Sampler {
            n: self.bias.len(),
            chol_m: &self.chol_m,
            chol_w: &self.chol_w,
            cfg,
        }
    }

    fn estimate(&self, pair: &FlatPair, cfg: SimConfig) -> Result<SimCosts> {
        let n = pair.n;
        let est = self.sampler(cfg).run(3, |m, w, out| {
            let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
            let (e, d) = pair.costs(m, w, &self.bias, self.lambda, &mut x, &mut y);
            out.copy_from_slice(&[e, d, e + d]);
            Ok(())
        })?;
        Ok(to_costs(&est))
    }
}

pub fn estimate_affine_matrix(pair: &AffinePairMatrix, spec: &MatrixGameSpec, cfg: SimConfig) -> Result<SimCosts> {
    spec.validate()?;
    AffineSetting::matrix(spec)?.estimate(&FlatPair::from_matrix(pair), cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Player {
    Encoder,
    Decoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMargin {
    pub player: Player,
    pub coefficient: String,
    /// Smallest mean(perturbed − base) + 3·SE over the step grid.
    pub worst_margin: f64,
    pub worst_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationCertificate {
    pub passed: bool,
    pub worst_margin: f64,
    pub coefficients: Vec<CoefficientMargin>,
}

fn coefficient_slots(n: usize) -> Vec<(Player, &'static str, usize)> {
    let mut slots = Vec::new();
    for (player, names) in [(Player::Encoder, ["A", "C"]), (Player::Decoder, ["K", "L"])] {
        for i in 0..n * n {
            slots.push((player, names[0], i));
        }
        for i in 0..n {
            slots.push((player, names[1], i));
        }
    }
    slots
}

fn slot_mut<'a>(p: &'a mut FlatPair, name: &str, i: usize) -> &'a mut f64 {
    match name {
        "A" => &mut p.a[i],
        "C" => &mut p.c[i],
        "K" => &mut p.k[i],
        _ => &mut p.l[i],
    }
}

fn slot_label(name: &str, i: usize, n: usize) -> String {
    match (name, n) {
        (_, 1) => name.to_string(),
        ("A" | "K", _) => format!("{name}[{},{}]", i / n, i % n),
        _ => format!("{name}[{i}]"),
    }
}

fn certify(setting: &AffineSetting, base: &FlatPair, cfg: SimConfig, steps: &[f64]) -> Result<DeviationCertificate> {
    cfg.validate()?;
    if cfg.n_samples < MIN_CERTIFY_SAMPLES {
        return Err(Error::Precondition(format!(
            "certification needs at least {MIN_CERTIFY_SAMPLES} samples"
        )));
    }
    if steps.is_empty() {
        return Err(Error::Precondition("step grid is empty".into()));
    }
    let symmetric = steps
        .iter()
        .all(|s| steps.iter().any(|t| (s + t).abs() <= 1e-15 * s.abs().max(1.0)));
    if !symmetric {
        return Err(Error::Precondition("step grid must be symmetric around zero".into()));
    }
    let n = base.n;
    let mut coefficients = Vec::new();
    for (player, name, i) in coefficient_slots(n) {
        let mut worst = (f64::INFINITY, 0.0);
        for &step in steps {
            let mut moved = base.clone();
            *slot_mut(&mut moved, name, i) += step;
            let own = usize::from(player == Player::Decoder);
            let est = setting.sampler(cfg).run(1, |m, w, out| {
                let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
                let b = base.costs(m, w, &setting.bias, setting.lambda, &mut x, &mut y);
                let p = moved.costs(m, w, &setting.bias, setting.lambda, &mut x, &mut y);
                out[0] = if own == 0 { p.0 - b.0 } else { p.1 - b.1 };
                Ok(())
            })?;
            let margin = est[0].mean + SE_BAND * est[0].std_error;
            if margin < worst.0 {
                worst = (margin, step);
            }
        }
        coefficients.push(CoefficientMargin {
            player,
            coefficient: slot_label(name, i, n),
            worst_margin: worst.0,
            worst_step: worst.1,
        });
    }
    let worst_margin = coefficients
        .iter()
        .map(|c| c.worst_margin)
        .fold(f64::INFINITY, f64::min);
    Ok(DeviationCertificate {
        passed: worst_margin >= 0.0,
        worst_margin,
        coefficients,
    })
}

/// Unilateral-deviation test: every coefficient of each player is moved by
/// each step under common random numbers and the own-cost change must not be
/// negative beyond three paired standard errors.
pub fn deviation_certify(
    pair: &AffinePairScalar,
    spec: &ScalarGameSpec,
    cfg: SimConfig,
    steps: &[f64],
) -> Result<DeviationCertificate> {
    spec.validate()?;
    certify(&AffineSetting::scalar(spec), &FlatPair::from_scalar(pair), cfg, steps)
}

pub fn deviation_certify_matrix(
    pair: &AffinePairMatrix,
    spec: &MatrixGameSpec,
    cfg: SimConfig,
    steps: &[f64],
) -> Result<DeviationCertificate> {
    spec.validate()?;
    certify(&AffineSetting::matrix(spec)?, &FlatPair::from_matrix(pair), cfg, steps)
}
