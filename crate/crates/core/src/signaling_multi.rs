//! Multi-dimensional Gaussian signaling: y⃗ = x⃗ + w⃗, encoder cost
//! ‖m⃗−u⃗−b⃗‖² + λ‖x⃗‖², decoder cost ‖m⃗−u⃗‖².
//!
//! Affine equilibria are fixed points A = T(A) of the composed best responses,
//! T(A) = (FFᵀ+λI)⁻¹F with F = (AΣ_MAᵀ+Σ_W)⁻¹AΣ_M.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signaling_scalar::{self, ScalarGameSpec};

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const PIVOT_TOL: f64 = 1e-12;
pub const SINGULAR_VALUE_TOL: f64 = 1e-10;
pub const DEDUP_TOL: f64 = 1e-4;

mod rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err("matrix rows have different lengths".into());
        }
        Ok(DMatrix::from_fn(n_rows, n_cols, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let raw = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&raw).map_err(serde::de::Error::custom)
    }
}

mod column {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

pub use rows::{from_rows, to_rows};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrixGameSpec", into = "RawMatrixGameSpec")]
pub struct MatrixGameSpec {
    pub source_cov: DMatrix<f64>,
    pub noise_cov: DMatrix<f64>,
    pub lambda: f64,
    pub bias: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatrixGameSpec {
    source_cov: Vec<Vec<f64>>,
    noise_cov: Vec<Vec<f64>>,
    lambda: f64,
    #[serde(default)]
    bias: Option<Vec<f64>>,
}

impl TryFrom<RawMatrixGameSpec> for MatrixGameSpec {
    type Error = Error;

    fn try_from(raw: RawMatrixGameSpec) -> Result<Self> {
        let source_cov = from_rows(&raw.source_cov).map_err(Error::InvalidSpec)?;
        let noise_cov = from_rows(&raw.noise_cov).map_err(Error::InvalidSpec)?;
        let n = source_cov.nrows();
        let bias = raw.bias.map_or_else(|| DVector::zeros(n), DVector::from_vec);
        MatrixGameSpec::new(source_cov, noise_cov, raw.lambda, bias)
    }
}

impl From<MatrixGameSpec> for RawMatrixGameSpec {
    fn from(s: MatrixGameSpec) -> Self {
        Self {
            source_cov: to_rows(&s.source_cov),
            noise_cov: to_rows(&s.noise_cov),
            lambda: s.lambda,
            bias: Some(s.bias.as_slice().to_vec()),
        }
    }
}

fn check_covariance(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::InvalidSpec(format!(
            "{name} must be {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidSpec(format!("{name} has non-finite entries")));
    }
    if (m - m.transpose()).amax() > SYMMETRY_TOL {
        return Err(Error::InvalidSpec(format!("{name} is not symmetric")));
    }
    if m.clone().symmetric_eigenvalues().min() <= 0.0 {
        return Err(Error::InvalidSpec(format!("{name} is not positive definite")));
    }
    Ok(())
}

impl MatrixGameSpec {
    pub fn new(source_cov: DMatrix<f64>, noise_cov: DMatrix<f64>, lambda: f64, bias: DVector<f64>) -> Result<Self> {
        let spec = Self {
            source_cov,
            noise_cov,
            lambda,
            bias,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.source_cov.nrows();
        if n == 0 {
            return Err(Error::InvalidSpec("dimension must be at least 1".into()));
        }
        check_covariance("source covariance", &self.source_cov, n)?;
        check_covariance("noise covariance", &self.noise_cov, n)?;
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidSpec(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.bias.len() != n || self.bias.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpec(format!("bias must be a finite {n}-vector")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.source_cov.nrows()
    }

    pub fn from_scalar(s: &ScalarGameSpec) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, s.source_power),
            DMatrix::from_element(1, 1, s.noise_power),
            s.lambda,
            DVector::from_element(1, s.bias),
        )
    }

    /// Frobenius radius n·max(1, 1/λ²) that T maps into.
    pub fn t_map_radius(&self) -> f64 {
        self.dim() as f64 * (1.0f64).max(1.0 / (self.lambda * self.lambda))
    }

    pub fn is_diagonal(&self) -> bool {
        let off = |m: &DMatrix<f64>| {
            let n = m.nrows();
            (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)].abs() < 1e-12))
        };
        off(&self.source_cov) && off(&self.noise_cov)
    }
}

/// Encoder x⃗ = Am⃗ + C, decoder u⃗ = Ky⃗ + L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePairMatrix {
    #[serde(rename = "A", with = "rows")]
    pub a: DMatrix<f64>,
    #[serde(rename = "C", with = "column")]
    pub c: DVector<f64>,
    #[serde(rename = "K", with = "rows")]
    pub k: DMatrix<f64>,
    #[serde(rename = "L", with = "column")]
    pub l: DVector<f64>,
}

impl AffinePairMatrix {
    pub fn babbling(n: usize) -> Self {
        Self {
            a: DMatrix::zeros(n, n),
            c: DVector::zeros(n),
            k: DMatrix::zeros(n, n),
            l: DVector::zeros(n),
        }
    }
}

fn spd_solve(m: DMatrix<f64>, rhs: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    match m.clone().cholesky() {
        Some(ch) => Ok(ch.solve(rhs)),
        None => lu_solve(m, rhs, what),
    }
}

fn lu_solve(m: DMatrix<f64>, rhs: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let lu = m.lu();
    if lu.u().diagonal().iter().any(|p| p.abs() < PIVOT_TOL) {
        return Err(Error::LinearAlgebra(format!("{what} is singular")));
    }
    lu.solve(rhs)
        .ok_or_else(|| Error::LinearAlgebra(format!("{what} is singular")))
}

/// F = (AΣ_MAᵀ+Σ_W)⁻¹AΣ_M; the MMSE gain is K = Fᵀ.
fn gain_transpose(a: &DMatrix<f64>, spec: &MatrixGameSpec) -> Result<DMatrix<f64>> {
    let a_sigma = a * &spec.source_cov;
    let s = &a_sigma * a.transpose() + &spec.noise_cov;
    spd_solve(s, &a_sigma, "A Σ_M Aᵀ + Σ_W")
}

fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

pub fn t_map_matrix(a: &DMatrix<f64>, spec: &MatrixGameSpec) -> Result<DMatrix<f64>> {
    check_square(a, spec.dim())?;
    let f = gain_transpose(a, spec)?;
    let normal = &f * f.transpose() + identity(spec.dim()) * spec.lambda;
    spd_solve(normal, &f, "F Fᵀ + λI")
}

fn check_square(a: &DMatrix<f64>, n: usize) -> Result<()> {
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::InvalidPolicy(format!(
            "expected a {n}x{n} matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

pub fn best_response_decoder(
    a: &DMatrix<f64>,
    c: &DVector<f64>,
    spec: &MatrixGameSpec,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_square(a, spec.dim())?;
    let k = gain_transpose(a, spec)?.transpose();
    let l = -(&k * c);
    Ok((k, l))
}

pub fn best_response_encoder(
    k: &DMatrix<f64>,
    l: &DVector<f64>,
    spec: &MatrixGameSpec,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_square(k, spec.dim())?;
    let n = spec.dim();
    let normal = k.transpose() * k + identity(n) * spec.lambda;
    let a = spd_solve(normal, &k.transpose(), "KᵀK + λI")?;
    let c = -(&a * (l + &spec.bias));
    Ok((a, c))
}

/// Solves (AK − I)C = A b⃗; C = 0 when AK − I is singular.
pub fn intercept(a: &DMatrix<f64>, k: &DMatrix<f64>, bias: &DVector<f64>) -> DVector<f64> {
    let n = bias.len();
    let system = a * k - identity(n);
    let rhs = DMatrix::from_column_slice(n, 1, (a * bias).as_slice());
    match lu_solve(system, &rhs, "A K − I") {
        Ok(c) => DVector::from_column_slice(c.as_slice()),
        Err(_) => DVector::zeros(n),
    }
}

/// The equilibrium pair generated by an encoder slope A.
pub fn pair_from_slope(a: &DMatrix<f64>, spec: &MatrixGameSpec) -> Result<AffinePairMatrix> {
    let (k, _) = best_response_decoder(a, &DVector::zeros(spec.dim()), spec)?;
    let c = intercept(a, &k, &spec.bias);
    let l = -(&k * &c);
    Ok(AffinePairMatrix {
        a: a.clone(),
        c,
        k,
        l,
    })
}

/// (J_e, J_d) of an arbitrary affine pair with zero-mean source and noise.
pub fn pair_costs(spec: &MatrixGameSpec, p: &AffinePairMatrix) -> (f64, f64) {
    let n = spec.dim();
    let e = identity(n) - &p.k * &p.a;
    let shared = (&e * &spec.source_cov * e.transpose()).trace() + (&p.k * &spec.noise_cov * p.k.transpose()).trace();
    let offset = &p.k * &p.c + &p.l;
    let j_d = shared + offset.norm_squared();
    let power = (&p.a * &spec.source_cov * p.a.transpose()).trace() + p.c.norm_squared();
    let j_e = shared + (offset + &spec.bias).norm_squared() + spec.lambda * power;
    (j_e, j_d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    #[serde(rename = "A", with = "rows")]
    pub a: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

pub fn fixed_point_residual(a: &DMatrix<f64>, spec: &MatrixGameSpec) -> Result<f64> {
    Ok((t_map_matrix(a, spec)? - a).norm())
}

/// Damped iteration A ← (1−d)A + d·T(A) until ‖T(A)−A‖_F < tol.
pub fn solve_fixed_point(
    spec: &MatrixGameSpec,
    a0: &DMatrix<f64>,
    damping: f64,
    tol: f64,
    cap: usize,
) -> Result<FixedPoint> {
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::Precondition(format!("damping must lie in (0, 1], got {damping}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tolerance must be positive, got {tol}")));
    }
    check_square(a0, spec.dim())?;
    let mut a = a0.clone();
    let mut t = t_map_matrix(&a, spec)?;
    let mut residual = (&t - &a).norm();
    let mut best = FixedPoint {
        a: a.clone(),
        residual,
        iterations: 0,
    };
    let mut iterations = 0;
    while residual >= tol {
        if iterations == cap {
            return Err(Error::NonConvergence(Box::new(best)));
        }
        a = &a * (1.0 - damping) + &t * damping;
        t = t_map_matrix(&a, spec)?;
        residual = (&t - &a).norm();
        iterations += 1;
        if residual < best.residual {
            best = FixedPoint {
                a: a.clone(),
                residual,
                iterations,
            };
        }
    }
    Ok(FixedPoint {
        a,
        residual,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiStartOptions {
    pub damping: f64,
    pub tol: f64,
    pub cap: usize,
    pub dedup_tol: f64,
    pub singular_tol: f64,
}

impl Default for MultiStartOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-10,
            cap: 200_000,
            dedup_tol: DEDUP_TOL,
            singular_tol: SINGULAR_VALUE_TOL,
        }
    }
}

/// One sign-equivalence class of fixed points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointClass {
    pub pair: AffinePairMatrix,
    pub residual: f64,
    pub singular: bool,
    pub min_singular_value: f64,
    #[serde(rename = "J_e")]
    pub encoder_cost: f64,
    #[serde(rename = "J_d")]
    pub decoder_cost: f64,
    /// Number of starts that landed in this class.
    pub hits: usize,
}

impl FixedPointClass {
    pub fn is_zero(&self) -> bool {
        self.pair.a.amax() < DEDUP_TOL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStartResult {
    pub classes: Vec<FixedPointClass>,
    pub starts: usize,
    pub failures: usize,
}

impl MultiStartResult {
    pub fn nonzero(&self) -> impl Iterator<Item = &FixedPointClass> {
        self.classes.iter().filter(|c| !c.is_zero())
    }
}

/// Flips the sign so the entry of largest magnitude is positive.
pub fn canonical_sign(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (mut idx, mut best) = (0, 0.0);
    for (i, v) in a.iter().enumerate() {
        if v.abs() > best {
            best = v.abs();
            idx = i;
        }
    }
    if a.as_slice().get(idx).is_some_and(|v| *v < 0.0) {
        -a
    } else {
        a.clone()
    }
}

/// True when A and B agree elementwise up to sign.
pub fn same_class(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    (a - b).amax() < tol || (a + b).amax() < tol
}

fn random_start(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> DMatrix<f64> {
    let dir = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let scale = radius * rng.random::<f64>().powf(1.0 / (n * n) as f64);
    let norm = dir.norm();
    if norm == 0.0 {
        dir
    } else {
        dir * (scale / norm)
    }
}

pub fn min_singular_value(a: &DMatrix<f64>) -> f64 {
    a.clone().singular_values().min()
}

pub fn multi_start_fixed_points(spec: &MatrixGameSpec, n_starts: usize, seed: u64) -> Result<MultiStartResult> {
    multi_start_with(spec, n_starts, seed, &MultiStartOptions::default())
}

/// Runs the damped iteration from the zero matrix and `n_starts` random
/// starts, then merges the results into sign classes.
pub fn multi_start_with(
    spec: &MatrixGameSpec,
    n_starts: usize,
    seed: u64,
    opts: &MultiStartOptions,
) -> Result<MultiStartResult> {
    spec.validate()?;
    if n_starts == 0 {
        return Err(Error::Precondition("n_starts must be at least 1".into()));
    }
    let n = spec.dim();
    let radius = spec.t_map_radius();
    let runs: Vec<Result<FixedPoint>> = (0..=n_starts)
        .into_par_iter()
        .map(|i| {
            let a0 = if i == 0 {
                DMatrix::zeros(n, n)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                random_start(&mut rng, n, radius)
            };
            solve_fixed_point(spec, &a0, opts.damping, opts.tol, opts.cap)
        })
        .collect();

    let mut classes: Vec<FixedPointClass> = Vec::new();
    let mut failures = 0;
    for run in runs {
        let fp = match run {
            Ok(fp) => fp,
            Err(Error::NonConvergence(_)) => {
                failures += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let a = canonical_sign(&fp.a);
        if let Some(class) = classes
            .iter_mut()
            .find(|c| same_class(&c.pair.a, &a, opts.dedup_tol))
        {
            class.hits += 1;
            continue;
        }
        let pair = pair_from_slope(&a, spec)?;
        let (j_e, j_d) = pair_costs(spec, &pair);
        let sv = min_singular_value(&a);
        classes.push(FixedPointClass {
            pair,
            residual: fp.residual,
            singular: sv < opts.singular_tol,
            min_singular_value: sv,
            encoder_cost: j_e,
            decoder_cost: j_d,
            hits: 1,
        });
    }
    classes.sort_by(|x, y| {
        y.pair
            .a
            .norm()
            .total_cmp(&x.pair.a.norm())
            .then_with(|| x.pair.a.as_slice().partial_cmp(y.pair.a.as_slice()).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(MultiStartResult {
        classes,
        starts: n_starts + 1,
        failures,
    })
}

/// ‖λAΣ_MAᵀ − KᵀKΣ_W‖_F, zero at a nonsingular fixed point.
pub fn short_equation_residual(a: &DMatrix<f64>, spec: &MatrixGameSpec) -> Result<f64> {
    let (k, _) = best_response_decoder(a, &DVector::zeros(spec.dim()), spec)?;
    let lhs = a * &spec.source_cov * a.transpose() * spec.lambda;
    let rhs = k.transpose() * &k * &spec.noise_cov;
    Ok((lhs - rhs).norm())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalDecomposition {
    pub coordinates: Vec<ScalarGameSpec>,
    pub pair: AffinePairMatrix,
    pub informative: bool,
}

/// Splits a game with diagonal covariances into independent scalar games.
pub fn diagonal_decompose(spec: &MatrixGameSpec) -> Result<DiagonalDecomposition> {
    spec.validate()?;
    if !spec.is_diagonal() {
        return Err(Error::Precondition(
            "both covariances must be diagonal to decompose".into(),
        ));
    }
    let n = spec.dim();
    let mut pair = AffinePairMatrix::babbling(n);
    let mut coordinates = Vec::with_capacity(n);
    let mut informative = false;
    for i in 0..n {
        let s = ScalarGameSpec::new(
            spec.source_cov[(i, i)],
            spec.noise_cov[(i, i)],
            spec.lambda,
            spec.bias[i],
        )?;
        if let Some([p, _]) = signaling_scalar::informative_pairs(&s) {
            informative = true;
            pair.a[(i, i)] = p.a;
            pair.k[(i, i)] = p.k;
            pair.c[i] = p.c;
            pair.l[i] = p.l;
        }
        coordinates.push(s);
    }
    Ok(DiagonalDecomposition {
        coordinates,
        pair,
        informative,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceDiagnostics {
    pub determinant_ratio: f64,
    pub lambda_pow_n: f64,
    /// λⁿ ≤ |Σ_M|/|Σ_W|.
    pub determinant_condition: bool,
    /// λ ≤ σ²_m·λ_min(Σ_W⁻¹), when Σ_M = σ²_m I.
    pub iid_source_condition: Option<bool>,
    /// λ ≤ λ_min(Σ_M)/σ²_w, when Σ_W = σ²_w I.
    pub iid_noise_condition: Option<bool>,
    pub min_singular_value: f64,
    pub a_singular: bool,
    /// A nonsingular A although a necessary condition fails.
    pub inconsistent: bool,
}

fn scaled_identity(m: &DMatrix<f64>) -> Option<f64> {
    let s = m[(0, 0)];
    let target = identity(m.nrows()) * s;
    ((m - target).amax() < 1e-12).then_some(s)
}

pub fn existence_diagnostics(spec: &MatrixGameSpec, a: &DMatrix<f64>) -> Result<ExistenceDiagnostics> {
    existence_diagnostics_with(spec, a, SINGULAR_VALUE_TOL)
}

pub fn existence_diagnostics_with(
    spec: &MatrixGameSpec,
    a: &DMatrix<f64>,
    singular_tol: f64,
) -> Result<ExistenceDiagnostics> {
    spec.validate()?;
    check_square(a, spec.dim())?;
    let n = spec.dim();
    let determinant_ratio = spec.source_cov.determinant() / spec.noise_cov.determinant();
    let lambda_pow_n = spec.lambda.powi(n as i32);
    let determinant_condition = lambda_pow_n <= determinant_ratio;
    let iid_source_condition = scaled_identity(&spec.source_cov).map(|s2| {
        let max_noise = spec.noise_cov.clone().symmetric_eigenvalues().max();
        spec.lambda <= s2 / max_noise
    });
    let iid_noise_condition = scaled_identity(&spec.noise_cov).map(|w2| {
        let min_source = spec.source_cov.clone().symmetric_eigenvalues().min();
        spec.lambda <= min_source / w2
    });
    let min_sv = min_singular_value(a);
    let a_singular = min_sv < singular_tol;
    let all_hold = determinant_condition
        && iid_source_condition.unwrap_or(true)
        && iid_noise_condition.unwrap_or(true);
    Ok(ExistenceDiagnostics {
        determinant_ratio,
        lambda_pow_n,
        determinant_condition,
        iid_source_condition,
        iid_noise_condition,
        min_singular_value: min_sv,
        a_singular,
        inconsistent: !a_singular && !all_hold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterFilling {
    pub nu: f64,
    pub allocations: Vec<f64>,
}

/// Water level ν with Σ max(ν−λᵢ, 0) = nP over the noise eigenvalues λᵢ.
pub fn water_fill(total_power: f64, noise_eigenvalues: &[f64]) -> Result<WaterFilling> {
    if !(total_power >= 0.0 && total_power.is_finite()) {
        return Err(Error::Domain(format!("water-filling at P = {total_power}")));
    }
    if noise_eigenvalues.is_empty() {
        return Err(Error::Precondition("no noise eigenvalues".into()));
    }
    if noise_eigenvalues.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::Domain("water-filling with non-positive noise levels".into()));
    }
    let n = noise_eigenvalues.len();
    let mut sorted = noise_eigenvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let budget = n as f64 * total_power;
    let mut prefix = 0.0;
    let mut nu = sorted[0];
    for k in 0..n {
        prefix += sorted[k];
        nu = (budget + prefix) / (k + 1) as f64;
        if k + 1 == n || nu <= sorted[k + 1] {
            break;
        }
    }
    let allocations = noise_eigenvalues.iter().map(|l| (nu - l).max(0.0)).collect();
    Ok(WaterFilling { nu, allocations })
}

/// Capacity per dimension (bits) of the colored Gaussian noise channel.
pub fn colored_capacity(total_power: f64, noise_eigenvalues: &[f64]) -> Result<f64> {
    let wf = water_fill(total_power, noise_eigenvalues)?;
    let n = noise_eigenvalues.len() as f64;
    Ok(noise_eigenvalues
        .iter()
        .zip(&wf.allocations)
        .map(|(l, p)| 0.5 * (1.0 + p / l).log2())
        .sum::<f64>()
        / n)
}

fn noise_eigenvalues(spec: &MatrixGameSpec) -> Vec<f64> {
    spec.noise_cov
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect()
}

/// Distortion bound n(|Σ_M|·2^{−2C(P)})^{1/n} through the exact capacity.
pub fn capacity_distortion_bound(spec: &MatrixGameSpec, p: f64) -> Result<f64> {
    let n = spec.dim() as f64;
    let cap = colored_capacity(p, &noise_eigenvalues(spec))?;
    Ok(n * (spec.source_cov.determinant() * (-2.0 * cap).exp2()).powf(1.0 / n))
}

fn it_constants(spec: &MatrixGameSpec) -> (f64, f64) {
    let n = spec.dim() as f64;
    let c = spec.source_cov.determinant().powf(1.0 / n) * spec.noise_cov.determinant().powf(1.0 / (n * n));
    (c, spec.noise_cov.trace() / n)
}

/// Lower bound on the encoder cost at transmit power P.
pub fn it_bound_multi(spec: &MatrixGameSpec, p: f64) -> Result<f64> {
    if !(p >= 0.0 && p.is_finite()) {
        return Err(Error::Domain(format!("the power bound at P = {p}")));
    }
    let n = spec.dim() as f64;
    let (c, t) = it_constants(spec);
    Ok(spec.bias.norm_squared() + spec.lambda * p + n * c * (p + t).powf(-1.0 / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiItBound {
    /// λ at or above which the minimizing power is zero.
    pub threshold: f64,
    pub p_star: f64,
    pub bound: f64,
}

pub fn it_bound_multi_optimal(spec: &MatrixGameSpec) -> Result<MultiItBound> {
    spec.validate()?;
    let n = spec.dim() as f64;
    let (c, t) = it_constants(spec);
    let threshold = (spec.source_cov.determinant() / spec.noise_cov.determinant()).powf(1.0 / n);
    let p_star = ((c / spec.lambda).powf(n / (n + 1.0)) - t).max(0.0);
    Ok(MultiItBound {
        threshold,
        p_star,
        bound: it_bound_multi(spec, p_star)?,
    })
}

/// The published 4×4 example with two distinct nonzero fixed points.
pub mod reference {
    use super::*;

    pub const LAMBDA: f64 = 1.0311;

    pub const SOURCE_COV: [[f64; 4]; 4] = [
        [1.6421, 0.1299, 0.5713, 0.2305],
        [0.1299, 1.4803, 0.6810, 0.4749],
        [0.5713, 0.6810, 1.7312, 0.4292],
        [0.2305, 0.4749, 0.4292, 1.3515],
    ];

    pub const NOISE_COV: [[f64; 4]; 4] = [
        [1.2742, 0.1868, 0.2318, 0.0559],
        [0.1868, 1.8266, 0.5955, 0.3091],
        [0.2318, 0.5955, 1.2377, 0.4951],
        [0.0559, 0.3091, 0.4951, 1.5336],
    ];

    pub const FIXED_POINTS: [[[f64; 4]; 4]; 2] = [
        [
            [-0.1543, 0.1762, 0.0606, 0.1117],
            [0.1602, 0.0159, 0.1036, 0.0279],
            [-0.2000, -0.1879, -0.2700, -0.1565],
            [0.0603, 0.1052, 0.1221, 0.0824],
        ],
        [
            [-0.2431, 0.0738, -0.0752, 0.0285],
            [0.0293, -0.1351, -0.0966, -0.0948],
            [0.1520, 0.2181, 0.2682, 0.1735],
            [-0.1003, -0.0801, -0.1236, -0.0683],
        ],
    ];

    pub fn matrix(rows: &[[f64; 4]; 4]) -> DMatrix<f64> {
        DMatrix::from_fn(4, 4, |i, j| rows[i][j])
    }

    pub fn spec() -> MatrixGameSpec {
        MatrixGameSpec::new(
            matrix(&SOURCE_COV),
            matrix(&NOISE_COV),
            LAMBDA,
            DVector::zeros(4),
        )
        .expect("reference covariances are positive definite")
    }

    pub fn fixed_points() -> [DMatrix<f64>; 2] {
        [matrix(&FIXED_POINTS[0]), matrix(&FIXED_POINTS[1])]
    }
}
