//! Scenario files, solver dispatch, sweeps and report rendering for the
//! command-line front end.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cheap_talk_multi::{self, BinRequest, MultiCheapTalkSpec};
use crate::cheap_talk_scalar::{self, CheapTalkSpec};
use crate::distributions::SourceModel;
use crate::error::{Error, Result};
use crate::montecarlo::{self, SimConfig};
use crate::report::{Costs, EquilibriumClass, EquilibriumReport, Policy, Solution};
use crate::signaling_multi::{self, from_rows, FixedPointClass, MatrixGameSpec, MultiStartResult};
use crate::signaling_scalar::{self, AffinePairScalar, ScalarGameSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GameKind {
    CheapTalk,
    CheapTalkMulti,
    Signaling,
    SignalingMulti,
    Stackelberg,
    Team,
    Poa,
    Simulate,
}

impl GameKind {
    pub const ALL: [GameKind; 8] = [
        GameKind::CheapTalk,
        GameKind::CheapTalkMulti,
        GameKind::Signaling,
        GameKind::SignalingMulti,
        GameKind::Stackelberg,
        GameKind::Team,
        GameKind::Poa,
        GameKind::Simulate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GameKind::CheapTalk => "cheap-talk",
            GameKind::CheapTalkMulti => "cheap-talk-multi",
            GameKind::Signaling => "signaling",
            GameKind::SignalingMulti => "signaling-multi",
            GameKind::Stackelberg => "stackelberg",
            GameKind::Team => "team",
            GameKind::Poa => "poa",
            GameKind::Simulate => "simulate",
        }
    }

    pub fn parse(s: &str) -> Option<GameKind> {
        GameKind::ALL.into_iter().find(|g| g.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

/// Either an explicit list or an inclusive arithmetic range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Dotted path inside `parameters`.
    pub parameter: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

impl SweepSpec {
    /// Ascending, duplicate-free sweep points.
    pub fn points(&self) -> Result<Vec<f64>> {
        let mut pts = match (&self.values, self.start, self.stop, self.step) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(start), Some(stop), Some(step)) => {
                if !(step > 0.0 && step.is_finite() && stop >= start) {
                    return Err(Error::Config(format!(
                        "sweep range needs step > 0 and stop >= start, got {start}..{stop} step {step}"
                    )));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
                (0..n)
                    .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
                    .collect()
            }
            _ => {
                return Err(Error::Config(
                    "sweep needs either `values` or all of `start`, `stop`, `step`".into(),
                ))
            }
        };
        if pts.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        if pts.is_empty() {
            return Err(Error::Config("sweep has no points".into()));
        }
        Ok(pts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub game: GameKind,
    pub parameters: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheapTalkParams {
    source: SourceModel,
    bias: f64,
    #[serde(default)]
    n_bins: Option<usize>,
    #[serde(default = "default_bin_cap")]
    max_bins: usize,
    #[serde(default)]
    enumerate: bool,
}

fn default_bin_cap() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheapTalkMultiParams {
    sources: Vec<SourceModel>,
    bias: Vec<f64>,
    bins: Vec<BinRequest>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignalingMultiParams {
    source_cov: Vec<Vec<f64>>,
    noise_cov: Vec<Vec<f64>>,
    lambda: f64,
    #[serde(default)]
    bias: Option<Vec<f64>>,
    #[serde(default = "default_starts")]
    n_starts: usize,
    #[serde(default)]
    seed: u64,
}

fn default_starts() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum StackelbergParams {
    Signaling(ScalarGameSpec),
    CheapTalk(CheapTalkSpec),
    CheapTalkMulti(MultiCheapTalkSpec),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateParams {
    source_power: f64,
    noise_power: f64,
    lambda: f64,
    bias: f64,
    /// Defaults to the informative Nash pair, or babbling when none exists.
    #[serde(default)]
    policy: Option<AffinePairScalar>,
    #[serde(default = "default_samples")]
    n_samples: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    antithetic: bool,
    #[serde(default)]
    certify_steps: Option<Vec<f64>>,
}

fn default_samples() -> usize {
    1_000_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    Infeasible,
}

/// Result of one solver dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub status: Status,
    pub result: Option<EquilibriumReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibria: Option<Vec<EquilibriumReport>>,
}

impl Outcome {
    fn ok(report: EquilibriumReport) -> Self {
        Outcome {
            status: Status::Ok,
            result: Some(report),
            equilibria: None,
        }
    }

    fn infeasible() -> Self {
        Outcome {
            status: Status::Infeasible,
            result: None,
            equilibria: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub status: Status,
    pub result: Option<EquilibriumReport>,
}

/// Full machine-readable report; re-parses into the same structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub status: Status,
    pub result: Option<EquilibriumReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibria: Option<Vec<EquilibriumReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepRow>>,
    pub tool_version: String,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        match (&self.sweep, self.status) {
            (Some(_), _) | (None, Status::Ok) => EXIT_OK,
            (None, Status::Infeasible) => EXIT_INFEASIBLE,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// `key=value` pairs; keys are dotted paths from the document root or
    /// from `parameters`.
    pub overrides: Vec<String>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub report: RunReport,
    pub rendered: String,
    /// Where `rendered` was written; `None` means the caller prints it.
    pub written_to: Option<PathBuf>,
}

fn config_error(origin: &str, e: serde_json::Error) -> Error {
    if e.line() > 0 {
        Error::Config(format!("{origin}:{}:{}: {e}", e.line(), e.column()))
    } else {
        Error::Config(format!("{origin}: {e}"))
    }
}

fn lookup_mut<'a>(root: &'a mut Value, path: &[&str]) -> Option<&'a mut Value> {
    path.iter().try_fold(root, |v, key| v.as_object_mut()?.get_mut(*key))
}

/// Sets an existing key; the path is tried from the root, then under
/// `parameters`.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let key = key.trim();
    let value = serde_json::from_str::<Value>(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let path: Vec<&str> = key.split('.').collect();
    let mut nested = vec!["parameters"];
    nested.extend(&path);
    for candidate in [path.clone(), nested] {
        if let Some(slot) = lookup_mut(doc, &candidate) {
            *slot = value;
            return Ok(());
        }
    }
    Err(Error::Config(format!("override key `{key}` does not exist in the scenario")))
}

fn set_parameter(params: &Value, path: &str, v: f64) -> Result<Value> {
    let mut doc = params.clone();
    let keys: Vec<&str> = path.split('.').collect();
    let slot = lookup_mut(&mut doc, &keys)
        .ok_or_else(|| Error::Config(format!("sweep parameter `{path}` does not exist in parameters")))?;
    *slot = serde_json::json!(v);
    Ok(doc)
}

/// Parses a scenario document and applies overrides.
pub fn load_scenario(text: &str, origin: &str, overrides: &[String]) -> Result<Scenario> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| config_error(origin, e))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let scenario: Scenario = serde_json::from_value(doc).map_err(|e| config_error(origin, e))?;
    scenario.validate()?;
    Ok(scenario)
}

fn typed<T: serde::de::DeserializeOwned>(params: &Value, game: GameKind) -> Result<T> {
    serde_json::from_value(params.clone()).map_err(|e| Error::Config(format!("parameters for {}: {e}", game.name())))
}

impl Scenario {
    /// Checks the parameters against the selected game's spec types.
    pub fn validate(&self) -> Result<()> {
        if let Some(sweep) = &self.sweep {
            let pts = sweep.points()?;
            set_parameter(&self.parameters, &sweep.parameter, pts[0])?;
        }
        match self.game {
            GameKind::CheapTalk => {
                let p: CheapTalkParams = typed(&self.parameters, self.game)?;
                CheapTalkSpec::new(p.source, p.bias)?;
                if p.n_bins == Some(0) {
                    return Err(Error::Config("n_bins must be at least 1".into()));
                }
            }
            GameKind::CheapTalkMulti => {
                let p: CheapTalkMultiParams = typed(&self.parameters, self.game)?;
                let spec = MultiCheapTalkSpec::new(p.sources, p.bias)?;
                if p.bins.len() != spec.dim() {
                    return Err(Error::Config(format!(
                        "bins has {} entries for a {}-dimensional source",
                        p.bins.len(),
                        spec.dim()
                    )));
                }
            }
            GameKind::Signaling | GameKind::Team | GameKind::Poa => {
                typed::<ScalarGameSpec>(&self.parameters, self.game)?.validate()?;
            }
            GameKind::SignalingMulti => {
                multi_spec(&typed(&self.parameters, self.game)?)?;
            }
            GameKind::Stackelberg => match typed::<StackelbergParams>(&self.parameters, self.game)? {
                StackelbergParams::Signaling(s) => s.validate()?,
                StackelbergParams::CheapTalk(s) => s.validate()?,
                StackelbergParams::CheapTalkMulti(s) => s.validate()?,
            },
            GameKind::Simulate => {
                let p: SimulateParams = typed(&self.parameters, self.game)?;
                ScalarGameSpec::new(p.source_power, p.noise_power, p.lambda, p.bias)?;
            }
        }
        Ok(())
    }

    fn uses_seed(&self) -> bool {
        matches!(self.game, GameKind::SignalingMulti | GameKind::Simulate)
    }
}

fn multi_spec(p: &SignalingMultiParams) -> Result<MatrixGameSpec> {
    let sm = from_rows(&p.source_cov).map_err(Error::InvalidSpec)?;
    let sw = from_rows(&p.noise_cov).map_err(Error::InvalidSpec)?;
    let bias = match &p.bias {
        Some(b) => DVector::from_vec(b.clone()),
        None => DVector::zeros(sm.nrows()),
    };
    MatrixGameSpec::new(sm, sw, p.lambda, bias)
}

fn run_cheap_talk(p: CheapTalkParams) -> Result<Outcome> {
    let spec = CheapTalkSpec::new(p.source, p.bias)?;
    let n = match p.n_bins {
        Some(n) => n,
        None => cheap_talk_scalar::max_bins(&spec, p.max_bins)?,
    };
    let all = cheap_talk_scalar::solve_quantizer_equilibria(&spec, n)?;
    let Some(first) = all.first().cloned() else {
        return Ok(Outcome::infeasible());
    };
    let mut out = Outcome::ok(cheap_talk_scalar::quantized_report(&spec, first)?);
    if p.enumerate {
        out.equilibria = Some(
            all.into_iter()
                .map(|q| cheap_talk_scalar::quantized_report(&spec, q))
                .collect::<Result<_>>()?,
        );
    }
    Ok(out)
}

fn run_cheap_talk_multi(p: CheapTalkMultiParams) -> Result<Outcome> {
    let spec = MultiCheapTalkSpec::new(p.sources, p.bias)?;
    match cheap_talk_multi::build_product_equilibrium(&spec, &p.bins)? {
        Solution::Found(policy) => Ok(Outcome::ok(cheap_talk_multi::product_report(&spec, policy)?)),
        Solution::Infeasible => Ok(Outcome::infeasible()),
    }
}

fn class_report(c: &FixedPointClass) -> EquilibriumReport {
    let class = if c.is_zero() {
        EquilibriumClass::NonInformative
    } else {
        EquilibriumClass::InformativeAffine
    };
    let mut r = EquilibriumReport::new(
        class,
        Some(Policy::AffineMatrix(c.pair.clone())),
        Costs::new(c.encoder_cost, c.decoder_cost),
    )
    .with_residual(c.residual)
    .value("min_singular_value", c.min_singular_value)
    .value("hits", c.hits as f64);
    if c.singular {
        r = r.flag("singular-slope");
    }
    r
}

fn run_signaling_multi(p: SignalingMultiParams) -> Result<Outcome> {
    let spec = multi_spec(&p)?;
    let found = signaling_multi::multi_start_fixed_points(&spec, p.n_starts, p.seed)?;
    let reports: Vec<EquilibriumReport> = found.classes.iter().map(class_report).collect();
    let mut primary = reports
        .iter()
        .find(|r| r.class == EquilibriumClass::InformativeAffine)
        .or_else(|| reports.first())
        .cloned()
        .ok_or_else(|| Error::SolverFailure("multi-start search found no fixed point".into()))?;
    primary = primary
        .value("classes", found.classes.len() as f64)
        .value("failures", found.failures as f64);
    if found.nonzero().next().is_none() {
        primary = primary.flag("no-affine-informative");
    }
    Ok(Outcome {
        status: Status::Ok,
        result: Some(primary),
        equilibria: Some(reports),
    })
}

fn nash_or_infeasible(spec: &ScalarGameSpec) -> Result<Outcome> {
    let report = signaling_scalar::solve_affine_nash(spec)?;
    Ok(Outcome::ok(report))
}

fn run_poa(spec: ScalarGameSpec) -> Result<Outcome> {
    let poa = signaling_scalar::price_of_anarchy(&spec)?;
    let mut report = signaling_scalar::solve_affine_nash(&spec)?
        .value("g_u", poa.game.g_u)
        .value("t_u", poa.team.t_u)
        .value("J_star", poa.game.j_star)
        .value("J_star_t", poa.team.j_star_t)
        .value("poa", poa.poa);
    if let Some(g_i) = poa.game.g_i {
        report = report.value("g_i", g_i);
    }
    if let Some(t_i) = poa.team.t_i {
        report = report.value("t_i", t_i);
    }
    if poa.babbling_corner {
        report = report.flag("babbling-corner");
    }
    Ok(Outcome::ok(report))
}

fn run_simulate(p: SimulateParams) -> Result<Outcome> {
    let spec = ScalarGameSpec::new(p.source_power, p.noise_power, p.lambda, p.bias)?;
    let pair = match p.policy {
        Some(pair) => pair,
        None => signaling_scalar::informative_pairs(&spec)
            .map(|[first, _]| first)
            .unwrap_or(AffinePairScalar::BABBLING),
    };
    let cfg = SimConfig {
        n_samples: p.n_samples,
        seed: p.seed,
        antithetic: p.antithetic,
    };
    let sim = montecarlo::estimate_affine(&pair, &spec, cfg)?;
    let (j_e, j_d) = signaling_scalar::pair_costs(&spec, &pair);
    let class = if pair.a == 0.0 && pair.c == 0.0 {
        EquilibriumClass::NonInformative
    } else {
        EquilibriumClass::InformativeAffine
    };
    let mut report = EquilibriumReport::new(
        class,
        Some(Policy::AffineScalar(pair)),
        Costs::new(sim.encoder.mean, sim.decoder.mean),
    )
    .value("J_e_se", sim.encoder.std_error)
    .value("J_d_se", sim.decoder.std_error)
    .value("J_total_se", sim.total.std_error)
    .value("J_e_exact", j_e)
    .value("J_d_exact", j_d)
    .value("n_samples", p.n_samples as f64);
    if !(sim.encoder.agrees_with(j_e) && sim.decoder.agrees_with(j_d)) {
        report = report.flag("exact-cost-outside-band");
    }
    if let Some(steps) = p.certify_steps {
        let cert = montecarlo::deviation_certify(&pair, &spec, cfg, &steps)?;
        report.diagnostics.deviation_margin = Some(cert.worst_margin);
        if !cert.passed {
            report = report.flag("deviation-found");
        }
    }
    Ok(Outcome::ok(report))
}

/// Solves one parameter set.
pub fn dispatch(game: GameKind, params: &Value) -> Result<Outcome> {
    match game {
        GameKind::CheapTalk => run_cheap_talk(typed(params, game)?),
        GameKind::CheapTalkMulti => run_cheap_talk_multi(typed(params, game)?),
        GameKind::Signaling => nash_or_infeasible(&typed(params, game)?),
        GameKind::SignalingMulti => run_signaling_multi(typed(params, game)?),
        GameKind::Stackelberg => Ok(Outcome::ok(match typed::<StackelbergParams>(params, game)? {
            StackelbergParams::Signaling(s) => signaling_scalar::solve_stackelberg(&s)?,
            StackelbergParams::CheapTalk(s) => cheap_talk_scalar::stackelberg_cheap_talk(&s)?,
            StackelbergParams::CheapTalkMulti(s) => cheap_talk_multi::stackelberg_multi(&s)?,
        })),
        GameKind::Team => Ok(Outcome::ok(signaling_scalar::team_report(&typed(params, game)?)?)),
        GameKind::Poa => run_poa(typed(params, game)?),
        GameKind::Simulate => run_simulate(typed(params, game)?),
    }
}

/// Runs a resolved scenario, including any sweep.
pub fn execute(scenario: &Scenario) -> Result<RunReport> {
    scenario.validate()?;
    let (status, result, equilibria, sweep) = match &scenario.sweep {
        None => {
            let out = dispatch(scenario.game, &scenario.parameters)?;
            (out.status, out.result, out.equilibria, None)
        }
        Some(s) => {
            let rows = s
                .points()?
                .into_par_iter()
                .map(|v| {
                    let params = set_parameter(&scenario.parameters, &s.parameter, v)?;
                    let out = dispatch(scenario.game, &params)?;
                    Ok(SweepRow {
                        value: v,
                        status: out.status,
                        result: out.result,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (Status::Ok, None, None, Some(rows))
        }
    };
    Ok(RunReport {
        scenario: scenario.clone(),
        status,
        result,
        equilibria,
        sweep,
        tool_version: crate::VERSION.to_string(),
    })
}

fn policy_columns(report: &EquilibriumReport) -> Vec<(String, f64)> {
    match &report.policy {
        Some(Policy::AffineScalar(p)) => vec![
            ("A".into(), p.a),
            ("C".into(), p.c),
            ("K".into(), p.k),
            ("L".into(), p.l),
        ],
        _ => Vec::new(),
    }
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Ok => "ok",
        Status::Infeasible => "infeasible",
    }
}

fn class_name(c: EquilibriumClass) -> String {
    serde_json::to_value(c)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

const POA_COLUMNS: [&str; 5] = ["g_i", "g_u", "t_i", "t_u", "poa"];

/// One CSV table: a row per sweep point, or a single row otherwise.
pub fn render_csv(report: &RunReport) -> Result<String> {
    let single;
    let rows: &[SweepRow] = match &report.sweep {
        Some(rows) => rows,
        None => {
            single = [SweepRow {
                value: f64::NAN,
                status: report.status,
                result: report.result.clone(),
            }];
            &single
        }
    };
    let key = report.scenario.sweep.as_ref().map(|s| s.parameter.clone());
    let mut header: Vec<String> = key.iter().cloned().collect();
    let poa = report.scenario.game == GameKind::Poa;
    if poa {
        header.extend(POA_COLUMNS.iter().map(|s| s.to_string()));
    } else {
        header.extend(["status", "class", "J_e", "J_d", "J_total"].map(String::from));
        let mut extra: Vec<String> = Vec::new();
        for r in rows.iter().filter_map(|r| r.result.as_ref()) {
            for (k, _) in policy_columns(r) {
                if !extra.contains(&k) {
                    extra.push(k);
                }
            }
        }
        let mut values: Vec<String> = rows
            .iter()
            .filter_map(|r| r.result.as_ref())
            .flat_map(|r| r.diagnostics.values.keys().cloned())
            .collect();
        values.sort();
        values.dedup();
        extra.extend(values.into_iter().filter(|k| !header.contains(k)));
        header.extend(extra);
    }

    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    for row in rows {
        let mut rec = Vec::with_capacity(header.len());
        let cols = row.result.as_ref().map(policy_columns).unwrap_or_default();
        for (i, col) in header.iter().enumerate() {
            if i == 0 && key.is_some() {
                rec.push(row.value.to_string());
                continue;
            }
            let r = row.result.as_ref();
            let cell = match col.as_str() {
                "status" if !poa => status_name(row.status).to_string(),
                "class" if !poa => r.map(|r| class_name(r.class)).unwrap_or_default(),
                "J_e" if !poa => r.map(|r| r.costs.encoder.to_string()).unwrap_or_default(),
                "J_d" if !poa => r.map(|r| r.costs.decoder.to_string()).unwrap_or_default(),
                "J_total" if !poa => r.map(|r| r.costs.total.to_string()).unwrap_or_default(),
                other => cols
                    .iter()
                    .find(|(k, _)| k == other)
                    .map(|(_, v)| *v)
                    .or_else(|| r.and_then(|r| r.diagnostics.values.get(other).copied()))
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            };
            rec.push(cell);
        }
        w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Io(e.to_string()))
}

pub fn render(report: &RunReport, format: Format) -> Result<String> {
    match format {
        Format::Json => to_pretty_json(report),
        Format::Csv => render_csv(report),
    }
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::Config("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}"))),
    }
}

/// Loads, solves and writes a scenario file. Errors map to exit code 1 in
/// the caller.
pub fn run(path: &Path, game: Option<GameKind>, opts: &RunOptions) -> Result<RunOutcome> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let origin = path.display().to_string();
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| config_error(&origin, e))?;
    if let (Some(g), Some(obj)) = (game, doc.as_object_mut()) {
        match obj.get("game") {
            None => {
                obj.insert("game".into(), Value::String(g.name().into()));
            }
            Some(v) if v.as_str() != Some(g.name()) => {
                return Err(Error::Config(format!(
                    "{origin}: scenario game {v} does not match the `{}` subcommand",
                    g.name()
                )));
            }
            Some(_) => {}
        }
    }
    let mut scenario = load_scenario(&doc.to_string(), &origin, &opts.overrides)?;
    if let Some(seed) = opts.seed {
        if scenario.uses_seed() {
            if let Some(obj) = scenario.parameters.as_object_mut() {
                obj.insert("seed".into(), serde_json::json!(seed));
            }
            scenario.validate()?;
        }
    }
    if opts.out.is_some() || opts.format.is_some() {
        let output = scenario.output.get_or_insert_with(OutputSpec::default);
        if let Some(p) = &opts.out {
            output.path = Some(p.clone());
        }
        if let Some(f) = opts.format {
            output.format = f;
        }
    }
    let report = with_pool(opts.jobs, || execute(&scenario))??;
    let output = scenario.output.clone().unwrap_or_default();
    let rendered = render(&report, output.format)?;
    if let Some(p) = &output.path {
        std::fs::write(p, &rendered)?;
    }
    Ok(RunOutcome {
        exit_code: report.exit_code(),
        report,
        rendered,
        written_to: output.path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrintedCheck {
    pub residual: f64,
    pub min_singular_value: f64,
    /// Residual after re-converging from the printed matrix.
    pub refined_residual: f64,
    /// Largest entrywise change made by refinement.
    pub refinement_shift: f64,
    /// Index into `classes` of the class the refined point belongs to.
    pub class_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceReproduction {
    pub lambda: f64,
    pub printed: Vec<PrintedCheck>,
    pub search: MultiStartResult,
    pub existence: Vec<signaling_multi::ExistenceDiagnostics>,
    pub tool_version: String,
}

pub const REFINE_TOL: f64 = 1e-12;

/// Checks the embedded 4×4 example: residuals of the printed matrices, their
/// refined versions, and a multi-start search for all fixed-point classes.
pub fn reproduce_reference_example(n_starts: usize, seed: u64) -> Result<ReferenceReproduction> {
    use signaling_multi::reference;
    let spec = reference::spec();
    let search = signaling_multi::multi_start_fixed_points(&spec, n_starts, seed)?;
    let mut printed = Vec::new();
    let mut existence = Vec::new();
    for a in reference::fixed_points() {
        let residual = signaling_multi::fixed_point_residual(&a, &spec)?;
        let refined = signaling_multi::solve_fixed_point(&spec, &a, 0.5, REFINE_TOL, 200_000)?;
        let class_index = search
            .classes
            .iter()
            .position(|c| signaling_multi::same_class(&c.pair.a, &refined.a, signaling_multi::DEDUP_TOL));
        existence.push(signaling_multi::existence_diagnostics(&spec, &a)?);
        printed.push(PrintedCheck {
            residual,
            min_singular_value: signaling_multi::min_singular_value(&a),
            refined_residual: refined.residual,
            refinement_shift: (&refined.a - &a).amax(),
            class_index,
        });
    }
    Ok(ReferenceReproduction {
        lambda: reference::LAMBDA,
        printed,
        search,
        existence,
        tool_version: crate::VERSION.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signaling_doc() -> Value {
        serde_json::json!({
            "game": "signaling",
            "parameters": {"source_power": 1.0, "noise_power": 1.0, "lambda": 0.25, "bias": 0.1}
        })
    }

    #[test]
    fn overrides_resolve_root_then_parameters() {
        let mut doc = signaling_doc();
        apply_override(&mut doc, "lambda=0.5").unwrap();
        apply_override(&mut doc, "parameters.bias=0.2").unwrap();
        assert_eq!(doc["parameters"]["lambda"], 0.5);
        assert_eq!(doc["parameters"]["bias"], 0.2);
        assert!(apply_override(&mut doc, "lamda=0.5").is_err());
        assert!(apply_override(&mut doc, "lambda").is_err());
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let mut doc = signaling_doc();
        doc["parameters"]["lamda"] = serde_json::json!(1.0);
        let err = load_scenario(&doc.to_string(), "x.json", &[]).unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
    }

    #[test]
    fn parse_error_reports_line() {
        let err = load_scenario("{\n  \"game\": \"poa\",\n  oops\n}", "bad.json", &[]).unwrap_err();
        assert!(err.to_string().contains("bad.json:3:"), "{err}");
    }

    #[test]
    fn sweep_points_sorted_unique() {
        let s = SweepSpec {
            parameter: "lambda".into(),
            values: Some(vec![0.3, 0.1, 0.3, 0.2]),
            start: None,
            stop: None,
            step: None,
        };
        assert_eq!(s.points().unwrap(), vec![0.1, 0.2, 0.3]);
        let r = SweepSpec {
            values: None,
            start: Some(0.05),
            stop: Some(0.95),
            step: Some(0.05),
            ..s
        };
        let pts = r.points().unwrap();
        assert_eq!(pts.len(), 19);
        assert_eq!(pts[0], 0.05);
        assert_eq!(pts[18], 0.95);
        assert_eq!(pts[1], 0.1);
    }

    #[test]
    fn signaling_dispatch_matches_closed_form() {
        let sc = load_scenario(&signaling_doc().to_string(), "s", &[]).unwrap();
        let rep = execute(&sc).unwrap();
        assert_eq!(rep.exit_code(), EXIT_OK);
        let r = rep.result.unwrap();
        let Some(Policy::AffineScalar(p)) = r.policy else {
            panic!("expected scalar policy")
        };
        assert!((p.a - 1.0).abs() < 1e-12 && (p.k - 0.5).abs() < 1e-12);
        assert!((p.c + 0.2).abs() < 1e-12 && (p.l - 0.1).abs() < 1e-12);
        assert!((r.diagnostics.values["g_i"] - 1.27).abs() < 1e-12);
    }

    #[test]
    fn cheap_talk_infeasible_exit_code() {
        let doc = serde_json::json!({
            "game": "cheap-talk",
            "parameters": {"source": {"kind": "uniform", "lo": 0.0, "hi": 1.0}, "bias": 0.3, "n_bins": 2}
        });
        let sc = load_scenario(&doc.to_string(), "c", &[]).unwrap();
        let rep = execute(&sc).unwrap();
        assert_eq!(rep.status, Status::Infeasible);
        assert_eq!(rep.exit_code(), EXIT_INFEASIBLE);
    }

    #[test]
    fn report_round_trips() {
        let sc = load_scenario(&signaling_doc().to_string(), "s", &[]).unwrap();
        let rep = execute(&sc).unwrap();
        let text = render(&rep, Format::Json).unwrap();
        let back: RunReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn poa_csv_columns() {
        let mut doc = serde_json::json!({
            "game": "poa",
            "parameters": {"source_power": 1.0, "noise_power": 1.0, "lambda": 0.5, "bias": 0.1},
            "sweep": {"parameter": "lambda", "values": [0.2, 0.1]}
        });
        doc["output"] = serde_json::json!({"format": "csv"});
        let sc = load_scenario(&doc.to_string(), "p", &[]).unwrap();
        let csv = render_csv(&execute(&sc).unwrap()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "lambda,g_i,g_u,t_i,t_u,poa");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0.1,"));
    }
}
