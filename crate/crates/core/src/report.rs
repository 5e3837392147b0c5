use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cheap_talk_multi::ProductPolicy;
use crate::cheap_talk_scalar::QuantizerPolicy;
use crate::signaling_multi::AffinePairMatrix;
use crate::signaling_scalar::AffinePairScalar;

/// Outcome of a solver that may legitimately find nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "kebab-case")]
pub enum Solution<T> {
    Found(T),
    Infeasible,
}

impl<T> Solution<T> {
    pub fn found(self) -> Option<T> {
        match self {
            Solution::Found(t) => Some(t),
            Solution::Infeasible => None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Solution::Infeasible)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumClass {
    InformativeAffine,
    NonInformative,
    Quantized,
    FullyInformative,
    Stackelberg,
    Team,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Policy {
    AffineScalar(AffinePairScalar),
    AffineMatrix(AffinePairMatrix),
    Quantizer(QuantizerPolicy),
    Product(ProductPolicy),
    /// Encoder sends m, decoder plays u = m.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Costs {
    #[serde(rename = "J_e")]
    pub encoder: f64,
    #[serde(rename = "J_d")]
    pub decoder: f64,
    #[serde(rename = "J_total")]
    pub total: f64,
}

impl Costs {
    pub fn new(encoder: f64, decoder: f64) -> Self {
        Self {
            encoder,
            decoder,
            total: encoder + decoder,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub fixed_point_residual: Option<f64>,
    pub deviation_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub class: EquilibriumClass,
    pub policy: Option<Policy>,
    pub costs: Costs,
    pub diagnostics: Diagnostics,
}

impl EquilibriumReport {
    pub fn new(class: EquilibriumClass, policy: Option<Policy>, costs: Costs) -> Self {
        Self {
            class,
            policy,
            costs,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn with_residual(mut self, residual: f64) -> Self {
        self.diagnostics.fixed_point_residual = Some(residual);
        self
    }

    pub fn flag(mut self, flag: &str) -> Self {
        self.diagnostics.flags.push(flag.to_string());
        self
    }

    /// Non-finite values are dropped so reports stay valid JSON.
    pub fn value(mut self, key: &str, v: f64) -> Self {
        if v.is_finite() {
            self.diagnostics.values.insert(key.to_string(), v);
        }
        self
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.diagnostics.flags.iter().any(|f| f == flag)
    }
}
