//! Scenario files: a strict TOML schema, validation that reports every
//! violated assumption at once, and conversion into simulator inputs.
//!
//! Node labels in files are 1-based. Time-valued fields carry their unit in
//! the field name (`dt_hours`, `at_seconds`, ...) and one file uses a single
//! unit throughout; controller time constants are in that same unit.

use std::collections::BTreeSet;
use std::fmt;
use std::marker::PhantomData;
use std::path::Path;

use flowreg::graph::{is_zero_forcing, CommGraph, NetworkTopology};
use flowreg::model::{ramp_transform, CompartmentalParams, PlantParams, Schedule, Setpoint, Variant};
use flowreg::sim::{InitMode, Initial, MonitorSet, SimSettings};
use flowreg::{ClosedLoop, ControllerConfig, Equilibrium, Saturation};
use serde::de::value::{MapAccessDeserializer, SeqAccessDeserializer};
use serde::de::{IntoDeserializer, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
}

/// A scalar applied to every entry, or an explicit list.
#[derive(Debug, Clone, PartialEq)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn expand(&self, len: usize, what: &str, errors: &mut Vec<String>) -> Option<Vec<T>> {
        match self {
            OneOrMany::One(v) => Some(vec![v.clone(); len]),
            OneOrMany::Many(v) if v.len() == len => Some(v.clone()),
            OneOrMany::Many(v) => {
                errors.push(format!("{what}: expected {len} entries, got {}", v.len()));
                None
            }
        }
    }
}

impl<T> From<T> for OneOrMany<T> {
    fn from(v: T) -> Self {
        OneOrMany::One(v)
    }
}

impl<T: Serialize> Serialize for OneOrMany<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            OneOrMany::One(v) => v.serialize(s),
            OneOrMany::Many(v) => v.serialize(s),
        }
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for OneOrMany<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V<T>(PhantomData<T>);

        impl<'de, T: Deserialize<'de>> Visitor<'de> for V<T> {
            type Value = OneOrMany<T>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a value or a list of values")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, seq: A) -> Result<Self::Value, A::Error> {
                Vec::<T>::deserialize(SeqAccessDeserializer::new(seq)).map(OneOrMany::Many)
            }

            fn visit_map<A: MapAccess<'de>>(self, map: A) -> Result<Self::Value, A::Error> {
                T::deserialize(MapAccessDeserializer::new(map)).map(OneOrMany::One)
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<Self::Value, E> {
                T::deserialize(v.into_deserializer()).map(OneOrMany::One)
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<Self::Value, E> {
                T::deserialize(v.into_deserializer()).map(OneOrMany::One)
            }

            fn visit_f64<E: serde::de::Error>(self, v: f64) -> Result<Self::Value, E> {
                T::deserialize(v.into_deserializer()).map(OneOrMany::One)
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<Self::Value, E> {
                T::deserialize(v.into_deserializer()).map(OneOrMany::One)
            }
        }

        d.deserialize_any(V(PhantomData))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantName {
    Basic,
    Compartmental,
    Potential,
    Reduced,
}

impl From<VariantName> for Variant {
    fn from(v: VariantName) -> Self {
        match v {
            VariantName::Basic => Variant::Basic,
            VariantName::Compartmental => Variant::Compartmental,
            VariantName::Potential => Variant::Potential,
            VariantName::Reduced => Variant::Reduced,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Identity,
    Linear,
    Tanh,
    Arctan,
}

/// A scalar map. `tanh` and `arctan` map onto the open interval
/// `(lower, upper)`; `linear` is `gain · z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub kind: MapKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
}

impl MapSpec {
    pub fn identity() -> Self {
        Self { kind: MapKind::Identity, lower: None, upper: None, gain: None }
    }

    pub fn linear(gain: f64) -> Self {
        Self { kind: MapKind::Linear, lower: None, upper: None, gain: Some(gain) }
    }

    pub fn tanh(lower: f64, upper: f64) -> Self {
        Self { kind: MapKind::Tanh, lower: Some(lower), upper: Some(upper), gain: None }
    }

    pub fn arctan(lower: f64, upper: f64) -> Self {
        Self { kind: MapKind::Arctan, lower: Some(lower), upper: Some(upper), gain: None }
    }

    pub fn build(&self, what: &str) -> Result<Saturation<f64>, String> {
        let gain = self.gain.unwrap_or(1.0);
        let bounds = || match (self.lower, self.upper) {
            (Some(l), Some(u)) => Ok((l, u)),
            _ => Err(format!("{what}: {:?} map needs lower and upper", self.kind)),
        };
        let unbounded = || {
            if self.lower.is_some() || self.upper.is_some() {
                Err(format!("{what}: {:?} map takes no bounds", self.kind))
            } else {
                Ok(())
            }
        };
        let r = match self.kind {
            MapKind::Identity => {
                unbounded()?;
                if self.gain.is_some() {
                    return Err(format!("{what}: identity map takes no gain"));
                }
                Ok(Saturation::identity())
            }
            MapKind::Linear => {
                unbounded()?;
                Saturation::linear(gain)
            }
            MapKind::Tanh => {
                let (l, u) = bounds()?;
                Saturation::tanh(l, u, gain)
            }
            MapKind::Arctan => {
                let (l, u) = bounds()?;
                Saturation::arctan(l, u, gain)
            }
        };
        r.map_err(|e| format!("{what}: {e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub nodes: usize,
    /// `[tail, head]`; positive flow runs from tail to head.
    pub edges: Vec<[usize; 2]>,
    pub actuated: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compartmental_edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub state_dependent_io: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    /// Storage time constants `T_x` (default 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx: Option<OneOrMany<f64>>,
    /// Node capacitances, used as `T_x` for electrical networks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacitance_farads: Option<OneOrMany<f64>>,
    /// Output maps `h` (default identity).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OneOrMany<MapSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_mu: Option<OneOrMany<f64>>,
    /// Line inductances, used as `T_μ` for potential-induced flows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inductance_henries: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_xi: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_theta: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_phi: Option<OneOrMany<f64>>,
    pub q: OneOrMany<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_map: Option<OneOrMany<MapSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_map: Option<OneOrMany<MapSpec>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommKind {
    /// Each `[i, j, w]` links actuated nodes `i` and `j` both ways.
    Undirected,
    /// Each `[i, j, w]` means node `i` listens to node `j`.
    Directed,
    /// All pairs of actuated nodes with weight `weight`.
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommSpec {
    pub graph: CommKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompartmentalSpec {
    pub gamma: OneOrMany<MapSpec>,
    pub eta: OneOrMany<MapSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_hours: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_seconds: Option<f64>,
    pub d: OneOrMany<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetpointEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_hours: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_seconds: Option<f64>,
    pub ybar: OneOrMany<f64>,
}

/// Setpoint held at `from` until the start, linear to `to` at the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_hours: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_hours: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_seconds: Option<f64>,
    pub from: OneOrMany<f64>,
    pub to: OneOrMany<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub disturbance: Vec<DisturbanceEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub setpoint: Vec<SetpointEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setpoint_ramp: Option<RampSpec>,
    /// Simulate the incremental system `x̃ = x − ȳ(t)` of a ramp, with the
    /// ramp slope folded into a constant disturbance.
    #[serde(default, skip_serializing_if = "is_false")]
    pub incremental: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_hours: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_hours: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_seconds: Option<f64>,
    #[serde(default = "one")]
    pub log_every: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitModeName {
    #[default]
    Midrange,
    Equilibrium,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default)]
    pub mode: InitModeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<OneOrMany<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSpec {
    #[serde(default = "yes")]
    pub constraints: bool,
    #[serde(default = "yes")]
    pub lyapunov: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_band: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_band_rel: Option<f64>,
    #[serde(default)]
    pub oscillation: bool,
}

fn yes() -> bool {
    true
}

impl Default for MonitorSpec {
    fn default() -> Self {
        Self { constraints: true, lyapunov: true, output_band: None, input_band_rel: None, oscillation: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub variant: VariantName,
    pub network: NetworkSpec,
    #[serde(default)]
    pub plant: PlantSpec,
    pub controller: ControllerSpec,
    pub communication: CommSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compartmental: Option<CompartmentalSpec>,
    pub schedule: ScheduleSpec,
    pub integration: IntegrationSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub monitors: MonitorSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeUnit {
    Hours,
    Seconds,
}

impl TimeUnit {
    pub fn suffix(self) -> &'static str {
        match self {
            TimeUnit::Hours => "h",
            TimeUnit::Seconds => "s",
        }
    }
}

/// Everything the simulator needs, built from a validated scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub system: ClosedLoop<f64>,
    pub schedule: Schedule<f64>,
    pub initial: Initial<f64>,
    pub settings: SimSettings<f64>,
    pub time_unit: TimeUnit,
    /// Non-fatal findings such as an uncertified potential-flow network.
    pub warnings: Vec<String>,
}

struct Times {
    unit: Option<TimeUnit>,
    mixed: bool,
}

impl Times {
    fn take(&mut self, hours: Option<f64>, seconds: Option<f64>, what: &str, errors: &mut Vec<String>) -> Option<f64> {
        let (v, u) = match (hours, seconds) {
            (Some(h), None) => (h, TimeUnit::Hours),
            (None, Some(s)) => (s, TimeUnit::Seconds),
            (Some(_), Some(_)) => {
                errors.push(format!("{what}: give either hours or seconds, not both"));
                return None;
            }
            (None, None) => {
                errors.push(format!("{what}: missing (use {what}_hours or {what}_seconds)"));
                return None;
            }
        };
        match self.unit {
            None => self.unit = Some(u),
            Some(prev) if prev != u && !self.mixed => {
                self.mixed = true;
                errors.push("time fields mix hours and seconds".into());
            }
            _ => {}
        }
        if !v.is_finite() {
            errors.push(format!("{what}: not finite"));
            return None;
        }
        Some(v)
    }
}

fn finite_positive(v: &[f64], what: &str, errors: &mut Vec<String>) {
    if v.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
        errors.push(format!("{what}: entries must be finite and positive"));
    }
}

fn finite(v: &[f64], what: &str, errors: &mut Vec<String>) {
    if v.iter().any(|t| !t.is_finite()) {
        errors.push(format!("{what}: entries must be finite"));
    }
}

fn maps(spec: Option<&OneOrMany<MapSpec>>, len: usize, what: &str, errors: &mut Vec<String>) -> Option<Vec<Saturation<f64>>> {
    let specs = match spec {
        Some(s) => s.expand(len, what, errors)?,
        None => vec![MapSpec::identity(); len],
    };
    let mut out = Vec::with_capacity(len);
    let mut ok = true;
    for (i, s) in specs.iter().enumerate() {
        match s.build(&format!("{what}[{}]", i + 1)) {
            Ok(m) => out.push(m),
            Err(e) => {
                errors.push(e);
                ok = false;
            }
        }
    }
    ok.then_some(out)
}

fn constants(
    a: Option<&OneOrMany<f64>>,
    a_name: &str,
    b: Option<&OneOrMany<f64>>,
    b_name: &str,
    len: usize,
    errors: &mut Vec<String>,
) -> Option<Vec<f64>> {
    let v = match (a, b) {
        (Some(_), Some(_)) => {
            errors.push(format!("give either {a_name} or {b_name}, not both"));
            return None;
        }
        (Some(v), None) => v.expand(len, a_name, errors)?,
        (None, Some(v)) => v.expand(len, b_name, errors)?,
        (None, None) => vec![1.0; len],
    };
    finite_positive(&v, if a.is_some() { a_name } else { b_name }, errors);
    Some(v)
}

fn defaulted(v: Option<&OneOrMany<f64>>, len: usize, what: &str, default: f64, errors: &mut Vec<String>) -> Option<Vec<f64>> {
    match v {
        Some(v) => v.expand(len, what, errors),
        None => Some(vec![default; len]),
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises to TOML")
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_toml())
    }

    /// Validates the whole scenario and builds the simulator inputs. On
    /// failure every violation found is listed.
    pub fn prepare(&self) -> Result<Prepared, ScenarioError> {
        let mut errors = Vec::new();
        let mut warnings = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errors.push(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let variant: Variant = self.variant.into();
        let mut times = Times { unit: None, mixed: false };

        let topo = self.topology(variant, &mut errors);
        let n = self.network.nodes;
        let m = self.network.edges.len();
        let p = self.network.actuated.len();

        // plant
        let tx = constants(
            self.plant.tx.as_ref(),
            "plant.tx",
            self.plant.capacitance_farads.as_ref(),
            "plant.capacitance_farads",
            n,
            &mut errors,
        );
        let h = maps(self.plant.output.as_ref(), n, "plant.output", &mut errors);
        if let Some(h) = &h {
            for (i, hi) in h.iter().enumerate() {
                if !hi.is_strictly_increasing() {
                    errors.push(format!("plant.output[{}]: output map must be strictly increasing", i + 1));
                }
            }
        }

        // controller
        let c = &self.controller;
        let t_mu = constants(c.t_mu.as_ref(), "controller.t_mu", c.inductance_henries.as_ref(), "controller.inductance_henries", m, &mut errors);
        let t_xi = constants(c.t_xi.as_ref(), "controller.t_xi", None, "", m, &mut errors);
        let t_theta = constants(c.t_theta.as_ref(), "controller.t_theta", None, "", p, &mut errors);
        let t_phi = constants(c.t_phi.as_ref(), "controller.t_phi", None, "", p, &mut errors);
        let q = c.q.expand(p, "controller.q", &mut errors);
        if let Some(q) = &q {
            finite_positive(q, "controller.q", &mut errors);
        }
        let r = defaulted(c.r.as_ref(), p, "controller.r", 0.0, &mut errors);
        let s = defaulted(c.s.as_ref(), p, "controller.s", 0.0, &mut errors);
        for (v, what) in [(&r, "controller.r"), (&s, "controller.s")] {
            if let Some(v) = v {
                finite(v, what, &mut errors);
            }
        }
        if variant == Variant::Potential && c.t_xi.is_some() {
            errors.push("controller.t_xi: the potential variant has no xi state".into());
        }
        if variant == Variant::Reduced && (c.t_xi.is_some() || c.t_phi.is_some()) {
            errors.push("controller: the reduced variant has no xi or phi states".into());
        }
        let f = maps(c.flow_map.as_ref(), m, "controller.flow_map", &mut errors);
        let g = maps(c.input_map.as_ref(), p, "controller.input_map", &mut errors);
        if f.iter().chain(&g).flatten().any(|s| !s.is_strictly_increasing()) {
            errors.push("Assumption 7: flow and input maps must be strictly increasing".into());
        }
        let lcom = self.communication(&mut errors);

        // compartmental maps
        let comp = match (variant, &self.compartmental) {
            (Variant::Compartmental, Some(cs)) => {
                let l = self.network.compartmental_edges.len();
                let k = self.network.state_dependent_io.len();
                let gamma = maps(Some(&cs.gamma), l, "compartmental.gamma", &mut errors);
                let eta = maps(Some(&cs.eta), k, "compartmental.eta", &mut errors);
                match (gamma, eta) {
                    (Some(gamma), Some(eta)) => Some(CompartmentalParams { gamma, eta }),
                    _ => None,
                }
            }
            (Variant::Compartmental, None) => {
                errors.push("compartmental variant needs a [compartmental] table".into());
                None
            }
            (_, Some(_)) => {
                errors.push("[compartmental] is only allowed with variant = \"compartmental\"".into());
                None
            }
            _ => None,
        };

        // schedule
        let schedule = self.schedule(n, &mut times, &mut errors);

        // integration
        let ig = &self.integration;
        let dt = times.take(ig.dt_hours, ig.dt_seconds, "integration.dt", &mut errors);
        let horizon = times.take(ig.horizon_hours, ig.horizon_seconds, "integration.horizon", &mut errors);
        if dt.is_some_and(|v| v <= 0.0) {
            errors.push("integration.dt must be positive".into());
        }
        if horizon.is_some_and(|v| v <= 0.0) {
            errors.push("integration.horizon must be positive".into());
        }
        if let (Some(dt), Some(hz)) = (dt, horizon) {
            if dt > hz {
                errors.push("integration.dt exceeds the horizon".into());
            }
        }
        if ig.log_every == 0 {
            errors.push("integration.log_every must be at least 1".into());
        }

        // initial condition
        let init = &self.initial;
        let has_xi = variant.has_xi();
        let has_phi = variant.has_phi();
        if init.xi.is_some() && !has_xi {
            errors.push(format!("initial.xi: the {} variant has no xi state", variant.name()));
        }
        if init.phi.is_some() && !has_phi {
            errors.push(format!("initial.phi: the {} variant has no phi state", variant.name()));
        }
        let mut x0 = init.x.as_ref().and_then(|v| v.expand(n, "initial.x", &mut errors));
        let mu0 = init.mu.as_ref().and_then(|v| v.expand(m, "initial.mu", &mut errors));
        let xi0 = init.xi.as_ref().filter(|_| has_xi).and_then(|v| v.expand(m, "initial.xi", &mut errors));
        let th0 = init.theta.as_ref().and_then(|v| v.expand(p, "initial.theta", &mut errors));
        let ph0 = init.phi.as_ref().filter(|_| has_phi).and_then(|v| v.expand(p, "initial.phi", &mut errors));
        for (v, what) in [(&x0, "initial.x"), (&mu0, "initial.mu"), (&xi0, "initial.xi"), (&th0, "initial.theta"), (&ph0, "initial.phi")] {
            if let Some(v) = v {
                finite(v, what, &mut errors);
            }
        }

        // monitors
        let mon = &self.monitors;
        if mon.output_band.is_some_and(|b| !(b.is_finite() && b > 0.0)) {
            errors.push("monitors.output_band must be positive".into());
        }
        if mon.input_band_rel.is_some_and(|b| !(b.is_finite() && b > 0.0)) {
            errors.push("monitors.input_band_rel must be positive".into());
        }

        // setpoints inside the range of h
        let mut schedule = schedule;
        if let (Some(h), Some(sch)) = (&h, &schedule) {
            let values: Vec<&Vec<f64>> = match &sch.setpoint {
                Setpoint::Steps(list) => list.iter().map(|e| &e.1).collect(),
                Setpoint::Ramp { y1, y2, .. } => vec![y1, y2],
            };
            let mut bad = BTreeSet::new();
            for y in values {
                for (i, (&yi, hi)) in y.iter().zip(h).enumerate() {
                    if !hi.contains(yi) && bad.insert(i) {
                        errors.push(format!("Assumption 4: setpoint {yi} at node {} outside the range of h", i + 1));
                    }
                }
            }
        }

        // ramp tracking in incremental coordinates
        if self.schedule.incremental {
            match (&schedule, &tx, &h) {
                (Some(sch), Some(tx), Some(h)) => match &sch.setpoint {
                    Setpoint::Ramp { y1, .. } if sch.disturbance.len() == 1 => {
                        let mut plant = PlantParams::new(tx.clone());
                        plant.h = h.clone();
                        match ramp_transform(&sch.setpoint, &plant, &sch.disturbance[0].1) {
                            Ok(dt) => {
                                if let Some(x) = x0.as_mut() {
                                    x.iter_mut().zip(y1).for_each(|(xi, &y)| *xi -= y);
                                }
                                schedule = Some(Schedule::constant(dt, vec![0.0; n]));
                            }
                            Err(e) => errors.push(format!("schedule.incremental: {e}")),
                        }
                    }
                    _ => errors.push(
                        "schedule.incremental needs a setpoint_ramp and a single disturbance entry".into(),
                    ),
                },
                _ => {}
            }
        }

        if !errors.is_empty() {
            return Err(ScenarioError::Validation(errors));
        }

        // every missing piece above has recorded an error
        const OK: &str = "validated above";
        let (topo, tx, h, lcom, schedule) = (topo.expect(OK), tx.expect(OK), h.expect(OK), lcom.expect(OK), schedule.expect(OK));
        let (t_mu, t_xi, t_theta, t_phi) = (t_mu.expect(OK), t_xi.expect(OK), t_theta.expect(OK), t_phi.expect(OK));
        let (q, r, s, f, g) = (q.expect(OK), r.expect(OK), s.expect(OK), f.expect(OK), g.expect(OK));
        let (dt, horizon) = (dt.expect(OK), horizon.expect(OK));

        let mut plant = PlantParams::new(tx);
        plant.h = h;
        let ctrl = ControllerConfig {
            t_mu,
            t_xi: if has_xi { t_xi } else { vec![1.0; m] },
            t_theta,
            t_phi: if has_phi { t_phi } else { vec![1.0; p] },
            f,
            g,
            q,
            r,
            s,
            lcom,
        };
        let system = ClosedLoop::new(variant, topo, plant, comp, ctrl)
            .map_err(|e| ScenarioError::Validation(vec![e.to_string()]))?;

        // attainability of every (d, ȳ) pair the run will see
        let mut seen = BTreeSet::new();
        for (d, y) in reference_pairs(&schedule, n) {
            if let Err(e) = Equilibrium::construct(&system, &d, &y) {
                let msg = e.to_string();
                if seen.insert(msg.clone()) {
                    errors.push(msg);
                }
            }
        }
        if !errors.is_empty() && variant != Variant::Reduced {
            return Err(ScenarioError::Validation(errors));
        }
        if variant == Variant::Reduced {
            warnings.append(&mut errors);
        }

        if variant == Variant::Potential {
            let ve: BTreeSet<usize> = system.topo.actuated().iter().copied().collect();
            if !is_zero_forcing(&system.topo, &ve) {
                warnings.push(
                    "Assumption 9: actuated set is not a zero forcing set; convergence is not certified".into(),
                );
            }
        }

        let initial = Initial {
            mode: match init.mode {
                InitModeName::Midrange => InitMode::Midrange,
                InitModeName::Equilibrium => InitMode::Equilibrium,
            },
            x: x0,
            mu: mu0,
            xi: xi0,
            theta: th0,
            phi: ph0,
        };
        let settings = SimSettings {
            dt,
            horizon,
            log_every: ig.log_every,
            monitors: MonitorSet {
                constraints: mon.constraints,
                lyapunov: mon.lyapunov,
                output_band: mon.output_band,
                input_band_rel: mon.input_band_rel,
                oscillation: mon.oscillation,
            },
        };
        Ok(Prepared {
            scenario: self.clone(),
            system,
            schedule,
            initial,
            settings,
            time_unit: times.unit.unwrap_or(TimeUnit::Hours),
            warnings,
        })
    }

    fn topology(&self, variant: Variant, errors: &mut Vec<String>) -> Option<NetworkTopology> {
        let net = &self.network;
        let n = net.nodes;
        let start = errors.len();
        if n == 0 {
            errors.push("network.nodes must be at least 1".into());
            return None;
        }
        let label_ok = |v: usize| (1..=n).contains(&v);
        let check_edges = |list: &[[usize; 2]], what: &str, errors: &mut Vec<String>| {
            let mut seen = BTreeSet::new();
            for &[a, b] in list {
                if !label_ok(a) || !label_ok(b) {
                    errors.push(format!("{what}: edge [{a}, {b}] references a node outside 1..={n}"));
                } else if a == b {
                    errors.push(format!("{what}: edge [{a}, {b}] is a self-loop"));
                } else if !seen.insert((a.min(b), a.max(b))) {
                    errors.push(format!("{what}: edge [{a}, {b}] appears more than once"));
                }
            }
        };
        check_edges(&net.edges, "network.edges", errors);
        check_edges(&net.compartmental_edges, "network.compartmental_edges", errors);
        let check_nodes = |list: &[usize], what: &str, errors: &mut Vec<String>| {
            let mut seen = BTreeSet::new();
            for &v in list {
                if !label_ok(v) {
                    errors.push(format!("{what}: node {v} outside 1..={n}"));
                } else if !seen.insert(v) {
                    errors.push(format!("{what}: node {v} listed more than once"));
                }
            }
        };
        if net.actuated.is_empty() {
            errors.push("Assumption 2: at least one node must have a controllable input".into());
        }
        check_nodes(&net.actuated, "network.actuated", errors);
        check_nodes(&net.state_dependent_io, "network.state_dependent_io", errors);
        if variant != Variant::Compartmental && !(net.compartmental_edges.is_empty() && net.state_dependent_io.is_empty()) {
            errors.push("compartmental edges and state-dependent inputs need variant = \"compartmental\"".into());
        }
        if errors.len() > start {
            return None;
        }
        let idx = |l: &[[usize; 2]]| l.iter().map(|&[a, b]| (a - 1, b - 1)).collect::<Vec<_>>();
        let topo = NetworkTopology::new(n, idx(&net.edges), net.actuated.iter().map(|v| v - 1).collect())
            .and_then(|t| {
                t.with_compartmental(idx(&net.compartmental_edges), net.state_dependent_io.iter().map(|v| v - 1).collect())
            });
        match topo {
            Ok(t) => {
                if !t.is_connected() {
                    errors.push("Assumption 1: physical network is not connected".into());
                }
                Some(t)
            }
            Err(e) => {
                errors.push(e.to_string());
                None
            }
        }
    }

    fn communication(&self, errors: &mut Vec<String>) -> Option<flowreg::Matrix<f64>> {
        let cs = &self.communication;
        let act = &self.network.actuated;
        let p = act.len();
        let pos = |v: usize| act.iter().position(|&a| a == v);
        let start = errors.len();
        let graph = match cs.graph {
            CommKind::Complete => {
                if !cs.edges.is_empty() {
                    errors.push("communication: a complete graph takes a weight, not edges".into());
                }
                match cs.weight {
                    Some(w) if w.is_finite() && w > 0.0 => CommGraph::complete(p, w),
                    _ => {
                        errors.push("communication.weight must be positive for a complete graph".into());
                        return None;
                    }
                }
            }
            kind => {
                if cs.weight.is_some() {
                    errors.push("communication.weight is only used by complete graphs".into());
                }
                let mut arcs = Vec::new();
                let mut seen = BTreeSet::new();
                for &(a, b, w) in &cs.edges {
                    let (Some(i), Some(j)) = (pos(a), pos(b)) else {
                        errors.push(format!("communication: edge [{a}, {b}] joins a node without an input"));
                        continue;
                    };
                    if i == j {
                        errors.push(format!("communication: edge [{a}, {b}] is a self-loop"));
                        continue;
                    }
                    let key = if kind == CommKind::Undirected { (i.min(j), i.max(j)) } else { (i, j) };
                    if !seen.insert(key) {
                        errors.push(format!("communication: edge [{a}, {b}] appears more than once"));
                        continue;
                    }
                    if !(w.is_finite() && w > 0.0) {
                        errors.push(format!("communication: edge [{a}, {b}] needs a positive weight, got {w}"));
                        continue;
                    }
                    arcs.push((i, j, w));
                }
                if kind == CommKind::Undirected {
                    CommGraph::undirected(p, &arcs)
                } else {
                    CommGraph::new(p, arcs)
                }
            }
        };
        if errors.len() > start {
            return None;
        }
        let v = graph.violations();
        if !v.is_empty() {
            errors.extend(v);
            return None;
        }
        graph.laplacian().map_err(|e| errors.push(e.to_string())).ok()
    }

    fn schedule(&self, n: usize, times: &mut Times, errors: &mut Vec<String>) -> Option<Schedule<f64>> {
        let sc = &self.schedule;
        let start = errors.len();
        if sc.disturbance.is_empty() {
            errors.push("schedule.disturbance: at least one entry is required".into());
        }
        let mut disturbance = Vec::new();
        for (k, e) in sc.disturbance.iter().enumerate() {
            let what = format!("schedule.disturbance[{}]", k + 1);
            let t = times.take(e.at_hours, e.at_seconds, &format!("{what}.at"), errors);
            let d = e.d.expand(n, &format!("{what}.d"), errors);
            if let Some(d) = &d {
                finite(d, &format!("{what}.d"), errors);
            }
            if let (Some(t), Some(d)) = (t, d) {
                disturbance.push((t, d));
            }
        }
        if disturbance.first().is_some_and(|e| e.0 != 0.0) {
            errors.push("schedule.disturbance: the first entry must start at time 0".into());
        }
        let setpoint = match (&sc.setpoint[..], &sc.setpoint_ramp) {
            ([], None) => {
                errors.push("schedule: give setpoint entries or a setpoint_ramp".into());
                None
            }
            ([_, ..], Some(_)) => {
                errors.push("schedule: give setpoint entries or a setpoint_ramp, not both".into());
                None
            }
            (list, None) => {
                let mut steps = Vec::new();
                for (k, e) in list.iter().enumerate() {
                    let what = format!("schedule.setpoint[{}]", k + 1);
                    let t = times.take(e.at_hours, e.at_seconds, &format!("{what}.at"), errors);
                    let y = e.ybar.expand(n, &format!("{what}.ybar"), errors);
                    if let Some(y) = &y {
                        finite(y, &format!("{what}.ybar"), errors);
                    }
                    if let (Some(t), Some(y)) = (t, y) {
                        steps.push((t, y));
                    }
                }
                if steps.first().is_some_and(|e| e.0 != 0.0) {
                    errors.push("schedule.setpoint: the first entry must start at time 0".into());
                }
                Some(Setpoint::Steps(steps))
            }
            ([], Some(r)) => {
                let t1 = times.take(r.start_hours, r.start_seconds, "schedule.setpoint_ramp.start", errors);
                let t2 = times.take(r.end_hours, r.end_seconds, "schedule.setpoint_ramp.end", errors);
                let y1 = r.from.expand(n, "schedule.setpoint_ramp.from", errors);
                let y2 = r.to.expand(n, "schedule.setpoint_ramp.to", errors);
                match (t1, t2, y1, y2) {
                    (Some(t1), Some(t2), Some(y1), Some(y2)) => {
                        if t2 <= t1 {
                            errors.push("schedule.setpoint_ramp: end must be after start".into());
                        }
                        Some(Setpoint::Ramp { t1, t2, y1, y2 })
                    }
                    _ => None,
                }
            }
        };
        if errors.len() > start {
            return None;
        }
        let sch = Schedule { disturbance, setpoint: setpoint? };
        let check = |ts: Vec<f64>, what: &str, errors: &mut Vec<String>| {
            if ts.windows(2).any(|w| w[0] >= w[1]) {
                errors.push(format!("{what}: switch times must be strictly increasing"));
            }
        };
        check(sch.disturbance.iter().map(|e| e.0).collect(), "schedule.disturbance", errors);
        if let Setpoint::Steps(list) = &sch.setpoint {
            check(list.iter().map(|e| e.0).collect(), "schedule.setpoint", errors);
        }
        (errors.len() == start).then_some(sch)
    }
}

/// Distinct `(d, ȳ)` pairs that will serve as references during a run.
pub fn reference_pairs(schedule: &Schedule<f64>, n: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut ts = vec![0.0];
    ts.extend(schedule.switch_times());
    let mut out: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for &t in &ts {
        let d = schedule.disturbance_at(t).to_vec();
        let mut y = vec![0.0; n];
        schedule.setpoint_at(t, &mut y);
        if !out.iter().any(|(a, b)| *a == d && *b == y) {
            out.push((d, y));
        }
    }
    out
}
