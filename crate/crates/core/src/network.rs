//! Network data model.
//!
//! A case file describes buses, existing lines, candidate corridors,
//! reconductoring options, market participants, the planning horizon and the
//! tariff policy. [`Network::from_case`] validates it and produces a single
//! ordered line list in which corridors follow the existing lines.
//!
//! Bus ids are contiguous from 0; the optional `label` keeps the name used in
//! the source data (for Garver-6 the labels are "1".."6").

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::{HashSet, VecDeque};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CaseError {
    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("duplicate {what} id {id}")]
    DuplicateId { what: &'static str, id: usize },
    #[error("{what} ids must be contiguous from 0; missing {id}")]
    NonContiguous { what: &'static str, id: usize },
    #[error("{what} {id} references unknown bus {bus}")]
    UnknownBus { what: &'static str, id: usize, bus: usize },
    #[error("{what} {id} has non-positive reactance {x}")]
    BadReactance { what: &'static str, id: usize, x: f64 },
    #[error("no slack bus: {0}")]
    NoSlack(String),
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error("configuration {config}: reduced susceptance matrix is singular")]
    Singular { config: usize },
    #[error("io error reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Bus {
    pub id: usize,
    #[serde(default)]
    pub label: Option<String>,
}

impl Bus {
    pub fn display(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.id.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LineSpec {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    /// Per-circuit reactance in p.u.
    pub reactance: f64,
    /// Total rating of the existing circuits in MW.
    pub capacity_mw: f64,
    #[serde(default = "one")]
    pub circuits: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CorridorSpec {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    pub candidate_reactance: f64,
    /// Rating of one candidate circuit in MW.
    pub candidate_capacity_mw: f64,
    pub fixed_cost_mgbp: f64,
    pub max_circuits: u32,
    /// Existing line that the candidates run in parallel with, if any.
    #[serde(default)]
    pub existing_line: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReconductorSpec {
    pub line: usize,
    pub fixed_cost_mgbp: f64,
    pub variable_cost_mgbp_per_mw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Reconductoring {
    /// Capacity increase factors including 0 (no action).
    pub factors: Vec<f64>,
    pub candidates: Vec<ReconductorSpec>,
}

impl Default for Reconductoring {
    fn default() -> Self {
        Reconductoring { factors: vec![0.0], candidates: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Hash)]
#[serde(rename_all = "lowercase")]
pub enum ParticipantKind {
    Generator,
    Consumer,
    Wind,
}

impl ParticipantKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParticipantKind::Generator => "generator",
            ParticipantKind::Consumer => "consumer",
            ParticipantKind::Wind => "wind",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Participant {
    pub id: usize,
    pub kind: ParticipantKind,
    pub bus: usize,
    #[serde(default)]
    pub min_mw: f64,
    /// Capacity (generators, wind) or maximum demand in the first year (consumers).
    pub max_mw: f64,
    /// Offer/bid price; for wind farms the curtailment cost.
    pub bid_gbp_per_mwh: f64,
    /// Wind forecast per year and operating period (MW).
    #[serde(default)]
    pub forecast_mw: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Horizon {
    pub years: usize,
    pub operating_periods: usize,
    pub hours_per_period: f64,
    pub discount_rate: f64,
    pub demand_growth: f64,
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon { years: 2, operating_periods: 1, hours_per_period: 8760.0, discount_rate: 0.05, demand_growth: 0.05 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TariffPolicy {
    /// Ratio between capacity-based and volumetric revenue.
    pub capacity_to_volumetric_ratio: f64,
    /// Upper bound on the volumetric tariff (GBP/MWh).
    pub volumetric_upper_gbp_per_mwh: f64,
    /// Bits for the binary expansion of the volumetric tariff.
    pub expansion_bits: u32,
    /// Allocation of line `l` charges to bus `b` as `allocation[l][b]`; all ones when absent.
    #[serde(default)]
    pub allocation: Option<Vec<Vec<f64>>>,
}

impl Default for TariffPolicy {
    fn default() -> Self {
        TariffPolicy {
            capacity_to_volumetric_ratio: 1.0,
            volumetric_upper_gbp_per_mwh: 12.7,
            expansion_bits: 7,
            allocation: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Case {
    pub schema_version: u32,
    pub name: String,
    #[serde(default = "default_base")]
    pub base_mva: f64,
    #[serde(default)]
    pub slack_bus: Option<usize>,
    pub buses: Vec<Bus>,
    pub lines: Vec<LineSpec>,
    #[serde(default)]
    pub corridors: Vec<CorridorSpec>,
    #[serde(default)]
    pub reconductoring: Reconductoring,
    pub participants: Vec<Participant>,
    pub horizon: Horizon,
    #[serde(default)]
    pub tariff_policy: TariffPolicy,
}

fn default_base() -> f64 {
    100.0
}

impl Case {
    pub fn from_json(text: &str) -> Result<Case, CaseError> {
        let case: Case = serde_json::from_str(text)?;
        if case.schema_version != SCHEMA_VERSION {
            return Err(CaseError::SchemaVersion { found: case.schema_version, expected: SCHEMA_VERSION });
        }
        Ok(case)
    }

    pub fn load(path: &Path) -> Result<Case, CaseError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CaseError::Io { path: path.display().to_string(), source })?;
        Case::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconductorCosts {
    pub fixed_cost_mgbp: f64,
    pub variable_cost_mgbp_per_mw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub reactance: f64,
    pub capacity_mw: f64,
    pub fixed_cost_mgbp: f64,
    pub max_circuits: u32,
    pub corridor_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionLine {
    pub index: usize,
    pub name: String,
    pub from: usize,
    pub to: usize,
    /// Per-circuit reactance of the existing circuits (p.u.).
    pub reactance: f64,
    pub existing_circuits: u32,
    /// Rating of the existing circuits (MW).
    pub base_capacity_mw: f64,
    pub reconductor: Option<ReconductorCosts>,
    pub expansion: Option<Expansion>,
}

impl TransmissionLine {
    pub fn reconductorable(&self) -> bool {
        self.reconductor.is_some()
    }

    pub fn expandable(&self) -> bool {
        self.expansion.is_some()
    }

    /// Series susceptance with `added` candidate circuits in service.
    pub fn susceptance(&self, added: u32) -> f64 {
        let mut b = 0.0;
        if self.existing_circuits > 0 {
            b += self.existing_circuits as f64 / self.reactance;
        }
        if let Some(e) = &self.expansion {
            b += added as f64 / e.reactance;
        }
        b
    }

    /// Rating with `added` circuits and a cumulative reconductoring factor.
    pub fn capacity(&self, added: u32, reconductor_factor: f64) -> f64 {
        let mut c = self.base_capacity_mw * (1.0 + reconductor_factor);
        if let Some(e) = &self.expansion {
            c += added as f64 * e.capacity_mw;
        }
        c
    }
}

/// Validated network view used by every downstream module.
#[derive(Debug, Clone)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub lines: Vec<TransmissionLine>,
    pub slack: usize,
    pub reconductor_factors: Vec<f64>,
}

/// A choice of the number of added circuits on every expandable line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    pub id: usize,
    /// Added circuits per line (zero for non-expandable lines).
    pub circuits: Vec<u32>,
    /// Buses not connected to the slack bus.
    pub islanded: Vec<usize>,
    /// False when a participant sits on an islanded bus.
    pub valid: bool,
}

/// Power transfer distribution factors, `factor[l][b]` is the flow on line `l`
/// (from -> to) per MW injected at bus `b` and withdrawn at the slack bus.
#[derive(Debug, Clone, PartialEq)]
pub struct Ptdf {
    pub factor: Vec<Vec<f64>>,
}

impl Ptdf {
    pub fn get(&self, line: usize, bus: usize) -> f64 {
        self.factor[line][bus]
    }

    pub fn num_lines(&self) -> usize {
        self.factor.len()
    }
}

impl Network {
    pub fn from_case(case: &Case) -> Result<Network, CaseError> {
        let nb = case.buses.len();
        if nb == 0 {
            return Err(CaseError::NoSlack("case has no buses".into()));
        }
        check_ids("bus", case.buses.iter().map(|b| b.id))?;
        check_ids("line", case.lines.iter().map(|l| l.id))?;
        check_ids("corridor", case.corridors.iter().map(|c| c.id))?;
        check_ids("participant", case.participants.iter().map(|p| p.id))?;
        let mut buses = case.buses.clone();
        buses.sort_by_key(|b| b.id);

        let slack = match case.slack_bus {
            Some(s) if s < nb => s,
            Some(s) => return Err(CaseError::NoSlack(format!("slack bus {s} does not exist"))),
            None => 0,
        };

        let mut lines = Vec::new();
        let mut specs = case.lines.clone();
        specs.sort_by_key(|l| l.id);
        for l in &specs {
            for b in [l.from_bus, l.to_bus] {
                if b >= nb {
                    return Err(CaseError::UnknownBus { what: "line", id: l.id, bus: b });
                }
            }
            if l.from_bus == l.to_bus {
                return Err(CaseError::Invalid(format!("line {} is a self-loop", l.id)));
            }
            if !(l.reactance > 0.0) {
                return Err(CaseError::BadReactance { what: "line", id: l.id, x: l.reactance });
            }
            if l.circuits == 0 {
                return Err(CaseError::Invalid(format!("existing line {} has zero circuits", l.id)));
            }
            lines.push(TransmissionLine {
                index: lines.len(),
                name: format!("{}-{}", buses[l.from_bus].display(), buses[l.to_bus].display()),
                from: l.from_bus,
                to: l.to_bus,
                reactance: l.reactance,
                existing_circuits: l.circuits,
                base_capacity_mw: l.capacity_mw,
                reconductor: None,
                expansion: None,
            });
        }
        let mut corridors = case.corridors.clone();
        corridors.sort_by_key(|c| c.id);
        for c in &corridors {
            for b in [c.from_bus, c.to_bus] {
                if b >= nb {
                    return Err(CaseError::UnknownBus { what: "corridor", id: c.id, bus: b });
                }
            }
            if !(c.candidate_reactance > 0.0) {
                return Err(CaseError::BadReactance { what: "corridor", id: c.id, x: c.candidate_reactance });
            }
            let exp = Expansion {
                reactance: c.candidate_reactance,
                capacity_mw: c.candidate_capacity_mw,
                fixed_cost_mgbp: c.fixed_cost_mgbp,
                max_circuits: c.max_circuits,
                corridor_id: c.id,
            };
            match c.existing_line {
                Some(l) => {
                    let line = lines
                        .get_mut(l)
                        .ok_or_else(|| CaseError::Invalid(format!("corridor {} references unknown line {l}", c.id)))?;
                    if line.expansion.is_some() {
                        return Err(CaseError::Invalid(format!("line {l} has two corridors")));
                    }
                    line.expansion = Some(exp);
                }
                None => {
                    if c.from_bus == c.to_bus {
                        return Err(CaseError::Invalid(format!("corridor {} is a self-loop", c.id)));
                    }
                    lines.push(TransmissionLine {
                        index: lines.len(),
                        name: format!("{}-{}", buses[c.from_bus].display(), buses[c.to_bus].display()),
                        from: c.from_bus,
                        to: c.to_bus,
                        reactance: c.candidate_reactance,
                        existing_circuits: 0,
                        base_capacity_mw: 0.0,
                        reconductor: None,
                        expansion: Some(exp),
                    })
                }
            }
        }
        let rec = &case.reconductoring;
        if rec.factors.first().copied() != Some(0.0) && !rec.factors.is_empty() {
            return Err(CaseError::Invalid("reconductoring factors must start with 0".into()));
        }
        for r in &rec.candidates {
            let line = lines
                .get_mut(r.line)
                .ok_or_else(|| CaseError::Invalid(format!("reconductoring references unknown line {}", r.line)))?;
            if line.existing_circuits == 0 {
                return Err(CaseError::Invalid(format!("line {} has no existing circuit to reconductor", r.line)));
            }
            line.reconductor = Some(ReconductorCosts {
                fixed_cost_mgbp: r.fixed_cost_mgbp,
                variable_cost_mgbp_per_mw: r.variable_cost_mgbp_per_mw,
            });
        }
        for p in &case.participants {
            if p.bus >= nb {
                return Err(CaseError::UnknownBus { what: "participant", id: p.id, bus: p.bus });
            }
            if p.max_mw < p.min_mw {
                return Err(CaseError::Invalid(format!("participant {} has max below min", p.id)));
            }
        }
        let mut factors = rec.factors.clone();
        if factors.is_empty() {
            factors.push(0.0);
        }
        Ok(Network { buses, lines, slack, reconductor_factors: factors })
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn expandable_lines(&self) -> Vec<usize> {
        self.lines.iter().filter(|l| l.expandable()).map(|l| l.index).collect()
    }

    pub fn reconductorable_lines(&self) -> Vec<usize> {
        self.lines.iter().filter(|l| l.reconductorable()).map(|l| l.index).collect()
    }

    /// Enumerates every combination of added circuits (mixed radix over the
    /// expandable lines, first expandable line fastest).
    pub fn enumerate_configurations(&self, participant_buses: &[usize]) -> Vec<Configuration> {
        let exp = self.expandable_lines();
        let radix: Vec<u32> = exp.iter().map(|&l| self.lines[l].expansion.as_ref().unwrap().max_circuits + 1).collect();
        let total: usize = radix.iter().map(|&r| r as usize).product();
        let occupied: HashSet<usize> = participant_buses.iter().copied().collect();
        (0..total)
            .map(|id| {
                let mut circuits = vec![0u32; self.lines.len()];
                let mut rem = id;
                for (k, &l) in exp.iter().enumerate() {
                    circuits[l] = (rem % radix[k] as usize) as u32;
                    rem /= radix[k] as usize;
                }
                let islanded = self.islanded_buses(&circuits);
                let valid = !islanded.iter().any(|b| occupied.contains(b));
                Configuration { id, circuits, islanded, valid }
            })
            .collect()
    }

    pub fn islanded_buses(&self, circuits: &[u32]) -> Vec<usize> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for l in &self.lines {
            if l.susceptance(circuits[l.index]) > 0.0 {
                adj[l.from].push(l.to);
                adj[l.to].push(l.from);
            }
        }
        let mut seen = vec![false; n];
        let mut q = VecDeque::from([self.slack]);
        seen[self.slack] = true;
        while let Some(b) = q.pop_front() {
            for &c in &adj[b] {
                if !seen[c] {
                    seen[c] = true;
                    q.push_back(c);
                }
            }
        }
        (0..n).filter(|&b| !seen[b]).collect()
    }

    /// DC power transfer distribution factors for a configuration. Islanded
    /// buses and out-of-service lines get zero factors.
    pub fn compute_ptdf(&self, config: &Configuration) -> Result<Ptdf, CaseError> {
        let n = self.buses.len();
        let islanded: HashSet<usize> = config.islanded.iter().copied().collect();
        let keep: Vec<usize> = (0..n).filter(|&b| b != self.slack && !islanded.contains(&b)).collect();
        let pos: Vec<Option<usize>> = {
            let mut p = vec![None; n];
            for (k, &b) in keep.iter().enumerate() {
                p[b] = Some(k);
            }
            p
        };
        let k = keep.len();
        let mut bmat = DMatrix::<f64>::zeros(k, k);
        for l in &self.lines {
            let b = l.susceptance(config.circuits[l.index]);
            if b == 0.0 {
                continue;
            }
            let (i, j) = (pos[l.from], pos[l.to]);
            if let Some(i) = i {
                bmat[(i, i)] += b;
            }
            if let Some(j) = j {
                bmat[(j, j)] += b;
            }
            if let (Some(i), Some(j)) = (i, j) {
                bmat[(i, j)] -= b;
                bmat[(j, i)] -= b;
            }
        }
        let mut factor = vec![vec![0.0; n]; self.lines.len()];
        if k == 0 {
            return Ok(Ptdf { factor });
        }
        let lu = bmat.lu();
        let inv = lu.try_inverse().ok_or(CaseError::Singular { config: config.id })?;
        if inv.iter().any(|v| !v.is_finite()) {
            return Err(CaseError::Singular { config: config.id });
        }
        let angle = |bus: usize, inj: usize| -> f64 {
            match (pos[bus], pos[inj]) {
                (Some(i), Some(j)) => inv[(i, j)],
                _ => 0.0,
            }
        };
        for l in &self.lines {
            let b = l.susceptance(config.circuits[l.index]);
            if b == 0.0 {
                continue;
            }
            for &inj in &keep {
                factor[l.index][inj] = b * (angle(l.from, inj) - angle(l.to, inj));
            }
        }
        Ok(Ptdf { factor })
    }

    /// Rating of every line under a configuration with cumulative reconductoring factors.
    pub fn capacities(&self, config: &Configuration, reconductor: &[f64]) -> Vec<f64> {
        self.lines.iter().map(|l| l.capacity(config.circuits[l.index], reconductor[l.index])).collect()
    }

    /// Flows for given nodal injections (MW).
    pub fn flows(&self, ptdf: &Ptdf, injection: &[f64]) -> Vec<f64> {
        ptdf.factor.iter().map(|row| row.iter().zip(injection).map(|(a, b)| a * b).sum()).collect()
    }
}

fn check_ids(what: &'static str, ids: impl Iterator<Item = usize>) -> Result<(), CaseError> {
    let ids: Vec<usize> = ids.collect();
    let mut seen = HashSet::new();
    for &id in &ids {
        if !seen.insert(id) {
            return Err(CaseError::DuplicateId { what, id });
        }
    }
    for id in 0..ids.len() {
        if !seen.contains(&id) {
            return Err(CaseError::NonContiguous { what, id });
        }
    }
    Ok(())
}

/// Maximum demand in year `t` (1-based) after compound growth.
pub fn grow_demand(base_mw: f64, growth: f64, t: usize) -> f64 {
    base_mw * (1.0 + growth).powi(t as i32 - 1)
}
