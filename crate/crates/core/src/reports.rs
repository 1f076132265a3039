//! CSV reports for a solved plan.

use crate::dispatch::{BlockDispatch, InvestmentPlan, LowerLevel, LowerVarKind, PlanningContext};
use crate::network::{ParticipantKind, TransmissionLine};
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchRecord {
    pub t: usize,
    pub s: usize,
    pub b: usize,
    pub k: usize,
    pub kind: &'static str,
    pub quantity_mw: f64,
    pub price_gbp_per_mwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvestmentRecord {
    pub t: usize,
    pub corridor: String,
    pub action: &'static str,
    pub added_mw: f64,
    pub cost_mgbp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TariffRecord {
    pub line: String,
    pub tau_v: f64,
    pub tau_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceRecord {
    pub t: usize,
    pub s: usize,
    pub b: usize,
    pub lmp_gbp_per_mwh: f64,
    pub congestion_gbp_per_mwh: f64,
}

/// 1-based bus pair label such as `(2,6)`.
pub fn corridor_label(line: &TransmissionLine) -> String {
    format!("({},{})", line.from + 1, line.to + 1)
}

/// Cleared quantities per participant with the price at its bus. `b` and `t`
/// are 0-based indices; `k` is the participant id.
pub fn dispatch_records(ctx: &PlanningContext, lowers: &[LowerLevel], blocks: &[BlockDispatch]) -> Vec<DispatchRecord> {
    let mut out = Vec::new();
    for (ll, blk) in lowers.iter().zip(blocks) {
        for p in &ctx.case.participants {
            let kind = match p.kind {
                ParticipantKind::Generator => LowerVarKind::Gen(p.id),
                ParticipantKind::Consumer => LowerVarKind::Dem(p.id),
                ParticipantKind::Wind => LowerVarKind::Sched(p.id),
            };
            let Some(j) = ll.var_index(kind) else { continue };
            out.push(DispatchRecord {
                t: ll.t,
                s: ll.s,
                b: p.bus,
                k: p.id,
                kind: p.kind.as_str(),
                quantity_mw: blk.values[j],
                price_gbp_per_mwh: blk.lmp[p.bus],
            });
        }
    }
    out
}

pub fn price_records(blocks: &[BlockDispatch]) -> Vec<PriceRecord> {
    blocks
        .iter()
        .flat_map(|blk| {
            blk.lmp.iter().enumerate().map(move |(b, &p)| PriceRecord {
                t: blk.t,
                s: blk.s,
                b,
                lmp_gbp_per_mwh: p,
                congestion_gbp_per_mwh: blk.congestion[b],
            })
        })
        .collect()
}

pub fn investment_records(ctx: &PlanningContext, plan: &InvestmentPlan) -> Vec<InvestmentRecord> {
    let mut out = Vec::new();
    for t in 0..plan.config.len() {
        for &(ty, l, j) in &plan.reconductor {
            let line = &ctx.net.lines[l];
            let f = ctx.net.reconductor_factors[j];
            if ty != t || f <= 0.0 {
                continue;
            }
            let r = line.reconductor.as_ref().expect("reconductorable line");
            let added = f * line.base_capacity_mw;
            out.push(InvestmentRecord {
                t,
                corridor: corridor_label(line),
                action: "reconductor",
                added_mw: added,
                cost_mgbp: r.fixed_cost_mgbp + r.variable_cost_mgbp_per_mw * added,
            });
        }
        for l in ctx.net.expandable_lines() {
            let line = &ctx.net.lines[l];
            let e = line.expansion.as_ref().unwrap();
            let now = ctx.configs[plan.config[t]].circuits[l];
            let before = if t > 0 { ctx.configs[plan.config[t - 1]].circuits[l] } else { 0 };
            if now > before {
                let k = (now - before) as f64;
                out.push(InvestmentRecord {
                    t,
                    corridor: corridor_label(line),
                    action: "parallel",
                    added_mw: k * e.capacity_mw,
                    cost_mgbp: k * e.fixed_cost_mgbp,
                });
            }
        }
    }
    out
}

/// One row per line that can carry a volumetric tariff.
pub fn tariff_records(ctx: &PlanningContext, plan: &InvestmentPlan) -> Vec<TariffRecord> {
    ctx.net
        .lines
        .iter()
        .filter(|l| l.reconductorable() || l.expandable())
        .map(|l| TariffRecord { line: corridor_label(l), tau_v: plan.tariff_v[l.index], tau_c: plan.tariff_c })
        .collect()
}

pub fn write_csv<T: Serialize>(rows: &[T], header: &[&str], path: &Path) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_path(path)?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const DISPATCH_HEADER: [&str; 7] = ["t", "s", "b", "k", "kind", "quantity_mw", "price_gbp_per_mwh"];
pub const PRICE_HEADER: [&str; 5] = ["t", "s", "b", "lmp_gbp_per_mwh", "congestion_gbp_per_mwh"];
pub const INVESTMENT_HEADER: [&str; 5] = ["t", "corridor", "action", "added_mw", "cost_mgbp"];
pub const TARIFF_HEADER: [&str; 3] = ["line", "tau_v", "tau_c"];
