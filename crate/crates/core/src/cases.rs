//! Built-in test systems and the matching wind error sample sets.

use crate::network::{
    Bus, Case, CorridorSpec, Horizon, LineSpec, Participant, ParticipantKind, ReconductorSpec, Reconductoring,
    TariffPolicy, SCHEMA_VERSION,
};
use crate::uncertainty::{draw_train_test, fit_copula, synthetic_history, Coord, ErrorSampleSet, UncertaintyError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

/// Reference generation totals (MW) and mean bids (GBP/MWh) at buses 1, 3, 6.
pub const GARVER_GENERATION: [(usize, f64, f64); 3] = [(0, 150.0, 18.0), (2, 360.0, 20.0), (5, 600.0, 10.0)];
/// Reference demand totals (MW) and bids (GBP/MWh) at buses 1 to 5.
pub const GARVER_DEMAND: [(usize, f64, f64); 5] =
    [(0, 80.0, 26.0), (1, 240.0, 27.0), (2, 40.0, 25.0), (3, 160.0, 28.0), (4, 240.0, 26.5)];
/// Installed wind (MW) at buses 6 and 3.
pub const GARVER_WIND: [(usize, f64); 2] = [(5, 304.0), (2, 76.0)];
pub const CURTAILMENT_GBP_PER_MWH: f64 = 60.0;
pub const PARTICIPANTS_PER_BUS: usize = 5;
/// Planned wind output as a share of installed capacity.
pub const WIND_FORECAST_SHARE: f64 = 0.5;

/// Derives an independent seed for a named random stream.
pub fn stream_seed(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn line(id: usize, f: usize, t: usize, x: f64, cap: f64) -> LineSpec {
    LineSpec { id, from_bus: f - 1, to_bus: t - 1, reactance: x, capacity_mw: cap, circuits: 1 }
}

/// Modified Garver 6-bus system with sampled participant capacities and bids.
pub fn garver6(seed: u64, horizon: Horizon) -> Case {
    let mut cap_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "capacities"));
    let mut bid_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "bids"));
    let mut participants = Vec::new();
    for &(bus, total, mean) in &GARVER_GENERATION {
        let avg = total / PARTICIPANTS_PER_BUS as f64;
        let bid = Normal::new(mean, 0.1 * mean).unwrap();
        for _ in 0..PARTICIPANTS_PER_BUS {
            participants.push(Participant {
                id: participants.len(),
                kind: ParticipantKind::Generator,
                bus,
                min_mw: 0.0,
                max_mw: Uniform::new_inclusive(0.5 * avg, 1.5 * avg).sample(&mut cap_rng),
                bid_gbp_per_mwh: bid.sample(&mut bid_rng).max(0.0),
                forecast_mw: None,
            });
        }
    }
    for &(bus, total, bid) in &GARVER_DEMAND {
        let avg = total / PARTICIPANTS_PER_BUS as f64;
        for _ in 0..PARTICIPANTS_PER_BUS {
            participants.push(Participant {
                id: participants.len(),
                kind: ParticipantKind::Consumer,
                bus,
                min_mw: 0.0,
                max_mw: cap_rng.gen_range(avg..=2.0 * avg),
                bid_gbp_per_mwh: bid,
                forecast_mw: None,
            });
        }
    }
    for &(bus, cap) in &GARVER_WIND {
        let f = WIND_FORECAST_SHARE * cap;
        participants.push(Participant {
            id: participants.len(),
            kind: ParticipantKind::Wind,
            bus,
            min_mw: 0.0,
            max_mw: cap,
            bid_gbp_per_mwh: CURTAILMENT_GBP_PER_MWH,
            forecast_mw: Some(vec![vec![f; horizon.operating_periods]; horizon.years]),
        });
    }
    let corridor = |id: usize, f: usize, t: usize| CorridorSpec {
        id,
        from_bus: f - 1,
        to_bus: t - 1,
        candidate_reactance: 0.3,
        candidate_capacity_mw: 100.0,
        fixed_cost_mgbp: 30.0,
        max_circuits: 3,
        existing_line: None,
    };
    let rec = |line: usize| ReconductorSpec { line, fixed_cost_mgbp: 1.0, variable_cost_mgbp_per_mw: 0.1 };
    Case {
        schema_version: SCHEMA_VERSION,
        name: format!("garver6-seed{seed}"),
        base_mva: 100.0,
        slack_bus: Some(0),
        buses: (0..6).map(|i| Bus { id: i, label: Some((i + 1).to_string()) }).collect(),
        lines: vec![
            line(0, 1, 2, 0.4, 100.0),
            line(1, 1, 4, 0.6, 80.0),
            line(2, 1, 5, 0.2, 100.0),
            line(3, 2, 3, 0.2, 100.0),
            line(4, 2, 4, 0.4, 100.0),
            line(5, 3, 5, 0.2, 100.0),
        ],
        corridors: vec![corridor(0, 2, 6), corridor(1, 4, 6)],
        reconductoring: Reconductoring {
            factors: (0..=40).map(|j| j as f64 * 0.05).collect(),
            candidates: vec![rec(3), rec(5)],
        },
        participants,
        horizon,
        tariff_policy: TariffPolicy::default(),
    }
}

/// Error coordinates with installed capacity and planned output for each.
pub fn wind_coordinates(case: &Case) -> (Vec<Coord>, Vec<f64>, Vec<f64>) {
    let farms: Vec<&Participant> = case.participants.iter().filter(|p| p.kind == ParticipantKind::Wind).collect();
    let (mut coords, mut cap, mut fore) = (Vec::new(), Vec::new(), Vec::new());
    for t in 0..case.horizon.years {
        for s in 0..case.horizon.operating_periods {
            for (f, p) in farms.iter().enumerate() {
                coords.push(Coord { t, s, farm: f });
                cap.push(p.max_mw);
                fore.push(p.forecast_mw.as_ref().and_then(|v| v.get(t)?.get(s).copied()).unwrap_or(0.0));
            }
        }
    }
    (coords, cap, fore)
}

/// Rows of the synthetic history used to fit the error model.
pub const HISTORY_ROWS: usize = 156;
/// Size of the training pool that `N` samples are drawn from.
pub const TRAINING_POOL: usize = 1000;

/// Fits the copula error model to a synthetic history and draws training and test samples.
pub fn wind_samples(case: &Case, n_train: usize, n_test: usize, seed: u64) -> Result<(ErrorSampleSet, ErrorSampleSet), UncertaintyError> {
    let (coords, cap, fore) = wind_coordinates(case);
    let hist = synthetic_history(&coords, HISTORY_ROWS, stream_seed(seed, "history"));
    let model = fit_copula(&hist)?;
    Ok(draw_train_test(&model, &coords, &cap, &fore, TRAINING_POOL, n_train, n_test, stream_seed(seed, "samples")))
}

/// Two buses joined by one line: cheap generation at bus 1, demand and an
/// expensive unit at bus 2, wind at bus 1. Used by small oracle tests.
pub fn two_bus(line_cap: f64, wind_mw: f64, years: usize) -> Case {
    let horizon = Horizon { years, operating_periods: 1, ..Horizon::default() };
    let mut participants = vec![
        Participant { id: 0, kind: ParticipantKind::Generator, bus: 0, min_mw: 0.0, max_mw: 200.0, bid_gbp_per_mwh: 10.0, forecast_mw: None },
        Participant { id: 1, kind: ParticipantKind::Generator, bus: 1, min_mw: 0.0, max_mw: 200.0, bid_gbp_per_mwh: 30.0, forecast_mw: None },
        Participant { id: 2, kind: ParticipantKind::Consumer, bus: 1, min_mw: 0.0, max_mw: 150.0, bid_gbp_per_mwh: 50.0, forecast_mw: None },
    ];
    if wind_mw > 0.0 {
        participants.push(Participant {
            id: 3,
            kind: ParticipantKind::Wind,
            bus: 0,
            min_mw: 0.0,
            max_mw: wind_mw,
            bid_gbp_per_mwh: CURTAILMENT_GBP_PER_MWH,
            forecast_mw: Some(vec![vec![WIND_FORECAST_SHARE * wind_mw]; years]),
        });
    }
    Case {
        schema_version: SCHEMA_VERSION,
        name: "two-bus".into(),
        base_mva: 100.0,
        slack_bus: Some(0),
        buses: (0..2).map(|i| Bus { id: i, label: Some((i + 1).to_string()) }).collect(),
        lines: vec![LineSpec { id: 0, from_bus: 0, to_bus: 1, reactance: 0.1, capacity_mw: line_cap, circuits: 1 }],
        corridors: vec![],
        reconductoring: Reconductoring::default(),
        participants,
        horizon,
        tariff_policy: TariffPolicy::default(),
    }
}
