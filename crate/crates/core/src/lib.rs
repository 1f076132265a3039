//! Bilevel transmission expansion planning with a market-clearing lower level
//! that carries a Wasserstein distributionally robust joint chance constraint
//! on line flows.

pub mod cases;
pub mod cli;
pub mod dispatch;
pub mod drjcc;
pub mod experiments;
pub mod model;
pub mod network;
pub mod planner;
pub mod reports;
pub mod solver;
pub mod uncertainty;
