//! Matching engine for non-commercial peer-to-peer ridesharing.
//!
//! Drivers announce commutes, riders announce trip requests, and the engine
//! decides who rides with whom and on what schedule. Matching minimizes total
//! cost (deviation from preferred departure plus time spent traveling), with
//! optional individual-rationality and stability side constraints, randomized
//! fair matchings that guarantee every feasible rider a minimum service
//! probability, and tooling to measure what fairness and stability cost.
//!
//! Pipeline: [`model`] describes instances, [`generator`] synthesizes them,
//! [`trip`] prices a single driver/rider-set trip, [`rtv`] enumerates all
//! feasible trips into a [`rtv::MatchingProblem`], [`matching`] solves the
//! one-shot assignment, [`fairness`] builds randomized matchings, and
//! [`analysis`] compares the regimes. Everything optimizes through the small
//! exact [`solver`].

pub mod analysis;
pub mod cli;
pub mod fairness;
pub mod fixtures;
pub mod generator;
pub mod matching;
pub mod model;
pub mod rtv;
pub mod solver;
#[cfg(test)]
pub(crate) mod testutil;
pub mod trip;
