//! Software-aging detection and container-level rejuvenation for managed
//! runtimes.
//!
//! The crate is organized as a pipeline:
//!
//! - [`heap`] loads heap snapshots and finds container objects.
//! - [`dominators`] computes dominator trees and retained sizes.
//! - [`candidacy`] selects the containers that are safe to flush.
//! - [`trend`] and [`indicators`] hold the trend statistics and the indicator series.
//! - [`detector`] raises aging alerts and schedules rejuvenation.
//! - [`synth`] generates large snapshot series with a known candidacy outcome.
//! - [`sim`] reproduces aging and rejuvenation experiments on a simulated device.

pub mod candidacy;
pub mod detector;
pub mod dominators;
pub mod heap;
pub mod indicators;
pub mod sim;
pub mod synth;
pub mod trend;

/// The guide in `book/` is compiled and run as doc-tests, so its examples
/// cannot drift from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/snapshots.md")]
    struct Snapshots;
    #[doc = include_str!("../../../book/src/dominators.md")]
    struct Dominators;
    #[doc = include_str!("../../../book/src/candidacy.md")]
    struct Candidacy;
    #[doc = include_str!("../../../book/src/trends.md")]
    struct Trends;
    #[doc = include_str!("../../../book/src/detection.md")]
    struct Detection;
    #[doc = include_str!("../../../book/src/simulation.md")]
    struct Simulation;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
