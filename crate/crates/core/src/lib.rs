//! Conformal selection with finite-sample false discovery rate control.
//!
//! Given predictions from any model trained on held-out data, a labeled
//! calibration set and a pool of unlabeled test units, this crate selects the
//! test units whose outcome likely exceeds a per-unit threshold `c_j`, with
//! the expected proportion of false selections bounded by a target `q`.
//!
//! The pieces, bottom-up:
//!
//! - [`score`]: monotone nonconformity scores `V(x, y)`.
//! - [`pvalue`]: conformal p-values (randomized, deterministic, same-class,
//!   and the oracle version used in tests).
//! - [`bh`]: the Benjamini–Hochberg step-up rule, FDP and power.
//! - [`pipeline`]: thresholds, scores, p-values and BH end to end.
//! - [`asymptotics`]: the large-sample threshold `t*` and limiting FDR/power.
//! - [`sim`]: the simulation study and Monte Carlo harness.
//! - [`cli`]: the `cfscreen` command-line front end.
//!
//! ```
//! use conformal_screening::pipeline::{select, Dataset, Method, SelectConfig, ThresholdSpec, Unit};
//! use conformal_screening::score::ScoreRule;
//!
//! let calibration = vec![
//!     Unit::new(0.1).with_outcome(0.0),
//!     Unit::new(0.2).with_outcome(0.0),
//!     Unit::new(0.8).with_outcome(1.0),
//!     Unit::new(0.9).with_outcome(1.0),
//! ];
//! let test = vec![Unit::new(0.05), Unit::new(0.95)];
//! let cfg = SelectConfig::new(ScoreRule::clipped(100.0)?, ThresholdSpec::constant(0.0), Method::Randomized, 0.5).seed(7);
//! let report = select(&Dataset::new(calibration, test), &cfg)?;
//! assert!(report.selection.selected.contains(&1));
//! # Ok::<(), conformal_screening::Error>(())
//! ```

pub mod asymptotics;
pub mod bh;
pub mod cli;
mod error;
pub mod pipeline;
pub mod pvalue;
pub mod rng;
pub mod score;
pub mod sim;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

// Runs the code blocks of the guide under `book/` as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scores.md")]
    mod scores {}
    #[doc = include_str!("../../../book/src/pvalues.md")]
    mod pvalues {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/thresholds.md")]
    mod thresholds {}
    #[doc = include_str!("../../../book/src/asymptotics.md")]
    mod asymptotics {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
