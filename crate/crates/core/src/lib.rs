//! Interpretability-aware model selection for linear brain decoders.
//!
//! A linear decoder's weight vector, normalized to unit length, is a
//! multivariate brain map. This crate fits L1-regularized least-squares
//! decoders over bootstrap replicates and scores each regularization
//! strength on two axes:
//!
//! * out-of-bag performance `delta = 1 - EPE`, with a bias/variance split of
//!   the 0/1 loss ([`performance`]);
//! * interpretability `eta`, the mean cosine between the replicate maps and a
//!   reference map, which factors into reproducibility times
//!   representativeness ([`metrics`]).
//!
//! [`selection::select`] combines both into one criterion and also reports
//! the Pareto front.
//!
//! ```
//! use brainmap::{datasets::generate_toy, selection::{select, SelectionConfig}};
//! use brainmap::{datasets::Preprocessing, resampling::FitOptions};
//!
//! let (data, truth) = generate_toy(100, 1)?;
//! let cfg = SelectionConfig {
//!     grid: "1,100,500".parse()?,
//!     m: 10,
//!     fit: FitOptions { preprocessing: Preprocessing::None, ..Default::default() },
//!     ..Default::default()
//! };
//! let result = select(&data, &truth, &cfg)?;
//! assert_eq!(result.rows.len(), 3);
//! # Ok::<(), brainmap::Error>(())
//! ```

// `!(x > 0.0)` style checks are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datasets;
pub mod decoders;
mod error;
pub mod geometry;
pub mod metrics;
pub mod performance;
pub mod resampling;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};
pub use geometry::UnitVector;

// The guide's code listings run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/maps.md")]
    mod maps {}
    #[doc = include_str!("../../../book/src/decoders.md")]
    mod decoders {}
    #[doc = include_str!("../../../book/src/performance.md")]
    mod performance {}
    #[doc = include_str!("../../../book/src/interpretability.md")]
    mod interpretability {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
