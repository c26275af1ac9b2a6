//! Open-vocabulary 3D panoptic segmentation over reconstructed primitive clouds.
//!
//! The pipeline ingests a primitive cloud plus posed views with per-view
//! feature maps and instance-mask rasters, then runs five stages:
//!
//! 1. [`fusion`] back-projects multi-view 2D features onto primitives and
//!    scores each fused feature with a confidence.
//! 2. [`field`] distills the fused cloud into a pyramid tri-plane latent field
//!    plus an MLP decoder, yielding a smooth per-position language feature.
//! 3. [`supersegment`] groups primitives into super-primitives with
//!    language-guided graph cuts over a kNN adjacency graph.
//! 4. [`cluster`] merges super-primitives into instances using multi-view
//!    mask-label-distribution affinity (1 - Jensen-Shannon divergence).
//! 5. [`panoptic`] votes semantic classes per instance against a text-query
//!    embedding set and assembles the final labeling, scored by [`metrics`].
//!
//! [`sim`] generates deterministic synthetic scenes (clouds, cameras, depth,
//! masks, features, queries, ground truth) used by the test suites and the
//! browser demo. [`pipeline`] ties the stages into file-based, resumable runs
//! behind the `psplat` CLI.

pub mod cluster;
pub mod error;
pub mod feat;
pub mod field;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod panoptic;
pub mod pipeline;
pub mod sim;
pub mod supersegment;

pub use error::{Error, Result};
