//! Contributor focus and quality across collaborative media.

pub mod analysis;
pub mod corpus;
pub mod disambig;
pub mod metrics;
pub mod pipeline;
pub mod special;
pub mod synth;
pub mod taxonomy;
pub mod topics;
