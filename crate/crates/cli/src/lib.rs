//! File formats, figures and command dispatch for the `cohesion` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod fsio;
pub mod gamefile;
pub mod plot;
pub mod report;
pub mod trajectory;
