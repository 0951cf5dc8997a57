#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod conformal;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod foliation;
pub mod grid_graph;
pub mod linalg;
pub mod qd;
pub mod lamination;
pub mod quadrature;
pub mod svg;
pub mod trajectory;

pub use error::{Error, Result};
