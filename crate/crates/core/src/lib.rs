//! Storage-resident graph approximate nearest neighbor search.
//!
//! Vectors and adjacency lists live in fixed 4 KiB pages on a block device;
//! product-quantized codes stay in memory to steer the traversal. Search runs
//! either in strict lock-step (select, read, process) or relaxed mode, where
//! the read of the next page overlaps processing of the previous one.

pub mod bench;
pub mod dataset;
pub mod distance;
pub mod error;
pub mod index;
pub mod iostack;
pub mod quantize;
pub mod search;
pub mod storage;
pub mod tuner;

pub use error::{Error, Result};
