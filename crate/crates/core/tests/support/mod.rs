//! Fixtures shared by the integration and acceptance tests.

pub use seqrl::oracle::*;
