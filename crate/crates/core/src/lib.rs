//! Building energy digital twin with a physics-informed surrogate, a
//! tabular Q-learning scheduler and a hash-chained audit ledger.

pub mod agent;
pub mod datagen;
pub mod eval;
pub mod ledger;
pub mod pipeline;
pub mod seed;
pub mod surrogate;
pub mod twin;
