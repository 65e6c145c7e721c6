//! Bicausal implicit functions, index reduction and method-of-steps solving
//! for nonlinear time-delay systems.

pub mod expr;
pub mod ore;
pub mod forms;
pub mod ift;
pub mod ddae;
pub mod problem;
pub mod solver;
pub mod pipeline;
pub mod report;
