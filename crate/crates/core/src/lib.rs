pub mod attractor;
pub mod boxset;
pub mod cli;
pub mod continuity;
pub mod flow;
