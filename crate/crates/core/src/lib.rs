pub mod convergence;
pub mod coordination;
pub mod executor;
pub mod harness;
pub mod model;
pub mod pushpull;
pub mod world;
