pub mod model;
pub mod constraint;
pub mod decode;
pub mod ebm;
pub mod harness;
pub mod metrics;
