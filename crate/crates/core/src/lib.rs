#![cfg_attr(not(test), no_std)]
// `num_traits::Float` supplies f64 math without std; when dev-dependencies
// pull std into the build the import becomes redundant.
#![allow(unused_imports)]

extern crate alloc;

pub mod linalg;
pub mod lti;
pub mod components;
pub mod netdsl;
pub mod interconnect;
pub mod conservation;
pub mod reduction;
pub mod lqg;
pub mod scenario;
pub mod pipeline;
pub mod synth;
