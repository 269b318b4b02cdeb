//! Spatio-temporal block prediction by spatially refined motion
//! compensation.
//!
//! A block is first predicted by full-search block matching against the
//! previous reconstructed frame. The motion-compensated block and its
//! already decoded neighbourhood then feed a frequency-selective
//! approximation whose model, cut out over the block, is the refined
//! prediction. A side-information-free decision on a thin bar of decoded
//! pixels picks between the two.
//!
//! The modules follow the processing chain:
//!
//! - [`video_io`]: luma planes, Y4M / raw YUV / PGM
//! - [`geometry`]: projection-area layout and weighting function
//! - [`motion`]: block matching and compensation
//! - [`fse`]: model generation
//! - [`decision`]: implicit mode decision
//! - [`codec`]: closed-loop encoder, decoder replay and rate proxy
//! - [`metrics`] and [`rd`]: PSNR, RD curves and BD-rate
//! - [`sweep`]: quantiser sweeps, decision and frame logs
//! - [`synth`]: seeded synthetic test clips

pub mod codec;
pub mod decision;
pub mod error;
pub mod exec;
pub mod fse;
pub mod geometry;
pub mod grid;
pub mod metrics;
pub mod motion;
pub mod rd;
pub mod sweep;
pub mod synth;
pub mod video_io;

pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::Grid;
pub use video_io::{FrameRate, Plane, Sequence};
