// Negated comparisons are deliberate: they reject NaN. Dense kernels index
// several parallel buffers by the same counter.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod device;
pub mod dynamics;
pub mod error;
pub mod floquet;
pub mod fsl;
pub mod hilbert;
pub mod measurement;
pub mod output;
pub mod scenarios;
