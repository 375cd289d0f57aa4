pub mod actuate;
pub mod bss;
pub mod classify;
pub mod denoise;
pub mod localize;
pub mod pipeline;
pub mod scene;
mod optim;
pub mod signal;
