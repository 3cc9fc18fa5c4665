//! Baseline explanation metrics: pixel flipping and Shannon entropy.

mod entropy;
mod flip;
mod inpaint;

pub use entropy::shannon_entropy;
pub use flip::{flip_order, pixel_flip, FlipCurve, FlipSchedule};
pub use inpaint::{inpaint, Inpaint};
