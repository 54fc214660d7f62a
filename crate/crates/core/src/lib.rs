//! Core engine for shadow-drawing compositions.
//!
//! Given a triangle mesh resting on a canvas plane and a spotlight at a fixed
//! distance, this crate provides everything needed to search for scene
//! configurations whose cast shadow has a visually rich outline:
//!
//! * [`scene`] — mesh ingestion, normalization, posing, and planar shadow
//!   projection;
//! * [`raster`] — hard and soft (signed-distance based) silhouette
//!   rasterization;
//! * [`fractal`] — a smooth box-counting fractal-dimension objective over the
//!   shadow boundary;
//! * [`optim`] — multi-start, box-constrained gradient ascent over the free
//!   scene parameters;
//! * [`contour`] — contour tracing, keep-out masks, and closed-region
//!   extraction for dataset construction;
//! * [`rank`] — score deltas, the contribution filter, and top-K ranking of
//!   candidate compositions.
//!
//! The crate is `no_std` (with `alloc`) and fully deterministic: every
//! function is a pure function of its inputs, so values can be shared freely
//! across threads.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod contour;
mod dist;
pub mod fractal;
pub mod math;
pub mod optim;
pub mod rank;
pub mod raster;
pub mod scene;
