//! Safe aerial contact: a funnel-shaped control barrier function velocity
//! filter, the cascaded approach controller around it, and a deterministic
//! closed-loop simulator with PnP perception behind a delay-filtered edge link.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cbf;
pub mod controller;
pub mod edge_link;
pub mod geometry;
pub mod mission;
pub mod perception;
pub mod plant;
