//! Capture-point based walking stabilization.

pub mod footstep;
pub mod geometry;
pub mod icp_plan;
pub mod lipm;
pub mod spline;
pub mod recursive_model;
pub mod timing_adjust;
pub mod qp;
pub mod controller;
pub mod sim;
pub mod config;
pub mod commands;
