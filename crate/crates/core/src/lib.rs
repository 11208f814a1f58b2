//! Simulation and drive compilation for dual-sided transparent
//! liquid-crystal waveguide displays.

pub mod cli;
pub mod config;
pub mod electro_optics;
pub mod geometry;
pub mod image;
pub mod parallel;
pub mod schedule;
pub mod simulator;
pub mod study;
