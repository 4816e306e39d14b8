//! Optimal investment for a defined-contribution pension in the accumulation
//! phase under forward utility preferences.
//!
//! The crate is organised bottom-up:
//! - [`model_core`]: parameters, schedules, coefficient algebra;
//! - [`sde_engine`]: noise generation and path integration;
//! - [`strategies`]: closed-form investment rules;
//! - [`preferences`]: forward utility fields and the SPDE drift identity;
//! - [`experiments`]: reproducible Monte-Carlo studies and verification suites.

pub mod error;
pub mod experiments;
pub mod model_core;
pub mod preferences;
pub mod sde_engine;
pub mod strategies;

pub use error::{Error, Result};
