//! Deterministic discrete-event simulator for security experiments on
//! content-centric networks.

pub mod attacks;
pub mod crypto;
pub mod defenses;
pub mod dist;
pub mod engine;
pub mod names;
pub mod overlay;
pub mod packet;
pub mod rng;
pub mod router;
pub mod time;
