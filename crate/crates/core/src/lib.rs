//! Simulator and verifier for hierarchical secure aggregation with user and
//! relay dropouts and up to `T` colluding users.
//!
//! Users sit under relays; relays talk to a server. The server must learn
//! the sum of the surviving users' inputs and nothing else, and no relay may
//! learn anything, even with `T` users' inputs and keys in hand. Keys come
//! from a T-private MDS coding matrix over a prime field.
//!
//! Security is verified exactly: every message is a linear function of
//! uniform secrets, so entropies are matrix ranks.

pub mod campaign;
pub mod dropout;
pub mod error;
pub mod field;
pub mod keys;
pub mod matrix;
pub mod mds;
pub mod params;
pub mod protocol;
pub mod rates;
pub mod security;
pub mod text;

pub use dropout::DropoutPattern;
pub use error::{Error, Result};
pub use field::{Fe, PrimeField};
pub use keys::KeyMaterial;
pub use matrix::Matrix;
pub use mds::MdsMatrix;
pub use params::{SystemParams, Topology, UserId};
pub use protocol::{SelectionPolicy, Transcript};
pub use rates::{RateRegion, RateTuple};
