//! Non-equilibrium almost-stationary states (NEASS) of gapped periodic
//! tight-binding Hamiltonians and the Hall response to all orders in the
//! field strength.
//!
//! The pipeline for a model `H0` under the perturbation `H0 - eps Y`:
//!
//! 1. sample the fibers `H0(k)` on a Brillouin-zone grid ([`lattice`], [`models`]);
//! 2. form the Fermi projection `P0` and its off-diagonal calculus ([`fiber`]);
//! 3. build generators `A_1..A_n` by inverting the Liouvillian
//!    ([`liouvillian`], [`neass`]);
//! 4. conjugate `P0` by `exp(i eps S)` with `S = sum eps^{j-1} A_j` and
//!    compare the current `tau(J P)` with `eps * sigma_Hall` ([`response`]).
//!
//! ```no_run
//! use std::sync::Arc;
//! use neass::{lattice::KGrid, models, neass::build_generators, response};
//!
//! let model = models::qwz(1.0);
//! let grid = Arc::new(KGrid::new(*model.lattice(), 48, 48).unwrap());
//! let h = models::build_hamiltonian(&model, &grid).unwrap();
//! let (p0, _gap) = models::fermi_projection(&h, model.mu()).unwrap();
//! let sigma = response::hall_conductivity(&p0);
//! let gens = build_generators(&h, &p0, 2).unwrap();
//! let state = neass::neass::assemble_neass(&h, &p0, &gens, 0.05).unwrap();
//! let current = response::response_current(&model, state.projection()).unwrap();
//! println!("{current} vs {}", 0.05 * sigma);
//! ```

pub mod cli;
pub mod error;
pub mod fiber;
pub mod lattice;
pub mod liouvillian;
pub mod models;
pub mod neass;
pub mod random;
pub mod response;

pub use error::{Error, Result};
