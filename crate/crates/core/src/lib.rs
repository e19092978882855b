//! Policy toolchain for ODRL policies written against the ODRL Data Spaces
//! (ODS) profile.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`odrl`] parses the compact policy document into an [`odrl::OdrlPolicy`].
//! 2. [`profile`] validates it against the ODS profile rules.
//! 3. [`compiler`] lowers it to a ReBAC [`rebac::AuthorizationModel`], relationship
//!    tuples and obligation records.
//! 4. [`store`] persists models and tuples; [`check`] answers access queries.

pub mod check;
pub mod compiler;
pub mod diag;
pub mod iri;
pub mod odrl;
pub mod profile;
pub mod rebac;
pub mod store;
pub mod value;

pub use diag::{Diagnostic, Severity};
pub use iri::Iri;
pub use value::{ParamType, Value};
