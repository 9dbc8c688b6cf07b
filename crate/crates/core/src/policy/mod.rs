//! Operation catalog, policies, validation and the canonical policy text.

mod catalog;
mod codec;
mod error;
mod magnitude;
mod model;

pub use catalog::{AugKind, Catalog, Extreme, ParamSpec, CATALOG_VERSION};
pub use codec::{canonical_serialize, parse_policy, POLICY_SCHEMA};
pub(crate) use codec::canonical_text;
pub use error::{ErrorCode, PolicyError, PolicyErrors};
pub use magnitude::{magnitude_to_params, MagnitudeError};
pub use model::{fmt6, validate_op, validate_policy, AugOpInstance, Policy, ValidationReport};
