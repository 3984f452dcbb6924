//! Ungoverned handler invocation for overhead measurements.
//!
//! Only compiled with the `bench-backdoor` feature. It skips the decision and
//! the provenance append and exists solely as the baseline the governed path
//! is compared against.

use crate::directive::{Directive, Scalar};
use crate::effects::{HandlerError, SimWorld};
use crate::kernel::HandlerRegistry;

/// Runs the registered handler for `d` directly against `world`.
/// Returns `None` when no handler provides the directive's capability.
pub fn invoke_direct(
    registry: &HandlerRegistry,
    world: &mut SimWorld,
    d: &Directive,
) -> Option<Result<Scalar, HandlerError>> {
    registry.get(d.kind()).map(|h| h.invoke(world, d))
}
