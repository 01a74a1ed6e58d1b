//! Shared verdict vocabulary for the membership criteria.

use serde::Serialize;

/// Membership verdict at a finite horizon. `Undecided` means the finite
/// evidence neither certifies convergence nor divergence under the decay
/// policy; infinite-sum claims are never asserted from inconclusive data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Member,
    NonMember,
    Undecided,
}

/// Outcome of a membership check together with the bound on the martingale
/// increment norm when one is available.
#[derive(Debug, Clone, Serialize)]
pub struct GordinReport {
    pub verdict: Verdict,
    /// Bound on the L2 norm of the martingale-increment part; `None` when
    /// the check certifies membership without producing a norm bound.
    pub g_tilde_bound: Option<f64>,
    /// Free-form note on how the verdict was reached (exact analysis,
    /// closed-form family, finite-evidence fit, ...).
    pub method: String,
}
