#pragma once

#include <cstdint>

namespace fedpub {

/// Central finite-difference verification of the composite-loss gradients on
/// random small instances (graphs <= 10 nodes, hidden <= 8, both task heads,
/// every component of both the parameter and the mask gradients).
/// Returns the worst guarded relative error |analytic - fd| / max(|analytic|, |fd|, 1e-5).
double gradcheck_max_rel_error(int instances, uint64_t seed, bool verbose = false);

}  // namespace fedpub
