#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "plmlab/matrix.hpp"

namespace plmlab {

// Rotary position embedding over adjacent pairs (x[2i], x[2i+1]) with
// frequencies theta_base^(-2i/d). Rotation preserves the norm of each pair;
// position 0 is the identity.
inline constexpr double kDefaultRopeThetaBase = 10000.0;

// In-place rotation of one even-dimensional vector at `position`.
void apply_rope_inplace(std::span<float> x, std::int64_t position,
                        double theta_base = kDefaultRopeThetaBase);

// Rotates every row of `x` (N x d_rope) at its own position.
Matrix apply_rope(const Matrix& x, std::span<const std::int64_t> positions,
                  double theta_base = kDefaultRopeThetaBase);

} // namespace plmlab
