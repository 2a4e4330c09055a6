#pragma once

#include <cstdint>
#include <functional>

#include "latentsteer/latent_spaces.hpp"

namespace latentsteer {

struct GradientCheckOptions {
  double step = 1e-5;
  std::uint64_t seed = 0;
  /// Below this magnitude both derivatives count as flat and the absolute
  /// difference is reported instead of the relative one.
  double flat_scale = 1e-7;
};

/// Worst relative error between `analytic` and central differences of `f`
/// at `x`, over `probe_count` coordinates drawn with the given seed.
/// Throws kInvalidArgument when probe_count < 1.
double finite_difference_check(const std::function<double(const Vector&)>& f, const Vector& x,
                               const Vector& analytic, int probe_count,
                               const GradientCheckOptions& options = {});

}  // namespace latentsteer
