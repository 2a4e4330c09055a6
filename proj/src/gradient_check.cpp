#include "latentsteer/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "latentsteer/errors.hpp"

namespace latentsteer {

double finite_difference_check(const std::function<double(const Vector&)>& f, const Vector& x,
                               const Vector& analytic, int probe_count,
                               const GradientCheckOptions& options) {
  if (probe_count < 1) throw Error(ErrorCode::kInvalidArgument, "invalid probe count: must be >= 1");
  if (analytic.size() != x.size()) {
    throw Error(ErrorCode::kShapeMismatch, "analytic gradient size does not match the point");
  }
  if (x.size() == 0) return 0.0;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(options.seed);
  std::shuffle(order.begin(), order.end(), rng);

  double worst = 0.0;
  Vector probe = x;
  for (int p = 0; p < probe_count; ++p) {
    const Eigen::Index i = order[static_cast<std::size_t>(p) % order.size()];
    probe[i] = x[i] + options.step;
    const double up = f(probe);
    probe[i] = x[i] - options.step;
    const double down = f(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * options.step);
    const double diff = std::abs(numeric - analytic[i]);
    const double scale = std::max(std::abs(numeric), std::abs(analytic[i]));
    worst = std::max(worst, scale < options.flat_scale ? diff : diff / scale);
  }
  return worst;
}

}  // namespace latentsteer
