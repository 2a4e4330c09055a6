#include "latentsteer/adam.hpp"

#include <cmath>

#include "latentsteer/errors.hpp"

namespace latentsteer {

Adam::Adam(Eigen::Index size, AdamConfig config)
    : config_(config), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {
  if (!(config_.learning_rate > 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning rate must be positive");
}

void Adam::step(Vector& params, const Vector& gradient) {
  if (gradient.size() != params.size() || params.size() != m_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "Adam: parameter/gradient size mismatch");
  }
  ++t_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * gradient;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  params.array() -= config_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
}

}  // namespace latentsteer
