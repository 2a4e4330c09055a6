#pragma once

#include "latentsteer/latent_spaces.hpp"

namespace latentsteer {

struct AdamConfig {
  double learning_rate = 0.5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a flat parameter vector.
class Adam {
 public:
  Adam(Eigen::Index size, AdamConfig config);

  void step(Vector& params, const Vector& gradient);
  long long steps_taken() const { return t_; }

 private:
  AdamConfig config_;
  Vector m_;
  Vector v_;
  long long t_ = 0;
};

}  // namespace latentsteer
