#pragma once

// Differentiable scalar terms over W+ codes. Gradients are back-propagated
// through the fixed generator and embedders via their vector-Jacobian
// products.

#include <memory>
#include <string_view>

#include "latentsteer/model_gateway.hpp"

namespace latentsteer {

class LatentTerm {
 public:
  virtual ~LatentTerm() = default;
  virtual double value(const WPlusCode& w) const = 0;
  /// Returns the value and writes d value / d flat(w) into `gradient`.
  virtual double value_and_gradient(const WPlusCode& w, Vector& gradient) const = 0;
};

/// Cotangent on flat(w) for f(encoder(G(w))) given df/dembedding.
Vector backprop_to_wplus(const BackendBundle& backend, const ImageEncoder& encoder,
                         const WPlusCode& w, const Vector& embedding_cotangent);

/// Cosine distance between the image embedding of G(w) and a text embedding.
class ClipTerm final : public LatentTerm {
 public:
  ClipTerm(BackendBundle backend, JointEmbedding text);
  ClipTerm(BackendBundle backend, std::string_view prompt);

  double value(const WPlusCode& w) const override;
  double value_and_gradient(const WPlusCode& w, Vector& gradient) const override;
  const JointEmbedding& text() const { return text_; }

 private:
  BackendBundle backend_;
  JointEmbedding text_;
};

/// 1 - <R(reference), R(G(w))>. The reference is either a source code or a
/// fixed image (single-reference identity guidance).
class IdentityTerm final : public LatentTerm {
 public:
  IdentityTerm(BackendBundle backend, const WPlusCode& reference);
  IdentityTerm(BackendBundle backend, const ImageTensor& reference);

  double value(const WPlusCode& w) const override;
  double value_and_gradient(const WPlusCode& w, Vector& gradient) const override;

 private:
  BackendBundle backend_;
  JointEmbedding reference_;
};

/// 0.5 * |C flat(w) - y|^2. A convex surrogate with a closed-form optimum.
class QuadraticTerm final : public LatentTerm {
 public:
  QuadraticTerm(Eigen::MatrixXd design, Vector target);

  double value(const WPlusCode& w) const override;
  double value_and_gradient(const WPlusCode& w, Vector& gradient) const override;

 private:
  Eigen::MatrixXd design_;
  Vector target_;
};

}  // namespace latentsteer
