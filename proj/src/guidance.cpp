#include "latentsteer/guidance.hpp"

#include "latentsteer/errors.hpp"

namespace latentsteer {

Vector backprop_to_wplus(const BackendBundle& backend, const ImageEncoder& encoder,
                         const WPlusCode& w, const Vector& embedding_cotangent) {
  const Generator& g = *backend.generator;
  const StyleCode s = g.to_style(w);
  const ImageTensor image = g.synthesize(s);
  const Vector pixel_cot = encoder.embed_vjp(image, embedding_cotangent);
  const Vector style_cot = g.synthesize_vjp(s, pixel_cot);
  return g.to_style_vjp(w, style_cot);
}

namespace {

const ImageEncoder& identity_encoder(const BackendBundle& backend) {
  if (!backend.identity_encoder) {
    throw Error(ErrorCode::kIdentityUnavailable,
                "identity loss unavailable: backend has no identity embedder (use lambda_id = 0)");
  }
  return *backend.identity_encoder;
}

}  // namespace

ClipTerm::ClipTerm(BackendBundle backend, JointEmbedding text)
    : backend_(std::move(backend)), text_(std::move(text)) {
  backend_.validate();
  if (text_.dim() != backend_.image_encoder->embed_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "text embedding dimension does not match the image embedder");
  }
}

ClipTerm::ClipTerm(BackendBundle backend, std::string_view prompt)
    : ClipTerm(backend, embed_text(backend, prompt)) {}

double ClipTerm::value(const WPlusCode& w) const {
  return clip_distance(backend_, generate_from_wplus(backend_, w), text_);
}

double ClipTerm::value_and_gradient(const WPlusCode& w, Vector& gradient) const {
  gradient = backprop_to_wplus(backend_, *backend_.image_encoder, w, -text_.values());
  return value(w);
}

IdentityTerm::IdentityTerm(BackendBundle backend, const WPlusCode& reference)
    : backend_(std::move(backend)),
      reference_(identity_encoder(backend_).embed(generate_from_wplus(backend_, reference))) {}

IdentityTerm::IdentityTerm(BackendBundle backend, const ImageTensor& reference)
    : backend_(std::move(backend)), reference_(identity_encoder(backend_).embed(reference)) {}

double IdentityTerm::value(const WPlusCode& w) const {
  return 1.0 - reference_.dot(backend_.identity_encoder->embed(generate_from_wplus(backend_, w)));
}

double IdentityTerm::value_and_gradient(const WPlusCode& w, Vector& gradient) const {
  gradient = backprop_to_wplus(backend_, *backend_.identity_encoder, w, -reference_.values());
  return value(w);
}

QuadraticTerm::QuadraticTerm(Eigen::MatrixXd design, Vector target)
    : design_(std::move(design)), target_(std::move(target)) {
  if (design_.rows() != target_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "quadratic term: design rows must match target length");
  }
}

double QuadraticTerm::value(const WPlusCode& w) const {
  if (design_.cols() != w.values().size()) throw Error(ErrorCode::kShapeMismatch, "quadratic term: bad code size");
  return 0.5 * (design_ * w.flat() - target_).squaredNorm();
}

double QuadraticTerm::value_and_gradient(const WPlusCode& w, Vector& gradient) const {
  if (design_.cols() != w.values().size()) throw Error(ErrorCode::kShapeMismatch, "quadratic term: bad code size");
  const Vector residual = design_ * w.flat() - target_;
  gradient = design_.transpose() * residual;
  return 0.5 * residual.squaredNorm();
}

}  // namespace latentsteer
