#include "latentsteer/model_gateway.hpp"

#include <algorithm>
#include <cmath>

#include "latentsteer/errors.hpp"
#include "latentsteer/hashing.hpp"

namespace latentsteer {

JointEmbedding::JointEmbedding(Vector values, bool normalized)
    : values_(std::move(values)), normalized_(normalized) {
  if (!values_.allFinite()) throw Error(ErrorCode::kNonFinite, "embedding has non-finite entries");
  if (normalized_ && std::abs(values_.norm() - 1.0) > 1e-6) {
    throw Error(ErrorCode::kInvalidArgument, "embedding flagged normalized but norm != 1");
  }
}

JointEmbedding JointEmbedding::unit(const Vector& raw) {
  const double norm = raw.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::kInvalidArgument, "cannot normalize a zero or non-finite embedding");
  }
  return JointEmbedding(raw / norm, true);
}

double JointEmbedding::dot(const JointEmbedding& other) const {
  if (other.dim() != dim()) throw Error(ErrorCode::kShapeMismatch, "embedding dimension mismatch");
  return values_.dot(other.values_);
}

void BackendBundle::validate() const {
  if (!generator || !image_encoder || !text_encoder) {
    throw Error(ErrorCode::kBackendUnavailable,
                "backend bundle is missing a generator or joint embedder");
  }
  if (image_encoder->embed_dim() != text_encoder->embed_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "image and text embedders disagree on embed_dim");
  }
  if (!generator->geometry()) throw Error(ErrorCode::kBackendUnavailable, "generator has no geometry");
}

const GeometryPtr& BackendBundle::geometry() const {
  if (!generator) throw Error(ErrorCode::kBackendUnavailable, "backend has no generator");
  return generator->geometry();
}

std::string BackendBundle::fingerprint() const {
  validate();
  Fnv1a h;
  h.update(kind).update("|").update(generator->fingerprint()).update("|");
  h.update(image_encoder->fingerprint()).update("|").update(text_encoder->fingerprint());
  if (identity_encoder) h.update("|id:").update(identity_encoder->fingerprint());
  return h.hex();
}

namespace {

void require_conforming(const BackendBundle& backend, const GeometryPtr& g, const char* what) {
  const GeometryPtr& expected = backend.geometry();
  if (g != expected && !(*g == *expected)) {
    throw Error(ErrorCode::kShapeMismatch, std::string(what) + ": code does not match backend geometry");
  }
}

}  // namespace

ImageTensor generate_from_wplus(const BackendBundle& backend, const WPlusCode& w) {
  require_conforming(backend, w.geometry(), "generate_from_wplus");
  return backend.generator->synthesize(w);
}

ImageTensor generate_from_style(const BackendBundle& backend, const StyleCode& s) {
  require_conforming(backend, s.geometry(), "generate_from_style");
  return backend.generator->synthesize(s);
}

StyleCode wplus_to_style(const BackendBundle& backend, const WPlusCode& w) {
  require_conforming(backend, w.geometry(), "wplus_to_style");
  return backend.generator->to_style(w);
}

JointEmbedding embed_image(const BackendBundle& backend, const ImageTensor& image) {
  if (!backend.image_encoder) throw Error(ErrorCode::kBackendUnavailable, "no image embedder");
  return backend.image_encoder->embed(image);
}

JointEmbedding embed_text(const BackendBundle& backend, std::string_view sentence) {
  if (!backend.text_encoder) throw Error(ErrorCode::kBackendUnavailable, "no text embedder");
  return backend.text_encoder->embed(sentence);
}

double clip_distance(const BackendBundle& backend, const ImageTensor& image,
                     const JointEmbedding& text) {
  const double cosine = embed_image(backend, image).dot(text);
  return std::clamp(1.0 - cosine, 0.0, 2.0);
}

double clip_distance(const BackendBundle& backend, const ImageTensor& image,
                     std::string_view sentence) {
  return clip_distance(backend, image, embed_text(backend, sentence));
}

double identity_loss(const BackendBundle& backend, const WPlusCode& w_source,
                     const WPlusCode& w_candidate) {
  if (!backend.identity_encoder) {
    throw Error(ErrorCode::kIdentityUnavailable,
                "identity loss unavailable: backend has no identity embedder (use lambda_id = 0)");
  }
  const JointEmbedding source =
      backend.identity_encoder->embed(generate_from_wplus(backend, w_source));
  const JointEmbedding candidate =
      backend.identity_encoder->embed(generate_from_wplus(backend, w_candidate));
  return 1.0 - source.dot(candidate);
}

WPlusCode invert_image(const BackendBundle& backend, const ImageTensor& image) {
  if (!backend.inverter) {
    throw Error(ErrorCode::kInverterUnavailable, "inversion unavailable: backend has no inverter");
  }
  return backend.inverter->invert(image);
}

}  // namespace latentsteer
