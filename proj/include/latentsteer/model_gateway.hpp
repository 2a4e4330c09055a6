#pragma once

// Contracts for the pretrained components (style-based generator, joint
// image/text embedders, face-identity embedder, inverter) and the gateway
// operations built on them.
//
// Every component is read-only after construction. Implementations must be
// safe to call from several threads at once; adapters around non-reentrant
// runtimes serialize internally.

#include <memory>
#include <random>
#include <string>
#include <string_view>

#include "latentsteer/image.hpp"
#include "latentsteer/latent_spaces.hpp"

namespace latentsteer {

/// Vector in the joint language-image space.
class JointEmbedding {
 public:
  JointEmbedding(Vector values, bool normalized);
  /// Normalizes `raw` to unit length. Throws kInvalidArgument on a zero vector.
  static JointEmbedding unit(const Vector& raw);

  const Vector& values() const { return values_; }
  bool normalized() const { return normalized_; }
  Eigen::Index dim() const { return values_.size(); }
  double dot(const JointEmbedding& other) const;

 private:
  Vector values_;
  bool normalized_;
};

using Rng = std::mt19937_64;

/// Style-based generator exposing both W+ and S entry points.
class Generator {
 public:
  virtual ~Generator() = default;

  virtual const GeometryPtr& geometry() const = 0;
  virtual ImageShape image_shape() const = 0;
  virtual StyleCode to_style(const WPlusCode& w) const = 0;
  /// Output is clamped to [0, 1].
  virtual ImageTensor synthesize(const StyleCode& s) const = 0;
  virtual ImageTensor synthesize(const WPlusCode& w) const { return synthesize(to_style(w)); }

  // Vector-Jacobian products used for back-propagation through the fixed
  // generator. Each maps a cotangent on the output to one on the input.
  virtual Vector synthesize_vjp(const StyleCode& s, const Vector& pixel_cotangent) const = 0;
  virtual Vector to_style_vjp(const WPlusCode& w, const Vector& style_cotangent) const = 0;

  /// Draws a code from the generator's latent prior mapped to W+.
  virtual WPlusCode sample_wplus(Rng& rng) const = 0;
  virtual std::string fingerprint() const = 0;
};

/// Image embedder returning unit-norm embeddings. Also used for the
/// face-identity network.
class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual int embed_dim() const = 0;
  virtual JointEmbedding embed(const ImageTensor& image) const = 0;
  virtual Vector embed_vjp(const ImageTensor& image, const Vector& embedding_cotangent) const = 0;
  virtual std::string fingerprint() const = 0;
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual int embed_dim() const = 0;
  virtual JointEmbedding embed(std::string_view sentence) const = 0;
  virtual std::string fingerprint() const = 0;
};

class Inverter {
 public:
  virtual ~Inverter() = default;
  virtual WPlusCode invert(const ImageTensor& image) const = 0;
};

struct BackendBundle {
  std::string kind;  // "toy" | "real" | "python"
  std::shared_ptr<const Generator> generator;
  std::shared_ptr<const ImageEncoder> image_encoder;
  std::shared_ptr<const TextEncoder> text_encoder;
  std::shared_ptr<const ImageEncoder> identity_encoder;  // optional
  std::shared_ptr<const Inverter> inverter;              // optional

  /// Checks that the mandatory handles exist and agree on dimensions.
  void validate() const;
  const GeometryPtr& geometry() const;
  bool has_identity() const { return identity_encoder != nullptr; }
  bool has_inverter() const { return inverter != nullptr; }
  /// Stable hash over the component fingerprints.
  std::string fingerprint() const;
};

ImageTensor generate_from_wplus(const BackendBundle& backend, const WPlusCode& w);
ImageTensor generate_from_style(const BackendBundle& backend, const StyleCode& s);
StyleCode wplus_to_style(const BackendBundle& backend, const WPlusCode& w);
JointEmbedding embed_image(const BackendBundle& backend, const ImageTensor& image);
JointEmbedding embed_text(const BackendBundle& backend, std::string_view sentence);

/// 1 - <embed_image(image), text>, clamped to [0, 2].
double clip_distance(const BackendBundle& backend, const ImageTensor& image,
                     const JointEmbedding& text);
double clip_distance(const BackendBundle& backend, const ImageTensor& image,
                     std::string_view sentence);

/// 1 - <R(G(w_source)), R(G(w_candidate))> with unit-normalized identity
/// embeddings. Throws kIdentityUnavailable without an identity embedder.
double identity_loss(const BackendBundle& backend, const WPlusCode& w_source,
                     const WPlusCode& w_candidate);

WPlusCode invert_image(const BackendBundle& backend, const ImageTensor& image);

}  // namespace latentsteer
