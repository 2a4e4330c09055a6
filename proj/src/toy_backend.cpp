#include "latentsteer/toy_backend.hpp"

#include <algorithm>
#include <cmath>

#include "latentsteer/binary_format.hpp"
#include "latentsteer/errors.hpp"
#include "latentsteer/hashing.hpp"

namespace latentsteer {

namespace {

RowMatrix gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  RowMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

void hash_matrix(Fnv1a& h, const Eigen::Ref<const Eigen::MatrixXd>& m) {
  const std::string shape = std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ";";
  h.update(shape);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const double v = m(r, c);
      h.update(std::span(reinterpret_cast<const std::uint8_t*>(&v), sizeof v));
    }
  }
}

/// Shared immutable state of one toy backend.
struct ToyModel {
  ToyMatrices m;
  RowMatrix inverse;  // pinv(A W), empty without inverter
  std::string generator_fp;
  std::string embedder_fp;
  std::string text_fp;
  std::string identity_fp;
};

class ToyGenerator final : public Generator {
 public:
  explicit ToyGenerator(std::shared_ptr<const ToyModel> model) : model_(std::move(model)) {}

  const GeometryPtr& geometry() const override { return model_->m.geometry; }
  ImageShape image_shape() const override { return model_->m.image_shape; }

  StyleCode to_style(const WPlusCode& w) const override {
    return StyleCode(model_->m.geometry, model_->m.style_weight * w.flat() + model_->m.style_bias);
  }

  ImageTensor synthesize(const StyleCode& s) const override {
    return ImageTensor::clamped(model_->m.image_shape, model_->m.generator * s.values());
  }

  Vector synthesize_vjp(const StyleCode& s, const Vector& pixel_cotangent) const override {
    const Vector pre = model_->m.generator * s.values();
    Vector masked = pixel_cotangent;
    for (Eigen::Index i = 0; i < pre.size(); ++i) {
      if (!(pre[i] > 0.0 && pre[i] < 1.0)) masked[i] = 0.0;
    }
    return model_->m.generator.transpose() * masked;
  }

  Vector to_style_vjp(const WPlusCode&, const Vector& style_cotangent) const override {
    return model_->m.style_weight.transpose() * style_cotangent;
  }

  WPlusCode sample_wplus(Rng& rng) const override {
    const auto& g = *model_->m.geometry;
    return WPlusCode(model_->m.geometry,
                     gaussian(rng, g.num_layers(), g.latent_dim(), model_->m.prior_scale));
  }

  std::string fingerprint() const override { return model_->generator_fp; }

 private:
  std::shared_ptr<const ToyModel> model_;
};

class ToyImageEncoder final : public ImageEncoder {
 public:
  ToyImageEncoder(std::shared_ptr<const ToyModel> model, bool identity)
      : model_(std::move(model)), identity_(identity) {}

  int embed_dim() const override { return static_cast<int>(matrix().rows()); }

  JointEmbedding embed(const ImageTensor& image) const override {
    const Vector u = raw(image);
    const double norm = u.norm();
    if (norm == 0.0) {
      // Degenerate input (e.g. an all-black image with no anchor); any fixed
      // unit vector keeps the contract.
      Vector e = Vector::Zero(u.size());
      e[0] = 1.0;
      return JointEmbedding(std::move(e), true);
    }
    return JointEmbedding(u / norm, true);
  }

  Vector embed_vjp(const ImageTensor& image, const Vector& cotangent) const override {
    const Vector u = raw(image);
    const double norm = u.norm();
    if (norm == 0.0) return Vector::Zero(image.pixels().size());
    const Vector e = u / norm;
    const Vector projected = cotangent - e * e.dot(cotangent);
    return matrix().transpose() * (projected / norm);
  }

  std::string fingerprint() const override {
    return identity_ ? model_->identity_fp : model_->embedder_fp;
  }

 private:
  const RowMatrix& matrix() const {
    return identity_ ? model_->m.identity_embedder : model_->m.image_embedder;
  }

  Vector raw(const ImageTensor& image) const {
    if (image.pixels().size() != matrix().cols()) {
      throw Error(ErrorCode::kShapeMismatch, "toy embedder: image size does not match");
    }
    Vector u = matrix() * image.pixels();
    if (!identity_) u += model_->m.embed_anchor;
    return u;
  }

  std::shared_ptr<const ToyModel> model_;
  bool identity_;
};

class ToyTextEncoder final : public TextEncoder {
 public:
  explicit ToyTextEncoder(std::shared_ptr<const ToyModel> model) : model_(std::move(model)) {}

  int embed_dim() const override { return static_cast<int>(model_->m.image_embedder.rows()); }

  JointEmbedding embed(std::string_view sentence) const override {
    if (auto it = model_->m.text_table.find(std::string(sentence)); it != model_->m.text_table.end()) {
      return JointEmbedding::unit(it->second);
    }
    Fnv1a h;
    h.update(std::to_string(model_->m.text_seed)).update("|").update(sentence);
    Rng rng(h.digest());
    std::normal_distribution<double> normal;
    Vector v(embed_dim());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
    return JointEmbedding::unit(v);
  }

  std::string fingerprint() const override { return model_->text_fp; }

 private:
  std::shared_ptr<const ToyModel> model_;
};

class ToyInverter final : public Inverter {
 public:
  explicit ToyInverter(std::shared_ptr<const ToyModel> model) : model_(std::move(model)) {}

  WPlusCode invert(const ImageTensor& image) const override {
    const ImageTensor fitted = resize_bilinear(image, model_->m.image_shape);
    const Vector target = fitted.pixels() - model_->m.generator * model_->m.style_bias;
    return WPlusCode::from_flat(model_->m.geometry, model_->inverse * target);
  }

 private:
  std::shared_ptr<const ToyModel> model_;
};

void check_shapes(const ToyMatrices& m) {
  if (!m.geometry) throw Error(ErrorCode::kInvalidArgument, "toy backend needs a geometry");
  const auto& g = *m.geometry;
  const Eigen::Index styles = g.total_style_channels();
  const Eigen::Index pixels = m.image_shape.size();
  const auto expect = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::kShapeMismatch, std::string("toy backend: bad shape for ") + what);
  };
  expect(m.style_weight.rows() == styles && m.style_weight.cols() == g.wplus_size(), "style_weight");
  expect(m.style_bias.size() == styles, "style_bias");
  expect(m.generator.rows() == pixels && m.generator.cols() == styles, "generator");
  expect(m.image_embedder.cols() == pixels && m.image_embedder.rows() >= 1, "image_embedder");
  expect(m.embed_anchor.size() == m.image_embedder.rows(), "embed_anchor");
  expect(m.identity_embedder.rows() == 0 || m.identity_embedder.cols() == pixels, "identity_embedder");
  for (const auto& [text, v] : m.text_table) {
    expect(v.size() == m.image_embedder.rows(), "text_table entry");
  }
}

}  // namespace

LatentGeometry toy_geometry() { return LatentGeometry(6, 4, {16, 16, 8, 8, 8, 8}, {2, 4}); }

ToyMatrices make_toy_matrices(const ToyConfig& config) {
  ToyMatrices m;
  m.geometry = share(config.geometry.value_or(toy_geometry()));
  m.image_shape = config.image_shape;
  m.text_table = config.text_table;
  m.text_seed = config.seed;
  m.prior_scale = config.prior_scale;
  m.with_inverter = config.with_inverter;
  if (config.embed_dim < 1) throw Error(ErrorCode::kInvalidArgument, "embed_dim must be positive");
  if (config.identity_dim < 0) throw Error(ErrorCode::kInvalidArgument, "identity_dim must be >= 0");

  const auto& g = *m.geometry;
  const Eigen::Index styles = g.total_style_channels();
  const Eigen::Index pixels = config.image_shape.size();
  Rng rng(config.seed);

  // Style layer i is driven by W+ layer min(i, L - 1).
  m.style_weight = RowMatrix::Zero(styles, g.wplus_size());
  const int d = g.latent_dim();
  for (std::size_t layer = 0; layer < g.style_channel_counts().size(); ++layer) {
    const int src = std::min<int>(static_cast<int>(layer), g.num_layers() - 1);
    const int rows = g.style_channel_counts()[layer];
    m.style_weight.block(g.style_offset(static_cast<int>(layer)), src * d, rows, d) =
        gaussian(rng, rows, d, 1.0 / std::sqrt(static_cast<double>(d)));
  }
  for (int c : config.inert_channels) {
    if (c < 0 || c >= styles) throw Error(ErrorCode::kInvalidArgument, "inert channel out of range");
    m.style_weight.row(c).setZero();
  }

  m.generator = gaussian(rng, pixels, styles, 1.0 / std::sqrt(static_cast<double>(styles)));
  if (!config.generator_matrix_path.empty()) {
    m.generator = decode_matrix(read_file(config.generator_matrix_path), pixels, styles);
  }
  // Bias centres the prior on a mid-grey image so small codes stay unclamped.
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> gen_cod(m.generator);
  m.style_bias = gen_cod.solve(Vector::Constant(pixels, 0.5));

  m.image_embedder = gaussian(rng, config.embed_dim, pixels, 1.0 / std::sqrt(static_cast<double>(pixels)));
  if (!config.image_embedder_matrix_path.empty()) {
    m.image_embedder = decode_matrix(read_file(config.image_embedder_matrix_path), config.embed_dim, pixels);
  }
  m.embed_anchor = Vector::Zero(config.embed_dim);
  if (config.embed_anchor_scale != 0.0) {
    RowMatrix raw = gaussian(rng, config.embed_dim, 1, 1.0);
    Vector n = Eigen::Map<const Vector>(raw.data(), config.embed_dim).normalized();
    m.image_embedder -= n * (n.transpose() * m.image_embedder);
    m.embed_anchor = config.embed_anchor_scale * n;
  }

  m.identity_embedder =
      config.identity_dim > 0
          ? gaussian(rng, config.identity_dim, pixels, 1.0 / std::sqrt(static_cast<double>(pixels)))
          : RowMatrix(0, pixels);
  return m;
}

BackendBundle make_toy_backend(ToyMatrices matrices) {
  check_shapes(matrices);
  auto model = std::make_shared<ToyModel>();
  model->m = std::move(matrices);
  const ToyMatrices& m = model->m;

  Fnv1a gen;
  gen.update("toy-generator;").update(m.geometry->fingerprint());
  hash_matrix(gen, m.style_weight);
  hash_matrix(gen, m.style_bias);
  hash_matrix(gen, m.generator);
  gen.update("prior=" + std::to_string(m.prior_scale));
  model->generator_fp = gen.hex();
  Fnv1a emb;
  emb.update("toy-image-embedder;");
  hash_matrix(emb, m.image_embedder);
  hash_matrix(emb, m.embed_anchor);
  model->embedder_fp = emb.hex();
  Fnv1a txt;
  txt.update("toy-text;seed=" + std::to_string(m.text_seed));
  for (const auto& [text, v] : m.text_table) {
    txt.update(text);
    hash_matrix(txt, v);
  }
  model->text_fp = txt.hex();
  Fnv1a idh;
  idh.update("toy-identity;");
  hash_matrix(idh, m.identity_embedder);
  model->identity_fp = idh.hex();

  if (m.with_inverter) {
    const Eigen::MatrixXd composed = m.generator * m.style_weight;
    model->inverse = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(composed).pseudoInverse();
  }

  std::shared_ptr<const ToyModel> shared = model;
  BackendBundle bundle;
  bundle.kind = "toy";
  bundle.generator = std::make_shared<ToyGenerator>(shared);
  bundle.image_encoder = std::make_shared<ToyImageEncoder>(shared, false);
  bundle.text_encoder = std::make_shared<ToyTextEncoder>(shared);
  if (shared->m.identity_embedder.rows() > 0) {
    bundle.identity_encoder = std::make_shared<ToyImageEncoder>(shared, true);
  }
  if (shared->m.with_inverter) bundle.inverter = std::make_shared<ToyInverter>(shared);
  bundle.validate();
  return bundle;
}

BackendBundle make_toy_backend(const ToyConfig& config) {
  return make_toy_backend(make_toy_matrices(config));
}

ToyConfig ToyConfig::from_json(const nlohmann::json& j) {
  ToyConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("geometry")) c.geometry = LatentGeometry::from_json(j.at("geometry"));
    if (j.contains("image_shape")) {
      c.image_shape = {j.at("image_shape").at(0).get<int>(), j.at("image_shape").at(1).get<int>()};
    }
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.identity_dim = j.value("identity_dim", c.identity_dim);
    c.prior_scale = j.value("prior_scale", c.prior_scale);
    c.embed_anchor_scale = j.value("embed_anchor_scale", c.embed_anchor_scale);
    c.inert_channels = j.value("inert_channels", c.inert_channels);
    c.with_inverter = j.value("with_inverter", c.with_inverter);
    if (j.contains("text_table")) {
      for (const auto& [text, values] : j.at("text_table").items()) {
        const auto v = values.get<std::vector<double>>();
        c.text_table[text] = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
      }
    }
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      c.generator_matrix_path = w.value("generator", std::string());
      c.image_embedder_matrix_path = w.value("image_embedder", std::string());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("toy backend config: ") + e.what());
  }
  return c;
}

}  // namespace latentsteer
