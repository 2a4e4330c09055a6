#include "latentsteer/latent_mapper.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "latentsteer/adam.hpp"
#include "latentsteer/binary_format.hpp"

namespace latentsteer {

namespace {

using ConstWeights = Eigen::Map<const RowMatrix>;
using Weights = Eigen::Map<RowMatrix>;

constexpr const char* kCheckpointFormat = "latentsteer-mapper";
constexpr int kCheckpointVersion = 1;

const char* architecture_name(MapperArchitecture a) {
  return a == MapperArchitecture::kSingle ? "single" : "three-branch";
}

}  // namespace

void MapperConfig::validate() const {
  const auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidArgument, m); };
  if (architecture == MapperArchitecture::kThreeBranch &&
      std::none_of(enabled_branches.begin(), enabled_branches.end(), [](bool b) { return b; })) {
    fail("at least one mapper branch must be enabled");
  }
  if (layers_per_branch < 1) fail("layers_per_branch must be >= 1");
  if (hidden_dim < 1) fail("hidden_dim must be >= 1");
  if (!(leaky_slope >= 0.0)) fail("leaky_slope must be >= 0");
  if (!(lambda_l2 >= 0.0) || !(lambda_id >= 0.0)) fail("loss weights must be non-negative");
  if (steps < 1) fail("steps must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
}

nlohmann::json MapperConfig::to_json() const {
  nlohmann::json branches = nlohmann::json::array();
  for (int g = 0; g < 3; ++g) {
    if (enabled_branches[g]) branches.push_back(to_string(static_cast<LayerGroup>(g)));
  }
  return {{"architecture", architecture_name(architecture)},
          {"enabled_branches", branches},
          {"layers_per_branch", layers_per_branch},
          {"hidden_dim", hidden_dim},
          {"leaky_slope", leaky_slope},
          {"zero_init_final", zero_init_final},
          {"lambda_l2", lambda_l2},
          {"lambda_id", lambda_id},
          {"steps", steps},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"seed", seed}};
}

MapperConfig MapperConfig::from_json(const nlohmann::json& j) {
  MapperConfig c;
  try {
    const std::string arch = j.value("architecture", std::string("three-branch"));
    if (arch == "single") {
      c.architecture = MapperArchitecture::kSingle;
    } else if (arch != "three-branch") {
      throw Error(ErrorCode::kFormat, "unknown mapper architecture '" + arch + "'");
    }
    if (j.contains("enabled_branches")) {
      c.enabled_branches = {false, false, false};
      for (const auto& name : j.at("enabled_branches")) {
        const std::string n = name.get<std::string>();
        if (n == "coarse") c.enabled_branches[0] = true;
        else if (n == "medium") c.enabled_branches[1] = true;
        else if (n == "fine") c.enabled_branches[2] = true;
        else throw Error(ErrorCode::kFormat, "unknown mapper branch '" + n + "'");
      }
    }
    c.layers_per_branch = j.value("layers_per_branch", c.layers_per_branch);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.zero_init_final = j.value("zero_init_final", c.zero_init_final);
    c.lambda_l2 = j.value("lambda_l2", c.lambda_l2);
    c.lambda_id = j.value("lambda_id", c.lambda_id);
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("mapper config: ") + e.what());
  }
  return c;
}

MapperModel::MapperModel(GeometryPtr geometry, MapperConfig config)
    : geometry_(std::move(geometry)), config_(std::move(config)) {
  config_.validate();
  const int d = geometry_->latent_dim();
  if (config_.architecture == MapperArchitecture::kSingle) {
    branches_.push_back({{0, geometry_->num_layers()}, true, {}});
  } else {
    for (int g = 0; g < 3; ++g) {
      branches_.push_back({geometry_->group(static_cast<LayerGroup>(g)), config_.enabled_branches[g], {}});
    }
  }
  Eigen::Index offset = 0;
  for (Branch& b : branches_) {
    if (!b.enabled) continue;
    const int io = b.layers.size() * d;
    for (int k = 0; k < config_.layers_per_branch; ++k) {
      const int in = k == 0 ? io : config_.hidden_dim;
      const int out = k == config_.layers_per_branch - 1 ? io : config_.hidden_dim;
      b.dense.push_back({offset, offset + static_cast<Eigen::Index>(in) * out, in, out});
      offset += static_cast<Eigen::Index>(in) * out + out;
    }
  }
  params_ = Vector::Zero(offset);
}

MapperModel MapperModel::create(GeometryPtr geometry, const MapperConfig& config) {
  MapperModel model(std::move(geometry), config);
  Rng rng(config.seed);
  const double slope2 = config.leaky_slope * config.leaky_slope;
  for (const Branch& b : model.branches_) {
    for (std::size_t k = 0; k < b.dense.size(); ++k) {
      const Layer& layer = b.dense[k];
      const bool last = k + 1 == b.dense.size();
      if (last && config.zero_init_final) continue;
      const double stddev = last ? 1.0 / std::sqrt(static_cast<double>(layer.in))
                                 : std::sqrt(2.0 / ((1.0 + slope2) * layer.in));
      std::normal_distribution<double> normal(0.0, stddev);
      Weights w(model.params_.data() + layer.weight_offset, layer.out, layer.in);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
    }
  }
  return model;
}

MapperModel MapperModel::from_parameters(GeometryPtr geometry, const MapperConfig& config,
                                         Vector params) {
  MapperModel model(std::move(geometry), config);
  if (params.size() != model.params_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "mapper parameter vector has the wrong length");
  }
  if (!params.allFinite()) throw Error(ErrorCode::kNonFinite, "mapper parameters are not finite");
  model.params_ = std::move(params);
  return model;
}

Vector MapperModel::branch_forward(const Branch& b, const Vector& x, std::vector<Vector>* cache) const {
  Vector h = x;
  for (std::size_t k = 0; k < b.dense.size(); ++k) {
    const Layer& layer = b.dense[k];
    if (cache) cache->push_back(h);
    const ConstWeights w(params_.data() + layer.weight_offset, layer.out, layer.in);
    Vector z = w * h + params_.segment(layer.bias_offset, layer.out);
    if (k + 1 < b.dense.size()) {
      h = z.unaryExpr([s = config_.leaky_slope](double v) { return v > 0.0 ? v : s * v; });
    } else {
      h = std::move(z);
    }
  }
  return h;
}

WPlusCode MapperModel::forward(const WPlusCode& w) const {
  if (!(*w.geometry() == *geometry_)) {
    throw Error(ErrorCode::kShapeMismatch, "mapper: code does not match mapper geometry");
  }
  const int d = geometry_->latent_dim();
  const Vector flat = w.flat();
  Vector residual = Vector::Zero(flat.size());
  for (const Branch& b : branches_) {
    if (!b.enabled) continue;
    const Eigen::Index begin = static_cast<Eigen::Index>(b.layers.begin) * d;
    const Eigen::Index size = static_cast<Eigen::Index>(b.layers.size()) * d;
    residual.segment(begin, size) = branch_forward(b, flat.segment(begin, size), nullptr);
  }
  return WPlusCode::from_flat(geometry_, residual);
}

Vector MapperModel::backward(const WPlusCode& w, const Vector& residual_cotangent) const {
  if (!(*w.geometry() == *geometry_)) {
    throw Error(ErrorCode::kShapeMismatch, "mapper: code does not match mapper geometry");
  }
  if (residual_cotangent.size() != geometry_->wplus_size()) {
    throw Error(ErrorCode::kShapeMismatch, "mapper: residual cotangent has the wrong length");
  }
  const int d = geometry_->latent_dim();
  const Vector flat = w.flat();
  Vector grad = Vector::Zero(params_.size());
  std::vector<Vector> inputs;
  for (const Branch& b : branches_) {
    if (!b.enabled) continue;
    const Eigen::Index begin = static_cast<Eigen::Index>(b.layers.begin) * d;
    const Eigen::Index size = static_cast<Eigen::Index>(b.layers.size()) * d;
    inputs.clear();
    branch_forward(b, flat.segment(begin, size), &inputs);
    Vector g = residual_cotangent.segment(begin, size);
    for (std::size_t k = b.dense.size(); k-- > 0;) {
      const Layer& layer = b.dense[k];
      Weights gw(grad.data() + layer.weight_offset, layer.out, layer.in);
      gw.noalias() += g * inputs[k].transpose();
      grad.segment(layer.bias_offset, layer.out) += g;
      if (k == 0) break;
      const ConstWeights wk(params_.data() + layer.weight_offset, layer.out, layer.in);
      Vector upstream = wk.transpose() * g;
      // inputs[k] = lrelu(z_{k-1}); its sign equals the sign of z_{k-1}.
      const Vector& act = inputs[k];
      for (Eigen::Index i = 0; i < upstream.size(); ++i) {
        if (!(act[i] > 0.0)) upstream[i] *= config_.leaky_slope;
      }
      g = std::move(upstream);
    }
  }
  return grad;
}

std::string MapperModel::loss_history_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "step,loss\n";
  for (std::size_t i = 0; i < loss_history.size(); ++i) out << i + 1 << ',' << loss_history[i] << '\n';
  return std::move(out).str();
}

WPlusCode mapper_forward(const MapperModel& model, const WPlusCode& w) { return model.forward(w); }

MapperObjective::MapperObjective(const BackendBundle& backend, std::shared_ptr<const LatentTerm> guidance,
                                 double lambda_l2, double lambda_id)
    : backend_(backend), guidance_(std::move(guidance)), lambda_l2_(lambda_l2), lambda_id_(lambda_id) {
  if (!guidance_) throw Error(ErrorCode::kInvalidArgument, "mapper objective needs a guidance term");
  if (!(lambda_l2 >= 0.0) || !(lambda_id >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "loss weights must be non-negative");
  }
  if (lambda_id > 0.0 && !backend_.has_identity()) {
    throw Error(ErrorCode::kIdentityUnavailable,
                "identity loss unavailable: lambda_id > 0 requires an identity backend");
  }
}

ObjectiveTerms MapperObjective::evaluate(const MapperModel& model, const WPlusCode& w) const {
  const WPlusCode residual = model.forward(w);
  const WPlusCode edited(w.geometry(), w.values() + residual.values());
  ObjectiveTerms t;
  t.clip = guidance_->value(edited);
  t.l2 = residual.values().norm();
  t.id = lambda_id_ > 0.0 ? IdentityTerm(backend_, w).value(edited) : 0.0;
  t.total = t.clip + lambda_l2_ * t.l2 + lambda_id_ * t.id;
  return t;
}

ObjectiveTerms MapperObjective::accumulate(const MapperModel& model, const WPlusCode& w,
                                           Vector& param_gradient) const {
  const WPlusCode residual = model.forward(w);
  const WPlusCode edited(w.geometry(), w.values() + residual.values());
  ObjectiveTerms t;
  Vector g;
  t.clip = guidance_->value_and_gradient(edited, g);
  const Vector r = residual.flat();
  t.l2 = r.norm();
  if (t.l2 > 0.0) g += lambda_l2_ * r / t.l2;
  if (lambda_id_ > 0.0) {
    Vector gid;
    t.id = IdentityTerm(backend_, w).value_and_gradient(edited, gid);
    g += lambda_id_ * gid;
  }
  t.total = t.clip + lambda_l2_ * t.l2 + lambda_id_ * t.id;
  param_gradient += model.backward(w, g);
  return t;
}

ObjectiveTerms mapper_loss(const BackendBundle& backend, const MapperModel& model,
                           const WPlusCode& w, std::string_view prompt) {
  if (prompt.empty()) throw Error(ErrorCode::kInvalidArgument, "prompt must not be empty");
  const MapperObjective objective(backend, std::make_shared<ClipTerm>(backend, prompt),
                                  model.config().lambda_l2, model.config().lambda_id);
  return objective.evaluate(model, w);
}

MapperModel train_mapper(const BackendBundle& backend, std::span<const WPlusCode> latents,
                         std::string_view prompt, const MapperConfig& config,
                         const ProgressFn& progress) {
  if (prompt.empty()) throw Error(ErrorCode::kInvalidArgument, "prompt must not be empty");
  return train_mapper(backend, latents, std::make_shared<ClipTerm>(backend, prompt),
                      std::string(prompt), config, progress);
}

MapperModel train_mapper(const BackendBundle& backend, std::span<const WPlusCode> latents,
                         std::shared_ptr<const LatentTerm> guidance, std::string label,
                         const MapperConfig& config, const ProgressFn& progress) {
  config.validate();
  if (latents.empty()) throw Error(ErrorCode::kInvalidArgument, "train_mapper: latent collection is empty");
  for (const WPlusCode& w : latents) {
    if (!(*w.geometry() == *backend.geometry())) {
      throw Error(ErrorCode::kShapeMismatch, "train_mapper: latent does not match backend geometry");
    }
  }
  const MapperObjective objective(backend, std::move(guidance), config.lambda_l2, config.lambda_id);
  MapperModel model = MapperModel::create(backend.geometry(), config);
  model.prompt = std::move(label);

  const auto mean_loss = [&] {
    double sum = 0.0;
    for (const WPlusCode& w : latents) sum += objective.evaluate(model, w).total;
    return sum / static_cast<double>(latents.size());
  };
  model.initial_mean_loss = mean_loss();

  Adam adam(model.parameter_count(), AdamConfig{.learning_rate = config.learning_rate});
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_int_distribution<std::size_t> pick(0, latents.size() - 1);
  Vector grad(model.parameter_count());
  for (int step = 0; step < config.steps; ++step) {
    grad.setZero();
    double loss = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      loss += objective.accumulate(model, latents[pick(rng)], grad).total;
    }
    loss /= config.batch_size;
    grad /= config.batch_size;
    if (!std::isfinite(loss) || !grad.allFinite()) {
      throw MapperDiverged("mapper training diverged at step " + std::to_string(step + 1),
                           model.loss_history);
    }
    model.loss_history.push_back(loss);
    adam.step(model.mutable_parameters(), grad);
    model.steps_trained = step + 1;
    if (progress && !progress(step + 1, config.steps)) {
      throw Error(ErrorCode::kCancelled, "mapper training cancelled at step " + std::to_string(step + 1));
    }
  }
  model.final_mean_loss = mean_loss();
  if (!std::isfinite(*model.final_mean_loss)) {
    throw MapperDiverged("mapper training produced a non-finite final loss", model.loss_history);
  }
  return model;
}

std::vector<WPlusCode> sample_training_latents(const BackendBundle& backend, int count,
                                               std::uint64_t seed) {
  if (count < 1) throw Error(ErrorCode::kInvalidArgument, "latent count must be >= 1");
  Rng rng(seed);
  std::vector<WPlusCode> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(backend.generator->sample_wplus(rng));
  return out;
}

MapperApplication apply_mapper(const BackendBundle& backend, const MapperModel& model,
                               const WPlusCode& w) {
  const WPlusCode residual = model.forward(w);
  WPlusCode edited(w.geometry(), w.values() + residual.values());
  ImageTensor image = generate_from_wplus(backend, edited);
  return {std::move(edited), std::move(image)};
}

SimilarityReport direction_similarity(std::span<const Vector> directions) {
  SimilarityReport report;
  std::vector<double> self(directions.size());
  for (std::size_t i = 0; i < directions.size(); ++i) self[i] = directions[i].squaredNorm();
  std::vector<double> cosines;
  for (std::size_t i = 0; i < directions.size(); ++i) {
    for (std::size_t j = i + 1; j < directions.size(); ++j) {
      if (directions[i].size() != directions[j].size()) {
        throw Error(ErrorCode::kShapeMismatch, "direction vectors differ in length");
      }
      if (self[i] == 0.0 || self[j] == 0.0) {
        ++report.excluded_pairs;
        continue;
      }
      const double c = directions[i].dot(directions[j]) / std::sqrt(self[i] * self[j]);
      cosines.push_back(std::clamp(c, -1.0, 1.0));
    }
  }
  report.pair_count = static_cast<int>(cosines.size());
  if (cosines.empty()) return report;
  double sum = 0.0;
  for (double c : cosines) sum += c;
  report.mean = sum / static_cast<double>(cosines.size());
  double var = 0.0;
  for (double c : cosines) var += (c - report.mean) * (c - report.mean);
  report.stddev = std::sqrt(var / static_cast<double>(cosines.size()));
  return report;
}

SimilarityReport direction_similarity_report(const MapperModel& model,
                                             std::span<const WPlusCode> latents) {
  if (latents.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "direction similarity needs at least 2 latents");
  }
  std::vector<Vector> residuals;
  residuals.reserve(latents.size());
  for (const WPlusCode& w : latents) residuals.push_back(model.forward(w).flat());
  return direction_similarity(residuals);
}

double mapper_gradient_check(const MapperObjective& objective, const MapperModel& model,
                             const WPlusCode& w, int probe_count, const GradientCheckOptions& options) {
  if (probe_count < 1) throw Error(ErrorCode::kInvalidArgument, "invalid probe count: must be >= 1");
  Vector analytic = Vector::Zero(model.parameter_count());
  objective.accumulate(model, w, analytic);
  MapperModel probe = model;
  const auto f = [&](const Vector& params) {
    probe.mutable_parameters() = params;
    return objective.evaluate(probe, w).total;
  };
  return finite_difference_check(f, model.parameters(), analytic, probe_count, options);
}

double mapper_gradient_check(const BackendBundle& backend, const MapperModel& model,
                             const WPlusCode& w, std::string_view prompt, int probe_count,
                             const GradientCheckOptions& options) {
  if (probe_count < 1) throw Error(ErrorCode::kInvalidArgument, "invalid probe count: must be >= 1");
  const MapperObjective objective(backend, std::make_shared<ClipTerm>(backend, prompt),
                                  model.config().lambda_l2, model.config().lambda_id);
  return mapper_gradient_check(objective, model, w, probe_count, options);
}

std::string encode_checkpoint(const MapperModel& model) {
  BinaryDocument doc;
  doc.header = {{"format", kCheckpointFormat},
                {"version", kCheckpointVersion},
                {"config", model.config().to_json()},
                {"prompt", model.prompt},
                {"geometry", model.geometry()->to_json()},
                {"geometry_hash", model.geometry()->fingerprint()},
                {"step", model.steps_trained}};
  if (model.initial_mean_loss) doc.header["initial_mean_loss"] = *model.initial_mean_loss;
  if (model.final_mean_loss) doc.header["final_mean_loss"] = *model.final_mean_loss;
  doc.blocks.push_back(model.parameters());
  doc.blocks.push_back(Eigen::Map<const Vector>(model.loss_history.data(),
                                                static_cast<Eigen::Index>(model.loss_history.size())));
  return doc.encode();
}

MapperModel decode_checkpoint(std::string_view bytes) {
  const BinaryDocument doc = BinaryDocument::decode(bytes);
  try {
    if (doc.header.at("format") != kCheckpointFormat) {
      throw Error(ErrorCode::kFormat, "not a mapper checkpoint");
    }
    if (doc.header.at("version").get<int>() != kCheckpointVersion) {
      throw Error(ErrorCode::kFormat, "unsupported mapper checkpoint version");
    }
    if (doc.blocks.size() != 2) throw Error(ErrorCode::kFormat, "mapper checkpoint needs 2 blocks");
    GeometryPtr geometry = share(LatentGeometry::from_json(doc.header.at("geometry")));
    if (geometry->fingerprint() != doc.header.at("geometry_hash").get<std::string>()) {
      throw Error(ErrorCode::kIntegrity, "mapper checkpoint geometry hash mismatch");
    }
    MapperModel model = MapperModel::from_parameters(
        geometry, MapperConfig::from_json(doc.header.at("config")), doc.blocks[0]);
    model.prompt = doc.header.value("prompt", std::string());
    model.steps_trained = doc.header.value("step", 0);
    if (doc.header.contains("initial_mean_loss")) model.initial_mean_loss = doc.header["initial_mean_loss"].get<double>();
    if (doc.header.contains("final_mean_loss")) model.final_mean_loss = doc.header["final_mean_loss"].get<double>();
    model.loss_history.assign(doc.blocks[1].data(), doc.blocks[1].data() + doc.blocks[1].size());
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("mapper checkpoint header: ") + e.what());
  }
}

}  // namespace latentsteer
