#pragma once

// Text-specific residual mapper over W+:
//
//   M_t(w) = (M^c(w_c), M^m(w_m), M^f(w_f))
//
// Each branch is a stack of fully-connected layers with leaky-ReLU between
// layers, consuming its layer group flattened and emitting a residual of the
// same size. The manipulated code is w + M_t(w).

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "latentsteer/errors.hpp"
#include "latentsteer/gradient_check.hpp"
#include "latentsteer/guidance.hpp"
#include "latentsteer/latent_optimizer.hpp"

namespace latentsteer {

enum class MapperArchitecture {
  kThreeBranch,  // one network per coarse / medium / fine group
  kSingle,       // one network over the whole code
};

struct MapperConfig {
  MapperArchitecture architecture = MapperArchitecture::kThreeBranch;
  /// Indexed by LayerGroup. Ignored by the single-network architecture.
  std::array<bool, 3> enabled_branches{true, true, true};
  int layers_per_branch = 4;
  int hidden_dim = 512;
  double leaky_slope = 0.2;
  bool zero_init_final = true;

  double lambda_l2 = 0.8;
  double lambda_id = 0.1;

  int steps = 1000;
  int batch_size = 8;
  double learning_rate = 0.5e-3;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static MapperConfig from_json(const nlohmann::json& j);
};

/// Published mapper loss weights.
inline constexpr double kMapperDefaultLambdaL2 = 0.8;
inline constexpr double kMapperDefaultLambdaId = 0.1;
/// Weights used for the identity-changing "Trump" mapper.
inline constexpr double kMapperTrumpLambdaL2 = 2.0;
inline constexpr double kMapperTrumpLambdaId = 0.0;

/// Reference cosine-similarity statistics of residual directions produced by
/// trained mappers on inverted face images. Not reproducible without those
/// mappers; kept for reports.
struct PublishedDirectionSimilarity {
  std::string_view prompt;
  double mean;
  double stddev;
};
inline constexpr PublishedDirectionSimilarity kPublishedDirectionSimilarity[] = {
    {"Mohawk", 0.82, 0.096},      {"Afro", 0.84, 0.085},     {"Bob-cut", 0.82, 0.095},
    {"Curly", 0.84, 0.088},       {"Beyonce", 0.83, 0.081},  {"Taylor Swift", 0.77, 0.107},
    {"Surprised", 0.79, 0.893},   {"Purple hair", 0.73, 0.145},
};

class MapperModel {
 public:
  struct Layer {
    Eigen::Index weight_offset;  // out x in, row-major
    Eigen::Index bias_offset;
    int in;
    int out;
  };
  struct Branch {
    LayerRange layers;  // W+ layers consumed and produced
    bool enabled;
    std::vector<Layer> dense;
  };

  /// Fresh model: He-style init for hidden layers, zero final layer when
  /// config.zero_init_final is set.
  static MapperModel create(GeometryPtr geometry, const MapperConfig& config);
  /// Rebuilds a model from a parameter vector (e.g. a checkpoint).
  static MapperModel from_parameters(GeometryPtr geometry, const MapperConfig& config, Vector params);

  const GeometryPtr& geometry() const { return geometry_; }
  const MapperConfig& config() const { return config_; }
  const std::vector<Branch>& branches() const { return branches_; }
  const Vector& parameters() const { return params_; }
  Vector& mutable_parameters() { return params_; }
  Eigen::Index parameter_count() const { return params_.size(); }

  /// Residual M_t(w); disabled branches produce exact zeros.
  WPlusCode forward(const WPlusCode& w) const;
  /// d L / d params given d L / d residual (flattened like W+).
  Vector backward(const WPlusCode& w, const Vector& residual_cotangent) const;

  // Training metadata.
  std::string prompt;
  int steps_trained = 0;
  std::vector<double> loss_history;  // mean batch loss per step
  std::optional<double> initial_mean_loss;
  std::optional<double> final_mean_loss;

  std::string loss_history_csv() const;

 private:
  MapperModel(GeometryPtr geometry, MapperConfig config);
  Vector branch_forward(const Branch& b, const Vector& x, std::vector<Vector>* pre) const;

  GeometryPtr geometry_;
  MapperConfig config_;
  std::vector<Branch> branches_;
  Vector params_;
};

WPlusCode mapper_forward(const MapperModel& model, const WPlusCode& w);

/// Loss of one latent under a guidance term (normally the CLIP term).
class MapperObjective {
 public:
  MapperObjective(const BackendBundle& backend, std::shared_ptr<const LatentTerm> guidance,
                  double lambda_l2, double lambda_id);

  ObjectiveTerms evaluate(const MapperModel& model, const WPlusCode& w) const;
  /// Adds d total / d params into `param_gradient` (sized like the parameters).
  ObjectiveTerms accumulate(const MapperModel& model, const WPlusCode& w, Vector& param_gradient) const;

 private:
  BackendBundle backend_;
  std::shared_ptr<const LatentTerm> guidance_;
  double lambda_l2_;
  double lambda_id_;
};

ObjectiveTerms mapper_loss(const BackendBundle& backend, const MapperModel& model,
                           const WPlusCode& w, std::string_view prompt);

class MapperDiverged : public Error {
 public:
  MapperDiverged(const std::string& message, std::vector<double> history)
      : Error(ErrorCode::kDiverged, message), history_(std::move(history)) {}
  const std::vector<double>& history() const { return history_; }

 private:
  std::vector<double> history_;
};

MapperModel train_mapper(const BackendBundle& backend, std::span<const WPlusCode> latents,
                         std::string_view prompt, const MapperConfig& config,
                         const ProgressFn& progress = {});
/// Same, with the CLIP term replaced by an arbitrary guidance term (e.g. an
/// identity term against a single reference image).
MapperModel train_mapper(const BackendBundle& backend, std::span<const WPlusCode> latents,
                         std::shared_ptr<const LatentTerm> guidance, std::string label,
                         const MapperConfig& config, const ProgressFn& progress = {});

/// Training latents drawn from the generator prior.
std::vector<WPlusCode> sample_training_latents(const BackendBundle& backend, int count,
                                               std::uint64_t seed);

struct MapperApplication {
  WPlusCode code;
  ImageTensor image;
};

MapperApplication apply_mapper(const BackendBundle& backend, const MapperModel& model,
                               const WPlusCode& w);

struct SimilarityReport {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
  int pair_count = 0;
  int excluded_pairs = 0;  // pairs with a zero-norm direction
};

/// Pairwise cosine similarity over all unordered pairs of directions.
SimilarityReport direction_similarity(std::span<const Vector> directions);
/// Throws kInvalidArgument with fewer than 2 latents.
SimilarityReport direction_similarity_report(const MapperModel& model,
                                             std::span<const WPlusCode> latents);

double mapper_gradient_check(const BackendBundle& backend, const MapperModel& model,
                             const WPlusCode& w, std::string_view prompt, int probe_count,
                             const GradientCheckOptions& options = {});
double mapper_gradient_check(const MapperObjective& objective, const MapperModel& model,
                             const WPlusCode& w, int probe_count,
                             const GradientCheckOptions& options = {});

/// Header JSON (config, prompt, geometry, geometry hash, step, losses) and the
/// parameter vector as one float32 block.
std::string encode_checkpoint(const MapperModel& model);
MapperModel decode_checkpoint(std::string_view bytes);

}  // namespace latentsteer
