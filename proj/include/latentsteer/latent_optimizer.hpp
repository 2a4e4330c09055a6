#pragma once

// Per-image latent optimization:
//
//   argmin_w  D_clip(G(w), t) + lambda_l2 * |w - w_s|_2 + lambda_id * L_id(w)
//
// solved by gradient descent back-propagated through the fixed generator and
// image embedder.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "latentsteer/errors.hpp"
#include "latentsteer/gradient_check.hpp"
#include "latentsteer/guidance.hpp"

namespace latentsteer {

enum class L2Mode {
  kNorm,     // |w - w_s|_2, the literal reading (default)
  kSquared,  // |w - w_s|_2^2
};

enum class StepRule { kGradientDescent, kAdam };

struct OptimizeConfig {
  double lambda_l2 = 0.008;
  double lambda_id = 0.005;
  int steps = 250;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  L2Mode l2_mode = L2Mode::kNorm;
  StepRule step_rule = StepRule::kGradientDescent;

  /// Throws kInvalidArgument / kIdentityUnavailable.
  void validate(bool has_identity) const;
  nlohmann::json to_json() const;
};

/// (lambda_l2, lambda_id) used for the published celebrity-portrait edits.
struct PublishedOptimizeSetting {
  std::string_view prompt;
  double lambda_l2;
  double lambda_id;
};
inline constexpr PublishedOptimizeSetting kPublishedOptimizeSettings[] = {
    {"Beyonce", 0.004, 0.0},
    {"A woman without makeup", 0.008, 0.005},
    {"Elsa from Frozen", 0.004, 0.0},
    {"A man with a beard", 0.008, 0.005},
    {"A blonde man", 0.008, 0.005},
    {"Donald Trump", 0.0025, 0.0},
};
inline constexpr int kPublishedIterationsMin = 200;
inline constexpr int kPublishedIterationsMax = 300;

struct ObjectiveTerms {
  double total = 0.0;
  double clip = 0.0;
  double l2 = 0.0;  // unweighted distance term
  double id = 0.0;  // unweighted identity term, 0 when lambda_id = 0
};

/// The objective bound to a source code and a guidance term.
class LatentObjective {
 public:
  LatentObjective(const BackendBundle& backend, WPlusCode source,
                  std::shared_ptr<const LatentTerm> guidance, const OptimizeConfig& config);

  ObjectiveTerms evaluate(const WPlusCode& w) const;
  ObjectiveTerms evaluate(const WPlusCode& w, Vector& gradient) const;
  const WPlusCode& source() const { return source_; }

 private:
  WPlusCode source_;
  std::shared_ptr<const LatentTerm> guidance_;
  std::unique_ptr<IdentityTerm> identity_;
  OptimizeConfig config_;
};

struct OptimizeTrace {
  ObjectiveTerms initial;            // at w_s
  std::vector<ObjectiveTerms> steps;  // after each update
  WPlusCode final_code;

  /// "step,total,clip,l2,id"; row 0 is the initial point.
  std::string to_csv() const;
};

class OptimizationDiverged : public Error {
 public:
  OptimizationDiverged(const std::string& message, OptimizeTrace partial)
      : Error(ErrorCode::kDiverged, message), partial_(std::move(partial)) {}
  const OptimizeTrace& partial_trace() const { return partial_; }

 private:
  OptimizeTrace partial_;
};

/// Called after every step with (steps done, steps total). Returning false
/// cancels the run with ErrorCode::kCancelled.
using ProgressFn = std::function<bool(int, int)>;

ObjectiveTerms objective(const BackendBundle& backend, const WPlusCode& w, const WPlusCode& w_source,
                         std::string_view prompt, const OptimizeConfig& config);

OptimizeTrace optimize_latent(const BackendBundle& backend, const WPlusCode& w_source,
                              std::string_view prompt, const OptimizeConfig& config,
                              const ProgressFn& progress = {});
OptimizeTrace optimize_latent(const BackendBundle& backend, const WPlusCode& w_source,
                              std::shared_ptr<const LatentTerm> guidance,
                              const OptimizeConfig& config, const ProgressFn& progress = {});

/// Worst relative error of the analytic objective gradient at `w` against
/// central differences on `probe_count` random coordinates.
double gradient_check(const BackendBundle& backend, const WPlusCode& w, const WPlusCode& w_source,
                      std::string_view prompt, const OptimizeConfig& config, int probe_count,
                      const GradientCheckOptions& options = {});
double gradient_check(const LatentObjective& objective, const WPlusCode& w, int probe_count,
                      const GradientCheckOptions& options = {});

}  // namespace latentsteer
