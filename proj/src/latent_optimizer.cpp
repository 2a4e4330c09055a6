#include "latentsteer/latent_optimizer.hpp"

#include <cmath>
#include <sstream>

#include "latentsteer/adam.hpp"

namespace latentsteer {

void OptimizeConfig::validate(bool has_identity) const {
  if (!(lambda_l2 >= 0.0) || !std::isfinite(lambda_l2)) {
    throw Error(ErrorCode::kInvalidArgument, "lambda_l2 must be a non-negative finite number");
  }
  if (!(lambda_id >= 0.0) || !std::isfinite(lambda_id)) {
    throw Error(ErrorCode::kInvalidArgument, "lambda_id must be a non-negative finite number");
  }
  if (steps < 1) throw Error(ErrorCode::kInvalidArgument, "steps must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::kInvalidArgument, "learning_rate must be positive");
  }
  if (lambda_id > 0.0 && !has_identity) {
    throw Error(ErrorCode::kIdentityUnavailable,
                "identity loss unavailable: lambda_id > 0 requires an identity backend");
  }
}

nlohmann::json OptimizeConfig::to_json() const {
  return {{"lambda_l2", lambda_l2},
          {"lambda_id", lambda_id},
          {"steps", steps},
          {"learning_rate", learning_rate},
          {"seed", seed},
          {"l2_mode", l2_mode == L2Mode::kNorm ? "norm" : "squared"},
          {"step_rule", step_rule == StepRule::kGradientDescent ? "gd" : "adam"}};
}

LatentObjective::LatentObjective(const BackendBundle& backend, WPlusCode source,
                                 std::shared_ptr<const LatentTerm> guidance,
                                 const OptimizeConfig& config)
    : source_(std::move(source)), guidance_(std::move(guidance)), config_(config) {
  config_.validate(backend.has_identity());
  if (!guidance_) throw Error(ErrorCode::kInvalidArgument, "objective needs a guidance term");
  if (!(*source_.geometry() == *backend.geometry())) {
    throw Error(ErrorCode::kShapeMismatch, "source code does not match backend geometry");
  }
  if (config_.lambda_id > 0.0) identity_ = std::make_unique<IdentityTerm>(backend, source_);
}

ObjectiveTerms LatentObjective::evaluate(const WPlusCode& w) const {
  ObjectiveTerms t;
  t.clip = guidance_->value(w);
  const double distance = (w.values() - source_.values()).norm();
  t.l2 = config_.l2_mode == L2Mode::kNorm ? distance : distance * distance;
  t.id = identity_ ? identity_->value(w) : 0.0;
  t.total = t.clip + config_.lambda_l2 * t.l2 + config_.lambda_id * t.id;
  return t;
}

ObjectiveTerms LatentObjective::evaluate(const WPlusCode& w, Vector& gradient) const {
  ObjectiveTerms t;
  t.clip = guidance_->value_and_gradient(w, gradient);
  const Vector diff = w.flat() - source_.flat();
  const double distance = diff.norm();
  if (config_.l2_mode == L2Mode::kNorm) {
    t.l2 = distance;
    // Subgradient 0 at w = w_s.
    if (distance > 0.0) gradient += config_.lambda_l2 * diff / distance;
  } else {
    t.l2 = distance * distance;
    gradient += 2.0 * config_.lambda_l2 * diff;
  }
  if (identity_) {
    Vector id_grad;
    t.id = identity_->value_and_gradient(w, id_grad);
    gradient += config_.lambda_id * id_grad;
  }
  t.total = t.clip + config_.lambda_l2 * t.l2 + config_.lambda_id * t.id;
  return t;
}

std::string OptimizeTrace::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "step,total,clip,l2,id\n";
  const auto row = [&](std::size_t step, const ObjectiveTerms& t) {
    out << step << ',' << t.total << ',' << t.clip << ',' << t.l2 << ',' << t.id << '\n';
  };
  row(0, initial);
  for (std::size_t i = 0; i < steps.size(); ++i) row(i + 1, steps[i]);
  return std::move(out).str();
}

ObjectiveTerms objective(const BackendBundle& backend, const WPlusCode& w, const WPlusCode& w_source,
                         std::string_view prompt, const OptimizeConfig& config) {
  if (prompt.empty()) throw Error(ErrorCode::kInvalidArgument, "prompt must not be empty");
  if (!(*w.geometry() == *backend.geometry())) {
    throw Error(ErrorCode::kShapeMismatch, "code does not match backend geometry");
  }
  const LatentObjective obj(backend, w_source, std::make_shared<ClipTerm>(backend, prompt), config);
  return obj.evaluate(w);
}

OptimizeTrace optimize_latent(const BackendBundle& backend, const WPlusCode& w_source,
                              std::string_view prompt, const OptimizeConfig& config,
                              const ProgressFn& progress) {
  if (prompt.empty()) throw Error(ErrorCode::kInvalidArgument, "prompt must not be empty");
  return optimize_latent(backend, w_source, std::make_shared<ClipTerm>(backend, prompt), config,
                         progress);
}

OptimizeTrace optimize_latent(const BackendBundle& backend, const WPlusCode& w_source,
                              std::shared_ptr<const LatentTerm> guidance,
                              const OptimizeConfig& config, const ProgressFn& progress) {
  const LatentObjective obj(backend, w_source, std::move(guidance), config);
  const GeometryPtr& geometry = w_source.geometry();

  Vector gradient;
  OptimizeTrace trace{obj.evaluate(w_source, gradient), {}, w_source};
  trace.steps.reserve(static_cast<std::size_t>(config.steps));
  if (!std::isfinite(trace.initial.total) || !gradient.allFinite()) {
    throw OptimizationDiverged("non-finite loss at the source code", trace);
  }

  Vector params = w_source.flat();
  std::optional<Adam> adam;
  if (config.step_rule == StepRule::kAdam) {
    adam.emplace(params.size(), AdamConfig{.learning_rate = config.learning_rate});
  }
  for (int step = 0; step < config.steps; ++step) {
    if (adam) {
      adam->step(params, gradient);
    } else {
      params -= config.learning_rate * gradient;
    }
    if (!params.allFinite()) {
      throw OptimizationDiverged("non-finite iterate at step " + std::to_string(step + 1), trace);
    }
    WPlusCode w = WPlusCode::from_flat(geometry, params);
    const ObjectiveTerms terms = obj.evaluate(w, gradient);
    if (!std::isfinite(terms.total) || !gradient.allFinite()) {
      throw OptimizationDiverged("non-finite loss at step " + std::to_string(step + 1), trace);
    }
    trace.steps.push_back(terms);
    trace.final_code = std::move(w);
    if (progress && !progress(step + 1, config.steps)) {
      throw Error(ErrorCode::kCancelled, "optimization cancelled at step " + std::to_string(step + 1));
    }
  }
  return trace;
}

double gradient_check(const LatentObjective& objective, const WPlusCode& w, int probe_count,
                      const GradientCheckOptions& options) {
  if (probe_count < 1) throw Error(ErrorCode::kInvalidArgument, "invalid probe count: must be >= 1");
  Vector analytic;
  objective.evaluate(w, analytic);
  const GeometryPtr geometry = w.geometry();
  const auto f = [&](const Vector& x) {
    return objective.evaluate(WPlusCode::from_flat(geometry, x)).total;
  };
  return finite_difference_check(f, w.flat(), analytic, probe_count, options);
}

double gradient_check(const BackendBundle& backend, const WPlusCode& w, const WPlusCode& w_source,
                      std::string_view prompt, const OptimizeConfig& config, int probe_count,
                      const GradientCheckOptions& options) {
  if (probe_count < 1) throw Error(ErrorCode::kInvalidArgument, "invalid probe count: must be >= 1");
  const LatentObjective obj(backend, w_source, std::make_shared<ClipTerm>(backend, prompt), config);
  return gradient_check(obj, w, probe_count, options);
}

}  // namespace latentsteer
