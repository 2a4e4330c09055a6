#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "latentsteer/artifact_store.hpp"
#include "latentsteer/backend_config.hpp"
#include "latentsteer/binary_format.hpp"
#include "latentsteer/errors.hpp"
#include "latentsteer/global_directions.hpp"
#include "latentsteer/hashing.hpp"
#include "latentsteer/latent_mapper.hpp"
#include "latentsteer/latent_optimizer.hpp"
#include "latentsteer/service.hpp"

namespace latentsteer::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string backend;
  std::string store = "store";
  std::string out_dir = ".";
  bool json = false;
  std::uint64_t seed = 0;
  int verbosity = 0;
};

struct Threshold {
  std::optional<double> beta;
  std::optional<int> k;
};

struct Options {
  Common common;
  Threshold threshold;

  // precompute
  int pairs = kDefaultPairCount;
  double perturb_alpha = kDefaultPerturbAlpha;
  int samples = kDefaultStyleSampleCount;

  // prompts and sources
  std::string target;
  std::string neutral;
  std::string templates{kDefaultTemplateBankId};
  std::string prompt;
  std::string image;
  std::string output;
  std::string original;
  double alpha = kFaceDefaults.alpha;

  // optimize
  double lambda_l2 = OptimizeConfig{}.lambda_l2;
  double lambda_id = OptimizeConfig{}.lambda_id;
  int steps = OptimizeConfig{}.steps;
  double lr = OptimizeConfig{}.learning_rate;
  std::string l2_mode = "norm";
  bool adam = false;
  std::string trace;

  // mapper
  std::string name;
  std::vector<std::string> images;
  std::string checkpoint;
  std::string architecture = "three-branch";
  std::vector<std::string> branches{"coarse", "medium", "fine"};
  int mapper_steps = MapperConfig{}.steps;
  int latents = 32;
  int hidden_dim = MapperConfig{}.hidden_dim;
  int layers = MapperConfig{}.layers_per_branch;
  int batch = MapperConfig{}.batch_size;
  double mapper_lr = MapperConfig{}.learning_rate;
  double mapper_lambda_l2 = kMapperDefaultLambdaL2;
  double mapper_lambda_id = kMapperDefaultLambdaId;
  std::string loss_csv;

  // serve
  std::string config;
  std::string host;
  int port = -1;
  int workers = 0;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--backend", c.backend, "Backend config JSON (default: built-in toy backend)");
  sub->add_option("--store", c.store, "Artifact store root")->capture_default_str();
  sub->add_option("--out", c.out_dir, "Directory for relative output paths")->capture_default_str();
  sub->add_flag("--json", c.json, "Print a JSON report instead of a table");
  sub->add_option("--seed", c.seed, "Seed for all randomness")->capture_default_str();
  sub->add_flag("-v,--verbose", c.verbosity, "Increase verbosity (repeatable)");
}

void add_threshold(CLI::App* sub, Threshold& t) {
  auto* group = sub->add_option_group("threshold", "Exactly one of --beta or --k");
  group->add_option("--beta", t.beta, "Disentanglement threshold on |relevance|")->check(CLI::NonNegativeNumber);
  group->add_option("--k", t.k, "Number of channels to keep")->check(CLI::PositiveNumber);
  group->require_option(1);
}

void add_source(CLI::App* sub, Options& o) {
  sub->add_option("--image", o.image, "Input PNG, inverted into W+ (default: a prior sample drawn with --seed)");
}

/// Everything a subcommand needs at run time.
class Context {
 public:
  Context(const Common& common, std::ostream& out, std::ostream& err) : common_(common), out_(out), err_(err) {}

  const BackendBundle& backend() {
    if (!backend_) {
      backend_ = common_.backend.empty() ? load_backend({{"kind", "toy"}}) : load_backend_file(common_.backend);
      log(1, "backend " + backend_->kind + " " + backend_->fingerprint());
    }
    return *backend_;
  }

  ArtifactStore& store() {
    if (!store_) store_.emplace(common_.store);
    return *store_;
  }

  fs::path output_path(const std::string& path) const {
    fs::path p = path;
    if (p.is_relative()) p = fs::path(common_.out_dir) / p;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p;
  }

  void write(const std::string& path, std::string_view bytes) const { write_file_atomic(output_path(path), bytes); }

  WPlusCode source_code(const std::string& image_path) {
    if (image_path.empty()) {
      Rng rng(common_.seed);
      return backend().generator->sample_wplus(rng);
    }
    ImageTensor image = decode_png(read_file(image_path), image_path);
    const ImageShape shape = backend().generator->image_shape();
    if (!(image.shape() == shape)) image = resize_bilinear(image, shape);
    return invert_image(backend(), image);
  }

  ChannelStats latest_stats() {
    const auto records = store().find_by_label(ArtifactKind::kStats, backend().fingerprint());
    if (records.empty()) {
      throw Error(ErrorCode::kNotFound,
                  "no channel statistics for this backend in " + common_.store +
                      "; run `latentsteer precompute` first");
    }
    return decode_channel_stats(store().get(ArtifactKind::kStats, records.back().key.fingerprint));
  }

  MapperModel load_mapper(const std::string& name, const std::string& checkpoint) {
    if (!checkpoint.empty()) return decode_checkpoint(read_file(checkpoint));
    const auto records = store().find_by_label(ArtifactKind::kMapper, name);
    if (records.empty()) throw Error(ErrorCode::kNotFound, "unknown mapper '" + name + "'");
    return decode_checkpoint(store().get(ArtifactKind::kMapper, records.back().key.fingerprint));
  }

  void log(int level, const std::string& message) const {
    if (common_.verbosity >= level) err_ << message << "\n";
  }

  /// JSON to stdout in --json mode; otherwise the human rendering.
  template <class Human>
  void report(const json& j, Human human) const {
    if (common_.json) {
      out_ << j.dump(2) << "\n";
    } else {
      human(out_);
    }
  }

 private:
  const Common& common_;
  std::ostream& out_;
  std::ostream& err_;
  std::optional<BackendBundle> backend_;
  std::optional<ArtifactStore> store_;
};

StyleDirection resolve_direction(const ChannelStats& stats, const Vector& relevance, const Threshold& t,
                                 json& report) {
  if (t.k) {
    const BetaSelection sel = beta_from_k(relevance, *t.k);
    report["beta_used"] = sel.beta;
    report["fewer_than_k"] = sel.fewer_than_k;
    return assemble_direction_top_k(stats.geometry, relevance, *t.k);
  }
  report["beta_used"] = *t.beta;
  return assemble_direction(stats.geometry, relevance, *t.beta);
}

JointEmbedding prompt_direction(Context& ctx, const Options& o) {
  return encode_prompt_pair(ctx.backend(), {o.target, o.neutral, o.templates}, TemplateBank::resolve(o.templates));
}

int cmd_precompute(Context& ctx, const Options& o) {
  ChannelStatsConfig cfg{o.samples, o.pairs, o.perturb_alpha, o.common.seed};
  cfg.validate();
  const std::string key = channel_stats_key(ctx.backend().fingerprint(), cfg);
  const bool reused = ctx.store().find(ArtifactKind::kStats, key).has_value();
  ChannelStats stats;
  if (reused) {
    stats = decode_channel_stats(ctx.store().get(ArtifactKind::kStats, key));
  } else {
    stats = precompute_channel_stats(ctx.backend(), cfg, [&](int done, int total) {
      if (done % 64 == 0 || done == total) ctx.log(1, "channels " + std::to_string(done) + "/" + std::to_string(total));
      return true;
    });
    ctx.store().put({ArtifactKind::kStats, key, ctx.backend().fingerprint()}, encode_channel_stats(stats));
  }
  const json j = {{"stats_key", key},
                  {"channels", stats.channel_count()},
                  {"inert_channels", stats.inert_channels.size()},
                  {"pair_count", stats.sample_pairs},
                  {"perturb_alpha", stats.perturb_alpha},
                  {"sample_count", stats.sample_count},
                  {"reused", reused}};
  ctx.report(j, [&](std::ostream& out) {
    out << (reused ? "reused" : "computed") << " channel statistics " << key << "\n"
        << "  channels " << stats.channel_count() << ", inert " << stats.inert_channels.size() << ", pairs "
        << stats.sample_pairs << ", alpha " << stats.perturb_alpha << "\n";
  });
  return kExitOk;
}

int cmd_direction(Context& ctx, const Options& o) {
  const ChannelStats stats = ctx.latest_stats();
  const Vector relevance = channel_relevance(stats, prompt_direction(ctx, o));
  json j = {{"target", o.target}, {"neutral", o.neutral}};
  const StyleDirection direction = resolve_direction(stats, relevance, o.threshold, j);
  const auto entries = direction_report(direction);
  json channels = json::array();
  for (const auto& e : entries) {
    channels.push_back(
        {{"channel", e.channel}, {"layer", e.layer}, {"index", e.index_in_layer}, {"relevance", e.relevance}});
  }
  j["active_channels"] = direction.active_count();
  j["channels"] = channels;
  if (!o.output.empty()) {
    ctx.write(o.output, encode_direction(direction));
    j["output"] = ctx.output_path(o.output).string();
  }
  ctx.report(j, [&](std::ostream& out) {
    out << "beta " << j["beta_used"].get<double>() << ", " << direction.active_count() << " active channels\n";
    out << std::setw(8) << "channel" << std::setw(7) << "layer" << std::setw(7) << "index" << std::setw(14)
        << "relevance" << "\n";
    for (const auto& e : entries) {
      out << std::setw(8) << e.channel << std::setw(7) << e.layer << std::setw(7) << e.index_in_layer
          << std::setw(14) << std::setprecision(6) << e.relevance << "\n";
    }
  });
  return kExitOk;
}

int cmd_edit_global(Context& ctx, const Options& o) {
  const ChannelStats stats = ctx.latest_stats();
  const Vector relevance = channel_relevance(stats, prompt_direction(ctx, o));
  json j = {{"target", o.target}, {"neutral", o.neutral}, {"alpha", o.alpha}};
  const StyleDirection direction = resolve_direction(stats, relevance, o.threshold, j);
  const StyleCode s = wplus_to_style(ctx.backend(), ctx.source_code(o.image));
  const GlobalEdit edit = apply_global(ctx.backend(), s, direction, o.alpha);
  ctx.write(o.output, encode_png(edit.image));
  j["active_channels"] = direction.active_count();
  j["output"] = ctx.output_path(o.output).string();
  if (!o.original.empty()) {
    ctx.write(o.original, encode_png(generate_from_style(ctx.backend(), s)));
    j["original"] = ctx.output_path(o.original).string();
  }
  ctx.report(j, [&](std::ostream& out) {
    out << "wrote " << j["output"].get<std::string>() << " (alpha " << o.alpha << ", beta "
        << j["beta_used"].get<double>() << ", " << direction.active_count() << " active channels)\n";
  });
  return kExitOk;
}

int cmd_optimize(Context& ctx, const Options& o) {
  OptimizeConfig cfg;
  cfg.lambda_l2 = o.lambda_l2;
  cfg.lambda_id = o.lambda_id;
  cfg.steps = o.steps;
  cfg.learning_rate = o.lr;
  cfg.seed = o.common.seed;
  cfg.l2_mode = o.l2_mode == "squared" ? L2Mode::kSquared : L2Mode::kNorm;
  cfg.step_rule = o.adam ? StepRule::kAdam : StepRule::kGradientDescent;
  const WPlusCode source = ctx.source_code(o.image);
  const OptimizeTrace trace = optimize_latent(ctx.backend(), source, o.prompt, cfg);
  ctx.write(o.output, encode_png(generate_from_wplus(ctx.backend(), trace.final_code)));
  const ObjectiveTerms& last = trace.steps.empty() ? trace.initial : trace.steps.back();
  const auto terms = [](const ObjectiveTerms& t) {
    return json{{"total", t.total}, {"clip", t.clip}, {"l2", t.l2}, {"id", t.id}};
  };
  json j = {{"prompt", o.prompt},
            {"config", cfg.to_json()},
            {"initial", terms(trace.initial)},
            {"final", terms(last)},
            {"output", ctx.output_path(o.output).string()}};
  if (!o.trace.empty()) {
    ctx.write(o.trace, trace.to_csv());
    j["trace"] = ctx.output_path(o.trace).string();
  }
  ctx.report(j, [&](std::ostream& out) {
    out << "loss " << trace.initial.total << " -> " << last.total << " over " << trace.steps.size()
        << " steps\n  clip " << last.clip << ", l2 " << last.l2 << ", id " << last.id << "\nwrote "
        << j["output"].get<std::string>() << "\n";
  });
  return kExitOk;
}

int cmd_train_mapper(Context& ctx, const Options& o) {
  MapperConfig cfg;
  cfg.architecture = o.architecture == "single" ? MapperArchitecture::kSingle : MapperArchitecture::kThreeBranch;
  cfg.enabled_branches = {false, false, false};
  for (const auto& b : o.branches) {
    cfg.enabled_branches[b == "coarse" ? 0 : b == "medium" ? 1 : 2] = true;
  }
  cfg.layers_per_branch = o.layers;
  cfg.hidden_dim = o.hidden_dim;
  cfg.steps = o.mapper_steps;
  cfg.batch_size = o.batch;
  cfg.learning_rate = o.mapper_lr;
  cfg.lambda_l2 = o.mapper_lambda_l2;
  cfg.lambda_id = o.mapper_lambda_id;
  cfg.seed = o.common.seed;
  cfg.validate();

  std::vector<WPlusCode> latents;
  if (o.images.empty()) {
    latents = sample_training_latents(ctx.backend(), o.latents, o.common.seed);
  } else {
    for (const auto& path : o.images) latents.push_back(ctx.source_code(path));
  }
  const MapperModel model = train_mapper(ctx.backend(), latents, o.prompt, cfg, [&](int done, int total) {
    if (done % 100 == 0 || done == total) ctx.log(1, "step " + std::to_string(done) + "/" + std::to_string(total));
    return true;
  });
  const std::string bytes = encode_checkpoint(model);
  const std::string key = fingerprint_of(bytes);
  ctx.store().put({ArtifactKind::kMapper, key, o.name}, bytes);
  json j = {{"name", o.name}, {"prompt", o.prompt}, {"mapper_key", key}, {"steps", model.steps_trained}};
  if (model.initial_mean_loss) j["initial_mean_loss"] = *model.initial_mean_loss;
  if (model.final_mean_loss) j["final_mean_loss"] = *model.final_mean_loss;
  if (!o.checkpoint.empty()) {
    ctx.write(o.checkpoint, bytes);
    j["checkpoint"] = ctx.output_path(o.checkpoint).string();
  }
  if (!o.loss_csv.empty()) {
    ctx.write(o.loss_csv, model.loss_history_csv());
    j["loss_csv"] = ctx.output_path(o.loss_csv).string();
  }
  ctx.report(j, [&](std::ostream& out) {
    out << "trained mapper '" << o.name << "' (" << key << ")\n";
    if (model.initial_mean_loss && model.final_mean_loss) {
      out << "  mean loss " << *model.initial_mean_loss << " -> " << *model.final_mean_loss << "\n";
    }
  });
  return kExitOk;
}

int cmd_apply_mapper(Context& ctx, const Options& o) {
  const MapperModel model = ctx.load_mapper(o.name, o.checkpoint);
  if (!(*model.geometry() == *ctx.backend().geometry())) {
    throw Error(ErrorCode::kShapeMismatch, "mapper geometry does not match the backend");
  }
  const MapperApplication applied = apply_mapper(ctx.backend(), model, ctx.source_code(o.image));
  ctx.write(o.output, encode_png(applied.image));
  const json j = {{"prompt", model.prompt}, {"output", ctx.output_path(o.output).string()}};
  ctx.report(j, [&](std::ostream& out) { out << "wrote " << j["output"].get<std::string>() << "\n"; });
  return kExitOk;
}

int cmd_report_similarity(Context& ctx, const Options& o) {
  const MapperModel model = ctx.load_mapper(o.name, o.checkpoint);
  if (!(*model.geometry() == *ctx.backend().geometry())) {
    throw Error(ErrorCode::kShapeMismatch, "mapper geometry does not match the backend");
  }
  const auto latents = sample_training_latents(ctx.backend(), o.latents, o.common.seed);
  const SimilarityReport r = direction_similarity_report(model, latents);
  json j = {{"prompt", model.prompt},
            {"mean", r.mean},
            {"std", r.stddev},
            {"pairs", r.pair_count},
            {"excluded_pairs", r.excluded_pairs}};
  for (const auto& ref : kPublishedDirectionSimilarity) {
    if (ref.prompt == model.prompt) j["reference"] = {{"mean", ref.mean}, {"std", ref.stddev}};
  }
  ctx.report(j, [&](std::ostream& out) {
    out << "direction similarity over " << r.pair_count << " pairs: mean " << r.mean << ", std " << r.stddev
        << "\n";
    if (j.contains("reference")) {
      out << "  reference for '" << model.prompt << "': mean " << j["reference"]["mean"].get<double>() << ", std "
          << j["reference"]["std"].get<double>() << "\n";
    }
  });
  return kExitOk;
}

int cmd_serve(const Options& o, std::ostream& out) {
  std::optional<fs::path> path;
  if (!o.config.empty()) path = o.config;
  ServiceConfig cfg = ServiceConfig::resolve(path);
  if (!o.common.backend.empty()) {
    cfg.backend = json::parse(read_file(o.common.backend));
    cfg.base_dir = fs::path(o.common.backend).parent_path();
  }
  if (o.common.store != "store" || (!path && !std::getenv(kConfigEnvVar))) cfg.store_root = o.common.store;
  if (!o.host.empty()) cfg.host = o.host;
  if (o.port >= 0) cfg.port = o.port;
  if (o.workers > 0) cfg.workers = o.workers;
  Service service(cfg);
  out << "serving on " << cfg.host << ":" << cfg.port << " (store " << cfg.store_root.string() << ")" << std::endl;
  service.run(cfg.host, cfg.port);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Text-driven latent manipulation toolkit", "latentsteer"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "latentsteer 0.1.0");

  auto* precompute = app.add_subcommand("precompute", "Estimate per-channel image-embedding directions");
  add_common(precompute, o.common);
  precompute->add_option("--pairs", o.pairs, "Image pairs per channel")->capture_default_str()->check(CLI::PositiveNumber);
  precompute->add_option("--perturb-alpha", o.perturb_alpha, "Perturbation in channel standard deviations")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  precompute->add_option("--samples", o.samples, "Style codes used to estimate channel spread")
      ->capture_default_str()
      ->check(CLI::Range(2, 1 << 24));

  const auto add_prompt_pair = [&](CLI::App* sub) {
    sub->add_option("--target", o.target, "Target attribute text")->required();
    sub->add_option("--neutral", o.neutral, "Neutral class text")->required();
    sub->add_option("--templates", o.templates, "Template bank id or file")->capture_default_str();
  };

  auto* direction = app.add_subcommand("direction", "Report the style-space direction for a prompt pair");
  add_common(direction, o.common);
  add_prompt_pair(direction);
  add_threshold(direction, o.threshold);
  direction->add_option("--output", o.output, "Write the direction as a float32 binary");

  auto* edit = app.add_subcommand("edit-global", "Apply a global direction to one image");
  add_common(edit, o.common);
  add_prompt_pair(edit);
  add_threshold(edit, o.threshold);
  add_source(edit, o);
  edit->add_option("--alpha", o.alpha, "Manipulation strength")->capture_default_str();
  edit->add_option("--output", o.output, "Edited PNG")->required();
  edit->add_option("--original", o.original, "Also write the unedited render");

  auto* optimize = app.add_subcommand("optimize", "Optimize a latent code towards a text prompt");
  add_common(optimize, o.common);
  add_source(optimize, o);
  optimize->add_option("--prompt", o.prompt, "Text prompt")->required();
  optimize->add_option("--lambda-l2", o.lambda_l2, "Weight of the latent distance term")->capture_default_str();
  optimize->add_option("--lambda-id", o.lambda_id, "Weight of the identity term")->capture_default_str();
  optimize->add_option("--steps", o.steps, "Update steps")->capture_default_str()->check(CLI::PositiveNumber);
  optimize->add_option("--lr", o.lr, "Step size")->capture_default_str();
  optimize->add_option("--l2-mode", o.l2_mode, "Latent distance: norm or squared")
      ->capture_default_str()
      ->check(CLI::IsMember({"norm", "squared"}));
  optimize->add_flag("--adam", o.adam, "Use Adam instead of plain gradient descent");
  optimize->add_option("--output", o.output, "Result PNG")->required();
  optimize->add_option("--trace", o.trace, "Write the loss trace as CSV");

  auto* train = app.add_subcommand("train-mapper", "Train a residual latent mapper for a prompt");
  add_common(train, o.common);
  train->add_option("--prompt", o.prompt, "Text prompt")->required();
  train->add_option("--name", o.name, "Name to register the checkpoint under")->required();
  train->add_option("--architecture", o.architecture, "three-branch or single")
      ->capture_default_str()
      ->check(CLI::IsMember({"three-branch", "single"}));
  train->add_option("--branches", o.branches, "Enabled branches")
      ->capture_default_str()
      ->delimiter(',')
      ->check(CLI::IsMember({"coarse", "medium", "fine"}));
  train->add_option("--steps", o.mapper_steps, "Training steps")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--latents", o.latents, "Training latents drawn from the prior")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train->add_option("--images", o.images, "Train on these PNGs, inverted into W+, instead of prior samples")
      ->check(CLI::ExistingFile);
  train->add_option("--hidden-dim", o.hidden_dim, "Hidden width")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--layers", o.layers, "Dense layers per branch")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--batch", o.batch, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--lr", o.mapper_lr, "Adam learning rate")->capture_default_str();
  train->add_option("--lambda-l2", o.mapper_lambda_l2, "Weight of the residual norm term")->capture_default_str();
  train->add_option("--lambda-id", o.mapper_lambda_id, "Weight of the identity term")->capture_default_str();
  train->add_option("--checkpoint", o.checkpoint, "Also write the checkpoint to this file");
  train->add_option("--loss-csv", o.loss_csv, "Write the per-step loss history as CSV");

  const auto add_mapper_source = [&](CLI::App* sub) {
    auto* group = sub->add_option_group("mapper", "Exactly one of --name or --checkpoint");
    group->add_option("--name", o.name, "Registered mapper name");
    group->add_option("--checkpoint", o.checkpoint, "Checkpoint file");
    group->require_option(1);
  };

  auto* apply = app.add_subcommand("apply-mapper", "Apply a trained mapper to one image");
  add_common(apply, o.common);
  add_mapper_source(apply);
  add_source(apply, o);
  apply->add_option("--output", o.output, "Result PNG")->required();

  auto* similarity = app.add_subcommand("report-similarity", "Cosine similarity of mapper residual directions");
  add_common(similarity, o.common);
  add_mapper_source(similarity);
  similarity->add_option("--latents", o.latents, "Latents drawn from the prior")
      ->capture_default_str()
      ->check(CLI::Range(2, 1 << 20));

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  add_common(serve, o.common);
  serve->add_option("--config", o.config, std::string("Service config JSON (overridden by ") + kConfigEnvVar + ")");
  serve->add_option("--host", o.host, "Listen address");
  serve->add_option("--port", o.port, "Listen port")->check(CLI::Range(0, 65535));
  serve->add_option("--workers", o.workers, "Job worker threads")->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  Context ctx(o.common, out, err);
  try {
    if (*precompute) return cmd_precompute(ctx, o);
    if (*direction) return cmd_direction(ctx, o);
    if (*edit) return cmd_edit_global(ctx, o);
    if (*optimize) return cmd_optimize(ctx, o);
    if (*train) return cmd_train_mapper(ctx, o);
    if (*apply) return cmd_apply_mapper(ctx, o);
    if (*similarity) return cmd_report_similarity(ctx, o);
    if (*serve) return cmd_serve(o, out);
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return kExitUsage;
}

}  // namespace latentsteer::cli
