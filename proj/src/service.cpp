#include "latentsteer/service.hpp"

#include <cmath>
#include <cstdlib>

#include "httplib.h"
#include "latentsteer/backend_config.hpp"
#include "latentsteer/binary_format.hpp"
#include "latentsteer/errors.hpp"
#include "latentsteer/hashing.hpp"
#include "latentsteer/latent_mapper.hpp"
#include "latentsteer/latent_optimizer.hpp"

namespace latentsteer {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Error with an explicit HTTP status and wire code.
class HttpError : public std::runtime_error {
 public:
  HttpError(int status, std::string code, const std::string& message, json extra = json::object())
      : std::runtime_error(message), status_(status), code_(std::move(code)), extra_(std::move(extra)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }
  const json& extra() const { return extra_; }

 private:
  int status_;
  std::string code_;
  json extra_;
};

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kNonFinite:
    case ErrorCode::kFormat: return 400;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kIdentityUnavailable:
    case ErrorCode::kCancelled: return 409;
    case ErrorCode::kDegeneratePrompt: return 422;
    case ErrorCode::kBackendUnavailable:
    case ErrorCode::kInverterUnavailable: return 503;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                const json& extra = json::object()) {
  json err = {{"code", code}, {"message", message}};
  for (const auto& [k, v] : extra.items()) err[k] = v;
  send_json(res, status, {{"error", err}});
}

template <class Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const HttpError& e) {
      send_error(res, e.status(), e.code(), e.what(), e.extra());
    } catch (const Error& e) {
      send_error(res, http_status(e.code()), std::string(to_string(e.code())), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "invalid_argument", std::string("bad request body: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    throw HttpError(400, "invalid_argument", "request body must be a JSON object");
  }
  return body;
}

std::string require_string(const json& body, const char* field) {
  if (!body.contains(field) || !body[field].is_string()) {
    throw HttpError(400, "invalid_argument", std::string("field '") + field + "' must be a string");
  }
  return body[field].get<std::string>();
}

double number_or(const json& body, const char* field, double fallback) {
  if (!body.contains(field) || body[field].is_null()) return fallback;
  if (!body[field].is_number()) {
    throw HttpError(400, "invalid_argument", std::string("field '") + field + "' must be a number");
  }
  return body[field].get<double>();
}

std::int64_t integer_or(const json& body, const char* field, std::int64_t fallback) {
  if (!body.contains(field) || body[field].is_null()) return fallback;
  if (!body[field].is_number_integer()) {
    throw HttpError(400, "invalid_argument", std::string("field '") + field + "' must be an integer");
  }
  return body[field].get<std::int64_t>();
}

std::string base64_encode(std::string_view in) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const auto n = (std::uint32_t(std::uint8_t(in[i])) << 16) | (std::uint32_t(std::uint8_t(in[i + 1])) << 8) |
                   std::uint8_t(in[i + 2]);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  if (i < in.size()) {
    std::uint32_t n = std::uint32_t(std::uint8_t(in[i])) << 16;
    if (i + 1 < in.size()) n |= std::uint32_t(std::uint8_t(in[i + 1])) << 8;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += i + 1 < in.size() ? kAlphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

bool valid_name(std::string_view name) {
  if (name.empty() || name.size() > 64 || name.front() == '.') return false;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    if (!ok) return false;
  }
  return true;
}

json terms_json(const ObjectiveTerms& t) {
  return {{"total", t.total}, {"clip", t.clip}, {"l2", t.l2}, {"id", t.id}};
}

ProgressFn progress_of(JobContext& ctx) {
  return [&ctx](int done, int total) { return ctx.report(total > 0 ? double(done) / total : 1.0); };
}

}  // namespace

ServiceConfig ServiceConfig::from_json(const json& j, const fs::path& base_dir) {
  ServiceConfig c;
  c.base_dir = base_dir;
  try {
    if (j.contains("backend")) {
      if (j["backend"].is_string()) {
        fs::path p = j["backend"].get<std::string>();
        if (p.is_relative()) p = base_dir / p;
        c.backend = json::parse(read_file(p));
        c.base_dir = p.parent_path();
      } else {
        c.backend = j["backend"];
      }
    }
    if (j.contains("store_root")) {
      c.store_root = j["store_root"].get<std::string>();
      if (c.store_root.is_relative()) c.store_root = base_dir / c.store_root;
    } else {
      c.store_root = base_dir / c.store_root;
    }
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.workers = j.value("workers", c.workers);
    c.max_image_bytes = j.value("max_image_bytes", c.max_image_bytes);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("service config: ") + e.what());
  }
  if (c.workers < 1) throw Error(ErrorCode::kInvalidArgument, "service config: workers must be >= 1");
  if (c.port < 0 || c.port > 65535) throw Error(ErrorCode::kInvalidArgument, "service config: bad port");
  return c;
}

ServiceConfig ServiceConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, "service config " + path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

ServiceConfig ServiceConfig::resolve(const std::optional<fs::path>& path) {
  if (const char* env = std::getenv(kConfigEnvVar); env && *env) return load(env);
  if (path) return load(*path);
  return from_json(json::object(), fs::current_path());
}

Service::Service(BackendBundle backend, std::shared_ptr<ArtifactStore> store, int workers,
                 std::size_t max_image_bytes)
    : backend_(std::move(backend)),
      store_(std::move(store)),
      max_image_bytes_(max_image_bytes) {
  backend_.validate();
  if (!store_) throw Error(ErrorCode::kInvalidArgument, "service needs an artifact store");
  backend_fingerprint_ = backend_.fingerprint();
  jobs_ = std::make_unique<JobQueue>(store_.get(), workers);
  server_ = std::make_unique<httplib::Server>();
  install_routes();
}

Service::Service(const ServiceConfig& config)
    : Service(load_backend(config.backend, config.base_dir), std::make_shared<ArtifactStore>(config.store_root),
              config.workers, config.max_image_bytes) {}

Service::~Service() { stop(); }

int Service::start(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void Service::run(const std::string& host, int port) {
  if (!server_->listen(host, port)) throw Error(ErrorCode::kIo, "cannot listen on " + host + ":" + std::to_string(port));
}

void Service::stop() {
  if (server_) server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
  if (jobs_) jobs_->shutdown();
}

void Service::install_routes() {
  httplib::Server& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Headers", "Content-Type"},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  s.set_payload_max_length(max_image_bytes_ + (1u << 20));
  s.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) {
      send_error(res, 404, "not_found", "no route for " + req.method + " " + req.path);
    } else if (res.status == 413) {
      send_error(res, 413, "payload_too_large", "request body too large");
    } else {
      send_error(res, res.status, "http_error", "request failed");
    }
  });

  s.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, health());
        }));

  s.Post("/images", guarded([this](const httplib::Request& req, httplib::Response& res) {
           std::string png;
           if (req.is_multipart_form_data()) {
             if (req.has_file("image")) {
               png = req.get_file_value("image").content;
             } else if (!req.files.empty()) {
               png = req.files.begin()->second.content;
             } else {
               throw HttpError(400, "invalid_argument", "multipart body has no image part");
             }
           } else {
             png = req.body;
           }
           send_json(res, 200, ingest_image(png));
         }));

  s.Get(R"(/images/([A-Za-z0-9_.-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto img = session(req.matches[1]);
          const ImageTensor render = generate_from_style(backend_, img->style);
          send_json(res, 200,
                    {{"image_id", img->id},
                     {"width", render.shape().width},
                     {"height", render.shape().height},
                     {"render", base64_encode(encode_png(render))}});
        }));

  s.Post("/manipulate/global", guarded([this](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 200, manipulate_global(parse_body(req)));
         }));

  s.Post("/manipulate/optimize", guarded([this](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 202, submit_optimize(parse_body(req)));
         }));

  s.Post("/directions/precompute", guarded([this](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 202, submit_precompute(parse_body(req)));
         }));

  s.Get("/mappers", guarded([this](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, list_mappers());
        }));

  s.Post("/mappers", guarded([this](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 202, submit_train_mapper(parse_body(req)));
         }));

  s.Post(R"(/mappers/([A-Za-z0-9_.-]+)/apply)",
         guarded([this](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 200, apply_mapper_to(req.matches[1], parse_body(req)));
         }));

  s.Get("/jobs", guarded([this](const httplib::Request&, httplib::Response& res) {
          json out = json::array();
          for (const auto& r : jobs_->list()) out.push_back(r.to_json());
          send_json(res, 200, {{"jobs", out}});
        }));

  s.Get(R"(/jobs/([A-Za-z0-9_-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto rec = jobs_->get(std::string(req.matches[1]));
          if (!rec) throw HttpError(404, "not_found", "unknown job " + std::string(req.matches[1]));
          send_json(res, 200, rec->to_json());
        }));

  s.Get(R"(/jobs/([A-Za-z0-9_-]+)/result)", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, job_result(req.matches[1]));
        }));

  s.Post(R"(/jobs/([A-Za-z0-9_-]+)/cancel)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const std::string id = req.matches[1];
           if (!jobs_->get(id)) throw HttpError(404, "not_found", "unknown job " + id);
           if (!jobs_->cancel(id)) throw HttpError(409, "job_finished", "job " + id + " already finished");
           send_json(res, 200, jobs_->get(id)->to_json());
         }));

  s.Get("/artifacts", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, list_artifacts(req.has_param("kind") ? req.get_param_value("kind") : ""));
        }));

  s.Get(R"(/artifacts/([a-z]+)/([A-Za-z0-9_.-]+))",
        guarded([this](const httplib::Request& req, httplib::Response& res) {
          const ArtifactKind kind = artifact_kind_from_string(std::string(req.matches[1]));
          const std::string bytes = store_->get(kind, std::string(req.matches[2]));
          const char* type = kind == ArtifactKind::kImage   ? "image/png"
                             : kind == ArtifactKind::kTrace ? "text/csv"
                                                            : "application/octet-stream";
          res.status = 200;
          res.set_content(bytes, type);
        }));
}

std::shared_ptr<const SessionImage> Service::session(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw HttpError(404, "not_found", "unknown image " + id);
  return it->second;
}

std::shared_ptr<const ChannelStats> Service::latest_stats() const {
  const auto records = store_->find_by_label(ArtifactKind::kStats, backend_fingerprint_);
  if (records.empty()) return nullptr;
  const std::string& key = records.back().key.fingerprint;
  std::lock_guard lock(stats_mutex_);
  if (const auto it = stats_cache_.find(key); it != stats_cache_.end()) return it->second;
  auto stats = std::make_shared<const ChannelStats>(decode_channel_stats(store_->get(ArtifactKind::kStats, key)));
  if (!(*stats->geometry == *backend_.geometry())) {
    throw Error(ErrorCode::kShapeMismatch, "stored channel statistics do not match the backend geometry");
  }
  stats_cache_.emplace(key, stats);
  return stats;
}

json Service::health() const {
  const auto records = store_->find_by_label(ArtifactKind::kStats, backend_fingerprint_);
  json stats = {{"available", !records.empty()}};
  if (!records.empty()) stats["key"] = records.back().key.fingerprint;
  const ImageShape shape = backend_.generator->image_shape();
  return {{"status", "ok"},
          {"backend", {{"kind", backend_.kind}, {"fingerprint", backend_fingerprint_}}},
          {"geometry", backend_.geometry()->to_json()},
          {"image_shape", {{"height", shape.height}, {"width", shape.width}}},
          {"inverter", backend_.has_inverter()},
          {"identity", backend_.has_identity()},
          {"stats", stats}};
}

json Service::ingest_image(const std::string& png) {
  if (png.size() > max_image_bytes_) {
    throw HttpError(413, "payload_too_large",
                    "image exceeds " + std::to_string(max_image_bytes_) + " bytes");
  }
  if (png.empty()) throw HttpError(400, "invalid_argument", "empty image");
  ImageTensor image = decode_png(png);
  if (!backend_.has_inverter()) {
    throw Error(ErrorCode::kInverterUnavailable, "inversion unavailable: the active backend has no inverter");
  }
  const ImageShape shape = backend_.generator->image_shape();
  if (!(image.shape() == shape)) image = resize_bilinear(image, shape);

  WPlusCode inverted = invert_image(backend_, image);
  StyleCode style = wplus_to_style(backend_, inverted);
  auto img = std::make_shared<const SessionImage>(
      SessionImage{"img-" + fingerprint_of(png), png, std::move(inverted), std::move(style)});
  const std::string id = img->id;
  {
    std::unique_lock lock(sessions_mutex_);
    sessions_.emplace(id, std::move(img));
  }
  return {{"image_id", id}, {"inverted", true}, {"width", shape.width}, {"height", shape.height}};
}

json Service::manipulate_global(const json& body) const {
  const bool has_beta = body.contains("beta") && !body["beta"].is_null();
  const bool has_k = body.contains("k") && !body["k"].is_null();
  if (has_beta == has_k) throw HttpError(400, "invalid_argument", "exactly one of 'beta' or 'k' is required");
  const std::string image_id = require_string(body, "image_id");
  PromptSpec spec{require_string(body, "target"), require_string(body, "neutral")};
  const double alpha = number_or(body, "alpha", kFaceDefaults.alpha);
  if (!std::isfinite(alpha)) throw HttpError(400, "invalid_argument", "alpha must be finite");
  if (body.contains("template_bank") && body["template_bank"] != std::string(kDefaultTemplateBankId)) {
    throw HttpError(400, "invalid_argument", "unsupported template bank");
  }

  const auto img = session(image_id);
  const auto stats = latest_stats();
  if (!stats) {
    throw HttpError(409, "stats_missing", "channel statistics have not been computed for this backend",
                    {{"hint", "POST /directions/precompute"}});
  }
  const JointEmbedding delta_t = encode_prompt_pair(backend_, spec, TemplateBank::imagenet80());
  const Vector relevance = channel_relevance(*stats, delta_t);

  json out;
  std::optional<StyleDirection> direction;
  if (has_k) {
    const std::int64_t k = integer_or(body, "k", 0);
    if (k < 1) throw HttpError(400, "invalid_argument", "k must be >= 1");
    const BetaSelection sel = beta_from_k(relevance, static_cast<int>(k));
    direction.emplace(assemble_direction_top_k(stats->geometry, relevance, static_cast<int>(k)));
    out["beta_used"] = sel.beta;
    out["fewer_than_k"] = sel.fewer_than_k;
  } else {
    const double beta = number_or(body, "beta", 0.0);
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw HttpError(400, "invalid_argument", "beta must be >= 0");
    direction.emplace(assemble_direction(stats->geometry, relevance, beta));
    out["beta_used"] = beta;
  }
  const GlobalEdit edit = apply_global(backend_, img->style, *direction, alpha);
  out["image"] = base64_encode(encode_png(edit.image));
  out["active_channels"] = direction->active_count();
  out["alpha"] = alpha;
  out["stats_key"] = stats->key();
  return out;
}

json Service::submit_optimize(const json& body) {
  const auto img = session(require_string(body, "image_id"));
  const std::string prompt = require_string(body, "prompt");
  if (prompt.empty()) throw HttpError(400, "invalid_argument", "prompt must be non-empty");
  OptimizeConfig cfg;
  cfg.lambda_l2 = number_or(body, "lambda_l2", cfg.lambda_l2);
  cfg.lambda_id = number_or(body, "lambda_id", backend_.has_identity() ? cfg.lambda_id : 0.0);
  cfg.steps = static_cast<int>(integer_or(body, "steps", cfg.steps));
  cfg.learning_rate = number_or(body, "learning_rate", cfg.learning_rate);
  cfg.seed = static_cast<std::uint64_t>(integer_or(body, "seed", 0));
  cfg.validate(backend_.has_identity());

  const std::string id = jobs_->submit(JobKind::kOptimize, "", [this, img, prompt, cfg](JobContext& ctx) {
    const OptimizeTrace trace = optimize_latent(backend_, img->inverted, prompt, cfg, progress_of(ctx));
    const std::string png = encode_png(generate_from_wplus(backend_, trace.final_code));
    const std::string csv = trace.to_csv();
    const std::string image_key = fingerprint_of(png);
    const std::string trace_key = fingerprint_of(csv);
    store_->put({ArtifactKind::kImage, image_key, img->id}, png);
    store_->put({ArtifactKind::kTrace, trace_key, img->id}, csv);
    const ObjectiveTerms& last = trace.steps.empty() ? trace.initial : trace.steps.back();
    return JobOutcome{image_key,
                      {{"image_key", image_key},
                       {"trace_key", trace_key},
                       {"initial", terms_json(trace.initial)},
                       {"final", terms_json(last)},
                       {"config", cfg.to_json()}}};
  });
  return {{"job_id", id}, {"state", to_string(jobs_->get(id)->state)}};
}

json Service::submit_precompute(const json& body) {
  ChannelStatsConfig cfg;
  cfg.pair_count = static_cast<int>(integer_or(body, "pair_count", cfg.pair_count));
  cfg.perturb_alpha = number_or(body, "perturb_alpha", cfg.perturb_alpha);
  cfg.sample_count = static_cast<int>(integer_or(body, "sample_count", cfg.sample_count));
  cfg.seed = static_cast<std::uint64_t>(integer_or(body, "seed", 0));
  cfg.validate();
  const std::string key = channel_stats_key(backend_fingerprint_, cfg);

  const std::string id = jobs_->submit(JobKind::kPrecompute, key, [this, cfg, key](JobContext& ctx) {
    if (!store_->find(ArtifactKind::kStats, key)) {
      const ChannelStats stats = precompute_channel_stats(backend_, cfg, progress_of(ctx));
      store_->put({ArtifactKind::kStats, key, backend_fingerprint_}, encode_channel_stats(stats));
    }
    return JobOutcome{key, {{"stats_key", key}, {"config", cfg.to_json()}}};
  });
  return {{"job_id", id}, {"state", to_string(jobs_->get(id)->state)}, {"stats_key", key}};
}

json Service::submit_train_mapper(const json& body) {
  const std::string name = require_string(body, "name");
  if (!valid_name(name)) throw HttpError(400, "invalid_argument", "mapper name must match [A-Za-z0-9_.-]{1,64}");
  const std::string prompt = require_string(body, "prompt");
  if (prompt.empty()) throw HttpError(400, "invalid_argument", "prompt must be non-empty");
  MapperConfig cfg = MapperConfig::from_json(body.value("config", json::object()));
  if (!body.contains("config") || !body["config"].contains("lambda_id")) {
    if (!backend_.has_identity()) cfg.lambda_id = 0.0;
  }
  cfg.validate();
  if (cfg.lambda_id > 0.0 && !backend_.has_identity()) {
    throw Error(ErrorCode::kIdentityUnavailable, "identity loss requested but the backend has no identity embedder");
  }
  const std::int64_t latent_count = integer_or(body, "latent_count", 32);
  if (latent_count < 1) throw HttpError(400, "invalid_argument", "latent_count must be >= 1");
  const auto latent_seed = static_cast<std::uint64_t>(integer_or(body, "latent_seed", 0));
  // Uploaded images, when given, replace prior samples as training latents.
  std::vector<WPlusCode> inverted;
  if (body.contains("image_ids")) {
    if (!body["image_ids"].is_array() || body["image_ids"].empty()) {
      throw HttpError(400, "invalid_argument", "image_ids must be a non-empty array");
    }
    for (const auto& v : body["image_ids"]) {
      if (!v.is_string()) throw HttpError(400, "invalid_argument", "image_ids must hold strings");
      inverted.push_back(session(v.get<std::string>())->inverted);
    }
  }

  const std::string id = jobs_->submit(
      JobKind::kTrainMapper, "", [this, name, prompt, cfg, latent_count, latent_seed, inverted](JobContext& ctx) {
        const auto latents = inverted.empty()
                                 ? sample_training_latents(backend_, static_cast<int>(latent_count), latent_seed)
                                 : inverted;
        const MapperModel model = train_mapper(backend_, latents, prompt, cfg, progress_of(ctx));
        const std::string bytes = encode_checkpoint(model);
        const std::string key = fingerprint_of(bytes);
        store_->put({ArtifactKind::kMapper, key, name}, bytes);
        json result = {{"name", name}, {"mapper_key", key}, {"prompt", prompt}, {"steps", model.steps_trained}};
        if (model.initial_mean_loss) result["initial_mean_loss"] = *model.initial_mean_loss;
        if (model.final_mean_loss) result["final_mean_loss"] = *model.final_mean_loss;
        return JobOutcome{key, result};
      });
  return {{"job_id", id}, {"state", to_string(jobs_->get(id)->state)}};
}

json Service::list_mappers() const {
  // Latest checkpoint per name.
  std::map<std::string, ArtifactRecord> latest;
  for (const auto& r : store_->list(ArtifactKind::kMapper)) latest.insert_or_assign(r.key.label, r);
  json out = json::array();
  for (const auto& [name, rec] : latest) {
    json entry = {{"name", name}, {"key", rec.key.fingerprint}, {"created_at", rec.created_at}};
    try {
      const MapperModel model = decode_checkpoint(store_->get(ArtifactKind::kMapper, rec.key.fingerprint));
      entry["prompt"] = model.prompt;
      entry["steps_trained"] = model.steps_trained;
      entry["compatible"] = *model.geometry() == *backend_.geometry();
    } catch (const Error& e) {
      entry["compatible"] = false;
      entry["error"] = e.what();
    }
    out.push_back(std::move(entry));
  }
  return {{"mappers", out}};
}

json Service::apply_mapper_to(const std::string& name, const json& body) const {
  const auto records = store_->find_by_label(ArtifactKind::kMapper, name);
  if (records.empty()) throw HttpError(404, "not_found", "unknown mapper " + name);
  const MapperModel model = decode_checkpoint(store_->get(ArtifactKind::kMapper, records.back().key.fingerprint));
  if (!(*model.geometry() == *backend_.geometry())) {
    throw HttpError(409, "geometry_mismatch", "mapper " + name + " was trained for a different latent geometry");
  }
  const auto img = session(require_string(body, "image_id"));
  const MapperApplication applied = apply_mapper(backend_, model, img->inverted);
  return {{"image", base64_encode(encode_png(applied.image))},
          {"name", name},
          {"mapper_key", records.back().key.fingerprint},
          {"prompt", model.prompt}};
}

json Service::job_result(const std::string& id) const {
  const auto rec = jobs_->get(id);
  if (!rec) throw HttpError(404, "not_found", "unknown job " + id);
  if (rec->state == JobState::kFailed) {
    throw HttpError(409, "job_failed", "job " + id + " failed: " + rec->error_message,
                    {{"job_error", rec->error_code}});
  }
  if (rec->state != JobState::kDone) throw HttpError(409, "job_pending", "job " + id + " has not finished");
  json out = rec->result;
  out["job_id"] = id;
  out["kind"] = to_string(rec->kind);
  if (rec->kind == JobKind::kOptimize) {
    out["image"] = base64_encode(store_->get(ArtifactKind::kImage, rec->result.at("image_key").get<std::string>()));
  }
  return out;
}

json Service::list_artifacts(const std::string& kind) const {
  json out = json::array();
  if (kind.empty()) {
    for (ArtifactKind k : {ArtifactKind::kStats, ArtifactKind::kMapper, ArtifactKind::kTrace, ArtifactKind::kImage}) {
      for (const auto& r : store_->list(k)) out.push_back(r.to_json());
    }
  } else {
    for (const auto& r : store_->list(artifact_kind_from_string(kind))) out.push_back(r.to_json());
  }
  return {{"artifacts", out}};
}

}  // namespace latentsteer
