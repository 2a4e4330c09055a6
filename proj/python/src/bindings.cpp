#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "latentsteer/backend_config.hpp"
#include "latentsteer/errors.hpp"
#include "latentsteer/global_directions.hpp"
#include "latentsteer/image.hpp"
#include "latentsteer/latent_mapper.hpp"
#include "latentsteer/latent_optimizer.hpp"
#include "latentsteer/model_gateway.hpp"
#include "latentsteer/template_bank.hpp"

namespace py = pybind11;
using namespace latentsteer;
using json = nlohmann::json;

namespace {

py::array_t<double> image_to_array(const ImageTensor& image) {
  const ImageShape s = image.shape();
  py::array_t<double> out({s.height, s.width, 3});
  std::copy(image.pixels().data(), image.pixels().data() + image.pixels().size(), out.mutable_data());
  return out;
}

ImageTensor array_to_image(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) {
    throw Error(ErrorCode::kShapeMismatch, "image must have shape (height, width, 3)");
  }
  const ImageShape s{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1))};
  return ImageTensor(s, Eigen::Map<const Vector>(a.data(), s.size()));
}

json parse_json(const std::string& text) {
  try {
    return text.empty() ? json::object() : json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("invalid JSON: ") + e.what());
  }
}

py::dict terms_dict(const ObjectiveTerms& t) {
  py::dict d;
  d["total"] = t.total;
  d["clip"] = t.clip;
  d["l2"] = t.l2;
  d["id"] = t.id;
  return d;
}

L2Mode parse_l2_mode(const std::string& mode) {
  if (mode == "norm") return L2Mode::kNorm;
  if (mode == "squared") return L2Mode::kSquared;
  throw Error(ErrorCode::kInvalidArgument, "l2_mode must be 'norm' or 'squared'");
}

ProgressFn wrap_progress(const std::optional<py::function>& fn) {
  if (!fn) return {};
  return [fn](int done, int total) { return py::cast<bool>((*fn)(done, total)); };
}

// Python-side model components. Each adapter calls back into the interpreter;
// the module never releases the GIL, so no extra locking is needed.
class PyGenerator final : public Generator {
 public:
  explicit PyGenerator(py::object obj)
      : obj_(std::move(obj)),
        geometry_(share(LatentGeometry::from_json(parse_json(py::cast<std::string>(obj_.attr("geometry_json")()))))) {
    const auto hw = py::cast<std::pair<int, int>>(obj_.attr("image_shape")());
    shape_ = {hw.first, hw.second};
  }
  const GeometryPtr& geometry() const override { return geometry_; }
  ImageShape image_shape() const override { return shape_; }
  StyleCode to_style(const WPlusCode& w) const override {
    return StyleCode(geometry_, py::cast<Vector>(obj_.attr("to_style")(w.values())));
  }
  ImageTensor synthesize(const StyleCode& s) const override {
    return ImageTensor::clamped(shape_, py::cast<Vector>(obj_.attr("synthesize")(s.values())));
  }
  Vector synthesize_vjp(const StyleCode& s, const Vector& cotangent) const override {
    return py::cast<Vector>(obj_.attr("synthesize_vjp")(s.values(), cotangent));
  }
  Vector to_style_vjp(const WPlusCode& w, const Vector& cotangent) const override {
    return py::cast<Vector>(obj_.attr("to_style_vjp")(w.values(), cotangent));
  }
  WPlusCode sample_wplus(Rng& rng) const override {
    return WPlusCode(geometry_, py::cast<RowMatrix>(obj_.attr("sample_wplus")(rng())));
  }
  std::string fingerprint() const override { return py::cast<std::string>(obj_.attr("fingerprint")()); }

 private:
  py::object obj_;
  GeometryPtr geometry_;
  ImageShape shape_;
};

class PyImageEncoder final : public ImageEncoder {
 public:
  explicit PyImageEncoder(py::object obj) : obj_(std::move(obj)) {}
  int embed_dim() const override { return py::cast<int>(obj_.attr("embed_dim")()); }
  JointEmbedding embed(const ImageTensor& image) const override {
    return JointEmbedding::unit(py::cast<Vector>(obj_.attr("embed")(image_to_array(image))));
  }
  Vector embed_vjp(const ImageTensor& image, const Vector& cotangent) const override {
    return py::cast<Vector>(obj_.attr("embed_vjp")(image_to_array(image), cotangent));
  }
  std::string fingerprint() const override { return py::cast<std::string>(obj_.attr("fingerprint")()); }

 private:
  py::object obj_;
};

class PyTextEncoder final : public TextEncoder {
 public:
  explicit PyTextEncoder(py::object obj) : obj_(std::move(obj)) {}
  int embed_dim() const override { return py::cast<int>(obj_.attr("embed_dim")()); }
  JointEmbedding embed(std::string_view sentence) const override {
    return JointEmbedding::unit(py::cast<Vector>(obj_.attr("embed")(std::string(sentence))));
  }
  std::string fingerprint() const override { return py::cast<std::string>(obj_.attr("fingerprint")()); }

 private:
  py::object obj_;
};

class PyInverter final : public Inverter {
 public:
  PyInverter(py::object obj, GeometryPtr geometry) : obj_(std::move(obj)), geometry_(std::move(geometry)) {}
  WPlusCode invert(const ImageTensor& image) const override {
    return WPlusCode(geometry_, py::cast<RowMatrix>(obj_.attr("invert")(image_to_array(image))));
  }

 private:
  py::object obj_;
  GeometryPtr geometry_;
};

class Backend {
 public:
  explicit Backend(BackendBundle bundle) : b(std::move(bundle)) { b.validate(); }

  WPlusCode code(const RowMatrix& w) const { return WPlusCode(b.geometry(), w); }
  StyleCode style(const Vector& s) const { return StyleCode(b.geometry(), s); }

  BackendBundle b;
};

struct Stats {
  ChannelStats stats;
};

struct Mapper {
  MapperModel model;
};

std::vector<WPlusCode> codes_of(const Backend& be, const std::vector<RowMatrix>& latents) {
  std::vector<WPlusCode> out;
  out.reserve(latents.size());
  for (const auto& w : latents) out.push_back(be.code(w));
  return out;
}

JointEmbedding prompt_delta(const Backend& be, const std::string& target, const std::string& neutral,
                            const std::string& bank) {
  PromptSpec spec{target, neutral, bank};
  spec.validate();
  return encode_prompt_pair(be.b, spec, TemplateBank::resolve(bank));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Text-driven latent manipulation core";

  static py::exception<Error> error_type(m, "LatentsteerError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = py::reinterpret_borrow<py::object>(error_type)(e.what());
      inst.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), inst.ptr());
    }
  });

  m.attr("DEFAULT_TEMPLATE_BANK") = std::string(kDefaultTemplateBankId);
  m.attr("DEFAULT_PAIR_COUNT") = kDefaultPairCount;
  m.attr("DEFAULT_PERTURB_ALPHA") = kDefaultPerturbAlpha;

  m.def("encode_png", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    return py::bytes(encode_png(array_to_image(a)));
  });
  m.def("decode_png", [](const py::bytes& data) { return image_to_array(decode_png(std::string(data))); });
  m.def("template_bank", [](const std::string& id) { return TemplateBank::resolve(id).templates(); },
        py::arg("id_or_path") = std::string(kDefaultTemplateBankId));

  py::class_<Backend>(m, "Backend")
      .def_static("from_json",
                  [](const std::string& config, const std::string& base_dir) {
                    return Backend(load_backend(parse_json(config), base_dir));
                  },
                  py::arg("config") = "{}", py::arg("base_dir") = "")
      .def_static("from_file", [](const std::string& path) { return Backend(load_backend_file(path)); })
      .def_static("from_python",
                  [](py::object generator, py::object image_encoder, py::object text_encoder,
                     py::object identity_encoder, py::object inverter) {
                    BackendBundle bundle;
                    bundle.kind = "python";
                    auto gen = std::make_shared<PyGenerator>(generator);
                    bundle.generator = gen;
                    bundle.image_encoder = std::make_shared<PyImageEncoder>(image_encoder);
                    bundle.text_encoder = std::make_shared<PyTextEncoder>(text_encoder);
                    if (!identity_encoder.is_none()) {
                      bundle.identity_encoder = std::make_shared<PyImageEncoder>(identity_encoder);
                    }
                    if (!inverter.is_none()) bundle.inverter = std::make_shared<PyInverter>(inverter, gen->geometry());
                    return Backend(std::move(bundle));
                  },
                  py::arg("generator"), py::arg("image_encoder"), py::arg("text_encoder"),
                  py::arg("identity_encoder") = py::none(), py::arg("inverter") = py::none())
      .def_property_readonly("kind", [](const Backend& be) { return be.b.kind; })
      .def_property_readonly("fingerprint", [](const Backend& be) { return be.b.fingerprint(); })
      .def_property_readonly("geometry_json", [](const Backend& be) { return be.b.geometry()->to_json().dump(); })
      .def_property_readonly("wplus_shape",
                             [](const Backend& be) {
                               return py::make_tuple(be.b.geometry()->num_layers(), be.b.geometry()->latent_dim());
                             })
      .def_property_readonly("style_channels", [](const Backend& be) { return be.b.geometry()->total_style_channels(); })
      .def_property_readonly("image_shape",
                             [](const Backend& be) {
                               const ImageShape s = be.b.generator->image_shape();
                               return py::make_tuple(s.height, s.width, 3);
                             })
      .def_property_readonly("has_identity", [](const Backend& be) { return be.b.has_identity(); })
      .def_property_readonly("has_inverter", [](const Backend& be) { return be.b.has_inverter(); })
      .def("sample_wplus",
           [](const Backend& be, std::uint64_t seed) {
             Rng rng(seed);
             return be.b.generator->sample_wplus(rng).values();
           },
           py::arg("seed") = 0)
      .def("to_style", [](const Backend& be, const RowMatrix& w) { return wplus_to_style(be.b, be.code(w)).values(); })
      .def("render", [](const Backend& be, const RowMatrix& w) { return image_to_array(generate_from_wplus(be.b, be.code(w))); })
      .def("render_style",
           [](const Backend& be, const Vector& s) { return image_to_array(generate_from_style(be.b, be.style(s))); })
      .def("embed_image",
           [](const Backend& be, const py::array_t<double, py::array::c_style | py::array::forcecast>& image) {
             return embed_image(be.b, array_to_image(image)).values();
           })
      .def("embed_text", [](const Backend& be, const std::string& text) { return embed_text(be.b, text).values(); })
      .def("clip_distance",
           [](const Backend& be, const py::array_t<double, py::array::c_style | py::array::forcecast>& image,
              const std::string& text) { return clip_distance(be.b, array_to_image(image), text); })
      .def("identity_loss",
           [](const Backend& be, const RowMatrix& source, const RowMatrix& candidate) {
             return identity_loss(be.b, be.code(source), be.code(candidate));
           })
      .def("invert",
           [](const Backend& be, const py::array_t<double, py::array::c_style | py::array::forcecast>& image) {
             return invert_image(be.b, array_to_image(image)).values();
           })
      .def("objective",
           [](const Backend& be, const RowMatrix& w, const RowMatrix& source, const std::string& prompt,
              double lambda_l2, double lambda_id, const std::string& l2_mode) {
             OptimizeConfig cfg;
             cfg.lambda_l2 = lambda_l2;
             cfg.lambda_id = lambda_id;
             cfg.l2_mode = parse_l2_mode(l2_mode);
             return terms_dict(objective(be.b, be.code(w), be.code(source), prompt, cfg));
           },
           py::arg("w"), py::arg("source"), py::arg("prompt"), py::arg("lambda_l2") = 0.008,
           py::arg("lambda_id") = 0.005, py::arg("l2_mode") = "norm")
      .def("optimize",
           [](const Backend& be, const RowMatrix& source, const std::string& prompt, double lambda_l2,
              double lambda_id, int steps, double learning_rate, std::uint64_t seed, const std::string& l2_mode,
              bool adam, const std::optional<py::function>& progress) {
             OptimizeConfig cfg;
             cfg.lambda_l2 = lambda_l2;
             cfg.lambda_id = lambda_id;
             cfg.steps = steps;
             cfg.learning_rate = learning_rate;
             cfg.seed = seed;
             cfg.l2_mode = parse_l2_mode(l2_mode);
             cfg.step_rule = adam ? StepRule::kAdam : StepRule::kGradientDescent;
             const OptimizeTrace t = optimize_latent(be.b, be.code(source), prompt, cfg, wrap_progress(progress));
             py::list trace;
             trace.append(terms_dict(t.initial));
             for (const auto& s : t.steps) trace.append(terms_dict(s));
             py::dict out;
             out["code"] = t.final_code.values();
             out["image"] = image_to_array(generate_from_wplus(be.b, t.final_code));
             out["trace"] = trace;
             out["trace_csv"] = t.to_csv();
             return out;
           },
           py::arg("source"), py::arg("prompt"), py::arg("lambda_l2") = 0.008, py::arg("lambda_id") = 0.005,
           py::arg("steps") = 250, py::arg("learning_rate") = 0.1, py::arg("seed") = 0,
           py::arg("l2_mode") = "norm", py::arg("adam") = false, py::arg("progress") = py::none())
      .def("gradient_check",
           [](const Backend& be, const RowMatrix& w, const RowMatrix& source, const std::string& prompt,
              double lambda_l2, double lambda_id, const std::string& l2_mode, int probes) {
             OptimizeConfig cfg;
             cfg.lambda_l2 = lambda_l2;
             cfg.lambda_id = lambda_id;
             cfg.l2_mode = parse_l2_mode(l2_mode);
             return gradient_check(be.b, be.code(w), be.code(source), prompt, cfg, probes);
           },
           py::arg("w"), py::arg("source"), py::arg("prompt"), py::arg("lambda_l2") = 0.008,
           py::arg("lambda_id") = 0.005, py::arg("l2_mode") = "norm", py::arg("probes") = 32)
      .def("precompute_stats",
           [](const Backend& be, int sample_count, int pair_count, double perturb_alpha, std::uint64_t seed,
              const std::optional<py::function>& progress) {
             ChannelStatsConfig cfg;
             cfg.sample_count = sample_count;
             cfg.pair_count = pair_count;
             cfg.perturb_alpha = perturb_alpha;
             cfg.seed = seed;
             return Stats{precompute_channel_stats(be.b, cfg, wrap_progress(progress))};
           },
           py::arg("sample_count") = kDefaultStyleSampleCount, py::arg("pair_count") = kDefaultPairCount,
           py::arg("perturb_alpha") = kDefaultPerturbAlpha, py::arg("seed") = 0, py::arg("progress") = py::none())
      .def("prompt_delta",
           [](const Backend& be, const std::string& target, const std::string& neutral, const std::string& bank) {
             return prompt_delta(be, target, neutral, bank).values();
           },
           py::arg("target"), py::arg("neutral"), py::arg("template_bank") = std::string(kDefaultTemplateBankId))
      .def("relevance",
           [](const Backend& be, const Stats& st, const std::string& target, const std::string& neutral,
              const std::string& bank) { return channel_relevance(st.stats, prompt_delta(be, target, neutral, bank)); },
           py::arg("stats"), py::arg("target"), py::arg("neutral"),
           py::arg("template_bank") = std::string(kDefaultTemplateBankId))
      .def("direction",
           [](const Backend& be, const Stats& st, const std::string& target, const std::string& neutral,
              std::optional<double> beta, std::optional<int> k, const std::string& bank) {
             if (beta.has_value() == k.has_value()) {
               throw Error(ErrorCode::kInvalidArgument, "give exactly one of beta or k");
             }
             const Vector r = channel_relevance(st.stats, prompt_delta(be, target, neutral, bank));
             const StyleDirection d = beta ? assemble_direction(be.b.geometry(), r, *beta)
                                           : assemble_direction_top_k(be.b.geometry(), r, *k);
             return d.values();
           },
           py::arg("stats"), py::arg("target"), py::arg("neutral"), py::arg("beta") = py::none(),
           py::arg("k") = py::none(), py::arg("template_bank") = std::string(kDefaultTemplateBankId))
      .def("apply_global",
           [](const Backend& be, const Vector& s, const Vector& direction, double alpha) {
             const GlobalEdit e = apply_global(be.b, be.style(s), StyleDirection(be.b.geometry(), direction), alpha);
             return py::make_tuple(e.code.values(), image_to_array(e.image));
           },
           py::arg("style"), py::arg("direction"), py::arg("alpha"))
      .def("sample_training_latents",
           [](const Backend& be, int count, std::uint64_t seed) {
             std::vector<RowMatrix> out;
             for (const auto& w : sample_training_latents(be.b, count, seed)) out.push_back(w.values());
             return out;
           },
           py::arg("count"), py::arg("seed") = 0)
      .def("train_mapper",
           [](const Backend& be, const std::string& prompt, const std::vector<RowMatrix>& latents,
              const std::string& config_json, const std::optional<py::function>& progress) {
             const auto codes = codes_of(be, latents);
             return Mapper{train_mapper(be.b, codes, prompt, MapperConfig::from_json(parse_json(config_json)),
                                        wrap_progress(progress))};
           },
           py::arg("prompt"), py::arg("latents"), py::arg("config_json") = "{}", py::arg("progress") = py::none())
      .def("apply_mapper",
           [](const Backend& be, const Mapper& mp, const RowMatrix& w) {
             const MapperApplication a = apply_mapper(be.b, mp.model, be.code(w));
             return py::make_tuple(a.code.values(), image_to_array(a.image));
           })
      .def("mapper_loss",
           [](const Backend& be, const Mapper& mp, const RowMatrix& w, const std::string& prompt) {
             return terms_dict(mapper_loss(be.b, mp.model, be.code(w), prompt));
           });

  py::class_<Stats>(m, "ChannelStats")
      .def_property_readonly("key", [](const Stats& s) { return s.stats.key(); })
      .def_property_readonly("deltas", [](const Stats& s) { return s.stats.deltas; })
      .def_property_readonly("channel_std", [](const Stats& s) { return s.stats.channel_std; })
      .def_property_readonly("inert_channels", [](const Stats& s) { return s.stats.inert_channels; })
      .def_property_readonly("pair_count", [](const Stats& s) { return s.stats.sample_pairs; })
      .def_property_readonly("perturb_alpha", [](const Stats& s) { return s.stats.perturb_alpha; })
      .def("to_bytes", [](const Stats& s) { return py::bytes(encode_channel_stats(s.stats)); })
      .def_static("from_bytes", [](const py::bytes& b) { return Stats{decode_channel_stats(std::string(b))}; });

  py::class_<Mapper>(m, "Mapper")
      .def_property_readonly("prompt", [](const Mapper& mp) { return mp.model.prompt; })
      .def_property_readonly("config_json", [](const Mapper& mp) { return mp.model.config().to_json().dump(); })
      .def_property_readonly("parameter_count", [](const Mapper& mp) { return mp.model.parameter_count(); })
      .def_property_readonly("steps_trained", [](const Mapper& mp) { return mp.model.steps_trained; })
      .def_property_readonly("loss_history", [](const Mapper& mp) { return mp.model.loss_history; })
      .def("residual",
           [](const Mapper& mp, const RowMatrix& w) {
             return mapper_forward(mp.model, WPlusCode(mp.model.geometry(), w)).values();
           })
      .def("similarity",
           [](const Mapper& mp, const std::vector<RowMatrix>& latents) {
             std::vector<WPlusCode> codes;
             for (const auto& w : latents) codes.emplace_back(mp.model.geometry(), w);
             const SimilarityReport r = direction_similarity_report(mp.model, codes);
             py::dict d;
             d["mean"] = r.mean;
             d["std"] = r.stddev;
             d["pairs"] = r.pair_count;
             d["excluded_pairs"] = r.excluded_pairs;
             return d;
           })
      .def("to_bytes", [](const Mapper& mp) { return py::bytes(encode_checkpoint(mp.model)); })
      .def_static("from_bytes", [](const py::bytes& b) { return Mapper{decode_checkpoint(std::string(b))}; });
}
