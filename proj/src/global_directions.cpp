#include "latentsteer/global_directions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "latentsteer/binary_format.hpp"
#include "latentsteer/hashing.hpp"

namespace latentsteer {

namespace {

constexpr const char* kStatsFormat = "latentsteer-channel-stats";
constexpr int kStatsVersion = 1;

void require_geometry(const GeometryPtr& a, const GeometryPtr& b, const char* what) {
  if (!a || !b || (a != b && !(*a == *b))) {
    throw Error(ErrorCode::kShapeMismatch, std::string(what) + ": geometry mismatch");
  }
}

/// Channel order by |R| descending, index ascending.
std::vector<int> rank_channels(const Vector& relevance) {
  std::vector<int> order(static_cast<std::size_t>(relevance.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(relevance[a]) > std::abs(relevance[b]);
  });
  return order;
}

}  // namespace

void PromptSpec::validate() const {
  if (target_text.empty() || neutral_text.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "target and neutral text must both be non-empty");
  }
  if (target_text == neutral_text) {
    throw Error(ErrorCode::kDegeneratePrompt, "degenerate prompt: target and neutral text are identical");
  }
}

JointEmbedding encode_prompt_pair(const BackendBundle& backend, const PromptSpec& spec,
                                  const TemplateBank& bank) {
  spec.validate();
  const auto class_mean = [&](std::string_view subject) {
    Vector sum = Vector::Zero(backend.text_encoder->embed_dim());
    for (std::size_t i = 0; i < bank.size(); ++i) {
      sum += embed_text(backend, bank.render(i, subject)).values();
    }
    return Vector(sum / static_cast<double>(bank.size()));
  };
  const Vector diff = class_mean(spec.target_text) - class_mean(spec.neutral_text);
  if (!(diff.norm() > 1e-12)) {
    throw Error(ErrorCode::kDegeneratePrompt,
                "degenerate prompt: target and neutral classes embed identically");
  }
  return JointEmbedding::unit(diff);
}

void ChannelStatsConfig::validate() const {
  if (sample_count < 2) throw Error(ErrorCode::kInvalidArgument, "sample_count must be >= 2");
  if (pair_count < 1) throw Error(ErrorCode::kInvalidArgument, "pair_count must be >= 1");
  if (!(perturb_alpha > 0.0) || !std::isfinite(perturb_alpha)) {
    throw Error(ErrorCode::kInvalidArgument, "perturb_alpha must be positive");
  }
}

nlohmann::json ChannelStatsConfig::to_json() const {
  return {{"sample_count", sample_count},
          {"pair_count", pair_count},
          {"perturb_alpha", perturb_alpha},
          {"seed", seed}};
}

std::string channel_stats_key(std::string_view backend_fingerprint, const ChannelStatsConfig& config) {
  return fingerprint_of(std::string(backend_fingerprint) + "|" + config.to_json().dump());
}

std::string ChannelStats::key() const {
  return channel_stats_key(backend_fingerprint,
                           {sample_count, sample_pairs, perturb_alpha, seed});
}

ChannelStats precompute_channel_stats(const BackendBundle& backend, const ChannelStatsConfig& config,
                                      const ProgressFn& progress) {
  config.validate();
  backend.validate();
  const Generator& generator = *backend.generator;
  const GeometryPtr& geometry = backend.geometry();
  const int channels = geometry->total_style_channels();
  const int embed_dim = backend.image_encoder->embed_dim();

  Rng rng(config.seed);
  const int draws = std::max(config.sample_count, config.pair_count);
  std::vector<Vector> codes;
  codes.reserve(static_cast<std::size_t>(draws));
  for (int i = 0; i < draws; ++i) {
    codes.push_back(generator.to_style(generator.sample_wplus(rng)).values());
  }

  ChannelStats stats;
  stats.geometry = geometry;
  stats.deltas = RowMatrix::Zero(channels, embed_dim);
  stats.channel_std = Vector::Zero(channels);
  stats.sample_pairs = config.pair_count;
  stats.perturb_alpha = config.perturb_alpha;
  stats.sample_count = config.sample_count;
  stats.backend_fingerprint = backend.fingerprint();
  stats.seed = config.seed;

  for (int c = 0; c < channels; ++c) {
    double lo = codes[0][c];
    double hi = lo;
    double mean = 0.0;
    for (int i = 0; i < config.sample_count; ++i) {
      lo = std::min(lo, codes[i][c]);
      hi = std::max(hi, codes[i][c]);
      mean += codes[i][c];
    }
    mean /= config.sample_count;
    double var = 0.0;
    for (int i = 0; i < config.sample_count; ++i) var += (codes[i][c] - mean) * (codes[i][c] - mean);
    stats.channel_std[c] = lo == hi ? 0.0 : std::sqrt(var / config.sample_count);
  }

  for (int c = 0; c < channels; ++c) {
    const double step = config.perturb_alpha * stats.channel_std[c];
    if (step == 0.0) {
      stats.inert_channels.push_back(c);
    } else {
      Vector acc = Vector::Zero(embed_dim);
      for (int p = 0; p < config.pair_count; ++p) {
        Vector plus = codes[p];
        Vector minus = codes[p];
        plus[c] += step;
        minus[c] -= step;
        const Vector diff =
            backend.image_encoder->embed(generator.synthesize(StyleCode(geometry, std::move(plus)))).values() -
            backend.image_encoder->embed(generator.synthesize(StyleCode(geometry, std::move(minus)))).values();
        const double norm = diff.norm();
        if (norm > 0.0) acc += diff / norm;
      }
      stats.deltas.row(c) = acc / static_cast<double>(config.pair_count);
    }
    if (progress && !progress(c + 1, channels)) {
      throw Error(ErrorCode::kCancelled, "channel statistics cancelled");
    }
  }
  return stats;
}

Vector channel_relevance(const ChannelStats& stats, const JointEmbedding& delta_t) {
  if (delta_t.dim() != stats.embed_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "channel_relevance: embedding dimension mismatch");
  }
  return stats.deltas * delta_t.values();
}

StyleDirection assemble_direction(GeometryPtr geometry, const Vector& relevance, double beta) {
  if (!(beta >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "beta must be non-negative");
  Vector values = relevance;
  for (Eigen::Index c = 0; c < values.size(); ++c) {
    if (!(std::abs(values[c]) >= beta)) values[c] = 0.0;
  }
  return StyleDirection(std::move(geometry), std::move(values));
}

StyleDirection assemble_direction(const ChannelStats& stats, const JointEmbedding& delta_t, double beta) {
  return assemble_direction(stats.geometry, channel_relevance(stats, delta_t), beta);
}

BetaSelection beta_from_k(const Vector& relevance, int k) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  const std::vector<int> order = rank_channels(relevance);
  int nonzero = 0;
  for (int c : order) {
    if (relevance[c] != 0.0) ++nonzero;
  }
  BetaSelection sel;
  if (nonzero == 0) {
    sel.fewer_than_k = true;
    return sel;
  }
  if (k > nonzero) {
    sel.fewer_than_k = true;
    sel.active = nonzero;
    sel.beta = std::abs(relevance[order[nonzero - 1]]);
    return sel;
  }
  sel.active = k;
  sel.beta = std::abs(relevance[order[k - 1]]);
  return sel;
}

BetaSelection beta_from_k(const ChannelStats& stats, const JointEmbedding& delta_t, int k) {
  return beta_from_k(channel_relevance(stats, delta_t), k);
}

StyleDirection assemble_direction_top_k(GeometryPtr geometry, const Vector& relevance, int k) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  const std::vector<int> order = rank_channels(relevance);
  Vector values = Vector::Zero(relevance.size());
  for (int i = 0; i < std::min<int>(k, static_cast<int>(order.size())); ++i) {
    values[order[i]] = relevance[order[i]];
  }
  return StyleDirection(std::move(geometry), std::move(values));
}

GlobalEdit apply_global(const BackendBundle& backend, const StyleCode& s,
                        const StyleDirection& direction, double alpha) {
  require_geometry(s.geometry(), backend.geometry(), "apply_global");
  StyleCode edited = add_direction(s, direction, alpha);
  ImageTensor image = generate_from_style(backend, edited);
  return {std::move(edited), std::move(image)};
}

std::vector<ChannelReportEntry> direction_report(const StyleDirection& direction) {
  const LatentGeometry& g = *direction.geometry();
  std::vector<ChannelReportEntry> out;
  int layer = 0;
  for (int c : direction.active_channels()) {
    while (layer + 1 < static_cast<int>(g.style_channel_counts().size()) && g.style_offset(layer + 1) <= c) {
      ++layer;
    }
    out.push_back({c, layer, c - g.style_offset(layer), direction.values()[c]});
  }
  std::stable_sort(out.begin(), out.end(), [](const ChannelReportEntry& a, const ChannelReportEntry& b) {
    return std::abs(a.relevance) > std::abs(b.relevance);
  });
  return out;
}

std::string encode_channel_stats(const ChannelStats& stats) {
  BinaryDocument doc;
  doc.header = {{"format", kStatsFormat},
                {"version", kStatsVersion},
                {"fingerprint", stats.backend_fingerprint},
                {"seed", stats.seed},
                {"pair_count", stats.sample_pairs},
                {"perturb_alpha", stats.perturb_alpha},
                {"sample_count", stats.sample_count},
                {"channel_count", stats.channel_count()},
                {"embed_dim", stats.embed_dim()},
                {"geometry", stats.geometry->to_json()},
                {"inert_channels", stats.inert_channels}};
  doc.blocks.push_back(Eigen::Map<const Vector>(stats.deltas.data(), stats.deltas.size()));
  doc.blocks.push_back(stats.channel_std);
  return doc.encode();
}

ChannelStats decode_channel_stats(std::string_view bytes) {
  const BinaryDocument doc = BinaryDocument::decode(bytes);
  try {
    if (doc.header.at("format") != kStatsFormat) throw Error(ErrorCode::kFormat, "not a channel-stats file");
    if (doc.header.at("version").get<int>() != kStatsVersion) {
      throw Error(ErrorCode::kFormat, "unsupported channel-stats version");
    }
    ChannelStats stats;
    stats.geometry = share(LatentGeometry::from_json(doc.header.at("geometry")));
    const int channels = doc.header.at("channel_count").get<int>();
    const int embed_dim = doc.header.at("embed_dim").get<int>();
    if (channels != stats.geometry->total_style_channels() || doc.blocks.size() != 2 ||
        doc.blocks[0].size() != static_cast<Eigen::Index>(channels) * embed_dim ||
        doc.blocks[1].size() != channels) {
      throw Error(ErrorCode::kFormat, "channel-stats blocks do not match the header");
    }
    stats.deltas = Eigen::Map<const RowMatrix>(doc.blocks[0].data(), channels, embed_dim);
    stats.channel_std = doc.blocks[1];
    stats.inert_channels = doc.header.at("inert_channels").get<std::vector<int>>();
    stats.sample_pairs = doc.header.at("pair_count").get<int>();
    stats.perturb_alpha = doc.header.at("perturb_alpha").get<double>();
    stats.sample_count = doc.header.at("sample_count").get<int>();
    stats.backend_fingerprint = doc.header.at("fingerprint").get<std::string>();
    stats.seed = doc.header.at("seed").get<std::uint64_t>();
    return stats;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("channel-stats header: ") + e.what());
  }
}

}  // namespace latentsteer
