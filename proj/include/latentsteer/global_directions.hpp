#pragma once

// Input-agnostic text-driven directions in style space.
//
// A text pair (target, neutral) is embedded through a template bank and
// turned into a unit direction delta_t. One-time preprocessing measures, for
// every style channel c, the mean unit image-embedding change delta_i_c caused
// by perturbing that channel by +/- alpha * sigma_c. The relevance of channel
// c is R_c = <delta_i_c, delta_t>; channels with |R_c| >= beta form the
// direction.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "latentsteer/latent_optimizer.hpp"
#include "latentsteer/model_gateway.hpp"
#include "latentsteer/template_bank.hpp"

namespace latentsteer {

inline constexpr int kDefaultPairCount = 100;
inline constexpr double kDefaultPerturbAlpha = 5.0;
inline constexpr int kDefaultStyleSampleCount = 1000;

/// Initial strength and active-channel count for interactive editing.
struct InteractiveDefaults {
  std::string_view domain;
  double alpha;
  int k;
};
inline constexpr InteractiveDefaults kFaceDefaults{"face", 3.0, 20};
inline constexpr InteractiveDefaults kCarDefaults{"car", 3.0, 100};
inline constexpr InteractiveDefaults kCatDefaults{"cat", 7.0, 100};

/// Disentanglement thresholds of the reference grey-hair and gender sweeps.
inline constexpr double kGreyHairBetas[] = {0.16, 0.14, 0.11};
inline constexpr double kGreyHairAlphaRange[] = {-6.0, 6.0};
inline constexpr double kGenderBetas[] = {0.40, 0.30, 0.20};
inline constexpr double kGenderAlphaRange[] = {-2.0, 2.0};

struct PromptSpec {
  std::string target_text;
  std::string neutral_text;
  std::string template_bank_id{kDefaultTemplateBankId};

  void validate() const;
};

/// normalize(mean_t embed(template_t(target)) - mean_t embed(template_t(neutral))).
/// Throws kDegeneratePrompt when both classes embed identically.
JointEmbedding encode_prompt_pair(const BackendBundle& backend, const PromptSpec& spec,
                                  const TemplateBank& bank);

struct ChannelStatsConfig {
  int sample_count = kDefaultStyleSampleCount;  // codes used to estimate sigma_c
  int pair_count = kDefaultPairCount;
  double perturb_alpha = kDefaultPerturbAlpha;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct ChannelStats {
  GeometryPtr geometry;
  RowMatrix deltas;      // channels x embed_dim, row c = mean unit delta_i_c
  Vector channel_std;    // sigma_c
  std::vector<int> inert_channels;  // sigma_c == 0, zero rows
  int sample_pairs = kDefaultPairCount;
  double perturb_alpha = kDefaultPerturbAlpha;
  int sample_count = kDefaultStyleSampleCount;
  std::string backend_fingerprint;
  std::uint64_t seed = 0;

  int channel_count() const { return static_cast<int>(deltas.rows()); }
  int embed_dim() const { return static_cast<int>(deltas.cols()); }
  /// Content address: hash of (backend fingerprint, seed, pair count, alpha, sample count).
  std::string key() const;
};

std::string channel_stats_key(std::string_view backend_fingerprint, const ChannelStatsConfig& config);

ChannelStats precompute_channel_stats(const BackendBundle& backend, const ChannelStatsConfig& config,
                                      const ProgressFn& progress = {});

/// R[c] = <deltas[c], delta_t>.
Vector channel_relevance(const ChannelStats& stats, const JointEmbedding& delta_t);

/// Channel value R[c] where |R[c]| >= beta, else 0.
StyleDirection assemble_direction(const ChannelStats& stats, const JointEmbedding& delta_t, double beta);
StyleDirection assemble_direction(GeometryPtr geometry, const Vector& relevance, double beta);

struct BetaSelection {
  double beta = 0.0;
  int active = 0;              // channels the top-k selection activates
  bool fewer_than_k = false;   // k exceeded the number of nonzero relevances
};

/// Threshold such that k channels are active: the k-th largest |R| under a
/// stable (|R| desc, channel asc) ordering.
BetaSelection beta_from_k(const Vector& relevance, int k);
BetaSelection beta_from_k(const ChannelStats& stats, const JointEmbedding& delta_t, int k);

/// Exactly min(k, nonzero) channels, ties broken by lowest channel index.
StyleDirection assemble_direction_top_k(GeometryPtr geometry, const Vector& relevance, int k);

struct GlobalEdit {
  StyleCode code;
  ImageTensor image;
};

/// s + alpha * direction rendered through the style-space generator.
GlobalEdit apply_global(const BackendBundle& backend, const StyleCode& s,
                        const StyleDirection& direction, double alpha);

struct ChannelReportEntry {
  int channel;
  int layer;
  int index_in_layer;
  double relevance;
};
/// Active channels sorted by |relevance| descending, channel ascending.
std::vector<ChannelReportEntry> direction_report(const StyleDirection& direction);

std::string encode_channel_stats(const ChannelStats& stats);
ChannelStats decode_channel_stats(std::string_view bytes);

}  // namespace latentsteer
