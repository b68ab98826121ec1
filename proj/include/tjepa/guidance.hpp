#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tjepa/array.hpp"
#include "tjepa/world.hpp"

namespace tjepa {

// Cached thinker features for one clip.
struct GuidanceBundle {
  uint64_t clip_id = 0;
  std::string prompt_text;
  ArrF encoder_tokens;  // [L_enc, D_c]
  ArrF ar_tokens;       // [L_ar, D_c]
  // (layer id, [L_tok, D_c]) with strictly increasing layer ids.
  std::vector<std::pair<int, ArrF>> layer_states;
};

struct CacheHeader {
  uint32_t version = 1;
  int n_clips = 0;
  int d_c = 0;
  int l_enc = 0;
  int l_ar = 0;
  int l_tok = 0;
  std::vector<int> layer_ids;
};

constexpr char kCacheMagic[4] = {'T', 'J', 'P', 'C'};
constexpr uint32_t kCacheVersion = 1;

void write_cache(const std::vector<GuidanceBundle>& bundles, const std::string& path);
std::vector<uint8_t> encode_cache(const std::vector<GuidanceBundle>& bundles);

struct CacheContents {
  CacheHeader header;
  std::vector<GuidanceBundle> bundles;
};
CacheContents read_cache(const std::string& path);
CacheContents decode_cache(const uint8_t* data, size_t len);

// ---- token selection ----

enum class LayerSubset { All, Last, Mid, Custom };

struct GuidanceConfig {
  bool use_encoder_tokens = true;
  bool use_ar_tokens = true;
  LayerSubset layer_subset = LayerSubset::All;
  std::vector<int> custom_layers;  // used when layer_subset == Custom
  bool drop_deepstack = false;
};

// Zero-fills disabled sources in place of removing them (shapes unchanged);
// layer_subset drops non-selected layer_states entries. Throws ConfigError
// when nothing informative survives.
GuidanceBundle filter_tokens(const GuidanceBundle& bundle, const GuidanceConfig& config);

// Layer ids that survive the subset selection, given the bundle's ids.
std::vector<int> select_layers(const std::vector<int>& ids, const GuidanceConfig& config);

// ---- synthetic generator (stand-in for cached thinker inference) ----

struct BundleGenConfig {
  int d_c = 16;
  int l_enc = 12;
  int l_ar = 5;
  int l_tok = 6;
  std::vector<int> layer_ids = {0, 2, 4, 6};
  float noise = 0.1f;             // encoder/AR token noise std
  float layer_noise_hi = 1.0f;    // shallowest layer state
  float layer_noise_lo = 0.02f;   // deepest layer state
  int regimes = 4;                // one-hot width for the regime id
  uint64_t thinker_seed = 1234;
};

// Clip globals as the generator embeds them. Spatial/dynamics features feed
// the encoder tokens, event features feed the AR tokens, layer states see both.
std::vector<float> spatial_features(const Clip& clip);
std::vector<float> event_features(const Clip& clip, int n_frames, int regimes);

// Fixed random embedding matrices, a pure function of the generator config.
struct BundleMaps {
  ArrF enc;                 // [L_enc*D_c, n_spatial]
  ArrF ar;                  // [L_ar*D_c, n_event]
  std::vector<ArrF> layers; // per layer id: [L_tok*D_c, n_spatial+n_event]
};
BundleMaps bundle_maps(const BundleGenConfig& cfg);

// Token matrices are the seeded embedding of the clip's global parameters
// plus Gaussian noise; deterministic given (clip, config).
GuidanceBundle generate_synthetic_bundle(const Clip& clip, int n_frames,
                                         const BundleGenConfig& cfg);

}  // namespace tjepa
