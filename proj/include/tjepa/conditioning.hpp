#pragma once

#include <string>
#include <vector>

#include "tjepa/errors.hpp"

namespace tjepa {

enum class CondMode { None, Film, CrossAttention, AdaLN };

inline const char* cond_mode_name(CondMode m) {
  switch (m) {
    case CondMode::None: return "none";
    case CondMode::Film: return "film";
    case CondMode::CrossAttention: return "cross_attention";
    case CondMode::AdaLN: return "adaln";
  }
  return "?";
}

inline CondMode cond_mode_from(const std::string& s) {
  if (s == "none") return CondMode::None;
  if (s == "film") return CondMode::Film;
  if (s == "cross_attention" || s == "xattn") return CondMode::CrossAttention;
  if (s == "adaln") return CondMode::AdaLN;
  throw ConfigError("unknown conditioning mode: " + s);
}

// Conditioning signal materialized on a live tape. For film/adaln one
// (gamma, beta) node pair per predictor block, each [B, D_p]; for
// cross-attention a context node [B, M, D_p].
struct CondIds {
  CondMode mode = CondMode::None;
  std::vector<std::pair<int, int>> gamma_beta;
  int context = -1;
};

}  // namespace tjepa
