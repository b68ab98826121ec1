#include "tjepa/sampling.hpp"

#include <string>

#include "tjepa/errors.hpp"

namespace tjepa {

std::vector<int> uniform_indices(int n_frames, int n_uniform) {
  if (n_frames < 2) {
    throw ConfigError("uniform_indices: need at least 2 frames, got " + std::to_string(n_frames));
  }
  if (n_uniform < 2 || n_uniform > n_frames) {
    throw ConfigError("uniform_indices: sample count " + std::to_string(n_uniform) +
                      " outside [2, " + std::to_string(n_frames) + "]");
  }
  std::vector<int> out(static_cast<size_t>(n_uniform));
  for (int i = 1; i <= n_uniform; ++i) {
    out[static_cast<size_t>(i - 1)] =
        1 + static_cast<int>(static_cast<long long>(i - 1) * (n_frames - 1) / (n_uniform - 1));
  }
  return out;
}

std::vector<int> dense_indices(int t0, int n_dense, int n_frames) {
  if (t0 < 1 || n_dense < 1 || t0 + n_dense - 1 > n_frames) {
    throw ConfigError("dense_indices: window [" + std::to_string(t0) + ", " +
                      std::to_string(t0 + n_dense - 1) + "] exceeds clip of " +
                      std::to_string(n_frames) + " frames");
  }
  std::vector<int> out(static_cast<size_t>(n_dense));
  for (int i = 0; i < n_dense; ++i) out[static_cast<size_t>(i)] = t0 + i;
  return out;
}

std::vector<int> apply_stride(const std::vector<int>& indices, int stride) {
  if (stride != 1 && stride != 2) {
    throw ConfigError("apply_stride: unsupported stride " + std::to_string(stride));
  }
  if (stride == 1) return indices;
  std::vector<int> out;
  out.reserve((indices.size() + 1) / 2);
  for (size_t i = 0; i < indices.size(); i += static_cast<size_t>(stride)) {
    out.push_back(indices[i]);
  }
  return out;
}

SamplingPlan make_plan(int n_frames, int n_uniform, int t0, int n_dense, int stride) {
  SamplingPlan plan;
  plan.n_frames = n_frames;
  plan.t0 = t0;
  plan.stride = stride;
  plan.uniform = uniform_indices(n_frames, n_uniform);
  plan.dense = apply_stride(dense_indices(t0, n_dense * stride, n_frames), stride);
  return plan;
}

}  // namespace tjepa
