#pragma once

#include <vector>

namespace tjepa {

// Frame-index construction for the two temporal pathways. All indices are
// 1-based; conversion to 0-based happens only at array access.

// s_i = floor(1 + (i-1)*(N-1)/(N_u-1)), i = 1..N_u. Endpoints are 1 and N.
std::vector<int> uniform_indices(int n_frames, int n_uniform);

// The consecutive range [t0, t0+n_dense-1], validated against the clip length.
std::vector<int> dense_indices(int t0, int n_dense, int n_frames);

// Keeps every stride-th index starting from the first. Stride 1 or 2.
std::vector<int> apply_stride(const std::vector<int>& indices, int stride);

struct SamplingPlan {
  int n_frames = 0;
  std::vector<int> uniform;  // thinker pathway
  std::vector<int> dense;    // predictor pathway, after stride
  int t0 = 1;
  int stride = 1;
};

// Builds both pathways from one clip; dense covers n_dense model frames after
// decimation, i.e. a raw window of n_dense*stride consecutive frames.
SamplingPlan make_plan(int n_frames, int n_uniform, int t0, int n_dense, int stride);

}  // namespace tjepa
