#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "syncap/tensor.hpp"

namespace syncap {

// Window radius in frames; nullopt is the unbounded sentinel.
using Radius = std::optional<int64_t>;

// Cross-attention trace of one decoded sequence: one row per decode step.
struct AttentionMap {
  Tensor beta;  // T_y x T_x, each row a probability vector over frames
  std::vector<double> centers;
  std::vector<std::array<int64_t, 2>> windows;  // realized [lo, hi] per step
};

// Throws unless every beta row sums to 1 within 1e-6, is zero outside its
// recorded window, and reproduces its recorded center within 1e-6.
void validate_attention_map(const AttentionMap& map);

struct HeadParams {
  Tensor wq, bq;  // d_m x d_h, 1 x d_h
  Tensor wk, bk;
  Tensor wv, bv;
};

struct SelfAttentionParams {
  std::vector<HeadParams> heads;
  Tensor wo;  // d_m x d_m
};

struct SelfAttentionResult {
  Tensor z;                   // T x d_m
  std::vector<Tensor> alpha;  // per-head T x T attention weights
};

// 0/1 mask for one query row: key j is visible iff |i-j| <= r (when r is
// bounded), j < t_valid, and j <= i under the causal flag. Throws when a
// row in [0, t_valid) ends up with no visible key.
Tensor attention_window_mask(int64_t t_query, int64_t t_key, Radius r,
                             int64_t t_valid, bool causal);

// Multi-head self-attention over a sliding window of radius r. Scores are
// scaled by 1/sqrt(d_m), the full model width.
SelfAttentionResult windowed_self_attention(Tape& tape, const Tensor& x,
                                            const SelfAttentionParams& params,
                                            Radius r, int64_t t_valid,
                                            bool causal);

struct CrossAttentionParams {
  Tensor wq, bq;  // d_m x d_m, 1 x d_m (single head, full width)
  Tensor wk, bk;
  Tensor wv, bv;
};

struct CrossStepResult {
  Tensor r_t;       // 1 x d_m attended value
  Tensor beta_row;  // 1 x T final weights (zero outside the window)
  Tensor m_t;       // 1 x 1 differentiable center of beta_row
  double center;    // m_t as a plain number
  std::array<int64_t, 2> bounds;  // realized window [lo, hi]
};

// Single-head cross attention with a learnable window center, evaluated in
// two passes: a provisional softmax over all valid frames places the
// window, then the same scores are re-normalized inside it. The integer
// bounds are constants in the backward pass; gradients flow through the
// second softmax. q, k, v are already projected; k and v span the valid
// frames of the encoding.
CrossStepResult controlled_cross_step(Tape& tape, const Tensor& q,
                                      const Tensor& k, const Tensor& v,
                                      Radius d_radius, int64_t t_valid);

// Convenience form that applies the projections to raw encoder output and
// query before delegating to controlled_cross_step.
CrossStepResult cross_attention_controlled(Tape& tape, const Tensor& enc,
                                           const Tensor& u_t,
                                           const CrossAttentionParams& params,
                                           Radius d_radius, int64_t t_valid);

// Total motion span 2(D+r) visible to one decode step; nullopt if either
// window is unbounded.
Radius receptive_field(Radius r, Radius d_radius);

}  // namespace syncap
