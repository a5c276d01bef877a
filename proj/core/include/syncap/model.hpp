#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "syncap/attention.hpp"
#include "syncap/rng.hpp"
#include "syncap/tensor.hpp"

namespace syncap {

inline constexpr double kLayerNormEps = 1e-5;

struct ModelConfig {
  int64_t d_m = 64;
  int64_t n_h = 4;
  Radius r = 10;        // encoder self-attention window radius
  Radius d_cross = 10;  // cross-attention window radius D
  int64_t n_layers = 1;
  int64_t d_ff = 0;  // 0 resolves to 4 * d_m
  int64_t max_t_y = 32;
  int64_t max_t_x = 512;  // positional encoding capacity for motion frames
  int64_t vocab_size = 0;
  int64_t c = 24;  // pose feature width

  int64_t ff_width() const { return d_ff > 0 ? d_ff : 4 * d_m; }
  int64_t head_width() const { return d_m / n_h; }
  void validate() const;
};

struct LayerNormParams {
  Tensor gain, shift;  // each 1 x width
};

struct FeedForwardParams {
  Tensor w1, b1;  // d_m x d_ff, 1 x d_ff
  Tensor w2, b2;  // d_ff x d_m, 1 x d_m
};

struct EncoderLayerParams {
  SelfAttentionParams attn;
  LayerNormParams ln_attn;
  FeedForwardParams ffn;
  LayerNormParams ln_ffn;
};

struct DecoderLayerParams {
  SelfAttentionParams self_attn;
  LayerNormParams ln_self;
  CrossAttentionParams cross;
  LayerNormParams ln_fuse;
  FeedForwardParams ffn;
  LayerNormParams ln_out;
};

struct EncoderOutput {
  Tensor hidden;  // t_valid x d_m
  int64_t t_valid = 0;
};

// Incremental decoding state. tokens holds the full prefix starting with
// BOS; the attention trace grows one row per decode step.
struct DecodeState {
  std::vector<int> tokens;
  std::vector<std::vector<double>> beta_rows;
  std::vector<double> centers;
  std::vector<std::array<int64_t, 2>> windows;
  int64_t steps() const { return static_cast<int64_t>(beta_rows.size()); }
};

AttentionMap finalize_map(const DecodeState& state, int64_t t_x);

struct StepResult {
  Tensor logits;    // 1 x vocab
  Tensor beta_row;  // 1 x t_valid
  Tensor r_t;       // 1 x d_m
  Tensor m_t;       // 1 x 1
  double center = 0.0;
  std::array<int64_t, 2> bounds{0, 0};
};

struct SampleForward {
  Tensor logits;                // (L-1) x vocab for a caption of L tokens
  std::vector<Tensor> centers;  // per-step 1 x 1 tensors (final layer)
  AttentionMap map;
};

struct Generated {
  std::vector<int> tokens;  // emitted ids, EOS included when reached
  AttentionMap map;
};

class Model {
 public:
  Model(const ModelConfig& cfg, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  std::vector<std::pair<std::string, Tensor>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const {
    return params_;
  }
  const Tensor& positional_encoding() const { return pe_; }

  // Affine pose projection plus sinusoidal positional encoding; every row
  // of poses is treated as valid.
  Tensor embed_poses(Tape& tape, const Tensor& poses) const;

  EncoderOutput encode(Tape& tape, const Tensor& poses, int64_t t_valid) const;

  // One greedy/teacher-forced step over the current prefix; appends the
  // attention row to the state. The caller appends the chosen token.
  StepResult decode_step(Tape& tape, DecodeState& state,
                         const EncoderOutput& enc) const;

  // Full-sequence teacher-forced pass. tokens is the complete caption
  // BOS..EOS at its true length; logits row t predicts tokens[t + 1].
  SampleForward forward_teacher_forced(Tape& tape, const Tensor& poses,
                                       int64_t t_x_valid,
                                       std::span<const int> tokens) const;

  Generated generate(const Tensor& poses, int64_t t_valid) const;

 private:
  Tensor register_uniform(const std::string& name, int64_t rows, int64_t cols,
                          double amplitude, Rng& rng);
  Tensor register_constant(const std::string& name, int64_t rows, int64_t cols,
                           double fill);
  SelfAttentionParams make_self_attention(const std::string& prefix, Rng& rng);
  LayerNormParams make_layer_norm(const std::string& prefix, int64_t width);
  FeedForwardParams make_ffn(const std::string& prefix, Rng& rng);

  Tensor ffn_forward(Tape& tape, const Tensor& x,
                     const FeedForwardParams& p) const;
  Tensor decoder_pass(Tape& tape, const Tensor& tokens_embedded,
                      const EncoderOutput& enc,
                      std::vector<CrossStepResult>* final_steps) const;

  ModelConfig cfg_;
  std::vector<std::pair<std::string, Tensor>> params_;
  Tensor pe_;  // fixed table, max(max_t_x, max_t_y + 1) x d_m

  Tensor pose_w_, pose_b_;
  Tensor tok_embed_;
  std::vector<EncoderLayerParams> enc_layers_;
  std::vector<DecoderLayerParams> dec_layers_;
  Tensor out_w_, out_b_;
};

}  // namespace syncap
