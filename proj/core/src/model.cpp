#include "syncap/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "syncap/dataset.hpp"

namespace syncap {

namespace {

Tensor build_positional_encoding(int64_t rows, int64_t d_m) {
  Tensor pe = Tensor::zeros(rows, d_m);
  for (int64_t pos = 0; pos < rows; ++pos) {
    for (int64_t i = 0; i < d_m; i += 2) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_m));
      pe.at_mut(pos, i) = std::sin(angle);
      if (i + 1 < d_m) pe.at_mut(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

void check_token_ids(std::span<const int> tokens, int64_t vocab_size) {
  for (int id : tokens) {
    if (id < 0 || id >= vocab_size) {
      throw std::out_of_range("token id " + std::to_string(id) +
                              " outside vocabulary of size " +
                              std::to_string(vocab_size));
    }
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (d_m < 2) throw std::invalid_argument("d_m must be >= 2");
  if (n_h < 1 || d_m % n_h != 0) {
    throw std::invalid_argument("d_m (" + std::to_string(d_m) +
                                ") must be divisible by n_h (" +
                                std::to_string(n_h) + ")");
  }
  if (r && *r < 1) throw std::invalid_argument("self window radius must be >= 1");
  if (d_cross && *d_cross < 1) {
    throw std::invalid_argument("cross window radius must be >= 1");
  }
  if (n_layers < 1) throw std::invalid_argument("n_layers must be >= 1");
  if (d_ff < 0) throw std::invalid_argument("d_ff must be >= 0");
  if (max_t_y < 2) throw std::invalid_argument("max_t_y must be >= 2");
  if (max_t_x < 1) throw std::invalid_argument("max_t_x must be >= 1");
  if (vocab_size < 5) {
    throw std::invalid_argument("vocab_size must cover the reserved ids plus "
                                "at least one word, got " +
                                std::to_string(vocab_size));
  }
  if (c < 1) throw std::invalid_argument("pose width c must be >= 1");
}

AttentionMap finalize_map(const DecodeState& state, int64_t t_x) {
  AttentionMap map;
  const int64_t t_y = state.steps();
  map.beta = Tensor::zeros(std::max<int64_t>(t_y, 1), t_x);
  for (int64_t t = 0; t < t_y; ++t) {
    const auto& row = state.beta_rows[static_cast<size_t>(t)];
    if (static_cast<int64_t>(row.size()) != t_x) {
      throw std::invalid_argument("attention row length " +
                                  std::to_string(row.size()) +
                                  " does not match T_x " + std::to_string(t_x));
    }
    for (int64_t i = 0; i < t_x; ++i) map.beta.at_mut(t, i) = row[static_cast<size_t>(i)];
  }
  if (t_y == 0) {
    throw std::invalid_argument("cannot finalize an attention map with no rows");
  }
  map.centers = state.centers;
  map.windows = state.windows;
  return map;
}

Model::Model(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed);
  const double kc = 1.0 / std::sqrt(static_cast<double>(cfg_.c));
  const double kd = 1.0 / std::sqrt(static_cast<double>(cfg_.d_m));

  pose_w_ = register_uniform("pose.w", cfg_.c, cfg_.d_m, kc, rng);
  pose_b_ = register_uniform("pose.b", 1, cfg_.d_m, kc, rng);
  tok_embed_ = register_uniform("tok.embed", cfg_.vocab_size, cfg_.d_m, kd, rng);

  for (int64_t l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    EncoderLayerParams layer;
    layer.attn = make_self_attention(p + ".attn", rng);
    layer.ln_attn = make_layer_norm(p + ".ln1", cfg_.d_m);
    layer.ffn = make_ffn(p + ".ffn", rng);
    layer.ln_ffn = make_layer_norm(p + ".ln2", cfg_.d_m);
    enc_layers_.push_back(std::move(layer));
  }
  for (int64_t l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    DecoderLayerParams layer;
    layer.self_attn = make_self_attention(p + ".self", rng);
    layer.ln_self = make_layer_norm(p + ".ln1", cfg_.d_m);
    layer.cross.wq = register_uniform(p + ".cross.wq", cfg_.d_m, cfg_.d_m, kd, rng);
    layer.cross.bq = register_uniform(p + ".cross.bq", 1, cfg_.d_m, kd, rng);
    layer.cross.wk = register_uniform(p + ".cross.wk", cfg_.d_m, cfg_.d_m, kd, rng);
    layer.cross.bk = register_uniform(p + ".cross.bk", 1, cfg_.d_m, kd, rng);
    layer.cross.wv = register_uniform(p + ".cross.wv", cfg_.d_m, cfg_.d_m, kd, rng);
    layer.cross.bv = register_uniform(p + ".cross.bv", 1, cfg_.d_m, kd, rng);
    layer.ln_fuse = make_layer_norm(p + ".ln2", cfg_.d_m);
    layer.ffn = make_ffn(p + ".ffn", rng);
    layer.ln_out = make_layer_norm(p + ".ln3", cfg_.d_m);
    dec_layers_.push_back(std::move(layer));
  }
  out_w_ = register_uniform("out.w", cfg_.d_m, cfg_.vocab_size, kd, rng);
  out_b_ = register_uniform("out.b", 1, cfg_.vocab_size, kd, rng);

  pe_ = build_positional_encoding(std::max(cfg_.max_t_x, cfg_.max_t_y + 1),
                                  cfg_.d_m);
}

Tensor Model::register_uniform(const std::string& name, int64_t rows,
                               int64_t cols, double amplitude, Rng& rng) {
  Tensor t = Tensor::zeros(rows, cols, true);
  for (double& v : t.values_mut()) v = rng.uniform(-amplitude, amplitude);
  params_.emplace_back(name, t);
  return t;
}

Tensor Model::register_constant(const std::string& name, int64_t rows,
                                int64_t cols, double fill) {
  Tensor t = Tensor::full(rows, cols, fill, true);
  params_.emplace_back(name, t);
  return t;
}

SelfAttentionParams Model::make_self_attention(const std::string& prefix,
                                               Rng& rng) {
  const double kd = 1.0 / std::sqrt(static_cast<double>(cfg_.d_m));
  SelfAttentionParams p;
  for (int64_t h = 0; h < cfg_.n_h; ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h);
    HeadParams head;
    head.wq = register_uniform(hp + ".wq", cfg_.d_m, cfg_.head_width(), kd, rng);
    head.bq = register_uniform(hp + ".bq", 1, cfg_.head_width(), kd, rng);
    head.wk = register_uniform(hp + ".wk", cfg_.d_m, cfg_.head_width(), kd, rng);
    head.bk = register_uniform(hp + ".bk", 1, cfg_.head_width(), kd, rng);
    head.wv = register_uniform(hp + ".wv", cfg_.d_m, cfg_.head_width(), kd, rng);
    head.bv = register_uniform(hp + ".bv", 1, cfg_.head_width(), kd, rng);
    p.heads.push_back(std::move(head));
  }
  p.wo = register_uniform(prefix + ".wo", cfg_.d_m, cfg_.d_m, kd, rng);
  return p;
}

LayerNormParams Model::make_layer_norm(const std::string& prefix, int64_t width) {
  LayerNormParams p;
  p.gain = register_constant(prefix + ".gain", 1, width, 1.0);
  p.shift = register_constant(prefix + ".shift", 1, width, 0.0);
  return p;
}

FeedForwardParams Model::make_ffn(const std::string& prefix, Rng& rng) {
  const double kd = 1.0 / std::sqrt(static_cast<double>(cfg_.d_m));
  const double kf = 1.0 / std::sqrt(static_cast<double>(cfg_.ff_width()));
  FeedForwardParams p;
  p.w1 = register_uniform(prefix + ".w1", cfg_.d_m, cfg_.ff_width(), kd, rng);
  p.b1 = register_uniform(prefix + ".b1", 1, cfg_.ff_width(), kd, rng);
  p.w2 = register_uniform(prefix + ".w2", cfg_.ff_width(), cfg_.d_m, kf, rng);
  p.b2 = register_uniform(prefix + ".b2", 1, cfg_.d_m, kf, rng);
  return p;
}

Tensor Model::ffn_forward(Tape& tape, const Tensor& x,
                          const FeedForwardParams& p) const {
  Tensor h = relu(tape, add_row_broadcast(tape, matmul(tape, x, p.w1), p.b1));
  return add_row_broadcast(tape, matmul(tape, h, p.w2), p.b2);
}

Tensor Model::embed_poses(Tape& tape, const Tensor& poses) const {
  if (poses.cols() != cfg_.c) {
    throw std::invalid_argument("pose width " + poses.shape_str() +
                                " does not match configured c=" +
                                std::to_string(cfg_.c));
  }
  if (poses.rows() > pe_.rows()) {
    throw std::invalid_argument("sequence length " + std::to_string(poses.rows()) +
                                " exceeds positional encoding capacity " +
                                std::to_string(pe_.rows()));
  }
  Tensor proj = add_row_broadcast(tape, matmul(tape, poses, pose_w_), pose_b_);
  Tensor pe_rows = slice_rows(tape, pe_, 0, poses.rows());
  return add(tape, proj, pe_rows);
}

EncoderOutput Model::encode(Tape& tape, const Tensor& poses,
                            int64_t t_valid) const {
  if (t_valid < 1 || t_valid > poses.rows()) {
    throw std::invalid_argument("t_valid " + std::to_string(t_valid) +
                                " out of range for " + poses.shape_str());
  }
  Tensor p = t_valid == poses.rows() ? poses
                                     : slice_rows(tape, poses, 0, t_valid);
  Tensor x = embed_poses(tape, p);
  for (const EncoderLayerParams& layer : enc_layers_) {
    SelfAttentionResult attn =
        windowed_self_attention(tape, x, layer.attn, cfg_.r, x.rows(), false);
    Tensor z1 = layer_norm(tape, add(tape, attn.z, x), layer.ln_attn.gain,
                           layer.ln_attn.shift, kLayerNormEps);
    Tensor f = ffn_forward(tape, z1, layer.ffn);
    x = layer_norm(tape, add(tape, f, z1), layer.ln_ffn.gain,
                   layer.ln_ffn.shift, kLayerNormEps);
  }
  return {x, t_valid};
}

Tensor Model::decoder_pass(Tape& tape, const Tensor& tokens_embedded,
                           const EncoderOutput& enc,
                           std::vector<CrossStepResult>* final_steps) const {
  Tensor y = tokens_embedded;
  const int64_t steps = y.rows();
  for (size_t l = 0; l < dec_layers_.size(); ++l) {
    const DecoderLayerParams& layer = dec_layers_[l];
    SelfAttentionResult self = windowed_self_attention(
        tape, y, layer.self_attn, std::nullopt, steps, true);
    Tensor u = layer_norm(tape, add(tape, self.z, y), layer.ln_self.gain,
                          layer.ln_self.shift, kLayerNormEps);

    Tensor k = add_row_broadcast(tape, matmul(tape, enc.hidden, layer.cross.wk),
                                 layer.cross.bk);
    Tensor v = add_row_broadcast(tape, matmul(tape, enc.hidden, layer.cross.wv),
                                 layer.cross.bv);
    Tensor q_all = add_row_broadcast(tape, matmul(tape, u, layer.cross.wq),
                                     layer.cross.bq);
    std::vector<CrossStepResult> cross_steps;
    std::vector<Tensor> r_rows;
    for (int64_t t = 0; t < steps; ++t) {
      Tensor q = slice_rows(tape, q_all, t, 1);
      CrossStepResult cs =
          controlled_cross_step(tape, q, k, v, cfg_.d_cross, enc.t_valid);
      r_rows.push_back(cs.r_t);
      cross_steps.push_back(std::move(cs));
    }
    Tensor r_all = r_rows.size() == 1 ? r_rows.front() : concat_rows(tape, r_rows);
    Tensor g1 = layer_norm(tape, add(tape, r_all, u), layer.ln_fuse.gain,
                           layer.ln_fuse.shift, kLayerNormEps);
    Tensor g2 = layer_norm(tape, add(tape, ffn_forward(tape, g1, layer.ffn), g1),
                           layer.ln_out.gain, layer.ln_out.shift, kLayerNormEps);
    y = g2;
    if (l + 1 == dec_layers_.size() && final_steps) {
      *final_steps = std::move(cross_steps);
    }
  }
  return y;
}

StepResult Model::decode_step(Tape& tape, DecodeState& state,
                              const EncoderOutput& enc) const {
  if (state.tokens.empty()) {
    throw std::invalid_argument("decode_step on empty prefix");
  }
  check_token_ids(state.tokens, cfg_.vocab_size);
  const int64_t prefix = static_cast<int64_t>(state.tokens.size());
  if (prefix > pe_.rows()) {
    throw std::invalid_argument("decode prefix exceeds positional encoding "
                                "capacity " + std::to_string(pe_.rows()));
  }
  Tensor y0 = add(tape, embed_rows(tape, tok_embed_, state.tokens),
                  slice_rows(tape, pe_, 0, prefix));
  std::vector<CrossStepResult> steps;
  Tensor h = decoder_pass(tape, y0, enc, &steps);
  Tensor h_last = slice_rows(tape, h, prefix - 1, 1);

  StepResult out;
  out.logits = add_row_broadcast(tape, matmul(tape, h_last, out_w_), out_b_);
  const CrossStepResult& last = steps.back();
  out.beta_row = last.beta_row;
  out.r_t = last.r_t;
  out.m_t = last.m_t;
  out.center = last.center;
  out.bounds = last.bounds;

  state.beta_rows.emplace_back(last.beta_row.values().begin(),
                               last.beta_row.values().end());
  state.centers.push_back(last.center);
  state.windows.push_back(last.bounds);
  return out;
}

SampleForward Model::forward_teacher_forced(Tape& tape, const Tensor& poses,
                                            int64_t t_x_valid,
                                            std::span<const int> tokens) const {
  if (tokens.size() < 2) {
    throw std::invalid_argument("teacher forcing needs BOS plus at least one "
                                "target token");
  }
  check_token_ids(tokens, cfg_.vocab_size);
  const int64_t steps = static_cast<int64_t>(tokens.size()) - 1;
  if (steps > pe_.rows()) {
    throw std::invalid_argument("caption length exceeds positional encoding "
                                "capacity " + std::to_string(pe_.rows()));
  }
  EncoderOutput enc = encode(tape, poses, t_x_valid);
  Tensor y0 = add(tape, embed_rows(tape, tok_embed_, tokens.subspan(0, steps)),
                  slice_rows(tape, pe_, 0, steps));
  std::vector<CrossStepResult> cross_steps;
  Tensor h = decoder_pass(tape, y0, enc, &cross_steps);

  SampleForward out;
  out.logits = add_row_broadcast(tape, matmul(tape, h, out_w_), out_b_);
  DecodeState trace;
  for (const CrossStepResult& cs : cross_steps) {
    out.centers.push_back(cs.m_t);
    trace.beta_rows.emplace_back(cs.beta_row.values().begin(),
                                 cs.beta_row.values().end());
    trace.centers.push_back(cs.center);
    trace.windows.push_back(cs.bounds);
  }
  out.map = finalize_map(trace, enc.t_valid);
  return out;
}

Generated Model::generate(const Tensor& poses, int64_t t_valid) const {
  Tape tape;
  EncoderOutput enc = encode(tape, poses, t_valid);
  DecodeState state;
  state.tokens.push_back(data::Vocab::kBos);

  Generated out;
  for (int64_t step = 0; step < cfg_.max_t_y; ++step) {
    StepResult res = decode_step(tape, state, enc);
    std::span<const double> row = res.logits.values();
    int best = 0;
    for (int j = 1; j < static_cast<int>(row.size()); ++j) {
      if (row[static_cast<size_t>(j)] > row[static_cast<size_t>(best)]) best = j;
    }
    state.tokens.push_back(best);
    out.tokens.push_back(best);
    if (best == data::Vocab::kEos) break;
  }
  out.map = finalize_map(state, enc.t_valid);
  return out;
}

}  // namespace syncap
